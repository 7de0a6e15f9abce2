"""Feature pipelines: layer weights, the deep random-feature forward pass,
its Gaussian surrogate, the covariance recursion, and data-regularity /
kernel-linearization diagnostics.

Conventions: feature matrices are (dimension x samples), columns are
samples.  Weights W_ell are (p_ell x p_{ell-1}) with i.i.d. N(0, 1/p_{ell-1})
entries.  The surrogate map is

    gamma_ell = rho1_ell W_ell gamma_{ell-1} + rho2_ell g_ell,

and conditioned on the weights its column covariance follows

    R_0 = I,   R_ell = rho1_ell^2 W_ell R_{ell-1} W_ell' + rho2_ell^2 I.
"""

import json
import struct
from dataclasses import dataclass

import numpy as np

from ._linalg import operator_norm, sym_operator_norm
from .moments import eta1, eta2, hermite_coefficients, _rule_1d

__all__ = [
    "NetworkShape",
    "WeightStack",
    "FeatureSet",
    "CovarianceMatrix",
    "RegularityReport",
    "sample_weights",
    "drf_forward",
    "surrogate_forward",
    "covariance_recursion",
    "regularity_check",
    "regularity_preservation_probe",
    "kernel_linearization_gap",
    "dump_binary",
    "load_binary",
]


@dataclass(frozen=True)
class NetworkShape:
    """Layer widths [p0=d, p1, ..., pL]."""

    dims: tuple

    def __post_init__(self):
        object.__setattr__(self, "dims", tuple(int(p) for p in self.dims))
        if len(self.dims) < 2:
            raise ValueError("need at least [d, p1]")
        if any(p < 1 for p in self.dims):
            raise ValueError(f"all widths must be >= 1, got {self.dims}")

    @property
    def L(self):
        return len(self.dims) - 1

    @property
    def d(self):
        return self.dims[0]

    @property
    def p_out(self):
        return self.dims[-1]


@dataclass(frozen=True)
class WeightStack:
    weights: tuple  # per layer, shape (p_ell, p_{ell-1})
    seed: int
    shape: NetworkShape

    @property
    def L(self):
        return len(self.weights)


@dataclass(frozen=True)
class FeatureSet:
    data: np.ndarray  # (p_ell, n)
    layer: int
    provenance: str  # input | drf | surrogate

    def __post_init__(self):
        if self.data.ndim != 2:
            raise ValueError("feature matrix must be 2-D (dimension x samples)")

    @property
    def n(self):
        return self.data.shape[1]

    @property
    def dim(self):
        return self.data.shape[0]


@dataclass(frozen=True)
class CovarianceMatrix:
    matrix: np.ndarray
    layer: int

    @property
    def p(self):
        return self.matrix.shape[0]


@dataclass(frozen=True)
class RegularityReport:
    opnorm_ratio: float
    max_offdiag: float
    max_diag_dev: float
    threshold_op: float
    threshold_offdiag: float
    passed: bool
    diag_target: float = 1.0
    raw_max_diag_dev: float = None


def _as_matrix(X):
    return X.data if isinstance(X, FeatureSet) else np.asarray(X, dtype=float)


def sample_weights(shape, seed):
    """Draw the weight stack; deterministic given seed."""
    if not isinstance(shape, NetworkShape):
        shape = NetworkShape(tuple(shape))
    rng = np.random.default_rng(seed)
    ws = []
    for ell in range(shape.L):
        p_in, p_out = shape.dims[ell], shape.dims[ell + 1]
        ws.append(rng.standard_normal((p_out, p_in)) / np.sqrt(p_in))
    return WeightStack(weights=tuple(ws), seed=int(seed), shape=shape)


def drf_forward(X, W, act):
    """x_ell = act(W_ell x_{ell-1}), layer by layer."""
    x = _as_matrix(X)
    if x.shape[0] != W.shape.d:
        raise ValueError(f"input dimension {x.shape[0]} != p0 = {W.shape.d}")
    for Wl in W.weights:
        x = act(Wl @ x)
    return FeatureSet(data=x, layer=W.L, provenance="drf")


def surrogate_forward(X, W, chain, noise_seed):
    """gamma_ell = rho1 W_ell gamma_{ell-1} + rho2 g_ell with fresh Gaussians."""
    g = _as_matrix(X)
    if g.shape[0] != W.shape.d:
        raise ValueError(f"input dimension {g.shape[0]} != p0 = {W.shape.d}")
    if len(chain) != W.L:
        raise ValueError(f"chain length {len(chain)} != depth {W.L}")
    seqs = np.random.SeedSequence(noise_seed).spawn(W.L)
    for Wl, lc, sq in zip(W.weights, chain, seqs):
        g = lc.rho1 * (Wl @ g)
        if lc.rho2 != 0.0:
            rng = np.random.default_rng(sq)
            g = g + lc.rho2 * rng.standard_normal(g.shape)
    return FeatureSet(data=g, layer=W.L, provenance="surrogate")


def covariance_recursion(W, chain):
    """Final-layer surrogate covariance R_L, conditioned on the weights.

    Kept in factored form Sigma c_k F_k F_k' + c0 I through the recursion so
    intermediate (possibly much wider) levels are never materialized.
    """
    if len(chain) != W.L:
        raise ValueError(f"chain length {len(chain)} != depth {W.L}")
    factors = []  # (coef, F) with R = c0*I + sum coef * F F'
    c0 = 1.0
    for Wl, lc in zip(W.weights, chain):
        r1sq = lc.rho1**2
        factors = [(coef * r1sq, Wl @ F) for coef, F in factors]
        factors.append((c0 * r1sq, Wl))
        c0 = lc.rho2**2
    p = W.shape.p_out
    R = c0 * np.eye(p)
    for coef, F in factors:
        if coef != 0.0:
            R += coef * (F @ F.T)
    R = 0.5 * (R + R.T)
    return CovarianceMatrix(matrix=R, layer=W.L)


def regularity_check(X, c_op=3.0, c_offdiag=3.0):
    """Operator-norm and Gram-deviation regularity statistics.

    pass requires ||X||_op / sqrt(n) < c_op and both Gram deviations
    <= c_offdiag (log n)^2 / sqrt(n).
    """
    if c_op <= 0 or c_offdiag <= 0:
        raise ValueError("thresholds must be > 0")
    x = _as_matrix(X)
    d, n = x.shape
    G = x.T @ x / d
    diag = np.diag(G).copy()
    np.fill_diagonal(G, 0.0)
    max_off = float(np.max(np.abs(G))) if n > 1 else 0.0
    max_diag = float(np.max(np.abs(diag - 1.0)))
    ratio = operator_norm(x) / np.sqrt(n)
    bound = c_offdiag * np.log(n) ** 2 / np.sqrt(n)
    return RegularityReport(
        opnorm_ratio=float(ratio),
        max_offdiag=max_off,
        max_diag_dev=max_diag,
        threshold_op=float(c_op),
        threshold_offdiag=float(bound),
        passed=bool(ratio < c_op and max_off <= bound and max_diag <= bound),
    )


def regularity_preservation_probe(X, act, W_layer, c_op=3.0, c_offdiag=3.0,
                                  rule=None):
    """Regularity before and after one random-feature layer.

    The after-report is computed on act(W x) with Gram normalization p and
    the diagonal compared against its population value eta2(act, 1); the
    standard report fields are for the features rescaled so that target is
    1, with the raw (unrescaled) diagonal deviation recorded alongside.
    """
    before = regularity_check(X, c_op, c_offdiag)
    x = _as_matrix(X)
    z = act(W_layer @ x)
    p, n = z.shape
    target = eta2(act, 1.0, rule)
    G = z.T @ z / p
    raw_max_diag = float(np.max(np.abs(np.diag(G) - target)))

    zn = z / np.sqrt(target)
    Gn = G / target
    diag = np.diag(Gn).copy()
    np.fill_diagonal(Gn, 0.0)
    max_off = float(np.max(np.abs(Gn))) if n > 1 else 0.0
    max_diag = float(np.max(np.abs(diag - 1.0)))
    ratio = operator_norm(zn) / np.sqrt(n)
    bound = c_offdiag * np.log(n) ** 2 / np.sqrt(n)
    after = RegularityReport(
        opnorm_ratio=float(ratio),
        max_offdiag=max_off,
        max_diag_dev=max_diag,
        threshold_op=float(c_op),
        threshold_offdiag=float(bound),
        passed=bool(ratio < c_op and max_off <= bound and max_diag <= bound),
        diag_target=float(target),
        raw_max_diag_dev=raw_max_diag,
    )
    return before, after


def _kernel_matrix(x, act, rule, series_cutoff=0.6, n_coeff=45):
    """K_ij = E[act(u_i) act(u_j)] for (u_i, u_j) Gaussian with the empirical
    second moments of the columns of x.

    Off-diagonal entries with correlation |r| <= series_cutoff use the
    Hermite expansion K_ij = sum_k c_k(a_i) c_k(a_j) r^k (truncation error
    below 1e-9 at the default cutoff); larger correlations fall back to the
    exact 2-D quadrature.
    """
    d, n = x.shape
    a = np.einsum("ij,ij->j", x, x) / d
    rho = x.T @ x / d
    sq = np.sqrt(a)
    r = rho / np.outer(sq, sq)
    np.fill_diagonal(r, 0.0)

    rule1 = _rule_1d(rule)
    C = np.empty((n, n_coeff))
    # columns often share nearly identical variance; cache on rounded a
    cache = {}
    for i in range(n):
        key = round(float(a[i]), 12)
        if key not in cache:
            cache[key] = hermite_coefficients(act, a[i], n_coeff, rule1)
        C[i] = cache[key]

    K = np.zeros((n, n))
    rk = np.ones_like(r)
    for k in range(n_coeff):
        if k > 0:
            rk = rk * r
        K += np.outer(C[:, k], C[:, k]) * rk

    over = np.argwhere(np.triu(np.abs(r) > series_cutoff, k=1))
    for i, j in over:
        v = eta1(act, a[i], a[j], rho[i, j], rule)
        K[i, j] = K[j, i] = v
    for i in range(n):
        K[i, i] = eta2(act, a[i], rule1)
    return K


def kernel_linearization_gap(X, act, rho1, rho2, rule=None):
    """Operator-norm distance between the exact activation kernel and its
    linearization rho1^2/d X'X + rho2^2 I."""
    x = _as_matrix(X)
    d = x.shape[0]
    K = _kernel_matrix(x, act, rule)
    lin = rho1**2 * (x.T @ x) / d + rho2**2 * np.eye(x.shape[1])
    return float(sym_operator_norm(K - lin))


_MAGIC = b"DRFL"
_VERSION = 1


def dump_binary(obj, path):
    """Versioned binary dump of a WeightStack or FeatureSet."""
    if isinstance(obj, WeightStack):
        meta = {
            "kind": "weight_stack",
            "dims": list(obj.shape.dims),
            "seed": obj.seed,
            "shapes": [list(w.shape) for w in obj.weights],
            "dtype": str(obj.weights[0].dtype),
        }
        arrays = obj.weights
    elif isinstance(obj, FeatureSet):
        meta = {
            "kind": "feature_set",
            "layer": obj.layer,
            "provenance": obj.provenance,
            "shapes": [list(obj.data.shape)],
            "dtype": str(obj.data.dtype),
        }
        arrays = (obj.data,)
    else:
        raise TypeError(f"cannot dump object of type {type(obj).__name__}")
    header = json.dumps(meta).encode()
    with open(path, "wb") as f:
        f.write(_MAGIC)
        f.write(struct.pack("<II", _VERSION, len(header)))
        f.write(header)
        for arr in arrays:
            f.write(np.ascontiguousarray(arr).tobytes())


def load_binary(path):
    """Inverse of dump_binary."""
    with open(path, "rb") as f:
        magic = f.read(4)
        if magic != _MAGIC:
            raise ValueError(f"bad magic {magic!r}; not a drflab binary file")
        version, hlen = struct.unpack("<II", f.read(8))
        if version != _VERSION:
            raise ValueError(f"unsupported binary version {version}")
        meta = json.loads(f.read(hlen).decode())
        dtype = np.dtype(meta["dtype"])
        arrays = []
        for shp in meta["shapes"]:
            count = int(np.prod(shp))
            buf = f.read(count * dtype.itemsize)
            arrays.append(np.frombuffer(buf, dtype=dtype).reshape(shp).copy())
    if meta["kind"] == "weight_stack":
        return WeightStack(
            weights=tuple(arrays),
            seed=meta["seed"],
            shape=NetworkShape(tuple(meta["dims"])),
        )
    return FeatureSet(
        data=arrays[0], layer=meta["layer"], provenance=meta["provenance"]
    )
