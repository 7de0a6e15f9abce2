"""Eigendistribution of the surrogate covariance chain.

The final-layer covariance is built by the random recursion
``R_0 = I``, ``R_l = rho1_l^2 W_l R_{l-1} W_l' + rho2_l^2 I`` with
independent Gaussian ``W_l`` of row variance ``1/p_{l-1}``.  Its limiting
eigendistribution is reachable two ways:

* empirically — diagonalize a sampled covariance and histogram the
  eigenvalues (:func:`empirical_spectrum`);
* analytically — evaluate the Stieltjes transform ``S_L`` of the limiting
  law through a per-level composition: each level rescales the previous
  transform affinely and passes it through the free multiplicative
  convolution with a Marchenko–Pastur factor, expressed as a scalar
  fixed-point equation (:func:`omega_fixed_point`).  The base case is the
  closed-form Wishart transform (:func:`mp_stieltjes`).  Densities follow
  from the boundary values ``f(x) = Im S(x + i w) / pi``
  (:func:`density_from_stieltjes`).

Transforms use the sign convention ``S(z) = int f(x) / (x - z) dx``, which
maps the upper half-plane into itself (the Herglotz property); branch and
fixed-point selections are asserted against it pointwise.
"""

import cmath
import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "FixedPointSettings",
    "SpectralDensity",
    "StieltjesEvaluator",
    "StieltjesNonConvergence",
    "density_from_stieltjes",
    "density_richardson",
    "density_tsv",
    "empirical_spectrum",
    "ks_distance",
    "mp_stieltjes",
    "omega_fixed_point",
    "refined_grid",
    "stieltjes_chain",
]

_SOURCES = ("empirical", "stieltjes")


class StieltjesNonConvergence(RuntimeError):
    """Fixed-point iteration failed to reach tolerance."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


@dataclass(frozen=True)
class FixedPointSettings:
    """Damped-iteration controls for the per-level fixed point."""

    damping: float = 0.5
    tol: float = 1e-10
    max_iter: int = 50000

    def __post_init__(self):
        if not 0.0 < self.damping <= 1.0:
            raise ValueError("damping must lie in (0, 1]")
        if self.tol <= 0:
            raise ValueError("tol must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be at least 1")


@dataclass(frozen=True)
class SpectralDensity:
    """A density sampled on a grid of eigenvalue abscissae."""

    lambdas: np.ndarray
    density: np.ndarray
    mass: float
    source: str

    def __post_init__(self):
        lam = np.asarray(self.lambdas, dtype=float)
        den = np.asarray(self.density, dtype=float)
        if lam.ndim != 1 or lam.shape != den.shape:
            raise ValueError("lambdas and density must be 1-D and matching")
        if np.any(np.diff(lam) <= 0):
            raise ValueError("lambdas must be strictly increasing")
        if np.any(den < 0):
            raise ValueError("density must be nonnegative")
        if self.source not in _SOURCES:
            raise ValueError(f"source must be one of {_SOURCES}")
        object.__setattr__(self, "lambdas", lam)
        object.__setattr__(self, "density", den)


def mp_stieltjes(z, beta1):
    """Closed-form transform of ``W W' / p_prev`` at aspect ratio ``beta1``.

    ``beta1 = p / p_prev`` for a ``p x p_prev`` standard Gaussian ``W``;
    the square-root branch is chosen (and asserted) so the value stays in
    the upper half-plane.
    """
    z = complex(z)
    if z.imag <= 0:
        raise ValueError("mp_stieltjes requires Im z > 0")
    if beta1 <= 0:
        raise ValueError("aspect ratio must be positive")
    root = cmath.sqrt(z * z - 2.0 * (beta1 + 1.0) * z + (beta1 - 1.0) ** 2)
    denom = 2.0 * beta1 * z
    plus = (1.0 - beta1 - z + root) / denom
    minus = (1.0 - beta1 - z - root) / denom
    val = plus if plus.imag >= minus.imag else minus
    if val.imag <= 0:
        raise ArithmeticError(
            f"branch selection lost the Herglotz property at z={z}")
    return val


def _eval_upper(s_prev, x):
    """Evaluate a transform at ``x``, using conjugate symmetry below axis.

    Damped iterates can momentarily push the composed argument across the
    real axis; the transform of a real measure extends there by
    ``S(conj(x)) = conj(S(x))``.
    """
    if x.imag > 0:
        return s_prev(x)
    if x.imag < 0:
        return complex(s_prev(x.conjugate())).conjugate()
    return s_prev(complex(x.real, 1e-30))


def omega_fixed_point(s_prev, beta, z, settings=None, init=None):
    """Solve ``om = S_prev(z / g(om)) / g(om)`` with ``g(om) = 1 - beta
    - beta z om`` by damped fixed-point iteration.

    ``s_prev`` is the transform one level down, ``beta`` the aspect ratio
    of the mixing layer.  Starts from ``init`` (continuation) or ``-1/z``.
    """
    z = complex(z)
    if z.imag <= 0:
        raise ValueError("omega_fixed_point requires Im z > 0")
    if beta <= 0:
        raise ValueError("aspect ratio must be positive")
    settings = settings or FixedPointSettings()
    om = complex(init) if init is not None else -1.0 / z
    eta = settings.damping
    resid = math.inf
    for _ in range(settings.max_iter):
        g = 1.0 - beta - beta * z * om
        if g == 0:
            g = complex(1e-300, 1e-300)
        rhs = _eval_upper(s_prev, z / g) / g
        resid = abs(rhs - om)
        if resid <= settings.tol:
            return om
        om = (1.0 - eta) * om + eta * rhs
    raise StieltjesNonConvergence(
        f"fixed point at z={z} (beta={beta}) stalled at |residual|="
        f"{resid:.3e} after {settings.max_iter} iterations",
        residual=resid,
    )


@dataclass
class StieltjesEvaluator:
    """Evaluates the level-``L`` transform at upper-half-plane points.

    ``rho1s``/``rho2s``/``betas`` hold one entry per level, ordered from
    the input side; ``betas[l-1] = p_l / p_{l-1}``.  An empty chain gives
    the transform of the identity covariance, ``1 / (1 - z)``.  With
    ``continuation`` on, each level's last fixed-point solution seeds the
    next evaluation (warm start across a sorted grid); turn it off to make
    evaluations order-independent.
    """

    rho1s: tuple
    rho2s: tuple
    betas: tuple
    settings: FixedPointSettings = field(default_factory=FixedPointSettings)
    continuation: bool = True

    def __post_init__(self):
        self.rho1s = tuple(float(r) for r in self.rho1s)
        self.rho2s = tuple(float(r) for r in self.rho2s)
        self.betas = tuple(float(b) for b in self.betas)
        if not len(self.rho1s) == len(self.rho2s) == len(self.betas):
            raise ValueError("rho1s, rho2s, betas must have equal length")
        if any(b <= 0 for b in self.betas):
            raise ValueError("aspect ratios must be positive")
        if any(r < 0 for r in self.rho1s + self.rho2s):
            raise ValueError("layer constants must be nonnegative")
        self._warm = {}
        alpha_sq = [1.0]
        for r1, r2 in zip(self.rho1s, self.rho2s):
            alpha_sq.append(r1 * r1 * alpha_sq[-1] + r2 * r2)
        self._alpha_sq = tuple(alpha_sq)

    @property
    def level(self):
        return len(self.rho1s)

    def __call__(self, z):
        z = complex(z)
        if z.imag <= 0:
            raise ValueError("evaluator requires Im z > 0")
        val = self._s(self.level, z)
        if val.imag <= 0:
            raise ArithmeticError(
                f"Herglotz property violated at z={z}: S={val}")
        return val

    def _s(self, level, z):
        if level == 0:
            return 1.0 / (1.0 - z)
        r1sq = self.rho1s[level - 1] ** 2
        r2sq = self.rho2s[level - 1] ** 2
        if r1sq < 1e-24:
            # the level forgets everything below it: point mass at rho2^2
            return 1.0 / (r2sq - z)
        x = (z - r2sq) / r1sq
        if level == 1:
            om = mp_stieltjes(x, self.betas[0])
        else:
            init = self._warm.get(level) if self.continuation else None
            om = self._solve_level(level, x, init)
            if self.continuation:
                self._warm[level] = om
        return om / r1sq

    def _omega_at(self, level, x, init):
        return omega_fixed_point(
            lambda y: self._s(level - 1, y), self.betas[level - 1], x,
            self.settings, init=init)

    def _map(self, level, x, om):
        beta = self.betas[level - 1]
        g = 1.0 - beta - beta * x * om
        if g == 0:
            g = complex(1e-300, 1e-300)
        return _eval_upper(lambda y: self._s(level - 1, y), x / g) / g

    def _model_init(self, level, x):
        """Two-mass sketch of the composed measure as a Newton seed.

        Mixing through a ``beta > 1`` layer parks mass ``1 - 1/beta`` in a
        rank-deficiency atom at zero and the rest near the scaled mean of
        the level below; for ``beta <= 1`` a single mass at the mean.
        """
        beta = self.betas[level - 1]
        mean_prev = self._alpha_sq[level - 1]
        if beta > 1.0:
            atom = 1.0 - 1.0 / beta
            return -atom / x + (1.0 - atom) / (beta * mean_prev - x)
        return 1.0 / (mean_prev - x)

    def _accept(self, om, resid):
        """Newton acceptance: residual small relative to the root size.

        Atom roots scale like ``1/omega`` so an absolute test would reject
        perfectly converged values there.
        """
        return resid <= self.settings.tol * (1.0 + abs(om))

    def _newton(self, level, x, om):
        """Root of ``om = map(om)`` near the seed; (root, residual)."""
        tol = self.settings.tol
        resid = math.inf
        for _ in range(200):
            g0 = self._map(level, x, om) - om
            resid = abs(g0)
            if resid <= tol * (1.0 + abs(om)):
                return om, resid
            h = 1e-7 * (1.0 + abs(om))
            g1 = self._map(level, x, om + h) - (om + h)
            slope = (g1 - g0) / h
            if slope == 0:
                return om, resid
            step = -g0 / slope
            cap = 0.5 * (1.0 + abs(om))
            if abs(step) > cap:
                step *= cap / abs(step)
            om = om + step
        return om, resid

    def _solve_level(self, level, x, init):
        """Physical root of ``om = map(om)`` at one evaluation point.

        Near rank-deficiency atoms the damped map turns stiff: the
        physical root repels and a second-sheet root attracts, sometimes
        with a deceptively positive imaginary part.  So Newton runs from
        several structure-aware seeds and, among certified roots in the
        upper half-plane, the one with the largest imaginary part wins --
        the same branch rule the closed-form solution uses.  Damped
        iteration is only a fallback when every Newton run fails.
        """
        seeds = [self._model_init(level, x)]
        if init is not None:
            seeds.append(complex(init))
        seeds.append(-1.0 / x)
        best = None
        near_real = None
        for seed in seeds:
            om, resid = self._newton(level, x, seed)
            if not self._accept(om, resid):
                continue
            if om.imag > 0.0:
                if best is None or om.imag > best.imag:
                    best = om
            elif near_real is None and abs(om.imag) <= 1e-9 * (1.0 + abs(om)):
                near_real = om
        if best is not None:
            return best
        damped = None
        try:
            damped = self._omega_at(level, x, init)
            if damped.imag > 0.0:
                return damped
        except StieltjesNonConvergence:
            pass
        if near_real is not None:
            # numerically-zero boundary value deep inside a spectral gap
            return complex(near_real.real, 1e-300)
        raise ArithmeticError(
            f"level {level} fixed point lost the Herglotz property at "
            f"x={x}: omega={damped}")


def stieltjes_chain(chain, betas, L=None, settings=None, continuation=True):
    """Build the level-``L`` evaluator from layer constants and ratios."""
    chain = list(chain)
    betas = [float(b) for b in betas]
    if L is None:
        L = len(chain)
    if len(chain) != L or len(betas) != L:
        raise ValueError("chain and betas must both have length L")
    rho1s, rho2s = [], []
    for lc in chain:
        r1, r2 = (lc.rho1, lc.rho2) if hasattr(lc, "rho1") else (lc[0], lc[1])
        rho1s.append(float(r1))
        rho2s.append(float(r2))
    return StieltjesEvaluator(
        rho1s=tuple(rho1s), rho2s=tuple(rho2s), betas=tuple(betas),
        settings=settings or FixedPointSettings(), continuation=continuation)


def refined_grid(lo, hi, num, spikes=(), omega=1e-3, spike_points=200):
    """Sorted grid on ``[lo, hi]``: uniform plus dense windows at spikes.

    Near-atomic features (Lorentzians of width ``omega``) need sampling at
    quantile spacing to integrate correctly; each spike contributes points
    placed at equal Lorentzian-CDF increments around it.
    """
    if hi <= lo:
        raise ValueError("grid needs hi > lo")
    pieces = [np.linspace(lo, hi, int(num))]
    uu = (np.arange(spike_points) + 0.5) / spike_points
    tangents = np.tan(np.pi * (uu - 0.5))
    for a in spikes:
        window = a + omega * tangents
        pieces.append(window[(window > lo) & (window < hi)])
    grid = np.unique(np.concatenate(pieces))
    return grid


def density_from_stieltjes(evaluator, lambda_grid, omega=1e-3):
    """Boundary-value density ``Im S(x + i omega) / pi`` on a sorted grid."""
    if omega <= 0:
        raise ValueError("omega must be positive")
    grid = np.asarray(lambda_grid, dtype=float)
    if grid.ndim != 1 or grid.size < 2 or np.any(np.diff(grid) <= 0):
        raise ValueError("lambda_grid must be 1-D, sorted, length >= 2")
    vals = np.empty(grid.size)
    for j, lam in enumerate(grid):
        vals[j] = evaluator(complex(lam, omega)).imag / math.pi
    worst = float(vals.min())
    if worst < -1e-6:
        raise ArithmeticError(
            f"density came out negative ({worst:.3e}) beyond tolerance")
    vals = np.clip(vals, 0.0, None)
    mass = float(np.trapezoid(vals, grid))
    return SpectralDensity(lambdas=grid, density=vals, mass=mass,
                           source="stieltjes")


def density_richardson(evaluator, lambda_grid, omega=1e-3):
    """Density with the leading smearing error extrapolated away.

    The boundary value at finite ``omega`` is the exact density convolved
    with a Cauchy kernel, an O(omega) distortion; evaluating at ``omega``
    and ``omega/2`` and combining ``2 f_half - f_full`` cancels the linear
    term.  The combination can overshoot slightly below zero near sharp
    edges, so it is clipped without the negativity check.
    """
    full = density_from_stieltjes(evaluator, lambda_grid, omega)
    half = density_from_stieltjes(evaluator, lambda_grid, omega / 2.0)
    vals = np.clip(2.0 * half.density - full.density, 0.0, None)
    grid = full.lambdas
    mass = float(np.trapezoid(vals, grid))
    return SpectralDensity(lambdas=grid, density=vals, mass=mass,
                           source="stieltjes")


def empirical_spectrum(R, bins):
    """Histogram density of the eigenvalues of a sampled covariance."""
    matrix = np.asarray(getattr(R, "matrix", R), dtype=float)
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
        raise ValueError("covariance must be a square matrix")
    if not np.allclose(matrix, matrix.T, atol=1e-8):
        raise ValueError("covariance must be symmetric")
    eigs = np.linalg.eigvalsh(matrix)
    hist, edges = np.histogram(eigs, bins=bins, density=True)
    centers = 0.5 * (edges[:-1] + edges[1:])
    mass = float(np.trapezoid(hist, centers))
    return SpectralDensity(lambdas=centers, density=hist.astype(float),
                           mass=mass, source="empirical")


def _cdf_on(density, points):
    """Normalized cumulative distribution of a density at query points.

    An empirical density on uniform histogram bins gets its exact bin-mass
    cumulative (the histogram CDF is exact at bin edges, which matters when
    a single bin holds an atom); anything else integrates by trapezoid on
    the density's own grid.  Constant 0/1 continuation outside the grid.
    """
    lam, den = density.lambdas, density.density
    if density.source == "empirical" and lam.size >= 2:
        widths = np.diff(lam)
        if np.allclose(widths, widths[0], rtol=1e-6, atol=0.0):
            h = widths[0]
            edges = np.concatenate([[lam[0] - 0.5 * h], lam + 0.5 * h])
            cum = np.concatenate([[0.0], np.cumsum(den * h)])
            total = cum[-1]
            if total <= 0:
                raise ValueError("density integrates to zero; no distribution")
            return np.interp(points, edges, cum / total)
    seg = 0.5 * (den[1:] + den[:-1]) * np.diff(lam)
    cum = np.concatenate([[0.0], np.cumsum(seg)])
    total = cum[-1]
    if total <= 0:
        raise ValueError("density integrates to zero; no distribution")
    return np.interp(points, lam, cum / total)


def ks_distance(a, b, at=None):
    """Kolmogorov–Smirnov distance between two sampled densities.

    Each density is normalized to unit mass and integrated to a
    cumulative distribution on its own grid; the sup-difference is taken
    over ``at`` (default: the union of both grids).  Spiky features
    narrower than the comparison grid should be compared at points that
    bracket them, e.g. histogram bin edges.
    """
    if at is None:
        at = np.union1d(a.lambdas, b.lambdas)
    at = np.asarray(at, dtype=float)
    return float(np.max(np.abs(_cdf_on(a, at) - _cdf_on(b, at))))


def density_tsv(density, metadata=None):
    """Two-column TSV text (lambda, density) with a ``#`` comment header."""
    lines = [f"# source={density.source}", f"# mass={density.mass:.8g}"]
    for key, val in (metadata or {}).items():
        lines.append(f"# {key}={val}")
    lines.append("# lambda\tdensity")
    for lam, den in zip(density.lambdas, density.density):
        lines.append(f"{lam:.10g}\t{den:.10g}")
    return "\n".join(lines) + "\n"
