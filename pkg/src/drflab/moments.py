"""Gaussian moment functionals and the per-layer surrogate constants.

For an activation sigma and layer widths fed by a Gaussian of variance
a, the surrogate pipeline needs

    eta1(a1, a2, rho) = E[sigma(g1) sigma(g2)],  Cov = [[a1, rho],[rho, a2]]
    eta2(a1)          = E[sigma(sqrt(a1) z)^2]

and per layer ell >= 1 (alpha_0 = 1):

    rho1_ell = E[sigma'(alpha_{ell-1} z)]
    rho2_ell = sqrt(E[sigma^2(alpha_{ell-1} z)] - alpha_{ell-1}^2 rho1_ell^2)
    alpha_ell^2 = E[sigma^2(alpha_{ell-1} z)]

All expectations are probabilists' Gauss-Hermite sums.
"""

from dataclasses import dataclass

import numpy as np

__all__ = [
    "QuadratureRule",
    "LayerConstants",
    "MomentInconsistencyError",
    "gauss_hermite",
    "eta1",
    "eta2",
    "layer_constants",
    "constants_chain",
    "hermite_coefficients",
]

# the same default order is used for the 1-D and 2-D rules so that
# eta1 at perfect correlation collapses to eta2 exactly (the tensor sum
# factorizes through identical marginal nodes), not just to quadrature error
DEFAULT_ORDER = 96
DEFAULT_ORDER_2D = 96


class MomentInconsistencyError(ValueError):
    """E[sigma^2] - alpha^2 rho1^2 came out materially negative."""


@dataclass(frozen=True)
class QuadratureRule:
    """Gauss-Hermite nodes/weights normalized against the standard normal."""

    nodes: np.ndarray
    weights: np.ndarray

    @property
    def order(self):
        return len(self.nodes)


@dataclass(frozen=True)
class LayerConstants:
    layer: int
    rho1: float
    rho2: float
    alpha_prev: float
    alpha: float


def gauss_hermite(order):
    if order < 2:
        raise ValueError(f"quadrature order must be >= 2, got {order}")
    nodes, weights = np.polynomial.hermite_e.hermegauss(order)
    weights = weights / weights.sum()
    return QuadratureRule(nodes=nodes, weights=weights)


_DEFAULT_RULE = None
_DEFAULT_RULE_2D = None


def _rule_1d(rule):
    global _DEFAULT_RULE
    if rule is not None:
        return rule
    if _DEFAULT_RULE is None:
        _DEFAULT_RULE = gauss_hermite(DEFAULT_ORDER)
    return _DEFAULT_RULE


def _rule_2d(rule):
    global _DEFAULT_RULE_2D
    if rule is not None:
        return rule
    if _DEFAULT_RULE_2D is None:
        _DEFAULT_RULE_2D = gauss_hermite(DEFAULT_ORDER_2D)
    return _DEFAULT_RULE_2D


def eta2(act, a1, rule=None):
    """E[sigma(sqrt(a1) z)^2] for standard normal z."""
    if a1 < 0:
        raise ValueError(f"variance a1 must be >= 0, got {a1}")
    if a1 == 0.0:
        return float(act(0.0) ** 2)
    rule = _rule_1d(rule)
    v = act(np.sqrt(a1) * rule.nodes)
    return float(rule.weights @ (v * v))


def _eta1_half(act, a1, a2, rho, rule):
    x, w = rule.nodes, rule.weights
    s1 = np.sqrt(a1)
    c21 = rho / s1
    c22 = np.sqrt(max(a2 - c21 * c21, 0.0))
    f1 = w * act(s1 * x)
    v2 = act(c21 * x[:, None] + c22 * x[None, :])
    return float(f1 @ (v2 @ w))


def eta1(act, a1, a2, rho, rule=None):
    """E[sigma(g1) sigma(g2)] with Cov(g1,g2) = [[a1, rho],[rho, a2]].

    The Cholesky whitening conditions g2 on g1; averaging over both
    orderings keeps the result exactly symmetric in (a1, a2).
    """
    det = a1 * a2 - rho * rho
    tol = 1e-10 * max(1.0, a1 * a2)
    if a1 < -tol or a2 < -tol or det < -tol:
        raise ValueError(
            f"covariance [[{a1},{rho}],[{rho},{a2}]] is not positive semidefinite"
        )
    if a1 <= 0 or a2 <= 0:
        return 0.0  # one argument is frozen at sigma(0) = 0 (odd activation)
    rule = _rule_2d(rule)
    if a1 == a2:
        return _eta1_half(act, a1, a2, rho, rule)
    return 0.5 * (
        _eta1_half(act, a1, a2, rho, rule) + _eta1_half(act, a2, a1, rho, rule)
    )


def layer_constants(act, alpha_prev, rule=None, layer=1):
    """Surrogate constants (rho1, rho2, alpha) for one layer."""
    if alpha_prev <= 0:
        raise ValueError(f"alpha_prev must be > 0, got {alpha_prev}")
    rule = _rule_1d(rule)
    rho1 = float(rule.weights @ act.deriv(alpha_prev * rule.nodes))
    e2 = eta2(act, alpha_prev**2, rule)
    var = e2 - alpha_prev**2 * rho1**2
    if var < -1e-10:
        raise MomentInconsistencyError(
            f"E[sigma^2] - alpha^2 rho1^2 = {var:.3e} < 0 at alpha={alpha_prev}"
        )
    # snap summation noise to an exact zero: sqrt would amplify a ~1e-16
    # residual (e.g. the linear activation) to a spurious rho2 ~ 1e-8
    rho2 = float(np.sqrt(var)) if var > 1e-12 else 0.0
    return LayerConstants(
        layer=layer,
        rho1=rho1,
        rho2=rho2,
        alpha_prev=float(alpha_prev),
        alpha=float(np.sqrt(e2)),
    )


def constants_chain(act, L, rule=None):
    """LayerConstants for layers 1..L starting from alpha_0 = 1."""
    if L < 1:
        raise ValueError(f"chain length L must be >= 1, got {L}")
    out = []
    alpha = 1.0
    for ell in range(1, L + 1):
        lc = layer_constants(act, alpha, rule, layer=ell)
        out.append(lc)
        alpha = lc.alpha
    return out


def hermite_coefficients(act, a1, n_coeff, rule=None):
    """Normalized Hermite coefficients c_k = E[sigma(sqrt(a1) z) He_k(z)] / sqrt(k!).

    These diagonalize eta1: for Cov [[a1, rho],[rho, a2]],
    eta1 = sum_k c_k(a1) c_k(a2) (rho / sqrt(a1 a2))^k.
    """
    rule = _rule_1d(rule)
    x, w = rule.nodes, rule.weights
    if n_coeff > rule.order // 2:
        raise ValueError(
            f"rule of order {rule.order} supports at most {rule.order // 2} coefficients"
        )
    fv = act(np.sqrt(a1) * x)
    he_prev = np.ones_like(x)
    he = x.copy()
    coeffs = np.empty(n_coeff)
    coeffs[0] = w @ fv
    log_fact = 0.0
    for k in range(1, n_coeff):
        log_fact += 0.5 * np.log(k)
        coeffs[k] = (w @ (fv * he)) / np.exp(log_fact)
        he, he_prev = x * he - k * he_prev, he
    return coeffs
