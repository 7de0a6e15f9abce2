"""Scalar saddle-point prediction of train/generalization error for
regularized regression on deep Gaussian-surrogate features.

As widths grow proportionally, the ERM objective on surrogate features
concentrates on the value of a low-dimensional saddle over a handful of
scalars, so train and generalization error can be predicted directly
from the layer constants (rho1_l, rho2_l), the widths, the noise level
and the regularizer -- without sampling features or running a fit.

Construction (levels l = 1..L, widths p_0..p_L, n samples):

* Dualizing the square loss introduces the dual radius ``beta`` (ascent)
  and the generalization radius ``q = sqrt(sigma_nu^2 + e'R e / p_L)``
  (descent), contributing
  ``T_out = beta*q/2 + beta*sigma_nu^2/(2q) - beta^2/2``.
* Layer covariances obey R(l) = rho1^2 W R(l-1) W' + rho2^2 I.  Trading
  the weight matrix of level l for scalars introduces an exchange pair
  per level -- a squared multiplier ``s_l >= 0`` (ascent) and a ratio
  ``u_l > 0`` (descent) -- and maps the level-l quadratic problem with
  coefficients ``(a/2)|x|^2 + b*w1'x + (c/2) x'R(l) x + d*w2'R(l)^(1/2) x``
  to level l-1 via::

      a' = u_l,   b' = -u_l*nu_l/sqrt(p_(l-1)),
      c' = c*rho1_l^2,   d' = d*rho1_l,

  where ``nu_l = |x_l|`` is the norm of the level-l minimizer.  The
  exchange contributes ``s_l/(2 u_l)`` to the value, adds ``u_l`` to the
  parent's isotropic quadratic and ``s_l/p_(l-1)`` to the square of the
  parent's isotropic Gaussian weight.  Middle levels see only isotropic
  Gaussians and reduce to ``(abar_l/2) nu_l^2 - nu_l*Y_l`` with
  ``abar_l = a + c*rho2_l^2 + u_l`` and
  ``Y_l = sqrt(p_l (b^2 + d^2 rho2_l^2) + s_l p_l / p_(l-1))``; level 0
  has identity covariance and solves in closed form.
* The top level keeps the vector variable ``e = theta - theta_star``:
  it is a Moreau envelope of the shifted regularizer at a single fixed
  Gaussian direction, with quadratic weight corrected by the curvature
  ``Psi_L`` the chain feeds back through ``|e|``.  All norms (``nu_e``
  and the middle ``nu_l``) satisfy closed-form self-consistency
  relations -- ``nu_l = Y_l / (abar_l - Psi_l)`` with
  ``Psi_l = u_l^2 nu_(l-1)/Y_(l-1)`` (and ``u_1^2/(u_1 + c_0)`` at the
  bottom) -- and are resolved inside every value evaluation, so the
  outer saddle runs only over (beta, q) and the per-level exchange
  pairs.

The predicted training error is the saddle value; the predicted
generalization error is ``q*^2``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .regression import Regularizer

__all__ = [
    "SaddleState",
    "CgmtConstants",
    "CgmtSolution",
    "CgmtNonConvergence",
    "moreau_envelope",
    "solve_same_size",
    "solve_general",
    "predicted_errors",
    "predict_with_averaging",
]

_PHI = (math.sqrt(5.0) - 1.0) / 2.0
T0_CONVENTIONS = ("lemma", "main-text")


# --------------------------------------------------------------------------
# public types
# --------------------------------------------------------------------------


@dataclass
class SaddleState:
    """Scalar variables of the alternative problem at (or near) the saddle.

    ``chi`` (ascent) and ``k`` (descent) are the per-level exchange
    multiplier and splitting scale (``chi_l = sqrt(s_l)``,
    ``k_l = sqrt(s_l)/u_l`` in terms of the internal search variables);
    ``xi``/``t`` are the recovered norm of each level's covariance image
    and its dual scale; ``nu`` holds the norms of the intermediate
    minimizers (levels 1..L-1) and ``nu_e`` the norm of the top-level
    minimizer.  ``boxes`` maps search-variable names to the intervals
    actually used.
    """

    beta: float
    q: float
    chi: np.ndarray
    k: np.ndarray
    xi: np.ndarray
    t: np.ndarray
    nu: np.ndarray
    nu_e: float
    boxes: dict = field(default_factory=dict)
    boundary_warnings: tuple = ()


@dataclass
class CgmtConstants:
    """Per-level coefficients of the scalarized level problems.

    ``c[l]``/``d[l]`` weight the covariance quadratic ``x'R(l)x/2`` and
    the Gaussian term ``w'R(l)^(1/2)x`` at level ``l``; ``cbar[l]`` /
    ``dbar[l]`` weight the isotropic quadratic ``|x|^2/2`` and the
    isotropic Gaussian term.  ``a``/``b`` are the aggregate quadratic and
    linear weights of the top-level Moreau problem in ``e``; ``a_eff``
    subtracts the curvature fed back by the chain below and is positive
    at any interior saddle.  ``T_levels`` collects the per-level value
    contributions.
    """

    c: np.ndarray
    d: np.ndarray
    cbar: np.ndarray
    dbar: np.ndarray
    a: float
    b: float
    a_eff: float
    T_levels: dict = field(default_factory=dict)


@dataclass
class CgmtSolution:
    """Saddle solution: predicted training error is ``value``, predicted
    generalization error is ``gen_pred = q*^2``; ``e_hat`` is the
    top-level minimizer (estimator minus target)."""

    state: SaddleState
    constants: CgmtConstants
    value: float
    e_hat: np.ndarray
    gen_pred: float
    diagnostics: dict = field(default_factory=dict)


class CgmtNonConvergence(RuntimeError):
    """Saddle iteration failed to converge; carries the last state."""

    def __init__(self, message, state=None, diagnostics=None):
        super().__init__(message)
        self.state = state
        self.diagnostics = diagnostics or {}


# --------------------------------------------------------------------------
# Moreau envelope
# --------------------------------------------------------------------------


def moreau_envelope(reg, shift, weight, point):
    """Value and minimizer of ``min_e |e - point|^2/(2 weight) + R(e + shift)``.

    Closed form through the proximal map of the regularizer.  Returns
    ``(value, argmin)``.
    """
    if weight <= 0:
        raise ValueError("moreau_envelope: weight must be positive")
    shift = np.asarray(shift, dtype=float)
    point = np.asarray(point, dtype=float)
    w = reg.prox(point + shift, weight)
    e = w - shift
    diff = e - point
    value = float(diff @ diff) / (2.0 * weight) + float(reg.penalty(w))
    return value, e


# --------------------------------------------------------------------------
# 1-D golden-section search in log scale
# --------------------------------------------------------------------------


def _golden_min_log(f, lo, hi, tol):
    """Minimize ``f`` over the positive interval [lo, hi] in log scale.

    ``tol`` is the final bracket width in log units (i.e. relative).
    Non-finite values of ``f`` are treated as +inf.  Returns (arg, val).
    """
    a, b = math.log(lo), math.log(hi)

    def g(t):
        v = f(math.exp(t))
        return v if v == v else math.inf

    c = b - _PHI * (b - a)
    d = a + _PHI * (b - a)
    fc, fd = g(c), g(d)
    while (b - a) > tol:
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - _PHI * (b - a)
            fc = g(c)
        else:
            a, c, fc = c, d, fd
            d = a + _PHI * (b - a)
            fd = g(d)
    t = 0.5 * (a + b)
    return math.exp(t), g(t)


# --------------------------------------------------------------------------
# core solver
# --------------------------------------------------------------------------


class _Saddle:
    """Mutable state and value assembly for one saddle solve.

    Search variables: ``beta`` (ascent), ``q`` (descent) and per level
    ``s_l`` (ascent, squared exchange multiplier) and ``u_l`` (descent,
    exchange ratio).  The norms ``nu_1..nu_(L-1)`` and ``nu_e`` are
    resolved self-consistently inside :meth:`value`.
    """

    def __init__(self, dims, n, rho1, rho2, reg, sigma_nu, theta_star,
                 u_star, t0_convention):
        self.dims = tuple(int(p) for p in dims)
        self.n = int(n)
        self.L = len(self.dims) - 1
        self.rho1 = tuple(float(r) for r in rho1)
        self.rho2 = tuple(float(r) for r in rho2)
        self.reg = reg
        self.sigma_nu = float(sigma_nu)
        self.theta_star = np.asarray(theta_star, dtype=float)
        self.u_dir = u_star
        self.t0 = t0_convention
        # exact second-moment recursion: alpha_l^2 = rho1^2 alpha_(l-1)^2 + rho2^2
        a2 = 1.0
        for r1, r2 in zip(self.rho1, self.rho2):
            a2 = r1 * r1 * a2 + r2 * r2
        self.alpha_out = math.sqrt(a2)

        self.beta = 1.0
        self.q = 1.0
        self.uu = [1.0] * self.L          # exchange ratios (descent)
        self.sg = [1.0] * self.L          # squared multipliers (ascent)
        self.nu = [1.0] * max(self.L - 1, 0)  # settled middle norms
        self.nu_e = 1.0                   # settled top norm
        self.boxes = {}
        self.windows = {}
        self._expansions = {}
        self.boundary_warnings = set()
        self._prox_cache = {}

    # -- elementary pieces ---------------------------------------------------

    def _t_out(self, beta, q):
        return 0.5 * beta * q + 0.5 * beta * self.sigma_nu ** 2 / q \
            - 0.5 * beta * beta

    def _prox_terms(self, a_eff, b_lin):
        """(|e|^2, u'e, R(e+theta*)) at the top-level minimizer for the
        effective quadratic weight ``a_eff`` and linear weight ``b_lin``."""
        key = (a_eff, b_lin)
        hit = self._prox_cache.get(key)
        if hit is None:
            point = (-b_lin / a_eff) * self.u_dir
            w = self.reg.prox(point + self.theta_star, 1.0 / a_eff)
            e = w - self.theta_star
            hit = (float(e @ e), float(self.u_dir @ e),
                   float(self.reg.penalty(w)))
            if len(self._prox_cache) > 60000:
                self._prox_cache.clear()
            self._prox_cache[key] = hit
        return hit

    def _cd_pass(self, beta, q):
        """Covariance-weight pass (independent of exchange pairs and norms)."""
        L, p, r1 = self.L, self.dims, self.rho1
        c = [0.0] * (L + 1)
        d = [0.0] * (L + 1)
        c[L] = beta / (q * p[L])
        d[L] = -beta / math.sqrt(self.n * p[L])
        for l in range(L, 0, -1):
            c[l - 1] = c[l] * r1[l - 1] ** 2
            d[l - 1] = d[l] * r1[l - 1]
        return c, d

    def _settle(self, beta, q, uu, sg):
        """Curvature recursion, top prox and norm recovery at the given
        scalars; returns (nu, nu_e, c, d, dd, a_base, b_lin, a_eff) or
        None when the configuration is infeasible.

        ``dd[l]`` is the effective curvature of the level-l quadratic
        after subtracting the feedback of the chain below it:
        ``D_0 = u_1 + c_0`` and ``D_l = abar_l - u_l^2/D_(l-1)`` (the
        sign of the level-0 feedback flips for the alternate base-value
        convention).  The recursion is independent of the norms, so the
        top-level effective weight ``a_eff = a_base - u_L^2/D_(L-1)`` is
        available in closed form; the middle norms then follow from the
        top norm by one backward pass, ``nu_l = Y_l / D_l``.
        """
        L, p, r2 = self.L, self.dims, self.rho2
        c, d = self._cd_pass(beta, q)
        a_base = c[L] * r2[L - 1] ** 2 + uu[L - 1]
        b_lin = math.sqrt((d[L] * r2[L - 1]) ** 2 + sg[L - 1] / p[L - 1])
        if not (a_base > 0.0):
            return None
        dd = [0.0] * L
        dd[0] = uu[0] + c[0]
        if not (dd[0] > 1e-300):
            return None
        main_text = self.t0 == "main-text"
        for l in range(1, L):
            abar_l = uu[l] + c[l] * r2[l - 1] ** 2 + uu[l - 1]
            fb = uu[l - 1] ** 2 / dd[l - 1]
            dd[l] = abar_l + 2.0 * fb if (l == 1 and main_text) \
                else abar_l - fb
            if not (dd[l] > 1e-300):
                return None
        fb_top = uu[L - 1] ** 2 / dd[L - 1]
        a_eff = a_base + 2.0 * fb_top if (L == 1 and main_text) \
            else a_base - fb_top
        if not (a_eff > 1e-300):
            return None
        norm2_e, _, _ = self._prox_terms(a_eff, b_lin)
        nu_e = math.sqrt(norm2_e)
        nu = [0.0] * max(L - 1, 0)
        parent = nu_e
        for l in range(L - 1, 0, -1):
            b_level = -uu[l] * parent / math.sqrt(p[l])
            y_l = math.sqrt(p[l] * (b_level ** 2 + (d[l] * r2[l - 1]) ** 2)
                            + sg[l - 1] * p[l] / p[l - 1])
            nu[l - 1] = y_l / dd[l]
            parent = nu[l - 1]
        self.nu = nu
        self.nu_e = nu_e
        return (nu, nu_e, c, d, dd, a_base, b_lin, a_eff)

    def value(self, beta=None, q=None, uu=None, sg=None):
        """Saddle objective with the chain feedback cancelled analytically.

        At the settled norms the middle-level terms telescope,
        ``(abar_l/2) nu_l^2 - nu_l Y_l + (Psi_l/2) nu_l^2 = -nu_l Y_l/2``,
        leaving the effective top-level quadratic plus one O(1) residue
        per level; the naive sum of the raw level terms loses precision
        catastrophically when an exchange ratio is large (heavily
        regularized configurations drive ``u_l`` to saturation).
        """
        beta = self.beta if beta is None else beta
        q = self.q if q is None else q
        uu = self.uu if uu is None else uu
        sg = self.sg if sg is None else sg
        if beta <= 0.0 or q <= 0.0 or q < self.sigma_nu - 1e-15:
            return math.nan
        settled = self._settle(beta, q, uu, sg)
        if settled is None:
            return math.nan
        nu, nu_e, c, d, dd, a_base, b_lin, a_eff = settled
        L, p, r2 = self.L, self.dims, self.rho2
        norm2_e, dot_ue, pen_e = self._prox_terms(a_eff, b_lin)
        s = self._t_out(beta, q)
        s += 0.5 * a_eff * norm2_e + b_lin * dot_ue + pen_e
        for l in range(1, L + 1):
            s += 0.5 * sg[l - 1] / uu[l - 1]
        for l in range(1, L):
            s -= (p[l] * (d[l] * r2[l - 1]) ** 2
                  + sg[l - 1] * p[l] / p[l - 1]) / (2.0 * dd[l])
        z0d = p[0] * d[0] ** 2
        if self.t0 == "lemma":
            s -= 0.5 * z0d / dd[0]
        else:
            s += z0d / dd[0]
        return s

    # -- scalar access by name ------------------------------------------------

    def _get(self, name):
        if name == "beta":
            return self.beta
        if name == "q":
            return self.q
        kind, idx = name.split("_")
        idx = int(idx) - 1
        return {"u": self.uu, "s": self.sg}[kind][idx]

    def _set(self, name, v):
        if name == "beta":
            self.beta = v
        elif name == "q":
            self.q = v
        else:
            kind, idx = name.split("_")
            idx = int(idx) - 1
            {"u": self.uu, "s": self.sg}[kind][idx] = v

    # -- initialization ---------------------------------------------------------

    def init_scalars(self):
        pL = self.dims[-1]
        th_norm = float(np.linalg.norm(self.theta_star))
        q0 = math.sqrt(self.sigma_nu ** 2
                       + self.alpha_out ** 2 * th_norm ** 2 / pL)
        if q0 <= 0.0:
            q0 = 1e-3
        self.q = q0
        self.beta = 0.5 * (q0 + self.sigma_nu ** 2 / q0)
        beta_hi = max(10.0 * (self.sigma_nu + th_norm), 1.0)
        q_lo = self.sigma_nu if self.sigma_nu > 0 else 1e-12 * q0
        self.boxes = {"beta": [1e-12, beta_hi], "q": [q_lo, 10.0 * q0]}
        # scale guesses: u from the descending covariance coefficient,
        # s from the squared multiplier balancing an O(sigma_nu^2) value
        c_l = self.beta / (self.q * pL)
        r0 = max(self.sigma_nu ** 2, 1e-2)
        for l in range(self.L, 0, -1):
            u0 = c_l * self.rho1[l - 1] ** 2
            s0 = r0 * u0
            self.uu[l - 1] = u0
            self.sg[l - 1] = s0
            self.boxes[f"u_{l}"] = [u0 * 1e-4, u0 * 1e4]
            self.boxes[f"s_{l}"] = [s0 * 1e-8, s0 * 1e8]
            c_l = u0
        self.nu_e = max(th_norm, 1e-3)
        self.nu = [1.0] * max(self.L - 1, 0)
        self._expansions = {k: 0 for k in self.boxes}
        self.windows = {k: 2.0 for k in self.boxes}

    # -- box management -----------------------------------------------------------

    def _log_grad(self, name, h=1e-5):
        v = self._get(name)
        self._set(name, v * math.exp(h))
        sp = self.value()
        self._set(name, v * math.exp(-h))
        sm = self.value()
        self._set(name, v)
        if not (sp == sp and sm == sm):
            return math.inf
        return (sp - sm) / (2 * h)

    def _maybe_expand(self, name):
        """Expand the search box when the value sits near an edge with a
        meaningful gradient; flag when the expansion budget is exhausted.
        Saturated directions (log-gradient below 1e-7) are left alone:
        they are stationary for every practical purpose.  The lower edge
        of q (the noise floor) and of beta are structural bounds and
        never flagged."""
        lo, hi = self.boxes[name]
        v = self._get(name)
        changed = False
        at_hi = v >= hi / 1.05
        structural_lo = (name == "q" and self.sigma_nu > 0) or name == "beta"
        at_lo = v <= lo * 1.05 and not structural_lo
        if not (at_hi or at_lo):
            return False
        if abs(self._log_grad(name)) <= 1e-7:
            return False
        if self._expansions[name] >= 10:
            self.boundary_warnings.add(name)
            return False
        if at_hi:
            self.boxes[name][1] = hi * 4.0
        else:
            self.boxes[name][0] = lo / 4.0
        self._expansions[name] += 1
        return True

    # -- block updates ---------------------------------------------------------

    def _bounds(self, name):
        """Search interval for one variable: the trust window around the
        incumbent, clipped to the box."""
        lo, hi = self.boxes[name]
        v = self._get(name)
        w = math.exp(self.windows[name])
        return max(lo, v / w), min(hi, v * w)

    def _pair_update(self, max_name, min_name, gtol, damp):
        """Nested search: ascend in ``max_name`` against the inner descent
        in ``min_name`` (kills the bilinear coupling between the pair).
        Both searches stay inside the variables' trust windows so that a
        piecewise-smooth landscape (an L1 penalty makes the top envelope
        only piecewise twice-differentiable) cannot throw the iterate
        into a distant spurious basin."""
        lo_a, hi_a = self._bounds(max_name)
        lo_i, hi_i = self._bounds(min_name)
        save_a, save_i = self._get(max_name), self._get(min_name)

        def f_inner(v):
            self._set(min_name, v)
            return self.value()

        def neg_outer(v_outer):
            self._set(max_name, v_outer)
            _, val = _golden_min_log(f_inner, lo_i, hi_i, gtol)
            return math.inf if val == math.inf else -val

        new_a, _ = _golden_min_log(neg_outer, lo_a, hi_a, gtol)
        self._set(max_name, new_a)
        new_i, _ = _golden_min_log(f_inner, lo_i, hi_i, gtol)
        # geometric damping stabilizes the ascent/descent alternation
        self._set(max_name, math.exp(damp * math.log(new_a)
                                     + (1 - damp) * math.log(save_a)))
        self._set(min_name, math.exp(damp * math.log(new_i)
                                     + (1 - damp) * math.log(save_i)))

    def _adapt_window(self, name, prev_value):
        """Grow the trust window while the variable pushes its edge,
        shrink it as the variable settles."""
        v = self._get(name)
        step = abs(math.log(v / prev_value)) if prev_value > 0 else 0.0
        w = self.windows[name]
        if step >= 0.45 * w:
            w = min(w * 1.6, 12.0)
        else:
            w = max(w * 0.7, max(8.0 * step, 0.05))
        self.windows[name] = w

    # -- outer loop ----------------------------------------------------------------

    def run(self, max_outer, tol):
        self.init_scalars()
        names = list(self.boxes)
        move = math.inf
        best_resid = math.inf
        best_point = None
        best_age = 0
        it = 0
        for it in range(1, max_outer + 1):
            gtol = 1e-10 if move < 100 * tol else min(1e-4, max(1e-10, 0.01 * move))
            damp = 0.5
            prev = {nm: self._get(nm) for nm in names}
            for l in range(self.L, 0, -1):
                self._pair_update(f"s_{l}", f"u_{l}", gtol, damp)
            self._pair_update("beta", "q", gtol, damp)

            expanded = False
            for nm in names:
                expanded = self._maybe_expand(nm) or expanded
                self._adapt_window(nm, prev[nm])

            move = 0.0
            for nm in names:
                v0, v1 = prev[nm], self._get(nm)
                mv = abs(v1 - v0) / (1.0 + abs(v0))
                if mv > tol and abs(self._log_grad(nm)) <= 1e-7:
                    mv = 0.0  # saturated direction: drift is immaterial
                move = max(move, mv)
            if move < tol and not expanded and it >= 3:
                break
            # track the most stationary point seen; an alternation that
            # orbits the saddle still passes arbitrarily close to it
            if move < 1.0 and not expanded:
                worst = max(abs(self._log_grad(nm)) for nm in names)
                if worst < best_resid:
                    best_resid = worst
                    best_point = {nm: self._get(nm) for nm in names}
                    best_age = 0
                else:
                    best_age += 1
                if best_resid < 1e-7:
                    break
                if best_age >= 60:
                    break  # stalled or cycling: hand the best point to polish
        if best_point is not None and best_resid < math.inf:
            worst_now = max(abs(self._log_grad(nm)) for nm in names)
            if worst_now > best_resid:
                for nm, v in best_point.items():
                    self._set(nm, v)
        return it

    # -- polishing and residuals ------------------------------------------------

    def _fd_log(self, name, h=1e-5):
        """Central first/second derivative of the value in log coordinates."""
        v = self._get(name)
        s0 = self.value()
        self._set(name, v * math.exp(h))
        sp = self.value()
        self._set(name, v * math.exp(-h))
        sm = self.value()
        self._set(name, v)
        if not (sp == sp and sm == sm and s0 == s0):
            return 0.0, 0.0, s0
        return (sp - sm) / (2 * h), (sp - 2 * s0 + sm) / (h * h), s0

    def polish(self, rounds=60, target=1e-6):
        """Refine the log-scale derivatives toward zero; returns the
        scale-invariant stationarity residuals ``|dS/d log v|``.

        Each round proposes one step per variable (Newton where the local
        curvature is usable, otherwise a shrinking line search along the
        variable's ascent/descent direction) and is accepted only when
        the worst residual over all variables decreases: per-variable
        acceptance alone can diverge when the saddle couples the scalars
        strongly.  A variable pinned at its box edge with a meaningful
        gradient gets its box expanded (saturating directions keep
        marching until their gradient dies).
        """

        def all_resid():
            return {nm: abs(self._fd_log(nm)[0]) for nm in self.boxes
                    if nm not in self.boundary_warnings}

        res = all_resid()
        best_worst = max(res.values(), default=0.0)
        best_point = {nm: self._get(nm) for nm in self.boxes}
        scale = 1.0
        for _ in range(rounds):
            worst = max(res.values(), default=0.0)
            if worst <= target:
                break
            for nm, raw in res.items():
                if raw <= 0.25 * target or nm in self.boundary_warnings:
                    continue
                g, hcurv, _ = self._fd_log(nm)
                raw = abs(g)
                v = self._get(nm)
                lo, hi = self.boxes[nm]
                # a saturating direction keeps pushing its box edge: let it
                if v >= hi / 1.05 or v <= lo * 1.05:
                    if self._maybe_expand(nm):
                        lo, hi = self.boxes[nm]
                    elif nm in self.boundary_warnings:
                        continue
                improved = False
                if abs(hcurv) > 1e-14:
                    step = scale * max(-0.2, min(0.2, -g / hcurv))
                    cand = min(max(v * math.exp(step), lo), hi)
                    self._set(nm, cand)
                    g1, _, _ = self._fd_log(nm)
                    if abs(g1) < raw:
                        improved = True
                    else:
                        self._set(nm, v)
                if not improved:
                    # stationarity direction: ascent variables increase
                    # along +g, descent variables decrease along +g
                    sign = 1.0 if nm == "beta" or nm.startswith("s_") else -1.0
                    step0 = 0.03 * scale
                    while step0 > 1e-11:
                        cand = min(max(v * math.exp(
                            sign * math.copysign(step0, g)), lo), hi)
                        self._set(nm, cand)
                        g1, _, _ = self._fd_log(nm)
                        if abs(g1) < raw:
                            break
                        self._set(nm, v)
                        step0 *= 0.25
            res = all_resid()
            worst = max(res.values(), default=0.0)
            if worst < best_worst:
                best_worst = worst
                best_point = {nm: self._get(nm) for nm in self.boxes}
                scale = min(scale * 2.0, 1.0)
            elif worst > 3.0 * best_worst:
                # per-variable progress can ratchet the coupled residuals
                # upward: fall back to the best point and move more gently
                for nm, v in best_point.items():
                    self._set(nm, v)
                res = all_resid()
                scale *= 0.25
                if scale < 1e-3:
                    break
        res = all_resid()
        if max(res.values(), default=0.0) > best_worst:
            for nm, v in best_point.items():
                self._set(nm, v)
            res = all_resid()
        return res

    # -- diagnostics recovery ------------------------------------------------------

    def recover_xi_t(self):
        """Norms of the per-level covariance images and their dual scales.

        ``xi_l = |R(l-1)^(1/2) x_l|`` follows from envelope derivatives of
        the chain value with respect to the level-(l-1) covariance
        coefficients: with every optimizer frozen, those coefficients
        enter only the levels below l, so the derivatives are exact sums
        over the propagated coefficient products (no finite differences).
        """
        L, p, r1, r2 = self.L, self.dims, self.rho1, self.rho2
        settled = self._settle(self.beta, self.q, self.uu, self.sg)
        if settled is None:
            return np.zeros(L), np.full(L, 1e-300)
        nu, nu_e, c, d, dd, a_base, b_lin, a_eff = settled
        xi = np.zeros(L)
        tt = np.zeros(L)
        nl1 = nu_e if L == 1 else nu[0]
        b0 = -self.uu[0] * nl1 / math.sqrt(p[0])
        z0 = p[0] * (b0 ** 2 + d[0] ** 2)
        for l in range(1, L + 1):
            # derivative of F0 with respect to (c0, d0)
            if self.t0 == "lemma":
                f0_c = 0.5 * z0 / dd[0] ** 2
                f0_d = -d[0] * p[0] / dd[0]
            else:
                f0_c = -z0 / dd[0] ** 2
                f0_d = 2.0 * d[0] * p[0] / dd[0]
            # accumulate d(chain)/d c_(l-1) and d(chain)/d d_(l-1) through
            # the coefficient propagation c_j = c_(j+1) rho1^2, d_j = d_(j+1) rho1
            pc, pd = 1.0, 1.0
            acc_c, acc_d = 0.0, 0.0
            for j in range(l - 1, 0, -1):
                acc_c += pc * 0.5 * r2[j - 1] ** 2 * nu[j - 1] ** 2
                acc_d += pd * (-p[j] * d[j] * r2[j - 1] ** 2 / dd[j])
                pc *= r1[j - 1] ** 2
                pd *= r1[j - 1]
            acc_c += pc * f0_c
            acc_d += pd * f0_d
            mm = 2.0 * acc_c
            zm = acc_d
            ratio = d[l] / (c[l] * r1[l - 1])
            val = mm + 2.0 * ratio * zm + ratio ** 2 * p[l - 1]
            xi[l - 1] = math.sqrt(max(val, 0.0))
            tt[l - 1] = max(c[l] * r1[l - 1] ** 2 * xi[l - 1], 1e-300)
        return xi, tt

    # -- final assembly ---------------------------------------------------------------

    def snapshot_state(self, xi=None, tt=None):
        L = self.L
        chi = np.sqrt(np.asarray(self.sg))
        kk = chi / np.asarray(self.uu)
        return SaddleState(
            beta=self.beta,
            q=self.q,
            chi=chi,
            k=kk,
            xi=np.zeros(L) if xi is None else xi,
            t=np.zeros(L) if tt is None else tt,
            nu=np.array(self.nu),
            nu_e=self.nu_e,
            boxes={k: tuple(v) for k, v in self.boxes.items()},
            boundary_warnings=tuple(sorted(self.boundary_warnings)),
        )

    def assemble(self, iterations, residuals):
        value = self.value()
        settled = self._settle(self.beta, self.q, self.uu, self.sg)
        if settled is None or value != value:
            raise CgmtNonConvergence(
                "converged point became infeasible during assembly",
                state=self.snapshot_state(),
                diagnostics={"iterations": iterations},
            )
        nu, nu_e, c, d, dd, a_base, b_lin, a_eff = settled
        p, r2 = self.dims, self.rho2
        point = (-b_lin / a_eff) * self.u_dir
        w = self.reg.prox(point + self.theta_star, 1.0 / a_eff)
        e_hat = w - self.theta_star
        t_levels = {
            "outer": self._t_out(self.beta, self.q),
            "exchange": [0.5 * self.sg[i] / self.uu[i] for i in range(self.L)],
            "residues": [
                -(p[l] * (d[l] * r2[l - 1]) ** 2
                  + self.sg[l - 1] * p[l] / p[l - 1]) / (2.0 * dd[l])
                for l in range(1, self.L)
            ],
            "top": 0.5 * a_eff * float(e_hat @ e_hat)
            + b_lin * float(self.u_dir @ e_hat)
            + float(self.reg.penalty(w)),
        }
        z0d = p[0] * d[0] ** 2
        t_levels["base"] = (-0.5 * z0d / dd[0] if self.t0 == "lemma"
                            else z0d / dd[0])
        # isotropic weights per level: a-levels are the parent ratios,
        # b-levels the norm-scaled linear weights
        a_vec = np.zeros(self.L + 1)
        b_vec = np.zeros(self.L + 1)
        for l in range(1, self.L + 1):
            nl = nu_e if l == self.L else nu[l - 1]
            a_vec[l - 1] = self.uu[l - 1]
            b_vec[l - 1] = -self.uu[l - 1] * nl / math.sqrt(self.dims[l - 1])
        constants = CgmtConstants(
            c=np.array(c), d=np.array(d),
            cbar=a_vec, dbar=b_vec,
            a=a_base, b=b_lin, a_eff=a_eff, T_levels=t_levels,
        )
        xi, tt = self.recover_xi_t()
        state = self.snapshot_state(xi, tt)
        gen_pred = self.q ** 2
        if self.beta <= 2e-12:
            # degenerate branch: the data constraint is inactive, so the
            # top-level minimizer is the unconstrained penalty minimizer
            e_hat = -self.theta_star.copy()
            value = 0.0
            gen_pred = self.sigma_nu ** 2 + self.alpha_out ** 2 * float(
                e_hat @ e_hat) / self.dims[-1]
        diagnostics = {
            "iterations": iterations,
            "stationarity_residuals": residuals,
            "converged": True,
            "boundary_warnings": tuple(sorted(self.boundary_warnings)),
            "value_terms": t_levels,
        }
        return CgmtSolution(
            state=state, constants=constants, value=float(value),
            e_hat=e_hat, gen_pred=float(gen_pred), diagnostics=diagnostics,
        )


# --------------------------------------------------------------------------
# public solve functions
# --------------------------------------------------------------------------


def _chain_rhos(chain, L):
    if len(chain) != L:
        raise ValueError(f"chain has {len(chain)} layers, expected {L}")
    rho1, rho2 = [], []
    for lc in chain:
        if hasattr(lc, "rho1"):
            r1, r2 = float(lc.rho1), float(lc.rho2)
        else:
            r1, r2 = float(lc[0]), float(lc[1])
        if r1 <= 1e-12:
            raise ValueError(
                "rho1 must be positive: a vanishing linear component "
                "disconnects the feature chain and the saddle degenerates"
            )
        if r2 < 0:
            raise ValueError("rho2 must be nonnegative")
        rho1.append(r1)
        rho2.append(r2)
    return rho1, rho2


def _solve_core(dims, n, chain, reg, sigma_nu, theta_star, seed,
                t0_convention, max_outer, tol):
    if t0_convention not in T0_CONVENTIONS:
        raise ValueError(
            f"t0_convention must be one of {T0_CONVENTIONS}: the two base "
            "value conventions disagree and one must be chosen explicitly"
        )
    if not isinstance(reg, Regularizer):
        raise TypeError("reg must be a Regularizer")
    dims = tuple(int(p) for p in dims)
    if len(dims) < 2 or any(p <= 0 for p in dims):
        raise ValueError("network dims must be positive with at least one layer")
    L = len(dims) - 1
    rho1, rho2 = _chain_rhos(chain, L)
    if n <= 0:
        raise ValueError("n must be positive")
    sigma_nu = float(sigma_nu)
    if sigma_nu < 0:
        raise ValueError("sigma_nu must be nonnegative")
    theta_star = np.asarray(theta_star, dtype=float)
    if theta_star.shape != (dims[-1],):
        raise ValueError(
            f"theta_star has shape {theta_star.shape}, expected ({dims[-1]},)"
        )

    th_norm = float(np.linalg.norm(theta_star))
    if sigma_nu == 0.0 and th_norm == 0.0:
        # no noise and no signal: zero fit, zero errors
        state = SaddleState(
            beta=0.0, q=0.0, chi=np.zeros(L), k=np.ones(L),
            xi=np.zeros(L), t=np.full(L, 1e-300), nu=np.zeros(max(L - 1, 0)),
            nu_e=0.0,
        )
        constants = CgmtConstants(
            c=np.zeros(L + 1), d=np.zeros(L + 1), cbar=np.zeros(L + 1),
            dbar=np.zeros(L + 1), a=0.0, b=0.0, a_eff=0.0,
        )
        diag = {"iterations": 0, "stationarity_residuals": {},
                "converged": True, "boundary_warnings": (),
                "value_terms": {}}
        return CgmtSolution(state=state, constants=constants, value=0.0,
                            e_hat=np.zeros(dims[-1]), gen_pred=0.0,
                            diagnostics=diag)

    rng = np.random.default_rng(seed)
    u = rng.standard_normal(dims[-1])
    # Asymptotically the fixed Gaussian direction is orthogonal to the
    # target and has norm sqrt(p_L); enforcing both exactly removes the
    # O(1/sqrt(p)) finite-size fluctuations (for ridge the prediction then
    # equals its average over the direction) and keeps the ascent variables
    # from exploiting the spurious alignment with the target.
    if th_norm > 0:
        u -= (float(u @ theta_star) / th_norm ** 2) * theta_star
    u *= math.sqrt(dims[-1]) / np.linalg.norm(u)

    core = _Saddle(dims, n, rho1, rho2, reg, sigma_nu, theta_star, u,
                   t0_convention)
    iterations = core.run(max_outer, tol)
    residuals = core.polish()
    worst = max(residuals.values()) if residuals else 0.0
    if worst > 1e-6:
        raise CgmtNonConvergence(
            f"stationarity residual {worst:.3e} above 1e-6 after polishing",
            state=core.snapshot_state(),
            diagnostics={"iterations": iterations,
                         "stationarity_residuals": residuals},
        )
    return core.assemble(iterations, residuals)


def solve_same_size(L, n, p0, p, chain, reg, sigma_nu, theta_star,
                    g_seed=0, *, t0_convention="lemma", max_outer=10000,
                    tol=1e-8):
    """Solve the saddle for a network whose hidden layers share one width.

    ``chain`` lists per-layer constants (objects with ``rho1``/``rho2``
    or tuples); ``g_seed`` seeds the fixed Gaussian direction of the
    top-level Moreau problem.  Returns a :class:`CgmtSolution`.
    """
    dims = (int(p0),) + (int(p),) * int(L)
    return _solve_core(dims, n, chain, reg, sigma_nu, theta_star, g_seed,
                       t0_convention, max_outer, tol)


def solve_general(L, n, shape, chain, reg, sigma_nu, theta_star, seed=0, *,
                  t0_convention="lemma", max_outer=10000, tol=1e-8):
    """Solve the saddle for arbitrary distinct layer widths.

    ``shape`` is a :class:`~drflab.pipeline.NetworkShape` or a plain
    tuple ``(p0, p1, ..., pL)``.  Identical widths reproduce
    :func:`solve_same_size` exactly (same core).
    """
    dims = tuple(shape.dims) if hasattr(shape, "dims") else tuple(shape)
    if len(dims) - 1 != L:
        raise ValueError(f"shape has {len(dims) - 1} layers, expected {L}")
    return _solve_core(dims, n, chain, reg, sigma_nu, theta_star, seed,
                       t0_convention, max_outer, tol)


def predicted_errors(sol, sigma_nu):
    """(train, gen) predictions from a converged solution."""
    if not sol.diagnostics.get("converged", False):
        raise ValueError("predicted_errors requires a converged solution")
    return float(sol.value), float(sol.gen_pred)


def predict_with_averaging(dims, n, chain, reg, sigma_nu, theta_star,
                           seed=0, n_draws=8, *, t0_convention="lemma",
                           max_outer=10000, tol=1e-8):
    """Average predictions over independent draws of the fixed Gaussian
    direction; returns means, spreads and the individual solutions."""
    ss = np.random.SeedSequence(seed)
    trains, gens, sols = [], [], []
    for child in ss.spawn(n_draws):
        sol = _solve_core(dims, n, chain, reg, sigma_nu, theta_star, child,
                          t0_convention, max_outer, tol)
        tr, ge = predicted_errors(sol, sigma_nu)
        trains.append(tr)
        gens.append(ge)
        sols.append(sol)
    trains = np.asarray(trains)
    gens = np.asarray(gens)
    return {
        "train_mean": float(trains.mean()),
        "train_spread": float(trains.std(ddof=1)) if n_draws > 1 else 0.0,
        "gen_mean": float(gens.mean()),
        "gen_spread": float(gens.std(ddof=1)) if n_draws > 1 else 0.0,
        "solutions": sols,
    }
