"""Label synthesis and regularized square-loss regression on feature sets.

The readout is y_hat(x) = theta' x / sqrt(p) at the final layer, so the
ERM objective is

    (1/2n) ||y - F'theta/sqrt(p)||^2 + R(theta)

with R either ridge (lam/2)||theta||^2 or elastic net
lam1 ||theta||_1 + (lam2/2)||theta||^2.  Generalization error for the
surrogate model is available in closed form given the layer covariance:
E_gen = sigma_nu^2 + e'Re/p with e = theta_hat - theta_star.
"""

from dataclasses import dataclass, replace

import numpy as np

from ._linalg import operator_norm
from .pipeline import CovarianceMatrix, FeatureSet

__all__ = [
    "LabelModel",
    "Regularizer",
    "RegressionProblem",
    "FitResult",
    "default_label_model",
    "synthesize_labels",
    "fit_ridge",
    "fit_elastic_net",
    "training_error",
    "generalization_error_empirical",
    "generalization_error_analytic",
]


@dataclass(frozen=True)
class LabelModel:
    theta_star: np.ndarray
    sigma_nu: float
    seed: int

    def __post_init__(self):
        if self.sigma_nu < 0:
            raise ValueError("sigma_nu must be >= 0")
        if not np.all(np.isfinite(self.theta_star)):
            raise ValueError("theta_star must be finite")


@dataclass(frozen=True)
class Regularizer:
    """ridge(lam) or elastic_net(lam1, lam2)."""

    kind: str
    lam: float = 0.0
    lam1: float = 0.0
    lam2: float = 0.0

    @staticmethod
    def ridge(lam):
        if lam <= 0:
            raise ValueError("ridge lam must be > 0")
        return Regularizer(kind="ridge", lam=float(lam))

    @staticmethod
    def elastic_net(lam1, lam2):
        if lam1 < 0:
            raise ValueError("elastic net lam1 must be >= 0")
        if lam2 <= 0:
            raise ValueError("elastic net lam2 must be > 0 (strong convexity)")
        return Regularizer(kind="elastic_net", lam1=float(lam1), lam2=float(lam2))

    def penalty(self, theta):
        if self.kind == "ridge":
            return 0.5 * self.lam * float(theta @ theta)
        return self.lam1 * float(np.abs(theta).sum()) + 0.5 * self.lam2 * float(
            theta @ theta
        )

    def prox(self, u, s):
        """argmin_x (1/2s)||x - u||^2 + R(x), coordinate-separable."""
        if self.kind == "ridge":
            return u / (1.0 + s * self.lam)
        return np.sign(u) * np.maximum(np.abs(u) - s * self.lam1, 0.0) / (
            1.0 + s * self.lam2
        )

    @property
    def quad_weight(self):
        return self.lam if self.kind == "ridge" else self.lam2


@dataclass(frozen=True)
class RegressionProblem:
    features: FeatureSet
    labels: np.ndarray
    model: LabelModel
    reg: Regularizer

    def __post_init__(self):
        if len(self.labels) != self.features.n:
            raise ValueError(
                f"{len(self.labels)} labels for {self.features.n} samples"
            )


@dataclass(frozen=True)
class FitResult:
    theta_hat: np.ndarray
    e_hat: np.ndarray
    train_error: float  # full ERM objective
    train_loss: float  # loss term only
    iterations: int
    converged: bool
    residual: float
    gen_error: float = None


def default_label_model(p, sigma_nu, seed):
    """theta_star ~ N(0, I/p) rescaled to unit norm."""
    rng = np.random.default_rng(seed)
    th = rng.standard_normal(p) / np.sqrt(p)
    th /= np.linalg.norm(th)
    return LabelModel(theta_star=th, sigma_nu=float(sigma_nu), seed=int(seed))


def synthesize_labels(features, model, substream=0):
    """y = F'theta_star/sqrt(p) + nu, nu iid N(0, sigma_nu^2).

    Different ``substream`` values give independent noise draws from the
    same model seed (use 0 for training labels, 1 for test labels).
    """
    F = features.data
    p = F.shape[0]
    if len(model.theta_star) != p:
        raise ValueError(
            f"theta_star length {len(model.theta_star)} != feature dim {p}"
        )
    y = F.T @ model.theta_star / np.sqrt(p)
    if model.sigma_nu > 0:
        rng = np.random.default_rng(
            np.random.SeedSequence(entropy=model.seed, spawn_key=(substream,))
        )
        y = y + model.sigma_nu * rng.standard_normal(len(y))
    return y


def training_error(problem, theta_hat):
    """Full objective at theta_hat (loss + penalty)."""
    F = problem.features.data
    p, n = F.shape
    r = problem.labels - F.T @ theta_hat / np.sqrt(p)
    return 0.5 / n * float(r @ r) + problem.reg.penalty(theta_hat)


def _loss_only(problem, theta_hat):
    F = problem.features.data
    p, n = F.shape
    r = problem.labels - F.T @ theta_hat / np.sqrt(p)
    return 0.5 / n * float(r @ r)


def fit_ridge(problem):
    """Closed-form ridge solve of the normal equations
    (FF'/(n p) + lam I) theta = F y / (sqrt(p) n)."""
    if problem.reg.kind != "ridge":
        raise ValueError("fit_ridge requires a ridge regularizer")
    F = problem.features.data
    y = problem.labels
    p, n = F.shape
    lam = problem.reg.lam
    b = F @ y / (np.sqrt(p) * n)
    if p <= n:
        A = F @ F.T / (n * p) + lam * np.eye(p)
        theta = np.linalg.solve(A, b)
        res = np.linalg.norm(A @ theta - b)
    else:
        # dual (Woodbury) solve, cheaper when p > n
        K = F.T @ F / (n * p) + lam * np.eye(n)
        alpha = np.linalg.solve(K, y)
        theta = F @ alpha / (np.sqrt(p) * n)
        res = np.linalg.norm(
            F @ (F.T @ theta) / (n * p) + lam * theta - b
        )
    rel = res / max(np.linalg.norm(b), 1e-30)
    if not np.isfinite(rel):
        raise FloatingPointError("ridge normal equations produced non-finite values")
    e = theta - problem.model.theta_star
    return FitResult(
        theta_hat=theta,
        e_hat=e,
        train_error=training_error(problem, theta),
        train_loss=_loss_only(problem, theta),
        iterations=0,
        converged=True,
        residual=float(rel),
    )


def fit_elastic_net(problem, tol=1e-8, max_iter=100000):
    """Accelerated proximal gradient (monotone, with restart).

    Convergence criterion: ||theta - prox_s(theta - s grad)|| <= tol (1 + ||theta||)
    at step s = 1/Lipschitz.
    """
    if tol <= 0:
        raise ValueError("tol must be > 0")
    reg = problem.reg
    if reg.kind == "ridge":
        reg = Regularizer.elastic_net(0.0, reg.lam)
    F = problem.features.data
    y = problem.labels
    p, n = F.shape
    sp = np.sqrt(p)
    # step against the loss Lipschitz constant; lam2 is handled by the prox
    s = (n * p) / operator_norm(F) ** 2

    def grad(th):
        return -F @ (y - F.T @ th / sp) / (n * sp)

    def objective(th):
        r = y - F.T @ th / sp
        return 0.5 / n * float(r @ r) + reg.penalty(th)

    theta = np.zeros(p)
    z = theta.copy()
    tk = 1.0
    obj = objective(theta)
    it = 0
    for it in range(1, max_iter + 1):
        cand = reg.prox(z - s * grad(z), s)
        obj_cand = objective(cand)
        if obj_cand > obj + 1e-15 * abs(obj):
            # momentum overshoot: restart and take a plain descent step
            cand = reg.prox(theta - s * grad(theta), s)
            obj_cand = objective(cand)
            tk = 1.0
            z = cand.copy()
        else:
            tk_next = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * tk * tk))
            z = cand + (tk - 1.0) / tk_next * (cand - theta)
            tk = tk_next
        theta, obj = cand, obj_cand
        if it % 5 == 0 or it < 10:
            res = np.linalg.norm(theta - reg.prox(theta - s * grad(theta), s))
            if res <= tol * (1.0 + np.linalg.norm(theta)):
                break
    res = float(np.linalg.norm(theta - reg.prox(theta - s * grad(theta), s)))
    converged = res <= tol * (1.0 + np.linalg.norm(theta))
    e = theta - problem.model.theta_star
    return FitResult(
        theta_hat=theta,
        e_hat=e,
        train_error=training_error(problem, theta),
        train_loss=_loss_only(problem, theta),
        iterations=it,
        converged=bool(converged),
        residual=res,
    )


def generalization_error_empirical(theta_hat, test_features, model,
                                   substream=1):
    """Mean squared prediction error on fresh samples, with standard error."""
    m = test_features.n
    if m == 0:
        raise ValueError("empty test set")
    y_test = synthesize_labels(test_features, model, substream=substream)
    F = test_features.data
    p = F.shape[0]
    errs = (y_test - F.T @ theta_hat / np.sqrt(p)) ** 2
    se = errs.std(ddof=1) / np.sqrt(m) if m > 1 else 0.0
    return float(errs.mean()), float(se)


def generalization_error_analytic(e_hat, R, sigma_nu):
    """sigma_nu^2 + e'Re/p for the surrogate covariance R."""
    M = R.matrix if isinstance(R, CovarianceMatrix) else np.asarray(R)
    if M.shape[0] != len(e_hat):
        raise ValueError(f"covariance is {M.shape[0]}x{M.shape[0]}, e is {len(e_hat)}")
    return float(sigma_nu**2 + e_hat @ (M @ e_hat) / len(e_hat))


def with_gen_error(fit, R, sigma_nu):
    """Return a copy of fit with the analytic generalization error filled in."""
    return replace(fit, gen_error=generalization_error_analytic(fit.e_hat, R, sigma_nu))
