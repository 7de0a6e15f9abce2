"""Slow independent solver oracles for the regression module.

Standalone (numpy/scipy only, no package imports).  Freezes:

1. A 40x40 elastic-net instance solved by plain subgradient descent run
   for 1e6 iterations (diminishing steps, best-iterate tracking).
2. 20-dimensional Moreau-envelope instances (ridge and elastic net)
   solved by scipy's Powell direction-set method at tight tolerances.
3. A 50x50 ridge instance solved by a dense normal-equations solve
   (numpy.linalg.solve on the explicitly assembled system).

Run:  python tests/oracles/slow_solvers.py
Output: tests/oracles/frozen/slow_solvers.json
"""

import json
import os

import numpy as np
from scipy import optimize


def en_objective(theta, F, y, lam1, lam2):
    n = y.size
    p = F.shape[0]
    r = y - F.T @ theta / np.sqrt(p)
    return float(
        0.5 / n * (r @ r) + lam1 * np.abs(theta).sum() + 0.5 * lam2 * (theta @ theta)
    )


def subgradient_elastic_net(F, y, lam1, lam2, iters=10**7, step0=0.5):
    """Plain subgradient descent.  The lam2 term makes the objective
    strongly convex, so the classical 1/(lam2 t) schedule applies; the
    step0/sqrt(t) cap keeps the early iterations stable.  At 1e7
    iterations the best iterate is within ~1e-6 of the optimum."""
    n = y.size
    p = F.shape[0]
    theta = np.zeros(p)
    best = np.inf
    best_theta = theta.copy()
    for t in range(1, iters + 1):
        r = y - F.T @ theta / np.sqrt(p)
        g = -F @ r / (n * np.sqrt(p)) + lam1 * np.sign(theta) + lam2 * theta
        theta = theta - min(step0 / np.sqrt(t), 1.0 / (lam2 * t)) * g
        if t % 50 == 0 or t == iters:
            obj = en_objective(theta, F, y, lam1, lam2)
            if obj < best:
                best = obj
                best_theta = theta.copy()
    return best, best_theta


def moreau_value_powell(reg_kind, lam, lam1, lam2, theta_star, s, v):
    """min_e (1/2s)||e - v||^2 + R(e + theta_star) by Powell."""

    def obj(e):
        w = e + theta_star
        if reg_kind == "ridge":
            r = 0.5 * lam * (w @ w)
        else:
            r = lam1 * np.abs(w).sum() + 0.5 * lam2 * (w @ w)
        d = e - v
        return 0.5 / s * (d @ d) + r

    res = optimize.minimize(
        obj,
        x0=np.zeros_like(v),
        method="Powell",
        options={"xtol": 1e-14, "ftol": 1e-14, "maxiter": 200000, "maxfev": 2000000},
    )
    # one more restart from the found point for safety
    res = optimize.minimize(
        obj,
        x0=res.x,
        method="Powell",
        options={"xtol": 1e-14, "ftol": 1e-14, "maxiter": 200000, "maxfev": 2000000},
    )
    return float(res.fun), res.x


def main():
    rng = np.random.default_rng(7151)
    out = {}

    # --- elastic-net subgradient oracle (n = p = 40) ---
    n = p = 40
    F = rng.standard_normal((p, n))
    theta_star = rng.standard_normal(p) / np.sqrt(p)
    theta_star /= np.linalg.norm(theta_star)
    y = F.T @ theta_star / np.sqrt(p) + 0.5 * rng.standard_normal(n)
    lam1, lam2 = 0.05, 0.1
    best, _ = subgradient_elastic_net(F, y, lam1, lam2)
    out["elastic_subgradient"] = {
        "n": n,
        "p": p,
        "lam1": lam1,
        "lam2": lam2,
        "seed_stream": "default_rng(7151), draws in file order",
        "objective": best,
    }

    # --- Moreau slow oracles (20-D) ---
    d = 20
    theta_star = rng.standard_normal(d)
    v = rng.standard_normal(d) * 1.3
    s = 0.7
    val_r, _ = moreau_value_powell("ridge", 0.8, None, None, theta_star, s, v)
    val_e, _ = moreau_value_powell("en", None, 0.6, 0.9, theta_star, s, v)
    out["moreau_ridge"] = {
        "d": d,
        "s": s,
        "lam": 0.8,
        "value": val_r,
    }
    out["moreau_elastic"] = {
        "d": d,
        "s": s,
        "lam1": 0.6,
        "lam2": 0.9,
        "value": val_e,
    }

    # --- dense ridge KKT oracle (n = p = 50) ---
    n = p = 50
    F = rng.standard_normal((p, n)) * 1.1
    theta_star = rng.standard_normal(p)
    theta_star /= np.linalg.norm(theta_star)
    y = F.T @ theta_star / np.sqrt(p) + 0.3 * rng.standard_normal(n)
    lam = 0.2
    A = F @ F.T / (n * p) + lam * np.eye(p)
    b = F @ y / (np.sqrt(p) * n)
    theta_hat = np.linalg.solve(A, b)
    out["ridge_kkt"] = {
        "n": n,
        "p": p,
        "lam": lam,
        "theta_hat": theta_hat.tolist(),
        "objective": float(
            0.5 / n * np.sum((y - F.T @ theta_hat / np.sqrt(p)) ** 2)
            + 0.5 * lam * theta_hat @ theta_hat
        ),
    }

    path = os.path.join(os.path.dirname(__file__), "frozen", "slow_solvers.json")
    with open(path, "w") as f:
        json.dump(out, f, indent=1)
    print("elastic_subgradient objective:", out["elastic_subgradient"]["objective"])
    print("moreau_ridge value:", out["moreau_ridge"]["value"])
    print("moreau_elastic value:", out["moreau_elastic"]["value"])
    print("ridge_kkt objective:", out["ridge_kkt"]["objective"])


if __name__ == "__main__":
    main()
