"""Small linear-algebra helpers shared across modules."""

import numpy as np


def operator_norm(A, rel_tol=1e-8, max_iter=2000, seed=0):
    """Largest singular value of a dense matrix via power iteration on A A^T.

    Deterministic given ``seed``.  Falls back to the full SVD for tiny
    matrices where the iteration overhead is not worth it.
    """
    A = np.asarray(A)
    if min(A.shape) <= 32:
        return float(np.linalg.norm(A, 2))
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(A.shape[1])
    v /= np.linalg.norm(v)
    s_prev = 0.0
    for _ in range(max_iter):
        u = A @ v
        v = A.T @ u
        nv = np.linalg.norm(v)
        if nv == 0.0:
            return 0.0
        v /= nv
        s = np.sqrt(nv)
        if abs(s - s_prev) <= rel_tol * max(s, 1e-30):
            return float(s)
        s_prev = s
    return float(s_prev)


def sym_operator_norm(S, rel_tol=1e-8, max_iter=2000, seed=0):
    """Largest |eigenvalue| of a symmetric matrix via power iteration."""
    S = np.asarray(S)
    if S.shape[0] <= 32:
        return float(np.max(np.abs(np.linalg.eigvalsh(S))))
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(S.shape[0])
    v /= np.linalg.norm(v)
    lam_prev = 0.0
    for _ in range(max_iter):
        w = S @ v
        lam = float(np.linalg.norm(w))
        if lam == 0.0:
            return 0.0
        v = w / lam
        if abs(lam - lam_prev) <= rel_tol * max(lam, 1e-30):
            return lam
        lam_prev = lam
    return float(lam_prev)
