"""Restarted Lanczos for the lowest eigenpair of a real symmetric operator."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

__all__ = ["LanczosResult", "lowest_eigenpair"]


@dataclass
class LanczosResult:
    value: float
    vector: np.ndarray
    residual: float
    iterations: int
    converged: bool


def lowest_eigenpair(matvec, v0: np.ndarray, tol: float = 1e-12, krylov_dim: int = 40,
                     max_restarts: int = 50, value_tol: float | None = None) -> LanczosResult:
    """Lowest eigenpair by Lanczos with full reorthogonalization.

    Converged when ``||A v - theta v|| <= tol * max(1, |theta|)``, or, if
    ``value_tol`` is given, when the lowest Ritz value moves by less than
    ``value_tol * max(1, |theta|)`` in one Krylov step. After each block of
    ``krylov_dim`` steps the iteration restarts from the current Ritz vector.
    ``matvec`` maps a flat vector to a flat vector.
    """
    n = v0.size
    v = np.asarray(v0, dtype=float).ravel().copy()
    nrm = np.linalg.norm(v)
    if nrm == 0.0:
        raise ValueError("start vector is zero")
    v /= nrm
    if n == 1:
        w = matvec(v)
        return LanczosResult(float(w[0] / v[0]), v, 0.0, 1, True)

    k = min(krylov_dim, n)
    total = 0
    theta, resid = np.inf, np.inf
    for _ in range(max_restarts + 1):
        V = np.empty((k, n))
        alpha = np.empty(k)
        beta = np.empty(k)
        V[0] = v
        m = k
        settled = False
        prev = np.inf
        for j in range(k):
            w = matvec(V[j])
            total += 1
            alpha[j] = V[j] @ w
            # two passes of classical Gram-Schmidt against the whole basis
            w -= V[: j + 1].T @ (V[: j + 1] @ w)
            w -= V[: j + 1].T @ (V[: j + 1] @ w)
            beta[j] = np.linalg.norm(w)
            evals, evecs = sla.eigh_tridiagonal(alpha[: j + 1], beta[:j], select="i", select_range=(0, 0))
            theta = evals[0]
            est = beta[j] * abs(evecs[-1, 0])
            scale = max(1.0, abs(theta))
            settled = value_tol is not None and abs(prev - theta) <= value_tol * scale
            prev = theta
            if est <= tol * scale or settled or beta[j] <= 1e-14 * scale or j == k - 1:
                m = j + 1
                break
            V[j + 1] = w / beta[j]
        evals, evecs = sla.eigh_tridiagonal(alpha[:m], beta[: m - 1], select="i", select_range=(0, 0))
        theta = float(evals[0])
        v = evecs[:, 0] @ V[:m]
        v /= np.linalg.norm(v)
        if settled:
            est = beta[m - 1] * abs(evecs[-1, 0])
            return LanczosResult(theta, v, float(est), total, True)
        r = matvec(v) - theta * v
        total += 1
        resid = float(np.linalg.norm(r))
        if resid <= tol * max(1.0, abs(theta)):
            return LanczosResult(theta, v, resid, total, True)
        if m < k and beta[m - 1] <= 1e-14 * max(1.0, abs(theta)):
            # invariant subspace: Ritz pair is exact up to rounding
            return LanczosResult(theta, v, resid, total, resid <= 1e-10 * max(1.0, abs(theta)))
    return LanczosResult(theta, v, resid, total, False)
