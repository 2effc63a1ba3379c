"""Projected Newton solver for convex QPs with simple bounds.

    minimize 0.5 zᵀHz + gᵀz   subject to  lb <= z <= ub

H must be symmetric positive definite.  Follows Bertsekas' projected Newton
method: variables that sit on a bound with the gradient pushing outward are
frozen, a Newton step is taken on the rest, and an Armijo search runs along
the projection arc.
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np
from scipy.linalg import cho_factor, cho_solve


class BoxQPResult(NamedTuple):
    z: np.ndarray
    iterations: int
    residual: float
    converged: bool


def projected_gradient(z, grad, lb, ub) -> np.ndarray:
    return z - np.clip(z - grad, lb, ub)


def solve_box_qp(H, g, lb, ub, z0=None, tol: float = 1e-10, max_iter: int = 100) -> BoxQPResult:
    H = np.asarray(H, dtype=float)
    g = np.asarray(g, dtype=float)
    lb = np.asarray(lb, dtype=float)
    ub = np.asarray(ub, dtype=float)
    z = np.clip(np.zeros_like(g) if z0 is None else np.asarray(z0, dtype=float), lb, ub)

    def objective(x):
        return 0.5 * x @ H @ x + g @ x

    f = objective(z)
    grad = H @ z + g
    scale = max(1.0, float(np.max(np.abs(g), initial=0.0)))
    res = float(np.max(np.abs(projected_gradient(z, grad, lb, ub)), initial=0.0))
    for it in range(1, max_iter + 1):
        if res <= tol * scale:
            return BoxQPResult(z, it - 1, res, True)
        pg = projected_gradient(z, grad, lb, ub)
        eps = min(1e-8, float(np.linalg.norm(pg)))
        binding = ((z <= lb + eps) & (grad > 0)) | ((z >= ub - eps) & (grad < 0))
        free = ~binding
        step = np.zeros_like(z)
        if free.any():
            Hff = H[np.ix_(free, free)]
            step[free] = -cho_solve(cho_factor(Hff), grad[free])
        if not binding.all() and grad @ step >= 0:
            step = -grad
        alpha = 1.0
        while True:
            z_new = np.clip(z + alpha * step, lb, ub)
            decrease = -(grad @ (z_new - z))
            f_new = objective(z_new)
            if f_new <= f - 1e-4 * decrease or alpha < 1e-12:
                break
            alpha *= 0.5
        if alpha < 1e-12 and f_new > f:
            # fall back to a projected gradient step with exact curvature
            d = -pg
            curv = d @ H @ d
            t = 1.0 if curv <= 0 else min(1.0, -(grad @ d) / curv)
            z_new = np.clip(z + t * d, lb, ub)
            f_new = objective(z_new)
        z, f = z_new, f_new
        grad = H @ z + g
        res = float(np.max(np.abs(projected_gradient(z, grad, lb, ub)), initial=0.0))
    return BoxQPResult(z, max_iter, res, res <= tol * scale)
