"""Runge-Kutta-Fehlberg 4(5) and two-stage Gauss-Legendre integrators."""

from __future__ import annotations

import math
from typing import Callable, NamedTuple

import numpy as np

RateFn = Callable[[float, np.ndarray], np.ndarray]


class IntegrationError(RuntimeError):
    pass


# Fehlberg 4(5) tableau
_C = np.array([0.0, 1 / 4, 3 / 8, 12 / 13, 1.0, 1 / 2])
_A = (
    (),
    (1 / 4,),
    (3 / 32, 9 / 32),
    (1932 / 2197, -7200 / 2197, 7296 / 2197),
    (439 / 216, -8.0, 3680 / 513, -845 / 4104),
    (-8 / 27, 2.0, -3544 / 2565, 1859 / 4104, -11 / 40),
)
_B4 = np.array([25 / 216, 0.0, 1408 / 2565, 2197 / 4104, -1 / 5, 0.0])
_B5 = np.array([16 / 135, 0.0, 6656 / 12825, 28561 / 56430, -9 / 50, 2 / 55])

MAX_REJECTIONS = 20


class StepResult(NamedTuple):
    y: np.ndarray
    h_used: float
    h_next: float
    error: float


def _checked(f: RateFn, t: float, y: np.ndarray) -> np.ndarray:
    k = np.asarray(f(t, y), dtype=float)
    if not np.all(np.isfinite(k)):
        raise IntegrationError(f"non-finite rate at t={t}")
    return k


def _fehlberg_stages(f, t, y, h):
    k = np.empty((6,) + y.shape)
    for s in range(6):
        yi = y.copy()
        for j, a in enumerate(_A[s]):
            yi += h * a * k[j]
        k[s] = _checked(f, t + _C[s] * h, yi)
    return k


def rkf45_step(f: RateFn, y, t: float, h: float, rtol: float = 1e-8,
               atol: float = 1e-10) -> StepResult:
    """One accepted RKF45 step starting with trial size ``h``.

    Propagates the fourth-order solution; the fifth-order one only feeds the
    error estimate.  A rejected step is halved and retried.
    """
    y = np.asarray(y, dtype=float)
    for _ in range(MAX_REJECTIONS + 1):
        if t + h == t:
            raise IntegrationError(f"step size underflow at t={t}")
        k = _fehlberg_stages(f, t, y, h)
        y4 = y + h * np.tensordot(_B4, k, axes=1)
        y5 = y + h * np.tensordot(_B5, k, axes=1)
        scale = atol + rtol * np.maximum(np.abs(y), np.abs(y4))
        err = float(np.max(np.abs(y5 - y4) / scale)) if y.size else 0.0
        if err <= 1.0:
            grow = 5.0 if err == 0.0 else min(5.0, max(0.2, 0.9 * err ** -0.2))
            return StepResult(y4, h, h * grow, float(np.max(np.abs(y5 - y4), initial=0.0)))
        h *= 0.5
    raise IntegrationError(f"more than {MAX_REJECTIONS} rejected steps at t={t}")


def rkf45_integrate(f: RateFn, y0, t0: float, t1: float, h0: float | None = None,
                    rtol: float = 1e-8, atol: float = 1e-10) -> np.ndarray:
    """Adaptive RKF45 from t0 to t1, landing exactly on t1."""
    y = np.asarray(y0, dtype=float)
    t = t0
    h = h0 if h0 is not None else (t1 - t0)
    while t < t1:
        h = min(h, t1 - t)
        res = rkf45_step(f, y, t, h, rtol, atol)
        t = t1 if res.h_used == t1 - t else t + res.h_used
        y, h = res.y, res.h_next
    return y


# Two-stage Gauss-Legendre (order 4)
_S3 = math.sqrt(3.0)
GL_A = np.array([[1 / 4, 1 / 4 - _S3 / 6], [1 / 4 + _S3 / 6, 1 / 4]])
GL_B = np.array([1 / 2, 1 / 2])
GL_C = np.array([1 / 2 - _S3 / 6, 1 / 2 + _S3 / 6])


def gauss_legendre_step(f: RateFn, y, t: float, h: float, tol: float = 1e-10,
                        max_iter: int = 50) -> np.ndarray:
    """Implicit midpoint-type GL2 step; stage slopes by fixed-point iteration."""
    y = np.asarray(y, dtype=float)
    k0 = _checked(f, t, y)
    k = np.stack([k0, k0])
    for _ in range(max_iter):
        k_new = np.stack([
            _checked(f, t + GL_C[i] * h, y + h * (GL_A[i, 0] * k[0] + GL_A[i, 1] * k[1]))
            for i in range(2)
        ])
        delta = h * float(np.max(np.abs(k_new - k)))
        k = k_new
        if delta <= tol:
            return y + h * (GL_B[0] * k[0] + GL_B[1] * k[1])
    raise IntegrationError(f"Gauss-Legendre fixed point did not converge at t={t}")
