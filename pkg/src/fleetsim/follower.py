"""Communication-free consensus controller for follower modules.

Each follower integrates

    d_i' = k_c (Mg v_i' + Cg(v_i) v_i + Dg v_i - N d_i)

from its own velocity and acceleration measurement.  The bracketed motion
term equals the sum of all modules' wrenches, so the law is the classic
consensus update sum_j d_j - N d_i without anyone talking to anyone.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from .integrators import rkf45_integrate
from .structure import StructureParams
from .vessel import VesselParams, Wrench, max_force, max_torque


class LocalMeasurement(NamedTuple):
    vel: np.ndarray    # (u, v, omega) at the module
    accel: np.ndarray  # time derivative of vel


@dataclass
class FollowerState:
    d: np.ndarray
    last_update: float = 0.0

    @classmethod
    def initial(cls, t: float = 0.0) -> "FollowerState":
        return cls(np.zeros(3), t)

    @property
    def wrench(self) -> Wrench:
        return Wrench(*(float(x) for x in self.d))


def follower_rate_local(state: FollowerState, meas: LocalMeasurement, sp: StructureParams,
                        vp: VesselParams | None = None, gain: float = 1.0) -> np.ndarray:
    del vp  # module constants enter only through sp
    return gain * (sp.generalized_force(meas.vel, meas.accel) - sp.n * np.asarray(state.d))


def follower_rate_oracle(d_all: Sequence, i: int, own=None, gain: float = 1.0) -> np.ndarray:
    """Communicating consensus rate sum_j d_j - N d_i.

    ``own`` replaces d_i in the -N d_i term only (used when d_all is a
    snapshot taken at the start of a control tick).
    """
    d = np.asarray(d_all, dtype=float).reshape(-1, 3)
    di = d[i] if own is None else np.asarray(own, dtype=float)
    return gain * (d.sum(axis=0) - d.shape[0] * di)


def wrench_cap(vp: VesselParams, factor: float = 2.0) -> np.ndarray:
    """Anti-windup bound on the integrated wrench, per component."""
    return factor * np.array([max_force(vp), max_force(vp), max_torque(vp)])


def clip_wrench(d: np.ndarray, cap: np.ndarray) -> np.ndarray:
    out = np.array(d, dtype=float)
    fnorm = np.hypot(out[0], out[1])
    if fnorm > cap[0]:
        out[:2] *= cap[0] / fnorm
    out[2] = np.clip(out[2], -cap[2], cap[2])
    return out


def step_follower(state: FollowerState, meas: LocalMeasurement, dt: float,
                  sp: StructureParams, vp: VesselParams, gain: float = 1.0,
                  rtol: float = 1e-9, atol: float = 1e-12,
                  cap: np.ndarray | None = None) -> FollowerState:
    """Advance the follower's wrench over one control interval.

    The measurement is held constant over ``dt``.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    force = sp.generalized_force(meas.vel, meas.accel)
    n = sp.n

    def rate(_t, d):
        return gain * (force - n * d)

    d = rkf45_integrate(rate, state.d, state.last_update, state.last_update + dt,
                        h0=min(dt, 0.5 / (gain * n)) if gain > 0 else dt,
                        rtol=rtol, atol=atol)
    if cap is not None:
        d = clip_wrench(d, cap)
    return FollowerState(d, state.last_update + dt)


def step_follower_oracle(state: FollowerState, d_snapshot: Sequence, i: int, dt: float,
                         gain: float = 1.0, rtol: float = 1e-9, atol: float = 1e-12,
                         cap: np.ndarray | None = None) -> FollowerState:
    """Same integration as :func:`step_follower` but fed by communicated wrenches."""
    def rate(_t, d):
        return follower_rate_oracle(d_snapshot, i, own=d, gain=gain)

    n = len(d_snapshot)
    d = rkf45_integrate(rate, state.d, state.last_update, state.last_update + dt,
                        h0=min(dt, 0.5 / (gain * n)) if gain > 0 else dt,
                        rtol=rtol, atol=atol)
    if cap is not None:
        d = clip_wrench(d, cap)
    return FollowerState(d, state.last_update + dt)


def step_followers(d: np.ndarray, forces: np.ndarray, t0: float, dt: float, n: int,
                   gain: float = 1.0, rtol: float = 1e-9, atol: float = 1e-12,
                   cap: np.ndarray | None = None) -> np.ndarray:
    """Batched form of :func:`step_follower` for a stack of followers.

    ``d`` and ``forces`` are (m, 3); row i holds follower i's wrench and its
    held motion term (the Mg v' + Cg v + Dg v part, or sum_j d_j for the
    communicating law).  All rows share one adaptive RKF45 integration.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    d = np.asarray(d, dtype=float)
    forces = np.asarray(forces, dtype=float)
    if d.size == 0:
        return d.copy()

    def rate(_t, y):
        return gain * (forces - n * y)

    out = rkf45_integrate(rate, d, t0, t0 + dt,
                          h0=min(dt, 0.5 / (gain * n)) if gain > 0 else dt,
                          rtol=rtol, atol=atol)
    if cap is not None:
        out = np.array([clip_wrench(row, cap) for row in out])
    return out
