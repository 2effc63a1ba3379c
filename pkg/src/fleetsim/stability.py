"""Small-signal stability of the follower/plant loop.

While the structure yaws, every follower senses its own point velocity and
acceleration and pushes along them.  The antisymmetric part of those pushes
forms a couple, so the followers feed yaw back into yaw.  Two quasi-static
coupling coefficients summarise the effect:

    P_a = m22 Σ r_x² ∓ m11 Σ r_y²          (competes with Mg33)
    P_v = Dg22 Σ r_x² ∓ Dg11 Σ r_y²        (competes with Dg33)

with the sign set by the local-velocity convention.  The definitive check is
the spectral radius of the sampled loop linearised about straight cruise, computed here
by central differences of one noiseless control tick.
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np

from .structure import StructureConfig, StructureParams, total_wrench
from .vessel import VesselParams


class YawCoupling(NamedTuple):
    accel: float     # P_a, kg·m²
    inertia: float   # Mg33
    drag_like: float  # P_v, N·m·s
    drag: float      # Dg33


def yaw_coupling(vp: VesselParams, cfg: StructureConfig) -> YawCoupling:
    sp = StructureParams.from_config(vp, cfg)
    r = cfg.offsets_array
    sx, sy = float(np.sum(r[:, 0] ** 2)), float(np.sum(r[:, 1] ** 2))
    sign = -1.0 if cfg.velocity_convention == "additive" else 1.0
    return YawCoupling(
        accel=vp.m22 * sx + sign * vp.m11 * sy,
        inertia=float(sp.mass[2]),
        drag_like=float(sp.drag[1] * sx + sign * sp.drag[0] * sy),
        drag=float(sp.drag[2]),
    )


def tick_jacobian(vp: VesselParams, cfg: StructureConfig, surge: float = 0.0,
                  follower_gain: float = 1.0, control_dt: float = 0.1,
                  eps: float = 1e-6) -> np.ndarray:
    """Jacobian of one control tick w.r.t. (center velocity, follower wrenches).

    Linearised about straight cruise at ``surge`` m/s with every robot sharing
    the trimming wrench.  The stored acceleration is the one produced by the
    perturbed wrenches, as it would be after a real tick.  Pose is left out
    because the loop does not depend on where the structure is.
    """
    from .sim import ScheduledWrenchLeader, SimClock, Simulation

    sp = StructureParams.from_config(vp, cfg)
    ids = [i for i in range(cfg.n) if i != cfg.leader_index]
    v0 = np.array([surge, 0.0, 0.0])
    d0 = sp.generalized_force(v0, np.zeros(3)) / cfg.n

    def tick(x):
        sim = Simulation(vp, cfg, ScheduledWrenchLeader(lambda t: tuple(d0)),
                         clock=SimClock(control_dt=control_dt), follower_gain=follower_gain,
                         anti_windup=None)
        w = sim.world
        w.vel = v0 + x[:3]
        d = d0 + x[3:].reshape(-1, 3)
        w.realized[cfg.leader_index] = d0
        for k, i in enumerate(ids):
            w.followers[i].d = d[k].copy()
            w.realized[i] = d[k]
        w.acc = sim.sp.acceleration(w.vel, total_wrench(w.realized, cfg))
        sim.step_world()
        w = sim.world
        return np.concatenate([w.vel - v0] + [w.followers[i].d - d0 for i in ids])

    m = 3 + 3 * len(ids)
    jac = np.empty((m, m))
    for j in range(m):
        e = np.zeros(m)
        e[j] = eps
        jac[:, j] = (tick(e) - tick(-e)) / (2 * eps)
    return jac


def spectral_radius(vp: VesselParams, cfg: StructureConfig, **kw) -> float:
    """Largest eigenvalue modulus of the linearised tick map (< 1 is stable)."""
    return float(np.max(np.abs(np.linalg.eigvals(tick_jacobian(vp, cfg, **kw)))))
