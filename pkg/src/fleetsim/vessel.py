"""Planar surface-vessel model: kinematics, hydrodynamics and thruster allocation.

Frame convention (used everywhere in the package): world frame is z-up,
heading ``psi`` is measured counter-clockwise from the world x axis and is
kept in (-pi, pi].  Body velocity is (surge u, sway v, yaw rate omega).
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import NamedTuple

import numpy as np


class Pose(NamedTuple):
    x: float
    y: float
    psi: float


class BodyVelocity(NamedTuple):
    u: float
    v: float
    omega: float


class Wrench(NamedTuple):
    fx: float
    fy: float
    tau: float


class ThrusterCommand(NamedTuple):
    """Propeller forces: left, right, anterior, rear."""

    f1: float
    f2: float
    f3: float
    f4: float


@dataclass(frozen=True)
class VesselParams:
    """Hydrodynamic and geometric constants of one module.

    ``a`` is the vessel length (spacing of the transverse propellers),
    ``b`` the width (spacing of the longitudinal propellers).
    """

    m11: float
    m22: float
    m33: float
    Xu: float
    Yv: float
    Nw: float
    a: float
    b: float
    f_min: float
    f_max: float

    def __post_init__(self):
        if min(self.m11, self.m22, self.m33) <= 0:
            raise ValueError("mass matrix diagonal must be positive")
        if min(self.Xu, self.Yv, self.Nw) < 0:
            raise ValueError("drag coefficients must be non-negative")
        if self.a <= 0 or self.b <= 0:
            raise ValueError("vessel dimensions a, b must be positive")
        if not self.f_min < 0 < self.f_max:
            raise ValueError("thruster limits must satisfy f_min < 0 < f_max")

    @property
    def mass(self) -> np.ndarray:
        return np.array([self.m11, self.m22, self.m33])

    @property
    def drag(self) -> np.ndarray:
        return np.array([self.Xu, self.Yv, self.Nw])

    def to_dict(self) -> dict:
        return asdict(self)


# Placeholder hydrodynamics for a 15 kg, 0.90 x 0.45 m module.  The mass and
# drag diagonals are NOT identified values; override them per scenario.
# They are chosen for loop stability rather than hull realism.  Followers push
# with the force they sense at their own point, so a yawing grid feeds
# m22·Σr_x² - m11·Σr_y² of yaw inertia (and the matching drag term) back into
# itself.  With r_x spacing a = 2b that needs m11 well above m22 and Xu above
# Yv; m33 and Nw then keep the small layouts damped (see fleetsim.stability).
DEFAULT_PARAMS = VesselParams(
    m11=30.0, m22=6.0, m33=100.0,
    Xu=8.0, Yv=2.0, Nw=10.0,
    a=0.90, b=0.45,
    f_min=-6.0, f_max=6.0,
)


def wrap_angle(angle):
    """Wrap to (-pi, pi]."""
    return np.pi - np.mod(np.pi - angle, 2.0 * np.pi)


def angle_diff(a, b):
    """Shortest signed angular distance a - b."""
    return wrap_angle(np.asarray(a) - np.asarray(b))


def rotation(psi: float) -> np.ndarray:
    c, s = math.cos(psi), math.sin(psi)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def kinematics(pose, vel) -> np.ndarray:
    """World-frame pose rate (dx/dt, dy/dt, dpsi/dt) from body velocity."""
    psi = pose[2]
    u, v, omega = vel
    c, s = math.cos(psi), math.sin(psi)
    return np.array([u * c - v * s, u * s + v * c, omega])


def coriolis_matrix(vel, params: VesselParams) -> np.ndarray:
    u, v, _ = vel
    m11, m22 = params.m11, params.m22
    return np.array([
        [0.0, 0.0, -m22 * v],
        [0.0, 0.0, m11 * u],
        [m22 * v, -m11 * u, 0.0],
    ])


def coriolis_vector(vel, m11: float, m22: float) -> np.ndarray:
    """C(v) v without forming the matrix (hot path of the integrators)."""
    u, v, w = vel
    return np.array([-m22 * v * w, m11 * u * w, (m22 - m11) * u * v])


def vessel_acceleration(vel, cmd_wrench, params: VesselParams) -> np.ndarray:
    """Body acceleration M^-1 (d - (C(v) + D) v)."""
    vel = np.asarray(vel, dtype=float)
    rhs = (np.asarray(cmd_wrench, dtype=float)
           - coriolis_vector(vel, params.m11, params.m22)
           - params.drag * vel)
    return rhs / params.mass


def allocation_matrix(params: VesselParams) -> np.ndarray:
    ha, hb = params.a / 2.0, params.b / 2.0
    return np.array([
        [1.0, 1.0, 0.0, 0.0],
        [0.0, 0.0, 1.0, 1.0],
        [ha, -ha, hb, -hb],
    ])


def allocate_wrench(cmd, params: VesselParams) -> Wrench:
    f1, f2, f3, f4 = cmd
    return Wrench(
        f1 + f2,
        f3 + f4,
        params.a / 2.0 * (f1 - f2) + params.b / 2.0 * (f3 - f4),
    )


class Allocation(NamedTuple):
    command: ThrusterCommand
    saturated: bool


def wrench_to_thrusters(w, params: VesselParams) -> Allocation:
    """Minimum-norm thruster forces for a wrench, clamped to the thruster box.

    B has full row rank, so the pseudo-inverse Bᵀ(BBᵀ)⁻¹ is closed form: the
    force rows decouple and only the torque row mixes the two pairs.
    """
    fx, fy, tau = w
    a, b = params.a, params.b
    # BBᵀ = [[2, 0, 0], [0, 2, 0], [0, 0, (a² + b²)/2]]
    k = 2.0 * tau / (a * a + b * b)
    f = np.array([
        fx / 2.0 + k * a / 2.0,
        fx / 2.0 - k * a / 2.0,
        fy / 2.0 + k * b / 2.0,
        fy / 2.0 - k * b / 2.0,
    ])
    clipped = np.clip(f, params.f_min, params.f_max)
    saturated = bool(np.any(clipped != f))
    return Allocation(ThrusterCommand(*(float(x) for x in clipped)), saturated)


def realize_wrench(w, params: VesselParams) -> tuple[Wrench, bool]:
    """Wrench actually produced after allocation and clamping."""
    cmd, saturated = wrench_to_thrusters(w, params)
    return allocate_wrench(cmd, params), saturated


def max_force(params: VesselParams) -> float:
    pair = 2.0 * max(params.f_max, -params.f_min)
    return math.hypot(pair, pair)


def max_torque(params: VesselParams) -> float:
    return (params.a / 2.0 + params.b / 2.0) * (params.f_max - params.f_min)
