"""Rigid l x w structure of connected modules.

Offsets ``r_i`` are module centres of mass expressed in the structure frame,
whose origin is the centroid of the l x w grid.  The grid pitch is the
module size (a along x, b along y).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from .vessel import VesselParams, Wrench, coriolis_matrix, coriolis_vector

CONVENTIONS = ("additive", "rigid")


def grid_offsets(l: int, w: int, a: float, b: float) -> list[tuple[float, float]]:
    """Row-major grid offsets, front row (largest x) first."""
    out = []
    for i in range(l):
        x = ((l - 1) / 2.0 - i) * a
        for j in range(w):
            y = ((w - 1) / 2.0 - j) * b
            out.append((x + 0.0, y + 0.0))
    return out


@dataclass(frozen=True)
class StructureConfig:
    l: int
    w: int
    offsets: tuple[tuple[float, float], ...]
    leader_index: int = 0
    extra_leader: bool = False
    # How body velocity is transported to a module offset:
    #   "additive": u_i = u + w r_y, v_i = v + w r_x
    #   "rigid": u_i = u - w r_y, v_i = v + w r_x   (z-up rigid body)
    velocity_convention: str = "additive"

    def __post_init__(self):
        if self.l < 1 or self.w < 1:
            raise ValueError("l and w must be >= 1")
        expected = self.l * self.w + (1 if self.extra_leader else 0)
        if len(self.offsets) != expected:
            raise ValueError(f"expected {expected} offsets, got {len(self.offsets)}")
        if not 0 <= self.leader_index < expected:
            raise ValueError(f"leader_index {self.leader_index} out of range")
        if len({(round(x, 9), round(y, 9)) for x, y in self.offsets}) != expected:
            raise ValueError("offsets must be pairwise distinct")
        if self.velocity_convention not in CONVENTIONS:
            raise ValueError(f"velocity_convention must be one of {CONVENTIONS}")

    @classmethod
    def grid(cls, l: int, w: int, params: VesselParams, *, extra_leader: bool = False,
             leader_index: int | None = None, velocity_convention: str = "additive"):
        offsets = grid_offsets(l, w, params.a, params.b)
        if extra_leader:
            offsets.append((l * params.a / 2.0 + params.a / 2.0, 0.0))
        if leader_index is None:
            leader_index = len(offsets) - 1 if extra_leader else 0
        return cls(l, w, tuple(offsets), leader_index, extra_leader, velocity_convention)

    @property
    def n(self) -> int:
        return len(self.offsets)

    @property
    def offsets_array(self) -> np.ndarray:
        return np.array(self.offsets, dtype=float)

    def check_layout(self, params: VesselParams) -> None:
        """Raise if grid offsets do not sit on the (a, b) pitch."""
        grid = grid_offsets(self.l, self.w, params.a, params.b)
        got = list(self.offsets[: self.l * self.w])
        if not np.allclose(sorted(got), sorted(grid), atol=1e-9):
            raise ValueError("offsets inconsistent with grid pitch (a, b)")


@dataclass(frozen=True)
class StructureParams:
    mass: np.ndarray = field(repr=False)   # Mg diagonal
    drag: np.ndarray = field(repr=False)   # Dg diagonal
    n: int
    m11: float
    m22: float

    @classmethod
    def from_config(cls, params: VesselParams, cfg: StructureConfig):
        return cls(structure_mass(params, cfg), structure_drag(params, cfg),
                   cfg.n, params.m11, params.m22)

    def coriolis_vector(self, vel) -> np.ndarray:
        return self.n * coriolis_vector(vel, self.m11, self.m22)

    def acceleration(self, vel, total: np.ndarray) -> np.ndarray:
        vel = np.asarray(vel, dtype=float)
        return (total - self.coriolis_vector(vel) - self.drag * vel) / self.mass

    def generalized_force(self, vel, acc) -> np.ndarray:
        """Mg v' + Cg(v) v + Dg v: the wrench implied by a motion."""
        vel = np.asarray(vel, dtype=float)
        return self.mass * np.asarray(acc, dtype=float) + self.coriolis_vector(vel) + self.drag * vel


def structure_mass(params: VesselParams, cfg: StructureConfig) -> np.ndarray:
    l, w, n = cfg.l, cfg.w, cfg.n
    return np.array([
        n * params.m11,
        n * params.m22,
        params.m33 * (l * l * params.a ** 2 + w * w * params.b ** 2) / 12.0,
    ])


def structure_coriolis(vel, params: VesselParams, cfg: StructureConfig) -> np.ndarray:
    return cfg.n * coriolis_matrix(vel, params)


def structure_drag(params: VesselParams, cfg: StructureConfig) -> np.ndarray:
    return np.array([cfg.l * params.Xu, cfg.w * params.Yv, cfg.l ** 3 * params.Nw / 4.0])


def cross_torque(offsets: np.ndarray, forces: np.ndarray) -> float:
    """Signed sum of r_i x F_i (z component)."""
    return float(np.sum(offsets[:, 0] * forces[:, 1] - offsets[:, 1] * forces[:, 0]))


def total_wrench(wrenches: Sequence, cfg: StructureConfig) -> Wrench:
    d = np.asarray(wrenches, dtype=float).reshape(-1, 3)
    if d.shape[0] != cfg.n:
        raise ValueError(f"expected {cfg.n} wrenches, got {d.shape[0]}")
    s = d.sum(axis=0)
    return Wrench(float(s[0]), float(s[1]), float(s[2] + cross_torque(cfg.offsets_array, d[:, :2])))


def structure_acceleration(vel, wrenches, params: VesselParams, cfg: StructureConfig,
                           sp: StructureParams | None = None) -> np.ndarray:
    sp = sp or StructureParams.from_config(params, cfg)
    return sp.acceleration(vel, np.asarray(total_wrench(wrenches, cfg)))


def local_velocity(vel_center, r, convention: str = "additive") -> np.ndarray:
    u, v, w = vel_center
    rx, ry = r
    sign = 1.0 if convention == "additive" else -1.0
    return np.array([u + sign * w * ry, v + w * rx, w])


def local_acceleration(acc_center, r, convention: str = "additive") -> np.ndarray:
    """Time derivative of :func:`local_velocity` for a fixed offset."""
    return local_velocity(acc_center, r, convention)


class SymmetryReport(NamedTuple):
    ok: bool
    unpaired: list


def validate_centrosymmetry(cfg: StructureConfig, tol: float = 1e-9) -> SymmetryReport:
    pts = cfg.offsets_array
    unpaired = []
    for i, r in enumerate(pts):
        if not np.any(np.all(np.abs(pts + r) <= tol, axis=1)):
            unpaired.append((i, tuple(float(c) for c in r)))
    return SymmetryReport(not unpaired, unpaired)


def centrosymmetric_pairs(cfg: StructureConfig, tol: float = 1e-9) -> list[tuple[int, int]]:
    pts = cfg.offsets_array
    pairs = []
    for i, r in enumerate(pts):
        for j in range(i + 1, len(pts)):
            if np.all(np.abs(pts[j] + r) <= tol):
                pairs.append((i, j))
    return pairs


def offset_norm(r) -> float:
    return math.hypot(r[0], r[1])
