"""Deterministic closed-loop executor for a connected fleet.

One control tick (``control_dt``):

1. synthesise every module's local measurement from the plant,
2. run the leader controller and every follower controller,
3. add actuation noise to each commanded wrench and clamp it through the
   thruster allocation,
4. advance the structure with Gauss-Legendre substeps under the realised
   wrenches (zero-order hold),
5. append a log row.

Controllers only ever see their own :class:`LocalMeasurement` (plus, for the
leader, its own pose) and their own state.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Callable, Protocol, Sequence

import numpy as np

from .follower import FollowerState, LocalMeasurement, step_followers, wrench_cap
from .integrators import gauss_legendre_step
from .nmpc import NmpcLeader
from .structure import (StructureConfig, StructureParams, local_acceleration, local_velocity,
                        total_wrench)
from .vessel import VesselParams, Wrench, allocate_wrench, kinematics, realize_wrench, wrap_angle

CHANNELS = {"vel": 0, "accel": 1, "actuation": 2}


@dataclass(frozen=True)
class NoiseSpec:
    """Gaussian noise levels per axis.

    With ``interpretation="std"`` the numbers are standard deviations; with
    ``"variance"`` they are variances (the diagonal of the covariance).
    """

    vel_sigma: tuple = (0.1, 0.1, 0.1)
    actuation_sigma: tuple = (0.1, 0.1, 0.1)
    accel_sigma: tuple = (0.03, 0.03, 0.03)
    seed: int = 0
    interpretation: str = "std"

    def __post_init__(self):
        for name in ("vel_sigma", "actuation_sigma", "accel_sigma"):
            vals = getattr(self, name)
            if len(vals) != 3 or min(vals) < 0:
                raise ValueError(f"{name} must be three non-negative numbers")
        if self.interpretation not in ("std", "variance"):
            raise ValueError("interpretation must be 'std' or 'variance'")

    @classmethod
    def off(cls, seed: int = 0) -> "NoiseSpec":
        return cls((0.0,) * 3, (0.0,) * 3, (0.0,) * 3, seed)

    def std(self, channel: str) -> np.ndarray:
        raw = np.asarray(getattr(self, f"{channel}_sigma"), dtype=float)
        return np.sqrt(raw) if self.interpretation == "variance" else raw


class NoiseStreams:
    """Independent counter-based generator per (robot, channel).

    Streams are keyed by robot index, so adding robots never changes the
    noise seen by existing ones.
    """

    def __init__(self, seed: int):
        self.seed = int(seed)
        self._gens: dict = {}

    def gen(self, robot: int, channel: str) -> np.random.Generator:
        key = (robot, CHANNELS[channel])
        g = self._gens.get(key)
        if g is None:
            ss = np.random.SeedSequence(self.seed, spawn_key=key)
            g = self._gens[key] = np.random.Generator(np.random.Philox(ss))
        return g

    def draw(self, robot: int, channel: str, std: np.ndarray) -> np.ndarray:
        z = self.gen(robot, channel).standard_normal(3)
        return z * std


@dataclass(frozen=True)
class SimClock:
    control_dt: float = 0.1
    plant_substeps: int = 5

    def __post_init__(self):
        if self.control_dt <= 0:
            raise ValueError("control_dt must be positive")
        if self.plant_substeps < 1:
            raise ValueError("plant_substeps must be >= 1")


@dataclass
class WorldState:
    t: float
    pose: np.ndarray          # structure centre (x, y, psi)
    vel: np.ndarray           # structure centre body velocity
    acc: np.ndarray           # body acceleration under the last realised wrenches
    followers: dict           # robot index -> FollowerState
    commanded: np.ndarray     # (N, 3)
    realized: np.ndarray      # (N, 3)
    saturated: np.ndarray     # (N,) bool

    def leader_pose(self, r) -> np.ndarray:
        c, s = math.cos(self.pose[2]), math.sin(self.pose[2])
        return np.array([self.pose[0] + c * r[0] - s * r[1], self.pose[1] + s * r[0] + c * r[1], self.pose[2]])


def synthesize_measurement(world: WorldState, i: int, cfg: StructureConfig, noise: NoiseSpec,
                           streams: NoiseStreams) -> LocalMeasurement:
    r = cfg.offsets[i]
    vel = local_velocity(world.vel, r, cfg.velocity_convention)
    acc = local_acceleration(world.acc, r, cfg.velocity_convention)
    vel = vel + streams.draw(i, "vel", noise.std("vel"))
    acc = acc + streams.draw(i, "accel", noise.std("accel"))
    return LocalMeasurement(vel, acc)


def leader_frame_reference(q_ref: np.ndarray, r, convention: str) -> np.ndarray:
    """Shift a structure-centre reference to a module offset."""
    q = np.array(q_ref, dtype=float)
    c, s = np.cos(q[..., 2]), np.sin(q[..., 2])
    out = q.copy()
    out[..., 0] = q[..., 0] + c * r[0] - s * r[1]
    out[..., 1] = q[..., 1] + s * r[0] + c * r[1]
    sign = 1.0 if convention == "additive" else -1.0
    out[..., 3] = q[..., 3] + sign * q[..., 5] * r[1]
    out[..., 4] = q[..., 4] + q[..., 5] * r[0]
    return out


# --- leader controllers ------------------------------------------------------

class LeaderController(Protocol):
    def command(self, q1: np.ndarray, t: float) -> Wrench: ...

    def diagnostics(self) -> tuple: ...


@dataclass
class ScheduledWrenchLeader:
    """Open-loop leader applying a prescribed wrench profile."""

    schedule: Callable[[float], Sequence[float]]

    def command(self, q1, t):
        return Wrench(*(float(x) for x in self.schedule(t)))

    def diagnostics(self):
        return (0, math.nan, math.nan, 1)


@dataclass
class NmpcLeaderController:
    nmpc: NmpcLeader
    reference: Callable  # Reference instance (structure centre)
    offset: tuple
    convention: str = "additive"

    def window(self, t: float) -> np.ndarray:
        w = self.nmpc.weights
        win = self.reference.window(t, w.knots, w.control_dt)
        return leader_frame_reference(win, self.offset, self.convention)

    def command(self, q1, t):
        cmd = self.nmpc.step(q1, self.window(t), t)
        return allocate_wrench(cmd, self.nmpc.vp)

    def diagnostics(self):
        s = self.nmpc.last
        if s is None:
            return (0, math.nan, math.nan, 0)
        return (s.iterations, s.kkt, s.objective, int(s.converged))


# --- log ---------------------------------------------------------------------

def log_columns(n: int) -> list[str]:
    cols = ["t [s]", "x [m]", "y [m]", "psi [rad]", "u [m/s]", "v [m/s]", "omega [rad/s]",
            "ref_x [m]", "ref_y [m]", "ref_psi [rad]", "ref_u [m/s]", "ref_v [m/s]", "ref_omega [rad/s]",
            "lref_x [m]", "lref_y [m]", "lref_psi [rad]", "lref_u [m/s]", "lref_v [m/s]", "lref_omega [rad/s]"]
    for i in range(n):
        cols += [f"meas_u_{i} [m/s]", f"meas_v_{i} [m/s]", f"meas_omega_{i} [rad/s]",
                 f"cmd_fx_{i} [N]", f"cmd_fy_{i} [N]", f"cmd_tau_{i} [N*m]",
                 f"real_fx_{i} [N]", f"real_fy_{i} [N]", f"real_tau_{i} [N*m]", f"sat_{i} [-]"]
    cols += ["nmpc_iter [-]", "nmpc_kkt [-]", "nmpc_obj [-]", "nmpc_converged [-]", "leader [-]"]
    return cols


def _fmt(x) -> str:
    return repr(float(x))


@dataclass
class RunLog:
    columns: list
    rows: list = field(default_factory=list)

    def append(self, values: Sequence[float]) -> None:
        if len(values) != len(self.columns):
            raise ValueError("log row length mismatch")
        self.rows.append([_fmt(v) for v in values])

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.columns)
        w.writerows(self.rows)
        return buf.getvalue()

    def write(self, path) -> None:
        with open(path, "w", newline="") as fh:
            fh.write(self.to_csv())


# --- simulation ----------------------------------------------------------------

class SimulationError(RuntimeError):
    pass


class Simulation:
    """Closed loop of plant, leader and followers.

    ``follower_mode="oracle"`` swaps the local law for the communicating one
    (test-only: followers then read every module's last realised wrench).
    """

    def __init__(self, vp: VesselParams, cfg: StructureConfig, leader: LeaderController,
                 noise: NoiseSpec | None = None, clock: SimClock | None = None, *,
                 follower_gain: float = 1.0, follower_mode: str = "local",
                 anti_windup: float | None = 2.0, x0: Sequence[float] | None = None,
                 reference: Callable | None = None, seed: int | None = None):
        if follower_mode not in ("local", "oracle"):
            raise ValueError("follower_mode must be 'local' or 'oracle'")
        self.vp, self.cfg = vp, cfg
        self.sp = StructureParams.from_config(vp, cfg)
        self.leader = leader
        self.noise = noise or NoiseSpec.off()
        self.clock = clock or SimClock()
        self.gain = follower_gain
        self.mode = follower_mode
        self.cap = wrench_cap(vp, anti_windup) if anti_windup else None
        self.reference = reference
        self.streams = NoiseStreams(self.noise.seed if seed is None else seed)
        n = cfg.n
        x0 = np.zeros(6) if x0 is None else np.asarray(x0, dtype=float)
        zeros = np.zeros((n, 3))
        self.world = WorldState(
            t=0.0, pose=x0[:3].copy(), vel=x0[3:].copy(),
            acc=self.sp.acceleration(x0[3:], np.zeros(3)),
            followers={i: FollowerState.initial() for i in range(n) if i != cfg.leader_index},
            commanded=zeros.copy(), realized=zeros.copy(), saturated=np.zeros(n, dtype=bool),
        )
        self.world.pose[2] = wrap_angle(self.world.pose[2])
        self.log = RunLog(log_columns(n))

    # plant ---------------------------------------------------------------
    def _plant_rate(self, total: np.ndarray):
        sp = self.sp

        def rate(_t, y):
            return np.concatenate([kinematics(y[:3], y[3:]), sp.acceleration(y[3:], total)])
        return rate

    def _advance_plant(self, realized: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        total = np.asarray(total_wrench(realized, self.cfg))
        rate = self._plant_rate(total)
        y = np.concatenate([self.world.pose, self.world.vel])
        h = self.clock.control_dt / self.clock.plant_substeps
        t = self.world.t
        for _ in range(self.clock.plant_substeps):
            y = gauss_legendre_step(rate, y, t, h)
            y[2] = wrap_angle(y[2])
            t += h
        if not np.all(np.isfinite(y)):
            raise SimulationError(f"plant state became non-finite at t={t}")
        return y[:3], y[3:], self.sp.acceleration(y[3:], total)

    # one tick --------------------------------------------------------------
    def step_world(self) -> WorldState:
        w, cfg, dt = self.world, self.cfg, self.clock.control_dt
        n, lead = cfg.n, cfg.leader_index

        meas = [synthesize_measurement(w, i, cfg, self.noise, self.streams) for i in range(n)]

        commanded = np.zeros((n, 3))
        q1 = np.concatenate([w.leader_pose(cfg.offsets[lead]), meas[lead].vel])
        commanded[lead] = self.leader.command(q1, w.t)

        ids = list(w.followers)
        d = np.zeros((0, 3))
        if ids:
            d = np.array([w.followers[i].d for i in ids])
            if self.mode == "local":
                forces = np.array([self.sp.generalized_force(meas[i].vel, meas[i].accel) for i in ids])
            else:
                forces = np.tile(w.realized.sum(axis=0), (len(ids), 1))
            d = step_followers(d, forces, w.t, dt, n, gain=self.gain, cap=self.cap)
            commanded[ids] = d
        followers = {i: FollowerState(d[k].copy(), w.t + dt) for k, i in enumerate(ids)}

        realized = np.zeros((n, 3))
        saturated = np.zeros(n, dtype=bool)
        act_std = self.noise.std("actuation")
        for i in range(n):
            noisy = commanded[i] + self.streams.draw(i, "actuation", act_std)
            wr, sat = realize_wrench(noisy, self.vp)
            realized[i], saturated[i] = wr, sat

        self._log_row(meas, commanded, realized, saturated)

        pose, vel, acc = self._advance_plant(realized)
        self.world = WorldState(w.t + dt, pose, vel, acc, followers, commanded, realized, saturated)
        return self.world

    def _log_row(self, meas, commanded, realized, saturated):
        w, cfg = self.world, self.cfg
        if self.reference is not None:
            ref = np.asarray(self.reference(w.t), dtype=float)
            lref = leader_frame_reference(ref, cfg.offsets[cfg.leader_index], cfg.velocity_convention)
        else:
            ref = lref = np.full(6, math.nan)
        row = [w.t, *w.pose, *w.vel, *ref, *lref]
        for i in range(cfg.n):
            row += [*meas[i].vel, *commanded[i], *realized[i], float(saturated[i])]
        row += [*self.leader.diagnostics(), cfg.leader_index]
        self.log.append(row)

    def run(self, duration: float, callback: Callable | None = None) -> RunLog:
        steps = int(round(duration / self.clock.control_dt))
        for _ in range(steps):
            self.step_world()
            if callback is not None:
                callback(self.world)
        return self.log


def step_world(sim: Simulation) -> WorldState:
    return sim.step_world()
