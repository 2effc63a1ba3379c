"""Scenario files and the built-in scenarios.

A scenario is one YAML document whose sections mirror the config types::

    name: three-serial
    duration: 120.0            # s
    seeds: [0, 1, 2, 3, 4]
    structure: {l: 3, w: 1, extra_leader: false, leader_index: 0,
                velocity_convention: additive}
    vessel: {m11: 30.0, m22: 6.0, ...}           # VesselParams fields
    nmpc: {Qm: [...], Rm: [...], QNm: [...], horizon_T: 4.0,
           max_iter: 10, kkt_tol: 1.0e-4, prediction_model: single}
    noise: {vel_sigma: [...], actuation_sigma: [...], accel_sigma: [...],
            interpretation: std}
    sim: {control_dt: 0.1, plant_substeps: 5, follower_gain: 1.0,
          anti_windup: 2.0}
    trajectory: {kind: lap, fillet_radius: 1.5, heading: tangent,
                 waypoints: [{x: 0, y: 0, speed: 0.3}, ...]}
    initial: {pose: null, vel: [0, 0, 0]}       # pose null = reference at t=0

Unknown keys anywhere are errors.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path
from typing import Any, Optional

import yaml

from .nmpc import NmpcWeights
from .sim import NoiseSpec, SimClock
from .structure import StructureConfig
from .trajectory import Reference, TrajectorySpec, Waypoint
from .vessel import DEFAULT_PARAMS, VesselParams


class ScenarioError(ValueError):
    pass


def _check_keys(section: str, data: Any, allowed) -> dict:
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ScenarioError(f"section '{section}' must be a mapping")
    unknown = sorted(set(data) - set(allowed))
    if unknown:
        raise ScenarioError(f"unknown key(s) in '{section}': {', '.join(map(str, unknown))}")
    return data


def _floats(x, n, what):
    try:
        vals = tuple(float(v) for v in x)
    except TypeError as exc:
        raise ScenarioError(f"{what} must be a list of {n} numbers") from exc
    if len(vals) != n:
        raise ScenarioError(f"{what} must have {n} entries")
    return vals


@dataclass(frozen=True)
class StructureSection:
    l: int = 1
    w: int = 1
    extra_leader: bool = False
    leader_index: Optional[int] = None
    velocity_convention: str = "additive"

    def build(self, vp: VesselParams) -> StructureConfig:
        return StructureConfig.grid(self.l, self.w, vp, extra_leader=self.extra_leader,
                                    leader_index=self.leader_index,
                                    velocity_convention=self.velocity_convention)


@dataclass(frozen=True)
class NmpcSection:
    Qm: tuple = (20.0, 20.0, 20.0, 40.0, 40.0, 40.0)
    Rm: tuple = (1.0, 1.0, 1.0, 1.0)
    QNm: tuple = (20.0, 20.0, 20.0, 40.0, 40.0, 40.0)
    horizon_T: float = 4.0
    max_iter: int = 10
    kkt_tol: float = 1e-4
    prediction_model: str = "single"   # or "structure" (ablation)

    def __post_init__(self):
        if self.prediction_model not in ("single", "structure"):
            raise ScenarioError("prediction_model must be 'single' or 'structure'")
        if self.max_iter < 1:
            raise ScenarioError("max_iter must be >= 1")

    def weights(self, n_fleet: int, control_dt: float) -> NmpcWeights:
        return NmpcWeights(self.Qm, self.Rm, self.QNm, self.horizon_T, control_dt, n_fleet)


@dataclass(frozen=True)
class NoiseSection:
    vel_sigma: tuple = (0.1, 0.1, 0.1)
    actuation_sigma: tuple = (0.1, 0.1, 0.1)
    accel_sigma: tuple = (0.03, 0.03, 0.03)
    interpretation: str = "std"

    def spec(self, seed: int) -> NoiseSpec:
        return NoiseSpec(self.vel_sigma, self.actuation_sigma, self.accel_sigma, seed,
                         self.interpretation)

    @classmethod
    def off(cls) -> "NoiseSection":
        return cls((0.0,) * 3, (0.0,) * 3, (0.0,) * 3)


@dataclass(frozen=True)
class SimSection:
    control_dt: float = 0.1
    plant_substeps: int = 5
    follower_gain: float = 1.0
    anti_windup: Optional[float] = 2.0

    def clock(self) -> SimClock:
        return SimClock(self.control_dt, self.plant_substeps)


@dataclass(frozen=True)
class InitialSection:
    pose: Optional[tuple] = None   # None: the reference pose at t = 0
    vel: tuple = (0.0, 0.0, 0.0)


@dataclass(frozen=True)
class Scenario:
    name: str
    duration: float
    structure: StructureSection
    trajectory: TrajectorySpec
    vessel: VesselParams = DEFAULT_PARAMS
    nmpc: NmpcSection = NmpcSection()
    noise: NoiseSection = NoiseSection()
    sim: SimSection = SimSection()
    initial: InitialSection = InitialSection()
    seeds: tuple = (0,)

    def __post_init__(self):
        if not self.name:
            raise ScenarioError("scenario needs a name")
        if not self.duration > 0:
            raise ScenarioError("duration must be positive")
        if not self.seeds:
            raise ScenarioError("seeds must not be empty")

    # derived objects -----------------------------------------------------
    def config(self) -> StructureConfig:
        return self.structure.build(self.vessel)

    def weights(self) -> NmpcWeights:
        return self.nmpc.weights(self.config().n, self.sim.control_dt)

    def reference(self) -> Reference:
        return Reference(self.trajectory)

    def x0(self) -> tuple:
        pose = self.initial.pose
        if pose is None:
            pose = tuple(float(v) for v in self.reference()(0.0)[:3])
        return (*pose, *self.initial.vel)

    def validate(self) -> StructureConfig:
        """Build every sub-config once; raises ScenarioError on any problem."""
        try:
            cfg = self.config()
            cfg.check_layout(self.vessel)
            self.weights()
            self.sim.clock()
            self.trajectory.check_feasible(self.vessel)
            self.reference()
        except ScenarioError:
            raise
        except ValueError as exc:
            raise ScenarioError(str(exc)) from exc
        return cfg

    def with_overrides(self, *, duration: float | None = None, seeds=None,
                       plant_substeps: int | None = None, noise: NoiseSection | None = None):
        sc = self
        if duration is not None:
            sc = replace(sc, duration=float(duration))
        if seeds is not None:
            sc = replace(sc, seeds=tuple(int(s) for s in seeds))
        if plant_substeps is not None:
            sc = replace(sc, sim=replace(sc.sim, plant_substeps=int(plant_substeps)))
        if noise is not None:
            sc = replace(sc, noise=noise)
        return sc

    # serialisation ---------------------------------------------------------
    def to_dict(self) -> dict:
        def plain(obj):
            if isinstance(obj, tuple):
                return [plain(v) for v in obj]
            if isinstance(obj, dict):
                return {k: plain(v) for k, v in obj.items()}
            return obj

        traj = {
            "kind": self.trajectory.kind,
            "fillet_radius": self.trajectory.fillet_radius,
            "heading": self.trajectory.heading,
            "waypoints": [{k: v for k, v in asdict(wp).items() if v is not None}
                          for wp in self.trajectory.waypoints],
        }
        return plain({
            "name": self.name,
            "duration": self.duration,
            "seeds": list(self.seeds),
            "structure": asdict(self.structure),
            "vessel": self.vessel.to_dict(),
            "nmpc": asdict(self.nmpc),
            "noise": asdict(self.noise),
            "sim": asdict(self.sim),
            "trajectory": traj,
            "initial": asdict(self.initial),
        })

    def dumps(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=False)

    def save(self, path) -> None:
        Path(path).write_text(self.dumps())


_TOP = ("name", "duration", "seeds", "structure", "vessel", "nmpc", "noise", "sim",
        "trajectory", "initial")


def _section(cls, name, data, tuples=()):
    data = _check_keys(name, data, [f.name for f in fields(cls)])
    kw = {}
    for k, v in data.items():
        if k in tuples and v is not None:
            kw[k] = _floats(v, tuples[k], f"{name}.{k}")
        else:
            kw[k] = v
    try:
        return cls(**kw)
    except (TypeError, ValueError) as exc:
        raise ScenarioError(f"invalid '{name}' section: {exc}") from exc


def scenario_from_dict(data: dict) -> Scenario:
    data = _check_keys("scenario", data, _TOP)
    for key in ("name", "duration", "structure", "trajectory"):
        if key not in data:
            raise ScenarioError(f"missing required key '{key}'")

    structure = _section(StructureSection, "structure", data["structure"])
    vessel_data = {**DEFAULT_PARAMS.to_dict(), **_check_keys(
        "vessel", data.get("vessel"), [f.name for f in fields(VesselParams)])}
    try:
        vessel = VesselParams(**{k: float(v) for k, v in vessel_data.items()})
    except ValueError as exc:
        raise ScenarioError(f"invalid 'vessel' section: {exc}") from exc
    nmpc = _section(NmpcSection, "nmpc", data.get("nmpc"), {"Qm": 6, "Rm": 4, "QNm": 6})
    noise = _section(NoiseSection, "noise", data.get("noise"),
                     {"vel_sigma": 3, "actuation_sigma": 3, "accel_sigma": 3})
    sim = _section(SimSection, "sim", data.get("sim"))
    initial = _section(InitialSection, "initial", data.get("initial"), {"pose": 3, "vel": 3})

    traj = _check_keys("trajectory", data["trajectory"],
                       ("kind", "waypoints", "fillet_radius", "heading"))
    wps = []
    for k, wp in enumerate(traj.get("waypoints") or []):
        wp = _check_keys(f"trajectory.waypoints[{k}]", wp, ("x", "y", "speed", "psi"))
        try:
            wps.append(Waypoint(float(wp["x"]), float(wp["y"]), float(wp["speed"]),
                                None if wp.get("psi") is None else float(wp["psi"])))
        except KeyError as exc:
            raise ScenarioError(f"waypoint {k} is missing {exc}") from exc
    try:
        trajectory = TrajectorySpec(traj.get("kind", "line"), tuple(wps),
                                    float(traj.get("fillet_radius", 0.0)),
                                    traj.get("heading", "tangent"))
    except ValueError as exc:
        raise ScenarioError(f"invalid 'trajectory' section: {exc}") from exc

    seeds = data.get("seeds", [0])
    if not isinstance(seeds, (list, tuple)):
        raise ScenarioError("seeds must be a list of integers")
    return Scenario(
        name=str(data["name"]), duration=float(data["duration"]), structure=structure,
        trajectory=trajectory, vessel=vessel, nmpc=nmpc, noise=noise, sim=sim,
        initial=initial, seeds=tuple(int(s) for s in seeds),
    )


def loads(text: str) -> Scenario:
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ScenarioError(f"not valid YAML: {exc}") from exc
    return scenario_from_dict(data)


def load(path) -> Scenario:
    return loads(Path(path).read_text())


# --- built-ins -------------------------------------------------------------------

CRUISE = 0.3  # m/s


def _lap_waypoints(length: float, width: float, speed: float = CRUISE):
    return (Waypoint(0.0, 0.0, speed), Waypoint(length, 0.0, speed),
            Waypoint(length, width, speed), Waypoint(0.0, width, speed))


def _canal_waypoints(speed: float = CRUISE):
    """Straight run, one 90 degree left bend, straight run."""
    leg = 30.0
    return (Waypoint(0.0, 0.0, speed), Waypoint(leg, 0.0, speed), Waypoint(leg, leg, speed))


def canal_width(vp: VesselParams, w: int = 8) -> float:
    """Canal 1.5 times as wide as the structure."""
    return 1.5 * w * vp.b


def builtin(name: str) -> Scenario:
    if name == "single-robot":
        return Scenario(
            name=name, duration=60.0, structure=StructureSection(1, 1),
            trajectory=TrajectorySpec("line", (Waypoint(0.0, 0.0, CRUISE), Waypoint(18.0, 0.0, CRUISE))),
        )
    if name in ("three-serial", "three-parallel"):
        serial = name == "three-serial"
        return Scenario(
            name=name, duration=90.0,
            structure=StructureSection(3 if serial else 1, 1 if serial else 3, leader_index=0),
            trajectory=TrajectorySpec("lap", _lap_waypoints(8.0, 3.0), fillet_radius=1.5),
            seeds=(0, 1, 2, 3, 4),
        )
    if name == "canal-65":
        return Scenario(
            name=name, duration=200.0, structure=StructureSection(8, 8, extra_leader=True),
            trajectory=TrajectorySpec("canal", _canal_waypoints(), fillet_radius=12.0),
        )
    raise ScenarioError(f"unknown built-in scenario '{name}'; choose from {', '.join(BUILTINS)}")


BUILTINS = ("single-robot", "three-serial", "three-parallel", "canal-65")


def resolve(spec: str) -> Scenario:
    """A built-in name or a path to a scenario file."""
    if spec in BUILTINS:
        return builtin(spec)
    path = Path(spec)
    if not path.exists():
        raise ScenarioError(f"no built-in scenario or file named '{spec}'")
    return load(path)
