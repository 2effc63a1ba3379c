"""Reference trajectories for the structure centre.

A path is a chain of straight lines and circular fillets (or a cubic spline)
parametrised by arc length s.  The speed along the path varies linearly in s
between waypoint speeds, so each piece has the closed form

    s(t) = V0 (exp(g t) - 1) / g,   s'(t) = V0 exp(g t),   g = dV/ds.

Heading either follows the path tangent or blends between waypoint headings.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.interpolate import CubicSpline

from .vessel import VesselParams, wrap_angle

KINDS = ("line", "canal", "lap", "waypoint-spline")
HEADINGS = ("tangent", "waypoints")


@dataclass(frozen=True)
class Waypoint:
    x: float
    y: float
    speed: float
    psi: Optional[float] = None


@dataclass(frozen=True)
class TrajectorySpec:
    kind: str
    waypoints: tuple
    fillet_radius: float = 0.0
    heading: str = "tangent"

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"trajectory kind must be one of {KINDS}")
        if self.heading not in HEADINGS:
            raise ValueError(f"heading must be one of {HEADINGS}")
        if len(self.waypoints) < 2:
            raise ValueError("a trajectory needs at least two waypoints")
        if any(wp.speed <= 0 for wp in self.waypoints):
            raise ValueError("waypoint speeds must be positive")
        if self.heading == "waypoints" and any(wp.psi is None for wp in self.waypoints):
            raise ValueError("heading='waypoints' requires psi on every waypoint")
        if self.kind == "line" and len(self.waypoints) != 2:
            raise ValueError("a line trajectory takes exactly two waypoints")
        if self.fillet_radius < 0:
            raise ValueError("fillet_radius must be non-negative")

    def check_feasible(self, vp: VesselParams, margin: float = 0.8) -> None:
        """Cruise speeds must stay below the thrust-limited terminal surge speed."""
        if vp.Xu <= 0:
            return
        v_max = 2.0 * vp.f_max / vp.Xu
        fast = [wp.speed for wp in self.waypoints if wp.speed > margin * v_max]
        if fast:
            raise ValueError(f"waypoint speed {max(fast)} m/s exceeds feasible {margin * v_max:.3f} m/s")


# --- path geometry -----------------------------------------------------------

@dataclass(frozen=True)
class _Line:
    p0: np.ndarray
    heading: float
    length: float

    def at(self, s):
        c, sn = math.cos(self.heading), math.sin(self.heading)
        return self.p0[0] + s * c, self.p0[1] + s * sn, self.heading, 0.0


@dataclass(frozen=True)
class _Arc:
    center: np.ndarray
    radius: float
    start_angle: float   # polar angle of the start point around the centre
    sweep: float         # signed, + is counter-clockwise

    @property
    def length(self):
        return abs(self.sweep) * self.radius

    def at(self, s):
        sign = 1.0 if self.sweep > 0 else -1.0
        phi = self.start_angle + sign * s / self.radius
        x = self.center[0] + self.radius * math.cos(phi)
        y = self.center[1] + self.radius * math.sin(phi)
        return x, y, phi + sign * math.pi / 2.0, sign / self.radius


class _Chain:
    """Lines joined by circular fillets."""

    def __init__(self, points: np.ndarray, radius: float):
        self.segments: list = []
        self.stations = [0.0]
        n = len(points)
        start = points[0]
        for i in range(1, n):
            p, q = points[i - 1], points[i]
            if i == n - 1:
                self._add_line(start, q)
                self.stations.append(self.length)
                break
            nxt = points[i + 1]
            d_in = (q - p) / np.linalg.norm(q - p)
            d_out = (nxt - q) / np.linalg.norm(nxt - q)
            turn = math.atan2(d_in[0] * d_out[1] - d_in[1] * d_out[0], d_in @ d_out)
            if radius <= 0 or abs(turn) < 1e-12:
                self._add_line(start, q)
                self.stations.append(self.length)
                start = q
                continue
            room = min(np.linalg.norm(q - start), np.linalg.norm(nxt - q) / 2.0)
            r = min(radius, room / math.tan(abs(turn) / 2.0))
            cut = r * math.tan(abs(turn) / 2.0)
            a_pt = q - cut * d_in
            self._add_line(start, a_pt)
            sign = 1.0 if turn > 0 else -1.0
            normal = sign * np.array([-d_in[1], d_in[0]])
            center = a_pt + r * normal
            start_angle = math.atan2(a_pt[1] - center[1], a_pt[0] - center[0])
            arc = _Arc(center, r, start_angle, turn)
            self.segments.append(arc)
            self.stations.append(self.length - arc.length / 2.0)
            start = q + cut * d_out
        self.cum = np.concatenate([[0.0], np.cumsum([seg.length for seg in self.segments])])

    def _add_line(self, a, b):
        d = b - a
        length = float(np.linalg.norm(d))
        if length > 1e-12:
            self.segments.append(_Line(np.array(a, dtype=float), math.atan2(d[1], d[0]), length))

    @property
    def length(self):
        return float(sum(seg.length for seg in self.segments))

    def at(self, s):
        i = int(np.searchsorted(self.cum, s, side="right") - 1)
        i = min(max(i, 0), len(self.segments) - 1)
        return self.segments[i].at(s - self.cum[i])


class _Spline:
    def __init__(self, points: np.ndarray, samples: int = 4000):
        chord = np.concatenate([[0.0], np.cumsum(np.linalg.norm(np.diff(points, axis=0), axis=1))])
        self.cs = CubicSpline(chord, points, bc_type="natural")
        p = np.linspace(0.0, chord[-1], samples)
        speed = np.linalg.norm(self.cs(p, 1), axis=1)
        s = np.concatenate([[0.0], np.cumsum(0.5 * (speed[1:] + speed[:-1]) * np.diff(p))])
        self.p_of_s = (s, p)
        self.stations = list(np.interp(chord, p, s))
        self._length = float(s[-1])

    @property
    def length(self):
        return self._length

    def at(self, s):
        p = float(np.interp(s, *self.p_of_s))
        d1 = self.cs(p, 1)
        d2 = self.cs(p, 2)
        speed = math.hypot(d1[0], d1[1])
        x, y = self.cs(p)
        kappa = (d1[0] * d2[1] - d1[1] * d2[0]) / speed ** 3
        return float(x), float(y), math.atan2(d1[1], d1[0]), float(kappa)


# --- time parametrisation ----------------------------------------------------

class Reference:
    """Callable reference generator: ``ref(t) -> (x, y, psi, u, v, omega)``."""

    def __init__(self, spec: TrajectorySpec):
        self.spec = spec
        pts = np.array([[wp.x, wp.y] for wp in spec.waypoints], dtype=float)
        speeds = [wp.speed for wp in spec.waypoints]
        psis = [wp.psi for wp in spec.waypoints]
        if spec.kind == "lap":
            pts = np.vstack([pts, pts[:1]])
            speeds = speeds + speeds[:1]
            psis = psis + psis[:1]
        if spec.kind == "waypoint-spline":
            self.path = _Spline(pts)
        else:
            self.path = _Chain(pts, spec.fillet_radius if spec.kind != "line" else 0.0)
        self.length = self.path.length
        st = np.array(self.path.stations, dtype=float)
        self.stations = st
        self.speeds = np.array(speeds, dtype=float)
        if spec.heading == "waypoints":
            # unwrap so the blend takes the short way between consecutive waypoints
            psi = [float(psis[0])]
            for p in psis[1:]:
                psi.append(psi[-1] + float(wrap_angle(p - psi[-1])))
            self.psis = np.array(psi)
        else:
            self.psis = None
        # time at each station
        times = [0.0]
        for k in range(len(st) - 1):
            times.append(times[-1] + self._piece_time(k, st[k + 1] - st[k]))
        self.times = np.array(times)
        self.duration = float(self.times[-1])

    def _piece_time(self, k, ds):
        v0, v1 = self.speeds[k], self.speeds[k + 1]
        if ds <= 0:
            return 0.0
        g = (v1 - v0) / ds
        if abs(g) < 1e-12:
            return ds / v0
        return math.log(v1 / v0) / g

    def progress(self, t: float) -> tuple[float, float]:
        """Arc length and its rate at time t."""
        if t <= 0:
            return 0.0, float(self.speeds[0])
        if t >= self.duration:
            return self.length, 0.0
        k = int(np.searchsorted(self.times, t, side="right") - 1)
        k = min(k, len(self.times) - 2)
        v0, v1 = self.speeds[k], self.speeds[k + 1]
        ds = self.stations[k + 1] - self.stations[k]
        tau = t - self.times[k]
        g = (v1 - v0) / ds
        if abs(g) < 1e-12:
            return self.stations[k] + v0 * tau, float(v0)
        e = math.exp(g * tau)
        return self.stations[k] + v0 * (e - 1.0) / g, float(v0 * e)

    def _heading(self, s, tangent, kappa, sdot):
        if self.psis is None:
            return tangent, kappa * sdot
        st = self.stations
        k = int(np.searchsorted(st, s, side="right") - 1)
        k = min(max(k, 0), len(st) - 2)
        span = st[k + 1] - st[k]
        x = min(max((s - st[k]) / span, 0.0), 1.0)
        delta = self.psis[k + 1] - self.psis[k]
        psi = self.psis[k] + delta * (3 * x * x - 2 * x ** 3)
        dpsi_ds = delta * (6 * x - 6 * x * x) / span
        return psi, dpsi_ds * sdot

    def __call__(self, t: float) -> np.ndarray:
        s, sdot = self.progress(t)
        x, y, tangent, kappa = self.path.at(s)
        psi, omega = self._heading(s, tangent, kappa, sdot)
        rel = tangent - psi
        return np.array([x, y, float(wrap_angle(psi)), sdot * math.cos(rel), sdot * math.sin(rel), omega])

    def unwrapped_heading(self, t: float) -> float:
        s, sdot = self.progress(t)
        _, _, tangent, kappa = self.path.at(s)
        return self._heading(s, tangent, kappa, sdot)[0]

    def window(self, t: float, knots: int, dt: float) -> np.ndarray:
        """Reference at t, t + dt, ..., t + knots*dt with a continuous heading."""
        out = np.array([self(t + k * dt) for k in range(knots + 1)])
        out[:, 2] = np.unwrap(out[:, 2])
        return out


def generate_reference(spec: TrajectorySpec, t: float) -> np.ndarray:
    return Reference(spec)(t)
