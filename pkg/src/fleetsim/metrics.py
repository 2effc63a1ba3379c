"""Run metrics, computed from nothing but the CSV log."""

from __future__ import annotations

import csv
import io
import math
import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np

_UNIT = re.compile(r"\s*\[[^\]]*\]\s*$")


class LogFormatError(ValueError):
    pass


@dataclass
class RunLogData:
    """Column-name view of a run log (units stripped from the header)."""

    columns: list
    data: np.ndarray

    def __getitem__(self, name: str) -> np.ndarray:
        try:
            return self.data[:, self.columns.index(name)]
        except ValueError:
            raise KeyError(name) from None

    @property
    def n_robots(self) -> int:
        return sum(1 for c in self.columns if c.startswith("cmd_fx_"))

    @property
    def leader(self) -> int:
        col = self["leader"]
        return int(col[0]) if col.size else 0

    def wrenches(self, kind: str = "cmd") -> np.ndarray:
        """(T, N, 3) commanded or realised wrenches."""
        names = ("fx", "fy", "tau")
        return np.stack([np.stack([self[f"{kind}_{c}_{i}"] for c in names], axis=1)
                         for i in range(self.n_robots)], axis=1)


def parse_log(text: str) -> RunLogData:
    rows = list(csv.reader(io.StringIO(text)))
    if not rows:
        raise LogFormatError("empty log")
    columns = [_UNIT.sub("", c) for c in rows[0]]
    if "t" not in columns or "leader" not in columns:
        raise LogFormatError("log header is missing required columns")
    try:
        data = np.array([[float(x) for x in r] for r in rows[1:]], dtype=float)
    except ValueError as exc:
        raise LogFormatError(f"non-numeric log entry: {exc}") from exc
    if data.size == 0:
        data = np.zeros((0, len(columns)))
    if data.shape[1] != len(columns):
        raise LogFormatError("row length does not match header")
    return RunLogData(columns, data)


def read_log(path) -> RunLogData:
    return parse_log(Path(path).read_text())


@dataclass(frozen=True)
class RunMetrics:
    position_rmse: float       # m
    heading_rmse: float        # rad
    velocity_rmse: float       # m/s, surge and sway
    convergence_times: tuple   # s per follower, nan if never settled
    spread: np.ndarray         # max_i |d_i - d_leader| per row, N
    saturation_fraction: float

    def summary(self) -> dict:
        ct = np.asarray(self.convergence_times, dtype=float)
        finite = ct[np.isfinite(ct)]
        return {
            "position_rmse": self.position_rmse,
            "heading_rmse": self.heading_rmse,
            "velocity_rmse": self.velocity_rmse,
            "mean_convergence_time": float(finite.mean()) if finite.size else math.nan,
            "unconverged_followers": int(ct.size - finite.size),
            "mean_spread": float(self.spread.mean()) if self.spread.size else 0.0,
            "final_spread": float(self.spread[-1]) if self.spread.size else 0.0,
            "saturation_fraction": self.saturation_fraction,
        }

    def __eq__(self, other):
        if not isinstance(other, RunMetrics):
            return NotImplemented
        scalars = ("position_rmse", "heading_rmse", "velocity_rmse", "saturation_fraction")
        return (all(getattr(self, k) == getattr(other, k) for k in scalars)
                and np.array_equal(self.convergence_times, other.convergence_times, equal_nan=True)
                and np.array_equal(self.spread, other.spread, equal_nan=True))


def _rms(x: np.ndarray) -> float:
    return float(np.sqrt(np.mean(x))) if x.size else 0.0


def spread_series(log: RunLogData, kind: str = "cmd") -> np.ndarray:
    d = log.wrenches(kind)
    if d.shape[0] == 0 or d.shape[1] < 2:
        return np.zeros(d.shape[0])
    lead = log.leader
    diff = np.linalg.norm(d - d[:, lead:lead + 1, :], axis=2)
    diff[:, lead] = 0.0
    return diff.max(axis=1)


def convergence_time(t: np.ndarray, err: np.ndarray, threshold: np.ndarray) -> float:
    """First time after which err stays below threshold to the end of the log."""
    above = np.nonzero(err >= threshold)[0]
    if above.size == 0:
        return float(t[0]) if t.size else math.nan
    last = above[-1]
    return float(t[last + 1]) if last + 1 < t.size else math.nan


def compute_metrics(log: RunLogData, rel_threshold: float = 0.1,
                    abs_threshold: float = 0.1) -> RunMetrics:
    """Tracking and consensus metrics.

    A follower counts as converged once |d_i - d_leader| stays below
    ``max(rel_threshold * |d_leader|, abs_threshold)``.
    """
    t = log["t"]
    ex = log["x"] - log["ref_x"]
    ey = log["y"] - log["ref_y"]
    epsi = np.angle(np.exp(1j * (log["psi"] - log["ref_psi"])))
    eu = log["u"] - log["ref_u"]
    ev = log["v"] - log["ref_v"]
    ok = np.isfinite(ex) & np.isfinite(ey)

    d = log.wrenches("cmd")
    lead = log.leader
    times = []
    if d.shape[0]:
        dl = np.linalg.norm(d[:, lead], axis=1)
        thr = np.maximum(rel_threshold * dl, abs_threshold)
        for i in range(d.shape[1]):
            if i == lead:
                continue
            err = np.linalg.norm(d[:, i] - d[:, lead], axis=1)
            times.append(convergence_time(t, err, thr))
    sat_cols = [c for c in log.columns if c.startswith("sat_")]
    sat = np.stack([log[c] for c in sat_cols], axis=1) if sat_cols and t.size else np.zeros((0, 1))
    return RunMetrics(
        position_rmse=_rms((ex ** 2 + ey ** 2)[ok]),
        heading_rmse=_rms((epsi ** 2)[ok]),
        velocity_rmse=_rms((eu ** 2 + ev ** 2)[ok]),
        convergence_times=tuple(times),
        spread=spread_series(log),
        saturation_fraction=float(sat.mean()) if sat.size else 0.0,
    )


def metrics_from_file(path) -> RunMetrics:
    return compute_metrics(read_log(path))
