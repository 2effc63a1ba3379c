"""Scenario execution: single runs and seed sweeps."""

from __future__ import annotations

import csv
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .metrics import RunMetrics, compute_metrics, parse_log
from .nmpc import NmpcLeader, PredictionModel
from .scenario import Scenario, ScenarioError
from .sim import NmpcLeaderController, Simulation

log = logging.getLogger(__name__)


def build_simulation(sc: Scenario, seed: int) -> Simulation:
    cfg = sc.validate()
    vp = sc.vessel
    model = (PredictionModel.structure(vp, cfg) if sc.nmpc.prediction_model == "structure"
             else PredictionModel.single_vessel(vp))
    nmpc = NmpcLeader(sc.weights(), vp, model=model, max_iter=sc.nmpc.max_iter,
                      kkt_tol=sc.nmpc.kkt_tol)
    ref = sc.reference()
    leader = NmpcLeaderController(nmpc, ref, cfg.offsets[cfg.leader_index], cfg.velocity_convention)
    return Simulation(vp, cfg, leader, sc.noise.spec(seed), sc.sim.clock(),
                      follower_gain=sc.sim.follower_gain, anti_windup=sc.sim.anti_windup,
                      x0=sc.x0(), reference=ref)


@dataclass(frozen=True)
class RunResult:
    scenario: str
    seed: int
    log_path: Path
    metrics: RunMetrics


def log_filename(sc: Scenario, seed: int) -> str:
    return f"{sc.name}_seed{seed}.csv"


def run_scenario(sc: Scenario, seed: int, out_dir=".") -> RunResult:
    """Run one (scenario, seed) cell, write its CSV log and score it."""
    sim = build_simulation(sc, seed)
    run_log = sim.run(sc.duration)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / log_filename(sc, seed)
    text = run_log.to_csv()
    path.write_text(text)
    events = getattr(sim.leader, "nmpc", None)
    for t, msg in (events.events if events is not None else []):
        log.warning("%s seed %d: %s", sc.name, seed, msg)
    return RunResult(sc.name, seed, path, compute_metrics(parse_log(text)))


# --- sweeps ------------------------------------------------------------------------

SUMMARY_KEYS = ("position_rmse", "heading_rmse", "velocity_rmse", "mean_convergence_time",
                "unconverged_followers", "mean_spread", "final_spread", "saturation_fraction")


@dataclass(frozen=True)
class CellOutcome:
    scenario: str
    seed: int
    result: RunResult | None
    error: str | None = None


def _cell(args) -> CellOutcome:
    sc, seed, out_dir = args
    try:
        return CellOutcome(sc.name, seed, run_scenario(sc, seed, out_dir))
    except Exception as exc:  # recorded per cell; the sweep goes on
        return CellOutcome(sc.name, seed, None, f"{type(exc).__name__}: {exc}")


def summary_rows(outcomes: Sequence[CellOutcome]) -> list[dict]:
    """One row per cell plus a mean and a std row per scenario."""
    rows = []
    for name in dict.fromkeys(o.scenario for o in outcomes):
        cells = [o for o in outcomes if o.scenario == name]
        values = []
        for o in cells:
            row = {"scenario": name, "seed": str(o.seed), "status": "ok" if o.error is None else "failed",
                   "error": o.error or ""}
            if o.result is not None:
                s = o.result.metrics.summary()
                row.update(s)
                values.append([s[k] for k in SUMMARY_KEYS])
            else:
                row.update({k: math.nan for k in SUMMARY_KEYS})
            rows.append(row)
        arr = np.array(values, dtype=float).reshape(-1, len(SUMMARY_KEYS))
        for stat, fn in (("mean", np.nanmean), ("std", np.nanstd)):
            agg = {"scenario": name, "seed": stat, "status": f"{arr.shape[0]}/{len(cells)} ok", "error": ""}
            for k, col in zip(SUMMARY_KEYS, arr.T):
                agg[k] = float(fn(col)) if col.size and np.isfinite(col).any() else math.nan
            rows.append(agg)
    return rows


def write_summary(rows: Sequence[dict], path) -> None:
    cols = ["scenario", "seed", "status", *SUMMARY_KEYS, "error"]
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=cols, lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in r.items()})


def sweep(scenarios: Iterable[Scenario], seeds: Sequence[int] | None = None, out_dir=".",
          workers: int = 1) -> list[dict]:
    """Run the scenario x seed cross product and write ``summary.csv``.

    ``seeds=None`` uses each scenario's own seed list.  Cells are isolated
    simulations, so ``workers > 1`` runs them in separate processes.
    """
    scenarios = list(scenarios)
    if not scenarios:
        raise ScenarioError("sweep needs at least one scenario")
    if seeds is not None and len(seeds) == 0:
        raise ScenarioError("seed list must not be empty")
    for sc in scenarios:
        sc.validate()
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    jobs = [(sc, int(s), out) for sc in scenarios for s in (sc.seeds if seeds is None else seeds)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(_cell, jobs))
    else:
        outcomes = [_cell(j) for j in jobs]
    rows = summary_rows(outcomes)
    write_summary(rows, out / "summary.csv")
    return rows
