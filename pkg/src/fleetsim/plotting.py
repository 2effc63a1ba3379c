"""Static figures from a run log."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .metrics import RunLogData, read_log  # noqa: E402

FIGURES = ("trajectory", "heading", "velocities", "wrenches")

# fixed metadata keeps the PNG bytes identical across runs
_PNG_META = {"Software": None}


def _save(fig, path: Path) -> Path:
    fig.savefig(path, dpi=100, metadata=_PNG_META)
    plt.close(fig)
    return path


def plot_trajectory(log: RunLogData, path: Path) -> Path:
    fig, ax = plt.subplots(figsize=(6, 5))
    ax.plot(log["ref_x"], log["ref_y"], "k--", lw=1, label="reference")
    ax.plot(log["x"], log["y"], "C0", lw=2, label="structure")
    ax.set_xlabel("x [m]")
    ax.set_ylabel("y [m]")
    ax.set_aspect("equal", adjustable="datalim")
    ax.legend(loc="best")
    return _save(fig, path)


def plot_heading(log: RunLogData, path: Path) -> Path:
    fig, ax = plt.subplots(figsize=(7, 3.5))
    ax.plot(log["t"], log["ref_psi"], "k--", lw=1, label="reference")
    ax.plot(log["t"], log["psi"], "C0", label="structure")
    ax.set_xlabel("t [s]")
    ax.set_ylabel("psi [rad]")
    ax.legend(loc="best")
    return _save(fig, path)


def plot_velocities(log: RunLogData, path: Path) -> Path:
    fig, axes = plt.subplots(3, 1, figsize=(7, 7), sharex=True)
    lead = log.leader
    for ax, comp, unit in zip(axes, ("u", "v", "omega"), ("m/s", "m/s", "rad/s")):
        for i in range(log.n_robots):
            ax.plot(log["t"], log[f"meas_{comp}_{i}"], lw=2.0 if i == lead else 0.6,
                    color="k" if i == lead else None, zorder=3 if i == lead else 2)
        ax.plot(log["t"], log[f"ref_{comp}"], "r--", lw=1)
        ax.set_ylabel(f"{comp} [{unit}]")
    axes[-1].set_xlabel("t [s]")
    return _save(fig, path)


def plot_wrenches(log: RunLogData, path: Path) -> Path:
    fig, axes = plt.subplots(3, 1, figsize=(7, 7), sharex=True)
    lead = log.leader
    d = log.wrenches("cmd")
    for k, (ax, label) in enumerate(zip(axes, ("fx [N]", "fy [N]", "tau [N*m]"))):
        for i in range(log.n_robots):
            if i != lead:
                ax.plot(log["t"], d[:, i, k], lw=0.6)
        ax.plot(log["t"], d[:, lead, k], "k", lw=2.0, label="leader")
        ax.set_ylabel(label)
    axes[0].legend(loc="best")
    axes[-1].set_xlabel("t [s]")
    return _save(fig, path)


def plot_run(log_path, out_dir=None) -> list[Path]:
    """Write the four standard figures next to the log (or into out_dir)."""
    log_path = Path(log_path)
    log = read_log(log_path)
    out = Path(out_dir) if out_dir is not None else log_path.parent
    out.mkdir(parents=True, exist_ok=True)
    stem = log_path.stem
    makers = (plot_trajectory, plot_heading, plot_velocities, plot_wrenches)
    return [mk(log, out / f"{stem}_{name}.png") for mk, name in zip(makers, FIGURES)]


def plot_comparison(rows, metric: str, path) -> Path:
    """Bar chart of a sweep metric: mean with std error bars per scenario."""
    means = {r["scenario"]: r[metric] for r in rows if r["seed"] == "mean"}
    stds = {r["scenario"]: r[metric] for r in rows if r["seed"] == "std"}
    names = list(means)
    fig, ax = plt.subplots(figsize=(max(4, 1.5 * len(names)), 3.5))
    ax.bar(names, [means[n] for n in names], yerr=[stds.get(n, np.nan) for n in names], capsize=4)
    ax.set_ylabel(metric)
    return _save(fig, Path(path))
