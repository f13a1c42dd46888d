"""Render scenario figures to files next to the exported logs.

All figures are written headlessly (Agg backend): fleet snapshots before,
during, and after the attack window; the first agent's command channels
with the intervention and alarm traces; per-agent position traces of the
true versus received states; and the safety-margin time series against
their thresholds.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .harness import SimLog

__all__ = [
    "plot_fleet_snapshots",
    "plot_agent_channels",
    "plot_position_traces",
    "plot_safety_margins",
    "save_report",
]


def _snapshot_times(log: SimLog) -> list[float]:
    cfg = log.config
    if cfg.attack.kind != "none":
        t0, t1 = cfg.attack.window
        mid = min(0.5 * (t0 + t1), float(log.t[-1]))
        return [float(log.t[0]), mid, float(log.t[-1])]
    return [float(log.t[0]), float(log.t[log.n_steps // 2]), float(log.t[-1])]


def _arena_outline(ax, arena):
    x_min, x_max, y_min, y_max = arena
    ax.plot(
        [x_min, x_max, x_max, x_min, x_min],
        [y_min, y_min, y_max, y_max, y_min],
        color="black",
        lw=1.2,
    )


def plot_fleet_snapshots(log: SimLog, path: Path) -> Path:
    """Agent positions at three times with the reference circle and arena."""
    cfg = log.config
    times = _snapshot_times(log)
    fig, axes = plt.subplots(1, len(times), figsize=(4 * len(times), 4.2))
    circle = np.linspace(0, 2 * np.pi, 200)
    for ax, t_snap in zip(np.atleast_1d(axes), times):
        k = int(np.argmin(np.abs(log.t - t_snap)))
        pos = log.x_true[k, :, :2]
        _arena_outline(ax, cfg.constraints.arena)
        ax.plot(
            cfg.reference.r0 * np.sin(circle),
            cfg.reference.r0 * np.cos(circle),
            color="tab:green",
            lw=0.8,
            ls="--",
        )
        ax.scatter(pos[:, 0], pos[:, 1], s=22, c=np.arange(pos.shape[0]), cmap="viridis")
        ax.set_title(f"t = {log.t[k]:.2f} s")
        ax.set_aspect("equal")
        ax.set_xlabel("x [m]")
        ax.set_ylabel("y [m]")
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)
    return path


def _shade_attack(ax, cfg):
    if cfg.attack.kind != "none":
        ax.axvspan(*cfg.attack.window, color="tab:red", alpha=0.12)


def plot_agent_channels(log: SimLog, path: Path, agent: int = 1) -> Path:
    """Commanded vs applied v for one agent, intervention, and alarms."""
    cfg = log.config
    idx = agent - 1
    fig, axes = plt.subplots(3, 1, figsize=(8, 7), sharex=True)

    axes[0].plot(log.t, log.u_a[:, idx, 0], label="received v", lw=0.9)
    axes[0].plot(log.t, log.u_s[:, idx, 0], label="applied v", lw=0.9)
    axes[0].set_ylabel(f"agent {agent} v [m/s]")
    axes[0].legend(loc="upper right", fontsize=8)

    axes[1].plot(log.t, log.intervention, color="tab:orange", lw=0.9)
    axes[1].set_ylabel("intervention")

    axes[2].step(log.t, log.alarm, where="post", color="tab:red", lw=0.9)
    axes[2].set_ylabel("alarm")
    axes[2].set_ylim(-0.1, 1.1)
    axes[2].set_xlabel("t [s]")

    for ax in axes:
        _shade_attack(ax, cfg)
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)
    return path


def plot_position_traces(log: SimLog, path: Path) -> Path:
    """True vs received positions of every agent over time."""
    fig, axes = plt.subplots(2, 1, figsize=(8, 6), sharex=True)
    for i in range(log.n_agents):
        axes[0].plot(log.t, log.x_true[:, i, 0], lw=0.5)
        axes[0].plot(log.t, log.x_true[:, i, 1], lw=0.5, alpha=0.6)
        axes[1].plot(log.t, log.x_a[:, i, 0], lw=0.5)
        axes[1].plot(log.t, log.x_a[:, i, 1], lw=0.5, alpha=0.6)
    axes[0].set_ylabel("true x, y [m]")
    axes[1].set_ylabel("received x, y [m]")
    axes[1].set_xlabel("t [s]")
    for ax in axes:
        _shade_attack(ax, log.config)
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)
    return path


def plot_safety_margins(log: SimLog, path: Path) -> Path:
    """Minimum pairwise distance and wall clearance against thresholds."""
    cs = log.config.constraints
    fig, axes = plt.subplots(2, 1, figsize=(8, 6), sharex=True)
    axes[0].plot(log.t, log.min_pairwise, lw=0.9)
    axes[0].axhline(cs.delta_a, color="tab:red", ls="--", lw=0.8)
    axes[0].set_ylabel("min pairwise [m]")
    axes[1].plot(log.t, log.min_wall, lw=0.9)
    axes[1].axhline(cs.delta_w, color="tab:red", ls="--", lw=0.8)
    axes[1].set_ylabel("min wall clearance [m]")
    axes[1].set_xlabel("t [s]")
    for ax in axes:
        _shade_attack(ax, log.config)
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)
    return path


def save_report(log: SimLog, out_dir) -> list[Path]:
    """Render all figures into out_dir; returns the written paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return [
        plot_fleet_snapshots(log, out / "snapshots.png"),
        plot_agent_channels(log, out / "channels.png"),
        plot_position_traces(log, out / "traces.png"),
        plot_safety_margins(log, out / "margins.png"),
    ]
