"""Figure rendering for the report path. All figures go to files (Agg)."""
from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

METHOD_COLORS = {
    "none": "tab:gray",
    "banditron": "tab:blue",
    "agrel": "tab:orange",
}


def _method_label(name):
    return {"none": "fixed decoder", "banditron": "bandit last-layer",
            "agrel": "attention-gated"}.get(name, name)


def time_to_target_figure(trials_by_method: dict, onset: int, path):
    """Per-trial mean time-to-target across seeds, one line per method.

    trials_by_method maps method name -> list of dicts with trial/seed/
    time_to_target keys (parsed trial logs).
    """
    fig, ax = plt.subplots(figsize=(6.4, 4.0))
    for method, rows in sorted(trials_by_method.items()):
        by_trial = {}
        for r in rows:
            by_trial.setdefault(r["trial"], []).append(r["time_to_target"])
        trials = sorted(by_trial)
        means = [float(np.mean(by_trial[t])) for t in trials]
        ax.plot(trials, means, label=_method_label(method),
                color=METHOD_COLORS.get(method), lw=1.2)
    if onset is not None:
        ax.axvline(onset, color="k", ls="--", lw=0.8, alpha=0.6)
        ax.text(onset, ax.get_ylim()[1], " perturbation", va="top", fontsize=8)
    ax.set_xlabel("trial")
    ax.set_ylabel("time to target (s)")
    ax.legend(frameon=False, fontsize=9)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def open_loop_figure(sessions_by_method: dict, path):
    """Session-wise decoding accuracy per method."""
    fig, ax = plt.subplots(figsize=(6.4, 4.0))
    for method, rows in sorted(sessions_by_method.items()):
        xs = [r["session"] + 1 for r in rows if r["r2"] is not None]
        ys = [r["r2"] for r in rows if r["r2"] is not None]
        ax.plot(xs, ys, marker="o", ms=4, lw=1.2,
                label=_method_label(method), color=METHOD_COLORS.get(method))
    ax.set_xlabel("session")
    ax.set_ylabel(r"$R^2$")
    ax.axhline(0.0, color="k", lw=0.6, alpha=0.4)
    ax.legend(frameon=False, fontsize=9)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def sweep_figure(cells, path):
    """Post-adaptation time-to-target vs perturbation ratio, one panel per
    perturbation kind."""
    kinds = sorted({c["kind"] for c in cells})
    fig, axes = plt.subplots(1, len(kinds), figsize=(3.6 * len(kinds), 3.4),
                             sharey=True, squeeze=False)
    for ax, kind in zip(axes[0], kinds):
        for method in sorted({c["learner"] for c in cells}):
            rows = sorted((c for c in cells
                           if c["kind"] == kind and c["learner"] == method),
                          key=lambda c: c["ratio"])
            ax.plot([c["ratio"] for c in rows],
                    [c["mean_post_tail"] for c in rows], marker="o", ms=4,
                    lw=1.2, label=_method_label(method),
                    color=METHOD_COLORS.get(method))
        ax.set_title(kind.replace("_", " "), fontsize=10)
        ax.set_xlabel("perturbation ratio")
    axes[0][0].set_ylabel("time to target (s)")
    axes[0][-1].legend(frameon=False, fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def trajectory_figure(trajectories, target_distance, accept_radius, path):
    """Cursor paths of a handful of trials, acceptance windows drawn."""
    fig, ax = plt.subplots(figsize=(4.6, 4.6))
    cmap = plt.get_cmap("tab10")
    for i, tr in enumerate(trajectories):
        xs = [p[1] for p in tr["trajectory"]]
        ys = [p[2] for p in tr["trajectory"]]
        color = cmap(i % 10)
        ax.plot(xs, ys, lw=0.9, color=color)
        tx, ty = tr["target"]
        ax.add_patch(plt.Circle((tx, ty), accept_radius, fill=False,
                                color=color, lw=0.8, alpha=0.7))
    lim = 1.25 * target_distance
    ax.set_xlim(-lim, lim)
    ax.set_ylim(-lim, lim)
    ax.set_aspect("equal")
    ax.plot(0, 0, "k+", ms=8)
    ax.set_xlabel("x (units)")
    ax.set_ylabel("y (units)")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path
