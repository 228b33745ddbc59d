"""Resource/performance summary table and figure generation.

`build_report` scans a run directory for trial logs, open-loop results and
sweep tables, then writes a resource-accounting CSV plus figures next to
it. The analytic columns use the nominal sparsity assumptions (input and
hidden sparsity 0.6, hidden feedback sparsity 0.94); the avg-time columns
come from whatever closed-loop logs are present.
"""
from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .config import ExperimentConfig
from .metrics import (SparsityProfile, agrel_backward_cost,
                      banditron_backward_cost, clsnn_backward_estimate,
                      footprint_kb, forward_cost)
from . import plots

NOMINAL_SPARSITY = 0.6
NOMINAL_FEEDBACK_SPARSITY = 0.94

TABLE_COLUMNS = ["method", "avg_time_s", "avg_time_perturb_s", "fwd_macs",
                 "fwd_acs", "fwd_mem_access", "bwd_macs", "bwd_mem_access",
                 "footprint_kb"]


def _fmt(x):
    if x is None:
        return ""
    if isinstance(x, float):
        return f"{x:.4g}"
    return str(x)


def resource_rows(cfg: ExperimentConfig, avg_times=None):
    """Table rows for the decoder variants plus analytic baselines.

    avg_times maps method -> (avg_time, avg_time_perturb); missing entries
    leave the columns blank.
    """
    avg_times = avg_times or {}
    sizes = cfg.network.layer_sizes
    k = len(sizes) - 1
    s = [NOMINAL_SPARSITY] * k
    macs, acs, mem = forward_cost(sizes, s)
    fp = footprint_kb(sizes)

    bandit_bwd = banditron_backward_cost(sizes[-2], NOMINAL_SPARSITY)
    agrel_bwd = agrel_backward_cost(
        sizes, SparsityProfile.uniform(k, NOMINAL_SPARSITY,
                                       NOMINAL_FEEDBACK_SPARSITY,
                                       NOMINAL_FEEDBACK_SPARSITY))

    rows = []

    def add(method, fwd, bwd, footprint):
        t = avg_times.get(method, (None, None))
        rows.append({"method": method, "avg_time_s": t[0],
                     "avg_time_perturb_s": t[1], "fwd_macs": fwd[0],
                     "fwd_acs": fwd[1], "fwd_mem_access": fwd[2],
                     "bwd_macs": bwd[0], "bwd_mem_access": bwd[1],
                     "footprint_kb": footprint})

    add("dsnn_banditron", (macs, acs, mem), bandit_bwd, fp)
    add("dsnn_agrel", (macs, acs, mem), agrel_bwd, fp)
    add("dsnn_fixed", (macs, acs, mem), (0.0, 0.0), fp)

    # shallow bandit learner reading the input channels directly
    one_layer = [sizes[0], sizes[-1]]
    fwd_1l = forward_cost(one_layer, [NOMINAL_SPARSITY], ann=True)
    add("banditron_one_layer", fwd_1l,
        banditron_backward_cost(sizes[0], NOMINAL_SPARSITY),
        footprint_kb(one_layer, ann=True))

    # dense eligibility-trace learner with a 2-unit regression head
    clsnn_sizes = sizes[:-1] + [2]
    fwd_cl = forward_cost(clsnn_sizes, s)
    add("clsnn_dense_update", fwd_cl, clsnn_backward_estimate(clsnn_sizes),
        footprint_kb(clsnn_sizes))
    return rows


def write_table(rows, path):
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(TABLE_COLUMNS)
        for row in rows:
            w.writerow([_fmt(row[c]) for c in TABLE_COLUMNS])


def load_jsonl(path):
    with open(path) as f:
        return [json.loads(line) for line in f if line.strip()]


def collect_avg_times(out_dir: Path, onset: int, window: int = 50):
    """Per-method (pre-onset mean, post-onset mean) pooled over every
    closed-loop trial log in the directory."""
    by_method = {}
    for p in sorted(out_dir.glob("trials_*.jsonl")):
        method = p.stem.split("_", 1)[1]
        for kind_rows in [load_jsonl(p)]:
            by_method.setdefault(method, []).extend(kind_rows)
    times = {}
    for method, rows in by_method.items():
        pre = [r["time_to_target"] for r in rows if r["trial"] < onset]
        post = [r["time_to_target"] for r in rows
                if onset <= r["trial"] < onset + window]
        name = {"none": "dsnn_fixed"}.get(method, f"dsnn_{method}")
        times[name] = (float(np.mean(pre)) if pre else None,
                       float(np.mean(post)) if post else None)
    return times, by_method


def build_report(cfg: ExperimentConfig, out_dir) -> list:
    """Write table + figures from the artifacts in out_dir; returns the
    list of files written."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    onset = cfg.perturbation.onset_trial
    written = []

    avg_times, trials_by_method = collect_avg_times(out_dir, onset)
    rows = resource_rows(cfg, avg_times)
    table_path = out_dir / "resource_table.csv"
    write_table(rows, table_path)
    written.append(table_path)

    if trials_by_method:
        fig = out_dir / "time_to_target.png"
        plots.time_to_target_figure(trials_by_method, onset, fig)
        written.append(fig)

    sessions_by_method = {}
    for p in sorted(out_dir.glob("open_loop_*.jsonl")):
        method = p.stem.split("open_loop_", 1)[1]
        sessions_by_method[method] = load_jsonl(p)
    if sessions_by_method:
        fig = out_dir / "open_loop_r2.png"
        plots.open_loop_figure(sessions_by_method, fig)
        written.append(fig)

    sweep_path = out_dir / "sweep.csv"
    if sweep_path.exists():
        with open(sweep_path, newline="") as f:
            cells = [{"kind": r["kind"], "ratio": float(r["ratio"]),
                      "learner": r["learner"],
                      "mean_post_tail": float(r["mean_post_tail"])}
                     for r in csv.DictReader(f)]
        fig = out_dir / "sweep.png"
        plots.sweep_figure(cells, fig)
        written.append(fig)

    traj_path = out_dir / "trajectories.jsonl"
    if traj_path.exists():
        trs = [r for r in load_jsonl(traj_path) if r.get("trajectory")]
        if trs:
            fig = out_dir / "trajectories.png"
            plots.trajectory_figure(trs[:10], cfg.env.target_distance,
                                    cfg.env.accept_radius, fig)
            written.append(fig)
    return written
