"""Command-line entry points.

    snnbmi synth       --config C [--seed N] [--out FILE]
    snnbmi pretrain    --config C [--out DIR]
    snnbmi open-loop   --config C [--learner L] [--seed N] [--out DIR]
    snnbmi closed-loop --config C [--learner L] [--perturb-kind K]
                       [--perturb-ratio R] [--trials N] [--seed N ...]
    snnbmi sweep       --config C [--out DIR]
    snnbmi report      --config C [--out DIR]

Exit codes: 0 success, 2 configuration error, 3 data/container error.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import sys
from pathlib import Path

import numpy as np

from .config import ExperimentConfig
from .codec import AxisQuantizer
from .dataset import ingest_spkd, synth_dataset, write_spkd
from .environment import PerturbationSpec
from .errors import ConfigError, DataFormatError
from .harness import (fit_open_loop_quantizers, pretrain_from_dataset,
                      pretrain_from_ops, run_closed_loop_seed, run_open_loop,
                      run_sweep)
from .network import load_weights, save_weights
from .report import build_report


def _json_line(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def _load_config(args) -> ExperimentConfig:
    cfg = ExperimentConfig.load(args.config)
    if getattr(args, "out", None):
        cfg.paths.out = args.out
    if getattr(args, "learner", None):
        cfg.learner.kind = args.learner
    if getattr(args, "perturb_kind", None):
        cfg.perturbation.kind = args.perturb_kind
    if getattr(args, "perturb_ratio", None) is not None:
        cfg.perturbation.ratio = args.perturb_ratio
    if getattr(args, "trials", None):
        cfg.trials = args.trials
    if getattr(args, "seed", None):
        cfg.seeds = list(args.seed)
    cfg.validate()
    return cfg


def _out_dir(cfg) -> Path:
    out = Path(cfg.paths.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_synth(args):
    cfg = _load_config(args)
    out = Path(args.out) if args.out else Path(cfg.paths.dataset or
                                               _out_dir(cfg) / "synth.spkd")
    out.parent.mkdir(parents=True, exist_ok=True)
    seed = args.seed[0] if args.seed else (cfg.seeds[0] if cfg.seeds else 0)
    s = cfg.synth
    ds = synth_dataset(seed=seed, n_sessions=s.n_sessions,
                       drift_strength=s.drift_strength,
                       n_channels=s.n_channels,
                       bins_per_session=s.bins_per_session,
                       bin_width=s.bin_width)
    write_spkd(ds, out)
    print(f"wrote {ds.n_bins} bins x {ds.n_channels} channels, "
          f"{ds.n_sessions} sessions -> {out}")


def cmd_pretrain(args):
    cfg = _load_config(args)
    out = _out_dir(cfg)
    ckpt = Path(cfg.paths.checkpoint or out / "stage1.snnw")
    ckpt.parent.mkdir(parents=True, exist_ok=True)

    if cfg.pretrain_source == "dataset":
        ds = ingest_spkd(cfg.paths.dataset)
        net, (qx, qy), stats, train_r2 = pretrain_from_dataset(cfg, ds)
        cfg.quantizers = {"x": qx.to_dict(), "y": qy.to_dict()}
    else:
        net, stats = pretrain_from_ops(cfg)
        train_r2 = None

    save_weights(net, ckpt)
    cfg.paths.checkpoint = str(ckpt)
    cfg.save(out / "resolved_config.yaml")
    with open(out / "pretrain_log.jsonl", "w") as f:
        for epoch, (loss, acc) in enumerate(zip(stats.epoch_loss,
                                                stats.epoch_accuracy)):
            f.write(_json_line({"epoch": epoch, "loss": loss,
                                "accuracy": acc}) + "\n")
        if train_r2 is not None:
            f.write(_json_line({"train_r2": train_r2}) + "\n")
    msg = f"checkpoint {ckpt}, final loss {stats.final_loss:.4f}"
    if train_r2 is not None:
        msg += f", train R2 {train_r2:.4f}"
    print(msg)


def _quantizers_from_config(cfg) -> tuple[AxisQuantizer, AxisQuantizer]:
    if cfg.quantizers:
        return (AxisQuantizer.from_dict(cfg.quantizers["x"]),
                AxisQuantizer.from_dict(cfg.quantizers["y"]))
    resolved = Path(cfg.paths.out) / "resolved_config.yaml"
    if resolved.exists():
        saved = ExperimentConfig.load(resolved)
        if saved.quantizers:
            return (AxisQuantizer.from_dict(saved.quantizers["x"]),
                    AxisQuantizer.from_dict(saved.quantizers["y"]))
    raise ConfigError("no fitted quantizers found; run pretrain first")


def cmd_open_loop(args):
    cfg = _load_config(args)
    out = _out_dir(cfg)
    ds = ingest_spkd(cfg.paths.dataset)
    net = load_weights(cfg.paths.checkpoint, cfg.network)
    qx, qy = _quantizers_from_config(cfg)
    seed = cfg.seeds[0] if cfg.seeds else 0
    results = run_open_loop(net, ds, qx, qy, cfg.learner, seed=seed)
    name = cfg.learner.kind
    with open(out / f"open_loop_{name}.jsonl", "w") as f:
        for r in results:
            f.write(_json_line({"session": r.session, "n_bins": r.n_bins,
                                "r2": r.r2, "r2_x": r.r2_x, "r2_y": r.r2_y,
                                "skipped": r.skipped}) + "\n")
    with open(out / f"open_loop_{name}.csv", "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["session", "n_bins", "r2", "r2_x", "r2_y", "skipped"])
        for r in results:
            w.writerow([r.session, r.n_bins, r.r2, r.r2_x, r.r2_y, r.skipped])
    shown = [f"{r.r2:.3f}" if r.r2 is not None else "skip" for r in results]
    print(f"{name}: session R2 = [{', '.join(shown)}]")


def cmd_closed_loop(args):
    cfg = _load_config(args)
    out = _out_dir(cfg)
    net = load_weights(cfg.paths.checkpoint, cfg.network)
    name = cfg.learner.kind
    trials_path = out / f"trials_{name}.jsonl"
    traj_path = out / "trajectories.jsonl"
    ledgers = []
    with open(trials_path, "w") as f:
        traj_f = open(traj_path, "w") if cfg.record_trajectories else None
        try:
            for seed in cfg.seeds:
                res = run_closed_loop_seed(net, cfg, seed)
                ledgers.append(res.ledger)
                for r in res.records:
                    f.write(_json_line({
                        "seed": seed, "trial": r.trial_index,
                        "success": r.success,
                        "time_to_target": r.time_to_target,
                        "steps": r.n_steps, "perturbed": r.perturbed,
                        "reward_rate": r.reward_rate}) + "\n")
                    if traj_f is not None and r.trajectory:
                        traj_f.write(_json_line({
                            "seed": seed, "trial": r.trial_index,
                            "target": list(r.target),
                            "trajectory": r.trajectory}) + "\n")
        finally:
            if traj_f is not None:
                traj_f.close()
    totals = {
        "fwd_macs": sum(l.fwd_macs for l in ledgers),
        "fwd_acs": sum(l.fwd_acs for l in ledgers),
        "fwd_mem_access": sum(l.fwd_mem_access for l in ledgers),
        "bwd_macs": sum(l.bwd_macs for l in ledgers),
        "bwd_mem_access": sum(l.bwd_mem_access for l in ledgers),
        "forward_steps": sum(l.forward_steps for l in ledgers),
        "footprint_bits": ledgers[0].footprint_bits if ledgers else 0,
    }
    if totals["forward_steps"]:
        for k in ("fwd_macs", "fwd_acs", "fwd_mem_access", "bwd_macs",
                  "bwd_mem_access"):
            totals[f"{k}_per_step"] = totals[k] / totals["forward_steps"]
    with open(out / f"ledger_{name}.json", "w") as f:
        json.dump(totals, f, sort_keys=True, indent=1)
    onset = cfg.perturbation.onset_trial
    rows = [json.loads(l) for l in open(trials_path)]
    pre = [r["time_to_target"] for r in rows if r["trial"] < onset]
    post = [r["time_to_target"] for r in rows if r["trial"] >= onset]
    msg = f"{name}: {len(rows)} trials"
    if pre:
        msg += f", pre-onset mean ttt {np.mean(pre):.3f} s"
    if post and cfg.perturbation.ratio > 0:
        msg += f", post-onset {np.mean(post):.3f} s"
    print(msg)


def cmd_sweep(args):
    cfg = _load_config(args)
    out = _out_dir(cfg)
    net = load_weights(cfg.paths.checkpoint, cfg.network)
    cells = run_sweep(net, cfg)
    with open(out / "sweep.csv", "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["kind", "ratio", "learner", "mean_pre", "mean_post",
                    "mean_post_tail"])
        for c in cells:
            w.writerow([c.kind, c.ratio, c.learner, f"{c.mean_pre:.6f}",
                        f"{c.mean_post:.6f}", f"{c.mean_post_tail:.6f}"])
    print(f"sweep: {len(cells)} cells -> {out / 'sweep.csv'}")


def cmd_report(args):
    cfg = _load_config(args)
    written = build_report(cfg, cfg.paths.out)
    for p in written:
        print(f"wrote {p}")


def build_parser():
    p = argparse.ArgumentParser(prog="snnbmi", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, trials=False, perturb=False):
        sp.add_argument("--config", required=True, help="YAML experiment config")
        sp.add_argument("--out", help="output directory/file override")
        sp.add_argument("--seed", type=int, nargs="*", help="seed override")
        sp.add_argument("--learner", choices=["none", "banditron", "agrel"])
        if trials:
            sp.add_argument("--trials", type=int)
        if perturb:
            sp.add_argument("--perturb-kind", choices=list(PerturbationSpec.KINDS))
            sp.add_argument("--perturb-ratio", type=float)

    common(sub.add_parser("synth", help="generate a synthetic dataset"))
    common(sub.add_parser("pretrain", help="stage-1 training"))
    common(sub.add_parser("open-loop", help="streaming session evaluation"))
    common(sub.add_parser("closed-loop", help="center-out trials"),
           trials=True, perturb=True)
    common(sub.add_parser("sweep", help="perturbation-ratio grid"),
           trials=True)
    common(sub.add_parser("report", help="tables and figures from run outputs"))
    return p


COMMANDS = {
    "synth": cmd_synth,
    "pretrain": cmd_pretrain,
    "open-loop": cmd_open_loop,
    "closed-loop": cmd_closed_loop,
    "sweep": cmd_sweep,
    "report": cmd_report,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        COMMANDS[args.command](args)
    except ConfigError as e:
        print(f"configuration error: {e}", file=sys.stderr)
        return 2
    except (DataFormatError, FileNotFoundError) as e:
        print(f"data error: {e}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
