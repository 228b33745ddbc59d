"""Experiment orchestration: seeding, the open-loop streaming evaluation,
closed-loop trials with perturbation schedules, sweeps, and stage-1/stage-2
training protocols.

Every run derives all of its randomness from (config, seed) through named
child seeds, so outputs are bit-reproducible and seeds can run in any
order. The decoder's membrane state resets at session boundaries (open
loop) and trial boundaries (closed loop).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .codec import AxisQuantizer, fit_quantizer
from .config import ExperimentConfig
from .dataset import SpikeDataset
from .environment import (CenterOutEnv, OpsBrain, PerturbationSpec,
                          TrialRecord, apply_perturbation)
from .errors import ConfigError
from .learning import AgrelLearner, BanditronLearner, predict_class, split_axes
from .metrics import ResourceLedger, footprint, r_squared
from .network import SpikingNetwork
from .pretrain import PretrainConfig, pretrain


def child_seeds(seed: int, n: int = 8) -> list[int]:
    """Named streams derived from one simulation seed."""
    rng = np.random.default_rng(seed)
    return [int(s) for s in rng.integers(0, 2 ** 63, size=n)]


def build_learner(settings, rng=None):
    if settings.kind == "none":
        return None
    if settings.kind == "banditron":
        return BanditronLearner(epsilon=settings.epsilon,
                                n_classes=settings.n_classes,
                                learning_rate=settings.learning_rate,
                                rng=rng or np.random.default_rng())
    if settings.kind == "agrel":
        return AgrelLearner(alpha=settings.alpha, n_classes=settings.n_classes)
    raise ConfigError(f"unknown learner {settings.kind!r}")


def make_brain(cfg: ExperimentConfig) -> OpsBrain:
    o = cfg.ops
    return OpsBrain(n_neurons=o.n_neurons, bin_seconds=o.bin_seconds,
                    noise_sigma=o.noise_sigma,
                    lambda_min_range=tuple(o.lambda_min_range),
                    lambda_max_range=tuple(o.lambda_max_range), seed=o.seed)


def make_env(cfg: ExperimentConfig) -> CenterOutEnv:
    e = cfg.env
    return CenterOutEnv(target_distance=e.target_distance,
                        accept_radius=e.accept_radius,
                        hold_required=e.hold_required,
                        max_duration=e.max_duration, dt=e.dt, grace=e.grace,
                        damping=e.damping, stop_radius=e.stop_radius,
                        intent_speed=e.intent_speed, v_max=e.v_max,
                        n_classes=cfg.learner.n_classes)


# ---------------------------------------------------------------------------
# open loop


@dataclass
class SessionResult:
    session: int
    n_bins: int
    r2: float | None
    r2_x: float | None = None
    r2_y: float | None = None
    skipped: bool = False
    predictions: np.ndarray | None = None


def run_open_loop(net: SpikingNetwork, dataset: SpikeDataset,
                  qx: AxisQuantizer, qy: AxisQuantizer, learner_settings,
                  seed: int = 0, ledger: ResourceLedger | None = None,
                  keep_predictions: bool = False) -> list[SessionResult]:
    """Stream every session bin-by-bin, decoding and (optionally) adapting.

    No mini-batching and no lookahead: bin t's output depends only on bins
    up to t. The quantized recorded velocity serves as the per-step label
    for the online rules. Sessions too short or with constant labels are
    decoded but flagged and skipped for the accuracy metric.
    """
    if dataset.n_channels != net.config.layer_sizes[0]:
        raise ConfigError(
            f"dataset has {dataset.n_channels} channels, network expects "
            f"{net.config.layer_sizes[0]}")
    c = learner_settings.n_classes
    learner = build_learner(learner_settings,
                            rng=np.random.default_rng(child_seeds(seed)[0]))
    results = []
    for s in range(dataset.n_sessions):
        sl = dataset.session_slice(s)
        spikes = dataset.spikes[sl]
        vel = dataset.velocities[sl]
        n = spikes.shape[0]
        net.reset_states()
        preds = np.empty((n, 2))
        for t in range(n):
            x = spikes[t]
            _, mem, hidden = net.forward(x, ledger)
            mx, my = mem[:c], mem[c:]
            cx, cy = predict_class(mx), predict_class(my)
            preds[t, 0] = qx.reconstruct(cx)
            preds[t, 1] = qy.reconstruct(cy)
            if learner is not None:
                lx, ly = qx.quantize(vel[t, 0]), qy.quantize(vel[t, 1])
                if isinstance(learner, BanditronLearner):
                    actions = learner.act(mem)
                    hits = (actions[0][1] == lx, actions[1][1] == ly)
                    learner.apply(net, hidden[-1], actions, hits, ledger)
                else:
                    rewards = (int(cx == lx), int(cy == ly))
                    learner.update(net, x, hidden, mem, rewards, ledger)
        kept = preds.copy() if keep_predictions else None
        if n < 2 or np.ptp(vel[:, 0]) == 0.0 or np.ptp(vel[:, 1]) == 0.0:
            results.append(SessionResult(s, n, None, skipped=True,
                                         predictions=kept))
            continue
        rx = r_squared(preds[:, 0], vel[:, 0])
        ry = r_squared(preds[:, 1], vel[:, 1])
        results.append(SessionResult(s, n, 0.5 * (rx + ry), rx, ry,
                                     predictions=kept))
    return results


def fit_open_loop_quantizers(dataset: SpikeDataset, train_fraction: float,
                             n_classes: int) -> tuple[AxisQuantizer, AxisQuantizer]:
    sl = dataset.session_slice(0)
    n_train = max(1, int(train_fraction * (sl.stop - sl.start)))
    vel = dataset.velocities[sl][:n_train]
    return (fit_quantizer(vel[:, 0], n_classes),
            fit_quantizer(vel[:, 1], n_classes))


def pretrain_from_dataset(cfg: ExperimentConfig, dataset: SpikeDataset,
                          quantizers=None):
    """Stage-1 supervised training on the leading share of session 1.

    Returns (net, quantizers, stats, train_r2) where train_r2 is the
    streaming accuracy of the trained net on the training split itself.
    """
    if dataset.bin_width != cfg.network.bin_window:
        raise ConfigError(
            f"dataset bin width {dataset.bin_width} != network bin_window "
            f"{cfg.network.bin_window}")
    if quantizers is None:
        qx, qy = fit_open_loop_quantizers(dataset, cfg.train_fraction,
                                          cfg.learner.n_classes)
    else:
        qx, qy = quantizers
    sl = dataset.session_slice(0)
    n_train = max(1, int(cfg.train_fraction * (sl.stop - sl.start)))
    spikes = dataset.spikes[sl][:n_train]
    vel = dataset.velocities[sl][:n_train]
    labels = np.column_stack([qx.quantize_many(vel[:, 0]),
                              qy.quantize_many(vel[:, 1])])

    init_rng = np.random.default_rng(cfg.pretrain.seed)
    net = SpikingNetwork.initialize(cfg.network, init_rng)
    stats = pretrain(net, spikes, labels, cfg.pretrain)

    train_set = SpikeDataset(spikes=spikes, velocities=vel,
                             bin_width=dataset.bin_width, session_starts=[0])
    eval_net = net.copy()
    eval_net.reset_states()
    none_settings = type(cfg.learner)(kind="none",
                                      n_classes=cfg.learner.n_classes)
    val = run_open_loop(eval_net, train_set, qx, qy, none_settings)
    train_r2 = val[0].r2
    return net, (qx, qy), stats, train_r2


# ---------------------------------------------------------------------------
# closed loop


def run_trial(net, brain, env, learner, env_rng, trial_index,
              ledger=None, perturbed=False, record_traj=False, seed=0,
              max_steps=100000) -> TrialRecord:
    """One center-out reach, decoding every bin until success or timeout."""
    env.new_trial(env_rng)
    net.reset_states()
    c = env.quantizer.n_bins
    q = env.quantizer
    steps = 0
    reward_hits = 0
    traj = []
    while True:
        control = env.control_signal()
        x = brain.generate(control)
        _, mem, hidden = net.forward(x, ledger)
        if isinstance(learner, BanditronLearner):
            actions = learner.act(mem)
            cx, cy = actions[0][1], actions[1][1]      # play the explored class
        else:
            cx, cy = predict_class(mem[:c]), predict_class(mem[c:])
        v = (q.reconstruct(cx), q.reconstruct(cy))
        rx, ry, status = env.step(v)
        if isinstance(learner, BanditronLearner):
            learner.apply(net, hidden[-1], actions, (rx, ry), ledger)
        elif isinstance(learner, AgrelLearner):
            learner.update(net, x, hidden, mem, (rx, ry), ledger)
        reward_hits += rx + ry
        steps += 1
        if record_traj:
            traj.append((round(env.elapsed, 6), float(env.cursor[0]),
                         float(env.cursor[1]), v[0], v[1], cx, cy, rx, ry))
        if status != CenterOutEnv.ONGOING or steps >= max_steps:
            break
    success = status == CenterOutEnv.SUCCESS
    ttt = env.time_to_target if success else env.max_duration
    return TrialRecord(trial_index=trial_index, success=success,
                       time_to_target=float(ttt), n_steps=steps,
                       perturbed=perturbed, seed=seed,
                       reward_rate=reward_hits / (2 * steps),
                       target=(float(env.target[0]), float(env.target[1])),
                       trajectory=traj)


def stage2_schedule(settings) -> list[float]:
    t = settings.trials
    if t <= 0:
        return []
    if t == 1:
        return [settings.lr_start]
    ratio = (settings.lr_end / settings.lr_start) ** (1.0 / (t - 1))
    return [settings.lr_start * ratio ** i for i in range(t)]


def stage2_adapt(net, brain, env, learner, settings, env_rng):
    """Closed-loop warm-up trials with the geometric learning-rate decay.

    Mutates the net in place; with no learner this is a no-op (plain
    evaluation would not change any weight).
    """
    if learner is None:
        return
    schedule = stage2_schedule(settings)
    if isinstance(learner, BanditronLearner):
        saved = learner.learning_rate
    else:
        saved = learner.alpha
    try:
        for trial, lr in enumerate(schedule):
            if isinstance(learner, BanditronLearner):
                learner.learning_rate = lr
            else:
                learner.alpha = lr
            run_trial(net, brain, env, learner, env_rng, trial)
    finally:
        if isinstance(learner, BanditronLearner):
            learner.learning_rate = saved
        else:
            learner.alpha = saved


@dataclass
class ClosedLoopResult:
    seed: int
    records: list
    ledger: ResourceLedger


def run_closed_loop_seed(stage1_net: SpikingNetwork, cfg: ExperimentConfig,
                         sim_seed: int, learner_settings=None,
                         perturbation=None, adapted_net=None
                         ) -> ClosedLoopResult:
    """One simulation: stage-2 adaptation, then `trials` reaches with the
    perturbation applied at its onset trial.

    The brain population is shared across seeds (built from ops.seed); the
    per-seed randomness covers spike noise, target angles, exploration and
    the perturbed-neuron selection. Pass `adapted_net` to reuse a cached
    stage-2 result (it is copied, never mutated).
    """
    learner_settings = learner_settings or cfg.learner
    perturbation = perturbation or PerturbationSpec(
        kind=cfg.perturbation.kind, ratio=cfg.perturbation.ratio,
        onset_trial=cfg.perturbation.onset_trial)
    seeds = child_seeds(sim_seed)

    if adapted_net is None:
        net = stage2_for_seed(stage1_net, cfg, sim_seed, learner_settings)
    else:
        net = adapted_net.copy()
    net.reset_states()

    brain = make_brain(cfg)
    brain.reseed_stream(seeds[3])
    env = make_env(cfg)
    learner = build_learner(learner_settings,
                            rng=np.random.default_rng(seeds[4]))
    env_rng = np.random.default_rng(seeds[5])
    ledger = ResourceLedger(
        footprint_bits=footprint(cfg.network.layer_sizes))

    records = []
    for trial in range(cfg.trials):
        if perturbation.ratio > 0.0 and trial == perturbation.onset_trial:
            apply_perturbation(brain, PerturbationSpec(
                kind=perturbation.kind, ratio=perturbation.ratio,
                onset_trial=perturbation.onset_trial, seed=seeds[6]))
        perturbed = perturbation.ratio > 0.0 and trial >= perturbation.onset_trial
        records.append(run_trial(
            net, brain, env, learner, env_rng, trial, ledger=ledger,
            perturbed=perturbed, record_traj=cfg.record_trajectories,
            seed=sim_seed))
    return ClosedLoopResult(seed=sim_seed, records=records, ledger=ledger)


def stage2_for_seed(stage1_net, cfg, sim_seed, learner_settings):
    """Stage-2-adapted copy of the stage-1 net for one seed."""
    seeds = child_seeds(sim_seed)
    net = stage1_net.copy()
    net.reset_states()
    learner = build_learner(learner_settings,
                            rng=np.random.default_rng(seeds[1]))
    if learner is not None:
        brain = make_brain(cfg)
        brain.reseed_stream(seeds[0])
        env = make_env(cfg)
        stage2_adapt(net, brain, env, learner, cfg.stage2,
                     np.random.default_rng(seeds[2]))
    return net


def run_closed_loop(stage1_net, cfg: ExperimentConfig,
                    learner_settings=None, perturbation=None
                    ) -> list[ClosedLoopResult]:
    """All configured seeds, merged in seed order."""
    return [run_closed_loop_seed(stage1_net, cfg, s, learner_settings,
                                 perturbation) for s in cfg.seeds]


# ---------------------------------------------------------------------------
# sweep


@dataclass
class SweepCell:
    kind: str
    ratio: float
    learner: str
    mean_pre: float
    mean_post: float
    mean_post_tail: float


def run_sweep(stage1_net, cfg: ExperimentConfig, kinds=None, ratios=None,
              learners=("none", "banditron", "agrel"),
              tail: int = 25) -> list[SweepCell]:
    """Grid of closed-loop runs over perturbation kinds x ratios x learners.

    Stage-2 adaptation depends only on (learner, seed) so it is computed
    once per pair and reused; ratio-0 cells are kind-independent and are
    likewise computed once per learner. Windows: pre = trials before onset,
    post = onset to end, post tail = last `tail` trials.
    """
    kinds = kinds or list(PerturbationSpec.KINDS)
    ratios = cfg.sweep_ratios if ratios is None else ratios
    onset = cfg.perturbation.onset_trial
    cells = []
    adapted = {}
    zero_cache = {}
    for learner_kind in learners:
        settings = _learner_variant(cfg.learner, learner_kind)
        for seed in cfg.seeds:
            if (learner_kind, seed) not in adapted:
                adapted[(learner_kind, seed)] = stage2_for_seed(
                    stage1_net, cfg, seed, settings)
        for kind in kinds:
            for ratio in ratios:
                if ratio == 0.0 and learner_kind in zero_cache:
                    pre, post, tail_mean = zero_cache[learner_kind]
                else:
                    spec = PerturbationSpec(kind=kind, ratio=ratio,
                                            onset_trial=onset)
                    results = [run_closed_loop_seed(
                        stage1_net, cfg, seed, settings, spec,
                        adapted_net=adapted[(learner_kind, seed)])
                        for seed in cfg.seeds]
                    records = [r for res in results for r in res.records]
                    pre = _window_mean(records, 0, onset)
                    post = _window_mean(records, onset, cfg.trials)
                    tail_mean = _window_mean(records, cfg.trials - tail,
                                             cfg.trials)
                    if ratio == 0.0:
                        zero_cache[learner_kind] = (pre, post, tail_mean)
                cells.append(SweepCell(kind, ratio, learner_kind,
                                       pre, post, tail_mean))
    return cells


def _learner_variant(base, kind):
    out = type(base)(kind=kind, epsilon=base.epsilon,
                     learning_rate=base.learning_rate, alpha=base.alpha,
                     n_classes=base.n_classes)
    return out


def _window_mean(records, lo, hi):
    vals = [r.time_to_target for r in records if lo <= r.trial_index < hi]
    return float(np.mean(vals)) if vals else float("nan")


# ---------------------------------------------------------------------------
# stage-1 training from the simulated brain


def collect_ops_reaches(cfg: ExperimentConfig, n_trials: int, seed: int):
    """(spike bins, per-axis labels) from ideal reaches on the simulated
    brain: the cursor moves at the reconstructed label velocity, so the
    training data visits the same approach and hold dynamics the decoder
    will face.
    """
    seeds = child_seeds(seed)
    brain = make_brain(cfg)
    brain.reseed_stream(seeds[0])
    env = make_env(cfg)
    env_rng = np.random.default_rng(seeds[1])
    q = env.quantizer
    xs, ys = [], []
    for _ in range(n_trials):
        env.new_trial(env_rng)
        while True:
            control = env.control_signal()
            x = brain.generate(control)
            lx, ly = env.intended_labels()
            xs.append(x)
            ys.append((lx, ly))
            _, _, status = env.step((q.reconstruct(lx), q.reconstruct(ly)))
            if status != CenterOutEnv.ONGOING:
                break
    return np.array(xs), np.array(ys, dtype=np.int64)


def pretrain_from_ops(cfg: ExperimentConfig):
    """Stage-1 training for the closed loop; returns (net, stats)."""
    spikes, labels = collect_ops_reaches(cfg, cfg.pretrain_trials,
                                         cfg.pretrain.seed)
    init_rng = np.random.default_rng(cfg.pretrain.seed)
    net = SpikingNetwork.initialize(cfg.network, init_rng)
    stats = pretrain(net, spikes, labels, cfg.pretrain)
    return net, stats
