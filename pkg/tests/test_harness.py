import json

import numpy as np
import pytest

from snnbmi.codec import AxisQuantizer
from snnbmi.config import ExperimentConfig
from snnbmi.dataset import SpikeDataset, synth_dataset
from snnbmi.environment import PerturbationSpec
from snnbmi.errors import ConfigError
from snnbmi.harness import (child_seeds, pretrain_from_ops,
                            run_closed_loop_seed, run_open_loop, run_sweep,
                            stage2_adapt, stage2_schedule, stage2_for_seed,
                            make_brain, make_env, build_learner)
from snnbmi.metrics import ResourceLedger
from snnbmi.network import NetworkConfig, SpikingNetwork


def tiny_cfg(learner="none", trials=6, n_neurons=12):
    cfg = ExperimentConfig()
    cfg.network = NetworkConfig(layer_sizes=[n_neurons, 10, 9, 8], beta=0.5,
                                dropout=0.0, bin_window=0.01, stride=0.01)
    cfg.ops.n_neurons = n_neurons
    cfg.learner.kind = learner
    cfg.trials = trials
    cfg.seeds = [0]
    cfg.stage2.trials = 2
    cfg.perturbation.ratio = 0.0
    return cfg


def tiny_net(cfg, seed=0):
    return SpikingNetwork.initialize(cfg.network, np.random.default_rng(seed))


def records_key(records):
    return json.dumps([[r.trial_index, r.success, r.time_to_target,
                        r.n_steps, r.reward_rate] for r in records])


class TestClosedLoopDeterminism:
    @pytest.mark.parametrize("learner", ["none", "banditron", "agrel"])
    def test_same_seed_bitwise_identical(self, learner):
        cfg = tiny_cfg(learner)
        net = tiny_net(cfg)
        a = run_closed_loop_seed(net, cfg, 3)
        b = run_closed_loop_seed(net, cfg, 3)
        assert records_key(a.records) == records_key(b.records)

    def test_different_seeds_differ(self):
        cfg = tiny_cfg("banditron")
        net = tiny_net(cfg)
        a = run_closed_loop_seed(net, cfg, 3)
        b = run_closed_loop_seed(net, cfg, 4)
        assert records_key(a.records) != records_key(b.records)

    def test_input_net_never_mutated(self):
        cfg = tiny_cfg("agrel")
        net = tiny_net(cfg)
        before = [w.tobytes() for w in net.weights]
        run_closed_loop_seed(net, cfg, 1)
        assert [w.tobytes() for w in net.weights] == before


class TestPerturbationOnset:
    def test_trials_before_onset_unaffected(self):
        cfg = tiny_cfg("none", trials=8)
        cfg.perturbation = type(cfg.perturbation)(
            kind="loss_of_neurons", ratio=0.5, onset_trial=4)
        net = tiny_net(cfg)
        perturbed = run_closed_loop_seed(net, cfg, 2)
        cfg0 = tiny_cfg("none", trials=8)
        clean = run_closed_loop_seed(net, cfg0, 2)
        assert records_key(perturbed.records[:4]) == records_key(clean.records[:4])
        assert [r.perturbed for r in perturbed.records] == [False] * 4 + [True] * 4

    def test_onset_trial_sees_perturbed_brain(self):
        # with every neuron-loss the onset trial must behave differently
        cfg = tiny_cfg("none", trials=6)
        cfg.perturbation = type(cfg.perturbation)(
            kind="loss_of_neurons", ratio=0.9, onset_trial=3)
        net = tiny_net(cfg)
        res = run_closed_loop_seed(net, cfg, 2)
        cfg0 = tiny_cfg("none", trials=6)
        clean = run_closed_loop_seed(net, cfg0, 2)
        assert records_key([res.records[3]]) != records_key([clean.records[3]])


class TestLedgerAccounting:
    def test_learner_none_has_zero_backward(self):
        cfg = tiny_cfg("none")
        net = tiny_net(cfg)
        res = run_closed_loop_seed(net, cfg, 0)
        assert res.ledger.bwd_macs == 0
        assert res.ledger.bwd_mem_access == 0
        assert res.ledger.fwd_mem_access > 0

    def test_forward_counts_every_step(self):
        cfg = tiny_cfg("none")
        net = tiny_net(cfg)
        res = run_closed_loop_seed(net, cfg, 0)
        steps = sum(r.n_steps for r in res.records)
        assert res.ledger.forward_steps == steps
        # the per-neuron decay multiply runs every layer every step
        assert res.ledger.fwd_macs == steps * sum([10, 9, 8])

    def test_learners_record_backward(self):
        for kind in ("banditron", "agrel"):
            cfg = tiny_cfg(kind)
            net = tiny_net(cfg)
            res = run_closed_loop_seed(net, cfg, 0)
            assert res.ledger.bwd_mem_access > 0

    def test_footprint_recorded(self):
        cfg = tiny_cfg("none")
        net = tiny_net(cfg)
        res = run_closed_loop_seed(net, cfg, 0)
        want = (12 * 10 + 10 * 9 + 9 * 8 + 2 * (10 + 9 + 8)) * 32
        assert res.ledger.footprint_bits == want


class TestStage2:
    def test_schedule_endpoints_geometric(self):
        cfg = tiny_cfg()
        cfg.stage2.trials = 100
        sched = stage2_schedule(cfg.stage2)
        assert sched[0] == pytest.approx(5e-8)
        assert sched[-1] == pytest.approx(5e-10)
        ratios = [b / a for a, b in zip(sched, sched[1:])]
        assert np.allclose(ratios, ratios[0])

    def test_zero_trials_no_change(self):
        cfg = tiny_cfg("banditron")
        cfg.stage2.trials = 0
        net = tiny_net(cfg)
        adapted = stage2_for_seed(net, cfg, 0, cfg.learner)
        assert all(np.array_equal(a, b)
                   for a, b in zip(adapted.weights, net.weights))

    def test_no_learner_is_plain_evaluation(self):
        cfg = tiny_cfg("none")
        net = tiny_net(cfg)
        adapted = stage2_for_seed(net, cfg, 0, cfg.learner)
        assert all(np.array_equal(a, b)
                   for a, b in zip(adapted.weights, net.weights))

    def test_restores_learner_rate(self):
        cfg = tiny_cfg("banditron")
        learner = build_learner(cfg.learner, np.random.default_rng(0))
        brain = make_brain(cfg)
        env = make_env(cfg)
        net = tiny_net(cfg)
        before = learner.learning_rate
        stage2_adapt(net, brain, env, learner, cfg.stage2,
                     np.random.default_rng(1))
        assert learner.learning_rate == before


class TestOpenLoopHarness:
    def make_dataset(self, n=300, channels=12, sessions=(0, 120, 240)):
        rng = np.random.default_rng(0)
        return SpikeDataset(
            spikes=(rng.random((n, channels)) < 0.25).astype(np.uint8),
            velocities=rng.normal(0, 10, (n, 2)), bin_width=0.01,
            session_starts=list(sessions))

    def quantizers(self):
        return AxisQuantizer(-30, 30, 4), AxisQuantizer(-30, 30, 4)

    def test_streaming_no_lookahead(self):
        cfg = tiny_cfg("banditron")
        ds = self.make_dataset()
        qx, qy = self.quantizers()
        net = tiny_net(cfg)
        full = run_open_loop(net.copy(), ds, qx, qy, cfg.learner, seed=1,
                             keep_predictions=True)
        cut = SpikeDataset(spikes=ds.spikes[:150], velocities=ds.velocities[:150],
                           bin_width=0.01, session_starts=[0, 120])
        part = run_open_loop(net.copy(), cut, qx, qy, cfg.learner, seed=1,
                             keep_predictions=True)
        assert np.array_equal(full[0].predictions, part[0].predictions)
        assert np.array_equal(full[1].predictions[:30], part[1].predictions)

    def test_single_bin_session_flagged(self):
        ds = self.make_dataset(sessions=(0, 299))
        cfg = tiny_cfg("none")
        qx, qy = self.quantizers()
        res = run_open_loop(tiny_net(cfg), ds, qx, qy, cfg.learner)
        assert res[1].skipped and res[1].r2 is None
        assert not res[0].skipped

    def test_channel_mismatch_rejected(self):
        ds = self.make_dataset(channels=7)
        cfg = tiny_cfg("none")
        qx, qy = self.quantizers()
        with pytest.raises(ConfigError):
            run_open_loop(tiny_net(cfg), ds, qx, qy, cfg.learner)

    def test_learner_none_fixed_weights(self):
        ds = self.make_dataset()
        cfg = tiny_cfg("none")
        net = tiny_net(cfg)
        qx, qy = self.quantizers()
        before = [w.tobytes() for w in net.weights]
        run_open_loop(net, ds, qx, qy, cfg.learner)
        assert [w.tobytes() for w in net.weights] == before


class TestSweep:
    def test_matrix_shape_and_zero_ratio_sharing(self):
        cfg = tiny_cfg("none", trials=4)
        cfg.seeds = [0]
        cfg.perturbation.onset_trial = 2
        cfg.sweep_ratios = [0.0, 0.5]
        net = tiny_net(cfg)
        cells = run_sweep(net, cfg, learners=("none", "banditron"), tail=2)
        assert len(cells) == 3 * 2 * 2   # kinds x ratios x learners
        zero_cells = [c for c in cells if c.ratio == 0.0 and c.learner == "none"]
        assert len({(c.mean_pre, c.mean_post) for c in zero_cells}) == 1

    def test_stage2_cache_matches_direct_run(self):
        cfg = tiny_cfg("banditron", trials=4)
        cfg.perturbation.onset_trial = 2
        net = tiny_net(cfg)
        spec = PerturbationSpec(kind="electrode_shift", ratio=0.5,
                                onset_trial=2)
        direct = run_closed_loop_seed(net, cfg, 0, cfg.learner, spec)
        adapted = stage2_for_seed(net, cfg, 0, cfg.learner)
        cached = run_closed_loop_seed(net, cfg, 0, cfg.learner, spec,
                                      adapted_net=adapted)
        assert records_key(direct.records) == records_key(cached.records)


class TestChildSeeds:
    def test_deterministic_and_distinct(self):
        a = child_seeds(7)
        assert a == child_seeds(7)
        assert len(set(a)) == len(a)
        assert a != child_seeds(8)


class TestOpsPretrainPath:
    def test_runs_and_learns_something(self):
        cfg = tiny_cfg("none")
        cfg.pretrain_trials = 10
        cfg.pretrain.epochs = 2
        net, stats = pretrain_from_ops(cfg)
        assert len(stats.epoch_loss) == 2
        assert net.config.layer_sizes == cfg.network.layer_sizes
