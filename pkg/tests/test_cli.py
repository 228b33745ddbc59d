import json
from pathlib import Path

import pytest
import yaml

from snnbmi.cli import main
from snnbmi.config import ExperimentConfig


@pytest.fixture
def small_open_cfg(tmp_path):
    cfg = ExperimentConfig.load("configs/open_loop.yaml")
    cfg.synth.n_sessions = 2
    cfg.synth.bins_per_session = 1200
    cfg.pretrain.epochs = 3
    cfg.paths.dataset = str(tmp_path / "synth.spkd")
    cfg.paths.checkpoint = str(tmp_path / "stage1.snnw")
    cfg.paths.out = str(tmp_path / "out")
    p = tmp_path / "open.yaml"
    cfg.save(p)
    return p, tmp_path


@pytest.fixture
def small_closed_cfg(tmp_path):
    cfg = ExperimentConfig.load("configs/closed_loop.yaml")
    cfg.seeds = [0, 1]
    cfg.trials = 6
    cfg.stage2.trials = 2
    cfg.pretrain_trials = 15
    cfg.pretrain.epochs = 1
    cfg.perturbation.ratio = 0.5
    cfg.perturbation.onset_trial = 3
    cfg.paths.checkpoint = str(tmp_path / "stage1.snnw")
    cfg.paths.out = str(tmp_path / "out")
    p = tmp_path / "closed.yaml"
    cfg.save(p)
    return p, tmp_path


class TestOpenLoopPipeline:
    def test_synth_pretrain_openloop_report(self, small_open_cfg):
        cfg_path, tmp = small_open_cfg
        assert main(["synth", "--config", str(cfg_path), "--seed", "0"]) == 0
        assert (tmp / "synth.spkd").exists()
        assert main(["pretrain", "--config", str(cfg_path)]) == 0
        assert (tmp / "stage1.snnw").exists()
        out = tmp / "out"
        resolved = out / "resolved_config.yaml"
        assert resolved.exists()
        saved = yaml.safe_load(resolved.read_text())
        assert saved["quantizers"]["x"]["n_bins"] == 4
        log = (out / "pretrain_log.jsonl").read_text().strip().splitlines()
        assert json.loads(log[0])["epoch"] == 0
        assert "train_r2" in json.loads(log[-1])

        assert main(["open-loop", "--config", str(cfg_path),
                     "--learner", "none"]) == 0
        rows = [json.loads(l) for l in
                (out / "open_loop_none.jsonl").read_text().splitlines()]
        assert len(rows) == 2 and all("r2" in r for r in rows)

        assert main(["report", "--config", str(cfg_path)]) == 0
        assert (out / "resource_table.csv").exists()
        assert (out / "open_loop_r2.png").exists()

    def test_missing_dataset_is_data_error(self, small_open_cfg):
        cfg_path, tmp = small_open_cfg
        assert main(["pretrain", "--config", str(cfg_path)]) == 3

    def test_openloop_without_pretrain_is_config_error(self, small_open_cfg):
        cfg_path, tmp = small_open_cfg
        main(["synth", "--config", str(cfg_path), "--seed", "0"])
        # checkpoint and quantizers missing
        assert main(["open-loop", "--config", str(cfg_path)]) == 3


class TestClosedLoopPipeline:
    def test_pretrain_closedloop_sweep_report(self, small_closed_cfg):
        cfg_path, tmp = small_closed_cfg
        assert main(["pretrain", "--config", str(cfg_path)]) == 0
        assert main(["closed-loop", "--config", str(cfg_path),
                     "--learner", "banditron"]) == 0
        out = tmp / "out"
        rows = [json.loads(l) for l in
                (out / "trials_banditron.jsonl").read_text().splitlines()]
        assert len(rows) == 12  # 2 seeds x 6 trials
        assert {r["seed"] for r in rows} == {0, 1}
        ledger = json.loads((out / "ledger_banditron.json").read_text())
        assert ledger["bwd_mem_access"] > 0

        cfg = ExperimentConfig.load(cfg_path)
        cfg.sweep_ratios = [0.0, 0.5]
        cfg.seeds = [0]
        cfg.save(cfg_path)
        assert main(["sweep", "--config", str(cfg_path)]) == 0
        sweep = (out / "sweep.csv").read_text().splitlines()
        assert len(sweep) == 1 + 3 * 2 * 3

        assert main(["report", "--config", str(cfg_path)]) == 0
        assert (out / "resource_table.csv").exists()
        assert (out / "time_to_target.png").exists()
        assert (out / "sweep.png").exists()

    def test_byte_determinism(self, small_closed_cfg):
        cfg_path, tmp = small_closed_cfg
        main(["pretrain", "--config", str(cfg_path)])
        main(["closed-loop", "--config", str(cfg_path), "--learner", "agrel"])
        first = (tmp / "out" / "trials_agrel.jsonl").read_bytes()
        main(["closed-loop", "--config", str(cfg_path), "--learner", "agrel"])
        assert (tmp / "out" / "trials_agrel.jsonl").read_bytes() == first

    def test_flag_overrides(self, small_closed_cfg):
        cfg_path, tmp = small_closed_cfg
        main(["pretrain", "--config", str(cfg_path)])
        assert main(["closed-loop", "--config", str(cfg_path),
                     "--learner", "none", "--trials", "4", "--seed", "7",
                     "--perturb-kind", "rate_drift",
                     "--perturb-ratio", "0.4"]) == 0
        rows = [json.loads(l) for l in
                (tmp / "out" / "trials_none.jsonl").read_text().splitlines()]
        assert len(rows) == 4
        assert {r["seed"] for r in rows} == {7}

    def test_trajectory_figure_path(self, small_closed_cfg):
        cfg_path, tmp = small_closed_cfg
        cfg = ExperimentConfig.load(cfg_path)
        cfg.record_trajectories = True
        cfg.trials = 2
        cfg.seeds = [0]
        cfg.save(cfg_path)
        main(["pretrain", "--config", str(cfg_path)])
        assert main(["closed-loop", "--config", str(cfg_path),
                     "--learner", "none"]) == 0
        assert (tmp / "out" / "trajectories.jsonl").exists()
        assert main(["report", "--config", str(cfg_path)]) == 0
        assert (tmp / "out" / "trajectories.png").exists()


class TestErrors:
    def test_bad_config_exit_code(self, tmp_path):
        p = tmp_path / "bad.yaml"
        p.write_text("mode: nonsense\n")
        assert main(["closed-loop", "--config", str(p)]) == 2

    def test_corrupt_dataset_exit_code(self, small_open_cfg):
        cfg_path, tmp = small_open_cfg
        (tmp / "synth.spkd").write_bytes(b"JUNKJUNKJUNK")
        assert main(["pretrain", "--config", str(cfg_path)]) == 3
