"""Experiment configuration: construction, YAML round-trip, validation.

Configs are versioned nested key/value documents; unknown keys are an
error so typos fail loudly. `configs/closed_loop.yaml` and
`configs/open_loop.yaml` carry the reference defaults.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import yaml

from .errors import ConfigError
from .network import NetworkConfig
from .pretrain import PretrainConfig

CONFIG_VERSION = 1

MODES = ("pretrain", "open_loop", "closed_loop", "sweep", "synth", "report")
LEARNERS = ("none", "banditron", "agrel")


def _build(cls, d: dict, where: str):
    if not isinstance(d, dict):
        raise ConfigError(f"{where}: expected a mapping, got {type(d).__name__}")
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(d) - names
    if unknown:
        raise ConfigError(f"{where}: unknown keys {sorted(unknown)}")
    try:
        return cls(**d)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"{where}: {e}") from e


@dataclass
class LearnerSettings:
    kind: str = "none"
    epsilon: float = 0.05
    learning_rate: float = 0.01     # bandit update scale (closed loop)
    alpha: float = 0.0005           # attention-gated update scale
    n_classes: int = 4

    def __post_init__(self):
        if self.kind not in LEARNERS:
            raise ConfigError(f"unknown learner {self.kind!r}")


@dataclass
class OpsSettings:
    n_neurons: int = 46
    bin_seconds: float = 0.01
    noise_sigma: float = 0.3
    lambda_min_range: list = field(default_factory=lambda: [0.0, 5.0])
    lambda_max_range: list = field(default_factory=lambda: [40.0, 100.0])
    seed: int = 1234


@dataclass
class EnvSettings:
    target_distance: float = 80.0
    accept_radius: float = 4.0
    hold_required: float = 0.5
    max_duration: float = 3.0
    dt: float = 0.01
    grace: float = 0.5
    damping: float = 0.0025
    stop_radius: float = 2.0
    intent_speed: float = 90.0
    v_max: float = 120.0


@dataclass
class PerturbSettings:
    kind: str = "loss_of_neurons"
    ratio: float = 0.0
    onset_trial: int = 50


@dataclass
class Stage2Settings:
    trials: int = 100
    lr_start: float = 5e-8
    lr_end: float = 5e-10


@dataclass
class SynthSettings:
    n_sessions: int = 5
    drift_strength: float = 1.0
    n_channels: int = 96
    bins_per_session: int = 12000
    bin_width: float = 0.004


@dataclass
class PathsSettings:
    dataset: str = ""
    checkpoint: str = ""
    out: str = "out"


@dataclass
class ExperimentConfig:
    version: int = CONFIG_VERSION
    mode: str = "closed_loop"
    seeds: list = field(default_factory=lambda: list(range(10)))
    trials: int = 100
    pretrain_trials: int = 300      # reaches generating stage-1 data (closed loop)
    pretrain_source: str = "ops"    # ops | dataset
    train_fraction: float = 0.8     # leading share of session 1 used to train
    sweep_ratios: list = field(default_factory=lambda: [0.0, 0.3, 0.6, 0.9])
    record_trajectories: bool = False
    network: NetworkConfig = field(default_factory=lambda: NetworkConfig(
        layer_sizes=[46, 65, 40, 8], beta=0.5, dropout=0.3,
        bin_window=0.01, stride=0.01))
    learner: LearnerSettings = field(default_factory=LearnerSettings)
    ops: OpsSettings = field(default_factory=OpsSettings)
    env: EnvSettings = field(default_factory=EnvSettings)
    perturbation: PerturbSettings = field(default_factory=PerturbSettings)
    stage2: Stage2Settings = field(default_factory=Stage2Settings)
    pretrain: PretrainConfig = field(default_factory=lambda: PretrainConfig(
        epochs=5, learning_rate=0.005))
    synth: SynthSettings = field(default_factory=SynthSettings)
    paths: PathsSettings = field(default_factory=PathsSettings)
    quantizers: dict = field(default_factory=dict)   # fitted edges, per axis

    _NESTED = {
        "network": NetworkConfig, "learner": LearnerSettings,
        "ops": OpsSettings, "env": EnvSettings,
        "perturbation": PerturbSettings, "stage2": Stage2Settings,
        "pretrain": PretrainConfig, "synth": SynthSettings,
        "paths": PathsSettings,
    }

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        d = dict(d)
        version = d.pop("version", CONFIG_VERSION)
        if version != CONFIG_VERSION:
            raise ConfigError(f"unsupported config version {version}")
        for key, sub_cls in cls._NESTED.items():
            if key in d:
                d[key] = _build(sub_cls, d[key], key)
        cfg = _build(cls, {"version": version, **d}, "config")
        cfg.validate()
        return cfg

    def validate(self):
        if self.mode not in MODES:
            raise ConfigError(f"unknown mode {self.mode!r}")
        if self.mode in ("closed_loop", "sweep") and not self.seeds:
            raise ConfigError(f"mode {self.mode} requires a nonempty seed list")
        if self.trials < 1:
            raise ConfigError("trials must be >= 1")
        if self.pretrain_source not in ("ops", "dataset"):
            raise ConfigError("pretrain_source must be 'ops' or 'dataset'")
        if self.pretrain_source == "dataset" and self.mode == "pretrain" \
                and not self.paths.dataset:
            raise ConfigError("dataset pretraining needs paths.dataset")
        if any(not 0.0 <= r < 1.0 for r in self.sweep_ratios):
            raise ConfigError("sweep ratios must lie in [0, 1)")
        if self.network.layer_sizes[-1] != 2 * self.learner.n_classes:
            raise ConfigError(
                "output layer must hold n_classes units per axis "
                f"({self.network.layer_sizes[-1]} != 2*{self.learner.n_classes})")

    def to_dict(self) -> dict:
        out = dataclasses.asdict(self)
        return out

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        with open(path) as f:
            data = yaml.safe_load(f)
        if data is None:
            data = {}
        return cls.from_dict(data)

    def save(self, path):
        with open(path, "w") as f:
            yaml.safe_dump(self.to_dict(), f, sort_keys=True)
