"""Adaptive spiking-network intention decoder with a closed-loop
cursor-control simulator and synaptic-operation cost accounting."""

from .codec import AxisQuantizer, bin_spikes, fit_quantizer
from .config import ExperimentConfig
from .dataset import SpikeDataset, ingest_spkd, synth_dataset, write_spkd
from .environment import (CenterOutEnv, OpsBrain, PerturbationSpec,
                          TrialRecord, apply_perturbation)
from .learning import AgrelLearner, BanditronLearner, hinge_loss, predict_class
from .metrics import (ResourceLedger, SparsityProfile, agrel_backward_cost,
                      aggregate_time_to_target, banditron_backward_cost,
                      clsnn_backward_estimate, egru_cost_estimate, footprint,
                      footprint_kb, forward_cost, r_squared, r_squared_2d)
from .network import (LifLayer, LifParams, NetworkConfig, SpikingNetwork,
                      load_weights, save_weights)
from .pretrain import AdamW, PretrainConfig, PretrainStats, pretrain

__version__ = "0.1.0"

__all__ = [
    "AxisQuantizer", "bin_spikes", "fit_quantizer",
    "ExperimentConfig",
    "SpikeDataset", "ingest_spkd", "synth_dataset", "write_spkd",
    "CenterOutEnv", "OpsBrain", "PerturbationSpec", "TrialRecord",
    "apply_perturbation",
    "AgrelLearner", "BanditronLearner", "hinge_loss", "predict_class",
    "ResourceLedger", "SparsityProfile", "agrel_backward_cost",
    "aggregate_time_to_target", "banditron_backward_cost",
    "clsnn_backward_estimate", "egru_cost_estimate", "footprint",
    "footprint_kb", "forward_cost", "r_squared", "r_squared_2d",
    "LifLayer", "LifParams", "NetworkConfig", "SpikingNetwork",
    "load_weights", "save_weights",
    "AdamW", "PretrainConfig", "PretrainStats", "pretrain",
]
