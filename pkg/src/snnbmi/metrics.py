"""Accuracy metrics and the analytic synaptic-operation cost model.

The cost functions are written in plain arithmetic (no numpy) so they accept
floats or exact Fractions; counts are reals because sparsity factors are
averages. Layer i of a net sized [N0..Nk] maps N_{i-1} inputs to N_i outputs.

Cost conventions, per processed bin:
  - forward SNN layer: memory access = (1-s_in)*N_i*N_{i-1} + 2*N_i
    (one fetch per weight touched by a nonzero input, plus a read and a
    write of each neuron's state); ACs equal memory accesses; MACs = N_i
    (the single decay multiply per neuron).
  - forward ANN layer: memory access = (1-s_in)*N_i*N_{i-1} + N_i,
    ACs likewise, MACs = (1-s_in)*N_i*N_{i-1}.
  - bandit last-layer update: both MACs and accesses are
    (1-s_in)*N_in*2, the factor 2 covering the two independent axes.
  - attention-gated update: summed backward/feedback/error components per
    layer (see agrel_backward_cost).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


# ---------------------------------------------------------------------------
# accuracy


def r_squared(pred, actual) -> float:
    """Coefficient of determination 1 - SS_res/SS_tot."""
    p = np.asarray(pred, dtype=float)
    a = np.asarray(actual, dtype=float)
    if p.shape != a.shape or a.size == 0:
        raise ValueError("pred and actual must be equal-length and nonempty")
    ss_tot = float(np.sum((a - a.mean()) ** 2))
    if ss_tot == 0.0:
        raise ValueError("actual sequence is constant; R^2 undefined")
    ss_res = float(np.sum((a - p) ** 2))
    return 1.0 - ss_res / ss_tot


def r_squared_2d(pred_xy, actual_xy) -> float:
    """Mean of the per-axis coefficients (x and y scored independently)."""
    pred_xy = np.asarray(pred_xy, dtype=float)
    actual_xy = np.asarray(actual_xy, dtype=float)
    rx = r_squared(pred_xy[:, 0], actual_xy[:, 0])
    ry = r_squared(pred_xy[:, 1], actual_xy[:, 1])
    return 0.5 * (rx + ry)


def aggregate_time_to_target(records, window) -> float:
    """Mean time-to-target over a trial-index window, pooled across seeds.

    `records` is an iterable of TrialRecord-like objects with .trial_index,
    .time_to_target and .success; failed trials contribute max_duration via
    their recorded time_to_target (the harness imputes it).
    """
    lo, hi = window
    times = [r.time_to_target for r in records if lo <= r.trial_index < hi]
    if not times:
        raise ValueError(f"no trials in window [{lo}, {hi})")
    return float(np.mean(times))


# ---------------------------------------------------------------------------
# live counters


@dataclass
class ResourceLedger:
    """Accumulating operation/memory counters for one run.

    Forward counters are driven by the network's instrumented forward pass;
    backward counters by the learners. Per-layer nonzero-input totals are
    kept as integers so observed sparsities can be recovered exactly.
    """

    fwd_macs: float = 0.0
    fwd_acs: float = 0.0
    fwd_mem_access: float = 0.0
    bwd_macs: float = 0.0
    bwd_mem_access: float = 0.0
    footprint_bits: int = 0
    forward_steps: int = 0
    layer_nnz: dict = field(default_factory=dict)
    layer_shapes: dict = field(default_factory=dict)

    def register_layer(self, layer_index: int, n_out: int, n_in: int):
        self.layer_shapes[layer_index] = (n_out, n_in)
        self.layer_nnz.setdefault(layer_index, [0, 0])

    def record_forward_layer(self, layer_index: int, nnz_in: int):
        """Tally one layer step: a weight fetch per (nonzero input x output
        neuron), plus a read and a write of each neuron's state."""
        n_out, _ = self.layer_shapes[layer_index]
        counts = self.layer_nnz[layer_index]
        counts[0] += nnz_in
        counts[1] += 1
        ma = n_out * nnz_in + 2 * n_out
        self.fwd_mem_access += ma
        self.fwd_acs += ma
        self.fwd_macs += n_out
        if layer_index == 0:
            self.forward_steps += 1

    def observed_input_fraction(self, layer_index: int):
        """Exact (nnz_total, steps*n_in) pair for the layer's input density."""
        nnz, steps = self.layer_nnz[layer_index]
        n_in = self.layer_shapes[layer_index][1]
        return nnz, steps * n_in

    def observed_input_sparsity(self, layer_index: int) -> float:
        nnz, denom = self.observed_input_fraction(layer_index)
        return 1.0 - nnz / denom


# ---------------------------------------------------------------------------
# analytic model


def footprint(layer_sizes, ann: bool = False) -> int:
    """Static parameter footprint in bits, 32 per stored value.

    SNN layers store the weight matrix plus two state words per neuron;
    the ANN variant stores one bias word per neuron instead.
    """
    per_neuron = 1 if ann else 2
    bits = 0
    for n_in, n_out in zip(layer_sizes[:-1], layer_sizes[1:]):
        bits += (n_out * n_in + per_neuron * n_out) * 32
    return bits


def footprint_kb(layer_sizes, ann: bool = False) -> float:
    return footprint(layer_sizes, ann=ann) / 8 / 1000


def forward_cost(layer_sizes, sparsities, ann: bool = False, t_s: int = 1):
    """Per-bin forward cost (macs, acs, mem_access).

    `sparsities` gives the zero fraction of each layer's input, so it has
    len(layer_sizes)-1 entries starting with the network input.
    """
    sizes = list(layer_sizes)
    if len(sparsities) != len(sizes) - 1:
        raise ValueError("need one input sparsity per layer")
    macs = 0
    acs = 0
    mem = 0
    for (n_in, n_out), s in zip(zip(sizes[:-1], sizes[1:]), sparsities):
        fetched = (1 - s) * (n_out * n_in)
        if ann:
            mem += fetched + n_out
            acs += fetched + n_out
            macs += fetched
        else:
            mem += fetched + 2 * n_out
            acs += (fetched + 2 * n_out) * t_s
            macs += n_out * t_s
    return macs, acs, mem


def banditron_backward_cost(n_in, input_sparsity):
    """Per-step cost of the bandit last-layer update: (macs, mem_access).

    Only columns with a live presynaptic spike are touched, doubled for the
    two independent axes.
    """
    cost = (1 - input_sparsity) * n_in * 2
    return cost, cost


@dataclass
class SparsityProfile:
    """Observed/assumed sparsities driving the attention-gated update cost.

    input_sparsities: zero fraction of each layer's input (len k).
    feedback_sparsities: zero fraction of the feedback vector of hidden
        layers 1..k-1; the output layer's feedback is one-hot so its density
        is 1/N_out and is derived, not supplied.
    error_sparsities: zero fraction of the error vector at hidden layers,
        used only by the (small) feedback memory-access term.
    """

    input_sparsities: list
    feedback_sparsities: list
    error_sparsities: list

    @classmethod
    def uniform(cls, n_layers: int, s: float = 0.6, s_fb: float = 0.94,
                s_e: float = 0.94) -> "SparsityProfile":
        return cls([s] * n_layers, [s_fb] * (n_layers - 1), [s_e] * (n_layers - 1))


def agrel_backward_cost(layer_sizes, profile: SparsityProfile):
    """Per-step cost of the all-layer attention-gated update: (macs, mem_access).

    Three components per layer i (1-indexed over [N0..Nk]):
      backward:  (1-s_{i-1})*(1-s_fb_i)*N_{i-1}*N_i   weight-matrix update
      feedback:  ~0 MACs (spike gating only); memory accesses
                 (1-s_i)*(1-s_e_i)*N_i at hidden layers
      error:     (1-s_fb_{i+1})*N_{i+1}*N_i for layers below the top
    The output layer's feedback density is 1/N_k (one-hot winner).
    """
    sizes = list(layer_sizes)
    k = len(sizes) - 1
    if len(profile.input_sparsities) != k:
        raise ValueError("need one input sparsity per layer")
    if len(profile.feedback_sparsities) != k - 1 or len(profile.error_sparsities) != k - 1:
        raise ValueError("need hidden-layer feedback/error sparsities (k-1 each)")
    # feedback density per layer 1..k; the top layer is the one-hot winner
    fb_density = [1 - s for s in profile.feedback_sparsities] + [1 / sizes[k]]

    macs = 0
    mem = 0
    for i in range(1, k + 1):
        n_in, n_out = sizes[i - 1], sizes[i]
        backward = (1 - profile.input_sparsities[i - 1]) * fb_density[i - 1] * n_in * n_out
        macs += backward
        mem += backward
        if i < k:
            error = fb_density[i] * sizes[i + 1] * n_out
            macs += error
            mem += error
            feedback_mem = (1 - profile.input_sparsities[i]) \
                * (1 - profile.error_sparsities[i - 1]) * n_out
            mem += feedback_mem
    return macs, mem


def clsnn_backward_estimate(layer_sizes):
    """Dense eligibility-trace update estimate: (macs, mem_access).

    Every weight changes each step, with two multiplies per changed
    parameter and one memory access, so MACs are always twice the accesses.
    """
    params = sum(a * b for a, b in zip(layer_sizes[:-1], layer_sizes[1:]))
    return 2 * params, params


def egru_cost_estimate(n_hidden, n_in, changed_params):
    """Event-gated recurrent cell estimate: (fwd_macs, bwd_macs, bwd_mem).

    Forward runs the three gates over the concatenated state+input; the
    update costs four operations per changed parameter and touches the
    previous hidden state, giving two accesses per changed parameter.
    """
    fwd = 3 * (n_hidden * (n_hidden + n_in) + 2 * n_hidden)
    return fwd, 4 * changed_params, 2 * changed_params
