"""Leaky integrate-and-fire layers and the fully connected spiking network.

Membrane dynamics per layer, one bin per step:

    U[t] = beta * U[t-1] + W @ X[t] - S[t-1] * theta
    S[t] = 1 where U[t] > u_thr

with subtractive reset (theta == u_thr), so residual charge above threshold
carries over instead of being discarded. Inference is deterministic; dropout
only exists in the pretraining path.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DataFormatError

WEIGHTS_MAGIC = b"SNNW"
WEIGHTS_VERSION = 1


@dataclass
class LifParams:
    """Decay, threshold and reset magnitude of one LIF layer.

    beta is the precomputed per-bin decay factor; theta always equals u_thr
    (subtractive reset by one threshold).
    """

    beta: float = 0.9
    u_thr: float = 1.0

    def __post_init__(self):
        if not 0.0 < self.beta <= 1.0:
            raise ConfigError(f"beta must be in (0, 1], got {self.beta}")
        if self.u_thr <= 0.0:
            raise ConfigError(f"u_thr must be positive, got {self.u_thr}")

    @property
    def theta(self) -> float:
        return self.u_thr


class LifLayer:
    """One fully connected LIF layer with persistent membrane state."""

    def __init__(self, weights: np.ndarray, params: LifParams):
        w = np.asarray(weights, dtype=np.float64)
        if w.ndim != 2:
            raise ConfigError("weights must be a 2-D matrix [n_out, n_in]")
        self.weights = w
        self.params = params
        self.n_out, self.n_in = w.shape
        self.membrane = np.zeros(self.n_out)
        self.last_spikes = np.zeros(self.n_out)

    def step(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Advance one bin; returns (spikes, membrane after update)."""
        if x.shape[0] != self.n_in:
            raise ConfigError(
                f"input length {x.shape[0]} != layer n_in {self.n_in}")
        p = self.params
        self.membrane = p.beta * self.membrane + self.weights @ x \
            - self.last_spikes * p.theta
        spikes = (self.membrane > p.u_thr).astype(np.float64)
        self.last_spikes = spikes
        return spikes, self.membrane

    def reset(self):
        self.membrane = np.zeros(self.n_out)
        self.last_spikes = np.zeros(self.n_out)


@dataclass
class NetworkConfig:
    """Architecture of the k-layer network.

    layer_sizes includes the input width: [N0, N1, ..., Nk]. bin_window and
    stride are equal (streaming, one step per bin).
    """

    layer_sizes: list[int] = field(default_factory=lambda: [46, 65, 40, 8])
    beta: float = 0.9
    u_thr: float = 1.0
    dropout: float = 0.3
    bin_window: float = 0.01
    stride: float = 0.01

    def __post_init__(self):
        if len(self.layer_sizes) < 2:
            raise ConfigError("need at least one layer (two sizes)")
        if any(n < 1 for n in self.layer_sizes):
            raise ConfigError("all layer sizes must be >= 1")
        if self.bin_window != self.stride:
            raise ConfigError("streaming requires bin_window == stride")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError("dropout must be in [0, 1)")

    @property
    def n_layers(self) -> int:
        return len(self.layer_sizes) - 1

    def lif_params(self) -> LifParams:
        return LifParams(beta=self.beta, u_thr=self.u_thr)


class SpikingNetwork:
    """Stack of LifLayers sharing a streaming forward pass.

    Hidden spike vectors from the latest step are retained because the
    online learning rules consume them (last hidden layer for the bandit
    update, all layers for the attention-gated one).
    """

    def __init__(self, config: NetworkConfig, layers: list[LifLayer]):
        self.config = config
        self.layers = layers
        expect = list(zip(config.layer_sizes[1:], config.layer_sizes[:-1]))
        got = [(l.n_out, l.n_in) for l in layers]
        if expect != got:
            raise ConfigError(f"layer shapes {got} do not match config {expect}")

    @classmethod
    def initialize(cls, config: NetworkConfig, rng: np.random.Generator) -> "SpikingNetwork":
        """He-style scaled Gaussian init, one LifParams shared across layers."""
        layers = []
        for n_in, n_out in zip(config.layer_sizes[:-1], config.layer_sizes[1:]):
            w = rng.standard_normal((n_out, n_in)) * np.sqrt(2.0 / n_in)
            layers.append(LifLayer(w, config.lif_params()))
        return cls(config, layers)

    def forward(self, x: np.ndarray, ledger=None):
        """Run one bin through every layer.

        Returns (out_spikes, out_membrane, hidden_spikes) where hidden_spikes
        is the list of spike vectors of layers 1..k-1. When a ResourceLedger
        is supplied, actual weight fetches (one per nonzero input per output
        neuron) and the two per-neuron state accesses are tallied.
        """
        a = np.asarray(x, dtype=np.float64)
        hidden = []
        membrane = None
        for i, layer in enumerate(self.layers):
            if ledger is not None:
                if i not in ledger.layer_shapes:
                    ledger.register_layer(i, layer.n_out, layer.n_in)
                ledger.record_forward_layer(i, int(np.count_nonzero(a)))
            spikes, membrane = layer.step(a)
            if i < len(self.layers) - 1:
                hidden.append(spikes)
            a = spikes
        return a, membrane, hidden

    def reset_states(self):
        """Zero all membranes and last-step spikes (trial/file boundaries)."""
        for layer in self.layers:
            layer.reset()

    @property
    def weights(self) -> list[np.ndarray]:
        return [l.weights for l in self.layers]

    def copy(self) -> "SpikingNetwork":
        layers = [LifLayer(l.weights.copy(), l.params) for l in self.layers]
        net = SpikingNetwork(self.config, layers)
        for dst, src in zip(net.layers, self.layers):
            dst.membrane = src.membrane.copy()
            dst.last_spikes = src.last_spikes.copy()
        return net


def save_weights(net: SpikingNetwork, path):
    """Write the little-endian weight container.

    Layout: magic 'SNNW', u32 version, u32 layer count k, (k+1) u32 sizes,
    then the k row-major float32 weight matrices, then per layer
    (f32 beta, f32 u_thr, f32 theta).
    """
    sizes = net.config.layer_sizes
    with open(path, "wb") as f:
        f.write(WEIGHTS_MAGIC)
        f.write(struct.pack("<II", WEIGHTS_VERSION, len(sizes) - 1))
        f.write(struct.pack(f"<{len(sizes)}I", *sizes))
        for layer in net.layers:
            f.write(layer.weights.astype("<f4").tobytes(order="C"))
        for layer in net.layers:
            p = layer.params
            f.write(struct.pack("<fff", p.beta, p.u_thr, p.theta))


def load_weights(path, config: NetworkConfig | None = None) -> SpikingNetwork:
    """Read the weight container back into a fresh network.

    When a config is given its architecture must match the stored sizes;
    otherwise a config with default dropout/bin timing is synthesized.
    """
    with open(path, "rb") as f:
        blob = f.read()
    off = 0

    def take(n, what):
        nonlocal off
        if off + n > len(blob):
            raise DataFormatError(f"truncated while reading {what}", offset=off)
        chunk = blob[off:off + n]
        off += n
        return chunk

    if take(4, "magic") != WEIGHTS_MAGIC:
        raise DataFormatError("bad magic, not a weight container", offset=0)
    version, k = struct.unpack("<II", take(8, "header"))
    if version != WEIGHTS_VERSION:
        raise DataFormatError(f"unsupported version {version}", offset=4)
    sizes = list(struct.unpack(f"<{k + 1}I", take(4 * (k + 1), "layer sizes")))
    mats = []
    for i in range(k):
        n_out, n_in = sizes[i + 1], sizes[i]
        raw = take(4 * n_out * n_in, f"layer {i} weights")
        mats.append(np.frombuffer(raw, dtype="<f4").reshape(n_out, n_in).astype(np.float64))
    params = []
    for i in range(k):
        beta, u_thr, theta = struct.unpack("<fff", take(12, f"layer {i} params"))
        if abs(theta - u_thr) > 1e-6:
            raise DataFormatError(f"layer {i} theta != u_thr", offset=off - 12)
        params.append(LifParams(beta=beta, u_thr=u_thr))
    if off != len(blob):
        raise DataFormatError("trailing bytes after weight container", offset=off)

    if config is None:
        config = NetworkConfig(layer_sizes=sizes, beta=params[0].beta,
                               u_thr=params[0].u_thr)
    elif list(config.layer_sizes) != sizes:
        raise ConfigError(
            f"checkpoint sizes {sizes} do not match config {config.layer_sizes}")
    layers = [LifLayer(w, p) for w, p in zip(mats, params)]
    return SpikingNetwork(config, layers)
