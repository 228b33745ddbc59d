"""Offline supervised pretraining of the spiking decoder.

Training is streaming-shaped: the bin stream is cut into fixed-length
chunks, a batch of chunks runs in parallel with membrane state carried
within each chunk and reset at chunk boundaries, and gradients are
single-step truncated (no credit assignment across bins). The spike
nonlinearity is differentiated with a surrogate (arctan by default).
Dropout masks are drawn per step on hidden spike outputs, training only.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, TrainingDivergedError
from .network import SpikingNetwork


@dataclass
class PretrainConfig:
    epochs: int = 50
    learning_rate: float = 0.01
    batch_size: int = 512          # bins per optimizer step
    chunk_len: int = 32            # bins per parallel sequence
    surrogate: str = "arctan"      # or "straight_through"
    surrogate_gamma: float = np.pi
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.01
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1 or self.chunk_len < 1:
            raise ConfigError("epochs, batch_size and chunk_len must be >= 1")
        if self.surrogate not in ("arctan", "straight_through"):
            raise ConfigError(f"unknown surrogate {self.surrogate!r}")


@dataclass
class PretrainStats:
    epoch_loss: list = field(default_factory=list)
    epoch_accuracy: list = field(default_factory=list)

    @property
    def final_loss(self):
        return self.epoch_loss[-1]

    @property
    def final_accuracy(self):
        return self.epoch_accuracy[-1]


class AdamW:
    """Adaptive-moment optimizer with decoupled weight decay."""

    def __init__(self, shapes, lr, beta1=0.9, beta2=0.999, eps=1e-8,
                 weight_decay=0.01):
        self.lr = lr
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.weight_decay = weight_decay
        self.m = [np.zeros(s) for s in shapes]
        self.v = [np.zeros(s) for s in shapes]
        self.t = 0

    def step(self, params, grads):
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= b1
            m += (1 - b1) * g
            v *= b2
            v += (1 - b2) * g * g
            mhat = m / (1 - b1 ** self.t)
            vhat = v / (1 - b2 ** self.t)
            p -= self.lr * (mhat / (np.sqrt(vhat) + self.eps)
                            + self.weight_decay * p)


def _surrogate_deriv(u, u_thr, cfg: PretrainConfig):
    if cfg.surrogate == "straight_through":
        return np.ones_like(u)
    x = cfg.surrogate_gamma * (u - u_thr)
    return 1.0 / (1.0 + x * x)


def _softmax(z):
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def _xent(probs, labels):
    n = probs.shape[0]
    picked = probs[np.arange(n), labels]
    return -np.log(np.maximum(picked, 1e-12)).sum()


def pretrain(net: SpikingNetwork, spikes: np.ndarray, labels: np.ndarray,
             cfg: PretrainConfig) -> PretrainStats:
    """Train the network in place on a (bins, labels) stream.

    spikes: [T, N0] binary input bins; labels: [T, 2] per-axis class
    indices. Loss is the summed per-axis cross-entropy on the output
    membrane potentials. Returns per-epoch loss/accuracy history; raises
    TrainingDivergedError if the loss goes non-finite.
    """
    spikes = np.asarray(spikes, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if spikes.ndim != 2 or spikes.shape[0] != labels.shape[0]:
        raise ConfigError("spikes and labels must align on the time axis")
    n_bins = spikes.shape[0]
    if n_bins == 0:
        raise ConfigError("empty training stream")

    rng = np.random.default_rng(cfg.seed)
    conf = net.config
    k = conf.n_layers
    n_out = conf.layer_sizes[-1]
    c = n_out // 2
    drop = conf.dropout

    chunk_len = min(cfg.chunk_len, n_bins)
    n_chunks = n_bins // chunk_len
    if n_chunks == 0:
        raise ConfigError("stream shorter than one chunk")
    width = max(1, min(cfg.batch_size // chunk_len, n_chunks))

    weights = net.weights
    opt = AdamW([w.shape for w in weights], cfg.learning_rate,
                cfg.beta1, cfg.beta2, cfg.eps, cfg.weight_decay)

    stats = PretrainStats()
    chunk_starts = np.arange(n_chunks) * chunk_len
    for epoch in range(cfg.epochs):
        order = rng.permutation(n_chunks)
        total_loss = 0.0
        total_correct = 0
        total_axis = 0
        for b0 in range(0, n_chunks, width):
            group = chunk_starts[order[b0:b0 + width]]
            bsz = len(group)
            membranes = [np.zeros((bsz, n)) for n in conf.layer_sizes[1:]]
            prev_spk = [np.zeros((bsz, n)) for n in conf.layer_sizes[1:]]
            grads = [np.zeros_like(w) for w in weights]
            n_samples = bsz * chunk_len

            for t in range(chunk_len):
                x = spikes[group + t]                    # [bsz, N0]
                y = labels[group + t]                    # [bsz, 2]
                acts = [x]
                masks = []
                for i, layer in enumerate(net.layers):
                    p = layer.params
                    membranes[i] = p.beta * membranes[i] \
                        + acts[-1] @ weights[i].T - prev_spk[i] * p.theta
                    s = (membranes[i] > p.u_thr).astype(np.float64)
                    prev_spk[i] = s
                    if i < k - 1:
                        if drop > 0.0:
                            mask = (rng.random(s.shape) >= drop) / (1.0 - drop)
                            s = s * mask
                        else:
                            mask = None
                        masks.append(mask)
                    acts.append(s)

                u_out = membranes[-1]
                d_out = np.empty_like(u_out)
                for axis in range(2):
                    blk = slice(axis * c, (axis + 1) * c)
                    probs = _softmax(u_out[:, blk])
                    total_loss += _xent(probs, y[:, axis])
                    total_correct += int(
                        (probs.argmax(axis=1) == y[:, axis]).sum())
                    total_axis += bsz
                    onehot = np.zeros_like(probs)
                    onehot[np.arange(bsz), y[:, axis]] = 1.0
                    d_out[:, blk] = (probs - onehot) / n_samples

                # single-step truncated backward chain
                d_u = d_out
                for i in range(k - 1, -1, -1):
                    grads[i] += d_u.T @ acts[i]
                    if i > 0:
                        d_s = d_u @ weights[i]
                        if masks[i - 1] is not None:
                            d_s = d_s * masks[i - 1]
                        layer = net.layers[i - 1]
                        d_u = d_s * _surrogate_deriv(
                            membranes[i - 1], layer.params.u_thr, cfg)

            opt.step(weights, grads)

        mean_loss = total_loss / max(total_axis, 1)
        if not np.isfinite(mean_loss):
            raise TrainingDivergedError(
                f"non-finite loss at epoch {epoch}: {mean_loss}")
        stats.epoch_loss.append(mean_loss)
        stats.epoch_accuracy.append(total_correct / max(total_axis, 1))

    net.reset_states()
    return stats
