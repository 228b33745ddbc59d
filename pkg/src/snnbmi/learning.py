"""Online weight-change rules: bandit last-layer updates and the
attention-gated all-layer rule.

Both operate on the 8-unit output layer as two independent 4-class problems
(units 0..3 decode the x axis, 4..7 the y axis); each axis gets its own
exploration draw, reward bit and update.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .network import SpikingNetwork


def predict_class(out_membrane) -> int:
    """Argmax over output membrane potentials; ties go to the lowest index."""
    return int(np.argmax(out_membrane))


def split_axes(vec, n_classes: int = 4):
    """Slice the output layer into its per-axis blocks."""
    v = np.asarray(vec)
    if v.shape[0] != 2 * n_classes:
        raise ConfigError(
            f"output layer size {v.shape[0]} != 2*{n_classes} axis blocks")
    return v[:n_classes], v[n_classes:]


def hinge_loss(out, y: int) -> float:
    """Multiclass hinge max_{c != y} [1 - out_y + out_c]_+ (diagnostic only)."""
    o = np.asarray(out, dtype=float)
    if not 0 <= y < o.shape[0]:
        raise ValueError(f"label {y} out of range")
    margins = 1.0 - o[y] + o
    margins[y] = -np.inf
    return float(max(np.max(margins), 0.0))


@dataclass
class BanditronLearner:
    """Epsilon-uniform exploration plus importance-weighted perceptron update.

    epsilon mixes a uniform draw over the C classes into the greedy choice;
    the update touches only the last layer and only columns with a live
    presynaptic spike. learning_rate 1.0 is the classical rule; closed-loop
    runs use a smaller rate tuned to the pretrained weight scale.
    """

    epsilon: float = 0.1
    n_classes: int = 4
    learning_rate: float = 1.0
    rng: np.random.Generator = None

    def __post_init__(self):
        if not 0.0 <= self.epsilon <= 1.0:
            raise ConfigError("epsilon must be in [0, 1]")
        if self.n_classes < 2:
            raise ConfigError("need at least 2 classes")
        if self.rng is None:
            self.rng = np.random.default_rng()

    def probabilities(self, predicted: int) -> np.ndarray:
        p = np.full(self.n_classes, self.epsilon / self.n_classes)
        p[predicted] += 1.0 - self.epsilon
        return p

    def explore(self, predicted: int) -> tuple[int, float]:
        """Sample the played class; returns (sample, its probability)."""
        if predicted >= self.n_classes:
            raise ConfigError("predicted class out of range")
        p = self.probabilities(predicted)
        sampled = int(self.rng.choice(self.n_classes, p=p))
        return sampled, float(p[sampled])

    def update_matrix(self, s_in, predicted: int, sampled: int,
                      prob_sampled: float, label: int | None = None,
                      hit: bool | None = None) -> np.ndarray:
        """Raw update for one axis block (no learning rate applied):

            dW[c, j] = s_in[j] * ( 1[label==sampled] * 1[sampled==c] / P(c)
                                   - 1[predicted==c] )

        In the bandit setting the label itself is never seen, only the hit
        bit 1[label==sampled]; pass `hit` instead of `label` there.
        """
        if prob_sampled <= 0.0:
            raise RuntimeError("sampled class has zero probability")
        if hit is None:
            if label is None:
                raise ValueError("need label or hit bit")
            hit = label == sampled
        s = np.asarray(s_in, dtype=float)
        dw = np.zeros((self.n_classes, s.shape[0]))
        if hit:
            dw[sampled] += s / prob_sampled
        dw[predicted] -= s
        return dw

    def act(self, out_membrane) -> list[tuple[int, int, float]]:
        """Greedy prediction plus exploration draw for each axis block.

        Returns [(predicted, sampled, prob_sampled)] for x then y.
        """
        blocks = split_axes(out_membrane, self.n_classes)
        actions = []
        for mem in blocks:
            pred = predict_class(mem)
            sampled, prob = self.explore(pred)
            actions.append((pred, sampled, prob))
        return actions

    def apply(self, net: SpikingNetwork, s_hidden, actions, hits,
              ledger=None):
        """Apply the last-layer update for both axes in place.

        `hits` are the per-axis bits 1[played class == label]. Touches only
        the final weight matrix; earlier layers are never written.
        """
        w_out = net.layers[-1].weights
        s = np.asarray(s_hidden, dtype=float)
        c = self.n_classes
        for axis, ((pred, sampled, prob), hit) in enumerate(zip(actions, hits)):
            dw = self.update_matrix(s, pred, sampled, prob, hit=bool(hit))
            w_out[axis * c:(axis + 1) * c, :] += self.learning_rate * dw
        if ledger is not None:
            cost = int(np.count_nonzero(s)) * 2
            ledger.bwd_macs += cost
            ledger.bwd_mem_access += cost


@dataclass
class AgrelLearner:
    """Reward-gated plasticity across every layer.

    The global error is delta = reward - winner_activity, so a rewarded
    step (delta = 0) changes nothing; an unrewarded one depresses the
    synapses that drove the winning unit, with credit carried down through
    spike-gated feedback (straight-through surrogate, dS/dU = 1).
    """

    alpha: float = 0.01
    n_classes: int = 4

    def __post_init__(self):
        if self.alpha <= 0.0:
            raise ConfigError("alpha must be positive")

    def update(self, net: SpikingNetwork, x_in, hidden_spikes,
               out_membrane, rewards: tuple[int, int], ledger=None):
        """Apply the all-layer update in place.

        x_in is the network input this step; hidden_spikes are the per-layer
        spike vectors from the same forward pass; rewards are the per-axis
        bits (1 = the winning class matched the label).
        """
        c = self.n_classes
        k = len(net.layers)
        out = np.asarray(out_membrane)
        if out.shape[0] != 2 * c:
            raise ConfigError("output size does not match two axis blocks")
        if len(hidden_spikes) != k - 1:
            raise ConfigError("need one spike vector per hidden layer")

        # one-hot winner per axis, scaled by delta = r - 1
        fb = np.zeros(2 * c)
        for axis, r in enumerate(rewards):
            block = out[axis * c:(axis + 1) * c]
            win = axis * c + predict_class(block)
            fb[win] = float(r) - 1.0
        if not np.any(fb):
            return  # rewarded on both axes: exact no-op

        inputs = [np.asarray(x_in, dtype=float)] + [np.asarray(h) for h in hidden_spikes]
        for i in range(k - 1, -1, -1):
            layer = net.layers[i]
            pre = inputs[i]
            if i > 0:
                # error rides the pre-update weights of this layer
                error = fb @ layer.weights
                gated = error * inputs[i]
            if ledger is not None:
                used = int(np.count_nonzero(pre)) * int(np.count_nonzero(fb))
                ledger.bwd_macs += used
                ledger.bwd_mem_access += used
                if i > 0:
                    err_cost = int(np.count_nonzero(fb)) * layer.n_in
                    ledger.bwd_macs += err_cost
                    ledger.bwd_mem_access += err_cost
                    ledger.bwd_mem_access += int(np.count_nonzero(gated))
            layer.weights += self.alpha * np.outer(fb, pre)
            if i > 0:
                fb = gated
