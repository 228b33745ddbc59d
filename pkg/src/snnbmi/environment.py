"""Simulated closed-loop world: cosine-tuned brain model, center-out cursor
task and perturbation injection.

The brain maps a normalized intent vector to per-neuron Bernoulli spike
probabilities through clamped cosine tuning; the task scores a reach as
successful when the cursor enters the acceptance window within the time
budget and then stays there for the hold duration (the trial gets a short
grace beyond the budget so a hold that began in time can finish).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .codec import AxisQuantizer
from .errors import TrialStateError


class OpsBrain:
    """Population of cosine-tuned neurons emitting one spike bin per step.

    Each neuron k has a unit preferred direction c_k and rate bounds
    (lambda_min_k, lambda_max_k). For intent x_t the rate is

        lambda = (lambda_max - lambda_min) * (c_k . x_t + eta) + lambda_min

    with eta ~ N(0, noise_sigma) on the normalized drive, clamped to
    [0, lambda_max]; the spike probability is lambda * bin_seconds.
    """

    def __init__(self, n_neurons: int = 46, bin_seconds: float = 0.01,
                 noise_sigma: float = 0.3, lambda_min_range=(0.0, 5.0),
                 lambda_max_range=(40.0, 100.0), seed: int = 0):
        if bin_seconds <= 0:
            raise ValueError("bin_seconds must be positive")
        self.n_neurons = int(n_neurons)
        self.bin_seconds = float(bin_seconds)
        self.noise_sigma = float(noise_sigma)
        self.rng = np.random.default_rng(seed)
        angles = self.rng.uniform(0.0, 2.0 * np.pi, self.n_neurons)
        self.preferred_dirs = np.column_stack([np.cos(angles), np.sin(angles)])
        self.lambda_min = self.rng.uniform(*lambda_min_range, self.n_neurons)
        self.lambda_max = self.rng.uniform(*lambda_max_range, self.n_neurons)
        self.removed = np.zeros(self.n_neurons, dtype=bool)

    def reseed_stream(self, seed):
        """Fresh noise/spike randomness without resampling the population."""
        self.rng = np.random.default_rng(seed)

    def generate(self, x_t, noise: bool = True) -> np.ndarray:
        """Spike bin for one intent vector (|x_t| <= 1, caller normalizes)."""
        drive = self.preferred_dirs @ np.asarray(x_t, dtype=float)
        if noise and self.noise_sigma > 0.0:
            drive = drive + self.rng.normal(0.0, self.noise_sigma, self.n_neurons)
        lam = (self.lambda_max - self.lambda_min) * drive + self.lambda_min
        lam = np.clip(lam, 0.0, self.lambda_max)
        p = np.clip(lam * self.bin_seconds, 0.0, 1.0)
        bits = (self.rng.random(self.n_neurons) < p).astype(np.float64)
        bits[self.removed] = 0.0
        return bits

    def expected_rates(self, x_t) -> np.ndarray:
        """Noise-free firing rates for an intent (spikes/s), removals applied."""
        drive = self.preferred_dirs @ np.asarray(x_t, dtype=float)
        lam = np.clip((self.lambda_max - self.lambda_min) * drive
                      + self.lambda_min, 0.0, self.lambda_max)
        lam[self.removed] = 0.0
        return lam


@dataclass
class PerturbationSpec:
    """One population perturbation: which kind, how many neurons, when."""

    kind: str = "loss_of_neurons"   # loss_of_neurons | electrode_shift | rate_drift
    ratio: float = 0.0
    onset_trial: int = 50
    seed: int = 0

    KINDS = ("loss_of_neurons", "electrode_shift", "rate_drift")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise ValueError(f"unknown perturbation kind {self.kind!r}")
        if not 0.0 <= self.ratio < 1.0:
            raise ValueError("ratio must be in [0, 1)")


def apply_perturbation(brain: OpsBrain, spec: PerturbationSpec):
    """Perturb round(ratio * n) distinct neurons chosen by the spec's seed."""
    n_sel = int(round(spec.ratio * brain.n_neurons))
    if spec.ratio > 0.0 and n_sel < 1:
        raise ValueError("ratio too small to select any neuron")
    if n_sel == 0:
        return
    rng = np.random.default_rng(spec.seed)
    selected = rng.choice(brain.n_neurons, size=n_sel, replace=False)
    if spec.kind == "loss_of_neurons":
        brain.removed[selected] = True
    elif spec.kind == "electrode_shift":
        angles = rng.uniform(0.0, 2.0 * np.pi, n_sel)
        brain.preferred_dirs[selected] = np.column_stack(
            [np.cos(angles), np.sin(angles)])
    elif spec.kind == "rate_drift":
        brain.lambda_max[selected] = rng.uniform(0.0, 30.0, n_sel)
        brain.lambda_min[selected] = np.minimum(
            brain.lambda_min[selected], 0.9 * brain.lambda_max[selected])


@dataclass
class TrialRecord:
    """Outcome of one center-out reach."""

    trial_index: int
    success: bool
    time_to_target: float
    n_steps: int
    perturbed: bool = False
    seed: int = 0
    reward_rate: float = 0.0
    target: tuple = (0.0, 0.0)
    trajectory: list = field(default_factory=list)   # optionally elided


class CenterOutEnv:
    """Center-out cursor task with acceptance-window hold.

    The control signal (what the simulated participant intends) is the unit
    cursor-to-target pursuit direction, mildly damped by the current
    velocity (control = normalize(pursuit - damping * vel)). Within
    stop_radius of the target the pursuit term drops to zero so the intent
    becomes a pure braking command: with 4-level decoding the cursor cannot
    express "stop", but brake commands flip sign every step and the cursor
    hovers in a small limit cycle deep inside the acceptance window.
    """

    ONGOING, SUCCESS, TIMEOUT = "ongoing", "success", "timeout"

    def __init__(self, target_distance: float = 40.0, accept_radius: float = 4.0,
                 hold_required: float = 0.5, max_duration: float = 3.0,
                 dt: float = 0.01, grace: float = 0.5, damping: float = 0.005,
                 stop_radius: float = 2.0, intent_speed: float = 45.0,
                 v_max: float = 60.0, n_classes: int = 4):
        if accept_radius <= 0 or hold_required >= max_duration or dt <= 0:
            raise ValueError("bad task geometry/timing")
        self.target_distance = float(target_distance)
        self.accept_radius = float(accept_radius)
        self.hold_required = float(hold_required)
        self.max_duration = float(max_duration)
        self.dt = float(dt)
        self.grace = float(grace)
        self.damping = float(damping)
        self.stop_radius = float(stop_radius)
        self.intent_speed = float(intent_speed)
        self.quantizer = AxisQuantizer(-v_max, v_max, n_classes)
        self.cursor = np.zeros(2)
        self.vel = np.zeros(2)
        self.target = np.zeros(2)
        self.elapsed = 0.0
        self.hold_elapsed = 0.0
        self.hold_start = None
        self.status = self.TIMEOUT  # no trial active yet

    def new_trial(self, rng: np.random.Generator):
        """Reset to the center and draw a target angle uniformly."""
        angle = rng.uniform(0.0, 2.0 * np.pi)
        self.target = self.target_distance * np.array(
            [math.cos(angle), math.sin(angle)])
        self.cursor = np.zeros(2)
        self.vel = np.zeros(2)
        self.elapsed = 0.0
        self.hold_elapsed = 0.0
        self.hold_start = None
        self.status = self.ONGOING

    def intended_direction(self) -> np.ndarray:
        """Unit vector toward the target; zero inside the acceptance window."""
        delta = self.target - self.cursor
        dist = math.hypot(delta[0], delta[1])
        if dist <= self.accept_radius:
            return np.zeros(2)
        return delta / dist

    def control_signal(self) -> np.ndarray:
        """Intent the brain encodes this step (norm <= 1).

        Outside stop_radius: unit pursuit of the target, mildly damped.
        Inside: a proportional spring toward the target center, continuous
        with the pursuit term at the zone boundary; its magnitude shrinks
        toward zero at the center so hold-phase intent flips only when the
        cursor crosses the center rather than every step.
        """
        delta = self.target - self.cursor
        dist = math.hypot(delta[0], delta[1])
        if dist > self.stop_radius:
            raw = delta / dist - self.damping * self.vel
            norm = math.hypot(raw[0], raw[1])
            if norm < 1e-12:
                return np.zeros(2)
            return raw / norm
        raw = delta / self.stop_radius - self.damping * self.vel
        norm = math.hypot(raw[0], raw[1])
        if norm > 1.0:
            return raw / norm
        return raw

    def intended_labels(self) -> tuple[int, int]:
        """Per-axis class targets for the current control signal."""
        v = self.control_signal() * self.intent_speed
        return (self.quantizer.quantize(v[0]), self.quantizer.quantize(v[1]))

    def step(self, decoded_vel) -> tuple[int, int, str]:
        """Apply one decoded velocity; returns (reward_x, reward_y, status).

        The reward bit per axis compares the decoded class against the
        class of the intent the brain encoded before the move.
        """
        if self.status != self.ONGOING:
            raise TrialStateError("stepping a finished trial")
        labels = self.intended_labels()
        vx, vy = float(decoded_vel[0]), float(decoded_vel[1])
        rew_x = int(self.quantizer.quantize(vx) == labels[0])
        rew_y = int(self.quantizer.quantize(vy) == labels[1])

        self.vel = np.array([vx, vy])
        self.cursor = self.cursor + self.vel * self.dt
        self.elapsed += self.dt

        delta = self.target - self.cursor
        in_window = math.hypot(delta[0], delta[1]) <= self.accept_radius
        if in_window:
            if self.hold_start is None:
                self.hold_start = self.elapsed
            self.hold_elapsed += self.dt
        else:
            self.hold_start = None
            self.hold_elapsed = 0.0

        eps = 1e-9
        if (self.hold_elapsed >= self.hold_required - eps
                and self.hold_start is not None
                and self.hold_start <= self.max_duration + eps):
            self.status = self.SUCCESS
        elif self.elapsed > self.max_duration + self.grace + eps:
            self.status = self.TIMEOUT
        elif self.elapsed > self.max_duration + eps and (
                self.hold_start is None or self.hold_start > self.max_duration + eps):
            # no hold that began inside the budget can complete anymore
            self.status = self.TIMEOUT
        return rew_x, rew_y, self.status

    @property
    def time_to_target(self):
        """Entry time of the successful hold; None while not successful."""
        if self.status == self.SUCCESS:
            return self.hold_start
        return None
