"""Binned spike dataset container and the synthetic nonstationary generator.

Container layout (little-endian, extension .spkd):
    magic 'SPKD' | u32 version | u32 n_channels | u32 bin_width_us
    | u64 n_bins | u32 n_sessions | n_sessions * u64 session start bin
    then per bin: ceil(n_channels/8) bytes channel bitmask (bit i of byte
    i//8 is channel i) followed by two float32 velocities (x, y).

Real multi-electrode recordings can be converted by binning each channel's
event times at the configured window (presence, not count), pairing each
bin with the velocity sample at bin end, and writing one session per file
segment; see `write_spkd`.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .errors import DataFormatError
from .environment import OpsBrain, PerturbationSpec, apply_perturbation

SPKD_MAGIC = b"SPKD"
SPKD_VERSION = 1


@dataclass
class SpikeDataset:
    """Aligned per-bin spike presence and velocity labels with session marks."""

    spikes: np.ndarray          # [T, n_channels] uint8
    velocities: np.ndarray     # [T, 2] float
    bin_width: float           # seconds
    session_starts: list       # ascending bin indices, first == 0

    def __post_init__(self):
        if self.spikes.shape[0] != self.velocities.shape[0]:
            raise DataFormatError("spike and velocity streams differ in length")
        if not self.session_starts or self.session_starts[0] != 0:
            raise DataFormatError("session starts must begin at bin 0")
        if list(self.session_starts) != sorted(set(self.session_starts)):
            raise DataFormatError("session starts must be strictly ascending")
        if self.session_starts[-1] >= max(self.n_bins, 1):
            raise DataFormatError("session start beyond end of stream")

    @property
    def n_bins(self) -> int:
        return self.spikes.shape[0]

    @property
    def n_channels(self) -> int:
        return self.spikes.shape[1]

    @property
    def n_sessions(self) -> int:
        return len(self.session_starts)

    def session_slice(self, index: int) -> slice:
        starts = list(self.session_starts) + [self.n_bins]
        return slice(starts[index], starts[index + 1])


def write_spkd(dataset: SpikeDataset, path):
    mask_bytes = (dataset.n_channels + 7) // 8
    t = dataset.n_bins
    packed = np.packbits(dataset.spikes.astype(np.uint8), axis=1,
                         bitorder="little")
    vel = dataset.velocities.astype("<f4")
    rows = np.zeros((t, mask_bytes + 8), dtype=np.uint8)
    rows[:, :mask_bytes] = packed
    rows[:, mask_bytes:] = vel.view(np.uint8).reshape(t, 8)
    with open(path, "wb") as f:
        f.write(SPKD_MAGIC)
        f.write(struct.pack("<III", SPKD_VERSION, dataset.n_channels,
                            int(round(dataset.bin_width * 1e6))))
        f.write(struct.pack("<QI", t, dataset.n_sessions))
        f.write(struct.pack(f"<{dataset.n_sessions}Q", *dataset.session_starts))
        f.write(rows.tobytes())


def ingest_spkd(path) -> SpikeDataset:
    """Parse and validate a container; raises DataFormatError with the byte
    offset on truncation or header/payload mismatch."""
    with open(path, "rb") as f:
        blob = f.read()
    off = 0

    def take(n, what):
        nonlocal off
        if off + n > len(blob):
            raise DataFormatError(f"truncated while reading {what}", offset=off)
        out = blob[off:off + n]
        off += n
        return out

    if take(4, "magic") != SPKD_MAGIC:
        raise DataFormatError("bad magic, not a spike dataset", offset=0)
    version, n_channels, bin_us = struct.unpack("<III", take(12, "header"))
    if version != SPKD_VERSION:
        raise DataFormatError(f"unsupported version {version}", offset=4)
    if n_channels < 1:
        raise DataFormatError("channel count must be >= 1", offset=8)
    n_bins, n_sessions = struct.unpack("<QI", take(12, "stream header"))
    if n_sessions < 1:
        raise DataFormatError("need at least one session", offset=off - 4)
    starts = list(struct.unpack(f"<{n_sessions}Q",
                                take(8 * n_sessions, "session table")))

    mask_bytes = (n_channels + 7) // 8
    row = mask_bytes + 8
    payload = take(n_bins * row, "bin payload")
    if off != len(blob):
        raise DataFormatError("trailing bytes after payload", offset=off)
    rows = np.frombuffer(payload, dtype=np.uint8).reshape(n_bins, row)
    packed = rows[:, :mask_bytes]
    spikes = np.unpackbits(packed, axis=1, count=n_channels,
                           bitorder="little")
    if mask_bytes * 8 > n_channels:
        # padding bits in the mask must be zero, else the header lied
        full = np.unpackbits(packed, axis=1, bitorder="little")
        if np.any(full[:, n_channels:]):
            raise DataFormatError(
                "spike bits set beyond declared channel count", offset=16)
    vel = rows[:, mask_bytes:].copy().view("<f4").reshape(n_bins, 2)
    return SpikeDataset(spikes=spikes, velocities=vel.astype(np.float64),
                        bin_width=bin_us / 1e6, session_starts=starts)


def synth_dataset(seed: int, n_sessions: int = 5, drift_strength: float = 1.0,
                  n_channels: int = 96, bins_per_session: int = 16000,
                  bin_width: float = 0.004, velocity_std: float = 20.0,
                  shift_ratio: float = 0.03, drift_ratio: float = 0.05
                  ) -> SpikeDataset:
    """Desk-scale stand-in for chronic multi-day recordings.

    Velocities are reach-shaped: raised-cosine speed bumps toward random
    directions separated by still pauses, the profile of point-to-point
    cursor movements. Spikes come from a cosine-tuned population driven by
    the normalized velocity. From the second session on, the whole tuning
    map sits at a coherent rotation drawn well away from the first
    session's map (63..297 degrees, scaled by drift_strength), on top of
    per-neuron preferred-direction reassignment and firing-rate drift: the
    rotation makes a frozen decoder collapse on every later session while
    the information stays recoverable by recalibration. Deterministic per
    seed.
    """
    if n_sessions < 1:
        raise ValueError("need at least one session")
    master = np.random.default_rng(seed)
    child_seeds = master.integers(0, 2 ** 63, size=2 + 2 * n_sessions)
    brain = OpsBrain(n_neurons=n_channels, bin_seconds=bin_width,
                     noise_sigma=0.3, seed=int(child_seeds[0]))
    vel_rng = np.random.default_rng(int(child_seeds[1]))

    t_total = n_sessions * bins_per_session
    velocities = np.zeros((t_total, 2))
    spikes = np.zeros((t_total, n_channels), dtype=np.uint8)
    drive_scale = 1.6 * velocity_std
    rotation_now = 0.0
    rot_lo, rot_hi = 0.35 * np.pi, 1.65 * np.pi
    for s in range(n_sessions):
        if s > 0 and drift_strength > 0.0:
            boundary = np.random.default_rng(int(child_seeds[2 * s]))
            if s == 1:
                target = boundary.uniform(rot_lo, 0.55 * np.pi)
            else:
                # random walk over the rotation band, reflected at its edges
                target = rotation_now / drift_strength \
                    + boundary.uniform(-0.5 * np.pi, 0.5 * np.pi)
                if target < rot_lo:
                    target = 2 * rot_lo - target
                elif target > rot_hi:
                    target = 2 * rot_hi - target
            target_rot = drift_strength * target
            angle = target_rot - rotation_now
            rotation_now = target_rot
            rot = np.array([[np.cos(angle), -np.sin(angle)],
                            [np.sin(angle), np.cos(angle)]])
            brain.preferred_dirs = brain.preferred_dirs @ rot.T
            shift = min(0.9, shift_ratio * drift_strength)
            drift = min(0.9, drift_ratio * drift_strength)
            if round(shift * n_channels) >= 1:
                apply_perturbation(brain, PerturbationSpec(
                    kind="electrode_shift", ratio=shift,
                    seed=int(child_seeds[2 * s])))
            if round(drift * n_channels) >= 1:
                apply_perturbation(brain, PerturbationSpec(
                    kind="rate_drift", ratio=drift,
                    seed=int(child_seeds[2 * s + 1])))
        base = s * bins_per_session
        vel = _reach_velocity_trace(vel_rng, bins_per_session, bin_width,
                                    velocity_std)
        velocities[base:base + bins_per_session] = vel
        for t in range(bins_per_session):
            x = vel[t] / drive_scale
            norm = np.hypot(x[0], x[1])
            if norm > 1.0:
                x = x / norm
            spikes[base + t] = brain.generate(x)

    starts = [s * bins_per_session for s in range(n_sessions)]
    return SpikeDataset(spikes=spikes, velocities=velocities,
                        bin_width=bin_width, session_starts=starts)


def _reach_velocity_trace(rng, n_bins, dt, v_scale):
    """Point-to-point reach kinematics: raised-cosine speed bumps toward
    uniform random directions, separated by still pauses."""
    vel = np.zeros((n_bins, 2))
    t = 0
    while t < n_bins:
        pause = int(rng.uniform(0.08, 0.25) / dt)
        t += pause
        if t >= n_bins:
            break
        duration = int(rng.uniform(0.35, 0.7) / dt)
        peak = v_scale * rng.uniform(0.8, 1.6)
        angle = rng.uniform(0.0, 2.0 * np.pi)
        direction = np.array([np.cos(angle), np.sin(angle)])
        n = min(duration, n_bins - t)
        phase = np.arange(n) / duration
        speed = peak * 0.5 * (1.0 - np.cos(2.0 * np.pi * phase))
        vel[t:t + n] = speed[:, None] * direction[None, :]
        t += n
    return vel
