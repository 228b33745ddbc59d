"""Velocity <-> class-label codec and spike binning.

Each velocity axis is quantized independently into B uniform bins; a
predicted class is mapped back to the bin center and held until the next
prediction (zero-order hold done by the caller's streaming loop).
"""
from __future__ import annotations

import warnings

import numpy as np


class AxisQuantizer:
    """Uniform quantizer for one velocity axis.

    Attributes:
        n_bins: number of classes B.
        v_min, v_max: range covered by the bins; values outside clamp.
        bin_edges: B+1 ascending edges.
        bin_centers: midpoints of adjacent edges.
    """

    def __init__(self, v_min: float, v_max: float, n_bins: int = 4):
        if n_bins < 2:
            raise ValueError("n_bins must be >= 2")
        if not v_max > v_min:
            raise ValueError("v_max must exceed v_min")
        self.n_bins = int(n_bins)
        self.v_min = float(v_min)
        self.v_max = float(v_max)
        self.bin_edges = np.linspace(self.v_min, self.v_max, self.n_bins + 1)
        self.bin_centers = 0.5 * (self.bin_edges[:-1] + self.bin_edges[1:])

    def quantize(self, v: float) -> int:
        """Return the bin index containing v.

        Values on an interior edge belong to the upper bin; values at or
        beyond the range clamp to the first/last bin.
        """
        # searchsorted over interior edges gives the tie-to-upper rule exactly
        return int(np.searchsorted(self.bin_edges[1:-1], v, side="right"))

    def quantize_many(self, v: np.ndarray) -> np.ndarray:
        return np.searchsorted(self.bin_edges[1:-1], v, side="right")

    def reconstruct(self, cls: int) -> float:
        if not 0 <= cls < self.n_bins:
            raise ValueError(f"class {cls} out of range [0, {self.n_bins})")
        return float(self.bin_centers[cls])

    def to_dict(self) -> dict:
        return {
            "n_bins": self.n_bins,
            "v_min": self.v_min,
            "v_max": self.v_max,
            "bin_edges": [float(e) for e in self.bin_edges],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "AxisQuantizer":
        return cls(d["v_min"], d["v_max"], d["n_bins"])


def fit_quantizer(velocities, n_bins: int = 4) -> AxisQuantizer:
    """Fit a symmetric quantizer range to a velocity sample.

    Range is +-max(|p1|, |p99|) of the data so the extreme classes keep the
    same "fast negative"/"fast positive" meaning on both axes and the top 1%
    of outliers do not inflate the range.
    """
    v = np.asarray(velocities, dtype=float)
    if v.size == 0:
        raise ValueError("cannot fit quantizer to empty sequence")
    p1, p99 = np.percentile(v, [1.0, 99.0])
    half = max(abs(p1), abs(p99))
    if half < 1e-6:
        warnings.warn("degenerate velocity range; expanding to +-1e-6")
        half = 1e-6
    return AxisQuantizer(-half, half, n_bins)


def bin_spikes(spike_times, t0: float, bin_window: float) -> np.ndarray:
    """Collapse per-channel event times into one binary bin vector.

    A channel's bit is 1 iff it has at least one event in [t0, t0+bin_window)
    (half-open, so a spike on the right edge belongs to the next bin).
    """
    if bin_window <= 0:
        raise ValueError("bin_window must be positive")
    t1 = t0 + bin_window
    bits = np.zeros(len(spike_times), dtype=np.uint8)
    for ch, times in enumerate(spike_times):
        t = np.asarray(times, dtype=float)
        if t.size and np.any((t >= t0) & (t < t1)):
            bits[ch] = 1
    return bits
