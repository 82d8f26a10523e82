"""Intensity histograms, noise-cusp detection, and alpha transfer functions.

Volumes of this kind span many orders of magnitude, so histograms are taken
over log10 intensity.  The low-intensity mode of the histogram is background
noise; the first dip after it (the cusp) is the natural noise cutoff.  The
two-segment transfer function ramps alpha linearly between the cusp and a
user-chosen threshold, and saturates at 1 above it.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .volume import DenseVolume, SparsePoints

DEFAULT_BINS = 256
SMOOTH_WINDOW = 5
DEGENERATE_HALF_WIDTH = 0.5  # decades added each side when min == max


@dataclass(frozen=True, eq=False)
class Histogram:
    """Counts over log10-intensity bins.

    ``bin_edges`` has len(counts) + 1 monotonically increasing log10 values;
    ``n_excluded`` counts the NaN and non-positive samples left out, so that
    counts.sum() + n_excluded equals the input size.
    """

    bin_edges: np.ndarray  # log10 intensity
    counts: np.ndarray
    n_excluded: int

    def __post_init__(self):
        edges = np.asarray(self.bin_edges, dtype=np.float64)
        counts = np.asarray(self.counts, dtype=np.int64)
        if edges.ndim != 1 or counts.ndim != 1 or edges.size != counts.size + 1:
            raise ValueError("need len(bin_edges) == len(counts) + 1")
        if not (np.diff(edges) > 0).all():
            raise ValueError("bin_edges must be strictly increasing")
        edges.flags.writeable = False
        counts.flags.writeable = False
        object.__setattr__(self, "bin_edges", edges)
        object.__setattr__(self, "counts", counts)
        object.__setattr__(self, "n_excluded", int(self.n_excluded))

    @property
    def n_bins(self) -> int:
        return self.counts.size

    def bin_centers(self) -> np.ndarray:
        """Bin centers in intensity units (not log10)."""
        return 10.0 ** ((self.bin_edges[:-1] + self.bin_edges[1:]) / 2.0)

    def to_json_dict(self) -> dict:
        return {
            "edges": self.bin_edges.tolist(),
            "counts": self.counts.tolist(),
            "excluded": self.n_excluded,
        }


def histogram(data: DenseVolume | SparsePoints | np.ndarray, n_bins: int = DEFAULT_BINS) -> Histogram:
    """Log10-spaced histogram over the positive finite values of ``data``.

    Bins span [min positive, max] inclusive (upper edge of the last bin is
    closed); an all-equal input widens the degenerate range by half a decade
    each side.  Raises ValueError when there is nothing positive to bin.
    """
    if n_bins < 2:
        raise ValueError(f"n_bins must be >= 2, got {n_bins}")
    if isinstance(data, DenseVolume):
        values = data.values.reshape(-1)
    elif isinstance(data, SparsePoints):
        values = data.intensities
    else:
        values = np.asarray(data).reshape(-1)
    ok = np.isfinite(values) & (values > 0)
    positive = np.log10(values[ok].astype(np.float64))
    n_excluded = int(values.size - positive.size)
    if positive.size == 0:
        raise ValueError("no positive finite values to histogram")
    lo, hi = float(positive.min()), float(positive.max())
    if lo == hi:
        lo -= DEGENERATE_HALF_WIDTH
        hi += DEGENERATE_HALF_WIDTH
    edges = np.linspace(lo, hi, n_bins + 1)
    counts, _ = np.histogram(positive, bins=edges)
    return Histogram(edges, counts, n_excluded)


def smooth_counts(counts: np.ndarray, window: int = SMOOTH_WINDOW) -> np.ndarray:
    """Centered moving average, window truncated at the ends."""
    counts = np.asarray(counts, dtype=np.float64)
    kernel = np.ones(window)
    total = np.convolve(counts, kernel, mode="same")
    # out-of-range taps contribute 0; divide by the in-range window size
    norm = np.convolve(np.ones_like(counts), kernel, mode="same")
    return total / norm


def detect_cusp(h: Histogram) -> float | None:
    """Intensity of the noise cusp, or None when the histogram has no dip.

    Smooths counts (moving average, window 5), takes the global maximum over
    the lower half of the log-intensity range (the noise mode), then returns
    the bin-center intensity of the first strict local minimum after it.
    Strictness is plateau-aware: a run of equal values counts as one minimum
    when the nearest differing values on both sides are larger, and the run's
    first bin is reported.  (A hard noise ceiling leaves a flat gap of empty
    bins before the signal rises; the gap must still register as the dip.)
    """
    s = smooth_counts(h.counts)
    n = s.size
    if n < 3:
        return None
    mid = (h.bin_edges[0] + h.bin_edges[-1]) / 2.0
    centers_log = (h.bin_edges[:-1] + h.bin_edges[1:]) / 2.0
    lower = np.nonzero(centers_log <= mid)[0]
    if lower.size == 0:
        lower = np.array([0])
    peak = int(lower[np.argmax(s[lower])])

    m = peak + 1
    while m < n:
        if s[m] < s[m - 1]:
            j = m
            while j + 1 < n and s[j + 1] == s[m]:
                j += 1
            if j + 1 < n and s[j + 1] > s[m]:
                return float(10.0 ** centers_log[m])
            m = j + 1
        else:
            m += 1
    return None


@dataclass(frozen=True)
class TransferFunction:
    """Two-segment opacity map: 0 below cusp, linear ramp, 1 above threshold."""

    cusp: float
    threshold: float

    def __post_init__(self):
        if not (0 < self.cusp < self.threshold):
            raise ValueError(
                f"need 0 < cusp < threshold, got cusp={self.cusp}, threshold={self.threshold}"
            )


def alpha(tf: TransferFunction, intensity: float | np.ndarray) -> float | np.ndarray:
    """Opacity in [0, 1] for the given intensity under ``tf``."""
    x = np.asarray(intensity, dtype=np.float64)
    out = np.clip((x - tf.cusp) / (tf.threshold - tf.cusp), 0.0, 1.0)
    return float(out) if np.isscalar(intensity) else out


def cluster_alpha(intensities: np.ndarray) -> np.ndarray:
    """Relative alphas within one cluster: (I - min) / (max - min).

    A cluster of equal intensities (including a single point) maps to all 1.
    """
    x = np.asarray(intensities, dtype=np.float64)
    if x.size == 0:
        raise ValueError("cluster is empty")
    lo, hi = float(x.min()), float(x.max())
    if lo == hi:
        return np.ones_like(x)
    return (x - lo) / (hi - lo)
