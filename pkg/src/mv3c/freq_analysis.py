"""Per-subband statistics and gradient-weighted subband importance."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dwt3d import Decomposition
from .errors import ArgumentError
from .volume_io import Volume

HIST_BINS = 64


@dataclass(frozen=True)
class SubbandStats:
    index: int
    count: int
    mean: float
    std: float  # population std; the subband's statistic index
    laplace_b: float
    hist_counts: np.ndarray
    hist_edges: np.ndarray


@dataclass(frozen=True)
class GradientVolume:
    """Per-voxel loss-gradient magnitudes, same ``(nz, ny, nx)`` layout as Volume."""

    data: np.ndarray

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        if data.ndim != 3:
            raise ArgumentError(f"gradient volume must be 3-D, got shape {data.shape}")
        if not np.isfinite(data).all():
            raise ArgumentError("gradient volume contains non-finite values")
        object.__setattr__(self, "data", data)

    @property
    def dims(self):
        return tuple(self.data.shape[::-1])

    @classmethod
    def from_volume(cls, v: Volume) -> "GradientVolume":
        return cls(v.data)


def fit_laplace(coeffs) -> float:
    """Zero-mean Laplace scale MLE, ``mean(|x|)``."""
    x = np.asarray(coeffs, dtype=np.float64).ravel()
    if x.size == 0:
        raise ArgumentError("cannot fit a Laplace scale to an empty array")
    return float(np.abs(x).mean())


def excess_kurtosis(coeffs) -> float:
    x = np.asarray(coeffs, dtype=np.float64).ravel()
    c = x - x.mean()
    var = (c * c).mean()
    if var == 0:
        return 0.0
    return float((c ** 4).mean() / var ** 2 - 3.0)


def subband_stats(index: int, coeffs) -> SubbandStats:
    x = np.asarray(coeffs, dtype=np.float64).ravel()
    lo, hi = float(x.min()), float(x.max())
    if lo == hi:
        counts = np.array([x.size], dtype=np.int64)
        edges = np.array([lo, hi])
    else:
        counts, edges = np.histogram(x, bins=HIST_BINS, range=(lo, hi))
    return SubbandStats(
        index=index,
        count=int(x.size),
        mean=float(x.mean()),
        std=float(x.std()),
        laplace_b=fit_laplace(x),
        hist_counts=counts,
        hist_edges=edges,
    )


def compute_si(d: Decomposition) -> list:
    return [subband_stats(sb.index, sb.coeffs) for sb in d.subbands]


def _box_mean(a: np.ndarray, block: int) -> np.ndarray:
    """Mean over non-overlapping ``block``-wide boxes on every axis; edge boxes may be partial."""
    out = a
    for axis in range(3):
        n = out.shape[axis]
        starts = np.arange(0, n, block)
        sums = np.add.reduceat(out, starts, axis=axis)
        widths = np.minimum(starts + block, n) - starts
        shape = [1, 1, 1]
        shape[axis] = len(widths)
        out = sums / widths.reshape(shape)
    return out


def importance_scores(d: Decomposition, g: GradientVolume) -> list:
    """``[(n, score_n)]`` with ``score_n = mean_j |c_j| * gbar_n(j)``.

    ``gbar_n(j)`` averages ``|g|`` over the voxels under coefficient ``j``:
    the box of side ``2**level`` starting at ``j * 2**level`` on each axis.
    """
    if tuple(g.dims) != tuple(d.dims):
        raise ArgumentError(f"gradient dims {g.dims} != decomposition dims {d.dims}")
    mag = np.abs(g.data)
    pooled = {}
    out = []
    for sb in d.subbands:
        if sb.level not in pooled:
            pooled[sb.level] = _box_mean(mag, 2 ** sb.level)
        dz, dy, dx = sb.coeffs.shape
        gbar = pooled[sb.level][:dz, :dy, :dx]
        score = float((np.abs(sb.coeffs.astype(np.float64)) * gbar).mean())
        out.append((sb.index, score))
    return out

