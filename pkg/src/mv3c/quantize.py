"""Deadzone scalar quantizer with midpoint reconstruction."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ArgumentError, DataError

RECON_OFFSET = 0.5


@dataclass(frozen=True)
class QuantizedSubband:
    index: int
    qs: float
    values: np.ndarray  # int64, same shape as the source subband


def _check_qs(qs):
    if not qs >= 1:
        raise ArgumentError(f"quantization step must be >= 1, got {qs}")


def quantize(coeffs, qs: float, index=None) -> np.ndarray:
    """``sign(x) * floor(|x| / qs)`` as int64."""
    _check_qs(qs)
    x = np.asarray(coeffs)
    if np.issubdtype(x.dtype, np.integer):
        if qs == 1:
            return x.astype(np.int64)
        x = x.astype(np.float64)
    elif not np.isfinite(x).all():
        where = "" if index is None else f" in subband {index}"
        raise DataError(f"non-finite coefficient{where}")
    mag = np.floor(np.abs(x) / qs)
    return (np.sign(x) * mag).astype(np.int64)


def dequantize(values, qs: float, integer: bool = False) -> np.ndarray:
    """Midpoint reconstruction; ``integer=True`` with ``qs == 1`` is the exact identity."""
    _check_qs(qs)
    q = np.asarray(values, dtype=np.int64)
    if integer and qs == 1:
        return q.copy()
    mag = np.abs(q).astype(np.float64)
    return np.where(q == 0, 0.0, np.sign(q) * (mag + RECON_OFFSET) * qs)


def quantize_subband(index: int, coeffs, qs: float) -> QuantizedSubband:
    return QuantizedSubband(index, float(qs), quantize(coeffs, qs, index))
