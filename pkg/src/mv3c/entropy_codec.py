"""Zero-run / Rice token coder for quantized subband integers.

Bit grammar (MSB-first within bytes, final byte zero-padded)::

    token    := '0' expgolomb0(run - 1)        # maximal run of zeros
              | '1' rice_k(zigzag(v) - 1)      # one nonzero value
    rice_k(u) := '1'*q '0' bits_k(u & (2^k - 1))      with q = u >> k, q < 48
               | '1'*48 '0' bits_32(u)                 escape for q >= 48
    zigzag(v) := 2v if v >= 0 else -2v - 1

``k`` is chosen per subband by the encoder and transmitted out of band.
"""

from __future__ import annotations

from dataclasses import dataclass

import numba
import numpy as np

from .errors import CorruptionError, DataError

ESCAPE_Q = 48
RAW_BITS = 32
MAX_K = 30
MAX_MAGNITUDE = 2 ** 31  # exclusive

_OK, _TRUNCATED, _ESCAPE_OVERRUN, _RUN_OVERFLOW, _BAD_ESCAPE, _TRAILING, _BAD_PADDING = range(7)
_MESSAGES = {
    _TRUNCATED: "truncated stream",
    _ESCAPE_OVERRUN: "escape field runs past end of payload",
    _RUN_OVERFLOW: "zero run exceeds declared symbol count",
    _BAD_ESCAPE: "escape prefix not terminated by a zero bit",
    _TRAILING: "trailing bytes after the last symbol",
    _BAD_PADDING: "nonzero padding bits",
}


@dataclass(frozen=True)
class SubbandPayload:
    k: int
    data: bytes
    count: int


@numba.njit(cache=True, nogil=True)
def _put(buf, pos, value, nbits):
    for i in range(nbits - 1, -1, -1):
        if (value >> i) & 1:
            buf[pos >> 3] |= np.uint8(0x80 >> (pos & 7))
        pos += 1
    return pos


@numba.njit(cache=True, nogil=True)
def _put_ones(buf, pos, count):
    for _ in range(count):
        buf[pos >> 3] |= np.uint8(0x80 >> (pos & 7))
        pos += 1
    return pos


@numba.njit(cache=True, nogil=True)
def _encode_kernel(values, k, buf):
    n = values.shape[0]
    pos = 0
    i = 0
    while i < n:
        x = values[i]
        if x == 0:
            j = i
            while j < n and values[j] == 0:
                j += 1
            pos += 1  # flag bit 0
            m = np.int64(j - i)  # expgolomb0(run - 1) writes run in binary
            width = 0
            t = m
            while t > 0:
                width += 1
                t >>= 1
            pos += width - 1
            pos = _put(buf, pos, m, width)
            i = j
        else:
            pos = _put(buf, pos, 1, 1)
            z = 2 * x if x >= 0 else -2 * x - 1
            u = z - 1
            q = u >> k
            if q < 48:
                pos = _put_ones(buf, pos, q)
                pos += 1
                pos = _put(buf, pos, u & ((np.int64(1) << k) - 1), k)
            else:
                pos = _put_ones(buf, pos, 48)
                pos += 1
                pos = _put(buf, pos, u, 32)
            i += 1
    return pos


@numba.njit(cache=True, nogil=True)
def _decode_kernel(buf, count, k, out):
    total = buf.shape[0] * 8
    pos = 0
    i = 0
    while i < count:
        if pos >= total:
            return _TRUNCATED, pos, i
        flag = (buf[pos >> 3] >> (7 - (pos & 7))) & 1
        pos += 1
        if flag == 0:
            zeros = 0
            while True:
                if pos >= total:
                    return _TRUNCATED, pos, i
                b = (buf[pos >> 3] >> (7 - (pos & 7))) & 1
                if b == 1:
                    break
                zeros += 1
                pos += 1
                if zeros > 40:
                    return _RUN_OVERFLOW, pos, i
            if pos + zeros + 1 > total:
                return _TRUNCATED, pos, i
            m = np.int64(0)
            for _ in range(zeros + 1):
                m = (m << 1) | ((buf[pos >> 3] >> (7 - (pos & 7))) & 1)
                pos += 1
            run = m
            if run > count - i:
                return _RUN_OVERFLOW, pos, i
            for _ in range(run):
                out[i] = 0
                i += 1
        else:
            q = 0
            while q < 48:
                if pos >= total:
                    return _TRUNCATED, pos, i
                b = (buf[pos >> 3] >> (7 - (pos & 7))) & 1
                pos += 1
                if b == 0:
                    break
                q += 1
            if q == 48:
                if pos >= total:
                    return _TRUNCATED, pos, i
                b = (buf[pos >> 3] >> (7 - (pos & 7))) & 1
                pos += 1
                if b != 0:
                    return _BAD_ESCAPE, pos, i
                if pos + 32 > total:
                    return _ESCAPE_OVERRUN, pos, i
                u = np.int64(0)
                for _ in range(32):
                    u = (u << 1) | ((buf[pos >> 3] >> (7 - (pos & 7))) & 1)
                    pos += 1
            else:
                if pos + k > total:
                    return _TRUNCATED, pos, i
                r = np.int64(0)
                for _ in range(k):
                    r = (r << 1) | ((buf[pos >> 3] >> (7 - (pos & 7))) & 1)
                    pos += 1
                u = (np.int64(q) << k) | r
            z = u + 1
            out[i] = z >> 1 if (z & 1) == 0 else -((z + 1) >> 1)
            i += 1
    if (pos + 7) // 8 != buf.shape[0]:
        return _TRAILING, pos, i
    while pos < total:
        if (buf[pos >> 3] >> (7 - (pos & 7))) & 1:
            return _BAD_PADDING, pos, i
        pos += 1
    return _OK, pos, i


def zigzag(values) -> np.ndarray:
    v = np.asarray(values, dtype=np.int64)
    return np.where(v >= 0, 2 * v, -2 * v - 1)


def choose_k(values) -> int:
    """``floor(log2(mean zigzag of nonzero values))`` clamped to ``[0, 30]``."""
    v = np.asarray(values, dtype=np.int64)
    nz = v[v != 0]
    if nz.size == 0:
        return 0
    mean = float(zigzag(nz).mean())
    return int(min(max(np.floor(np.log2(max(1.0, mean))), 0), MAX_K))


def _as_int64(values) -> np.ndarray:
    v = np.ascontiguousarray(np.asarray(values).ravel())
    if v.size and not np.issubdtype(v.dtype, np.integer):
        raise DataError(f"subband values must be integers, got dtype {v.dtype}")
    v = v.astype(np.int64)
    if v.size and np.abs(v).max() >= MAX_MAGNITUDE:
        raise DataError(f"value magnitude {int(np.abs(v).max())} exceeds 2**31 - 1")
    return v


def encode_subband(values, k=None) -> SubbandPayload:
    v = _as_int64(values)
    if k is None:
        k = choose_k(v)
    if not 0 <= k <= MAX_K:
        raise DataError(f"rice parameter {k} outside [0, {MAX_K}]")
    if v.size == 0:
        return SubbandPayload(k, b"", 0)
    # widest token: 1 flag + 48 ones + 1 zero + 32 raw bits
    buf = np.zeros((v.size * 82 + 7) // 8 + 1, dtype=np.uint8)
    nbits = _encode_kernel(v, np.int64(k), buf)
    return SubbandPayload(k, buf[: (nbits + 7) // 8].tobytes(), int(v.size))


def decode_subband(payload, count=None, k=None) -> np.ndarray:
    """Inverse of :func:`encode_subband`. Accepts a payload object or raw bytes + count + k."""
    if isinstance(payload, SubbandPayload):
        data = payload.data
        count = payload.count if count is None else count
        k = payload.k if k is None else k
    else:
        data = bytes(payload)
    if count is None or k is None:
        raise DataError("decode_subband needs count and k for raw payload bytes")
    out = np.zeros(count, dtype=np.int64)
    if count == 0:
        if data:
            raise CorruptionError(_MESSAGES[_TRAILING], 0)
        return out
    buf = np.frombuffer(data, dtype=np.uint8)
    status, pos, _ = _decode_kernel(buf, np.int64(count), np.int64(k), out)
    if status != _OK:
        raise CorruptionError(_MESSAGES[status], int(pos))
    return out
