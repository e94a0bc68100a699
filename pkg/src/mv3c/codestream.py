"""Encode/decode pipeline, the MV3C container format, rate targeting, metrics.

Layout (little-endian) of an MV3C stream::

    magic "MV3C" | u16 version | u32 nx, ny, nz | u8 dtype | f64 sx, sy, sz
    | u8 wavelet | u8 levels | u8 provenance | f64 q_min, q_max, a, b, gamma
    | per subband: f64 delta, f64 qs, u8 k, u32 payload_len
    | payloads, concatenated in subband order

``a`` and ``b`` are NaN for plans that did not come from the SI mapping.
See ``docs/FORMAT.md`` for the full description.
"""

from __future__ import annotations

import math
import os
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import dwt3d
from .dwt3d import Decomposition, Subband, WaveletSpec, subband_count, subband_layout
from .entropy_codec import decode_subband, encode_subband
from .errors import ArgumentError, CorruptionError, FormatError, RateError
from .freq_analysis import compute_si
from .qs_mapping import (
    DEFAULT_QMAX,
    DEFAULT_QMIN,
    QuantizationPlan,
    build_plan,
    scale_plan,
    uniform_plan,
)
from .quantize import dequantize, quantize
from .volume_io import (
    DTYPE_CODES,
    Volume,
    cast_to_dtype,
    dtype_bits,
    dtype_from_code,
    is_integer_dtype,
    round_half_away,
)

MAGIC = b"MV3C"
VERSION = 1
GAMMA_LOG2_RANGE = (-6.0, 12.0)
MAX_RATE_ITERATIONS = 24
PSNR_CAP = 999.0

_FIXED = struct.Struct("<4sH3IB3dBBB5d")
_RECORD = struct.Struct("<ddBI")
_PROVENANCE = {"uniform": 0, "nlm": 1, "custom": 2}


@dataclass(frozen=True)
class SubbandRecord:
    delta: float
    qs: float
    k: int
    length: int


@dataclass(frozen=True)
class Header:
    dims: tuple
    dtype: str
    spacing: tuple
    wavelet: WaveletSpec
    levels: int
    provenance: str
    q_min: float
    q_max: float
    a: float | None
    b: float | None
    gamma: float
    records: tuple
    version: int = VERSION

    @property
    def size(self) -> int:
        return _FIXED.size + _RECORD.size * len(self.records)

    def to_bytes(self) -> bytes:
        if len(self.records) != subband_count(self.levels):
            raise ArgumentError(
                f"{len(self.records)} subband records for {self.levels} levels"
            )
        nan = float("nan")
        out = [
            _FIXED.pack(
                MAGIC, self.version, *self.dims, DTYPE_CODES[self.dtype], *self.spacing,
                self.wavelet.code, self.levels, _PROVENANCE[self.provenance],
                self.q_min, self.q_max,
                nan if self.a is None else self.a,
                nan if self.b is None else self.b,
                self.gamma,
            )
        ]
        out += [_RECORD.pack(r.delta, r.qs, r.k, r.length) for r in self.records]
        return b"".join(out)

    @classmethod
    def from_bytes(cls, data: bytes) -> "Header":
        if len(data) < _FIXED.size:
            raise FormatError(f"stream of {len(data)} bytes is shorter than the MV3C header")
        fields = _FIXED.unpack_from(data, 0)
        magic, version = fields[0], fields[1]
        if magic != MAGIC:
            raise FormatError(f"bad magic {magic!r}, expected {MAGIC!r}")
        if version != VERSION:
            raise FormatError(f"unsupported MV3C version {version}")
        dims = tuple(fields[2:5])
        dtype = dtype_from_code(fields[5])
        spacing = tuple(fields[6:9])
        try:
            wavelet = WaveletSpec.from_code(fields[9])
        except ValueError as exc:
            raise FormatError(str(exc)) from None
        levels, prov = fields[10], fields[11]
        provenance = {v: k for k, v in _PROVENANCE.items()}.get(prov)
        if provenance is None:
            raise FormatError(f"unknown plan provenance code {prov}")
        q_min, q_max, a, b, gamma = fields[12:17]
        if min(dims) < 1 or levels < 1:
            raise FormatError(f"invalid dims {dims} or levels {levels}")
        n = subband_count(levels)
        end = _FIXED.size + n * _RECORD.size
        if len(data) < end:
            raise CorruptionError("stream truncated inside subband records", len(data) * 8)
        records = tuple(
            SubbandRecord(*_RECORD.unpack_from(data, _FIXED.size + i * _RECORD.size))
            for i in range(n)
        )
        return cls(
            dims, dtype, spacing, wavelet, levels, provenance, q_min, q_max,
            None if math.isnan(a) else a, None if math.isnan(b) else b, gamma, records,
        )


@dataclass
class EncoderConfig:
    wavelet: str = WaveletSpec.CDF_9_7.value
    levels: int = 3
    q_min: float = DEFAULT_QMIN
    q_max: float = DEFAULT_QMAX
    target_cr: float | None = None
    cr_tolerance: float = 0.05
    uniform_qs: float | None = None
    threads: int | None = None


@dataclass
class EncodeResult:
    stream: bytes
    plan: QuantizationPlan
    stats: list
    cr: float
    iterations: int = 1
    converged: bool = True
    subband_mae: list = field(default_factory=list)
    trials: list = field(default_factory=list)  # (gamma, cr) per rate-search iteration

    @property
    def gamma(self) -> float:
        return self.plan.gamma


@dataclass(frozen=True)
class Metrics:
    mse: float
    psnr: float
    peak: float
    cr: float | None = None
    subband_mae: tuple | None = None


def resolve_threads(threads=None) -> int:
    if threads is None:
        threads = int(os.environ.get("MV3C_THREADS", "1") or 1)
    return max(1, int(threads))


def _map(fn, items, threads):
    if threads <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def _reconstruct(q, qs, integer):
    rec = dequantize(q, qs, integer=integer)
    if integer and rec.dtype != np.int64:
        rec = round_half_away(rec).astype(np.int64)
    return rec


class PreparedVolume:
    """DWT and SI for one volume, computed once and reused across rate-search trials."""

    def __init__(self, v: Volume, cfg: EncoderConfig):
        self.volume = v
        self.cfg = cfg
        self.spec = WaveletSpec.parse(cfg.wavelet)
        self.decomp = dwt3d.forward(v, self.spec, cfg.levels)
        self.stats = compute_si(self.decomp)
        self.threads = resolve_threads(cfg.threads)

    def base_plan(self) -> QuantizationPlan:
        n = len(self.decomp)
        if self.cfg.uniform_qs is not None:
            return uniform_plan(n, self.cfg.uniform_qs, self.cfg.q_min, self.cfg.q_max)
        return build_plan(self.stats, self.cfg.q_min, self.cfg.q_max)

    def code(self, plan: QuantizationPlan):
        if len(plan) != len(self.decomp):
            raise ArgumentError(f"plan has {len(plan)} steps for {len(self.decomp)} subbands")

        def one(i):
            sb = self.decomp.subbands[i]
            q = quantize(sb.coeffs.ravel(), plan.steps[i], index=i)
            return encode_subband(q), q

        return _map(one, list(range(len(self.decomp))), self.threads)

    def header(self, plan, payloads) -> Header:
        params = plan.params
        if params is not None:
            provenance = "nlm"
        else:
            provenance = plan.provenance if plan.provenance in _PROVENANCE else "custom"
        v = self.volume
        records = tuple(
            SubbandRecord(st.std, qs, p.k, len(p.data))
            for st, qs, p in zip(self.stats, plan.steps, payloads)
        )
        return Header(
            v.dims, v.dtype, v.spacing, self.spec, self.cfg.levels, provenance,
            float(plan.q_min), float(plan.q_max),
            params.a if params else None, params.b if params else None,
            float(plan.gamma), records,
        )

    def assemble(self, plan, coded) -> bytes:
        payloads = [p for p, _ in coded]
        head = self.header(plan, payloads).to_bytes()
        return head + b"".join(p.data for p in payloads)

    def stream_size(self, coded) -> int:
        return _FIXED.size + _RECORD.size * len(coded) + sum(len(p.data) for p, _ in coded)

    def subband_mae(self, plan, coded) -> list:
        integer = self.spec.is_integer
        out = []
        for sb, qs, (_, q) in zip(self.decomp.subbands, plan.steps, coded):
            rec = _reconstruct(q, qs, integer)
            out.append(float(np.abs(sb.coeffs.ravel() - rec).mean()))
        return out


def encode(v: Volume, cfg: EncoderConfig | None = None, plan: QuantizationPlan | None = None) -> EncodeResult:
    """Run DWT, SI mapping, optional rate search, quantization and entropy coding.

    ``plan`` overrides the SI-derived plan (used by the corner sweeps). With
    ``cfg.target_cr`` set, the plan is scaled by a global factor found by
    bisection on ``log2(gamma)`` over ``[-6, 12]``.
    """
    cfg = cfg or EncoderConfig()
    prep = PreparedVolume(v, cfg)
    base = plan if plan is not None else prep.base_plan()
    nbytes = v.nbytes

    if cfg.target_cr is None:
        coded = prep.code(base)
        stream = prep.assemble(base, coded)
        return EncodeResult(
            stream, base, prep.stats, nbytes / len(stream),
            subband_mae=prep.subband_mae(base, coded),
        )
    return _rate_search(prep, base, float(cfg.target_cr), float(cfg.cr_tolerance))


def _rate_search(prep: PreparedVolume, base: QuantizationPlan, target: float, tol: float) -> EncodeResult:
    if not target > 0:
        raise ArgumentError(f"target CR must be positive, got {target}")
    if not tol > 0:
        raise ArgumentError(f"CR tolerance must be positive, got {tol}")
    nbytes = prep.volume.nbytes
    trials = []
    best = None

    def trial(lg):
        nonlocal best
        plan = scale_plan(base, 2.0 ** lg)
        coded = prep.code(plan)
        cr = nbytes / prep.stream_size(coded)
        trials.append((plan.gamma, cr))
        err = abs(cr - target) / target
        if best is None or err < best[0]:
            best = (err, plan, coded, cr)
        return cr

    def done(converged):
        _, plan, coded, cr = best
        return EncodeResult(
            prep.assemble(plan, coded), plan, prep.stats, cr, len(trials), converged,
            prep.subband_mae(plan, coded), trials,
        )

    lo, hi = GAMMA_LOG2_RANGE
    cr_lo = trial(lo)
    if abs(cr_lo - target) <= tol * target:
        return done(True)
    cr_hi = trial(hi)
    if abs(cr_hi - target) <= tol * target:
        return done(True)
    if target < cr_lo or target > cr_hi:
        raise RateError(
            f"target CR {target:g} outside achievable range [{cr_lo:.3g}, {cr_hi:.3g}]",
            achievable=(cr_lo, cr_hi),
        )
    while len(trials) < MAX_RATE_ITERATIONS:
        mid = 0.5 * (lo + hi)
        cr = trial(mid)
        if abs(cr - target) <= tol * target:
            return done(True)
        if cr < target:
            lo = mid
        else:
            hi = mid
    return done(False)


def decode_coefficients(data: bytes, threads=None):
    """Parse a stream and return ``(header, Decomposition of dequantized coefficients)``."""
    data = bytes(data)
    header = Header.from_bytes(data)
    offset = header.size
    total = sum(r.length for r in header.records)
    if offset + total != len(data):
        raise CorruptionError(
            f"payload lengths sum to {total} bytes but {len(data) - offset} follow the header",
            offset * 8,
        )
    try:
        layout = subband_layout(header.dims, header.levels)
        dwt3d.check_levels(header.dims, header.levels)
    except ArgumentError as exc:
        raise FormatError(f"header describes an impossible decomposition: {exc}") from None
    integer = header.wavelet.is_integer
    starts = np.concatenate([[offset], offset + np.cumsum([r.length for r in header.records])])

    def one(i):
        rec = header.records[i]
        level, code, (dx, dy, dz) = layout[i]
        if not rec.qs >= 1:
            raise FormatError(f"subband {i}: quantization step {rec.qs} < 1")
        chunk = data[starts[i] : starts[i] + rec.length]
        try:
            q = decode_subband(chunk, dx * dy * dz, rec.k)
        except CorruptionError as exc:
            raise CorruptionError(f"subband {i}: {exc}") from None
        coeffs = _reconstruct(q, rec.qs, integer).reshape(dz, dy, dx)
        return Subband(i, level, dwt3d.orientation_name(code), coeffs)

    subbands = _map(one, list(range(len(layout))), resolve_threads(threads))
    return header, Decomposition(header.wavelet, header.levels, header.dims, subbands)


def decode(data: bytes, threads=None) -> Volume:
    header, decomp = decode_coefficients(data, threads)
    arr = dwt3d.inverse_array(decomp)
    return Volume(cast_to_dtype(arr, header.dtype), header.dtype, header.spacing)


def peak_value(v: Volume) -> float:
    if is_integer_dtype(v.dtype):
        return float(2 ** dtype_bits(v.dtype) - 1)
    finite = v.data[np.isfinite(v.data)]
    spread = float(finite.max() - finite.min()) if finite.size else 0.0
    return spread if spread > 0 else 1.0


def psnr_from_mse(mse: float, peak: float) -> float:
    if mse == 0:
        return PSNR_CAP
    return min(PSNR_CAP, 10.0 * math.log10(peak * peak / mse))


def metrics(original: Volume, recon: Volume, stream: bytes | None = None) -> Metrics:
    if original.dims != recon.dims:
        raise ArgumentError(f"dims mismatch: {original.dims} vs {recon.dims}")
    diff = original.data.astype(np.float64) - recon.data.astype(np.float64)
    mse = float(np.mean(diff * diff))
    peak = peak_value(original)
    cr = mae = None
    if stream is not None:
        cr = original.nbytes / len(stream)
        header, decomp = decode_coefficients(stream)
        ref = dwt3d.forward(original, header.wavelet, header.levels)
        mae = tuple(
            float(np.abs(a.coeffs - b.coeffs).mean())
            for a, b in zip(ref.subbands, decomp.subbands)
        )
    return Metrics(mse, psnr_from_mse(mse, peak), peak, cr, mae)


def compression_rate(original_bytes: int, stream_bytes: int) -> float:
    return original_bytes / stream_bytes


__all__ = [
    "Header", "SubbandRecord", "EncoderConfig", "EncodeResult", "Metrics",
    "encode", "decode", "decode_coefficients", "metrics", "peak_value",
    "psnr_from_mse", "compression_rate", "resolve_threads",
]
