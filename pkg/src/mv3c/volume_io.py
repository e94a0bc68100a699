"""Volume container, raw/sidecar and minimal NIfTI-1 I/O, synthetic phantoms.

Voxel arrays are held as numpy arrays of shape ``(nz, ny, nx)`` in C order,
so the flattened buffer is x-fastest raster order.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ArgumentError, FormatError, UnsupportedFormatError

DTYPES = {
    "uint8": np.dtype("<u1"),
    "int16": np.dtype("<i2"),
    "uint16": np.dtype("<u2"),
    "float32": np.dtype("<f4"),
}

# codestream dtype codes
DTYPE_CODES = {"uint8": 1, "int16": 2, "uint16": 3, "float32": 4}

NIFTI_DTYPES = {2: "uint8", 4: "int16", 16: "float32", 512: "uint16"}

PHANTOM_KINDS = ("constant", "gradient-ramp", "gaussian-blobs", "blobs-plus-noise")


def dtype_from_code(code: int) -> str:
    for name, c in DTYPE_CODES.items():
        if c == code:
            return name
    raise UnsupportedFormatError(f"unknown dtype code {code}")


def is_integer_dtype(dtype: str) -> bool:
    return dtype != "float32"


def dtype_bits(dtype: str) -> int:
    return DTYPES[dtype].itemsize * 8


@dataclass(frozen=True)
class VolumeMeta:
    dims: tuple
    dtype: str
    spacing: tuple = (1.0, 1.0, 1.0)
    description: str = ""

    def to_text(self) -> str:
        doc = {
            "dims": list(self.dims),
            "dtype": self.dtype,
            "spacing": list(self.spacing),
            "byte_order": "little",
            "description": self.description,
        }
        return json.dumps(doc, indent=2) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "VolumeMeta":
        try:
            doc = json.loads(text)
            dims = tuple(int(d) for d in doc["dims"])
            dtype = str(doc["dtype"])
            spacing = tuple(float(s) for s in doc.get("spacing", (1.0, 1.0, 1.0)))
        except (ValueError, KeyError, TypeError) as exc:
            raise FormatError(f"malformed volume sidecar: {exc}") from exc
        if doc.get("byte_order", "little") != "little":
            raise UnsupportedFormatError(f"byte_order {doc['byte_order']!r} not supported")
        if dtype not in DTYPES:
            raise UnsupportedFormatError(f"unsupported dtype {dtype!r}")
        if len(dims) != 3 or min(dims) < 1:
            raise FormatError(f"dims must be three positive integers, got {dims}")
        if len(spacing) != 3:
            raise FormatError(f"spacing must have three entries, got {spacing}")
        return cls(dims, dtype, spacing, str(doc.get("description", "")))


@dataclass(frozen=True, eq=False)
class Volume:
    """Immutable 3D scalar grid. ``dims`` is ``(nx, ny, nz)``."""

    data: np.ndarray
    dtype: str
    spacing: tuple = (1.0, 1.0, 1.0)
    dims: tuple = field(init=False)

    def __post_init__(self):
        if self.dtype not in DTYPES:
            raise UnsupportedFormatError(f"unsupported dtype {self.dtype!r}")
        data = self.data
        if data.ndim != 3:
            raise ArgumentError(f"volume data must be 3-D, got shape {data.shape}")
        if min(data.shape) < 1:
            raise ArgumentError(f"volume dims must be >= 1, got {data.shape[::-1]}")
        want = DTYPES[self.dtype]
        if data.dtype != want or not data.flags.c_contiguous:
            data = np.ascontiguousarray(data, dtype=want)
        else:
            data = data.copy()
        data.setflags(write=False)
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "dims", tuple(int(n) for n in data.shape[::-1]))
        object.__setattr__(self, "spacing", tuple(float(s) for s in self.spacing))

    @classmethod
    def from_flat(cls, flat, dims, dtype, spacing=(1.0, 1.0, 1.0)) -> "Volume":
        nx, ny, nz = dims
        arr = np.asarray(flat, dtype=DTYPES[dtype])
        if arr.size != nx * ny * nz:
            raise ArgumentError(f"data length {arr.size} != {nx}*{ny}*{nz}")
        return cls(arr.reshape(nz, ny, nx), dtype, spacing)

    @property
    def meta(self) -> VolumeMeta:
        return VolumeMeta(self.dims, self.dtype, self.spacing)

    @property
    def nbytes(self) -> int:
        return self.data.nbytes

    def __eq__(self, other):
        """Bit-exact equality (NaN payloads compare by bit pattern)."""
        if not isinstance(other, Volume):
            return NotImplemented
        return (
            self.dims == other.dims
            and self.dtype == other.dtype
            and self.spacing == other.spacing
            and self.data.tobytes() == other.data.tobytes()
        )

    __hash__ = None


def default_meta_path(data_path) -> Path:
    data_path = Path(data_path)
    return data_path.with_name(data_path.name + ".json")


def read_raw(data_path, meta_path=None) -> Volume:
    data_path = Path(data_path)
    meta_path = Path(meta_path) if meta_path is not None else default_meta_path(data_path)
    try:
        meta = VolumeMeta.from_text(meta_path.read_text())
        raw = data_path.read_bytes()
    except OSError as exc:
        raise FormatError(f"cannot read volume {exc.filename}: {exc.strerror}") from exc
    nx, ny, nz = meta.dims
    expected = nx * ny * nz * DTYPES[meta.dtype].itemsize
    if len(raw) != expected:
        raise FormatError(
            f"{data_path}: expected {expected} bytes for dims {meta.dims} "
            f"{meta.dtype}, file has {len(raw)}"
        )
    arr = np.frombuffer(raw, dtype=DTYPES[meta.dtype]).reshape(nz, ny, nx)
    return Volume(arr, meta.dtype, meta.spacing)


def write_raw(v: Volume, data_path, meta_path=None, description="") -> None:
    data_path = Path(data_path)
    meta_path = Path(meta_path) if meta_path is not None else default_meta_path(data_path)
    meta = VolumeMeta(v.dims, v.dtype, v.spacing, description)
    try:
        data_path.write_bytes(v.data.astype(DTYPES[v.dtype], copy=False).tobytes())
        meta_path.write_text(meta.to_text())
    except OSError as exc:
        raise FormatError(f"cannot write volume {exc.filename}: {exc.strerror}") from exc


def read_nifti_minimal(path) -> Volume:
    """Read a single-file, uncompressed NIfTI-1 volume.

    Only datatypes uint8, int16, uint16 and float32 are accepted. Anything
    outside that subset raises :class:`UnsupportedFormatError`.
    """
    path = Path(path)
    try:
        blob = path.read_bytes()
    except OSError as exc:
        raise FormatError(f"cannot read {path}: {exc.strerror}") from exc
    if blob[:2] == b"\x1f\x8b":
        raise UnsupportedFormatError(f"{path}: gzip-compressed payload is not supported")
    if len(blob) < 348:
        raise FormatError(f"{path}: file shorter than the 348-byte NIfTI-1 header")

    for endian in "<>":
        if struct.unpack(endian + "i", blob[0:4])[0] == 348:
            break
    else:
        raise UnsupportedFormatError(f"{path}: sizeof_hdr is not 348")

    magic = blob[344:348]
    if magic != b"n+1\x00":
        raise UnsupportedFormatError(
            f"{path}: magic {magic!r} unsupported (only single-file 'n+1' layout)"
        )
    dim = struct.unpack(endian + "8h", blob[40:56])
    datatype, _bitpix = struct.unpack(endian + "2h", blob[70:74])
    pixdim = struct.unpack(endian + "8f", blob[76:108])
    vox_offset, scl_slope, scl_inter = struct.unpack(endian + "3f", blob[108:120])

    if datatype not in NIFTI_DTYPES:
        raise UnsupportedFormatError(f"{path}: datatype {datatype} not supported")
    ndim = dim[0]
    if not 3 <= ndim <= 7 or any(d != 1 for d in dim[4 : ndim + 1]):
        raise UnsupportedFormatError(f"{path}: dim[0]={ndim} with dims {dim[1:ndim + 1]} is not a 3-D volume")
    nx, ny, nz = dim[1:4]
    if min(nx, ny, nz) < 1:
        raise FormatError(f"{path}: non-positive dim fields {dim[1:4]}")

    dtype = NIFTI_DTYPES[datatype]
    np_dtype = DTYPES[dtype].newbyteorder(endian)
    offset = int(vox_offset)
    nbytes = nx * ny * nz * np_dtype.itemsize
    if offset < 348 or offset + nbytes > len(blob):
        raise FormatError(
            f"{path}: vox_offset {offset} + {nbytes} payload bytes exceeds file size {len(blob)}"
        )
    arr = np.frombuffer(blob, dtype=np_dtype, count=nx * ny * nz, offset=offset)
    arr = arr.reshape(nz, ny, nx).astype(DTYPES[dtype])
    spacing = tuple(abs(float(p)) or 1.0 for p in pixdim[1:4])

    if scl_slope != 0 and not (scl_slope == 1 and scl_inter == 0):
        arr = (arr.astype(np.float64) * scl_slope + scl_inter).astype(np.float32)
        dtype = "float32"
    return Volume(arr, dtype, spacing)


def read_volume(path) -> Volume:
    """Dispatch on extension: ``.nii`` goes through NIfTI, anything else is raw+sidecar."""
    path = Path(path)
    if path.suffix.lower() == ".nii":
        return read_nifti_minimal(path)
    if path.name.lower().endswith(".nii.gz"):
        raise UnsupportedFormatError(f"{path}: compressed NIfTI is not supported")
    return read_raw(path)


EDGE_WIDTH = 0.25  # voxels, tanh edge profile
_PHANTOM_RANGE = {"uint8": 200.0, "int16": 24000.0, "uint16": 24000.0, "float32": 1.0}


def _random_rotation(rng):
    q = rng.normal(size=4)
    w, x, y, z = q / np.linalg.norm(q)
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)],
        [2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)],
        [2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)],
    ])


def _blobs(shape, rng, edge_width):
    nz, ny, nx = shape
    z, y, x = np.meshgrid(
        np.arange(nz, dtype=np.float64),
        np.arange(ny, dtype=np.float64),
        np.arange(nx, dtype=np.float64),
        indexing="ij",
    )
    ext = np.array([nx, ny, nz], dtype=np.float64)
    out = np.zeros(shape, dtype=np.float64)
    n_blobs = int(rng.integers(5, 10))
    for _ in range(n_blobs):
        center = rng.uniform(0.2, 0.8, 3) * ext
        semi = np.maximum(rng.uniform(0.08, 0.3, 3) * ext, 1.0)
        rot = _random_rotation(rng)
        level = rng.uniform(0.25, 1.0)
        px, py, pz = x - center[0], y - center[1], z - center[2]
        r2 = 0.0
        for axis in range(3):
            u = rot[axis, 0] * px + rot[axis, 1] * py + rot[axis, 2] * pz
            r2 = r2 + (u / semi[axis]) ** 2
        r = np.sqrt(r2)
        out += level * 0.5 * (1.0 - np.tanh((r - 1.0) * semi.mean() / edge_width))
    return out


def synth_phantom(kind: str, dims, seed: int = 0, dtype: str = "int16") -> Volume:
    """Deterministic synthetic test volume.

    ``gaussian-blobs`` sums seeded soft-edged ellipsoids; ``blobs-plus-noise``
    adds seeded Gaussian noise whose standard deviation is 5% of the clean
    phantom's dynamic range.
    """
    if kind not in PHANTOM_KINDS:
        raise ArgumentError(f"unknown phantom kind {kind!r}; expected one of {PHANTOM_KINDS}")
    if dtype not in DTYPES:
        raise UnsupportedFormatError(f"unsupported dtype {dtype!r}")
    nx, ny, nz = (int(d) for d in dims)
    if min(nx, ny, nz) < 1:
        raise ArgumentError(f"dims must be >= 1, got {dims}")
    shape = (nz, ny, nx)
    amplitude = _PHANTOM_RANGE[dtype]
    rng = np.random.default_rng(seed)

    if kind == "constant":
        vals = np.full(shape, 0.5 * amplitude)
    elif kind == "gradient-ramp":
        z, y, x = np.indices(shape, dtype=np.float64)
        denom = max(nx + ny + nz - 3, 1)
        vals = (x + y + z) / denom * amplitude
    else:
        vals = _blobs(shape, rng, EDGE_WIDTH)
        vals = (0.1 + 0.8 * vals / vals.max()) * amplitude
        if kind == "blobs-plus-noise":
            spread = vals.max() - vals.min()
            vals = vals + rng.normal(0.0, 0.05 * spread, shape)

    if is_integer_dtype(dtype):
        info = np.iinfo(DTYPES[dtype])
        vals = np.clip(np.rint(vals), info.min, info.max)
    return Volume(vals.astype(DTYPES[dtype]), dtype)


def round_half_away(x: np.ndarray) -> np.ndarray:
    return np.copysign(np.floor(np.abs(x) + 0.5), x)


def cast_to_dtype(arr: np.ndarray, dtype: str) -> np.ndarray:
    """Cast to a volume dtype; integer targets round half away from zero and saturate."""
    target = DTYPES[dtype]
    if not is_integer_dtype(dtype):
        return arr.astype(target)
    info = np.iinfo(target)
    if np.issubdtype(arr.dtype, np.integer):
        return np.clip(arr, info.min, info.max).astype(target)
    return np.clip(round_half_away(arr), info.min, info.max).astype(target)
