import os
import stat
import struct
import sys
import textwrap

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from mv3c.volume_io import Volume, synth_phantom

settings.register_profile(
    "default", max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

_NIFTI_CODES = {"uint8": (2, 8), "int16": (4, 16), "float32": (16, 32), "uint16": (512, 16),
                "int32": (8, 32)}


def write_nifti(path, arr, dtype="int16", *, endian="<", magic=b"n+1\x00", dim0=3,
                extra_dims=(), slope=0.0, inter=0.0, spacing=(1.0, 1.0, 1.0), gzip_magic=False):
    """Minimal NIfTI-1 writer: 348-byte header, 4 extension bytes, payload at 352."""
    nz, ny, nx = arr.shape
    code, bitpix = _NIFTI_CODES[dtype]
    hdr = bytearray(348)
    struct.pack_into(endian + "i", hdr, 0, 348)
    dims = [dim0, nx, ny, nz, *extra_dims]
    dims += [1] * (8 - len(dims))
    struct.pack_into(endian + "8h", hdr, 40, *dims)
    struct.pack_into(endian + "2h", hdr, 70, code, bitpix)
    struct.pack_into(endian + "8f", hdr, 76, 1.0, *spacing, 1, 1, 1, 1)
    struct.pack_into(endian + "3f", hdr, 108, 352.0, slope, inter)
    hdr[344:348] = magic
    payload = np.ascontiguousarray(arr).astype(np.dtype(dtype).newbyteorder(endian)).tobytes()
    blob = bytes(hdr) + b"\x00" * 4 + payload
    if gzip_magic:
        blob = b"\x1f\x8b" + blob[2:]
    path.write_bytes(blob)
    return path


def make_script(path, body):
    """Write an executable Python script run with the current interpreter."""
    path.write_text(f"#!{sys.executable}\n" + textwrap.dedent(body))
    path.chmod(path.stat().st_mode | stat.S_IXUSR)
    return path


@pytest.fixture
def nifti_writer():
    return write_nifti


@pytest.fixture
def script_factory(tmp_path):
    def factory(name, body):
        return make_script(tmp_path / name, body)
    return factory


@pytest.fixture(scope="session")
def blobs32():
    return synth_phantom("gaussian-blobs", (32, 32, 32), seed=1)


@pytest.fixture(scope="session")
def noisy32():
    return synth_phantom("blobs-plus-noise", (32, 32, 32), seed=2)


def random_int16(shape, seed):
    rng = np.random.default_rng(seed)
    return Volume(rng.integers(-32768, 32768, size=shape, dtype=np.int16), "int16")
