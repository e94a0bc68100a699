"""Machine-vision-guided 3D volume compression.

Per-subband standard deviations of a 3D wavelet decomposition are mapped to
quantization steps by a clamped reciprocal function, so high-energy subbands
keep fine steps and low-energy subbands absorb most of the quantization.
"""

from .codestream import EncoderConfig, EncodeResult, Metrics, decode, encode, metrics
from .dwt3d import Decomposition, Subband, WaveletSpec, forward, inverse, subband_count
from .freq_analysis import GradientVolume, SubbandStats, compute_si, fit_laplace, importance_scores
from .qs_mapping import MappingParams, QuantizationPlan, build_plan, map_qs, scale_plan, solve_params
from .volume_io import Volume, VolumeMeta, read_nifti_minimal, read_raw, synth_phantom, write_raw

__version__ = "0.1.0"

__all__ = [
    "EncoderConfig", "EncodeResult", "Metrics", "decode", "encode", "metrics",
    "Decomposition", "Subband", "WaveletSpec", "forward", "inverse", "subband_count",
    "GradientVolume", "SubbandStats", "compute_si", "fit_laplace", "importance_scores",
    "MappingParams", "QuantizationPlan", "build_plan", "map_qs", "scale_plan", "solve_params",
    "Volume", "VolumeMeta", "read_nifti_minimal", "read_raw", "synth_phantom", "write_raw",
]
