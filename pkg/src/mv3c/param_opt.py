"""Corner-case sweeps that locate Q_min and Q_max against a quality oracle.

The lower sweep applies one step to every subband. The upper sweep holds every
subband at Q_min except the one with the smallest SI. In both, the selected
step is the largest candidate whose score stays within a relative tolerance
of the uncompressed reference score.
"""

from __future__ import annotations

import math
import shlex
import shutil
import subprocess
import tempfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .codestream import EncoderConfig, PreparedVolume, decode, metrics
from .errors import ArgumentError, OracleError
from .qs_mapping import QuantizationPlan, uniform_plan
from .volume_io import Volume, read_raw, write_raw

ORACLE_KINDS = ("builtin-psnr", "builtin-mae", "external-command")
DEFAULT_TIMEOUT = 600.0


@dataclass(frozen=True)
class OracleSpec:
    kind: str = "builtin-psnr"
    command: str | None = None
    args: tuple = ("{orig}", "{recon}")
    epsilon: float = 0.005
    timeout: float = DEFAULT_TIMEOUT

    def __post_init__(self):
        if self.kind not in ORACLE_KINDS:
            raise ArgumentError(f"unknown oracle kind {self.kind!r}")
        if not self.epsilon >= 0:
            raise ArgumentError(f"epsilon must be >= 0, got {self.epsilon}")
        if self.kind == "external-command" and not self.command:
            raise ArgumentError("external-command oracle needs a command")

    @property
    def builtin(self) -> bool:
        return self.kind != "external-command"

    @classmethod
    def parse(cls, text: str, epsilon: float = 0.005, timeout: float = DEFAULT_TIMEOUT):
        """``psnr``, ``mae``, a builtin kind name, or ``cmd:<command line>``.

        A command line without ``{orig}``/``{recon}`` placeholders gets the two
        paths appended.
        """
        aliases = {"psnr": "builtin-psnr", "mae": "builtin-mae"}
        if text.startswith("cmd:"):
            parts = shlex.split(text[4:])
            if not parts:
                raise ArgumentError("empty oracle command")
            args = tuple(parts[1:])
            if not any("{orig}" in a or "{recon}" in a for a in args):
                args = args + ("{orig}", "{recon}")
            return cls("external-command", parts[0], args, epsilon, timeout)
        return cls(aliases.get(text, text), None, ("{orig}", "{recon}"), epsilon, timeout)


@dataclass
class SweepResult:
    rows: list  # (qs, cr, score) per candidate
    selected: float | None  # None: no candidate admissible
    reference: float
    kind: str = "lower"
    subband: int | None = None  # varied subband in the upper sweep

    def as_dict(self) -> dict:
        return {
            "sweep": self.kind,
            "reference_score": self.reference,
            "selected_qs": self.selected,
            "varied_subband": self.subband,
            "rows": [{"qs": q, "cr": cr, "score": s} for q, cr, s in self.rows],
        }


def _builtin_score(kind, original: Volume, recon: Volume) -> float:
    m = metrics(original, recon)
    if kind == "builtin-psnr":
        return m.psnr
    diff = np.abs(original.data.astype(np.float64) - recon.data.astype(np.float64))
    return -float(diff.mean())


def run_oracle(oracle: OracleSpec, original_path, recon_path) -> float:
    """Score ``recon`` against ``original``; higher is better."""
    if oracle.builtin:
        return _builtin_score(oracle.kind, read_raw(original_path), read_raw(recon_path))
    subs = {"orig": str(original_path), "recon": str(recon_path)}
    argv = [oracle.command] + [a.format(**subs) for a in oracle.args]
    try:
        proc = subprocess.run(argv, capture_output=True, text=True, timeout=oracle.timeout)
    except FileNotFoundError:
        raise OracleError(f"oracle command not found: {oracle.command}") from None
    except subprocess.TimeoutExpired as exc:
        partial = exc.stdout if isinstance(exc.stdout, str) else ""
        raise OracleError(f"oracle timed out after {oracle.timeout:g} s", partial) from None
    output = proc.stdout + proc.stderr
    if proc.returncode != 0:
        raise OracleError(f"oracle exited with status {proc.returncode}", output)
    try:
        score = float(proc.stdout.strip())
    except ValueError:
        raise OracleError(f"oracle output is not a single number: {proc.stdout.strip()!r}", output) from None
    if not math.isfinite(score):
        raise OracleError(f"oracle returned non-finite score {score}", output)
    return score


def check_oracle(oracle: OracleSpec):
    if oracle.builtin:
        return
    if shutil.which(oracle.command) is None and not Path(oracle.command).is_file():
        raise OracleError(f"oracle command not resolvable: {oracle.command}")


class _Scorer:
    """Scores reconstructions of a set of volumes; external oracles go through temp files."""

    def __init__(self, volumes, oracle: OracleSpec):
        self.volumes = volumes
        self.oracle = oracle
        self._tmp = None
        self._orig_paths = []
        if not oracle.builtin:
            self._tmp = tempfile.TemporaryDirectory(prefix="mv3c-sweep-")
            for i, v in enumerate(volumes):
                p = Path(self._tmp.name) / f"orig{i}.raw"
                write_raw(v, p)
                self._orig_paths.append(p)

    def score(self, recons) -> float:
        scores = []
        for i, (v, r) in enumerate(zip(self.volumes, recons)):
            if self.oracle.builtin:
                scores.append(_builtin_score(self.oracle.kind, v, r))
            else:
                p = Path(self._tmp.name) / f"recon{i}.raw"
                write_raw(r, p)
                scores.append(run_oracle(self.oracle, self._orig_paths[i], p))
        return float(np.mean(scores))

    def close(self):
        if self._tmp is not None:
            self._tmp.cleanup()


def degradation(reference: float, score: float) -> float:
    """Relative drop ``(ref - score) / |ref|``; absolute drop when the reference is 0."""
    if reference == 0:
        return reference - score
    return (reference - score) / abs(reference)


def select_qs(rows, reference, epsilon):
    admissible = [q for q, _, s in rows if degradation(reference, s) <= epsilon]
    return max(admissible) if admissible else None


def _as_list(volumes):
    if isinstance(volumes, Volume):
        return [volumes]
    volumes = list(volumes)
    if not volumes:
        raise ArgumentError("sweep needs at least one volume")
    return volumes


def _check_candidates(candidates):
    c = [float(q) for q in candidates]
    if not c:
        raise ArgumentError("candidate list is empty")
    if any(q < 1 for q in c) or any(b <= a for a, b in zip(c, c[1:])):
        raise ArgumentError(f"candidates must be strictly ascending and >= 1, got {c}")
    return c


def _sweep(volumes, cfg, candidates, oracle, plan_for, kind):
    cfg = cfg or EncoderConfig()
    cfg = EncoderConfig(**{**cfg.__dict__, "target_cr": None})
    check_oracle(oracle)
    preps = [PreparedVolume(v, cfg) for v in volumes]
    scorer = _Scorer(volumes, oracle)
    try:
        reference = scorer.score(volumes)
        rows = []
        for q in candidates:
            recons, crs = [], []
            for prep in preps:
                plan = plan_for(prep, q)
                coded = prep.code(plan)
                stream = prep.assemble(plan, coded)
                recons.append(decode(stream, prep.threads))
                crs.append(prep.volume.nbytes / len(stream))
            rows.append((q, float(np.mean(crs)), scorer.score(recons)))
    finally:
        scorer.close()
    return SweepResult(rows, select_qs(rows, reference, oracle.epsilon), reference, kind)


def lower_corner_sweep(volumes, cfg, candidates, oracle: OracleSpec) -> SweepResult:
    """Uniform step ``q`` on every subband, for each candidate."""
    volumes = _as_list(volumes)
    candidates = _check_candidates(candidates)

    def plan_for(prep, q):
        return uniform_plan(len(prep.decomp), q)

    return _sweep(volumes, cfg, candidates, oracle, plan_for, "lower")


def least_significant_subband(stats) -> int:
    """Index of the smallest SI; ties go to the highest index (finest detail)."""
    deltas = [s.std for s in stats]
    lo = min(deltas)
    return max(i for i, d in enumerate(deltas) if d == lo)


def upper_corner_sweep(volumes, cfg, q_min, candidates, oracle: OracleSpec) -> SweepResult:
    """Vary only the least-significant subband's step; all others stay at ``q_min``."""
    volumes = _as_list(volumes)
    candidates = _check_candidates(candidates)
    if not q_min >= 1:
        raise ArgumentError(f"Q_min must be >= 1, got {q_min}")
    varied = {}

    def plan_for(prep, q):
        n = least_significant_subband(prep.stats)
        varied[id(prep)] = n
        steps = [float(q_min)] * len(prep.decomp)
        steps[n] = q
        return QuantizationPlan(tuple(steps), "custom", 1.0, float(q_min), max(float(q_min), q))

    result = _sweep(volumes, cfg, candidates, oracle, plan_for, "upper")
    ids = set(varied.values())
    result.subband = ids.pop() if len(ids) == 1 else None
    return result
