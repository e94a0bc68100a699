"""Reciprocal SI-to-QS mapping, anchor solve, and quantization plans."""

from __future__ import annotations

from dataclasses import dataclass, replace

from .errors import ArgumentError, DegenerateSpreadError, DomainError

DEFAULT_QMIN = 1.0
DEFAULT_QMAX = 16.0


@dataclass(frozen=True)
class MappingParams:
    a: float
    b: float
    q_min: float = DEFAULT_QMIN
    q_max: float = DEFAULT_QMAX

    def __post_init__(self):
        if not self.q_min >= 1:
            raise ArgumentError(f"Q_min must be >= 1, got {self.q_min}")
        if not self.q_max > self.q_min:
            raise ArgumentError(f"Q_max ({self.q_max}) must exceed Q_min ({self.q_min})")
        if not self.a > 0:
            raise ArgumentError(f"a must be positive, got {self.a}")


@dataclass(frozen=True)
class QuantizationPlan:
    """Per-subband steps aligned with decomposition order.

    ``provenance`` is a :class:`MappingParams`, ``"uniform"``, or ``"custom"``
    (hand-built plans such as the upper corner sweep).
    """

    steps: tuple
    provenance: object = "uniform"
    gamma: float = 1.0
    q_min: float = DEFAULT_QMIN
    q_max: float = DEFAULT_QMAX

    def __post_init__(self):
        steps = tuple(float(q) for q in self.steps)
        if any(not q >= 1 for q in steps):
            raise ArgumentError(f"every quantization step must be >= 1, got {steps}")
        object.__setattr__(self, "steps", steps)

    def __len__(self):
        return len(self.steps)

    @property
    def params(self):
        return self.provenance if isinstance(self.provenance, MappingParams) else None


def degeneracy_threshold(delta_max: float) -> float:
    return 1e-6 * max(1.0, delta_max)


def solve_params(delta_min, delta_max, q_min=DEFAULT_QMIN, q_max=DEFAULT_QMAX) -> MappingParams:
    """Solve ``a, b`` so that ``delta_max -> q_min`` and ``delta_min -> q_max``."""
    if not q_max > q_min >= 1:
        raise ArgumentError(f"need Q_max > Q_min >= 1, got Q_min={q_min}, Q_max={q_max}")
    if delta_min < 0 or delta_max < delta_min:
        raise ArgumentError(f"need delta_max >= delta_min >= 0, got {delta_min}, {delta_max}")
    spread = delta_max - delta_min
    if spread < degeneracy_threshold(delta_max):
        raise DegenerateSpreadError(
            f"SI spread {spread:g} below threshold {degeneracy_threshold(delta_max):g}"
        )
    dq = q_max - q_min
    a = q_min * q_max * spread / dq
    b = (q_min * delta_max - q_max * delta_min) / dq
    return MappingParams(a, b, float(q_min), float(q_max))


def map_qs(delta: float, p: MappingParams) -> float:
    denom = delta + p.b
    if not denom > 0:
        raise DomainError(f"delta + b = {delta} + {p.b} is not positive")
    return min(max(p.a / denom, p.q_min), p.q_max)


def uniform_plan(n: int, qs: float = DEFAULT_QMIN, q_min=None, q_max=None) -> QuantizationPlan:
    """Same step everywhere; ``q_min``/``q_max`` only record the configured bounds."""
    qs = float(qs)
    q_min = qs if q_min is None else float(q_min)
    q_max = qs if q_max is None else float(q_max)
    return QuantizationPlan((qs,) * n, "uniform", 1.0, q_min, q_max)


def build_plan(stats, q_min=DEFAULT_QMIN, q_max=DEFAULT_QMAX) -> QuantizationPlan:
    """Map each subband's SI to a step; uniform at ``q_min`` when the spread is degenerate."""
    deltas = [s.std if hasattr(s, "std") else float(s) for s in stats]
    if not deltas:
        raise ArgumentError("build_plan needs at least one subband")
    if len(deltas) == 1:
        return uniform_plan(1, q_min, q_min, q_max)
    try:
        params = solve_params(min(deltas), max(deltas), q_min, q_max)
    except DegenerateSpreadError:
        return uniform_plan(len(deltas), q_min, q_min, q_max)
    for n, delta in enumerate(deltas):
        if not delta + params.b > 0:
            raise DomainError(f"subband {n}: delta + b = {delta + params.b} is not positive")
    steps = [map_qs(delta, params) for delta in deltas]
    return QuantizationPlan(tuple(steps), params, 1.0, float(q_min), float(q_max))


def scale_plan(plan: QuantizationPlan, gamma: float) -> QuantizationPlan:
    if not gamma > 0:
        raise ArgumentError(f"gamma must be positive, got {gamma}")
    steps = tuple(max(1.0, gamma * q) for q in plan.steps)
    return replace(plan, steps=steps, gamma=plan.gamma * gamma)
