"""Engine protocols as symmetric sequences of constant-generator segments.

A :class:`Schedule` covers one symmetric unit cell ``[-tau/2, tau/2]``,
listed from left to right.  Each :class:`Segment` multiplies the base
generators (``cold``, ``hot``, ``drive`` = (1/2) H_w superoperator, the
two half-drives ``drive1``/``drive2`` and optionally ``dephasing``) by
dimensionless weights.  Every engine built here spends the same area
``int w dt = tau`` on each generator it uses.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from . import liouville as lv
from .errors import ScheduleError
from .model import DRIVES, THERMAL, GeneratorSet

SCHEDULE_TOL = 1e-12

ENGINE_TYPES = ("continuous", "two_stroke", "four_stroke", "two_field")


class ScheduleWarning(UserWarning):
    pass


@dataclass(frozen=True)
class Segment:
    duration: float
    weights: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        if not (self.duration >= 0 and math.isfinite(self.duration)):
            raise ScheduleError(f"segment duration must be finite and >= 0, got {self.duration}")
        clean = {k: float(v) for k, v in self.weights.items() if v != 0}
        if any(v < 0 or not math.isfinite(v) for v in clean.values()):
            raise ScheduleError(f"segment weights must be finite and >= 0: {clean}")
        object.__setattr__(self, "weights", dict(sorted(clean.items())))

    def w(self, name: str) -> float:
        return self.weights.get(name, 0.0)

    @property
    def agents(self) -> tuple[str, ...]:
        return tuple(self.weights)

    @property
    def thermal(self) -> bool:
        return any(k in self.weights for k in THERMAL)

    @property
    def driven(self) -> bool:
        return any(k in self.weights for k in DRIVES)

    def same_coupling(self, other: Segment) -> bool:
        return self.weights == other.weights

    def split(self, n: int) -> list[Segment]:
        return [Segment(self.duration / n, self.weights) for _ in range(n)]

    def with_weights(self, **extra) -> Segment:
        return Segment(self.duration, {**self.weights, **extra})


@dataclass(frozen=True)
class Schedule:
    segments: tuple[Segment, ...]
    label: str = "custom"

    def __post_init__(self):
        object.__setattr__(self, "segments", tuple(self.segments))

    def __len__(self):
        return len(self.segments)

    def __iter__(self):
        return iter(self.segments)

    @property
    def tau(self) -> float:
        return math.fsum(s.duration for s in self.segments)

    def areas(self) -> dict[str, float]:
        out: dict[str, float] = {}
        for seg in self.segments:
            for k, w in seg.weights.items():
                out[k] = out.get(k, 0.0) + w * seg.duration
        return out

    @property
    def duty_cycle(self) -> float:
        """Fraction of the cycle during which any drive is on."""
        tau = self.tau
        if tau == 0:
            return 0.0
        return math.fsum(s.duration for s in self.segments if s.driven) / tau

    def reversed(self) -> Schedule:
        return Schedule(self.segments[::-1], self.label)

    def merged(self) -> Schedule:
        """Fuse neighbouring segments with identical couplings; drop empty ones."""
        out: list[Segment] = []
        for seg in self.segments:
            if seg.duration == 0:
                continue
            if out and out[-1].same_coupling(seg):
                out[-1] = Segment(out[-1].duration + seg.duration, seg.weights)
            else:
                out.append(seg)
        return Schedule(tuple(out), self.label)

    def refined(self, n: int) -> Schedule:
        """Split every segment into ``n`` equal bins."""
        if n < 1:
            raise ValueError("n must be >= 1")
        return Schedule(tuple(b for s in self.segments for b in s.split(n)), self.label)

    def is_symmetric(self, tol: float = SCHEDULE_TOL) -> bool:
        return _symmetry_defect(self) <= tol

    def validate(self, tol: float = SCHEDULE_TOL) -> None:
        """Raise :class:`ScheduleError` unless reflection-symmetric with equal areas."""
        if _symmetry_defect(self) > tol:
            raise ScheduleError(f"schedule {self.label!r} is not reflection symmetric")
        tau = self.tau
        for k, a in self.areas().items():
            if abs(a - tau) > tol * max(tau, 1.0):
                raise ScheduleError(
                    f"schedule {self.label!r}: area of {k!r} is {a!r}, expected {tau!r}")

    def with_dephasing(self) -> Schedule:
        """Run pure dephasing alongside every thermal segment, total area ``tau``."""
        thermal_time = math.fsum(s.duration for s in self.segments if s.thermal)
        if thermal_time == 0:
            raise ScheduleError("schedule has no thermal segment to dephase")
        w = self.tau / thermal_time
        segs = tuple(s.with_weights(dephasing=w) if s.thermal else s for s in self.segments)
        return Schedule(segs, self.label)


def _symmetry_defect(schedule: Schedule) -> float:
    """Largest mismatch between the time-weight profile and its mirror image."""
    m = schedule.merged()
    segs, rev = m.segments, m.segments[::-1]
    if len(segs) != len(rev):
        return math.inf
    scale = max(m.tau, 1e-300)
    worst = 0.0
    for a, b in zip(segs, rev):
        if not a.same_coupling(b):
            keys = set(a.weights) | set(b.weights)
            worst = max(worst, max(abs(a.w(k) - b.w(k)) for k in keys))
            if set(a.weights) != set(b.weights):
                return math.inf
        worst = max(worst, abs(a.duration - b.duration) / scale)
    return worst


def _check_tau(tau_cyc: float, omega: float | None) -> None:
    if not (tau_cyc > 0 and math.isfinite(tau_cyc)):
        raise ScheduleError(f"cycle time must be positive and finite, got {tau_cyc}")
    if omega:
        m = tau_cyc / (6 * 2 * math.pi / abs(omega))
        if abs(m - round(m)) > 1e-9 * max(1.0, m) or round(m) < 1:
            warnings.warn(
                f"tau_cyc = {tau_cyc:.6g} is not 6 m drive periods (m = {m:.6g})",
                ScheduleWarning, stacklevel=3)


def continuous_schedule(tau_cyc: float, omega: float | None = None) -> Schedule:
    _check_tau(tau_cyc, omega)
    return Schedule((Segment(tau_cyc, {"cold": 1, "hot": 1, "drive": 1}),), "continuous")


def four_stroke_schedule(tau_cyc: float, omega: float | None = None) -> Schedule:
    """Cold split across the cell boundary; drive strokes flank the hot stroke."""
    _check_tau(tau_cyc, omega)
    t = tau_cyc
    return Schedule((
        Segment(t / 6, {"cold": 3}),
        Segment(t / 6, {"drive": 3}),
        Segment(t / 3, {"hot": 3}),
        Segment(t / 6, {"drive": 3}),
        Segment(t / 6, {"cold": 3}),
    ), "four_stroke")


def two_stroke_schedule(tau_cyc: float, omega: float | None = None) -> Schedule:
    _check_tau(tau_cyc, omega)
    t = tau_cyc
    return Schedule((
        Segment(t / 3, {"cold": 1.5, "hot": 1.5}),
        Segment(t / 3, {"drive": 3}),
        Segment(t / 3, {"cold": 1.5, "hot": 1.5}),
    ), "two_stroke")


def two_field_four_stroke_schedule(tau_cyc: float, omega: float | None = None) -> Schedule:
    """Two-stroke layout whose work window is split between the two half-drives.

    The ``drive1`` stroke is split around a central ``drive2`` stroke so the
    cell stays reflection symmetric; duty cycle 1/3 as for the other engines.
    """
    _check_tau(tau_cyc, omega)
    t = tau_cyc
    return Schedule((
        Segment(t / 3, {"cold": 1.5, "hot": 1.5}),
        Segment(t / 12, {"drive1": 6}),
        Segment(t / 6, {"drive2": 6}),
        Segment(t / 12, {"drive1": 6}),
        Segment(t / 3, {"cold": 1.5, "hot": 1.5}),
    ), "two_field")


_BUILDERS = {
    "continuous": continuous_schedule,
    "two_stroke": two_stroke_schedule,
    "four_stroke": four_stroke_schedule,
    "two_field": two_field_four_stroke_schedule,
}


def build_schedule(engine_type: str, tau_cyc: float, omega: float | None = None) -> Schedule:
    try:
        builder = _BUILDERS[engine_type]
    except KeyError:
        raise ScheduleError(
            f"unknown engine type {engine_type!r}; expected one of {ENGINE_TYPES}") from None
    return builder(tau_cyc, omega)


def positive_half(schedule: Schedule) -> list[Segment]:
    """Bins of ``[0, tau/2]`` in time order (a straddling segment is halved)."""
    segs = schedule.segments
    k = len(segs)
    if k % 2:
        mid = segs[k // 2]
        return [Segment(mid.duration / 2, mid.weights), *segs[k // 2 + 1:]]
    return list(segs[k // 2:])


def symmetric_rearrange(schedule: Schedule, permutation) -> Schedule:
    """Permute the positive-half bins and mirror them onto the negative half.

    ``permutation[k]`` is the index of the old bin placed at position ``k``.
    """
    schedule.validate()
    half = positive_half(schedule)
    perm = list(permutation)
    if sorted(perm) != list(range(len(half))):
        raise ScheduleError(
            f"permutation {perm} is not a permutation of the {len(half)} positive-half bins")
    new_half = [half[p] for p in perm]
    out = Schedule(tuple(new_half[::-1]) + tuple(new_half), schedule.label).merged()
    ref = schedule.areas()
    new = out.areas()
    tau = schedule.tau
    if set(ref) != set(new) or any(abs(ref[k] - new[k]) > SCHEDULE_TOL * max(tau, 1.0) for k in ref):
        raise ScheduleError("rearrangement changed the generator areas")
    out.validate()
    return out


def random_rearrangement(schedule: Schedule, rng: np.random.Generator, refine: int = 1) -> Schedule:
    base = schedule.refined(refine) if refine > 1 else schedule
    n = len(positive_half(base))
    return symmetric_rearrange(base, rng.permutation(n))


def action(schedule: Schedule, generators: GeneratorSet) -> float:
    """``s = sum(duration * sum_x w_x ||G_x||)`` over the segments."""
    return math.fsum(
        seg.duration * math.fsum(w * generators.norm(k) for k, w in seg.weights.items())
        for seg in schedule.segments)


def segment_generator(segment: Segment, generators: GeneratorSet) -> np.ndarray:
    G = generators.combine(segment.weights)
    if generators.complete_dephasing and segment.thermal:
        P = lv.population_projector(generators.dim)
        G = P @ G @ P
    return G


def segment_propagator(segment: Segment, generators: GeneratorSet) -> np.ndarray:
    K = lv.propagate(segment_generator(segment, generators), segment.duration)
    if generators.complete_dephasing and segment.thermal:
        P = lv.population_projector(generators.dim)
        K = P @ K @ P
    return K


def cycle_propagator(schedule: Schedule, generators: GeneratorSet) -> np.ndarray:
    """Ordered product of segment propagators, first segment acting first."""
    n2 = generators.dim ** 2
    K = np.eye(n2, dtype=complex)
    for seg in schedule.segments:
        K = segment_propagator(seg, generators) @ K
    return K
