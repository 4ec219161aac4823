"""Controller representations, sampling/enumeration, and the closed-form pre-filter.

Controllers are plain velocity tables: 4 wheel speeds for the single-sensor
model, 8 plus a discrete second-sensor angle for the two-sensor model. The
pre-filter rejects controllers that are slow, spin in place, mirror their
off-branch, or ignore their sensor, before any simulation is spent on them.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterator

import numpy as np

from .errors import ContractError

GRID_STEP = 0.1
GRID_VALUES = tuple(i / 10.0 for i in range(-10, 11))

# discrete second-sensor angles, ascending
ANGLE_CHOICES = tuple(sorted(
    s * a for s in (-1.0, 1.0)
    for a in (2 * math.pi / 3, math.pi / 2, math.pi / 3, math.pi / 4, math.pi / 6)
))

PASS_SCORE = 4.0
PENALTY = -5.0


@dataclass(frozen=True)
class Controller:
    """A homogeneous swarm policy: wheel-speed table plus optional sensor angle."""

    velocities: tuple[float, ...]
    sensor_angle: float | None = None

    def __post_init__(self):
        v = tuple(float(x) for x in self.velocities)
        object.__setattr__(self, "velocities", v)
        if len(v) not in (4, 8):
            raise ContractError(f"controller must have 4 or 8 velocities, got {len(v)}")
        if any(not (-1.0 - 1e-9 <= x <= 1.0 + 1e-9) for x in v):
            raise ContractError("velocities must lie in [-1, 1]")
        if len(v) == 8:
            if self.sensor_angle is None:
                raise ContractError("two-sensor controller requires sensor_angle")
            if min(abs(self.sensor_angle - a) for a in ANGLE_CHOICES) > 1e-9:
                raise ContractError("sensor_angle must be one of the 10 discrete angles")
        elif self.sensor_angle is not None:
            raise ContractError("single-sensor controller must not set sensor_angle")

    @property
    def sensor_count(self) -> int:
        return 1 if len(self.velocities) == 4 else 2

    def as_list(self) -> list[float]:
        out = list(self.velocities)
        if self.sensor_angle is not None:
            out.append(self.sensor_angle)
        return out

    @classmethod
    def from_list(cls, values) -> "Controller":
        values = [float(x) for x in values]
        if len(values) == 9:
            return cls(tuple(values[:8]), sensor_angle=values[8])
        return cls(tuple(values))


def snap_to_grid(x: float) -> float:
    """Nearest 0.1-grid value, clamped to [-1, 1]."""
    return min(10, max(-10, round(x * 10))) / 10.0


def sample_uniform(kind: str, rng: np.random.Generator) -> Controller:
    """I.i.d. uniform velocities; the two-sensor angle is uniform over its 10 values."""
    if kind == "single":
        return Controller(tuple(rng.uniform(-1.0, 1.0, size=4)))
    if kind == "two":
        v = tuple(rng.uniform(-1.0, 1.0, size=8))
        angle = ANGLE_CHOICES[rng.integers(0, len(ANGLE_CHOICES))]
        return Controller(v, sensor_angle=angle)
    raise ContractError(f"unknown capability kind {kind!r}")


def discretized_count(kind: str) -> int:
    if kind == "single":
        return 21 ** 4
    if kind == "two":
        return 21 ** 8 * len(ANGLE_CHOICES)
    raise ContractError(f"unknown capability kind {kind!r}")


def enumerate_discretized(kind: str) -> Iterator[Controller]:
    """Lazy lexicographic stream over the 0.1 grid (and angle set for two-sensor)."""
    if kind == "single":
        for combo in itertools.product(GRID_VALUES, repeat=4):
            yield Controller(combo)
    elif kind == "two":
        for angle in ANGLE_CHOICES:
            for combo in itertools.product(GRID_VALUES, repeat=8):
                yield Controller(combo, sensor_angle=angle)
    else:
        raise ContractError(f"unknown capability kind {kind!r}")


@dataclass(frozen=True)
class Thresholds:
    """Per-metric cutoffs; a metric below its cutoff draws the -5 penalty."""

    psi1: float = 0.4
    psi2: float = 0.65
    psi3: float = 0.5
    psi4: float = 0.2
    psi5: float = 0.3

    def as_tuple(self) -> tuple[float, float, float, float, float]:
        return (self.psi1, self.psi2, self.psi3, self.psi4, self.psi5)


DEFAULT_THRESHOLDS = Thresholds()


@dataclass(frozen=True)
class HeuristicReport:
    metrics: tuple[float, float, float, float, float]
    penalties: tuple[int, ...]
    score: float
    passes: bool


def heuristic_metrics(c: Controller) -> tuple[float, float, float, float, float]:
    """The five filter metrics: peak speed, magnitude, displacement, mirror and
    neglect distances. Two-sensor controllers aggregate per sensing branch."""
    v = c.velocities
    m1 = max(abs(x) for x in v)
    m2 = math.sqrt(sum(x * x for x in v))
    if len(v) == 4:
        a, b, cc, d = v
        m3 = abs(a + b) + abs(cc + d)
        m4 = math.sqrt((cc + a) ** 2 + (d + b) ** 2)
        m5 = math.sqrt((cc - a) ** 2 + (d - b) ** 2)
    else:
        pairs = [(v[0], v[1]), (v[2], v[3]), (v[4], v[5]), (v[6], v[7])]
        m3 = sum(abs(vl + vr) for vl, vr in pairs)
        off_l, off_r = pairs[0]
        m4 = min(math.sqrt((vl + off_l) ** 2 + (vr + off_r) ** 2) for vl, vr in pairs[1:])
        m5 = min(math.sqrt((vl - off_l) ** 2 + (vr - off_r) ** 2) for vl, vr in pairs[1:])
    return (m1, m2, m3, m4, m5)


def _grid_ints(c: Controller) -> list[int] | None:
    """Velocities as exact 10x integers if the controller lies on the 0.1 grid."""
    out = []
    for x in c.velocities:
        scaled = x * 10.0
        nearest = round(scaled)
        if abs(scaled - nearest) > 1e-9:
            return None
        out.append(int(nearest))
    return out


def _exact_penalties(ints: list[int], psi: Thresholds, strict: bool) -> list[bool]:
    """Threshold tests in scaled-integer/rational form; boundaries are exact."""
    f = [Fraction(str(p)) for p in psi.as_tuple()]
    m1 = Fraction(max(abs(i) for i in ints), 10)
    m2_sq = Fraction(sum(i * i for i in ints), 100)
    if len(ints) == 4:
        a, b, cc, d = ints
        m3 = Fraction(abs(a + b) + abs(cc + d), 10)
        psi3 = f[2]
        m4_sq = Fraction((cc + a) ** 2 + (d + b) ** 2, 100)
        m5_sq = Fraction((cc - a) ** 2 + (d - b) ** 2, 100)
    else:
        pairs = [(ints[0], ints[1]), (ints[2], ints[3]), (ints[4], ints[5]), (ints[6], ints[7])]
        m3 = Fraction(sum(abs(vl + vr) for vl, vr in pairs), 10)
        psi3 = 2 * f[2]
        ol, orr = pairs[0]
        m4_sq = Fraction(min((vl + ol) ** 2 + (vr + orr) ** 2 for vl, vr in pairs[1:]), 100)
        m5_sq = Fraction(min((vl - ol) ** 2 + (vr - orr) ** 2 for vl, vr in pairs[1:]), 100)
    lt = (lambda m, p: m < p) if strict else (lambda m, p: m <= p)
    return [lt(m1, f[0]), lt(m2_sq, f[1] ** 2), lt(m3, psi3),
            lt(m4_sq, f[3] ** 2), lt(m5_sq, f[4] ** 2)]


def heuristic_score(c: Controller, psi: Thresholds = DEFAULT_THRESHOLDS,
                    boundary: str = "strict") -> HeuristicReport:
    """Score a controller: each failed metric contributes -5, a passing one its value.

    Controllers on the 0.1 grid are compared in exact rational arithmetic so
    boundary cases resolve identically on every platform; `boundary` selects
    whether a metric exactly at its threshold is penalized ("non_strict") or
    kept ("strict", the default).
    """
    if boundary not in ("strict", "non_strict"):
        raise ContractError("boundary must be 'strict' or 'non_strict'")
    strict = boundary == "strict"
    metrics = heuristic_metrics(c)
    ints = _grid_ints(c)
    if ints is not None:
        fails = _exact_penalties(ints, psi, strict)
    else:
        cuts = list(psi.as_tuple())
        if c.sensor_count == 2:
            cuts[2] *= 2.0
        if strict:
            fails = [m < p for m, p in zip(metrics, cuts)]
        else:
            fails = [m <= p for m, p in zip(metrics, cuts)]
    score = sum(PENALTY if f else m for f, m in zip(fails, metrics))
    penalties = tuple(i for i, f in enumerate(fails) if f)
    return HeuristicReport(metrics=metrics, penalties=penalties, score=score,
                           passes=score >= PASS_SCORE)


def filter_space(kind: str = "single", psi: Thresholds = DEFAULT_THRESHOLDS,
                 boundary: str = "strict") -> tuple[int, int]:
    """(passed, failed) counts over the full discretized single-sensor space.

    Vectorized equivalent of scoring every controller from
    enumerate_discretized("single"); exact integer boundary handling.
    """
    if kind != "single":
        raise ContractError("exhaustive filtering is only feasible for the single-sensor space")
    strict = boundary == "strict"
    if boundary not in ("strict", "non_strict"):
        raise ContractError("boundary must be 'strict' or 'non_strict'")
    g = np.arange(-10, 11)
    a, b, c, d = (x.ravel() for x in np.meshgrid(g, g, g, g, indexing="ij"))
    m1_i = np.maximum.reduce([np.abs(a), np.abs(b), np.abs(c), np.abs(d)])
    m2_sq = a * a + b * b + c * c + d * d
    m3_i = np.abs(a + b) + np.abs(c + d)
    m4_sq = (c + a) ** 2 + (d + b) ** 2
    m5_sq = (c - a) ** 2 + (d - b) ** 2

    f = [Fraction(str(p)) for p in psi.as_tuple()]
    # integer cutoffs: metric < psi  <=>  scaled int < bound (strict) / <= (non-strict)
    def int_fail(vals, bound_num, bound_den):
        # vals/den < num/den comparison done on integers: vals*? -- bounds given as Fraction
        lhs = vals * bound_den
        rhs = bound_num
        return (lhs < rhs) if strict else (lhs <= rhs)

    b1 = Fraction(f[0] * 10)
    b2 = Fraction(f[1] ** 2 * 100)
    b3 = Fraction(f[2] * 10)
    b4 = Fraction(f[3] ** 2 * 100)
    b5 = Fraction(f[4] ** 2 * 100)
    fails = [
        int_fail(m1_i, b1.numerator, b1.denominator),
        int_fail(m2_sq, b2.numerator, b2.denominator),
        int_fail(m3_i, b3.numerator, b3.denominator),
        int_fail(m4_sq, b4.numerator, b4.denominator),
        int_fail(m5_sq, b5.numerator, b5.denominator),
    ]
    metrics = [m1_i / 10.0, np.sqrt(m2_sq) / 10.0, m3_i / 10.0,
               np.sqrt(m4_sq) / 10.0, np.sqrt(m5_sq) / 10.0]
    score = sum(np.where(fl, PENALTY, m) for fl, m in zip(fails, metrics))
    passed = int(np.sum(score >= PASS_SCORE))
    return passed, score.size - passed
