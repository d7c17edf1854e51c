"""The three search objectives computed per simulated case.

mhd  minimum headway distance (m): the smallest Euclidean distance between
     the ego's front-bumper midpoint and any scripted vehicle's, over the
     whole trace.  Minimized; below the collision threshold it means a
     crash.

acr  acceleration change rate (events/s): how violently the ego's commanded
     acceleration swings.  Stationary points of the acceleration signal are
     extracted (plateaus of consecutive equal samples count once), every
     unordered pair differing by at least eta counts as one event, and the
     count is divided by the trace duration.  Maximized.

div  diversity (unitless): the mean pairwise Euclidean distance between
     parameter points normalized to the unit cube.  Maximized; a singleton
     set has zero diversity.

Dominance is directional: a dominates b iff a.mhd <= b.mhd, a.acr >= b.acr,
a.div >= b.div, with at least one strict.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .dsl import ConcreteTestCase
from .errors import DimensionMismatchError, NoNpcError, TraceTooShortError
from .microsim import SimTrace, headway_distance


@dataclass(frozen=True)
class FitnessVector:
    mhd: float
    acr: float
    div: float

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.mhd, self.acr, self.div)


def dominates(a: FitnessVector, b: FitnessVector) -> bool:
    """Pareto dominance under (minimize mhd, maximize acr, maximize div)."""
    no_worse = a.mhd <= b.mhd and a.acr >= b.acr and a.div >= b.div
    strictly = a.mhd < b.mhd or a.acr > b.acr or a.div > b.div
    return no_worse and strictly


def mhd(trace: SimTrace) -> float:
    """Minimum over time and scripted vehicles of the headway distance."""
    npcs = trace.npc_ids()
    if not npcs:
        raise NoNpcError("trace has no scripted vehicles")
    ego_idx = trace.vehicle_order.index(trace.ego)
    npc_idx = [trace.vehicle_order.index(v) for v in npcs]
    best = float("inf")
    for row in trace.steps:
        ego_state = row[ego_idx]
        for j in npc_idx:
            d = headway_distance(trace.road, ego_state, row[j], trace.vehicle_length)
            if d < best:
                best = d
    return best


def _plateaus(values: Sequence[float]) -> list[float]:
    """Collapse runs of consecutive equal samples into single plateaus."""
    out: list[float] = []
    for x in values:
        if not out or x != out[-1]:
            out.append(x)
    return out


def _stationary_values(values: Sequence[float]) -> list[float]:
    """Stationary points of a sampled signal: every multi-sample plateau
    (zero forward difference) plus every strict interior extremum."""
    merged: list[tuple[float, int]] = []
    for x in values:
        if merged and merged[-1][0] == x:
            merged[-1] = (x, merged[-1][1] + 1)
        else:
            merged.append((x, 1))
    stationary = []
    for i, (value, length) in enumerate(merged):
        if length >= 2:
            stationary.append(value)
            continue
        if 0 < i < len(merged) - 1:
            rising_in = merged[i - 1][0] < value
            rising_out = value < merged[i + 1][0]
            if rising_in != rising_out:
                stationary.append(value)
    return stationary


def acr(trace: SimTrace, eta: float = 1.0) -> float:
    """Acceleration change events per second along the ego signal.

    Events are unordered pairs of distinct stationary points whose values
    differ by at least eta.  Traces shorter than three samples are rejected.
    """
    if eta <= 0:
        raise ValueError(f"eta must be positive, got {eta}")
    accel = [st.a for st in trace.ego_states()]
    if len(accel) < 3:
        raise TraceTooShortError(f"need >= 3 samples, got {len(accel)}")
    stationary = _stationary_values(accel)
    count = 0
    for i in range(len(stationary)):
        for j in range(i + 1, len(stationary)):
            if abs(stationary[i] - stationary[j]) >= eta:
                count += 1
    return count / trace.duration


def acr_or_zero(trace: SimTrace, eta: float = 1.0) -> float:
    """acr, but zero for traces too short to hold a stationary point.

    Collisions truncate traces, sometimes down to one or two samples; such a
    stub has no acceleration-change events rather than an undefined count.
    """
    try:
        return acr(trace, eta)
    except TraceTooShortError:
        return 0.0


def div(points: Iterable[Sequence[float]]) -> float:
    """Mean pairwise Euclidean distance; zero for a single point."""
    pts = list(points)
    if not pts:
        raise DimensionMismatchError("no points given")
    try:
        arr = np.asarray(pts, dtype=float)
    except ValueError:
        raise DimensionMismatchError("points must share a common dimension") from None
    if arr.ndim != 2:
        raise DimensionMismatchError("points must be vectors of a common dimension")
    n = arr.shape[0]
    if n == 1:
        return 0.0
    diff = arr[:, None, :] - arr[None, :, :]
    dist = np.sqrt((diff * diff).sum(axis=2))
    iu = np.triu_indices(n, k=1)
    return float(dist[iu].mean())


def param_point(tc: ConcreteTestCase) -> np.ndarray:
    """The case's assignment normalized to the unit cube by its scenario's
    ranges.  A degenerate range maps to coordinate zero."""
    coords = []
    for value, (lo, hi, _) in zip(tc.assignment, tc.scenario.bounds()):
        span = hi - lo
        coords.append(0.0 if span == 0 else (value - lo) / span)
    return np.asarray(coords, dtype=float)


def evaluate(
    tc: ConcreteTestCase,
    trace: SimTrace,
    population_points: Sequence[np.ndarray],
    eta: float = 1.0,
) -> FitnessVector:
    """Bundle the three objectives for one case.  Diversity is taken over
    the reference points plus this case's own point (union semantics: the
    point is not doubled if already present)."""
    own = param_point(tc)
    pts = [np.asarray(p, dtype=float) for p in population_points]
    for p in pts:
        if p.shape != own.shape:
            raise DimensionMismatchError(
                f"reference point of dimension {p.shape} vs case dimension {own.shape}"
            )
    if not any(np.array_equal(p, own) for p in pts):
        pts.append(own)
    return FitnessVector(mhd=mhd(trace), acr=acr_or_zero(trace, eta), div=div(pts))
