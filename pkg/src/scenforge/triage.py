"""Classifying collision cases into scenario types and summarizing campaigns.

Two collisions belong to the same type when they share a road shape, the
number of scripted vehicles, the ordered set of scripted actions that were
active in the run-up window before impact, and the collision geometry.
Geometry is read off the final step: a small lane gap means a longitudinal
hit (a rear end, or a cut-in if the vehicle got there by a recent lane
change and ended up ahead of the ego); a large lane gap at impact is a
sideswipe mid-lane-change.

Campaign metrics mirror the questions a test campaign asks: how many types
turned up, how many simulations were spent reaching the first and the last
of them, and how expensive a single scenario is.  Each metric is aggregated
as mean and population standard deviation over repetitions.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from statistics import mean, pstdev
from typing import Sequence

from .dsl import CONSTRUCTOR
from .errors import EmptyHistoryError, NotCriticalError
from .search import EvaluatedCase


class CollisionGeometry(enum.Enum):
    REAR_END = "rear_end"
    LANE_CHANGE_SIDESWIPE = "lane_change_sideswipe"
    CUT_IN_FRONTAL = "cut_in_frontal"


@dataclass(frozen=True)
class TriageConfig:
    action_window: float = 10.0    # s before impact in which actions count
    lane_tolerance: float = 0.3    # lane units separating frontal from side hits
    cut_in_lookback: float = 5.0   # s of lane-change recency for a cut-in


@dataclass(frozen=True)
class TypeSignature:
    """Hashable scenario-type key."""

    road_shape: str
    npc_count: int
    actions: tuple[tuple[str, str], ...]  # (role, action kind) ordered by start
    geometry: str

    def label(self) -> str:
        acts = "+".join(f"{kind}({role})" for role, kind in self.actions) or "none"
        return f"{self.road_shape}|{self.npc_count}npc|{acts}|{self.geometry}"


def classify(case: EvaluatedCase, config: TriageConfig | None = None) -> TypeSignature:
    """Type signature of one collision case; NotCriticalError when the case
    carries no collision trace."""
    config = config or TriageConfig()
    trace = case.trace
    if trace is None or trace.collision is None:
        raise NotCriticalError(f"case at simulation {case.sim_index} has no collision")
    t_col = trace.collision.time

    tpl = case.tc.scenario.template
    roles: dict = {}
    npc_index = 0
    for stmt in tpl.statements:
        if stmt.kind != CONSTRUCTOR or stmt.subject == tpl.ego:
            continue
        npc_index += 1
        roles[stmt.subject] = f"npc{npc_index}"

    window_lo = t_col - config.action_window
    active = [
        act for act in trace.actions
        if act.start <= t_col and act.end >= window_lo
    ]
    active.sort(key=lambda a: (a.start, a.vehicle.index, a.stmt_index))
    actions = tuple((roles[a.vehicle], a.kind) for a in active)

    last = trace.steps[-1]
    ego_state = next(st for st in last if st.vehicle == trace.ego)
    npc_state = next(st for st in last if st.vehicle == trace.collision.npc)
    dlane = npc_state.lane - ego_state.lane
    if abs(dlane) >= config.lane_tolerance:
        geometry = CollisionGeometry.LANE_CHANGE_SIDESWIPE
    else:
        recently_changed = any(
            a.kind == "lane_change"
            and a.vehicle == trace.collision.npc
            and a.start <= t_col
            and a.end >= t_col - config.cut_in_lookback
            for a in trace.actions
        )
        if recently_changed and npc_state.s > ego_state.s:
            geometry = CollisionGeometry.CUT_IN_FRONTAL
        else:
            geometry = CollisionGeometry.REAR_END

    return TypeSignature(
        road_shape=trace.road.shape.value,
        npc_count=npc_index,
        actions=actions,
        geometry=geometry.value,
    )


# ---------------------------------------------------------------------------
# Campaign metrics


@dataclass(frozen=True)
class CritRecord:
    """One simulation in a repetition's stream: its 1-based index, whether it
    collided, and (then) its type signature."""

    sim_index: int
    critical: bool
    signature: TypeSignature | None = None


@dataclass(frozen=True)
class RepetitionHistory:
    records: tuple[CritRecord, ...]
    wall_seconds: float


@dataclass(frozen=True)
class MetricStat:
    mean: float
    std: float


@dataclass(frozen=True)
class CampaignMetrics:
    repetitions: int
    n_types: MetricStat
    n_critical: MetricStat
    type_expos_rate: MetricStat       # types per critical scenario
    sim_for_first_type: MetricStat | None  # None when no repetition found one
    sim_for_all_types: MetricStat | None
    time_for_one_scenario: MetricStat  # seconds per simulation
    reps_with_criticals: int


def _stat(values: Sequence[float]) -> MetricStat:
    return MetricStat(mean(values), pstdev(values))


def cumulative_types(records: Sequence[CritRecord]) -> list[tuple[int, int]]:
    """(simulation index, distinct types so far) steps for plotting."""
    seen: set[TypeSignature] = set()
    out = []
    for r in records:
        if r.critical and r.signature is not None:
            seen.add(r.signature)
        out.append((r.sim_index, len(seen)))
    return out


def metrics(repetitions: Sequence[RepetitionHistory]) -> CampaignMetrics:
    """Aggregate one method's repetitions.

    Per repetition: distinct types among collisions, collision count, their
    ratio (zero when nothing collided), the simulation index where the first
    type appeared, the index where the last distinct type first appeared,
    and wall time per simulation.  Aggregation is mean plus population
    standard deviation; the two index metrics average only repetitions that
    reached them.
    """
    if not repetitions:
        raise EmptyHistoryError("no repetitions given")

    n_types, n_crit, rates, firsts, alls, times = [], [], [], [], [], []
    for rep in repetitions:
        seen: dict[TypeSignature, int] = {}
        crit_count = 0
        for r in rep.records:
            if not r.critical:
                continue
            crit_count += 1
            if r.signature is not None and r.signature not in seen:
                seen[r.signature] = r.sim_index
        n_types.append(len(seen))
        n_crit.append(crit_count)
        rates.append(len(seen) / crit_count if crit_count else 0.0)
        if seen:
            firsts.append(min(seen.values()))
            alls.append(max(seen.values()))
        sims = len(rep.records)
        times.append(rep.wall_seconds / sims if sims else 0.0)

    return CampaignMetrics(
        repetitions=len(repetitions),
        n_types=_stat(n_types),
        n_critical=_stat(n_crit),
        type_expos_rate=_stat(rates),
        sim_for_first_type=_stat(firsts) if firsts else None,
        sim_for_all_types=_stat(alls) if alls else None,
        time_for_one_scenario=_stat(times),
        reps_with_criticals=sum(1 for c in n_crit if c > 0),
    )
