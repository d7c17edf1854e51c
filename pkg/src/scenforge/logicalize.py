"""Turning a converted template into a searchable logical scenario.

Two concerns live here.  First, range filling: a converted template arrives
with ranges the language model proposed (or none at all), and every slot must
end up with a sane, searchable range.  A proposal is adopted only when it is
well formed and sits inside the default range for that slot; same-lane offset
proposals that would let two vehicles spawn on top of each other are thrown
out as a pair.  Everything else falls back to the defaults table.

Second, ego assignment: the vehicle with the fewest active (actor) roles in
the interaction script becomes the ego, its scripted actions are removed, and
its constructor stays searchable so the search still places it.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

from .dsl import (
    CONSTRUCTOR,
    LogicalScenario,
    ParamSlot,
    Statement,
    TestCaseTemplate,
    strip_ego_actions,
)
from .errors import MissingDefaultError, UnknownEgoError
from .ips import IPS, RoadDescriptor, VehicleId

# Fallback ranges per (statement kind, parameter).  Lane parameters are
# road-derived (1..lane_count) and have no static entry.
BUILTIN_RANGES: dict[str, dict[str, tuple[float, float]]] = {
    "npc": {"offset": (0.0, 80.0), "speed": (0.0, 20.0)},
    "accelerate": {"speed": (0.0, 25.0), "trigger": (1, 4)},
    "decelerate": {"speed": (0.0, 25.0), "trigger": (1, 4)},
    "lane_change": {"speed": (0.0, 25.0), "trigger": (1, 4)},
}

ProposedRanges = dict[tuple[int, str], tuple[float, float]]


@dataclass(frozen=True)
class DefaultRangeTable:
    """Default parameter ranges, loadable from a JSON file shaped like
    BUILTIN_RANGES: {"npc": {"offset": [lo, hi], ...}, ...}."""

    entries: tuple[tuple[str, tuple[tuple[str, tuple[float, float]], ...]], ...]

    @classmethod
    def builtin(cls) -> "DefaultRangeTable":
        return cls.from_mapping(BUILTIN_RANGES)

    @classmethod
    def from_mapping(cls, mapping) -> "DefaultRangeTable":
        entries = []
        for kind, params in mapping.items():
            row = []
            for name, bounds in params.items():
                lo, hi = float(bounds[0]), float(bounds[1])
                if lo > hi:
                    raise ValueError(f"{kind}.{name}: lo {lo} > hi {hi}")
                row.append((name, (lo, hi)))
            entries.append((kind, tuple(row)))
        return cls(tuple(entries))

    @classmethod
    def load(cls, path) -> "DefaultRangeTable":
        return cls.from_mapping(json.loads(Path(path).read_text()))

    def range_for(self, kind: str, name: str, road: RoadDescriptor) -> tuple[float, float]:
        if name == "lane":
            return (1, road.lane_count)
        for k, params in self.entries:
            if k == kind:
                for n, bounds in params:
                    if n == name:
                        return bounds
        raise MissingDefaultError(f"no default range for {kind}.{name}")


@dataclass(frozen=True)
class EgoAssignment:
    ego: VehicleId
    active_counts: tuple[tuple[VehicleId, int], ...]


def select_ego(ips: IPS) -> EgoAssignment:
    """Pick the vehicle with the fewest actor roles; ties go to the lowest
    index.  Reactor roles do not count as active."""
    counts = {ia.vehicle: 0 for ia in ips.initials}
    for p in ips.patterns:
        if p.actor in counts:
            counts[p.actor] += 1
    ranked = sorted(counts.items(), key=lambda kv: (kv[1], kv[0].index))
    if not ranked:
        raise UnknownEgoError("script has no vehicles")
    return EgoAssignment(ranked[0][0], tuple(sorted(counts.items(), key=lambda kv: kv[0].index)))


def _interval_gap(a: tuple[float, float], b: tuple[float, float]) -> float:
    """Smallest |x - y| achievable with x in a and y in b."""
    return max(0.0, max(a[0], b[0]) - min(a[1], b[1]))


def _intersects(a: tuple[float, float], b: tuple[float, float]) -> bool:
    return max(a[0], b[0]) <= min(a[1], b[1])


def fill_ranges(
    tpl: TestCaseTemplate,
    proposed: ProposedRanges,
    defaults: DefaultRangeTable | None = None,
    road: RoadDescriptor | None = None,
    vehicle_length: float = 4.5,
) -> LogicalScenario:
    """Decide a range for every slot of a template.

    A proposal keyed by (statement index, param name) is adopted iff it is a
    subset of the default range for that slot (integer slots also need
    integral endpoints).  After that, constructor offset proposals are
    checked pairwise: if two vehicles whose candidate lane ranges intersect
    proposed offset ranges that admit a spawn closer than one vehicle length,
    both proposals are dropped in favor of the defaults.  The result has
    every slot in range state.
    """
    if defaults is None:
        defaults = DefaultRangeTable.builtin()
    if road is None:
        road = tpl.road

    chosen: dict[tuple[int, str], tuple[float, float]] = {}
    adopted: set[tuple[int, str]] = set()
    for i, s in enumerate(tpl.statements):
        for p in s.params:
            default = defaults.range_for(s.kind, p.name, road)
            candidate = proposed.get((i, p.name))
            use = default
            if candidate is not None:
                lo, hi = float(candidate[0]), float(candidate[1])
                well_formed = lo <= hi and (
                    not p.integer or (lo == int(lo) and hi == int(hi))
                )
                if well_formed and default[0] <= lo and hi <= default[1]:
                    use = (lo, hi)
                    adopted.add((i, p.name))
            chosen[(i, p.name)] = use

    # Same-lane spawn-overlap veto over proposed offsets, pairwise.
    ctor_idx = [i for i, s in enumerate(tpl.statements) if s.kind == CONSTRUCTOR]
    rejected: set[tuple[int, str]] = set()
    for a in range(len(ctor_idx)):
        for b in range(a + 1, len(ctor_idx)):
            ia, ib = ctor_idx[a], ctor_idx[b]
            if (ia, "offset") not in adopted or (ib, "offset") not in adopted:
                continue
            if not _intersects(chosen[(ia, "lane")], chosen[(ib, "lane")]):
                continue
            if _interval_gap(chosen[(ia, "offset")], chosen[(ib, "offset")]) < vehicle_length:
                rejected.add((ia, "offset"))
                rejected.add((ib, "offset"))
    for i in ctor_idx:
        if (i, "offset") in rejected:
            chosen[(i, "offset")] = defaults.range_for(CONSTRUCTOR, "offset", road)

    statements = []
    for i, s in enumerate(tpl.statements):
        params = tuple(
            ParamSlot(p.name, p.integer, lo=chosen[(i, p.name)][0], hi=chosen[(i, p.name)][1])
            for p in s.params
        )
        statements.append(Statement(s.kind, s.subject, params))
    return LogicalScenario(TestCaseTemplate(road, tuple(statements), tpl.ego))


def substitute_ego(scenario: LogicalScenario, ego: VehicleId) -> LogicalScenario:
    """Remove the ego's scripted actions and mark its constructor as ego."""
    tpl = scenario.template
    if ego not in tpl.vehicles():
        raise UnknownEgoError(f"{ego} has no constructor in the scenario")
    return LogicalScenario(strip_ego_actions(tpl, ego))
