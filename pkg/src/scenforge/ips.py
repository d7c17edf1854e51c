"""Interaction scripts: the mid-level scenario description between a prose
accident report and an executable test case.

A script is plain text, one statement per line:

    road: straight, lanes: 3
    V1: traveling in lane 2, approaching slower traffic
    V2: traveling in lane 1 at a steady speed
    (V1, V2): V1 swerves right and collides with V2

The header names the road shape and lane count.  Each vehicle gets exactly
one initial-action line, then the pairwise interaction patterns follow in
chronological order.  Inside a pattern the maneuver verbs are drawn from a
closed set (brake, decelerate, accelerate, swerve left, swerve right); each
verb is attributed to the nearest vehicle mentioned before it, the first
vehicle of the pair being the actor and the second the reactor.

Lines starting with ``#`` and blank lines are ignored.  Statement order is
significant and survives a parse/serialize round trip byte for byte.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from enum import Enum

from .errors import IpsParseError


class RoadShape(Enum):
    STRAIGHT = "straight"
    CURVED = "curved"


class ActionVerb(Enum):
    """Closed set of maneuver verbs allowed in interaction patterns."""

    BRAKE = "brake"
    DECELERATE = "decelerate"
    ACCELERATE = "accelerate"
    SWERVE_LEFT = "swerve left"
    SWERVE_RIGHT = "swerve right"


@dataclass(frozen=True, order=True)
class VehicleId:
    """A vehicle label Vk, 1-based."""

    index: int

    def __post_init__(self):
        if self.index < 1:
            raise ValueError(f"vehicle index must be >= 1, got {self.index}")

    def __str__(self) -> str:
        return f"V{self.index}"

    @classmethod
    def parse(cls, token: str) -> "VehicleId":
        m = re.fullmatch(r"V(\d+)", token.strip())
        if m is None:
            raise ValueError(f"not a vehicle label: {token!r}")
        return cls(int(m.group(1)))


@dataclass(frozen=True)
class RoadDescriptor:
    shape: RoadShape
    lane_count: int

    def __post_init__(self):
        if self.lane_count < 1:
            raise ValueError(f"lane count must be >= 1, got {self.lane_count}")


@dataclass(frozen=True)
class InitialAction:
    vehicle: VehicleId
    description: str


@dataclass(frozen=True)
class InteractivePattern:
    """One actor/reactor interaction.  The description is the full text after
    the colon; actor_verb and reactor_verb are derived from it at parse time
    (reactor_verb may be absent when the reactor only gets hit)."""

    actor: VehicleId
    reactor: VehicleId
    description: str
    actor_verb: ActionVerb
    reactor_verb: ActionVerb | None = None


@dataclass(frozen=True)
class IPS:
    """An interaction script: road, initial actions, patterns in order."""

    road: RoadDescriptor
    initials: tuple[InitialAction, ...]
    patterns: tuple[InteractivePattern, ...]

    def initial_vehicles(self) -> tuple[VehicleId, ...]:
        return tuple(ia.vehicle for ia in self.initials)


@dataclass(frozen=True)
class Violation:
    rule: str
    location: str
    message: str


@dataclass(frozen=True)
class LegalityReport:
    ok: bool
    violations: tuple[Violation, ...]

    def rules(self) -> set[str]:
        return {v.rule for v in self.violations}

    def describe(self) -> str:
        if self.ok:
            return "legal"
        return "\n".join(f"{v.rule} at {v.location}: {v.message}" for v in self.violations)


# Verb keyword detection.  Two-word swerve forms are matched before the
# single-word verbs so "swerves left" never half-matches.
_VERB_PATTERNS: tuple[tuple[re.Pattern, ActionVerb], ...] = (
    (re.compile(r"\bswerv(?:e|es|ed|ing)\s+left\b", re.IGNORECASE), ActionVerb.SWERVE_LEFT),
    (re.compile(r"\bswerv(?:e|es|ed|ing)\s+right\b", re.IGNORECASE), ActionVerb.SWERVE_RIGHT),
    (re.compile(r"\bbrak(?:e|es|ed|ing)\b", re.IGNORECASE), ActionVerb.BRAKE),
    (re.compile(r"\bdecelerat(?:e|es|ed|ing)\b", re.IGNORECASE), ActionVerb.DECELERATE),
    (re.compile(r"\baccelerat(?:e|es|ed|ing)\b", re.IGNORECASE), ActionVerb.ACCELERATE),
)

_VEHICLE_TOKEN = re.compile(r"\bV(\d+)\b")
_HEADER_LINE = re.compile(r"^road\s*:\s*(straight|curved)\s*,\s*lanes\s*:\s*(\d+)\s*$", re.IGNORECASE)
_INITIAL_LINE = re.compile(r"^(V\d+)\s*:\s*(.*)$")
_PATTERN_LINE = re.compile(r"^\(([^)]*)\)\s*:\s*(.*)$")


def find_verbs(text: str) -> list[tuple[int, ActionVerb]]:
    """All closed-set verb mentions as (position, verb), in text order."""
    hits = []
    for pattern, verb in _VERB_PATTERNS:
        for m in pattern.finditer(text):
            hits.append((m.start(), verb))
    hits.sort(key=lambda h: h[0])
    return hits


def find_vehicles(text: str) -> list[tuple[int, VehicleId]]:
    return [(m.start(), VehicleId(int(m.group(1)))) for m in _VEHICLE_TOKEN.finditer(text)]


def attribute_verbs(
    description: str, actor: VehicleId, reactor: VehicleId
) -> tuple[ActionVerb | None, ActionVerb | None]:
    """Attach each verb mention to the nearest preceding vehicle mention.

    A verb with no vehicle mention before it belongs to the actor.  Returns
    the first verb attributed to the actor and to the reactor respectively.
    """
    mentions = find_vehicles(description)
    actor_verb = None
    reactor_verb = None
    for pos, verb in find_verbs(description):
        owner = actor
        for mpos, vid in mentions:
            if mpos < pos:
                owner = vid
            else:
                break
        if owner == actor and actor_verb is None:
            actor_verb = verb
        elif owner == reactor and reactor_verb is None:
            reactor_verb = verb
    return actor_verb, reactor_verb


def parse_ips(text: str) -> IPS:
    """Parse interaction-script text.

    Raises IpsParseError (with line/column) on grammar violations: missing or
    malformed header, a pattern naming anything but two vehicles, duplicate
    initial-action lines, initials after patterns, a pattern with no
    recognizable actor verb, or an unrecognizable line.
    """
    road = None
    initials: list[InitialAction] = []
    seen: set[VehicleId] = set()
    patterns: list[InteractivePattern] = []

    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue

        if road is None:
            m = _HEADER_LINE.match(line)
            if m is None:
                raise IpsParseError("expected road header 'road: <shape>, lanes: <n>'", lineno, 1)
            road = RoadDescriptor(RoadShape(m.group(1).lower()), int(m.group(2)))
            continue

        m = _PATTERN_LINE.match(line)
        if m is not None:
            tokens = [t.strip() for t in m.group(1).split(",")]
            try:
                vehicles = [VehicleId.parse(t) for t in tokens]
            except ValueError:
                raise IpsParseError(f"malformed vehicle pair {m.group(1)!r}", lineno, 1) from None
            if len(vehicles) != 2:
                raise IpsParseError(
                    f"interaction pattern must name exactly two vehicles, got {len(vehicles)}",
                    lineno, 1,
                )
            actor, reactor = vehicles
            description = m.group(2).strip()
            if not description:
                raise IpsParseError("empty pattern description", lineno, m.start(2) + 1)
            actor_verb, reactor_verb = attribute_verbs(description, actor, reactor)
            if actor_verb is None:
                raise IpsParseError(
                    f"no action verb from the allowed set found for actor {actor}",
                    lineno, m.start(2) + 1,
                )
            patterns.append(InteractivePattern(actor, reactor, description, actor_verb, reactor_verb))
            continue

        m = _INITIAL_LINE.match(line)
        if m is not None:
            if patterns:
                raise IpsParseError("initial action after interaction patterns", lineno, 1)
            vehicle = VehicleId.parse(m.group(1))
            if vehicle in seen:
                raise IpsParseError(f"duplicate initial action for {vehicle}", lineno, 1)
            description = m.group(2).strip()
            if not description:
                raise IpsParseError(f"empty initial action for {vehicle}", lineno, m.start(2) + 1)
            seen.add(vehicle)
            initials.append(InitialAction(vehicle, description))
            continue

        raise IpsParseError(f"unrecognizable statement: {line!r}", lineno, 1)

    if road is None:
        raise IpsParseError("empty script: missing road header", 1, 1)
    return IPS(road, tuple(initials), tuple(patterns))


def serialize_ips(ips: IPS) -> str:
    """Canonical text form; parse_ips(serialize_ips(x)) == x for legal x."""
    lines = [f"road: {ips.road.shape.value}, lanes: {ips.road.lane_count}"]
    for ia in ips.initials:
        lines.append(f"{ia.vehicle}: {ia.description}")
    for p in ips.patterns:
        lines.append(f"({p.actor}, {p.reactor}): {p.description}")
    return "\n".join(lines) + "\n"


def check_legality(ips: IPS) -> LegalityReport:
    """Apply the five legality rules and report every violation found.

    R1  a pattern involves exactly its two named vehicles (its text must not
        mention anyone else)
    R2  maneuver verbs come from the closed ActionVerb set
    R3  every vehicle named in a pattern has an initial action
    R4  a pattern's actor and reactor are distinct
    R5  the script has at least one initial action and one pattern
    """
    violations: list[Violation] = []
    if not ips.initials:
        violations.append(Violation("R5", "initials", "no initial actions"))
    if not ips.patterns:
        violations.append(Violation("R5", "patterns", "no interaction patterns"))

    declared = set(ips.initial_vehicles())
    for i, p in enumerate(ips.patterns, 1):
        loc = f"pattern {i}"
        participants = {p.actor, p.reactor}
        extras = sorted({v for _, v in find_vehicles(p.description)} - participants)
        if extras:
            names = ", ".join(str(v) for v in extras)
            violations.append(Violation("R1", loc, f"mentions vehicles besides the participants: {names}"))
        if not isinstance(p.actor_verb, ActionVerb):
            violations.append(Violation("R2", loc, f"actor verb {p.actor_verb!r} is not in the allowed set"))
        if p.reactor_verb is not None and not isinstance(p.reactor_verb, ActionVerb):
            violations.append(Violation("R2", loc, f"reactor verb {p.reactor_verb!r} is not in the allowed set"))
        for v in (p.actor, p.reactor):
            if v not in declared:
                violations.append(Violation("R3", loc, f"{v} has no initial action"))
        if p.actor == p.reactor:
            violations.append(Violation("R4", loc, f"actor and reactor are both {p.actor}"))

    return LegalityReport(not violations, tuple(violations))
