"""The sequential test-case language that executable scenarios are written in.

A test case is a road header, an optional ego marker, then one statement per
line: first an ``npc(...)`` constructor for every vehicle, then the timed
action statements.

    road: straight, lanes: 3
    ego: V2
    npc(V1, lane=1, offset=[10.0,40.0], speed=[8.0,18.0])
    npc(V2, lane=2, offset=[0.0,10.0], speed=[10.0,18.0])
    lane_change(V1, lane=2, speed=[4.0,12.0], trigger=[1,2])
    decelerate(V1, speed=[0.0,8.0], trigger=[1,3])

Every parameter slot is in one of three states: unbound (``?``), a range
(``[lo,hi]``), or a single value.  A template may mix states; a logical
scenario has every slot ranged; a concrete test case binds every slot to a
value inside its range.  ``trigger`` is a per-vehicle ordinal: the k-th slot
of a vehicle's schedule, each slot lasting one action duration.

Lane ids and triggers are integers, offsets are meters, speeds are m/s.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, replace

from .errors import ArityError, DslParseError, OutOfRangeError
from .ips import RoadDescriptor, RoadShape, VehicleId

CONSTRUCTOR = "npc"

# Parameter names per statement kind, in canonical order, with an
# is-integer flag.  This is the single arity authority for the language.
PARAM_SPECS: dict[str, tuple[tuple[str, bool], ...]] = {
    "npc": (("lane", True), ("offset", False), ("speed", False)),
    "accelerate": (("speed", False), ("trigger", True)),
    "decelerate": (("speed", False), ("trigger", True)),
    "lane_change": (("lane", True), ("speed", False), ("trigger", True)),
}


@dataclass(frozen=True)
class ParamSlot:
    """One parameter slot.  Exactly one state: unbound, range, or value."""

    name: str
    integer: bool
    lo: float | None = None
    hi: float | None = None
    value: float | None = None

    def __post_init__(self):
        if self.value is not None and (self.lo is not None or self.hi is not None):
            raise ValueError(f"slot {self.name}: value and range are exclusive")
        if (self.lo is None) != (self.hi is None):
            raise ValueError(f"slot {self.name}: half-open range")
        if self.lo is not None and self.lo > self.hi:
            raise ValueError(f"slot {self.name}: lo {self.lo} > hi {self.hi}")
        if self.integer:
            for x in (self.lo, self.hi, self.value):
                if x is not None and float(x) != int(x):
                    raise ValueError(f"slot {self.name}: expected integer, got {x}")

    @property
    def state(self) -> str:
        if self.value is not None:
            return "value"
        if self.lo is not None:
            return "range"
        return "unbound"


@dataclass(frozen=True)
class Statement:
    kind: str
    subject: VehicleId
    params: tuple[ParamSlot, ...]

    def __post_init__(self):
        if self.kind not in PARAM_SPECS:
            raise ValueError(f"unknown statement kind {self.kind!r}")
        expected = tuple(name for name, _ in PARAM_SPECS[self.kind])
        got = tuple(p.name for p in self.params)
        if got != expected:
            raise ValueError(f"{self.kind} expects params {expected}, got {got}")

    def slot(self, name: str) -> ParamSlot:
        for p in self.params:
            if p.name == name:
                return p
        raise KeyError(name)


@dataclass(frozen=True)
class SlotRef:
    """Flat view of one slot: which statement it sits in plus the slot."""

    stmt_index: int
    kind: str
    subject: VehicleId
    slot: ParamSlot


@dataclass(frozen=True)
class TestCaseTemplate:
    road: RoadDescriptor
    statements: tuple[Statement, ...]
    ego: VehicleId | None = None

    def constructors(self) -> tuple[Statement, ...]:
        return tuple(s for s in self.statements if s.kind == CONSTRUCTOR)

    def actions(self) -> tuple[Statement, ...]:
        return tuple(s for s in self.statements if s.kind != CONSTRUCTOR)

    def vehicles(self) -> tuple[VehicleId, ...]:
        return tuple(s.subject for s in self.constructors())

    def slot_refs(self) -> tuple[SlotRef, ...]:
        refs = []
        for i, s in enumerate(self.statements):
            for p in s.params:
                refs.append(SlotRef(i, s.kind, s.subject, p))
        return tuple(refs)

    @property
    def statement_count(self) -> int:
        return len(self.statements)


@dataclass(frozen=True)
class LogicalScenario:
    """A template with every slot in range state: a searchable space."""

    template: TestCaseTemplate

    def __post_init__(self):
        for ref in self.template.slot_refs():
            if ref.slot.state != "range":
                raise ValueError(
                    f"slot {ref.slot.name} of statement {ref.stmt_index + 1} is "
                    f"{ref.slot.state}, expected a range"
                )

    def slot_refs(self) -> tuple[SlotRef, ...]:
        return self.template.slot_refs()

    def bounds(self) -> tuple[tuple[float, float, bool], ...]:
        return tuple((r.slot.lo, r.slot.hi, r.slot.integer) for r in self.slot_refs())

    @property
    def dimension(self) -> int:
        return len(self.template.slot_refs())


@dataclass(frozen=True)
class ConcreteTestCase:
    """A full assignment over a logical scenario's slots, in slot order."""

    scenario: LogicalScenario
    assignment: tuple[float, ...]
    seed_id: int = 0

    def __post_init__(self):
        if len(self.assignment) != self.scenario.dimension:
            raise ValueError(
                f"assignment has {len(self.assignment)} values, "
                f"scenario has {self.scenario.dimension} slots"
            )

    def value(self, stmt_index: int, name: str) -> float:
        for i, ref in enumerate(self.scenario.slot_refs()):
            if ref.stmt_index == stmt_index and ref.slot.name == name:
                return self.assignment[i]
        raise KeyError((stmt_index, name))

    def bound_template(self) -> TestCaseTemplate:
        """The template with every slot replaced by its assigned value."""
        tpl = self.scenario.template
        flat = iter(self.assignment)
        statements = []
        for s in tpl.statements:
            params = tuple(
                ParamSlot(p.name, p.integer, value=next(flat)) for p in s.params
            )
            statements.append(Statement(s.kind, s.subject, params))
        return TestCaseTemplate(tpl.road, tuple(statements), tpl.ego)

    def to_json_dict(self) -> dict:
        tpl = self.scenario.template
        stmts = []
        refs = self.scenario.slot_refs()
        for i, s in enumerate(tpl.statements):
            params = {
                ref.slot.name: self.assignment[j]
                for j, ref in enumerate(refs)
                if ref.stmt_index == i
            }
            stmts.append({"kind": s.kind, "subject": str(s.subject), "params": params})
        return {
            "seed_id": self.seed_id,
            "road": {"shape": tpl.road.shape.value, "lanes": tpl.road.lane_count},
            "ego": str(tpl.ego) if tpl.ego else None,
            "statements": stmts,
        }


@dataclass(frozen=True)
class ValidationReport:
    ok: bool
    violations: tuple[str, ...]


def instantiate(scenario: LogicalScenario, values, seed_id: int = 0) -> ConcreteTestCase:
    """Bind a value vector to a scenario, checking each value against its range.

    Integer slots require integral values; those are normalized to int.
    Raises OutOfRangeError on any violation.
    """
    refs = scenario.slot_refs()
    values = list(values)
    if len(values) != len(refs):
        raise OutOfRangeError(
            f"expected {len(refs)} values, got {len(values)}"
        )
    normalized = []
    for v, ref in zip(values, refs):
        slot = ref.slot
        where = f"statement {ref.stmt_index + 1} param {slot.name}"
        if slot.integer:
            if abs(float(v) - round(v)) > 1e-9:
                raise OutOfRangeError(f"{where}: {v} is not an integer")
            v = int(round(v))
        else:
            v = float(v)
        if not (slot.lo <= v <= slot.hi):
            raise OutOfRangeError(f"{where}: {v} outside [{slot.lo}, {slot.hi}]")
        normalized.append(v)
    return ConcreteTestCase(scenario, tuple(normalized), seed_id)


def validate_concrete(
    tc: ConcreteTestCase,
    road: RoadDescriptor | None = None,
    vehicle_length: float = 4.5,
) -> ValidationReport:
    """Pre-simulation sanity: lane ids on the road, non-negative speeds, and
    no two vehicles spawned closer than one vehicle length in the same lane."""
    tpl = tc.scenario.template
    if road is None:
        road = tpl.road
    violations: list[str] = []

    spawns: list[tuple[VehicleId, int, float]] = []
    for i, s in enumerate(tpl.statements):
        for ref_name, _ in PARAM_SPECS[s.kind]:
            v = tc.value(i, ref_name)
            if ref_name == "lane" and not (1 <= v <= road.lane_count):
                violations.append(
                    f"statement {i + 1}: lane {int(v)} outside 1..{road.lane_count}"
                )
            if ref_name == "speed" and v < 0:
                violations.append(f"statement {i + 1}: negative speed {v}")
        if s.kind == CONSTRUCTOR:
            spawns.append((s.subject, int(tc.value(i, "lane")), float(tc.value(i, "offset"))))

    for a in range(len(spawns)):
        for b in range(a + 1, len(spawns)):
            va, lane_a, off_a = spawns[a]
            vb, lane_b, off_b = spawns[b]
            if lane_a == lane_b and abs(off_a - off_b) < vehicle_length:
                violations.append(
                    f"{va} and {vb} spawn {abs(off_a - off_b):.2f} m apart in lane {lane_a}"
                )

    return ValidationReport(not violations, tuple(violations))


# ---------------------------------------------------------------------------
# Text form

_HEADER_LINE = re.compile(r"^road\s*:\s*(straight|curved)\s*,\s*lanes\s*:\s*(\d+)\s*$", re.IGNORECASE)
_EGO_LINE = re.compile(r"^ego\s*:\s*(V\d+)\s*$")
_STMT_LINE = re.compile(r"^(\w+)\s*\(\s*(V\d+)\s*(?:,(.*))?\)\s*$")
_KWARG = re.compile(r"^(\w+)\s*=\s*(.+)$")


def _split_args(text: str) -> list[str]:
    """Split on commas that are not inside a [lo,hi] bracket."""
    parts, cur, depth = [], [], 0
    for ch in text:
        if ch == "[":
            depth += 1
        elif ch == "]":
            depth -= 1
        if ch == "," and depth == 0:
            parts.append("".join(cur))
            cur = []
        else:
            cur.append(ch)
    parts.append("".join(cur))
    return [p.strip() for p in parts]


def _parse_number(token: str, integer: bool, lineno: int) -> float:
    token = token.strip()
    try:
        if integer:
            return int(token)
        return float(token)
    except ValueError:
        kind = "integer" if integer else "number"
        raise DslParseError(f"expected {kind}, got {token!r}", lineno) from None


def _parse_slot(name: str, integer: bool, token: str, lineno: int) -> ParamSlot:
    token = token.strip()
    if token == "?":
        return ParamSlot(name, integer)
    if token.startswith("["):
        if not token.endswith("]"):
            raise DslParseError(f"unterminated range {token!r}", lineno)
        inner = token[1:-1].split(",")
        if len(inner) != 2:
            raise DslParseError(f"range needs two endpoints, got {token!r}", lineno)
        lo = _parse_number(inner[0], integer, lineno)
        hi = _parse_number(inner[1], integer, lineno)
        if lo > hi:
            raise DslParseError(f"empty range [{lo},{hi}]", lineno)
        return ParamSlot(name, integer, lo=lo, hi=hi)
    return ParamSlot(name, integer, value=_parse_number(token, integer, lineno))


def parse_template(text: str) -> TestCaseTemplate:
    """Parse test-case text in any slot state.

    Enforces the structural rules of the language: road header first,
    constructors before actions, one constructor per vehicle, actions only
    for constructed vehicles, the exact parameter set per statement kind
    (ArityError otherwise), and strictly increasing value-state triggers per
    vehicle.
    """
    road = None
    ego: VehicleId | None = None
    statements: list[Statement] = []
    constructed: set[VehicleId] = set()
    last_trigger: dict[VehicleId, float] = {}

    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue

        if road is None:
            m = _HEADER_LINE.match(line)
            if m is None:
                raise DslParseError("expected road header 'road: <shape>, lanes: <n>'", lineno, 1)
            road = RoadDescriptor(RoadShape(m.group(1).lower()), int(m.group(2)))
            continue

        m = _EGO_LINE.match(line)
        if m is not None:
            if statements:
                raise DslParseError("ego marker must precede statements", lineno, 1)
            if ego is not None:
                raise DslParseError("duplicate ego marker", lineno, 1)
            ego = VehicleId.parse(m.group(1))
            continue

        m = _STMT_LINE.match(line)
        if m is None:
            raise DslParseError(f"unrecognizable statement: {line!r}", lineno, 1)
        kind, subject_token, args_text = m.group(1), m.group(2), m.group(3)
        if kind not in PARAM_SPECS:
            raise DslParseError(f"unknown statement kind {kind!r}", lineno, 1)
        subject = VehicleId.parse(subject_token)

        spec = PARAM_SPECS[kind]
        kwargs: dict[str, str] = {}
        for part in _split_args(args_text or ""):
            if not part:
                continue
            km = _KWARG.match(part)
            if km is None:
                raise DslParseError(f"expected name=value, got {part!r}", lineno)
            if km.group(1) in kwargs:
                raise ArityError(f"{kind}: duplicate parameter {km.group(1)!r}", lineno)
            kwargs[km.group(1)] = km.group(2)

        expected = [name for name, _ in spec]
        if sorted(kwargs) != sorted(expected):
            raise ArityError(
                f"{kind} takes parameters ({', '.join(expected)}), got ({', '.join(sorted(kwargs)) or 'none'})",
                lineno,
            )
        params = tuple(
            _parse_slot(name, integer, kwargs[name], lineno) for name, integer in spec
        )

        if kind == CONSTRUCTOR:
            if statements and statements[-1].kind != CONSTRUCTOR:
                raise DslParseError("constructors must precede action statements", lineno, 1)
            if subject in constructed:
                raise DslParseError(f"duplicate constructor for {subject}", lineno, 1)
            constructed.add(subject)
        else:
            if subject not in constructed:
                raise DslParseError(f"action for unconstructed vehicle {subject}", lineno, 1)
            trig = params[-1]
            if trig.state == "value":
                prev = last_trigger.get(subject)
                if prev is not None and trig.value <= prev:
                    raise DslParseError(
                        f"trigger {int(trig.value)} for {subject} does not increase "
                        f"(previous {int(prev)})",
                        lineno,
                    )
                last_trigger[subject] = trig.value

        statements.append(Statement(kind, subject, params))

    if road is None:
        raise DslParseError("empty test case: missing road header", 1, 1)
    if not statements:
        raise DslParseError("test case has no statements", 1, 1)
    if ego is not None and ego not in constructed:
        raise DslParseError(f"ego {ego} has no constructor", 1, 1)
    return TestCaseTemplate(road, tuple(statements), ego)


def _render_number(x: float, integer: bool) -> str:
    if integer:
        return str(int(x))
    return repr(float(x))


def _render_slot(slot: ParamSlot) -> str:
    if slot.state == "unbound":
        return "?"
    if slot.state == "range":
        return f"[{_render_number(slot.lo, slot.integer)},{_render_number(slot.hi, slot.integer)}]"
    return _render_number(slot.value, slot.integer)


def serialize_template(tpl: TestCaseTemplate) -> str:
    """Canonical text; parse_template(serialize_template(x)) == x."""
    lines = [f"road: {tpl.road.shape.value}, lanes: {tpl.road.lane_count}"]
    if tpl.ego is not None:
        lines.append(f"ego: {tpl.ego}")
    for s in tpl.statements:
        args = ", ".join(f"{p.name}={_render_slot(p)}" for p in s.params)
        lines.append(f"{s.kind}({s.subject}, {args})")
    return "\n".join(lines) + "\n"


def parse_logical(text: str) -> LogicalScenario:
    tpl = parse_template(text)
    try:
        return LogicalScenario(tpl)
    except ValueError as e:
        raise DslParseError(str(e)) from None


def parse_concrete(text: str) -> TestCaseTemplate:
    """Parse a fully bound test case; every slot must be a value."""
    tpl = parse_template(text)
    for ref in tpl.slot_refs():
        if ref.slot.state != "value":
            raise DslParseError(
                f"slot {ref.slot.name} of statement {ref.stmt_index + 1} is not bound"
            )
    return tpl


def serialize_concrete(tc: ConcreteTestCase) -> str:
    """Text form of the bound template; round-trips through parse_concrete."""
    return serialize_template(tc.bound_template())


def concrete_from_template(tpl: TestCaseTemplate, seed_id: int = 0) -> ConcreteTestCase:
    """Lift a fully bound template into a ConcreteTestCase whose scenario
    has every range collapsed to the bound value.  This is how a saved
    test-case file is brought back for re-simulation."""
    values = []
    statements = []
    for s in tpl.statements:
        params = []
        for p in s.params:
            if p.state != "value":
                raise DslParseError(f"slot {p.name} of {s.kind}({s.subject}) is not bound")
            values.append(p.value)
            params.append(ParamSlot(p.name, p.integer, lo=p.value, hi=p.value))
        statements.append(replace(s, params=tuple(params)))
    scenario = LogicalScenario(TestCaseTemplate(tpl.road, tuple(statements), tpl.ego))
    return ConcreteTestCase(scenario, tuple(values), seed_id)


def strip_ego_actions(tpl: TestCaseTemplate, ego: VehicleId) -> TestCaseTemplate:
    """Drop ego's action statements, keep its constructor, mark it as ego."""
    statements = tuple(
        s for s in tpl.statements if s.kind == CONSTRUCTOR or s.subject != ego
    )
    return replace(tpl, statements=statements, ego=ego)
