"""Three-objective genetic search over a logical scenario's parameter space.

Generation 1 is sampled uniformly from the slot ranges (resampling cases the
validator rejects).  Later generations breed: binary tournaments pick
parents by Pareto rank and crowding distance, a rate-gated crossover swaps
one scripted vehicle's entire parameter block between the parents, and each
slot then mutates independently with the polynomial-mutation operator
(integer slots are mutated on a real relaxation and rounded back).  Parents
and offspring compete in an elitist non-dominated selection with
crowding-distance truncation, and every member of the selected population
whose minimum headway distance fell below the collision threshold is
harvested into the critical set.

All randomness flows through one random.Random stream, so a fixed seed fixes
the whole run.  Simulation and fitness evaluation are pure; a generation's
candidates may be evaluated by any order-preserving map (e.g. a process
pool) without touching determinism.

A budget-matched uniform random sampler is included as the comparison
baseline for campaign reports.
"""

from __future__ import annotations

import json
import math
import random
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .dsl import ConcreteTestCase, LogicalScenario, instantiate, validate_concrete
from .errors import MutationExhausted, SamplingExhausted
from .fitness import FitnessVector, acr_or_zero, div, dominates, mhd, param_point
from .microsim import SimTrace

_RESAMPLE_LIMIT = 100


@dataclass(frozen=True)
class SearchConfig:
    population_size: int | None = None  # None: one individual per statement
    generations: int = 10
    crossover_rate: float = 0.4
    mutation_rate: float = 0.5
    mutation_eta: float = 20.0
    tournament_size: int = 2
    seed: int = 0
    collision_threshold: float = 4.5
    acr_eta: float = 1.0

    def __post_init__(self):
        if not (0.0 <= self.crossover_rate <= 1.0):
            raise ValueError(f"crossover_rate {self.crossover_rate} outside [0, 1]")
        if not (0.0 <= self.mutation_rate <= 1.0):
            raise ValueError(f"mutation_rate {self.mutation_rate} outside [0, 1]")
        if self.generations < 1:
            raise ValueError("generations must be >= 1")
        if self.population_size is not None and self.population_size < 2:
            raise ValueError("population_size must be >= 2")
        if self.tournament_size < 2:
            raise ValueError("tournament_size must be >= 2")
        if self.collision_threshold <= 0:
            raise ValueError("collision_threshold must be positive")


def resolve_population_size(cfg: SearchConfig, scenario: LogicalScenario) -> int:
    """Explicit size if given, else the scenario's statement count (with a
    floor of two so breeding stays possible)."""
    if cfg.population_size is not None:
        return cfg.population_size
    return max(2, scenario.template.statement_count)


@dataclass(frozen=True)
class EvaluatedCase:
    tc: ConcreteTestCase
    fv: FitnessVector
    generation: int
    sim_index: int
    trace: SimTrace | None = None  # retained only for critical cases


@dataclass
class CriticalSet:
    """Collision cases harvested from the selected population, in discovery
    order (strictly increasing simulation indices)."""

    cases: list[EvaluatedCase] = field(default_factory=list)
    log: list[int] = field(default_factory=list)

    def add(self, case: EvaluatedCase) -> None:
        if self.log and case.sim_index <= self.log[-1]:
            raise ValueError("critical set discovery log must increase")
        self.cases.append(case)
        self.log.append(case.sim_index)

    def __len__(self) -> int:
        return len(self.cases)


@dataclass(frozen=True)
class SimRecord:
    """One history line per simulation, JSON-serializable and free of wall
    time so seed-fixed runs are byte-identical."""

    sim_index: int
    generation: int
    assignment: tuple[float, ...]
    fv: FitnessVector
    critical: bool

    def to_json_dict(self) -> dict:
        return {
            "sim": self.sim_index,
            "generation": self.generation,
            "assignment": list(self.assignment),
            "mhd": self.fv.mhd,
            "acr": self.fv.acr,
            "div": self.fv.div,
            "critical": self.critical,
        }


@dataclass
class SearchResult:
    scenario: LogicalScenario
    config: SearchConfig
    critical: CriticalSet
    collisions: list[EvaluatedCase]  # every simulated collision, harvested or not
    history: list[SimRecord]
    population_sizes: list[int]
    simulations: int


def write_history_jsonl(history: Sequence[SimRecord], path) -> None:
    lines = [json.dumps(r.to_json_dict(), sort_keys=True) for r in history]
    Path(path).write_text("\n".join(lines) + "\n")


def sample_case(scenario: LogicalScenario, rng: random.Random, seed_id: int = 0,
                vehicle_length: float = 4.5) -> ConcreteTestCase:
    """One uniform draw from the slot ranges, resampled until the validator
    passes (SamplingExhausted after 100 consecutive rejections)."""
    for _ in range(_RESAMPLE_LIMIT):
        values = []
        for lo, hi, integer in scenario.bounds():
            if integer:
                values.append(rng.randint(int(lo), int(hi)))
            else:
                values.append(rng.uniform(lo, hi))
        tc = instantiate(scenario, values, seed_id)
        if validate_concrete(tc, vehicle_length=vehicle_length).ok:
            return tc
    raise SamplingExhausted(
        f"no valid case in {_RESAMPLE_LIMIT} uniform draws; ranges may force overlaps"
    )


def initial_population(scenario: LogicalScenario, p_max: int, rng: random.Random,
                       vehicle_length: float = 4.5) -> list[ConcreteTestCase]:
    return [sample_case(scenario, rng, seed_id=i, vehicle_length=vehicle_length)
            for i in range(p_max)]


# ---------------------------------------------------------------------------
# Non-dominated sorting and crowding


def non_dominated_fronts(fvs: Sequence[FitnessVector]) -> list[list[int]]:
    """Indices grouped into Pareto fronts, best first."""
    n = len(fvs)
    dominated_by: list[list[int]] = [[] for _ in range(n)]
    counts = [0] * n
    for i in range(n):
        for j in range(i + 1, n):
            if dominates(fvs[i], fvs[j]):
                dominated_by[i].append(j)
                counts[j] += 1
            elif dominates(fvs[j], fvs[i]):
                dominated_by[j].append(i)
                counts[i] += 1
    fronts = [[i for i in range(n) if counts[i] == 0]]
    while True:
        nxt = []
        for i in fronts[-1]:
            for j in dominated_by[i]:
                counts[j] -= 1
                if counts[j] == 0:
                    nxt.append(j)
        if not nxt:
            return fronts
        fronts.append(sorted(nxt))


def crowding_distances(fvs: Sequence[FitnessVector], front: Sequence[int]) -> dict[int, float]:
    """Per-objective boundary-infinite crowding distance within one front."""
    dist = {i: 0.0 for i in front}
    if len(front) <= 2:
        return {i: float("inf") for i in front}
    for key in (lambda f: f.mhd, lambda f: f.acr, lambda f: f.div):
        ordered = sorted(front, key=lambda i: key(fvs[i]))
        lo, hi = key(fvs[ordered[0]]), key(fvs[ordered[-1]])
        dist[ordered[0]] = float("inf")
        dist[ordered[-1]] = float("inf")
        span = hi - lo
        if span == 0:
            continue
        for k in range(1, len(ordered) - 1):
            gap = key(fvs[ordered[k + 1]]) - key(fvs[ordered[k - 1]])
            dist[ordered[k]] += gap / span
    return dist


def rank_population(cases: Sequence[EvaluatedCase]) -> list[tuple[int, float]]:
    """(rank, crowding) per case, aligned with the input order."""
    fvs = [c.fv for c in cases]
    fronts = non_dominated_fronts(fvs)
    out: list[tuple[int, float] | None] = [None] * len(cases)
    for rank, front in enumerate(fronts, 1):
        crowd = crowding_distances(fvs, front)
        for i in front:
            out[i] = (rank, crowd[i])
    return out  # type: ignore[return-value]


def pareto_select(cases: Sequence[EvaluatedCase], p_max: int) -> list[EvaluatedCase]:
    """Elitist selection: fill by front; truncate the last front by crowding
    distance (stable on ties).  Rank-1 cases are never dropped while they
    fit within p_max."""
    if p_max < 1:
        raise ValueError("p_max must be >= 1")
    fvs = [c.fv for c in cases]
    fronts = non_dominated_fronts(fvs)
    selected: list[int] = []
    for front in fronts:
        if len(selected) + len(front) <= p_max:
            selected.extend(front)
            continue
        room = p_max - len(selected)
        if room > 0:
            crowd = crowding_distances(fvs, front)
            ordered = sorted(front, key=lambda i: (-crowd[i], i))
            selected.extend(ordered[:room])
        break
    return [cases[i] for i in sorted(selected)]


def tournament(pop: Sequence[EvaluatedCase], k: int, rng: random.Random) -> EvaluatedCase:
    """Best of k distinct draws by (rank, crowding); deterministic ties."""
    if not (2 <= k <= len(pop)):
        raise ValueError(f"tournament size {k} outside 2..{len(pop)}")
    ranking = rank_population(pop)
    picks = rng.sample(range(len(pop)), k)
    best = min(picks, key=lambda i: (ranking[i][0], -ranking[i][1], pop[i].sim_index))
    return pop[best]


# ---------------------------------------------------------------------------
# Variation operators


def _vehicle_slot_indices(scenario: LogicalScenario, vehicle) -> list[int]:
    return [i for i, ref in enumerate(scenario.slot_refs()) if ref.subject == vehicle]


def crossover(tc1: ConcreteTestCase, tc2: ConcreteTestCase, rng: random.Random,
              rate: float = 0.4) -> tuple[ConcreteTestCase, ConcreteTestCase]:
    """Rate-gated block swap: pick one scripted (non-ego) vehicle uniformly
    and exchange all of its parameter values between the two cases.  Both
    parents must come from the same logical scenario."""
    if tc1.scenario is not tc2.scenario and tc1.scenario != tc2.scenario:
        raise ValueError("crossover needs two cases of the same scenario")
    if rng.random() >= rate:
        return tc1, tc2
    tpl = tc1.scenario.template
    npcs = [v for v in tpl.vehicles() if v != tpl.ego]
    if not npcs:
        raise ValueError("crossover needs at least one scripted vehicle")
    target = npcs[rng.randrange(len(npcs))]
    idx = set(_vehicle_slot_indices(tc1.scenario, target))
    a = list(tc1.assignment)
    b = list(tc2.assignment)
    for i in idx:
        a[i], b[i] = b[i], a[i]
    return (
        ConcreteTestCase(tc1.scenario, tuple(a), tc1.seed_id),
        ConcreteTestCase(tc2.scenario, tuple(b), tc2.seed_id),
    )


def _polynomial_mutation(x: float, lo: float, hi: float, eta: float,
                         rng: random.Random) -> float:
    """Deb's bounded polynomial mutation for one coordinate."""
    span = hi - lo
    if span == 0:
        return x
    u = rng.random()
    d1 = (x - lo) / span
    d2 = (hi - x) / span
    power = 1.0 / (eta + 1.0)
    if u <= 0.5:
        dq = (2.0 * u + (1.0 - 2.0 * u) * (1.0 - d1) ** (eta + 1.0)) ** power - 1.0
    else:
        dq = 1.0 - (2.0 * (1.0 - u) + 2.0 * (u - 0.5) * (1.0 - d2) ** (eta + 1.0)) ** power
    return min(max(x + dq * span, lo), hi)


def mutate(tc: ConcreteTestCase, rng: random.Random, rate: float = 0.5,
           eta: float = 20.0, vehicle_length: float = 4.5) -> ConcreteTestCase:
    """Per-slot polynomial mutation; integer slots mutate on a real
    relaxation and are rounded back into range.  The relaxation spans the
    rounding cells of every admissible value ([lo-0.5, hi+0.5]) so each
    integer owns an equal share of the interval; relaxing over [lo, hi]
    itself would halve the mass of the boundary values.  Mutation draws are
    repeated until the validator passes (MutationExhausted after 100
    rejections).  With rate 0 this is the identity on valid input."""
    bounds = tc.scenario.bounds()
    for _ in range(_RESAMPLE_LIMIT):
        values = []
        for value, (lo, hi, integer) in zip(tc.assignment, bounds):
            if rng.random() >= rate:
                values.append(value)
                continue
            if integer:
                mutated = _polynomial_mutation(float(value), lo - 0.5, hi + 0.5, eta, rng)
                mutated = int(min(max(math.floor(mutated + 0.5), int(lo)), int(hi)))
            else:
                mutated = _polynomial_mutation(float(value), float(lo), float(hi), eta, rng)
            values.append(mutated)
        candidate = ConcreteTestCase(tc.scenario, tuple(values), tc.seed_id)
        if validate_concrete(candidate, vehicle_length=vehicle_length).ok:
            return candidate
    raise MutationExhausted(f"no valid mutant in {_RESAMPLE_LIMIT} draws")


# ---------------------------------------------------------------------------
# Main loops


def run_search(
    scenario: LogicalScenario,
    cfg: SearchConfig,
    run_trace: Callable[[ConcreteTestCase], SimTrace],
    map_fn: Callable = map,
    vehicle_length: float = 4.5,
) -> SearchResult:
    """Full generational loop.  run_trace must be a pure function of the
    case; map_fn may evaluate a generation in parallel as long as it
    preserves order."""
    rng = random.Random(cfg.seed)
    p_max = resolve_population_size(cfg, scenario)
    population: list[EvaluatedCase] = []
    critical = CriticalSet()
    collisions: list[EvaluatedCase] = []
    history: list[SimRecord] = []
    population_sizes: list[int] = []
    harvested: set[int] = set()
    sim_index = 0

    for generation in range(1, cfg.generations + 1):
        if generation == 1:
            candidates = initial_population(scenario, p_max, rng, vehicle_length)
        else:
            candidates = []
            stalls = 0
            while len(candidates) < p_max:
                if stalls > _RESAMPLE_LIMIT:
                    raise SamplingExhausted("variation kept producing invalid cases")
                p1 = tournament(population, cfg.tournament_size, rng)
                p2 = tournament(population, cfg.tournament_size, rng)
                c1, c2 = crossover(p1.tc, p2.tc, rng, cfg.crossover_rate)
                try:
                    c1 = mutate(c1, rng, cfg.mutation_rate, cfg.mutation_eta, vehicle_length)
                    c2 = mutate(c2, rng, cfg.mutation_rate, cfg.mutation_eta, vehicle_length)
                except MutationExhausted:
                    stalls += 1
                    continue
                for child in (c1, c2):
                    if len(candidates) < p_max and validate_concrete(
                            child, vehicle_length=vehicle_length).ok:
                        candidates.append(child)

        # Diversity reference: the current population's points, or the batch
        # itself on the first generation.
        if population:
            ref_points = [param_point(c.tc) for c in population]
        else:
            ref_points = [param_point(c) for c in candidates]

        traces = list(map_fn(run_trace, candidates))
        evaluated = []
        for tc, trace in zip(candidates, traces):
            sim_index += 1
            own = param_point(tc)
            pts = list(ref_points)
            if not any(np.array_equal(p, own) for p in pts):
                pts.append(own)
            fv = FitnessVector(mhd(trace), acr_or_zero(trace, cfg.acr_eta), div(pts))
            is_critical = fv.mhd < cfg.collision_threshold
            case = EvaluatedCase(tc, fv, generation, sim_index,
                                 trace if is_critical else None)
            if is_critical:
                collisions.append(case)
            history.append(SimRecord(sim_index, generation, tc.assignment, fv, is_critical))
            evaluated.append(case)

        population = pareto_select(list(population) + evaluated, p_max)
        population_sizes.append(len(population))
        for case in sorted(population, key=lambda c: c.sim_index):
            if case.fv.mhd < cfg.collision_threshold and case.sim_index not in harvested:
                harvested.add(case.sim_index)
                critical.add(case)

    return SearchResult(scenario, cfg, critical, collisions, history,
                        population_sizes, sim_index)


def random_search(
    scenario: LogicalScenario,
    budget: int,
    seed: int,
    run_trace: Callable[[ConcreteTestCase], SimTrace],
    collision_threshold: float = 4.5,
    acr_eta: float = 1.0,
    map_fn: Callable = map,
    vehicle_length: float = 4.5,
) -> SearchResult:
    """Budget-matched uniform sampling baseline; every collision found is a
    critical case (there is no selection step to harvest from)."""
    if budget < 1:
        raise ValueError("budget must be >= 1")
    rng = random.Random(seed)
    cfg = SearchConfig(population_size=max(2, budget), generations=1, seed=seed,
                       collision_threshold=collision_threshold, acr_eta=acr_eta)
    cases = [sample_case(scenario, rng, seed_id=i, vehicle_length=vehicle_length)
             for i in range(budget)]
    critical = CriticalSet()
    collisions: list[EvaluatedCase] = []
    history: list[SimRecord] = []
    seen_points: list[np.ndarray] = []
    traces = list(map_fn(run_trace, cases))
    for i, (tc, trace) in enumerate(zip(cases, traces), 1):
        own = param_point(tc)
        pts = list(seen_points)
        if not any(np.array_equal(p, own) for p in pts):
            pts.append(own)
        fv = FitnessVector(mhd(trace), acr_or_zero(trace, acr_eta), div(pts))
        is_critical = fv.mhd < collision_threshold
        case = EvaluatedCase(tc, fv, 1, i, trace if is_critical else None)
        if is_critical:
            collisions.append(case)
            critical.add(case)
        history.append(SimRecord(i, 1, tc.assignment, fv, is_critical))
        seen_points.append(own)
    return SearchResult(scenario, cfg, critical, collisions, history, [budget], budget)
