"""Objective functions: minimum headway, acceleration change rate, diversity."""

import math
import random

import numpy as np
import pytest

from generators import random_fitness_tuples

from scenforge.dsl import LogicalScenario, instantiate, parse_template
from scenforge.errors import (
    DimensionMismatchError,
    NoNpcError,
    TraceTooShortError,
)
from scenforge.fitness import (
    FitnessVector,
    acr,
    acr_or_zero,
    div,
    dominates,
    evaluate,
    mhd,
    param_point,
)
from scenforge.ips import RoadShape, VehicleId
from scenforge.microsim import RoadModel, SimTrace, VehicleState

V1, V2, V3 = VehicleId(1), VehicleId(2), VehicleId(3)
ROAD = RoadModel(RoadShape.STRAIGHT, 1)


def _distance_trace(per_npc: dict[VehicleId, list[float]], dt: float = 0.1) -> SimTrace:
    """Ego pinned at s=0; each scripted vehicle at s equal to the requested
    same-lane distance, so headway distance reproduces the table exactly."""
    npcs = tuple(per_npc)
    n = len(next(iter(per_npc.values())))
    steps = []
    for i in range(n):
        row = [VehicleState(V1, 1.0, 0.0, 0.0, 0.0, 0.0)]
        row.extend(
            VehicleState(vid, 1.0, per_npc[vid][i], 0.0, 0.0, 0.0) for vid in npcs
        )
        steps.append(tuple(row))
    return SimTrace(ROAD, dt, (n - 1) * dt, V1, 4.5, (V1,) + npcs,
                    tuple(steps), (), None)


def _accel_trace(accels, dt: float = 0.5) -> SimTrace:
    """Ego carrying the given acceleration samples, one distant NPC."""
    steps = tuple(
        (
            VehicleState(V1, 1.0, 0.0, 10.0, a, 0.0),
            VehicleState(V2, 1.0, 500.0, 10.0, 0.0, 0.0),
        )
        for a in accels
    )
    return SimTrace(ROAD, dt, (len(accels) - 1) * dt, V1, 4.5, (V1, V2),
                    tuple(steps), (), None)


# ---------------------------------------------------------------------------
# mhd


def test_mhd_two_npc_table():
    trace = _distance_trace({V2: [10.0, 6.0, 8.0], V3: [12.0, 7.0, 5.0]})
    assert mhd(trace) == 5.0


def test_mhd_zero_on_coincidence():
    trace = _distance_trace({V2: [10.0, 0.0, 8.0]})
    assert mhd(trace) == 0.0


def test_mhd_requires_npcs():
    trace = SimTrace(ROAD, 0.1, 0.1, V1, 4.5, (V1,),
                     ((VehicleState(V1, 1.0, 0.0, 0.0, 0.0, 0.0),),) * 2, (), None)
    with pytest.raises(NoNpcError):
        mhd(trace)


def test_mhd_time_reversal_invariant():
    trace = _distance_trace({V2: [10.0, 6.0, 8.0], V3: [12.0, 7.0, 5.0]})
    reversed_trace = SimTrace(ROAD, trace.dt, trace.horizon, trace.ego,
                              trace.vehicle_length, trace.vehicle_order,
                              tuple(reversed(trace.steps)), (), None)
    assert mhd(reversed_trace) == mhd(trace)


def test_mhd_npc_order_invariant():
    trace = _distance_trace({V2: [10.0, 6.0, 8.0], V3: [12.0, 7.0, 5.0]})
    swapped = SimTrace(ROAD, trace.dt, trace.horizon, trace.ego,
                       trace.vehicle_length, (V1, V3, V2),
                       tuple((row[0], row[2], row[1]) for row in trace.steps),
                       (), None)
    assert mhd(swapped) == mhd(trace)


# ---------------------------------------------------------------------------
# acr


def _plateau_signal(values, samples_per_plateau):
    out = []
    for v in values:
        out.extend([v] * samples_per_plateau)
    return out


def _brute_pairs(stationary, eta):
    count = 0
    for i in range(len(stationary)):
        for j in range(i + 1, len(stationary)):
            if abs(stationary[i] - stationary[j]) >= eta:
                count += 1
    return count


def test_acr_four_plateaus():
    # four 5 s plateaus 0/2/0/2 at dt=0.5; the trailing sample keeps T=20 s
    signal = _plateau_signal([0.0, 2.0, 0.0, 2.0], 10) + [2.0]
    trace = _accel_trace(signal, dt=0.5)
    assert trace.duration == 20.0
    expected = _brute_pairs([0.0, 2.0, 0.0, 2.0], 1.0) / 20.0
    assert expected == 0.2
    assert acr(trace, eta=1.0) == expected


def test_acr_time_stretch_scales_inversely():
    signal = _plateau_signal([0.0, 2.0, 0.0, 2.0], 10) + [2.0]
    for k in (2, 5):
        stretched = _accel_trace(signal, dt=0.5 * k)
        assert acr(stretched, eta=1.0) == 4 / (len(signal) - 1) / (0.5 * k)


def test_acr_constant_acceleration_is_zero():
    assert acr(_accel_trace([1.5] * 20), eta=1.0) == 0.0


def test_acr_eta_above_spread_is_zero():
    signal = _plateau_signal([0.0, 2.0, 0.0, 2.0], 10)
    assert acr(_accel_trace(signal), eta=3.0) == 0.0


def test_acr_counts_single_sample_extrema():
    # peak and valley are single samples; endpoints never count
    trace = _accel_trace([0.0, 3.0, 0.5, 3.0], dt=0.5)
    assert acr(trace, eta=1.0) == _brute_pairs([3.0, 0.5], 1.0) / trace.duration
    ramp = _accel_trace([0.0, 1.0, 2.0, 3.0], dt=0.5)
    assert acr(ramp, eta=0.5) == 0.0  # monotone signal has no stationary point


def test_acr_validation():
    with pytest.raises(TraceTooShortError):
        acr(_accel_trace([0.0, 1.0]))
    with pytest.raises(ValueError):
        acr(_accel_trace([0.0, 1.0, 2.0]), eta=0.0)


def test_acr_or_zero():
    short = _accel_trace([0.0, 1.0])
    assert acr_or_zero(short) == 0.0
    full = _accel_trace(_plateau_signal([0.0, 2.0], 5))
    assert acr_or_zero(full) == acr(full)


# ---------------------------------------------------------------------------
# div


def test_div_unit_cube_corners():
    for d in range(1, 6):
        points = [np.zeros(d), np.ones(d)]
        assert div(points) == pytest.approx(math.sqrt(d), abs=1e-12)


def test_div_matches_brute_force():
    rng = random.Random(101)
    points = [np.array([rng.random() for _ in range(3)]) for _ in range(5)]
    total, pairs = 0.0, 0
    for i in range(5):
        for j in range(i + 1, 5):
            total += math.dist(points[i], points[j])
            pairs += 1
    assert div(points) == pytest.approx(total / pairs, abs=1e-12)


def test_div_permutation_and_translation_invariant():
    rng = random.Random(103)
    points = [np.array([rng.random() for _ in range(4)]) for _ in range(6)]
    shuffled = points[::-1]
    assert div(shuffled) == pytest.approx(div(points), abs=1e-12)
    shifted = [p + 7.25 for p in points]
    assert div(shifted) == pytest.approx(div(points), abs=1e-12)


def test_div_degenerate_sets():
    assert div([np.array([0.3, 0.7])]) == 0.0
    assert div([np.array([0.3, 0.7])] * 4) == 0.0


def test_div_dimension_mismatch():
    with pytest.raises(DimensionMismatchError):
        div([np.array([1.0, 2.0]), np.array([1.0])])
    with pytest.raises(DimensionMismatchError):
        div([])


# ---------------------------------------------------------------------------
# dominance


def _brute_dominates(a, b):
    no_worse = a[0] <= b[0] and a[1] >= b[1] and a[2] >= b[2]
    strict = a[0] < b[0] or a[1] > b[1] or a[2] > b[2]
    return no_worse and strict


def test_dominates_directions():
    base = FitnessVector(10.0, 1.0, 0.5)
    assert dominates(FitnessVector(9.0, 1.0, 0.5), base)    # lower mhd wins
    assert dominates(FitnessVector(10.0, 2.0, 0.5), base)   # higher acr wins
    assert dominates(FitnessVector(10.0, 1.0, 0.9), base)   # higher div wins
    assert not dominates(base, base)                         # no strict edge
    assert not dominates(FitnessVector(9.0, 0.5, 0.5), base)  # trade-off


def test_dominates_matches_brute_comparator():
    rng = random.Random(107)
    tuples = random_fitness_tuples(rng, 60)
    # mix in exact duplicates so the equality branch is exercised
    tuples += tuples[:5]
    vectors = [FitnessVector(*t) for t in tuples]
    for a, ta in zip(vectors, tuples):
        for b, tb in zip(vectors, tuples):
            got = dominates(a, b)
            assert got == _brute_dominates(ta, tb)
            if got:
                assert not dominates(b, a)  # antisymmetry


# ---------------------------------------------------------------------------
# param_point and evaluate


def _scenario():
    return LogicalScenario(parse_template(
        "road: straight, lanes: 2\n"
        "npc(V1, lane=[1,2], offset=[20,60], speed=[10,10])\n"
    ))


def test_param_point_normalizes_to_unit_cube():
    tc = instantiate(_scenario(), [2, 40.0, 10.0])
    assert param_point(tc).tolist() == [1.0, 0.5, 0.0]  # degenerate span -> 0


def test_param_point_in_bounds_for_random_cases():
    from generators import random_concrete
    rng = random.Random(109)
    for _ in range(200):
        point = param_point(random_concrete(rng))
        assert np.all(point >= 0.0) and np.all(point <= 1.0)


def test_evaluate_composes_objectives():
    tc = instantiate(_scenario(), [2, 40.0, 10.0])
    trace = _accel_trace(_plateau_signal([0.0, 2.0, 0.0, 2.0], 10) + [2.0], dt=0.5)
    own = param_point(tc)
    reference = [np.zeros_like(own)]
    fv = evaluate(tc, trace, reference)
    assert fv.mhd == mhd(trace)
    assert fv.acr == acr(trace, eta=1.0)
    assert fv.div == pytest.approx(div([reference[0], own]), abs=1e-12)


def test_evaluate_does_not_double_own_point():
    tc = instantiate(_scenario(), [2, 40.0, 10.0])
    trace = _accel_trace([0.0, 0.0, 0.0])
    fv = evaluate(tc, trace, [param_point(tc)])
    assert fv.div == 0.0  # union with itself stays a singleton


def test_evaluate_rejects_mismatched_reference():
    tc = instantiate(_scenario(), [2, 40.0, 10.0])
    trace = _accel_trace([0.0, 0.0, 0.0])
    with pytest.raises(DimensionMismatchError):
        evaluate(tc, trace, [np.zeros(7)])


def test_evaluate_uses_zero_acr_for_collision_stubs():
    tc = instantiate(_scenario(), [2, 40.0, 10.0])
    stub = _accel_trace([0.0, 0.0])  # truncated below the acr minimum
    fv = evaluate(tc, stub, [])
    assert fv.acr == 0.0
