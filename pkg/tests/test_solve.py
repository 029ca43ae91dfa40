import itertools
import math
import random

import pytest

from mmtsp.dissection import Shift
from mmtsp.instance import Instance, generate_instance, tour_length, validate_solution
from mmtsp.perturb import perturb
from mmtsp.solve import (
    Derandomized,
    Fixed,
    RandomShift,
    exact_solve,
    ptas_solve,
    resolve_params,
    shift_sensitivity,
    zigzag_upper_bound,
)

CORNERS_OPT = 2 + math.sqrt(2)


def _brute(inst: Instance) -> float:
    """Independent oracle: every labelling of cities to salesmen, every order."""
    others = [c for c in range(inst.n) if c != inst.depot]
    best = math.inf
    for lab in itertools.product(range(inst.k), repeat=len(others)):
        if any(inst.forced_assignments.get(c, h) != h for c, h in zip(others, lab)):
            continue
        span = 0.0
        for h in range(inst.k):
            mine = [c for c, g in zip(others, lab) if g == h]
            span = max(span, min(
                tour_length(inst.cities, [inst.depot, *perm, inst.depot]) for perm in itertools.permutations(mine)
            ) if mine else 0.0)
        best = min(best, span)
    return best


def test_single_city():
    rep = ptas_solve(Instance([(1.0, 1.0)], 0, 1), 0.5, RandomShift(0), (2, 1))
    assert rep.solution.makespan == 0 and rep.solution.tours == [[0]]


def test_coincident_cities_give_singletons_per_salesman():
    inst = Instance([(1.0, 1.0)] * 3, 0, 3)
    rep = ptas_solve(inst, 0.5, RandomShift(0), (2, 1))
    assert rep.solution.makespan == 0 and validate_solution(inst, rep.solution) == []


def test_single_salesman_derandomized_near_optimal():
    inst = generate_instance(6, 1, 8)
    rep = ptas_solve(inst, 0.5, Derandomized(), (8, 4))
    opt = exact_solve(inst).makespan
    assert opt * (1 - 1e-9) <= rep.solution.makespan <= 1.5 * opt


def test_fixed_shift_is_deterministic():
    inst = generate_instance(9, 2, 4)
    a = ptas_solve(inst, 0.5, Fixed(Shift(17, 40)), (4, 2))
    b = ptas_solve(inst, 0.5, Fixed(Shift(17, 40)), (4, 2))
    assert a.solution.to_dict() == b.solution.to_dict()
    assert (a.grid_makespan, a.path_makespan, a.rounded_makespan_tick, a.table_stats) == (
        b.grid_makespan, b.path_makespan, b.rounded_makespan_tick, b.table_stats
    )


def test_report_fields_consistent():
    inst = generate_instance(10, 3, 2)
    rep = ptas_solve(inst, 0.5, RandomShift(3), (4, 2))
    p = rep.perturbed
    assert validate_solution(inst, rep.solution) == []
    assert rep.grid_makespan <= rep.path_makespan * (1 + 1e-9)  # shortcutting never lengthens
    assert rep.grid_makespan == pytest.approx(max(tour_length(p.city_map, t) for t in rep.solution.tours))
    assert [s["level"] for s in rep.table_stats] == list(range(rep.tree.depth + 1))


def test_theory_params_refused():
    p = perturb(generate_instance(5, 2, 0), 0.5)
    with pytest.raises(ValueError, match="not executable"):
        resolve_params(p)


def test_exact_corners(corners):
    assert exact_solve(corners).makespan == pytest.approx(CORNERS_OPT)


def test_exact_two_cities():
    inst = Instance([(0.0, 0.0), (3.0, 4.0)], 0, 1)
    assert exact_solve(inst).makespan == pytest.approx(10.0)


def test_exact_one_city_per_salesman():
    inst = generate_instance(4, 3, 6)
    far = max(math.dist(inst.cities[0], c) for c in inst.cities)
    assert exact_solve(inst).makespan == pytest.approx(2 * far)


@pytest.mark.parametrize("seed", range(8))
def test_exact_matches_brute_force(seed):
    rng = random.Random(seed)
    n, k = rng.randint(2, 7), rng.randint(1, 3)
    k = min(k, n)
    inst = generate_instance(n, k, seed)
    if seed % 2:
        inst = Instance(inst.cities, 0, k, {rng.randrange(1, n): rng.randrange(k)} if n > 1 else {})
    sol = exact_solve(inst)
    assert validate_solution(inst, sol) == []
    assert sol.makespan == pytest.approx(_brute(inst), rel=1e-9)


def test_exact_refuses_large():
    with pytest.raises(ValueError, match="at most 10"):
        exact_solve(generate_instance(11, 2, 0))


def test_zigzag_single_row():
    inst = Instance([(float(x), 0.0) for x in range(6)] + [(0.0, 5.0)], 0, 1)
    p = perturb(inst, 0.5)
    row = Instance([(float(x), 0.0) for x in range(6)], 0, 1)
    pr = perturb(row, 0.5)
    assert zigzag_upper_bound(pr).makespan <= 2 * pr.L
    assert zigzag_upper_bound(p).makespan <= p.L**2 + 2 * p.L


def test_zigzag_only_depot_point():
    inst = Instance([(0.0, 0.0), (0.0, 0.0), (1.0, 1.0)], 0, 2)
    p = perturb(inst, 0.5)
    assert zigzag_upper_bound(p).tours[0][0] == 0


def test_shift_sensitivity_basics():
    inst = generate_instance(6, 2, 1)
    one = shift_sensitivity(inst, 0.5, [Shift(0, 0)], (4, 2))
    assert one["fraction_within"] == 1
    shifts = [Shift(a, b) for a, b in [(1, 2), (30, 5), (100, 99)]]
    assert shift_sensitivity(inst, 0.5, shifts, (4, 2)) == shift_sensitivity(inst, 0.5, shifts, (4, 2))
    with pytest.raises(ValueError):
        shift_sensitivity(inst, 0.5, [], (4, 2))
