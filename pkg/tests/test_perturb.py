import itertools
import math
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mmtsp.instance import Instance, generate_instance, tour_length
from mmtsp.perturb import (
    TrivialInstance,
    perturb,
    perturbation_error_bound,
    snap_radius,
    unperturb_length,
)
from mmtsp.solve import exact_solve


def test_grid_side_for_ten_cities_two_salesmen():
    p = perturb(generate_instance(10, 2, 1), 0.5)
    assert p.L_raw == 2560
    assert p.L == 4096  # next power of two


def test_one_cell_apart_becomes_eight():
    n, k, eps, L0 = 3, 1, 0.5, 100.0
    cell = eps * L0 / (8 * k * n)
    p = perturb(Instance([(0.0, 0.0), (L0, 0.0), (cell, 0.0)], 0, k), eps)
    assert math.dist(p.city_map[0], p.city_map[2]) == 8


def test_identical_cities_are_trivial():
    with pytest.raises(TrivialInstance):
        perturb(Instance([(2.0, 2.0)] * 3, 0, 2), 0.5)


def test_unperturb_zero_and_identity():
    inst = generate_instance(7, 2, 5)
    p = perturb(inst, 0.5)
    assert unperturb_length(p, 0) == 0
    assert unperturb_length(p, 64 * 2 * 7 / 0.5) == pytest.approx(p.L0, rel=1e-12)


def test_grid_tour_matches_snapped_tour():
    inst = generate_instance(6, 1, 11)
    p = perturb(inst, 0.5)
    order = [0, 3, 1, 5, 2, 4, 0]
    snapped = [p.snapped_original(i) for i in range(inst.n)]
    assert unperturb_length(p, tour_length(p.city_map, order)) == pytest.approx(tour_length(snapped, order), rel=1e-9)


def test_error_bound_formula():
    inst = Instance([(0.0, 0.0), (100.0, 0.0), (50.0, 50.0)], 0, 2)
    assert perturbation_error_bound(perturb(inst, 0.5)) == pytest.approx(6.25)


def test_error_bound_vanishes_with_eps():
    inst = generate_instance(5, 2, 0)
    assert perturbation_error_bound(perturb(inst, 1e-9)) < 1e-6


def test_oracle_tours_distort_within_bound():
    inst = generate_instance(8, 2, 21)
    p = perturb(inst, 0.5)
    snapped = [p.snapped_original(i) for i in range(inst.n)]
    sol = exact_solve(inst)
    moved = max(tour_length(snapped, t) for t in sol.tours)
    assert abs(moved - sol.makespan) <= perturbation_error_bound(p)


@settings(max_examples=60, deadline=None)
@given(
    st.lists(st.tuples(st.floats(-1e3, 1e3), st.floats(-1e3, 1e3)), min_size=2, max_size=12),
    st.sampled_from([0.1, 0.3, 0.5, 0.9]),
    st.integers(1, 3),
)
def test_snapping_laws(cities, eps, k):
    k = min(k, len(cities))
    inst = Instance(cities, 0, k)
    try:
        p = perturb(inst, eps)
    except TrivialInstance:
        return
    pts = set(p.city_map)
    for x, y in pts:
        assert x % 8 == 0 and y % 8 == 0
        assert 0 <= x <= p.L and 0 <= y <= p.L
    for a, b in itertools.combinations(pts, 2):
        assert math.dist(a, b) >= 8
    for i, c in enumerate(inst.cities):
        assert math.dist(c, p.snapped_original(i)) <= snap_radius(p) * (1 + 1e-9) + 1e-9


def test_every_fixed_tour_distorts_within_bound():
    rng = random.Random(4)
    for _ in range(30):
        inst = generate_instance(rng.randint(2, 20), 1, rng.randrange(10**6))
        p = perturb(inst, rng.choice([0.2, 0.5, 0.8]))
        snapped = [p.snapped_original(i) for i in range(inst.n)]
        order = [0] + rng.sample(range(1, inst.n), inst.n - 1) + [0]
        assert abs(tour_length(snapped, order) - tour_length(inst.cities, order)) <= perturbation_error_bound(p)
