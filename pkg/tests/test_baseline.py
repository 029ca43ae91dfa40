import math

import pytest

from mmtsp.baseline import BaselineConfig, heuristic_solve, two_opt
from mmtsp.instance import Instance, generate_instance, tour_length, validate_solution


def test_single_city():
    sol = heuristic_solve(Instance([(0.0, 0.0)], 0, 1))
    assert sol.makespan == 0


def test_two_cities_out_and_back():
    sol = heuristic_solve(Instance([(0.0, 0.0), (3.0, 4.0)], 0, 1))
    assert sol.makespan == pytest.approx(10.0)


def test_corners_within_twice_optimum(corners):
    assert heuristic_solve(corners).makespan <= 2 * (2 + math.sqrt(2))


@pytest.mark.parametrize("seed", range(10))
def test_feasible(seed):
    inst = generate_instance(25, 1 + seed % 4, seed)
    assert validate_solution(inst, heuristic_solve(inst)) == []


def test_two_opt_never_lengthens():
    inst = generate_instance(20, 1, 3)
    tour = list(range(20)) + [0]
    assert tour_length(inst.cities, two_opt(inst, tour, 20)) <= tour_length(inst.cities, tour)


def test_config_validation():
    with pytest.raises(ValueError):
        BaselineConfig(two_opt_rounds=-1)
