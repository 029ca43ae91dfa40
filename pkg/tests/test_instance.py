import json

import pytest

from mmtsp.instance import (
    Instance,
    InstanceError,
    Solution,
    generate_instance,
    load_instance,
    load_solution,
    solution_from_tours,
    store_instance,
    store_solution,
    validate_solution,
)


def _write(tmp_path, payload) -> str:
    path = tmp_path / "inst.json"
    path.write_text(json.dumps(payload))
    return str(path)


def test_load_four_cities(tmp_path):
    inst = load_instance(_write(tmp_path, {"cities": [[0, 0], [1, 0], [1, 1], [0, 1]], "depot": 0, "k": 2}))
    assert (inst.n, inst.k, inst.depot) == (4, 2, 0)


def test_load_rejects_bad_depot(tmp_path):
    with pytest.raises(InstanceError, match="depot out of range"):
        load_instance(_write(tmp_path, {"cities": [[0, 0], [1, 0], [1, 1], [0, 1]], "depot": 7, "k": 2}))


def test_load_rejects_zero_salesmen(tmp_path):
    with pytest.raises(InstanceError, match="k must be ≥ 1"):
        load_instance(_write(tmp_path, {"cities": [[0, 0], [1, 0]], "depot": 0, "k": 0}))


@pytest.mark.parametrize(
    "payload, field",
    [
        ({"depot": 0, "k": 1}, "cities"),
        ({"cities": [[0, 0]], "k": 1}, "depot"),
        ({"cities": [[0, 0, 1]], "depot": 0, "k": 1}, "cities"),
        ({"cities": [[0, 0]], "depot": 0, "k": 1, "forced": {"0": 3}}, "forced"),
        ({"cities": [[0, 0]], "depot": 0, "k": 2}, "k must not exceed"),
    ],
)
def test_load_names_the_bad_field(tmp_path, payload, field):
    with pytest.raises(InstanceError, match=field):
        load_instance(_write(tmp_path, payload))


def test_roundtrip_with_forced(tmp_path):
    inst = Instance([(0.1, 0.2), (3.3, 4.4), (5.0, 1.0)], 1, 2, {2: 1})
    path = tmp_path / "x.json"
    store_instance(inst, path)
    assert load_instance(path) == inst


def test_solution_roundtrip_keeps_reals_exact(tmp_path):
    inst = generate_instance(5, 2, 3)
    sol = solution_from_tours(inst, [[0, 1, 2, 0], [0, 3, 4, 0]], {"solver": "test"})
    path = tmp_path / "s.json"
    store_solution(sol, path)
    back = load_solution(path)
    assert back.lengths == sol.lengths and back.makespan == sol.makespan


def test_generate_is_deterministic():
    assert generate_instance(5, 2, 7, 100) == generate_instance(5, 2, 7, 100)


def test_generate_single_city():
    inst = generate_instance(1, 1, 0, 1)
    assert inst.n == 1 and inst.depot == 0


def test_generate_rejects_more_salesmen_than_cities():
    with pytest.raises(InstanceError):
        generate_instance(3, 5, 0, 100)


def test_validate_accepts_valid(corners):
    sol = solution_from_tours(corners, [[0, 1, 0], [0, 3, 2, 0]])
    assert validate_solution(corners, sol) == []


def test_validate_reports_missing_city(corners):
    sol = solution_from_tours(corners, [[0, 1, 0], [0, 2, 0]])
    assert validate_solution(corners, sol) == ["city 3 unvisited"]


def test_validate_reports_bad_start(corners):
    sol = solution_from_tours(corners, [[0, 1, 0], [3, 2, 0]])
    assert "tour 1 does not start at depot" in validate_solution(corners, sol)


def test_validate_checks_lengths_and_forced(corners):
    forced = Instance(corners.cities, 0, 2, {3: 0})
    good = solution_from_tours(forced, [[0, 1, 0], [0, 3, 2, 0]])
    assert validate_solution(forced, good) == ["city 3 forced to tour 0 but not in it"]
    bad = Solution(good.tours, [good.lengths[0] + 1e-3, good.lengths[1]], good.makespan)
    assert any("differs from recomputed" in v for v in validate_solution(corners, bad))


def test_empty_tour_is_singleton_depot(corners):
    sol = solution_from_tours(corners, [[0], [0, 1, 2, 3, 0]])
    assert sol.lengths[0] == 0.0 and validate_solution(corners, sol) == []
