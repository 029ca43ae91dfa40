"""Problem data: instances, solutions, JSON I/O and solution checking."""

from __future__ import annotations

import json
import math
import random
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping, Sequence


class InstanceError(ValueError):
    """Raised when instance data is malformed or violates an invariant."""


Point = tuple[float, float]


@dataclass(frozen=True)
class Instance:
    cities: tuple[Point, ...]
    depot: int
    k: int
    forced_assignments: Mapping[int, int] = field(default_factory=dict)

    def __post_init__(self) -> None:
        cities = tuple((float(x), float(y)) for x, y in self.cities)
        object.__setattr__(self, "cities", cities)
        object.__setattr__(
            self,
            "forced_assignments",
            {int(c): int(h) for c, h in dict(self.forced_assignments).items()},
        )
        if len(cities) < 1:
            raise InstanceError("cities: at least one city is required")
        if not all(math.isfinite(v) for p in cities for v in p):
            raise InstanceError("cities: coordinates must be finite")
        if not isinstance(self.k, int) or self.k < 1:
            raise InstanceError("k must be ≥ 1")
        if not 0 <= self.depot < len(cities):
            raise InstanceError("depot out of range")
        if self.k > len(cities):
            raise InstanceError("k must not exceed the number of cities")
        for c, h in self.forced_assignments.items():
            if not 0 <= c < len(cities):
                raise InstanceError(f"forced: city {c} out of range")
            if not 0 <= h < self.k:
                raise InstanceError(f"forced: salesman {h} out of range for city {c}")

    @property
    def n(self) -> int:
        return len(self.cities)

    def to_dict(self) -> dict[str, Any]:
        d: dict[str, Any] = {
            "cities": [[x, y] for x, y in self.cities],
            "depot": self.depot,
            "k": self.k,
        }
        if self.forced_assignments:
            d["forced"] = {str(c): h for c, h in sorted(self.forced_assignments.items())}
        return d

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "Instance":
        for key in ("cities", "depot", "k"):
            if key not in d:
                raise InstanceError(f"{key}: missing field")
        try:
            cities = [(float(p[0]), float(p[1])) for p in d["cities"]]
            if any(len(p) != 2 for p in d["cities"]):
                raise ValueError
        except (TypeError, ValueError, IndexError) as exc:
            raise InstanceError("cities: expected a list of [x, y] pairs") from exc
        if isinstance(d["depot"], bool) or not isinstance(d["depot"], int):
            raise InstanceError("depot: expected an integer")
        if isinstance(d["k"], bool) or not isinstance(d["k"], int):
            raise InstanceError("k: expected an integer")
        forced_raw = d.get("forced") or {}
        try:
            forced = {int(c): int(h) for c, h in forced_raw.items()}
        except (AttributeError, TypeError, ValueError) as exc:
            raise InstanceError("forced: expected an object mapping city index to salesman") from exc
        return cls(tuple(cities), d["depot"], d["k"], forced)


@dataclass
class Solution:
    tours: list[list[int]]
    lengths: list[float]
    makespan: float
    meta: dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> dict[str, Any]:
        return {
            "tours": [list(t) for t in self.tours],
            "lengths": list(self.lengths),
            "makespan": self.makespan,
            "meta": self.meta,
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "Solution":
        return cls(
            [list(map(int, t)) for t in d["tours"]],
            [float(v) for v in d["lengths"]],
            float(d["makespan"]),
            dict(d.get("meta", {})),
        )


def tour_length(cities: Sequence[Point], tour: Sequence[int]) -> float:
    return math.fsum(
        math.dist(cities[a], cities[b]) for a, b in zip(tour, tour[1:])
    )


def solution_from_tours(inst: Instance, tours: Sequence[Sequence[int]], meta: dict | None = None) -> Solution:
    """Measure the given depot-to-depot tours on the instance's own coordinates."""
    tours = [list(t) for t in tours]
    lengths = [tour_length(inst.cities, t) for t in tours]
    return Solution(tours, lengths, max(lengths), dict(meta or {}))


def _dumps(obj: Any) -> str:
    # repr() of a Python float round-trips exactly (17 significant digits when needed).
    return json.dumps(obj, indent=1, allow_nan=False) + "\n"


def load_instance(path: str | Path) -> Instance:
    try:
        data = json.loads(Path(path).read_text())
    except OSError as exc:
        raise InstanceError(f"cannot read {path}: {exc.strerror}") from exc
    except json.JSONDecodeError as exc:
        raise InstanceError(f"cannot parse {path}: {exc.msg}") from exc
    if not isinstance(data, dict):
        raise InstanceError("instance file must hold a JSON object")
    return Instance.from_dict(data)


def dump_instance(inst: Instance) -> str:
    return _dumps(inst.to_dict())


def store_instance(inst: Instance, path: str | Path) -> None:
    Path(path).write_text(dump_instance(inst))


def dump_solution(sol: Solution) -> str:
    return _dumps(sol.to_dict())


def store_solution(sol: Solution, path: str | Path) -> None:
    Path(path).write_text(dump_solution(sol))


def load_solution(path: str | Path) -> Solution:
    return Solution.from_dict(json.loads(Path(path).read_text()))


def generate_instance(n: int, k: int, seed: int, extent: float = 100.0) -> Instance:
    if n < 1 or k < 1:
        raise InstanceError("n and k must be ≥ 1")
    if k > n:
        raise InstanceError("k must not exceed n")
    rng = random.Random(seed)
    cities = tuple((rng.uniform(0, extent), rng.uniform(0, extent)) for _ in range(n))
    return Instance(cities, 0, k)


def validate_solution(inst: Instance, sol: Solution, rel_tol: float = 1e-9) -> list[str]:
    problems: list[str] = []
    if len(sol.tours) != inst.k:
        problems.append(f"expected {inst.k} tours, got {len(sol.tours)}")
    if len(sol.lengths) != len(sol.tours):
        problems.append("lengths and tours differ in count")
    seen: set[int] = set()
    for h, tour in enumerate(sol.tours):
        if not tour:
            problems.append(f"tour {h} is empty")
            continue
        bad = [c for c in tour if not 0 <= c < inst.n]
        if bad:
            problems.append(f"tour {h} has invalid city index {bad[0]}")
            continue
        if tour[0] != inst.depot:
            problems.append(f"tour {h} does not start at depot")
        if tour[-1] != inst.depot:
            problems.append(f"tour {h} does not end at depot")
        seen.update(tour)
        if h < len(sol.lengths):
            true_len = tour_length(inst.cities, tour)
            if not math.isclose(true_len, sol.lengths[h], rel_tol=rel_tol, abs_tol=1e-12):
                problems.append(f"tour {h} length {sol.lengths[h]!r} differs from recomputed {true_len!r}")
    for c in range(inst.n):
        if c not in seen:
            problems.append(f"city {c} unvisited")
    if sol.lengths:
        if not math.isclose(sol.makespan, max(sol.lengths), rel_tol=rel_tol, abs_tol=1e-12):
            problems.append("makespan is not the maximum tour length")
    for c, h in sorted(inst.forced_assignments.items()):
        if h < len(sol.tours) and c not in sol.tours[h]:
            problems.append(f"city {c} forced to tour {h} but not in it")
    return problems
