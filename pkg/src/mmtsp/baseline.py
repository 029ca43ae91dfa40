"""Cheap comparison solver: angular sectors, nearest-neighbour order, then 2-opt."""

from __future__ import annotations

import math
import random
from dataclasses import dataclass

from .instance import Instance, Solution, solution_from_tours, tour_length


@dataclass(frozen=True)
class BaselineConfig:
    two_opt_rounds: int = 50
    seed: int = 0

    def __post_init__(self) -> None:
        if self.two_opt_rounds < 0:
            raise ValueError("two_opt_rounds must be >= 0")


def _nearest_neighbour(inst: Instance, stops: list[int]) -> list[int]:
    pts = inst.cities
    tour = [inst.depot]
    left = list(stops)
    while left:
        here = pts[tour[-1]]
        nxt = min(left, key=lambda c: (math.dist(here, pts[c]), c))
        left.remove(nxt)
        tour.append(nxt)
    tour.append(inst.depot)
    return tour


def two_opt(inst: Instance, tour: list[int], rounds: int) -> list[int]:
    pts = inst.cities
    best = list(tour)
    for _ in range(rounds):
        improved = False
        for i in range(1, len(best) - 2):
            for j in range(i + 1, len(best) - 1):
                a, b, c, d = best[i - 1], best[i], best[j], best[j + 1]
                delta = (math.dist(pts[a], pts[c]) + math.dist(pts[b], pts[d])) - (
                    math.dist(pts[a], pts[b]) + math.dist(pts[c], pts[d])
                )
                if delta < -1e-12:
                    before = tour_length(pts, best)
                    best[i : j + 1] = best[i : j + 1][::-1]
                    assert tour_length(pts, best) <= before + 1e-9
                    improved = True
        if not improved:
            break
    return best


def _sector_tours(inst: Instance, order: list[int], cuts: list[int], cfg: BaselineConfig) -> list[list[int]]:
    tours = []
    bounds = [0] + cuts + [len(order)]
    for h in range(inst.k):
        stops = order[bounds[h] : bounds[h + 1]]
        tours.append(two_opt(inst, _nearest_neighbour(inst, stops), cfg.two_opt_rounds) if stops else [inst.depot])
    return tours


def heuristic_solve(inst: Instance, cfg: BaselineConfig = BaselineConfig()) -> Solution:
    rng = random.Random(cfg.seed)
    d = inst.depot
    dx, dy = inst.cities[d]
    free = [c for c in range(inst.n) if c != d and c not in inst.forced_assignments]
    free.sort(key=lambda c: (math.atan2(inst.cities[c][1] - dy, inst.cities[c][0] - dx), c))
    if free:
        # start the angular sweep at a random city so ties in the split are seed-dependent only
        s = rng.randrange(len(free))
        free = free[s:] + free[:s]
    # Balance sectors by a tour-length estimate: out-and-back radius plus the arc between neighbours.
    weights = []
    prev = None
    for c in free:
        w = math.dist(inst.cities[c], (dx, dy)) * 2 / max(1, len(free)) ** 0.5
        if prev is not None:
            w += math.dist(inst.cities[c], inst.cities[prev])
        weights.append(w)
        prev = c
    total = sum(weights)
    cuts, acc, h = [], 0.0, 1
    for i, w in enumerate(weights):
        acc += w
        while h < inst.k and acc >= total * h / inst.k and len(cuts) < inst.k - 1:
            cuts.append(i + 1)
            h += 1
    while len(cuts) < inst.k - 1:
        cuts.append(len(free))
    tours = _sector_tours(inst, free, cuts, cfg)
    forced = {}
    for c, h in inst.forced_assignments.items():
        if c != d:
            forced.setdefault(h, []).append(c)
    if forced:
        for h, cs in forced.items():
            stops = [c for c in tours[h] if c != d] + cs
            tours[h] = two_opt(inst, _nearest_neighbour(inst, stops), cfg.two_opt_rounds)
    return solution_from_tours(inst, tours, {"solver": "baseline", "two_opt_rounds": cfg.two_opt_rounds, "seed": cfg.seed})
