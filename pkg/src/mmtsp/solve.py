"""End-to-end pipeline: snap, dissect, run the DP, rebuild tours; plus exact and zig-zag solvers."""

from __future__ import annotations

import math
import random
import statistics
import time
from dataclasses import dataclass, field
from typing import Any, Sequence

from .dissection import (
    PtasParams,
    Shift,
    ShiftedQuadtree,
    build_quadtree,
    enumerate_shifts,
    override_params,
    theory_params,
)
from .dpcore import DEFAULT, DpOptions, DpResult, Infeasible, run_dp
from .instance import Instance, Solution, solution_from_tours, tour_length
from .perturb import GridPoint, PerturbedInstance, TrivialInstance, perturb, unperturb_length

MAX_RUNNABLE_M = 64


@dataclass(frozen=True)
class Fixed:
    shift: Shift


@dataclass(frozen=True)
class RandomShift:
    seed: int


@dataclass(frozen=True)
class Derandomized:
    stride: int | None = None  # None: a stride giving 64 shifts


ShiftMode = Fixed | RandomShift | Derandomized


@dataclass
class SolveReport:
    solution: Solution
    shift_used: Shift | None
    grid_makespan: float  # shortcut tours measured on the snapped grid
    path_makespan: float  # portal path system found by the DP, before shortcutting
    rounded_makespan_tick: int
    table_stats: list[dict[str, int]]
    wall_time: float
    perturbed: PerturbedInstance | None = None
    params: PtasParams | None = None
    tree: ShiftedQuadtree | None = None
    grid_lengths: list[float] = field(default_factory=list)
    path_lengths: list[float] = field(default_factory=list)


def resolve_params(p: PerturbedInstance, overrides: Any = None) -> PtasParams:
    """Theory constants, or small executable (m, r[, alpha]) when given."""
    if overrides is None:
        params = theory_params(p.eps, p.k, p.L)
        if params.m > MAX_RUNNABLE_M:
            raise ValueError(
                f"theory parameters are not executable (m={params.m}, r={params.r}); pass m and r explicitly"
            )
        return params
    if isinstance(overrides, dict):
        return override_params(p.eps, p.L, overrides["m"], overrides["r"], overrides.get("alpha"))
    m, r, *rest = overrides
    return override_params(p.eps, p.L, m, r, rest[0] if rest else None)


def _default_stride(L: int) -> int:
    return max(1, L // 8)


def shifts_for(mode: ShiftMode, L: int) -> list[Shift]:
    if isinstance(mode, Fixed):
        return [mode.shift]
    if isinstance(mode, RandomShift):
        return enumerate_shifts(L, "sampled", seed=mode.seed, count=1)
    stride = _default_stride(L) if mode.stride is None else mode.stride
    return enumerate_shifts(L, "exhaustive", stride=stride)


def trivial_solution(inst: Instance, meta: dict | None = None) -> Solution:
    """All cities sit on the depot: every tour has length zero."""
    stops: list[list[int]] = [[] for _ in range(inst.k)]
    for c in range(inst.n):
        if c != inst.depot:
            stops[inst.forced_assignments.get(c, 0)].append(c)
    tours = [[inst.depot] + s + [inst.depot] if s else [inst.depot] for s in stops]
    return solution_from_tours(inst, tours, meta)


def tours_from_visits(p: PerturbedInstance, visits: Sequence[Sequence[GridPoint]]) -> list[list[int]]:
    """City-index tours from per-salesman visit sequences, shortcutting repeated points."""
    k = p.k
    groups = p.cities_at()
    visitors: dict[GridPoint, list[int]] = {}
    for h, seq in enumerate(visits):
        for pt in seq:
            lst = visitors.setdefault(pt, [])
            if h not in lst:
                lst.append(h)
    owner: dict[int, int] = {}
    for pt, cities in groups.items():
        vs = sorted(visitors.get(pt, []))
        for c in cities:
            if c == p.depot:
                continue
            forced = p.forced_assignments.get(c)
            if forced is not None:
                owner[c] = forced
            elif vs:
                owner[c] = vs[0]
            else:
                raise AssertionError(f"grid point {pt} left unvisited")
    tours: list[list[int]] = []
    for h in range(k):
        seq = [p.depot]
        placed: set[int] = set()
        order = list(visits[h]) if visits[h] else []
        if p.depot_point not in order:
            order = [p.depot_point] + order
        for pt in order:
            for c in groups[pt]:
                if c != p.depot and owner.get(c) == h and c not in placed:
                    seq.append(c)
                    placed.add(c)
        seq.append(p.depot)
        tours.append(seq if len(seq) > 2 else [p.depot])
    return tours


def _grid_length(p: PerturbedInstance, tour: Sequence[int]) -> float:
    return tour_length(p.city_map, tour)


def solve_fixed(
    inst: Instance,
    p: PerturbedInstance,
    params: PtasParams,
    shift: Shift,
    options: DpOptions = DEFAULT,
) -> SolveReport:
    t0 = time.perf_counter()
    tree = build_quadtree(p, shift, params)
    try:
        res: DpResult = run_dp(tree, p, params, options)
    except Infeasible:
        return _zigzag_report(inst, p, params, shift, tree, t0)
    tours = tours_from_visits(p, res.visits)
    grid_lengths = [_grid_length(p, t) for t in tours]
    meta = {
        "solver": "ptas",
        "eps": p.eps,
        "m": params.m,
        "r": params.r,
        "alpha": params.alpha,
        "params_mode": params.mode,
        "shift": [shift.a, shift.b],
        "L": p.L,
        "exact_dp": options.exact,
        "dp_attempt": res.attempt,
    }
    sol = solution_from_tours(inst, tours, meta)
    return SolveReport(
        solution=sol,
        shift_used=shift,
        grid_makespan=max(grid_lengths),
        path_makespan=res.grid_makespan,
        rounded_makespan_tick=res.makespan_tick,
        table_stats=res.stats,
        wall_time=time.perf_counter() - t0,
        perturbed=p,
        params=params,
        tree=tree,
        grid_lengths=grid_lengths,
        path_lengths=list(res.grid_lengths),
    )


def _zigzag_order(p: PerturbedInstance) -> list[GridPoint]:
    rows: dict[int, list[GridPoint]] = {}
    for pt in p.cities_at():
        rows.setdefault(pt[1], []).append(pt)
    order: list[GridPoint] = []
    for i, y in enumerate(sorted(rows)):
        order.extend(sorted(rows[y], reverse=bool(i % 2)))
    start = order.index(p.depot_point)
    return order[start:] + order[:start]


def _zigzag_report(
    inst: Instance, p: PerturbedInstance, params: PtasParams, shift: Shift, tree: ShiftedQuadtree, t0: float
) -> SolveReport:
    """Last resort when every pruning level leaves the root open: salesmen share the zig-zag order."""
    order = _zigzag_order(p)
    visits = [order] + [[] for _ in range(p.k - 1)]
    for c, h in p.forced_assignments.items():
        if h and c != p.depot:
            visits[h].append(p.city_map[c])
    tours = tours_from_visits(p, visits)
    grid_lengths = [_grid_length(p, t) for t in tours]
    meta = {
        "solver": "ptas",
        "eps": p.eps,
        "m": params.m,
        "r": params.r,
        "alpha": params.alpha,
        "params_mode": params.mode,
        "shift": [shift.a, shift.b],
        "L": p.L,
        "fallback": "zigzag",
    }
    sol = solution_from_tours(inst, tours, meta)
    return SolveReport(
        sol, shift, max(grid_lengths), max(grid_lengths), -1, [], time.perf_counter() - t0, p, params, tree, grid_lengths, grid_lengths
    )


def ptas_solve(
    inst: Instance,
    eps: float,
    shift_mode: ShiftMode = Derandomized(),
    overrides: Any = None,
    options: DpOptions = DEFAULT,
) -> SolveReport:
    t0 = time.perf_counter()
    try:
        p = perturb(inst, eps)
    except TrivialInstance:
        sol = trivial_solution(inst, {"solver": "ptas", "eps": eps, "trivial": True})
        return SolveReport(sol, None, 0.0, 0.0, -1, [], time.perf_counter() - t0)
    params = resolve_params(p, overrides)
    best: SolveReport | None = None
    for shift in shifts_for(shift_mode, p.L):
        rep = solve_fixed(inst, p, params, shift, options)
        if best is None or rep.solution.makespan < best.solution.makespan:
            best = rep
    assert best is not None
    best.solution.meta["shift_mode"] = type(shift_mode).__name__.lower()
    best.wall_time = time.perf_counter() - t0
    return best


# ---------------------------------------------------------------------------
# exact oracle

EXACT_MAX_N = 10
EXACT_MAX_K = 3


def exact_solve(inst: Instance) -> Solution:
    n, k = inst.n, inst.k
    if n > EXACT_MAX_N or k > EXACT_MAX_K:
        raise ValueError(f"exact_solve handles at most {EXACT_MAX_N} cities and {EXACT_MAX_K} salesmen")
    d = inst.depot
    others = [c for c in range(n) if c != d]
    q = len(others)
    pts = inst.cities
    dist = [[math.dist(pts[a], pts[b]) for b in others] for a in others]
    from_depot = [math.dist(pts[d], pts[c]) for c in others]
    full = (1 << q) - 1

    # Held-Karp: path[S][j] = shortest depot -> ... -> j covering S (j in S)
    INF = math.inf
    path = [[INF] * q for _ in range(1 << q)]
    for j in range(q):
        path[1 << j][j] = from_depot[j]
    for S in range(1, 1 << q):
        row = path[S]
        for j in range(q):
            if not S >> j & 1 or row[j] == INF:
                continue
            base = row[j]
            dj = dist[j]
            for t in range(q):
                if S >> t & 1:
                    continue
                T = S | 1 << t
                v = base + dj[t]
                if v < path[T][t]:
                    path[T][t] = v
    tour_cost = [0.0] * (1 << q)
    for S in range(1, 1 << q):
        tour_cost[S] = min(path[S][j] + from_depot[j] for j in range(q) if S >> j & 1)

    forced_mask = [0] * k
    for c, h in inst.forced_assignments.items():
        if c != d:
            forced_mask[h] |= 1 << others.index(c)
    all_forced = 0
    for fm in forced_mask:
        all_forced |= fm

    def allowed(T: int, h: int) -> bool:
        return T & forced_mask[h] == forced_mask[h] and T & (all_forced & ~forced_mask[h]) == 0

    # g[h][S]: best makespan serving S with salesmen 0..h
    g = [[INF] * (1 << q) for _ in range(k)]
    choice = [[0] * (1 << q) for _ in range(k)]
    for S in range(1 << q):
        if allowed(S, 0):
            g[0][S] = tour_cost[S]
            choice[0][S] = S
    for h in range(1, k):
        for S in range(1 << q):
            best, arg = INF, 0
            T = S
            while True:
                if allowed(T, h):
                    v = max(g[h - 1][S ^ T], tour_cost[T])
                    if v < best:
                        best, arg = v, T
                if T == 0:
                    break
                T = (T - 1) & S
            g[h][S], choice[h][S] = best, arg
    if g[k - 1][full] == INF:
        raise AssertionError("forced assignments admit no solution")

    def order(S: int) -> list[int]:
        if S == 0:
            return []
        j = min((j for j in range(q) if S >> j & 1), key=lambda j: path[S][j] + from_depot[j])
        seq = [j]
        while S != 1 << j:
            prev_S = S ^ 1 << j
            cost = path[S][j]
            j = next(
                t for t in range(q) if prev_S >> t & 1 and math.isclose(path[prev_S][t] + dist[t][j], cost, rel_tol=1e-12, abs_tol=1e-12)
            )
            S = prev_S
            seq.append(j)
        return seq[::-1]

    tours: list[list[int]] = [[] for _ in range(k)]
    S = full
    for h in range(k - 1, -1, -1):
        T = choice[h][S]
        seq = order(T)
        tours[h] = [d] + [others[j] for j in seq] + [d] if seq else [d]
        S ^= T
    return solution_from_tours(inst, tours, {"solver": "exact"})


# ---------------------------------------------------------------------------
# zig-zag upper bound


def zigzag_upper_bound(p: PerturbedInstance) -> Solution:
    """One boustrophedon tour over all grid points; lengths are in grid units."""
    groups = p.cities_at()
    order = _zigzag_order(p)
    tour = [p.depot]
    for pt in order:
        tour.extend(c for c in groups[pt] if c != p.depot)
    tour.append(p.depot)
    if len(tour) == 2:
        tour = [p.depot]
    tours = [tour] + [[p.depot] for _ in range(p.k - 1)]
    lengths = [tour_length(p.city_map, t) for t in tours]
    return Solution(tours, lengths, max(lengths), {"solver": "zigzag", "units": "grid"})


# ---------------------------------------------------------------------------
# shift statistics


def shift_sensitivity(
    inst: Instance,
    eps: float,
    shifts: Sequence[Shift],
    overrides: Any = None,
    options: DpOptions = DEFAULT,
) -> dict[str, Any]:
    if not shifts:
        raise ValueError("shifts must be nonempty")
    p = perturb(inst, eps)
    params = resolve_params(p, overrides)
    spans = [solve_fixed(inst, p, params, s, options).solution.makespan for s in shifts]
    lo = min(spans)
    tol = (1 + eps / 4) * lo
    within = sum(1 for v in spans if v <= tol * (1 + 1e-12))
    return {
        "makespans": spans,
        "min": lo,
        "median": statistics.median(spans),
        "fraction_within": within / len(spans),
    }


def random_shift(L: int, seed: int) -> Shift:
    rng = random.Random(seed)
    return Shift(rng.randrange(L), rng.randrange(L))
