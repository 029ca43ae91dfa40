"""Exhaustive optimum over portal-respecting multi-tours on a fixed quadtree.

Independent of the dynamic program: distances come from Dijkstra over (position, cell)
states instead of per-square lattice matrices, and tours are enumerated explicitly.

Model.  Cells are the leaves plus the empty quadrants of internal squares.  A route may
move freely inside a cell between its portals, and may pass from one cell to another at
a position only when that position is a portal of every square holding exactly one of
the two cells.  Between two consecutive stops u, v a route leaves the squares around u
one by one (innermost first), travels inside the smallest square it did not leave, and
enters the squares around v.  Only such first exits and last entries bound a stretch of
tour that visits a city inside the square, so only they count against the limit of r
per salesman, square and edge (a corner counts on both of its edges).
"""

from __future__ import annotations

import heapq
import itertools
import math
from dataclasses import dataclass
from fractions import Fraction

from .dissection import EDGES, PtasParams, ShiftedQuadtree, SquareNode
from .perturb import GridPoint, PerturbedInstance

MAX_POINTS = 5
MAX_K = 2
MAX_DEPTH = 2
MAX_M = 2
MAX_R = 2

Pos = tuple[Fraction, Fraction]


@dataclass(frozen=True)
class _Square:
    x0: int
    y0: int
    side: int

    def portals(self, m: int) -> dict[Pos, tuple[int, ...]]:
        """Portal positions mapped to the indices (into EDGES) of the edges holding them."""
        out: dict[Pos, list[int]] = {}
        step = Fraction(self.side, m)
        x0, y0, s = Fraction(self.x0), Fraction(self.y0), self.side
        for j in range(m + 1):
            t = j * step
            for e, pos in enumerate(((x0 + t, y0), (x0 + s, y0 + t), (x0 + t, y0 + s), (x0, y0 + t))):
                out.setdefault(pos, []).append(e)
        return {pos: tuple(sorted(es)) for pos, es in out.items()}

    def holds(self, other: "_Square") -> bool:
        return (
            self.x0 <= other.x0
            and self.y0 <= other.y0
            and other.x0 + other.side <= self.x0 + self.side
            and other.y0 + other.side <= self.y0 + self.side
        )


def _dist(a: tuple, b: tuple) -> float:
    return math.hypot(float(a[0]) - float(b[0]), float(a[1]) - float(b[1]))


class _Geometry:
    def __init__(self, tree: ShiftedQuadtree, m: int):
        self.m = m
        self.nodes: list[SquareNode] = tree.nodes()
        self.node_sq = {id(n): _Square(n.x0, n.y0, n.side) for n in self.nodes}
        self.parent: dict[int, SquareNode | None] = {id(tree.root): None}
        cells: list[tuple[_Square, list[_Square]]] = []
        for node in self.nodes:
            for c in node.children:
                self.parent[id(c)] = node
            if node.is_leaf:
                cells.append((self.node_sq[id(node)], self._chain(node)))
            else:
                half = node.side // 2
                taken = {c.quadrant for c in node.children}
                for q in range(4):
                    if q not in taken:
                        sq = _Square(node.x0 + half * (q & 1), node.y0 + half * (q >> 1), half)
                        cells.append((sq, [sq] + self._chain(node)))
        self.cells = cells
        self.portal_cache: dict[_Square, dict[Pos, tuple[int, ...]]] = {}
        self.at: dict[Pos, list[int]] = {}
        for ci, (sq, _) in enumerate(cells):
            for pos in self.portals(sq):
                self.at.setdefault(pos, []).append(ci)
        self.sssp_cache: dict[tuple[int, Pos], dict[Pos, float]] = {}

    def _chain(self, node: SquareNode) -> list[_Square]:
        out = []
        cur: SquareNode | None = node
        while cur is not None:
            out.append(self.node_sq[id(cur)])
            cur = self.parent[id(cur)]
        return out

    def portals(self, sq: _Square) -> dict[Pos, tuple[int, ...]]:
        got = self.portal_cache.get(sq)
        if got is None:
            got = sq.portals(self.m)
            self.portal_cache[sq] = got
        return got

    def _may_cross(self, pos: Pos, c1: int, c2: int) -> bool:
        a, b = set(self.cells[c1][1]), set(self.cells[c2][1])
        return all(pos in self.portals(sq) for sq in a ^ b)

    def confined(self, region: SquareNode, src: Pos) -> dict[Pos, float]:
        """Shortest distances from ``src`` to every reachable position, staying inside ``region``."""
        key = (id(region), src)
        got = self.sssp_cache.get(key)
        if got is not None:
            return got
        rsq = self.node_sq[id(region)]
        inside = {ci for ci, (sq, _) in enumerate(self.cells) if rsq.holds(sq)}
        best: dict[tuple[Pos, int], float] = {}
        heap: list[tuple[float, int, Pos, int]] = []
        tie = itertools.count()
        for ci in self.at.get(src, []):
            if ci in inside:
                best[(src, ci)] = 0.0
                heapq.heappush(heap, (0.0, next(tie), src, ci))
        out: dict[Pos, float] = {}
        while heap:
            dv, _, pos, ci = heapq.heappop(heap)
            if dv > best.get((pos, ci), math.inf):
                continue
            if dv < out.get(pos, math.inf):
                out[pos] = dv
            for q in self.portals(self.cells[ci][0]):
                nd = dv + _dist(pos, q)
                if nd < best.get((q, ci), math.inf):
                    best[(q, ci)] = nd
                    heapq.heappush(heap, (nd, next(tie), q, ci))
            for cj in self.at.get(pos, []):
                if cj != ci and cj in inside and dv < best.get((pos, cj), math.inf) and self._may_cross(pos, ci, cj):
                    best[(pos, cj)] = dv
                    heapq.heappush(heap, (dv, next(tie), pos, cj))
        self.sssp_cache[key] = out
        return out


def _chain_of(geo: _Geometry, tree: ShiftedQuadtree, pt: GridPoint) -> list[SquareNode]:
    """Squares holding ``pt``, indexed by level (root first)."""
    out = []
    node: SquareNode | None = tree.leaf_of(pt)
    while node is not None:
        out.append(node)
        node = geo.parent[id(node)]
    return out[::-1]


def _leg_options(geo: _Geometry, tree: ShiftedQuadtree, u: GridPoint, v: GridPoint) -> list[tuple[float, tuple]]:
    """Cheapest route cost for every distinct crossing-count vector, Pareto-filtered."""
    cu, cv = _chain_of(geo, tree, u), _chain_of(geo, tree, v)
    du, dv = len(cu) - 1, len(cv) - 1
    lca = max(l for l in range(min(du, dv) + 1) if cu[l] is cv[l])
    best: dict[tuple, float] = {}
    for top in range(1, lca + 2):
        # exits of cu[du], ..., cu[top]; entries of cv[top], ..., cv[dv]
        exit_levels = list(range(du, top - 1, -1))
        entry_levels = list(range(top, dv + 1))
        exit_choices = [list(geo.portals(geo.node_sq[id(cu[l])]).items()) for l in exit_levels]
        entry_choices = [list(geo.portals(geo.node_sq[id(cv[l])]).items()) for l in entry_levels]
        region = cu[top - 1]
        for exits in itertools.product(*exit_choices):
            cost = _dist(u, exits[0][0])
            for i in range(1, len(exits)):
                cost += geo.confined(cu[exit_levels[i]], exits[i - 1][0]).get(exits[i][0], math.inf)
            if cost == math.inf:
                continue
            far = geo.confined(region, exits[-1][0])
            for entries in itertools.product(*entry_choices):
                c = cost + far.get(entries[0][0], math.inf)
                for i in range(1, len(entries)):
                    c += geo.confined(cv[entry_levels[i - 1]], entries[i - 1][0]).get(entries[i][0], math.inf)
                c += _dist(entries[-1][0], v)
                if c == math.inf:
                    continue
                counts: dict[tuple[int, int], int] = {}
                for lv, (_, es) in zip(exit_levels, exits):
                    for e in es:
                        counts[(id(cu[lv]), e)] = counts.get((id(cu[lv]), e), 0) + 1
                for lv, (_, es) in zip(entry_levels, entries):
                    for e in es:
                        counts[(id(cv[lv]), e)] = counts.get((id(cv[lv]), e), 0) + 1
                key = tuple(sorted(counts.items()))
                if c < best.get(key, math.inf):
                    best[key] = c
    items = sorted(best.items(), key=lambda kv: kv[1])
    front: list[tuple[float, tuple]] = []
    for key, c in items:
        kd = dict(key)
        if any(all(kd.get(x, 0) >= y for x, y in fk) for _, fk in front):
            continue
        front.append((c, key))
    return front


def _tour_cost(legs: list[list[tuple[float, tuple]]], r: int, bound: float) -> float:
    """Cheapest choice of one option per leg keeping every count at most r (branch and bound)."""
    floor = [0.0] * (len(legs) + 1)
    for i in range(len(legs) - 1, -1, -1):
        floor[i] = floor[i + 1] + (legs[i][0][0] if legs[i] else math.inf)
    best = bound

    def rec(i: int, acc: float, counts: dict) -> None:
        nonlocal best
        if i == len(legs):
            best = min(best, acc)
            return
        for c, key in legs[i]:
            if acc + c + floor[i + 1] >= best:
                break
            if any(counts.get(x, 0) + y > r for x, y in key):
                continue
            for x, y in key:
                counts[x] = counts.get(x, 0) + y
            rec(i + 1, acc + c, counts)
            for x, y in key:
                counts[x] -= y

    rec(0, 0.0, {})
    return best


def portal_bruteforce(tree: ShiftedQuadtree, p: PerturbedInstance, params: PtasParams) -> float:
    """Optimal makespan, in grid units and without rounding, over portal-respecting tours."""
    pts = sorted(set(p.grid_cities))
    if len(pts) > MAX_POINTS or p.k > MAX_K or tree.depth > MAX_DEPTH or params.m > MAX_M or params.r > MAX_R:
        raise ValueError(
            f"portal_bruteforce handles at most {MAX_POINTS} points, k <= {MAX_K}, depth <= {MAX_DEPTH}, "
            f"m <= {MAX_M}, r <= {MAX_R}"
        )
    depot = p.depot_point
    others = [q for q in pts if q != depot]
    forced: dict[GridPoint, set[int]] = {}
    for c, h in p.forced_assignments.items():
        forced.setdefault(p.city_map[c], set()).add(h)
    if any(len(hs) > 1 for q, hs in forced.items() if q != depot):
        raise ValueError("portal_bruteforce needs at most one forced salesman per grid point")
    geo = _Geometry(tree, params.m)
    leg_cache: dict[tuple[GridPoint, GridPoint], list] = {}

    def leg(u: GridPoint, v: GridPoint) -> list:
        got = leg_cache.get((u, v))
        if got is None:
            got = _leg_options(geo, tree, u, v)
            leg_cache[(u, v)] = got
        return got

    tour_cache: dict[tuple[GridPoint, ...], float] = {}

    def tour(stops: tuple[GridPoint, ...]) -> float:
        if not stops:
            return 0.0
        got = tour_cache.get(stops)
        if got is not None:
            return got
        best = math.inf
        for perm in itertools.permutations(stops):
            seq = (depot,) + perm + (depot,)
            best = _tour_cost([leg(a, b) for a, b in zip(seq, seq[1:])], params.r, best)
        tour_cache[stops] = best
        return best

    best = math.inf
    for assign in itertools.product(range(p.k), repeat=len(others)):
        if any(q in forced and assign[i] not in forced[q] for i, q in enumerate(others)):
            continue
        groups = [tuple(q for q, h in zip(others, assign) if h == s) for s in range(p.k)]
        best = min(best, max(tour(g) for g in groups))
    return best
