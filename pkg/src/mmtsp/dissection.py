"""Shifted quadtree over the snapped grid, with m-regular portals on square edges."""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterator, Literal

from .perturb import GridPoint, PerturbedInstance

EDGES = ("bottom", "right", "top", "left")


@dataclass(frozen=True)
class Shift:
    a: int
    b: int


@dataclass(frozen=True)
class PtasParams:
    eps_prime: float
    g: int
    s: int | None
    m: int
    r: int
    alpha: float
    mode: Literal["theory", "override"] = "theory"


@dataclass(frozen=True)
class PortalRef:
    edge: str
    slot: int


def is_power_of_two(v: int) -> bool:
    return v >= 1 and v & (v - 1) == 0


def _pow2_at_least(v: float) -> int:
    p = 1
    while p < v:
        p *= 2
    return p


def params_for_eps_prime(eps_prime: float, k: int, L: int) -> PtasParams:
    g = 6
    s = math.ceil(12 * g * k / eps_prime)
    log_l = math.log2(L)
    m = _pow2_at_least(2 * s * log_l)
    return PtasParams(eps_prime, g, s, m, s + 4, eps_prime / (2 * log_l), "theory")


def theory_params(eps: float, k: int, L: int) -> PtasParams:
    if not 0 < eps < 1:
        raise ValueError("eps must lie in (0, 1)")
    if not (is_power_of_two(L) and L >= 2):
        raise ValueError("L must be a power of two >= 2")
    return params_for_eps_prime(eps / 4, k, L)


def override_params(eps: float, L: int, m: int, r: int, alpha: float | None = None) -> PtasParams:
    """Small, executable (m, r) in place of the theory constants."""
    if not is_power_of_two(m):
        raise ValueError("m must be a power of two")
    if r < 1:
        raise ValueError("r must be >= 1")
    eps_prime = eps / 4
    if alpha is None:
        alpha = eps_prime / (2 * math.log2(L))
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0, 1)")
    return PtasParams(eps_prime, 6, None, m, r, alpha, "override")


@dataclass(eq=False)
class SquareNode:
    level: int
    x0: int
    y0: int
    side: int
    points: tuple[GridPoint, ...]
    children: list["SquareNode"] = field(default_factory=list)
    quadrant: int = -1  # position inside the parent: 0 SW, 1 SE, 2 NW, 3 NE
    contains_depot: bool = False

    @property
    def is_leaf(self) -> bool:
        return not self.children

    @property
    def bounds(self) -> tuple[int, int, int, int]:
        return (self.x0, self.y0, self.x0 + self.side, self.y0 + self.side)

    def contains(self, pt: GridPoint) -> bool:
        return self.x0 <= pt[0] < self.x0 + self.side and self.y0 <= pt[1] < self.y0 + self.side

    def portals(self, m: int, edge: str) -> list[tuple[Fraction, Fraction]]:
        """The m+1 portal positions on one edge, corners included, in grid units."""
        step = Fraction(self.side, m)
        x0, y0, s = self.x0, self.y0, self.side
        if edge == "bottom":
            return [(x0 + j * step, Fraction(y0)) for j in range(m + 1)]
        if edge == "top":
            return [(x0 + j * step, Fraction(y0 + s)) for j in range(m + 1)]
        if edge == "left":
            return [(Fraction(x0), y0 + j * step) for j in range(m + 1)]
        if edge == "right":
            return [(Fraction(x0 + s), y0 + j * step) for j in range(m + 1)]
        raise ValueError(edge)

    def portal_position(self, m: int, ref: PortalRef) -> tuple[Fraction, Fraction]:
        return self.portals(m, ref.edge)[ref.slot]

    def walk(self) -> Iterator["SquareNode"]:
        yield self
        for c in self.children:
            yield from c.walk()


def boundary_ref(m: int, b: int) -> PortalRef:
    """Canonical (edge, slot) of the b-th boundary point, counter-clockwise from the SW corner."""
    if b < m:
        return PortalRef("bottom", b)
    if b < 2 * m:
        return PortalRef("right", b - m)
    if b < 3 * m:
        return PortalRef("top", 3 * m - b)
    return PortalRef("left", 4 * m - b)


def boundary_offset(m: int, b: int, spacing: int) -> tuple[int, int]:
    """Offset of boundary point b from the square's SW corner, in units of ``spacing``."""
    side = m * spacing
    if b < m:
        return (b * spacing, 0)
    if b < 2 * m:
        return (side, (b - m) * spacing)
    if b < 3 * m:
        return ((3 * m - b) * spacing, side)
    return (0, (4 * m - b) * spacing)


def boundary_edges(m: int, b: int) -> tuple[int, ...]:
    """Indices into EDGES of every edge containing boundary point b (two for corners)."""
    if b == 0:
        return (0, 3)
    if b < m:
        return (0,)
    if b == m:
        return (0, 1)
    if b < 2 * m:
        return (1,)
    if b == 2 * m:
        return (1, 2)
    if b < 3 * m:
        return (2,)
    if b == 3 * m:
        return (2, 3)
    return (3,)


@dataclass
class ShiftedQuadtree:
    root: SquareNode
    shift: Shift
    L: int
    m: int
    depot_point: GridPoint

    def nodes(self) -> list[SquareNode]:
        return list(self.root.walk())

    def levels(self) -> list[list[SquareNode]]:
        out: list[list[SquareNode]] = []
        for node in self.root.walk():
            while len(out) <= node.level:
                out.append([])
            out[node.level].append(node)
        return out

    @property
    def depth(self) -> int:
        return max(node.level for node in self.root.walk())

    def leaf_of(self, pt: GridPoint) -> SquareNode:
        node = self.root
        while node.children:
            node = next(c for c in node.children if c.contains(pt))
        return node


def build_quadtree(p: PerturbedInstance, shift: Shift, params: PtasParams) -> ShiftedQuadtree:
    L = p.L
    if not (0 <= shift.a < L and 0 <= shift.b < L):
        raise ValueError("shift out of range")
    depot_pt = p.depot_point
    root = SquareNode(0, -shift.a, -shift.b, 2 * L, p.grid_cities)
    stack = [root]
    while stack:
        node = stack.pop()
        node.contains_depot = depot_pt in node.points
        if len(node.points) <= 1 or node.side == 1:
            if len(node.points) > 1:
                raise AssertionError("unit square holds several grid points")
            continue
        half = node.side // 2
        buckets: list[list[GridPoint]] = [[], [], [], []]
        for pt in node.points:
            q = (pt[0] >= node.x0 + half) + 2 * (pt[1] >= node.y0 + half)
            buckets[q].append(pt)
        for q, pts in enumerate(buckets):
            if pts:
                child = SquareNode(
                    node.level + 1,
                    node.x0 + half * (q & 1),
                    node.y0 + half * (q >> 1),
                    half,
                    tuple(pts),
                    quadrant=q,
                )
                node.children.append(child)
                stack.append(child)
    return ShiftedQuadtree(root, shift, L, params.m, depot_pt)


def enumerate_shifts(
    L: int,
    mode: Literal["sampled", "exhaustive"] = "exhaustive",
    *,
    stride: int | None = None,
    seed: int | None = None,
    count: int | None = None,
) -> list[Shift]:
    if mode == "exhaustive":
        stride = L if stride is None else stride
        if stride < 1:
            raise ValueError("stride must be >= 1")
        return [Shift(a, b) for a in range(0, L, stride) for b in range(0, L, stride)]
    if mode == "sampled":
        if count is None or count < 0:
            raise ValueError("sampled mode needs a non-negative count")
        rng = random.Random(seed)
        return [Shift(rng.randrange(L), rng.randrange(L)) for _ in range(count)]
    raise ValueError(f"unknown shift mode {mode!r}")


def parent_portals_nest(parent: SquareNode, child: SquareNode, m: int) -> bool:
    """Every parent portal on an edge shared with the child is also a child portal."""
    child_pts = {pt for e in EDGES for pt in child.portals(m, e)}
    cx0, cy0, cx1, cy1 = child.bounds
    for e in EDGES:
        for pt in parent.portals(m, e):
            if cx0 <= pt[0] <= cx1 and cy0 <= pt[1] <= cy1 and pt not in child_pts:
                on_child_edge = pt[0] in (cx0, cx1) or pt[1] in (cy0, cy1)
                if on_child_edge:
                    return False
    return True
