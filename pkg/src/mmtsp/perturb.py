"""Snap cities onto a coarse integer grid with separation 8 and a power-of-two extent."""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

from .instance import Instance

GridPoint = tuple[int, int]


class TrivialInstance(Exception):
    """All cities coincide; the zero-length solution is optimal."""


@dataclass(frozen=True)
class PerturbedInstance:
    city_map: tuple[GridPoint, ...]  # original index -> grid point
    depot: int
    k: int
    L: int  # power of two >= L_raw
    L_raw: int  # ceil(64kn/eps)
    scale_factor: Fraction  # grid unit in original units, eps*L0/(64kn)
    L0: float
    eps: float
    origin: tuple[float, float]
    forced_assignments: dict[int, int]

    @property
    def n(self) -> int:
        return len(self.city_map)

    @property
    def grid_cities(self) -> tuple[GridPoint, ...]:
        """Distinct grid points, sorted."""
        return tuple(sorted(set(self.city_map)))

    @property
    def depot_point(self) -> GridPoint:
        return self.city_map[self.depot]

    def cities_at(self) -> dict[GridPoint, list[int]]:
        groups: dict[GridPoint, list[int]] = {}
        for i, pt in enumerate(self.city_map):
            groups.setdefault(pt, []).append(i)
        return groups

    def snapped_original(self, i: int) -> tuple[float, float]:
        """Original-unit coordinates of city i after snapping."""
        gx, gy = self.city_map[i]
        sf = self.scale_factor
        return (self.origin[0] + float(gx * sf), self.origin[1] + float(gy * sf))


def next_power_of_two(v: int) -> int:
    return 1 << max(0, (int(v) - 1).bit_length())


def perturb(inst: Instance, eps: float) -> PerturbedInstance:
    if not 0 < eps < 1:
        raise ValueError("eps must lie in (0, 1)")
    xs = [p[0] for p in inst.cities]
    ys = [p[1] for p in inst.cities]
    xmin, ymin = min(xs), min(ys)
    L0 = max(max(xs) - xmin, max(ys) - ymin)
    if L0 <= 0:
        raise TrivialInstance("all cities coincide")
    n, k = inst.n, inst.k
    cell = eps * L0 / (8 * k * n)
    # One grid cell becomes 8 grid units after dividing by eps*L0/(64kn).
    city_map = tuple(
        (8 * round((x - xmin) / cell), 8 * round((y - ymin) / cell)) for x, y in inst.cities
    )
    L_raw = math.ceil(64 * k * n / eps)
    L = next_power_of_two(L_raw)
    scale = Fraction(eps) * Fraction(L0) / (64 * k * n)
    return PerturbedInstance(
        city_map=city_map,
        depot=inst.depot,
        k=k,
        L=L,
        L_raw=L_raw,
        scale_factor=scale,
        L0=L0,
        eps=eps,
        origin=(xmin, ymin),
        forced_assignments=dict(inst.forced_assignments),
    )


def unperturb_length(p: PerturbedInstance, grid_length: float) -> float:
    if grid_length < 0:
        raise ValueError("grid_length must be non-negative")
    return float(Fraction(grid_length) * p.scale_factor)


def perturbation_error_bound(p: PerturbedInstance, opt_lower: float | None = None) -> float:
    """Worst-case makespan increase caused by snapping: eps*L0/(4k).

    ``opt_lower`` is accepted for symmetry with callers holding a lower bound on
    the optimum; the bound itself does not depend on it.
    """
    return p.eps * p.L0 / (4 * p.k)


def snap_radius(p: PerturbedInstance) -> float:
    """Largest distance any city moved, in original units (half a cell diagonal)."""
    cell = p.eps * p.L0 / (8 * p.k * p.n)
    return cell * math.sqrt(2) / 2
