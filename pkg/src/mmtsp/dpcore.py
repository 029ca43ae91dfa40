"""Portal-respecting dynamic program over the shifted quadtree, for k tours sharing a depot.

A configuration records, per salesman, the portal-to-portal paths that visit at
least one point inside the square, plus the rounded length (a tick index on the
square's ladder).  Travel that merely passes through a square is not part of any
configuration; it is priced when paths are linked, by shortest paths over the
portals of the four quadrants ("bridges").
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import Any, Iterable, Sequence

import numpy as np

from .dissection import (
    EDGES,
    PortalRef,
    PtasParams,
    ShiftedQuadtree,
    SquareNode,
    boundary_edges,
    boundary_offset,
    boundary_ref,
)
from .perturb import GridPoint, PerturbedInstance
from .scale import ABSENT, Ladder, make_ladder, round_up, tick_value

INACTIVE: tuple = ()
CLOSED: tuple = ((-1, -1),)


@dataclass(frozen=True)
class DpOptions:
    """Search limits.  ``None`` everywhere means exhaustive."""

    beam: int | None = None  # configurations kept per signature group and node
    exits_per_edge: int | None = None  # nearest exit portals tried per square edge
    union_cap: int | None = None  # partial child combinations kept while folding
    option_cap: int | None = None  # linkings kept per salesman and child combination
    max_fragments: int | None = None  # child paths one salesman may link inside a square
    max_paths: int | None = None  # portal-to-portal paths per salesman and square
    beam_total: int | None = None  # configurations kept per node overall
    combo_depth: int | None = None  # bound on summed per-salesman option ranks in one merge result
    union_total: int | None = None  # partial child combinations kept overall (each pattern's best is always kept)

    @property
    def exact(self) -> bool:
        return all(v is None for v in (self.beam, self.exits_per_edge, self.union_cap, self.option_cap, self.max_fragments, self.max_paths, self.beam_total, self.combo_depth, self.union_total))

    def fallbacks(self) -> list["DpOptions"]:
        """Progressively looser settings to retry with when pruning leaves no closed root."""
        if self.exact:
            return []

        def grow(v: int | None, f: int) -> int | None:
            return None if v is None else v * f

        # fragment limits are cheap to lift, path limits are not
        frags = replace(self, max_fragments=grow(self.max_fragments, 3))
        wider = replace(
            frags,
            beam=grow(self.beam, 2),
            beam_total=grow(self.beam_total, 4),
            combo_depth=grow(self.combo_depth, 2),
            union_total=grow(self.union_total, 8),
            union_cap=grow(self.union_cap, 8),
            option_cap=grow(self.option_cap, 2),
        )
        more_paths = replace(frags, max_paths=grow(self.max_paths, 2))
        return [frags, wider, more_paths]


EXACT = DpOptions()
DEFAULT = DpOptions(
    beam=6, exits_per_edge=1, union_cap=6, option_cap=4, max_fragments=4, max_paths=2, beam_total=24, combo_depth=3,
    union_total=64,
)
# every exit portal, larger beams: a cheap incumbent for exact runs
WIDE = replace(DEFAULT, exits_per_edge=None, max_paths=None, union_cap=24, beam=24, beam_total=96, option_cap=16)


class Config:
    __slots__ = ("struct", "ticks", "trues", "wit")

    def __init__(self, struct: tuple, ticks: tuple[int, ...], trues: tuple[float, ...], wit: Any):
        self.struct = struct
        self.ticks = ticks
        self.trues = trues
        self.wit = wit

    def __repr__(self) -> str:
        return f"Config({self.struct}, C={self.ticks})"


@dataclass(frozen=True)
class Configuration:
    """Public (A, B, C) view of a stored configuration."""

    A: tuple[tuple[PortalRef, ...], ...]
    B: tuple[tuple[tuple[PortalRef, PortalRef], ...], ...]
    C: tuple[int, ...]
    closed: tuple[bool, ...]

    @classmethod
    def from_config(cls, cfg: Config, m: int) -> "Configuration":
        A, B, closed = [], [], []
        for entry in cfg.struct:
            if entry == CLOSED:
                A.append(())
                B.append(())
                closed.append(True)
                continue
            pairs = tuple((boundary_ref(m, p), boundary_ref(m, q)) for p, q in entry)
            A.append(tuple(sorted((x for pq in pairs for x in pq), key=_ref_key)))
            B.append(pairs)
            closed.append(False)
        return cls(tuple(A), tuple(B), cfg.ticks, tuple(closed))


def _ref_key(ref: PortalRef) -> tuple[int, int]:
    return (EDGES.index(ref.edge), ref.slot)


# ---------------------------------------------------------------------------
# geometry templates


@dataclass(frozen=True)
class _Template:
    m: int
    n_local: int
    quad_ids: tuple[np.ndarray, ...]
    parent_ids: np.ndarray
    unit_offsets: np.ndarray  # (4m, 2) boundary offsets of a unit square
    local_offsets: np.ndarray  # (n_local, 2) lattice offsets of an internal square, unit side
    unit_euclid: np.ndarray  # (4m, 4m)
    edges: tuple[tuple[int, ...], ...]  # edges containing each boundary point
    on_edge: tuple[tuple[int, ...], ...]  # boundary points on each edge
    edge_arrays: tuple[np.ndarray, ...]


@lru_cache(maxsize=16)
def _template(m: int) -> _Template:
    nb = 4 * m
    unit = np.array([boundary_offset(m, b, 1) for b in range(nb)], dtype=float) / m
    ids: dict[tuple[int, int], int] = {}

    def local(i: int, j: int) -> int:
        return ids.setdefault((i, j), len(ids))

    quad_ids = []
    for q in range(4):
        qx, qy = q & 1, q >> 1
        arr = []
        for b in range(nb):
            ox, oy = boundary_offset(m, b, 1)
            arr.append(local(qx * m + ox, qy * m + oy))
        quad_ids.append(np.array(arr, dtype=np.intp))
    parent_ids = np.array([ids[boundary_offset(m, b, 2)] for b in range(nb)], dtype=np.intp)
    local_offsets = np.zeros((len(ids), 2))
    for (i, j), v in ids.items():
        local_offsets[v] = (i / (2 * m), j / (2 * m))
    diff = unit[:, None, :] - unit[None, :, :]
    unit_euclid = np.sqrt((diff**2).sum(-1))
    edges = tuple(boundary_edges(m, b) for b in range(nb))
    on_edge = tuple(tuple(b for b in range(nb) if e in edges[b]) for e in range(4))
    edge_arrays = tuple(np.array(ids_, dtype=np.intp) for ids_ in on_edge)
    return _Template(
        m, len(ids), tuple(quad_ids), parent_ids, unit, local_offsets, unit_euclid, edges, on_edge, edge_arrays
    )


def _floyd_warshall(w: np.ndarray) -> np.ndarray:
    d = w.copy()
    for k in range(d.shape[0]):
        np.minimum(d, d[:, k : k + 1] + d[k : k + 1, :], out=d)
    return d


# ---------------------------------------------------------------------------
# DP context


class DpTable:
    """Per-node configuration lists plus the geometry needed to replay witnesses."""

    def __init__(self, tree: ShiftedQuadtree, p: PerturbedInstance, params: PtasParams, options: DpOptions):
        self.tree = tree
        self.p = p
        self.params = params
        self.options = options
        self.bound = math.inf  # root makespan tick value known to be achievable
        self.m = params.m
        self.r = params.r
        self.k = p.k
        self.tpl = _template(params.m)
        self.symmetric = not p.forced_assignments
        self.depot_point = p.depot_point
        self.required: dict[GridPoint, frozenset[int]] = {}
        for c, h in p.forced_assignments.items():
            if c == p.depot:
                continue
            pt = p.city_map[c]
            self.required[pt] = self.required.get(pt, frozenset()) | {h}
        self.configs: dict[int, list[Config]] = {}
        self.passes: dict[int, np.ndarray] = {}
        self.dists: dict[int, np.ndarray] = {}
        self.stats: list[dict[str, int]] = []

    def ladder(self, level: int) -> Ladder:
        return make_ladder(self.tree.L, level, self.m, self.params.alpha)

    def boundary_positions(self, node: SquareNode) -> np.ndarray:
        return np.array([node.x0, node.y0], dtype=float) + self.tpl.unit_offsets * node.side

    # -- exit candidates ---------------------------------------------------

    def _candidates(self, dist_row: np.ndarray) -> list[int]:
        per = self.options.exits_per_edge
        nb = 4 * self.m
        if per is None or per * 4 >= nb:
            return list(range(nb))
        out: set[int] = set()
        for ids in self.tpl.edge_arrays:
            vals = dist_row[ids]
            if per == 1:
                out.add(int(ids[int(vals.argmin())]))
            else:
                out.update(int(b) for b in ids[np.lexsort((ids, vals))[:per]])
        return sorted(out)

    def _pair_ok_matrix(self) -> np.ndarray:
        mat = getattr(self, "_pair_ok_cache", None)
        if mat is None:
            nb = 4 * self.m
            mat = np.array([[self._pair_ok(p, q) for q in range(nb)] for p in range(nb)], dtype=bool)
            self._pair_ok_cache = mat
        return mat

    def _edge_ok(self, counts: list[int], b: int) -> bool:
        return all(counts[e] < self.r for e in self.tpl.edges[b])

    # -- canonical form ------------------------------------------------------

    def _finish(self, struct: list, ticks: list[int], trues: list[float], wit_fn) -> Config:
        """Build a config, relabelling salesmen into sorted order when they are interchangeable."""
        if self.symmetric and self.k > 1:
            order = sorted(range(self.k), key=lambda h: (struct[h], ticks[h], trues[h]))
        else:
            order = list(range(self.k))
        return Config(
            tuple(struct[h] for h in order),
            tuple(ticks[h] for h in order),
            tuple(trues[h] for h in order),
            wit_fn(order),
        )

    # -- leaves ------------------------------------------------------------------

    def solve_leaf(self, node: SquareNode) -> list[Config]:
        if not node.points:
            return [Config((INACTIVE,) * self.k, (ABSENT,) * self.k, (0.0,) * self.k, None)]
        if len(node.points) != 1:
            raise AssertionError("leaf must hold exactly one grid point")
        pt = node.points[0]
        bpos = self.boundary_positions(node)
        dist = np.hypot(bpos[:, 0] - pt[0], bpos[:, 1] - pt[1])
        cand = self._candidates(dist)
        ladder = self.ladder(node.level)
        pairs = []
        for i, p in enumerate(cand):
            for q in cand[i:]:
                counts = [0, 0, 0, 0]
                for b in (p, q):
                    for e in self.tpl.edges[b]:
                        counts[e] += 1
                if max(counts) <= self.r:
                    length = float(dist[p] + dist[q])
                    pairs.append(((p, q), length, round_up(ladder, length)))
        k = self.k
        if node.contains_depot:
            visitor_sets: Iterable[tuple[int, ...]]
            if self.symmetric:
                visitor_sets = [tuple(range(s)) for s in range(1, k + 1)]
            else:
                visitor_sets = [c for s in range(1, k + 1) for c in itertools.combinations(range(k), s)]
        else:
            req = self.required.get(pt)
            if req:
                visitor_sets = [tuple(sorted(req))]
            elif self.symmetric:
                visitor_sets = [(0,)]
            else:
                visitor_sets = [(h,) for h in range(k)]
        out: dict[tuple, Config] = {}
        for vs in visitor_sets:
            combos = (
                itertools.combinations_with_replacement(pairs, len(vs))
                if self.symmetric
                else itertools.product(pairs, repeat=len(vs))
            )
            for combo in combos:
                struct = [INACTIVE] * k
                ticks = [ABSENT] * k
                trues = [0.0] * k
                for h, (pq, length, t) in zip(vs, combo):
                    struct[h] = (pq,)
                    ticks[h] = t
                    trues[h] = length
                cfg = self._finish(struct, ticks, trues, lambda order: ("leaf", pt))
                key = (cfg.struct, cfg.ticks)
                if key not in out:
                    out[key] = cfg
        return self._prune(list(out.values()), node)

    # -- pruning ----------------------------------------------------------------

    def _rank(self, cfg: Config, ladder: Ladder) -> tuple:
        vals = [tick_value(ladder, t) for t in cfg.ticks]
        return (max(vals), sum(vals), sum(cfg.trues), cfg.ticks, cfg.struct)

    def _prune(self, cfgs: list[Config], node: SquareNode) -> list[Config]:
        ladder = self.ladder(node.level)
        if self.bound < math.inf:
            # a parent's tick value is never below a child's, so these cannot beat the incumbent
            cap = self.bound * (1 + 1e-9)
            cfgs = [c for c in cfgs if max(tick_value(ladder, t) for t in c.ticks) <= cap]
        by_struct: dict[tuple, list[Config]] = {}
        for cfg in cfgs:
            by_struct.setdefault(cfg.struct, []).append(cfg)
        kept: list[Config] = []
        for group in by_struct.values():
            group.sort(key=lambda c: (c.ticks, sum(c.trues)))
            front: list[Config] = []
            for c in group:
                if not any(all(a <= b for a, b in zip(f.ticks, c.ticks)) for f in front):
                    front.append(c)
            kept.extend(front)
        beam = self.options.beam
        if beam is None:
            kept.sort(key=lambda c: self._rank(c, ladder))
            return kept
        groups: dict[tuple, list[Config]] = {}
        for cfg in kept:
            sig = tuple(sorted(_signature(e) for e in cfg.struct)) if self.symmetric else tuple(
                _signature(e) for e in cfg.struct
            )
            groups.setdefault(sig, []).append(cfg)
        out: list[Config] = []
        for sig in sorted(groups):
            g = groups[sig]
            g.sort(key=lambda c: self._rank(c, ladder))
            out.extend(g[:beam])
        out.sort(key=lambda c: self._rank(c, ladder))
        total = self.options.beam_total
        if total is not None and len(out) > total:
            # keep every signature's best before filling up by rank
            heads = {id(groups[sig][0]) for sig in groups}
            first = [c for c in out if id(c) in heads]
            rest = [c for c in out if id(c) not in heads]
            out = sorted(first + rest[: max(0, total - len(first))], key=lambda c: self._rank(c, ladder))
        return out

    # -- internal nodes -----------------------------------------------------------

    def _local_graph(self, node: SquareNode) -> np.ndarray:
        tpl = self.tpl
        w = np.full((tpl.n_local, tpl.n_local), np.inf)
        np.fill_diagonal(w, 0.0)
        half = node.side / 2
        by_quad = {c.quadrant: c for c in node.children}
        for q in range(4):
            ids = tpl.quad_ids[q]
            child = by_quad.get(q)
            mat = self.passes[id(child)] if child is not None else tpl.unit_euclid * half
            block = w[np.ix_(ids, ids)]
            w[np.ix_(ids, ids)] = np.minimum(block, mat)
        return _floyd_warshall(w)

    def merge_children(self, node: SquareNode, is_root: bool = False) -> list[Config]:
        tpl = self.tpl
        d = self._local_graph(node)
        self.dists[id(node)] = d
        self.passes[id(node)] = d[np.ix_(tpl.parent_ids, tpl.parent_ids)]
        k = self.k
        child_ladder = self.ladder(node.level + 1)
        children = node.children
        depot_child = next((i for i, c in enumerate(children) if c.contains_depot), None)
        fold_order = list(range(len(children)))
        if depot_child is not None:
            fold_order.remove(depot_child)
            fold_order.insert(0, depot_child)
        union_cap = self.options.union_cap
        max_frag = self.options.max_fragments
        canon = self.symmetric and k > 1
        bound = self.bound * (1 + 1e-9)

        # A partial state is (frags, closed_from, tsum, tru, trail, fmask, cmask, keys); ``trail`` is a
        # linked list of picks, materialised only for the states that survive the fold.
        empty_keys = tuple((False, (), 0.0) for _ in range(k))
        states: list[tuple] = [(((),) * k, (None,) * k, (0.0,) * k, (0.0,) * k, None, 0, 0, empty_keys)]
        for ci in fold_order:
            child = children[ci]
            ids = tpl.quad_ids[child.quadrant]
            needs_depot_visit = depot_child is not None and ci != depot_child
            nxt: dict[tuple, tuple] = {}
            for cfg in self.configs[id(child)]:
                for lab in self._alignments(cfg):
                    # lab[j] = parent label of child salesman j
                    adds = []
                    afm = acm = 0
                    for j in range(k):
                        entry = cfg.struct[j]
                        if entry == INACTIVE:
                            continue
                        h = lab[j]
                        tv = tick_value(child_ladder, cfg.ticks[j])
                        if entry == CLOSED:
                            acm |= 1 << h
                            adds.append((h, (), (ci, j), tv, cfg.trues[j]))
                        else:
                            afm |= 1 << h
                            fr = tuple((ci, j, t, int(ids[p]), int(ids[q])) for t, (p, q) in enumerate(entry))
                            adds.append((h, fr, None, tv, cfg.trues[j]))
                    pick = (ci, cfg, lab)
                    for frags, closed_from, tsum, tru, trail, fm, cm, keys in states:
                        if acm & (fm | cm) or cm & (afm | acm):
                            continue
                        if needs_depot_visit and afm & ~(fm | cm):
                            # a salesman that never reaches the depot inside this square
                            continue
                        nf = list(frags)
                        nc = list(closed_from)
                        nt = list(tsum)
                        ntr = list(tru)
                        nk = list(keys)
                        too_many = False
                        for h, fr, cl, tv, tr in adds:
                            if fr:
                                f = nf[h] + fr
                                if max_frag is not None and len(f) > max_frag:
                                    too_many = True
                                    break
                                nf[h] = f
                            else:
                                nc[h] = cl
                            nt[h] += tv
                            if nt[h] > bound:
                                too_many = True
                                break
                            ntr[h] += tr
                            nk[h] = (nc[h] is not None, nk[h][1] + tuple((x[0], x[3], x[4]) for x in fr), nt[h])
                        if too_many:
                            continue
                        if canon:
                            # relabel so interchangeable salesmen meet the same partial state only once
                            order = sorted(range(k), key=nk.__getitem__)
                            shape = tuple(nk[h] for h in order)
                            if shape in nxt:
                                continue
                            inv = [0] * k
                            for pos, h in enumerate(order):
                                inv[h] = pos
                            nfm = ncm = 0
                            for pos, h in enumerate(order):
                                if nf[h]:
                                    nfm |= 1 << pos
                                if nc[h] is not None:
                                    ncm |= 1 << pos
                            nxt[shape] = (
                                tuple(nf[h] for h in order),
                                tuple(nc[h] for h in order),
                                tuple(nt[h] for h in order),
                                tuple(ntr[h] for h in order),
                                (trail, pick, inv),
                                nfm,
                                ncm,
                                shape,
                            )
                            continue
                        shape = tuple(nk)
                        if shape in nxt:
                            continue
                        nxt[shape] = (tuple(nf), tuple(nc), tuple(nt), tuple(ntr), (trail, pick, None), fm | afm, cm | acm, shape)
            states = _pareto_states(list(nxt.values()))
            if union_cap is not None and len(states) > union_cap:
                states = self._cap_states(states, union_cap)

        ladder = self.ladder(node.level)
        resolve_cache: dict[tuple, list] = {}
        out: list[Config] = []
        root_best: tuple | None = None
        found: dict[tuple, tuple] = {}  # canonical (struct, ticks) -> (true sum, combo, trail)
        bounded = self.bound < math.inf
        for frags, closed_from, tsum, tru, trail, *_ in states:
            per_h: list[list[tuple]] = []
            feasible = True
            for h in range(k):
                if closed_from[h] is not None:
                    t = round_up(ladder, tsum[h])
                    if bounded and tick_value(ladder, t) > bound:
                        feasible = False
                        break
                    per_h.append([(CLOSED, t, tru[h], ("up", closed_from[h]))])
                    continue
                if not frags[h]:
                    per_h.append([(INACTIVE, ABSENT, 0.0, None)])
                    continue
                ends = tuple((f[3], f[4]) for f in frags[h])
                ckey = (ends, is_root)
                opts = resolve_cache.get(ckey)
                if opts is None:
                    opts = self._resolve(d, ends, node.contains_depot, is_root)
                    resolve_cache[ckey] = opts
                if not opts:
                    feasible = False
                    break
                lst = []
                for entry, link, chains in opts:
                    t = round_up(ladder, tsum[h] + link)
                    if bounded and tick_value(ladder, t) > bound:
                        continue
                    lst.append((entry, t, tru[h] + link, ("link", tuple(frags[h]), chains)))
                if not lst:
                    feasible = False
                    break
                lst.sort(key=lambda o: (o[1], o[2]))
                per_h.append(lst)
            if not feasible:
                continue
            if is_root:
                # only closed tours survive here, so keep just the best state and unwind it alone
                for combo in _bounded_product(per_h, self.options.combo_depth):
                    if any(c[0] not in (INACTIVE, CLOSED) for c in combo):
                        continue
                    key = self._root_key(combo, ladder)
                    if root_best is None or key < root_best[0]:
                        root_best = (key, combo, trail)
                continue
            for combo in _bounded_product(per_h, self.options.combo_depth):
                if canon:
                    srt = sorted(combo, key=lambda c: (c[0], c[1], c[2]))
                    key = (tuple(c[0] for c in srt), tuple(c[1] for c in srt))
                else:
                    key = (tuple(c[0] for c in combo), tuple(c[1] for c in combo))
                trsum = sum(c[2] for c in combo)
                seen = found.get(key)
                if seen is None or trsum < seen[0]:
                    found[key] = (trsum, combo, trail)
        unwound: dict[int, tuple] = {}
        for _, combo, trail in found.values():
            picks = unwound.get(id(trail))
            if picks is None:
                picks = unwound[id(trail)] = _unwind(trail, k)
            links = [c[3] for c in combo]
            out.append(
                self._finish(
                    [c[0] for c in combo],
                    [c[1] for c in combo],
                    [c[2] for c in combo],
                    lambda order, links=links, picks=picks: ("merge", picks, tuple(links[h] for h in order), tuple(order)),
                )
            )
        if is_root:
            if root_best is None:
                return []
            _, combo, trail = root_best
            picks = _unwind(trail, k)
            links = [c[3] for c in combo]
            return [
                self._finish(
                    [c[0] for c in combo],
                    [c[1] for c in combo],
                    [c[2] for c in combo],
                    lambda order: ("merge", picks, tuple(links[h] for h in order), tuple(order)),
                )
            ]
        return self._prune(out, node)

    def _root_key(self, combo: tuple, ladder: Ladder) -> tuple:
        """The root selection order, evaluated on the canonical salesman order."""
        ticks = [c[1] for c in combo]
        trues = [c[2] for c in combo]
        if self.symmetric and self.k > 1:
            order = sorted(range(self.k), key=lambda h: (combo[h][0], ticks[h], trues[h]))
            ticks = [ticks[h] for h in order]
        return (max(tick_value(ladder, t) for t in ticks), tuple(ticks), sum(trues))

    def _cap_states(self, states: list[tuple], cap: int) -> list[tuple]:
        """Keep the cheapest partial combinations per salesman fragment counts (closed counts as -1)."""
        groups: dict[tuple, list[tuple]] = {}
        for st in states:
            frags, closed_from = st[0], st[1]
            sig = tuple(-1 if closed_from[h] is not None else len(frags[h]) for h in range(self.k))
            if self.symmetric:
                sig = tuple(sorted(sig))
            groups.setdefault(sig, []).append(st)
        def cost(s: tuple) -> tuple:
            return (max(s[2]), sum(s[2]), sum(s[3]))

        heads: list[tuple] = []
        rest: list[tuple] = []
        for sig in sorted(groups):
            g = groups[sig]
            g.sort(key=cost)
            heads.append(g[0])
            rest.extend(g[1:cap])
        total = self.options.union_total
        if total is not None:
            rest.sort(key=cost)
            rest = rest[: max(0, total - len(heads))]
        return heads + rest

    def _alignments(self, cfg: Config) -> list[tuple[int, ...]]:
        k = self.k
        if not self.symmetric or k == 1:
            return [tuple(range(k))]
        seen = set()
        out = []
        items = [(cfg.struct[j], cfg.ticks[j]) for j in range(k)]
        for perm in itertools.permutations(range(k)):
            # perm[j] = parent label for child salesman j
            placed = [None] * k
            for j in range(k):
                placed[perm[j]] = items[j]
            key = tuple(placed)
            if key in seen:
                continue
            seen.add(key)
            out.append(perm)
        return out

    def _resolve(self, d: np.ndarray, ends: tuple[tuple[int, int], ...], closable: bool, is_root: bool) -> list:
        """All ways to link fragment ends into parent paths, or into one closed tour.

        Returns (entry, link_cost, chains) triples, cheapest per entry.  ``chains``
        gives, for each parent path in entry order, its fragments as
        (index, reversed) from the first portal to the second.
        """
        nf = len(ends)
        max_frag = self.options.max_fragments
        if max_frag is not None and nf > max_frag:
            return []
        pts = [x for uv in ends for x in uv]
        chain = _chain_table(d, pts, nf)
        best: dict[tuple, tuple[float, tuple]] = {}
        full = (1 << nf) - 1
        if closable:
            row = d[pts[0]]
            top = None
            for (S, a, b), (cost, _) in chain.items():
                if S == full and a == 0:
                    c = cost + row[pts[b]]
                    if top is None or c < top[0]:
                        top = (c, b)
            if top is not None:
                best[CLOSED] = (float(top[0]), (_LazyChain(chain, full, 0, top[1]),))
        if is_root:
            return [(e, c, ch) for e, (c, ch) in best.items()]
        tpl = self.tpl
        pid = tpl.parent_ids
        exact = self.options.exits_per_edge is None
        cap = self.options.option_cap
        block_opts: dict[int, list[tuple[float, int, int, int, int]]] = {}

        pair_ok = self._pair_ok_matrix()

        def options_for(S: int) -> list[tuple[float, int, int, int, int]]:
            got = block_opts.get(S)
            if got is not None:
                return got
            members = [e for i in range(nf) if S >> i & 1 for e in (2 * i, 2 * i + 1)]
            rows = d[[pts[e] for e in members]][:, pid]  # (ne, 4m)
            if exact:
                cands = np.arange(4 * self.m)
            else:
                cands = np.unique(np.concatenate([self._candidates(row) for row in rows]))
            ne = len(members)
            M = np.full((ne, ne), np.inf)
            for ia, a in enumerate(members):
                for ib, b in enumerate(members):
                    v = chain.get((S, a, b))
                    if v is not None:
                        M[ia, ib] = v[0]
            E = rows[:, cands]  # (ne, nc)
            MT = M[:, :, None] + E[None, :, :]  # (a, b, Q)
            T_arg = MT.argmin(axis=1)
            T = np.take_along_axis(MT, T_arg[:, None, :], axis=1)[:, 0, :]
            CC = E[:, :, None] + T[:, None, :]  # (a, P, Q)
            a_arg = CC.argmin(axis=0)
            C = np.take_along_axis(CC, a_arg[None], axis=0)[0]
            # undirected: cost of the pair {P, Q} is the cheaper orientation
            flip = C.T < C
            U = np.where(flip, C.T, C)
            ok = pair_ok[np.ix_(cands, cands)] & np.triu(np.ones(U.shape, dtype=bool)) & np.isfinite(U)
            flat = np.flatnonzero(ok)
            if flat.size == 0:
                block_opts[S] = []
                return []
            vals = U.ravel()[flat]
            if cap is not None and flat.size > cap:
                sel = np.argpartition(vals, cap - 1)[:cap]
                flat, vals = flat[sel], vals[sel]
            order = np.lexsort((flat, vals))
            nc = len(cands)
            out = []
            for t in order:
                ip, iq = divmod(int(flat[t]), nc)
                if flip[ip, iq]:
                    # cheaper to run from cands[iq] to cands[ip]; store it oriented ip -> iq
                    ia = a_arg[iq, ip]
                    ib = T_arg[ia, ip]
                    first, last = members[ib], members[ia]
                else:
                    ia = a_arg[ip, iq]
                    ib = T_arg[ia, iq]
                    first, last = members[ia], members[ib]
                out.append((float(vals[t]), int(cands[ip]), int(cands[iq]), first, last))
            block_opts[S] = out
            return out

        max_paths = self.options.max_paths
        chosen: dict[tuple, tuple[float, list[int], tuple]] = {}
        edges = tpl.edges
        r = self.r
        for blocks in _set_partitions(nf):
            if len(blocks) * 2 > 4 * r or (max_paths is not None and len(blocks) > max_paths):
                continue
            lists = [options_for(S) for S in blocks]
            if any(not lst for lst in lists):
                continue
            if len(blocks) == 1:
                for opt in lists[0]:
                    entry = ((opt[1], opt[2]),)
                    cur = chosen.get(entry)
                    if cur is None or opt[0] < cur[0]:
                        chosen[entry] = (opt[0], blocks, (opt,))
                continue
            for combo in itertools.product(*lists):
                cost = 0.0
                for c in combo:
                    cost += c[0]
                counts = [0, 0, 0, 0]
                ok = True
                for c in combo:
                    for b in (c[1], c[2]):
                        for x in edges[b]:
                            counts[x] += 1
                            if counts[x] > r:
                                ok = False
                if not ok:
                    continue
                entry = tuple(sorted((c[1], c[2]) for c in combo))
                cur = chosen.get(entry)
                if cur is None or cost < cur[0]:
                    chosen[entry] = (cost, blocks, combo)
        ranked = sorted(chosen.items(), key=lambda kv: (kv[1][0], kv[0]))
        if cap is not None and len(ranked) > cap:
            # the cheapest linking for every path count always survives
            seen_counts = set()
            heads = []
            for kv in ranked:
                if len(kv[0]) not in seen_counts:
                    seen_counts.add(len(kv[0]))
                    heads.append(kv)
            ranked = ranked[:cap] + [kv for kv in heads if kv not in ranked[:cap]]
        for entry, (cost, blocks, combo) in ranked:
            order = sorted(range(len(combo)), key=lambda i: (combo[i][1], combo[i][2]))
            best[entry] = (float(cost), tuple(_LazyChain(chain, blocks[i], combo[i][3], combo[i][4]) for i in order))
        out = [(entry, c, ch) for entry, (c, ch) in best.items()]
        out.sort(key=lambda t: (t[1], t[0]))
        return out

    def _pair_ok(self, p: int, q: int) -> bool:
        counts = [0, 0, 0, 0]
        for b in (p, q):
            for x in self.tpl.edges[b]:
                counts[x] += 1
        return max(counts) <= self.r


def _chain_table(d: np.ndarray, pts: list[int], nf: int) -> dict[tuple[int, int, int], tuple[float, Any]]:
    """Cheapest chains through fragment subsets.

    Key (S, a, b): the chain covers fragment set S, enters its first fragment at
    end a and leaves its last fragment through end b.  Ends 2i and 2i+1 belong to
    fragment i.  Values are (cost, predecessor key and entry end).
    """
    table: dict[tuple[int, int, int], tuple[float, Any]] = {}
    layer: dict[tuple[int, int, int], float] = {}
    for i in range(nf):
        for a in (2 * i, 2 * i + 1):
            table[(1 << i, a, a ^ 1)] = (0.0, None)
            layer[(1 << i, a, a ^ 1)] = 0.0
    for _ in range(nf - 1):
        nxt: dict[tuple[int, int, int], float] = {}
        for (S, a, b), cost in layer.items():
            row = d[pts[b]]
            for j in range(nf):
                if S >> j & 1:
                    continue
                T = S | 1 << j
                for e in (2 * j, 2 * j + 1):
                    key = (T, a, e ^ 1)
                    c = cost + row[pts[e]]
                    old = nxt.get(key)
                    if old is None or c < old:
                        nxt[key] = c
                        table[key] = (c, (S, b, e))
        layer = nxt
    return table


def _chain_seq(table: dict, S: int, first: int, last: int) -> tuple[tuple[int, bool], ...]:
    """Fragments of the stored chain (S, first, last) in order, with traversal direction."""
    seq = []
    key = (S, first, last)
    while True:
        _, pred = table[key]
        if pred is None:
            seq.append((first // 2, first % 2 == 1))
            break
        prev_S, prev_b, e = pred
        seq.append((e // 2, e % 2 == 1))
        key = (prev_S, first, prev_b)
    seq.reverse()
    return tuple(seq)


class _LazyChain:
    """A chain whose fragment order is read from the chain table only when replayed."""

    __slots__ = ("table", "S", "first", "last")

    def __init__(self, table: dict, S: int, first: int, last: int):
        self.table, self.S, self.first, self.last = table, S, first, last

    def __iter__(self):
        return iter(_chain_seq(self.table, self.S, self.first, self.last))


def _set_partitions(n: int) -> list[list[int]]:
    """All partitions of range(n) into blocks, each block a bitmask."""
    out: list[list[int]] = []

    def rec(i: int, blocks: list[int]) -> None:
        if i == n:
            out.append(list(blocks))
            return
        for bi in range(len(blocks)):
            blocks[bi] |= 1 << i
            rec(i + 1, blocks)
            blocks[bi] &= ~(1 << i)
        blocks.append(1 << i)
        rec(i + 1, blocks)
        blocks.pop()

    rec(0, [])
    return out


def _pareto_states(states: list[tuple]) -> list[tuple]:
    """Drop partial states beaten componentwise, in length sums and true lengths, by one with the same fragments."""
    groups: dict[tuple, list[tuple]] = {}
    for st in states:
        groups.setdefault(tuple(kk[:2] for kk in st[7]), []).append(st)
    out: list[tuple] = []
    for group in groups.values():
        if len(group) == 1:
            out.append(group[0])
            continue
        group.sort(key=lambda st: (sum(st[2]), sum(st[3])))
        front: list[tuple] = []
        for st in group:
            t, tr = st[2], st[3]
            if not any(
                all(a <= b for a, b in zip(f[2], t)) and all(a <= b for a, b in zip(f[3], tr)) for f in front
            ):
                front.append(st)
        out.extend(front)
    return out


def _unwind(trail: tuple | None, k: int) -> tuple:
    """Materialise a pick trail, mapping every pick's labels to the final salesman order."""
    picks = []
    g = list(range(k))
    while trail is not None:
        trail, (ci, cfg, lab), inv = trail
        if inv is not None:
            g = [g[inv[x]] for x in range(k)]
        picks.append((ci, cfg, tuple(g[x] for x in lab)))
    return tuple(reversed(picks))


def _bounded_product(lists: list[list], depth: int | None) -> Iterable[tuple]:
    """Tuples from the product of sorted lists whose index sum is at most ``depth``."""
    if depth is None:
        yield from itertools.product(*lists)
        return

    def rec(i: int, budget: int, acc: tuple) -> Iterable[tuple]:
        if i == len(lists):
            yield acc
            return
        for j, item in enumerate(lists[i][: budget + 1]):
            yield from rec(i + 1, budget - j, acc + (item,))

    yield from rec(0, depth, ())


def _signature(entry: tuple) -> tuple[int, int]:
    if entry == INACTIVE:
        return (0, 0)
    if entry == CLOSED:
        return (2, 0)
    return (1, len(entry))


# ---------------------------------------------------------------------------
# driver


@dataclass
class DpResult:
    table: DpTable
    root_config: Config
    makespan_tick: int
    grid_lengths: list[float]  # true lengths of the portal path systems, grid units
    visits: list[list[GridPoint]]  # per salesman, visited grid points in tour order from the depot
    stats: list[dict[str, int]] = field(default_factory=list)
    attempt: int = 0  # index into [options] + options.fallbacks() that succeeded

    @property
    def grid_makespan(self) -> float:
        return max(self.grid_lengths)

    @property
    def configuration(self) -> Configuration:
        return Configuration.from_config(self.root_config, self.table.m)


class Infeasible(RuntimeError):
    pass


def run_dp(tree: ShiftedQuadtree, p: PerturbedInstance, params: PtasParams, options: DpOptions = DEFAULT) -> DpResult:
    attempts = [options] + options.fallbacks()
    for i, opts in enumerate(attempts):
        try:
            res = _run_once(tree, p, params, opts)
        except Infeasible:
            if i == len(attempts) - 1:
                raise
            continue
        res.attempt = i
        return res
    raise AssertionError("unreachable")


def _run_once(tree: ShiftedQuadtree, p: PerturbedInstance, params: PtasParams, options: DpOptions) -> DpResult:
    table = DpTable(tree, p, params, options)
    if options.exact:
        # a pruned run finds a subset of the exact configurations, so its root value bounds the optimum
        for probe in (DEFAULT, WIDE):
            try:
                quick = run_dp(tree, p, params, probe)
            except Infeasible:
                continue
            value = tick_value(quick.table.ladder(tree.root.level), quick.makespan_tick)
            table.bound = min(table.bound, value)
    levels = tree.levels()
    for level in range(len(levels) - 1, -1, -1):
        n_cfg = 0
        for node in levels[level]:
            if node.is_leaf:
                cfgs = table.solve_leaf(node)
                table.passes[id(node)] = table.tpl.unit_euclid * node.side
            else:
                cfgs = table.merge_children(node, is_root=node is tree.root)
            table.configs[id(node)] = cfgs
            n_cfg += len(cfgs)
        table.stats.append({"level": level, "nodes": len(levels[level]), "configs": n_cfg})
    table.stats.reverse()
    return solve_root(tree, table, p, params)


def solve_root(tree: ShiftedQuadtree, table: DpTable, p: PerturbedInstance, params: PtasParams) -> DpResult:
    root = tree.root
    ladder = table.ladder(root.level)
    best = None
    for cfg in table.configs[id(root)]:
        if any(e not in (INACTIVE, CLOSED) for e in cfg.struct):
            continue
        key = (max(tick_value(ladder, t) for t in cfg.ticks), cfg.ticks, sum(cfg.trues))
        if best is None or key < best[0]:
            best = (key, cfg)
    if best is None:
        raise Infeasible("no root configuration closes every tour")
    cfg = best[1]
    visits = [reconstruct(table, root, cfg, h) for h in range(table.k)]
    return DpResult(table, cfg, max(cfg.ticks), list(cfg.trues), visits, table.stats)


# ---------------------------------------------------------------------------
# witness replay


def reconstruct(table: DpTable, node: SquareNode, cfg: Config, h: int) -> list[GridPoint]:
    """Grid points visited by salesman h's closed tour, starting at the depot."""
    entry = cfg.struct[h]
    if entry == INACTIVE:
        return []
    if entry != CLOSED:
        raise ValueError("salesman has open paths at this square")
    seq = _expand_closed(table, node, cfg, h)
    depot = table.depot_point
    i = seq.index(depot)
    return seq[i:] + seq[:i]


def _child_of(node: SquareNode, ci: int) -> SquareNode:
    return node.children[ci]


def _expand_closed(table: DpTable, node: SquareNode, cfg: Config, h: int) -> list[GridPoint]:
    kind, picks, links, order = cfg.wit
    link = links[h]
    if link[0] == "up":
        ci, j = link[1]
        child_cfg = next(c for (i, c, _) in picks if i == ci)
        return _expand_closed(table, node.children[ci], child_cfg, j)
    _, frags, chains = link
    return _expand_chain(table, node, picks, frags, chains[0])


def _expand_chain(table, node, picks, frags, chain) -> list[GridPoint]:
    out: list[GridPoint] = []
    for f, rev in chain:
        ci, j, t = frags[f][0], frags[f][1], frags[f][2]
        child_cfg = next(c for (i, c, _) in picks if i == ci)
        part = _expand_path(table, node.children[ci], child_cfg, j, t)
        out.extend(reversed(part) if rev else part)
    return out


def _expand_path(table: DpTable, node: SquareNode, cfg: Config, h: int, t: int) -> list[GridPoint]:
    """Points visited along path t of salesman h, from its first portal to its second."""
    if cfg.wit[0] == "leaf":
        return [cfg.wit[1]]
    kind, picks, links, order = cfg.wit
    _, frags, chains = links[h]
    return _expand_chain(table, node, picks, frags, chains[t])


def path_system_lengths(result: DpResult) -> list[float]:
    return list(result.grid_lengths)


# Exhaustive check for the DP on tiny trees; it does not import this module.
from .portal_oracle import portal_bruteforce  # noqa: E402,F401
