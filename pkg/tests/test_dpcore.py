import math
import random

import pytest

from mmtsp.dissection import Shift, SquareNode, boundary_edges, build_quadtree, override_params
from mmtsp.dpcore import (
    CLOSED,
    DEFAULT,
    EXACT,
    INACTIVE,
    Configuration,
    DpTable,
    portal_bruteforce,
    run_dp,
)
from mmtsp.instance import Instance, generate_instance
from mmtsp.perturb import perturb
from mmtsp.scale import ABSENT, round_up, tick_value
from mmtsp.solve import Fixed, ptas_solve


def _setup(n, k, seed, m=2, r=1, eps=0.5, forced=None, shift_seed=None):
    inst = generate_instance(n, k, seed)
    if forced:
        inst = Instance(inst.cities, inst.depot, k, forced)
    p = perturb(inst, eps)
    params = override_params(eps, p.L, m, r)
    rng = random.Random(seed if shift_seed is None else shift_seed)
    tree = build_quadtree(p, Shift(rng.randrange(p.L), rng.randrange(p.L)), params)
    return inst, p, params, tree


def _all_configs(res):
    for node in res.table.tree.nodes():
        for cfg in res.table.configs[id(node)]:
            yield node, cfg


def test_empty_leaf_and_empty_merge():
    _, p, params, tree = _setup(3, 2, 1)
    table = DpTable(tree, p, params, EXACT)
    side = p.L // 4
    parent = SquareNode(2, 0, 0, 2 * side, ())
    for q in range(4):
        child = SquareNode(3, side * (q & 1), side * (q >> 1), side, (), quadrant=q)
        parent.children.append(child)
        table.configs[id(child)] = table.solve_leaf(child)
        table.passes[id(child)] = table.tpl.unit_euclid * side
    (leaf_cfg,) = table.configs[id(parent.children[0])]
    assert leaf_cfg.ticks == (ABSENT, ABSENT)
    (merged,) = table.merge_children(parent)
    assert merged.struct == (INACTIVE, INACTIVE) and merged.ticks == (ABSENT, ABSENT)


def test_occupied_leaf_choices_split_between_salesmen():
    # forcing the depot switches off salesman relabelling without constraining anyone
    _, p, params, tree = _setup(4, 2, 3, forced={0: 0})
    table = DpTable(tree, p, params, EXACT)
    leaf = next(n for n in tree.nodes() if n.is_leaf and not n.contains_depot)
    cfgs = table.solve_leaf(leaf)
    single = [c for c in cfgs if sum(e != INACTIVE for e in c.struct) == 1]
    by_h = [sorted(c.struct[h] for c in single if c.struct[h] != INACTIVE) for h in range(2)]
    assert by_h[0] and by_h[0] == by_h[1]
    assert all(len(c.struct[h]) == 1 for c in single for h in range(2) if c.struct[h] != INACTIVE)
    assert all(any(e != INACTIVE for e in c.struct) for c in cfgs)


@pytest.mark.parametrize("seed", range(6))
def test_configurations_respect_crossing_limits(seed):
    inst, p, params, tree = _setup(6, 2, seed, m=4, r=2)
    res = run_dp(tree, p, params, DEFAULT)
    m, r = params.m, params.r
    for node, cfg in _all_configs(res):
        view = Configuration.from_config(cfg, m)
        for h, entry in enumerate(cfg.struct):
            if entry in (INACTIVE, CLOSED):
                assert view.A[h] == ()
                continue
            counts = [0, 0, 0, 0]
            for pair in entry:
                assert pair[0] <= pair[1]
                for b in pair:
                    for e in boundary_edges(m, b):
                        counts[e] += 1
            assert max(counts) <= r
            assert len(view.A[h]) == 2 * len(entry) <= 4 * r
            assert list(entry) == sorted(entry)
        ladder = res.table.ladder(node.level)
        for t, true in zip(cfg.ticks, cfg.trues):
            assert tick_value(ladder, t) >= true * (1 - 1e-12)


@pytest.mark.parametrize("seed", range(4))
def test_parent_ticks_cover_rounded_child_sums(seed):
    _, p, params, tree = _setup(7, 2, seed, m=2, r=1)
    res = run_dp(tree, p, params, DEFAULT)
    checked = 0
    for node, cfg in _all_configs(res):
        if node.is_leaf:
            continue
        _, picks, _, order = cfg.wit
        sums = [0.0] * p.k
        child_ladder = res.table.ladder(node.level + 1)
        for _, child_cfg, lab in picks:
            for j in range(p.k):
                if child_cfg.struct[j] != INACTIVE:
                    sums[lab[j]] += tick_value(child_ladder, child_cfg.ticks[j])
        ladder = res.table.ladder(node.level)
        for h in range(p.k):
            assert cfg.ticks[h] >= round_up(ladder, sums[order[h]])
            checked += 1
    assert checked


def test_single_salesman_root_value_is_its_tour():
    _, p, params, tree = _setup(5, 1, 2, m=4, r=2)
    res = run_dp(tree, p, params, DEFAULT)
    assert res.grid_makespan == pytest.approx(res.grid_lengths[0])
    root_ladder = res.table.ladder(0)
    assert tick_value(root_ladder, res.makespan_tick) >= res.grid_makespan


def test_forced_city_lands_on_its_salesman():
    inst, p, params, tree = _setup(6, 2, 5, m=4, r=2, forced={3: 1})
    res = run_dp(tree, p, params, DEFAULT)
    assert p.city_map[3] in res.visits[1]


def test_corner_square_within_envelope():
    inst = Instance([(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)], 0, 2)
    eps = 0.5
    rep = ptas_solve(inst, eps, Fixed(Shift(3, 5)), (8, 4))
    opt = 2 + math.sqrt(2)
    assert opt * (1 - 1e-9) <= rep.solution.makespan <= (1 + eps) * opt


def _micro(seed, n, k, m, r):
    rng = random.Random(seed)
    for _ in range(200):
        _, p, params, tree = _setup(n, k, rng.randrange(10**6), m=m, r=r, shift_seed=rng.randrange(10**6))
        if tree.depth <= 2:
            return p, params, tree
    pytest.skip("no shallow tree found")


def test_bruteforce_three_cities_two_salesmen():
    p, params, tree = _micro(1, 3, 2, 1, 1)
    brute = portal_bruteforce(tree, p, params)
    dp = run_dp(tree, p, params, EXACT).grid_makespan
    assert brute * (1 - 1e-9) <= dp <= (1 + params.alpha) ** tree.depth * brute * (1 + 1e-9)


def test_bruteforce_single_city_depth_one():
    inst = Instance([(0.0, 0.0), (10.0, 10.0)], 0, 1)
    p = perturb(inst, 0.5)
    params = override_params(0.5, p.L, 2, 1)
    tree = next(
        t
        for t in (build_quadtree(p, Shift(a, a), params) for a in range(0, p.L, 7))
        if t.depth == 1
    )
    brute = portal_bruteforce(tree, p, params)
    assert run_dp(tree, p, params, EXACT).grid_makespan == pytest.approx(brute, rel=1e-9)


def test_bruteforce_refuses_large_inputs():
    _, p, params, tree = _setup(8, 2, 0)
    with pytest.raises(ValueError):
        portal_bruteforce(tree, p, params)
