import math
from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mmtsp.scale import (
    ABSENT,
    LadderOverflow,
    make_ladder,
    round_up,
    tick_count,
    tick_count_bound,
    tick_value,
)

# L=2, m=2 at level 0 gives delta = 1
UNIT = make_ladder(2, 0, 2, 0.5)


def test_round_up_small_examples():
    assert UNIT.delta == 1
    assert round_up(UNIT, 1.4) == 1
    assert tick_value(UNIT, 1) == 1.5
    assert round_up(UNIT, 0) == ABSENT
    assert round_up(UNIT, 1.5**3) == 3


def test_tick_value_ends():
    assert tick_value(UNIT, ABSENT) == 0
    assert tick_value(UNIT, 0) == UNIT.delta
    with pytest.raises(IndexError):
        tick_value(UNIT, len(UNIT.ticks))


def test_round_up_inverts_tick_value():
    lad = make_ladder(1024, 3, 4, 0.01)
    for j in range(len(lad.ticks)):
        assert round_up(lad, tick_value(lad, j)) == j


def test_overflow_is_flagged_when_strict():
    with pytest.raises(LadderOverflow):
        round_up(UNIT, UNIT.top * 2, strict=True)
    assert round_up(UNIT, UNIT.top * 2) == len(UNIT.ticks) - 1
    with pytest.raises(ValueError):
        round_up(UNIT, -1.0)


def test_tick_count_below_proof_bound_on_real_instance():
    from mmtsp.dissection import override_params
    from mmtsp.instance import generate_instance
    from mmtsp.perturb import perturb

    p = perturb(generate_instance(10, 2, 0), 0.5)
    alpha = override_params(0.5, p.L, 4, 2).alpha
    for level in range(int(math.log2(p.L)) + 2):
        assert tick_count(p.L, level, 4, alpha) <= tick_count_bound(p.L, level, 4, alpha)
        assert tick_count(p.L, level, 4, alpha) <= math.ceil(math.log(2**level * p.L * 4) / math.log1p(alpha)) + 1


def test_tick_count_at_finest_level():
    L, alpha = 256, 0.05
    z = tick_count(L, int(math.log2(L)), L, alpha)
    assert abs(z - math.log(L**3) / math.log1p(alpha)) <= 2


@pytest.mark.parametrize("seed", range(20))
def test_top_tick_straddles_grid_area(seed):
    import random

    rng = random.Random(seed)
    L = 2 ** rng.randint(4, 14)
    level, m = rng.randint(0, 10), 2 ** rng.randint(0, 5)
    alpha = rng.uniform(0.001, 0.2)
    lad = make_ladder(L, level, m, alpha)
    z = lad.tick_count - 1  # exponent of the first tick at or above L**2
    delta, growth = Fraction(L, 2**level * m), 1 + Fraction(alpha)
    exact_hi, exact_lo = delta * growth**z, delta * growth ** (z - 1)
    if z > 0:
        assert exact_lo < L * L <= exact_hi
    else:
        assert L * L <= exact_hi


@settings(max_examples=300, deadline=None)
@given(st.floats(1e-6, 1e7), st.floats(1e-6, 1e7))
def test_round_up_laws(a, b):
    lad = make_ladder(4096, 2, 4, 0.02)
    lo, hi = sorted((a, b))
    ta, tb = round_up(lad, lo), round_up(lad, hi)
    assert ta <= tb
    v = tick_value(lad, ta)
    assert v >= lo
    if lo > lad.delta and ta < len(lad.ticks) - 1:
        assert v <= lo * (1 + lad.alpha) * (1 + 1e-12)
    if lo <= lad.delta:
        assert ta == 0
