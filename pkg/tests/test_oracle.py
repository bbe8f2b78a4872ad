from fractions import Fraction

import numpy as np
import pytest

from tangle_fluid import sim
from tangle_fluid.errors import InconsistentHistory, ParamsError, TooLarge
from tangle_fluid.oracle import (
    FREE,
    enumerate_expectations,
    instance,
    leading_order_expectations,
    parse_instance,
)
from tangle_fluid.params import make_rng


def test_two_free_tips_one_arrival():
    e = enumerate_expectations(instance([FREE, FREE], 1, [1.0], [1]))
    assert e.F == [Fraction(3, 2)]
    assert e.N == [1]


def test_jump_probability():
    p1 = 0.25
    e = enumerate_expectations(instance([FREE, (1, 1)], 1, [p1, 1 - p1], [1, 2]))
    assert e.J[(1, 0, 1)] == Fraction(3, 4) * Fraction(1, 4)


def test_no_jump_when_new_pow_is_slower_than_rlt():
    # type-3 pending tip with RLT 1 cannot jump to type 2 (2 ticks)
    e = enumerate_expectations(instance([(2, 1), FREE], 2, [0.2, 0.3, 0.5], [1, 2, 3]))
    assert e.J[(2, 1, 2)] == 0 and e.J[(2, 0, 2)] == 0
    assert e.J[(2, 0, 1)] > 0


@pytest.mark.parametrize("tips, N, probs, delays", [
    ([FREE, FREE, (1, 2)], 2, [0.4, 0.6], [1, 3]),
    ([FREE, (1, 1), (1, 2), (2, 3)], 2, [0.2, 0.3, 0.5], [1, 3, 4]),
    ([(0, 0), FREE], 3, [1.0], [2]),
])
def test_sums_and_bounds(tips, N, probs, delays):
    inst = instance(tips, N, probs, delays)
    e = enumerate_expectations(inst)
    assert sum(e.N) == N
    assert all(0 <= f <= inst.F for f in e.F)
    grid = inst.pending_grid()
    for i in range(len(delays)):
        for u in range(delays[i]):
            out = sum(v for (a, j, w), v in e.J.items() if a == i and w == u)
            assert 0 <= out <= grid[i][u]


def test_leading_order():
    inst = instance([FREE, FREE], 1, [1.0], [1])
    # 2 N p_1 F / L = 2 * 1 * 1 * 2 / 2, above the exact 3/2
    assert leading_order_expectations(inst).F == [2]
    assert enumerate_expectations(inst).F[0] < 2
    none_free = instance([(0, 0), (0, 1)], 2, [1.0], [2])
    assert leading_order_expectations(none_free).F == [0]
    no_pending = instance([FREE] * 3, 2, [0.5, 0.5], [1, 2])
    assert all(v == 0 for v in leading_order_expectations(no_pending).J.values())


def test_gap_to_leading_order_shrinks_with_L():
    gaps = []
    for L in (2, 4, 6):
        tips = [FREE] * (L // 2) + [(0, 0)] * (L // 2)
        inst = instance(tips, 1, [1.0], [1])
        exact = enumerate_expectations(inst).F[0]
        lead = leading_order_expectations(inst).F[0]
        gaps.append(abs(exact - lead))
    assert gaps[0] > gaps[1] > gaps[2]


def test_too_large():
    with pytest.raises(TooLarge):
        enumerate_expectations(instance([FREE] * 7, 1, [1.0], [1]))
    with pytest.raises(TooLarge):
        enumerate_expectations(instance([FREE] * 2, 4, [1.0], [1]))


def test_bad_instance():
    with pytest.raises(InconsistentHistory):
        instance([(0, 2)], 1, [1.0], [2])


def test_parse_instance():
    inst = parse_instance("tips = free, pending:2:3\nbatch_size = 2\nprobs = 0.5, 0.5\ndelays = 2, 4\n")
    assert inst.tips == (FREE, (1, 3))
    assert inst.batch_size == 2 and inst.delays == (2, 4)
    with pytest.raises(ParamsError):
        parse_instance("tips = free, busy\nbatch_size = 1\nprobs = 1\ndelays = 1\n")


def test_simulator_matches_oracle_small_sample():
    inst = instance([FREE, FREE, (1, 1)], 2, [0.5, 0.5], [1, 2])
    exact = enumerate_expectations(inst)
    params = inst.to_params()
    free, pending = inst.free_and_pending()
    rng = make_rng(0)
    trials = 20_000
    F = np.zeros((trials, 2))
    J = np.zeros(trials)
    for t in range(trials):
        state = sim.state_from_tips(params, free, pending)
        _, rec = sim.step(state, rng)
        F[t] = rec.free_selected
        J[t] = rec.jump(1, 0, 1)
    for k in range(2):
        se = F[:, k].std(ddof=1) / np.sqrt(trials)
        assert abs(F[:, k].mean() - float(exact.F[k])) < 4 * se
    se = J.std(ddof=1) / np.sqrt(trials)
    assert abs(J.mean() - float(exact.J[(1, 0, 1)])) < 4 * se
