import math

import numpy as np
import pytest

from tangle_fluid import fluid, harness, sim
from tangle_fluid.errors import EmptyTipSet, GridMismatch
from tangle_fluid.params import derive_replica_seed, validate_params

BASE = dict(epsilon=0.25, batch_size=50, delays=[1, 2], probs=[0.5, 0.5], horizon=10, seed=5)


def test_fluid_against_itself_is_zero():
    p = validate_params(BASE)
    s = fluid.integrate(p, 10, fluid.EquilibriumPerturbed(0.3), dt=0.25)
    dev = harness.g_of_T(s, s)
    assert np.all(dev.g == 0)


def test_running_sup_and_components():
    p = validate_params(BASE)
    traj = sim.run(p, 1)
    s = fluid.integrate(p, p.horizon, fluid.FromSim(traj))
    dev = harness.g_of_T(traj, s)
    assert dev.g[0] == 0
    assert np.all(np.diff(dev.g) >= 0)
    assert np.allclose(dev.comp_F + dev.comp_L + dev.comp_W, dev.g, rtol=0, atol=1e-12)
    assert len(dev.g) == p.n_T + 1


def test_grid_mismatch():
    p = validate_params(BASE)
    traj = sim.run(p, 1)
    s = fluid.integrate(p, p.horizon, fluid.FromSim(traj), dt=0.125)
    with pytest.raises(GridMismatch):
        harness.g_of_T(traj, s)
    short = fluid.integrate(p, 5, fluid.FromSim(traj))
    with pytest.raises(GridMismatch):
        harness.g_of_T(traj, short)


@pytest.mark.parametrize("lam, N, eps", [(100, 33, 1 / 3), (200, 50, 0.25), (400, 100, 0.25)])
def test_schedule(lam, N, eps):
    base = validate_params(dict(BASE, horizon=20))
    p, _ = harness.schedule(base, lam)
    assert p.batch_size == N
    assert p.epsilon == pytest.approx(eps, rel=1e-15)
    assert p.n_T * p.epsilon == pytest.approx(20, rel=1e-12)
    assert abs(p.lam - lam) / lam < 0.02


def test_single_replica_flags_iqr():
    p = validate_params(BASE)
    rep = harness.compare(p, 1, delta=0.1)
    assert not rep.iqr_defined and math.isnan(rep.iqr_gT)
    assert np.isfinite(rep.median_gT)


def test_tail_frequency():
    t = harness.tail_frequency([0.1, 0.2, 0.3], 10.0)
    assert t.p_hat == 0 and t.low == 0
    t = harness.tail_frequency([0.1, 0.2, 0.3, 0.4], 0.25)
    z = 1.959963984540054
    n, ph = 4, 0.5
    centre = (ph + z * z / (2 * n)) / (1 + z * z / n)
    half = z * math.sqrt(ph * (1 - ph) / n + z * z / (4 * n * n)) / (1 + z * z / n)
    assert t.low == pytest.approx(centre - half) and t.high == pytest.approx(centre + half)


def test_results_independent_of_workers():
    p = validate_params(BASE)
    a = harness.compare(p, 3, workers=1)
    b = harness.compare(p, 3, workers=2)
    assert [r.gT for r in a.replicas] == [r.gT for r in b.replicas]
    assert [r.seed for r in a.replicas] == [derive_replica_seed(p.seed, k) for k in range(3)]


def test_failed_replica_does_not_stop_the_study(monkeypatch):
    p = validate_params(BASE)
    real_run = sim.run
    bad = derive_replica_seed(p.seed, 1)

    def flaky(params, seed=None, init=None):
        if seed == bad:
            raise EmptyTipSet(3)
        return real_run(params, seed, init)

    monkeypatch.setattr(harness.sim, "run", flaky)
    rep = harness.compare(p, 3)
    assert [r.ok for r in rep.replicas] == [True, False, True]
    assert "EmptyTipSet" in rep.failures[0].error
    assert np.isfinite(rep.median_gT)


def test_study_runs_in_order():
    base = validate_params(dict(BASE, horizon=4))
    st = harness.convergence_study(base, [100, 200], 2)
    assert [r.lam for r in st.rows] == [100, 200]
    assert len(st.adjustments) == 2
    assert isinstance(st.strictly_decreasing, bool)
