"""Acceptance criteria, one test per criterion.

A summary line per criterion is printed at the end of the pytest run.
"""

import time
from fractions import Fraction

import numpy as np
import pytest

from tangle_fluid import fluid, harness, sim
from tangle_fluid.equilibrium import equilibrium_general, equilibrium_m2
from tangle_fluid.errors import BlowUp, IdentityViolation
from tangle_fluid.oracle import FREE, enumerate_expectations, instance
from tangle_fluid.params import make_rng, validate_params


def _detail(record_property, text):
    record_property("detail", text)


def test_criterion_1_step_identities(record_property):
    p = validate_params(dict(epsilon=0.25, batch_size=50, delays=[1, 2], probs=[0.5, 0.5],
                             horizon=125, seed=0))
    assert p.lam == 200 and p.n_T == 500
    start = time.perf_counter()
    violations = 0
    for seed in range(20):
        traj = sim.run(p, seed)
        index = traj.by_tick()
        snaps = traj.snapshots()
        assert len(snaps) == 501
        for prev, nxt in zip(snaps[:-1], snaps[1:]):
            try:
                sim.check_step_identities(prev, nxt, p, index)
            except IdentityViolation:
                violations += 1
    elapsed = time.perf_counter() - start
    _detail(record_property, f"20 seeds x 500 ticks, {violations} violations, {elapsed:.1f}s")
    assert violations == 0
    assert elapsed < 60


TINY = [
    instance([FREE, FREE], 1, [1.0], [1]),
    instance([FREE, (1, 1)], 1, [0.4, 0.6], [1, 2]),
    instance([FREE, FREE, (1, 2), (1, 1)], 2, [0.5, 0.5], [1, 3]),
    instance([FREE, (0, 0), (1, 3)], 2, [0.3, 0.7], [2, 4]),
    instance([(1, 1), (1, 2), FREE, FREE], 2, [0.6, 0.4], [1, 3]),
]


def test_criterion_2_oracle_equivalence(record_property):
    trials = 100_000
    start = time.perf_counter()
    worst = 0.0
    exact0 = enumerate_expectations(TINY[0])
    assert exact0.F[0] == Fraction(3, 2)
    rng = make_rng(2024)
    for inst in TINY:
        assert inst.L <= 4 and inst.batch_size <= 2 and inst.num_types <= 2
        exact = enumerate_expectations(inst)
        params = inst.to_params()
        free, pending = inst.free_and_pending()
        keys = sorted(exact.J)
        F = np.zeros((trials, inst.num_types))
        J = np.zeros((trials, len(keys)))
        for t in range(trials):
            state = sim.state_from_tips(params, free, pending)
            _, rec = sim.step(state, rng)
            F[t] = rec.free_selected
            J[t] = [rec.jumps.get(k, 0) for k in keys]
        samples = np.hstack([F, J])
        targets = np.array([float(v) for v in exact.F] + [float(exact.J[k]) for k in keys])
        means = samples.mean(axis=0)
        se = samples.std(axis=0, ddof=1) / np.sqrt(trials)
        for m, s, e in zip(means, se, targets):
            if s == 0:
                assert m == e
            else:
                worst = max(worst, abs(m - e) / s)
    elapsed = time.perf_counter() - start
    _detail(record_property, f"5 instances x 1e5 trials, worst |z|={worst:.2f}, "
                             f"E[F1]=3/2 exact, {elapsed:.0f}s")
    assert worst < 4
    assert elapsed < 120


def test_criterion_3_equilibrium_exactness(record_property):
    one = equilibrium_general(delays=(1.5,), probs=(1.0,))
    assert abs(one.l_star - 3.0) < 1e-9 and abs(one.f_star - 1.5) < 1e-9
    gaps, resid = [], []
    for delays, probs in [((1, 2), (0.5, 0.5)), ((1, 3), (0.3, 0.7)),
                          ((0.5, 2.5), (0.8, 0.2)), ((2, 3), (0.25, 0.75))]:
        a = equilibrium_m2(delays=delays, probs=probs)
        b = equilibrium_general(delays=delays, probs=probs)
        resid.append(a.residual)
        gaps.append(abs(a.l_star - b.l_star))
    _detail(record_property, f"M=1 l*={one.l_star!r}, max m2 residual={max(resid):.1e}, "
                             f"max solver gap={max(gaps):.1e}")
    assert max(resid) < 1e-12
    assert max(gaps) < 1e-8


def test_criterion_4_fluid_stationarity(record_property):
    h1 = 1.0
    p1 = validate_params(dict(epsilon=0.05, batch_size=20, delays=[h1], probs=[1.0], horizon=10))
    s1 = fluid.integrate(p1, 10 * h1, fluid.Constants(h1, 2 * h1))
    dev1 = max(np.abs(s1.f - h1).max(), np.abs(s1.l - 2 * h1).max(), np.abs(s1.w(0) - 1).max())

    p2 = validate_params(dict(epsilon=0.05, batch_size=20, delays=[1, 2], probs=[0.5, 0.5], horizon=20))
    eq = equilibrium_general(p2)
    s2 = fluid.integrate(p2, 20, fluid.Constants(eq.f_star, eq.l_star))
    dev2 = max(np.abs(s2.f - eq.f_star).max(), np.abs(s2.l - eq.l_star).max(),
               *(np.abs(s2.w(i) - s2.w(i)[0]).max() for i in range(2)))
    _detail(record_property, f"M=1 sup dev={dev1:.1e}, M=2 sup dev={dev2:.1e}")
    assert dev1 < 1e-6
    assert dev2 < 1e-4


def test_criterion_5_self_convergence(record_property):
    p = validate_params(dict(epsilon=0.05, batch_size=20, delays=[1, 2], probs=[0.5, 0.5], horizon=10))
    ends, resid = [], []
    for dt in (0.1, 0.05, 0.025):
        s = fluid.integrate(p, 10, fluid.EquilibriumPerturbed(0.2), dt=dt)
        ends.append(np.array([s.f[-1], s.l[-1]]))
        resid.append(fluid.diagnostics(s).w_residual)
    ratio = np.abs(ends[0] - ends[1]).max() / np.abs(ends[1] - ends[2]).max()
    _detail(record_property, f"ratio={ratio:.3f}, w_residual={', '.join(f'{r:.2e}' for r in resid)}")
    assert 1.6 <= ratio <= 2.4
    assert resid[0] > resid[1] > resid[2]


def test_criterion_6_figure_scenario(record_property):
    p = validate_params(dict(epsilon=0.05, batch_size=20, delays=[1, 2], probs=[0.5, 0.5],
                             horizon=50, seed=7))
    assert p.lam == pytest.approx(400)
    start = time.perf_counter()
    rep = harness.compare(p, 10)
    elapsed = time.perf_counter() - start
    rel = [r.rel_L_sup for r in rep.replicas]
    good = sum(x < 0.10 for x in rel)
    _detail(record_property, f"{good}/10 replicas below 0.10 "
                             f"(sup rel. errors {', '.join(f'{x:.3f}' for x in rel)}), {elapsed:.0f}s")
    assert not rep.failures
    assert elapsed < 300
    assert good >= 9


def test_criterion_7_convergence_in_lambda(record_property):
    base = validate_params(dict(epsilon=0.25, batch_size=50, delays=[1, 2], probs=[0.5, 0.5],
                                horizon=20, seed=11))
    start = time.perf_counter()
    study = harness.convergence_study(base, [100, 200, 400], replicas=20)
    elapsed = time.perf_counter() - start
    med = study.medians
    _detail(record_property, "median g(T) " + ", ".join(
        f"lambda={r.lam}: {m:.3f}" for r, m in zip(study.rows, med)) + f", {elapsed:.0f}s")
    assert all(not r.report.failures for r in study.rows)
    assert study.strictly_decreasing
    assert elapsed < 900


def test_criterion_8_hypothesis_diagnostics(record_property):
    p = validate_params(dict(epsilon=0.05, batch_size=20, delays=[1, 2], probs=[0.5, 0.5],
                             horizon=10, seed=3))
    traj = sim.run(p, 3)
    sources = [
        fluid.Constants(1.5, 3.0),
        fluid.EquilibriumPerturbed(0.3),
        fluid.EquilibriumPerturbed(-0.3),
        fluid.FromSim(traj),
    ]
    accepted = 0
    for src in sources:
        s = fluid.integrate(p, 10, src, dt=0.05)
        d = fluid.diagnostics(s)
        assert d.m_hat > 0 and np.isfinite(d.xi_hat) and np.isfinite(d.gamma_hat)
        accepted += 1
    with pytest.raises(BlowUp):
        fluid.integrate(p, 10, fluid.Constants(0.01, 0.01), dt=0.05)
    _detail(record_property, f"{accepted} accepted runs with m_hat>0 and finite xi/gamma; "
                             "degenerate run rejected with BlowUp")
