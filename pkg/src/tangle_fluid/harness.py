"""Simulation versus fluid: the running deviation g, replica studies and
the lambda-scaling study."""

from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from scipy import stats

from . import fluid, sim
from .errors import GridMismatch, TangleError
from .params import ModelParams, common_step, derive_replica_seed, validate_params

log = logging.getLogger(__name__)


# ------------------------------------------------------------------ g(T)

@dataclass
class Scaled:
    """Scaled paths on a common grid: f, l per tick and w_i rows per tick."""

    step: float
    f: np.ndarray
    l: np.ndarray
    w: list[np.ndarray]


def scaled_sim(traj: sim.Trajectory) -> Scaled:
    p = traj.params
    snaps = traj.snapshots()
    return Scaled(
        p.epsilon,
        np.array([r.F for r in snaps]) / p.lam,
        np.array([r.L for r in snaps]) / p.lam,
        [np.array([r.wgrid[i] for r in snaps]) / p.batch_size for i in range(p.num_types)],
    )


def scaled_fluid(series: fluid.FluidSeries) -> Scaled:
    return Scaled(series.dt, series.f, series.l, [series.w(i) for i in range(len(series.d))])


@dataclass
class Deviation:
    """Running supremum ``g`` and its three components at the argmax."""

    t: np.ndarray
    g: np.ndarray
    comp_F: np.ndarray
    comp_L: np.ndarray
    comp_W: np.ndarray
    rel_L: np.ndarray  # |L/lambda - l| / l per tick (not a running sup)

    @property
    def gT(self) -> float:
        return float(self.g[-1])


def g_of_T(stoch, series, params: ModelParams | None = None) -> Deviation:
    """Running sup over ticks ``0..n`` of
    ``|F/lambda - f| + |L/lambda - l| + sum_i max_u |W_i/N - w_i|``.

    ``stoch`` is a :class:`sim.Trajectory` or a :class:`fluid.FluidSeries`
    (the latter lets a fluid run be compared with itself). Both sides are
    constant between grid points, so the sup over continuous time equals
    the max over ticks.
    """
    a = stoch if isinstance(stoch, Scaled) else (
        scaled_sim(stoch) if isinstance(stoch, sim.Trajectory) else scaled_fluid(stoch))
    b = series if isinstance(series, Scaled) else scaled_fluid(series)
    if not math.isclose(a.step, b.step, rel_tol=1e-12):
        raise GridMismatch(f"simulation step {a.step} differs from fluid step {b.step}")
    if len(b.f) < len(a.f):
        raise GridMismatch(f"fluid covers {len(b.f) - 1} steps, simulation {len(a.f) - 1}")
    if len(a.w) != len(b.w) or any(x.shape[1] != y.shape[1] for x, y in zip(a.w, b.w)):
        raise GridMismatch("pending grids differ in shape")
    n = len(a.f)
    dF = np.abs(a.f - b.f[:n])
    dL = np.abs(a.l - b.l[:n])
    dW = sum(np.abs(x - y[:n]).max(axis=1) for x, y in zip(a.w, b.w))
    D = dF + dL + dW
    arg = np.zeros(n, dtype=int)
    for k in range(1, n):
        arg[k] = k if D[k] > D[arg[k - 1]] else arg[k - 1]
    return Deviation(
        t=np.arange(n) * a.step, g=D[arg], comp_F=dF[arg], comp_L=dL[arg], comp_W=dW[arg],
        rel_L=dL / b.l[:n],
    )


# -------------------------------------------------------------- replicas

@dataclass
class ReplicaResult:
    index: int
    seed: int
    gT: float = math.nan
    comp_F: float = math.nan
    comp_L: float = math.nan
    comp_W: float = math.nan
    rel_L_sup: float = math.nan
    diagnostics: fluid.FluidDiagnostics | None = None
    error: str | None = None

    @property
    def ok(self) -> bool:
        return self.error is None


def run_replica(params: ModelParams, index: int, master_seed: int,
                init=None, with_diagnostics: bool = False) -> ReplicaResult:
    """Simulate one replica, start the fluid from its own history on the
    same grid, and measure the deviation. Package errors are captured in
    the result rather than raised."""
    seed = derive_replica_seed(master_seed, index)
    res = ReplicaResult(index, seed)
    try:
        traj = sim.run(params, seed, init)
        series = fluid.integrate(params, params.horizon, fluid.FromSim(traj), dt=params.epsilon)
        dev = g_of_T(traj, series)
        res.gT = dev.gT
        res.comp_F, res.comp_L, res.comp_W = (float(c[-1]) for c in (dev.comp_F, dev.comp_L, dev.comp_W))
        res.rel_L_sup = float(dev.rel_L.max())
        if with_diagnostics:
            res.diagnostics = fluid.diagnostics(series)
    except TangleError as exc:
        res.error = f"{type(exc).__name__}: {exc}"
    return res


def _run_replica_args(args):
    return run_replica(*args)


def run_replicas(params: ModelParams, replicas: int, master_seed: int | None = None,
                 init=None, workers: int = 1, with_diagnostics: bool = False) -> list[ReplicaResult]:
    """Results sorted by replica index, independent of ``workers``."""
    master = params.seed if master_seed is None else master_seed
    jobs = [(params, r, master, init, with_diagnostics) for r in range(replicas)]
    if workers > 1 and replicas > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_replica_args, jobs))
    else:
        results = [_run_replica_args(j) for j in jobs]
    return sorted(results, key=lambda r: r.index)


@dataclass
class TailEstimate:
    delta: float
    exceed: int
    total: int
    p_hat: float
    low: float
    high: float


def tail_frequency(values, delta: float, confidence: float = 0.95) -> TailEstimate:
    """``P(g > delta)`` with a Wilson score interval."""
    values = np.asarray([v for v in values if np.isfinite(v)])
    n = len(values)
    k = int((values > delta).sum())
    if n == 0:
        return TailEstimate(delta, 0, 0, math.nan, math.nan, math.nan)
    ci = stats.binomtest(k, n).proportion_ci(confidence_level=confidence, method="wilson")
    return TailEstimate(delta, k, n, k / n, float(ci.low), float(ci.high))


def summarize(values) -> tuple[float, float, bool]:
    """Median, IQR and whether the IQR is defined (needs two values)."""
    v = np.asarray([x for x in values if np.isfinite(x)])
    if len(v) == 0:
        return math.nan, math.nan, False
    med = float(np.median(v))
    if len(v) < 2:
        return med, math.nan, False
    q1, q3 = np.percentile(v, [25, 75])
    return med, float(q3 - q1), True


@dataclass
class ComparisonReport:
    params: ModelParams
    replicas: list[ReplicaResult]
    tail: TailEstimate | None
    median_gT: float
    iqr_gT: float
    iqr_defined: bool

    @property
    def gT(self) -> list[float]:
        return [r.gT for r in self.replicas]

    @property
    def failures(self) -> list[ReplicaResult]:
        return [r for r in self.replicas if not r.ok]


def compare(params: ModelParams, replicas: int, delta: float | None = None,
            master_seed: int | None = None, init=None, workers: int = 1,
            with_diagnostics: bool = False) -> ComparisonReport:
    results = run_replicas(params, replicas, master_seed, init, workers, with_diagnostics)
    g = [r.gT for r in results if r.ok]
    med, iqr, defined = summarize(g)
    tail = tail_frequency(g, delta) if delta is not None else None
    return ComparisonReport(params, results, tail, med, iqr, defined)


# ----------------------------------------------------------------- study

def schedule(base: ModelParams, lam: float, exponent: float = 0.75) -> tuple[ModelParams, str | None]:
    """Parameters for target rate ``lam`` with ``N ~ lam**exponent``.

    ``epsilon = N / lam`` is snapped to the nearest ``g / k`` where ``g`` is
    the common step of the delays and horizon, then ``N`` is rounded to
    ``lam * epsilon``; the effective rate is ``N / epsilon``. Returns the
    parameters and a note when anything was adjusted.
    """
    n_target = max(1, round(lam ** exponent))
    eps_target = n_target / lam
    g = common_step(list(base.delays) + [base.horizon])
    k = max(1, round(float(g) / eps_target))
    eps = g / k
    N = max(1, round(lam * eps))
    params = validate_params(dict(base.as_dict(), epsilon=float(eps), batch_size=N))
    note = None
    if N != n_target or eps != Fraction(n_target, 1) / Fraction(lam).limit_denominator():
        note = (
            f"lambda={lam:g}: target N={n_target}, epsilon={eps_target:.6g}; "
            f"using N={N}, epsilon={float(eps):.6g} (effective lambda={params.lam:.6g})"
        )
        log.info(note)
    return params, note


@dataclass
class StudyRow:
    lam: float
    params: ModelParams
    report: ComparisonReport


@dataclass
class StudyReport:
    rows: list[StudyRow]
    adjustments: list[str] = field(default_factory=list)

    @property
    def medians(self) -> list[float]:
        return [r.report.median_gT for r in self.rows]

    @property
    def strictly_decreasing(self) -> bool:
        m = self.medians
        return all(np.isfinite(m)) and all(b < a for a, b in zip(m, m[1:]))


def convergence_study(base: ModelParams, lambdas, replicas: int, delta: float | None = None,
                      master_seed: int | None = None, workers: int = 1,
                      exponent: float = 0.75) -> StudyReport:
    """Replica comparisons for each rate in ``lambdas`` (in the given order).

    Replica failures are recorded in each report and do not stop the study.
    """
    rows, notes = [], []
    for lam in lambdas:
        params, note = schedule(base, lam, exponent)
        if note:
            notes.append(note)
        report = compare(params, replicas, delta, master_seed, workers=workers)
        rows.append(StudyRow(lam, params, report))
    return StudyReport(rows, notes)
