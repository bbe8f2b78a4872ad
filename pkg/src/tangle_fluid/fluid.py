"""Fluid limit: delayed Euler recursions for f, l and transport of w_i.

Everything lives on a grid of step ``dt`` that divides every delay; ``d_i``
is ``h_i / dt``. With ``k`` the grid index and ``r = f / l``:

    f[k+1] = f[k] + dt * (1 - 2 r[k])
    l[k+1] = l[k] + dt * (1 - 2 sum_i p_i r[k - d_i]
                           - 2 sum_{j<i} p_j dt sum_{u=d_j+1}^{d_i-1} w_i[k-d_j, u] / l[k-d_j]
                           + 2 sum_{j<i} p_j dt sum_{u=d_j+1}^{d_i-1} w_i[k-u, u] / l[k-u])
    w_i[k+1, u-1] = w_i[k, u] * (1 - 2 dt R(u) / l[k]),   R(u) = sum_{d_j <= u} p_j
    w_i[k+1, d_i-1] = 2 p_i r[k] + sum_{j>i} 2 p_i dt sum_{u=d_i}^{d_j-1} w_j[k, u] / l[k]

These are the mean-field images of the simulator's counting identities, so
``dt * sum_{i,u} w_i[k, u] = l[k] - f[k]`` is preserved exactly whenever the
initial history satisfies it.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .errors import BlowUp, DegenerateHistory, NonDivisibleDelay
from .params import ModelParams, _as_ticks, common_step

BLOWUP_L = 1e-9


@dataclass(frozen=True)
class Constants:
    """Constant history ``f = f0``, ``l = l0``."""

    f0: float
    l0: float


@dataclass(frozen=True)
class FromSim:
    """History taken from a simulated trajectory (scaled by lambda and N)."""

    trajectory: object


@dataclass(frozen=True)
class EquilibriumPerturbed:
    """Discrete equilibrium history, with ``f`` and ``l`` both raised by
    ``delta * f*`` at time 0 (so ``l - f`` is unchanged)."""

    delta: float
    l_star: float | None = None


def default_dt(params: ModelParams) -> float:
    return float(common_step(params.delays)) / 50


def _grid(params: ModelParams, dt: float) -> tuple[int, ...]:
    d = []
    for h in params.delays:
        n = _as_ticks(h, dt)
        if n is None:
            raise NonDivisibleDelay(f"dt={dt} does not divide delay {h}")
        d.append(n)
    return tuple(d)


def rate_table(probs, d) -> np.ndarray:
    """``R[u] = sum of p_j over types with d_j <= u`` for ``u = 0 .. d_M``."""
    R = np.zeros(d[-1] + 1)
    for p, dj in zip(probs, d):
        R[dj:] += p
    return R


def stationary_profiles(f, l, probs, d, dt) -> list[np.ndarray]:
    """Fixed point of the w recursions for constant ``f`` and ``l``."""
    M = len(d)
    R = rate_table(probs, d)
    profiles: list[np.ndarray] = [None] * M
    for i in reversed(range(M)):
        inflow = sum(dt * profiles[j][d[i]:].sum() for j in range(i + 1, M))
        top = 2 * probs[i] * f / l + 2 * probs[i] * inflow / l
        decay = 1 - 2 * dt * R[1:d[i]] / l
        # w[u] = top * prod_{v=u+1}^{d_i-1} decay[v]
        tail = np.concatenate([np.cumprod(decay[::-1])[::-1], [1.0]])
        profiles[i] = top * tail
    return profiles


def discrete_equilibrium(params: ModelParams, dt: float) -> float:
    """Tip level ``l`` at which the stationary discrete profiles satisfy
    ``dt * sum w = l / 2`` (bisection on ``[2 h_1, 2 h_M]``)."""
    from .equilibrium import bisect

    d = _grid(params, dt)

    def gap(l):
        return dt * sum(w.sum() for w in stationary_profiles(l / 2, l, params.probs, d, dt)) - l / 2

    root, _ = bisect(gap, 2 * params.delays[0], 2 * params.delays[-1])
    return root


class FluidState:
    """Histories of f, l and the w_i grids from ``-2 d_M`` to the current
    index ``k``. Row ``k + offset`` of every array holds time ``k * dt``."""

    def __init__(self, params: ModelParams, dt: float, capacity: int = 0):
        self.params = params
        self.dt = dt
        self.d = _grid(params, dt)
        self.probs = np.asarray(params.probs, dtype=float)
        self.offset = 2 * self.d[-1]
        size = self.offset + 1 + capacity
        self.f = np.zeros(size)
        self.l = np.zeros(size)
        self.w = [np.zeros((size, di)) for di in self.d]
        self.k = 0
        self.R = rate_table(self.probs, self.d)
        M = len(self.d)
        self._pairs = [
            (i, j, np.arange(self.d[j] + 1, self.d[i]))
            for i in range(M) for j in range(i)
            if self.d[i] - self.d[j] > 1
        ]

    @property
    def t(self) -> float:
        return self.k * self.dt

    def row(self, k: int) -> int:
        return k + self.offset

    def _grow(self):
        extra = max(64, len(self.f))
        self.f = np.concatenate([self.f, np.zeros(extra)])
        self.l = np.concatenate([self.l, np.zeros(extra)])
        self.w = [np.vstack([w, np.zeros((extra, w.shape[1]))]) for w in self.w]

    def boundary_values(self, k: int) -> list[float]:
        """``w_i(t_k, h_i)``: inflow that becomes cell ``d_i - 1`` at ``k + 1``."""
        a = self.row(k)
        f, l, dt, p, d = self.f[a], self.l[a], self.dt, self.probs, self.d
        M = len(d)
        out = []
        for i in range(M):
            inflow = sum(dt * self.w[j][a, d[i]:].sum() for j in range(i + 1, M))
            out.append(2 * p[i] * f / l + 2 * p[i] * inflow / l)
        return out

    def _transport(self, k: int) -> None:
        """Fill w rows at ``k + 1`` from row ``k``."""
        a = self.row(k)
        bv = self.boundary_values(k)
        l = self.l[a]
        for i, di in enumerate(self.d):
            w = self.w[i]
            w[a + 1, :-1] = w[a, 1:] * (1 - 2 * self.dt * self.R[1:di] / l)
            w[a + 1, -1] = bv[i]

    def _check(self, k: int) -> None:
        a = self.row(k)
        f, l = self.f[a], self.l[a]
        t = k * self.dt
        if not (np.isfinite(f) and np.isfinite(l)):
            raise BlowUp(t, "non-finite f or l")
        if l <= BLOWUP_L:
            raise BlowUp(t, f"l={l:.3g} fell below {BLOWUP_L:g}")
        if f < 0 or f > l:
            raise BlowUp(t, f"f={f:.6g} outside [0, l={l:.6g}]")
        for i, w in enumerate(self.w):
            row = w[a]
            if not np.all(np.isfinite(row)):
                raise BlowUp(t, f"non-finite w_{i + 1}")
            if np.any(row < 0):
                raise BlowUp(t, f"negative w_{i + 1}")

    def w_total(self, k: int) -> float:
        a = self.row(k)
        return self.dt * sum(w[a].sum() for w in self.w)


def fluid_step(state: FluidState) -> FluidState:
    """Advance ``state`` by one grid step in place."""
    k = state.k
    a = state.row(k)
    if a + 1 >= len(state.f):
        state._grow()
    dt, p, d = state.dt, state.probs, state.d
    F, Lh, W = state.f, state.l, state.w
    r = F[a] / Lh[a]

    drift = 1.0
    for i, di in enumerate(d):
        drift -= 2 * p[i] * F[a - di] / Lh[a - di]
    for i, j, us in state._pairs:
        drift -= 2 * p[j] * dt * W[i][a - d[j], us].sum() / Lh[a - d[j]]
        drift += 2 * p[j] * dt * (W[i][a - us, us] / Lh[a - us]).sum()

    F[a + 1] = F[a] + dt * (1 - 2 * r)
    Lh[a + 1] = Lh[a] + dt * drift
    state._transport(k)
    state.k = k + 1
    state._check(k + 1)
    return state


# ------------------------------------------------------------ initialization

def _history_fl(params, source, dt, d):
    """f, l on the grid ``-2 d_M .. 0`` and optional realized w rows."""
    H = 2 * d[-1]
    if isinstance(source, Constants):
        if source.l0 <= 0 or source.f0 < 0 or source.f0 > source.l0:
            raise DegenerateHistory(
                f"need 0 <= f0 <= l0 and l0 > 0, got f0={source.f0}, l0={source.l0}"
            )
        return np.full(H + 1, float(source.f0)), np.full(H + 1, float(source.l0)), None
    if isinstance(source, EquilibriumPerturbed):
        l_star = source.l_star if source.l_star is not None else discrete_equilibrium(params, dt)
        f = np.full(H + 1, l_star / 2)
        l = np.full(H + 1, float(l_star))
        f[-1] += source.delta * l_star / 2
        l[-1] += source.delta * l_star / 2
        return f, l, None
    if isinstance(source, FromSim):
        return _history_from_sim(source.trajectory, dt, d)
    raise TypeError(f"unknown fluid source {source!r}")


def _history_from_sim(traj, dt, d):
    sp = traj.params
    lam, N = sp.lam, sp.batch_size
    index = traj.by_tick()
    ticks = np.array(sorted(t for t in index if t <= 0))
    F = np.array([index[t].F for t in ticks]) / lam
    L = np.array([index[t].L for t in ticks]) / lam
    H = 2 * d[-1]
    times = np.arange(-H, 1) * dt
    if times[0] < ticks[0] * sp.epsilon - 1e-9 * sp.epsilon:
        raise DegenerateHistory("simulated history is shorter than 2 h_M")
    if abs(dt - sp.epsilon) <= 1e-12 * sp.epsilon:
        pick = np.searchsorted(ticks, np.arange(-H, 1))
        f, l = F[pick], L[pick]
        rows = {}
        for k in range(-d[-1], 1):
            grid = index[k].wgrid
            if grid is None:
                rows = None
                break
            rows[k] = [np.asarray(g, dtype=float) / N for g in grid]
        return f, l, rows
    tsim = ticks * sp.epsilon
    return np.interp(times, tsim, F), np.interp(times, tsim, L), None


def init_fluid(params: ModelParams, source, dt: float | None = None, capacity: int = 0) -> FluidState:
    """Fill the histories on ``[-2 h_M, 0]``.

    w rows are generated by starting from the stationary profile of
    ``(f, l)`` at ``-2 h_M`` and running the transport recursion forward with
    the given f, l history. A :class:`FromSim` source with ``dt == epsilon``
    uses the realized ``W_i / N`` on ``[-h_M, 0]`` instead.
    """
    if dt is None:
        dt = params.epsilon if isinstance(source, FromSim) else default_dt(params)
    state = FluidState(params, dt, capacity)
    d = state.d
    f, l, rows = _history_fl(params, source, dt, d)
    if np.any(~np.isfinite(l)) or np.any(l <= 0):
        raise DegenerateHistory("l must be positive on the whole history")
    if np.any(f < 0) or np.any(f > l):
        raise DegenerateHistory("need 0 <= f <= l on the whole history")
    H = 2 * d[-1]
    state.f[: H + 1] = f
    state.l[: H + 1] = l
    for i, prof in enumerate(stationary_profiles(f[0], l[0], state.probs, d, dt)):
        state.w[i][0] = prof
    for k in range(-H, 0):
        state._transport(k)
    if rows is not None:
        for k, grids in rows.items():
            for i, g in enumerate(grids):
                state.w[i][state.row(k)] = g
    state.k = 0
    return state


# ------------------------------------------------------------------ series

@dataclass
class FluidSeries:
    """Grid trajectories from ``-2 h_M`` (row 0) to ``T``."""

    params: ModelParams
    dt: float
    d: tuple[int, ...]
    offset: int
    f_all: np.ndarray
    l_all: np.ndarray
    w_all: list[np.ndarray]
    blowup: BlowUp | None = None

    @property
    def steps(self) -> int:
        return len(self.f_all) - self.offset - 1

    @property
    def t(self) -> np.ndarray:
        return np.arange(self.steps + 1) * self.dt

    @property
    def f(self) -> np.ndarray:
        return self.f_all[self.offset:]

    @property
    def l(self) -> np.ndarray:
        return self.l_all[self.offset:]

    def w(self, i: int) -> np.ndarray:
        """``w_i`` rows for ``k = 0 .. K``, shape ``(K + 1, d_i)``."""
        return self.w_all[i][self.offset:]

    @property
    def w_total(self) -> np.ndarray:
        return self.dt * sum(w[self.offset:].sum(axis=1) for w in self.w_all)


def _series(state: FluidState, blowup=None) -> FluidSeries:
    n = state.row(state.k) + 1
    return FluidSeries(
        state.params, state.dt, state.d, state.offset,
        state.f[:n].copy(), state.l[:n].copy(), [w[:n].copy() for w in state.w], blowup,
    )


def integrate(params: ModelParams, T: float | None = None, source=None,
              dt: float | None = None, keep_partial: bool = False) -> FluidSeries:
    """Integrate on ``[0, T]`` (``T`` defaults to ``params.horizon``).

    Raises :class:`BlowUp` when the state leaves the admissible region;
    with ``keep_partial`` the series up to the failure is returned instead,
    with the exception attached as ``series.blowup``.
    """
    if source is None:
        raise ValueError("a fluid source is required")
    T = params.horizon if T is None else T
    if dt is None:
        dt = params.epsilon if isinstance(source, FromSim) else default_dt(params)
    K = _as_ticks(T, dt)
    if K is None:
        raise NonDivisibleDelay(f"dt={dt} does not divide T={T}")
    state = init_fluid(params, source, dt, capacity=K)
    try:
        state._check(0)
        for _ in range(K):
            fluid_step(state)
    except BlowUp as exc:
        if not keep_partial:
            raise
        return _series(state, exc)
    return _series(state)


# ------------------------------------------------------------- diagnostics

@dataclass
class FluidDiagnostics:
    xi_hat: float
    gamma_hat: float
    m_hat: float
    w_residual: float

    def acceptable(self) -> bool:
        return self.m_hat > 0 and np.isfinite(self.xi_hat) and np.isfinite(self.gamma_hat)


def _boundary_all(series: FluidSeries) -> list[np.ndarray]:
    d, dt, p = series.d, series.dt, np.asarray(series.params.probs)
    r = series.f_all / series.l_all
    out = []
    for i in range(len(d)):
        inflow = sum(dt * series.w_all[j][:, d[i]:].sum(axis=1) for j in range(i + 1, len(d)))
        out.append(2 * p[i] * r + 2 * p[i] * inflow / series.l_all)
    return out


def _trapezoid(y, dt):
    return dt * (y.sum() - 0.5 * (y[0] + y[-1]))


def w_identity(series: FluidSeries) -> np.ndarray:
    """Pending-tip level on ``0 .. T`` from f, l and w histories:

    ``sum_i int_{t-h_i}^t 2 p_i f/l ds
      - sum_{i>j} 2 p_j int_{h_j}^{h_i} int_s^{h_i} w_i(t-s, u) / l(t-s) du ds``

    with trapezoid quadrature (w at ``u = h_i`` taken from the boundary
    condition)."""
    d, dt, off = series.d, series.dt, series.offset
    p = np.asarray(series.params.probs)
    r = series.f_all / series.l_all
    bounds = _boundary_all(series)
    out = np.zeros(series.steps + 1)
    M = len(d)
    for k in range(series.steps + 1):
        a = k + off
        total = 0.0
        for i in range(M):
            total += 2 * p[i] * _trapezoid(r[a - d[i]: a + 1], dt)
        for i in range(M):
            if i == 0:
                continue
            di = d[i]
            # rows at times k - s for s = 0 .. d_i, extended with the boundary column
            s = np.arange(di + 1)
            rows = np.hstack([series.w_all[i][a - s], bounds[i][a - s, None]])
            seg = 0.5 * dt * (rows[:, :-1] + rows[:, 1:])
            inner = np.cumsum(seg[:, ::-1], axis=1)[:, ::-1]  # int_u^{h_i}, u = 0..d_i-1
            inner = np.hstack([inner, np.zeros((di + 1, 1))])
            g = inner[s, s] / series.l_all[a - s]
            for j in range(i):
                total -= 2 * p[j] * _trapezoid(g[d[j]:], dt)
        out[k] = total
    return out


def diagnostics(series: FluidSeries) -> FluidDiagnostics:
    """Estimates of the constants in the hypotheses of the deviation bound.

    xi_hat is ``sup w_i / l`` over ``[-h_M, T]``; gamma_hat the largest
    centered difference in ``u`` of ``w_i(t-u, u) / l(t-u)`` over ``[0, T]``;
    m_hat ``inf l`` over the whole stored history; w_residual the largest gap
    between the integral form of the pending-tip level and ``l - f``.
    """
    d, dt, off = series.d, series.dt, series.offset
    start = off - d[-1]
    l_all = series.l_all
    xi = max(float((w[start:] / l_all[start:, None]).max()) for w in series.w_all)
    gamma = 0.0
    for w, di in zip(series.w_all, d):
        if di < 3:
            continue
        u = np.arange(di)
        for k in range(series.steps + 1):
            a = k + off
            g = w[a - u, u] / l_all[a - u]
            gamma = max(gamma, float(np.abs(g[2:] - g[:-2]).max() / (2 * dt)))
    resid = np.abs(w_identity(series) - (series.l - series.f))
    return FluidDiagnostics(
        xi_hat=xi, gamma_hat=gamma, m_hat=float(l_all.min()), w_residual=float(resid.max())
    )


# ------------------------------------------------------------------ output

def write_fluid_csv(series: FluidSeries, path) -> None:
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(["t", "f", "l", "w_total"])
        for t, f, l, w in zip(series.t, series.f, series.l, series.w_total):
            out.writerow([repr(float(t)), repr(float(f)), repr(float(l)), repr(float(w))])


def write_fluid_wgrid_csv(series: FluidSeries, path) -> None:
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(["t", "type", "u", "w_i"])
        for k, t in enumerate(series.t):
            for i in range(len(series.d)):
                for u, v in enumerate(series.w(i)[k]):
                    out.writerow([repr(float(t)), i + 1, repr(u * series.dt), repr(float(v))])
