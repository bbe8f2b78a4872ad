"""Stationary solutions of the fluid system.

At equilibrium ``f = l / 2`` and every w_i is time independent. On the
stationary transport balance w_i decays towards small ``u`` at rate
``2 R(u) / l`` with ``R(u) = sum_{h_j <= u} p_j``, starting from the boundary
value

    B_i = p_i + (2 p_i / l) sum_{j>i} int_{h_i}^{h_j} w_j(u) du,

and ``l`` is fixed by requiring the pending level to equal ``l / 2``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize

from .errors import NoBracket, NonConvergence, ParamsError
from .params import ModelParams, common_step

MAX_ITER = 200


def bisect(fn, a: float, b: float, max_iter: int = MAX_ITER) -> tuple[float, int]:
    """Bisection to full double precision. Exact zeros at the ends are
    returned as is; a bracket without a sign change raises NoBracket."""
    fa, fb = fn(a), fn(b)
    if fa == 0:
        return a, 0
    if fb == 0:
        return b, 0
    if np.sign(fa) == np.sign(fb):
        raise NoBracket(f"no sign change on [{a}, {b}]: f(a)={fa:.3g}, f(b)={fb:.3g}")
    for it in range(1, max_iter + 1):
        m = 0.5 * (a + b)
        if m <= a or m >= b:
            return m, it
        fm = fn(m)
        if fm == 0:
            return m, it
        if np.sign(fm) == np.sign(fa):
            a, fa = m, fm
        else:
            b = m
    raise NonConvergence(f"bisection did not converge in {max_iter} iterations")


def _menu(params, delays, probs):
    if params is not None:
        delays, probs = params.delays, params.probs
    if delays is None or probs is None:
        raise ParamsError("need params or both delays and probs")
    delays = tuple(float(h) for h in delays)
    probs = tuple(float(p) for p in probs)
    if len(delays) != len(probs) or not delays:
        raise ParamsError("delays and probs must be non-empty and of equal length")
    if any(b <= a for a, b in zip(delays, delays[1:])) or delays[0] <= 0:
        raise ParamsError("delays must be positive and strictly increasing")
    if any(p < 0 for p in probs) or abs(math.fsum(probs) - 1) > 1e-12:
        raise ParamsError("probs must be non-negative and sum to 1")
    return delays, probs


@dataclass
class EquilibriumResult:
    l_star: float
    f_star: float
    w_star: float
    u_grid: list[np.ndarray]
    profiles: list[np.ndarray]
    residual: float
    iterations: int
    method: str
    notes: dict = field(default_factory=dict)


# ------------------------------------------------------------------ M = 2

def m2_equation(l: float, delays, probs) -> float:
    """``(1 - q) l - 2 h_1 + q l exp(-(2 p_1 / l)(h_2 - h_1))`` with ``q = p_2/p_1``."""
    (h1, h2), (p1, p2) = delays, probs
    q = p2 / p1
    return (1 - q) * l - 2 * h1 + q * l * math.exp(-(2 * p1 / l) * (h2 - h1))


def m2_profiles(l: float, delays, probs, u_grid):
    """Two-type profiles: ``w_1 = p_1`` and
    ``w_2(u) = p_2 exp(-(2 p_1 / l)(h_2 - max(u, h_1)))``."""
    (h1, h2), (p1, p2) = delays, probs
    w1 = np.full(len(u_grid[0]), p1)
    u = np.maximum(u_grid[1], h1)
    w2 = p2 * np.exp(-(2 * p1 / l) * (h2 - u))
    return [w1, w2]


def equilibrium_m2(params: ModelParams | None = None, *, delays=None, probs=None,
                   dt: float | None = None, method: str = "bisect") -> EquilibriumResult:
    """Two-type equilibrium from its transcendental equation.

    ``l`` is bracketed in ``[2 h_1, 2 h_2]``. Profiles follow the closed
    form (``w_1`` constant); ``notes['w1_boundary_gap']`` is how far the
    boundary-consistent ``w_1`` sits above it.
    """
    delays, probs = _menu(params, delays, probs)
    if len(delays) != 2:
        raise ParamsError("equilibrium_m2 needs exactly two types")
    if probs[0] <= 0:
        raise ParamsError("p_1 must be positive")
    fn = lambda l: m2_equation(l, delays, probs)
    l_star, iters = _solve(fn, 2 * delays[0], 2 * delays[1], method)
    grid = _u_grid(delays, dt)
    profiles = m2_profiles(l_star, delays, probs, grid)
    consistent = stationary_profile_fn(l_star, delays, probs)
    notes = {"w1_boundary_gap": consistent.boundary[0] - probs[0]}
    return EquilibriumResult(
        l_star, l_star / 2, l_star / 2, grid, profiles,
        residual=abs(fn(l_star)), iterations=iters, method=method, notes=notes,
    )


# ------------------------------------------------------------- general M

def _moments(c: float, width: float) -> tuple[float, float]:
    """``int_0^width e^{c z} dz`` and ``int_0^width z e^{c z} dz``."""
    x = c * width
    if abs(x) < 1e-4:
        # series to fourth order
        m0 = width * (1 + x / 2 + x * x / 6 + x ** 3 / 24)
        m1 = width * width * (0.5 + x / 3 + x * x / 8 + x ** 3 / 30)
        return m0, m1
    e = math.expm1(x)
    m0 = e / c
    m1 = (width * (e + 1) - m0) / c
    return m0, m1


@dataclass
class StationaryProfiles:
    """Boundary-consistent stationary w_i for a given ``l``."""

    l: float
    delays: tuple
    probs: tuple
    boundary: list[float]
    knots: np.ndarray   # 0, h_1, ..., h_M
    rates: np.ndarray   # R on each knot interval
    phi: np.ndarray     # int_0^{knot} R

    def _scale(self, i: int, x: float) -> float:
        """w_i at the knot ``x``."""
        return self.boundary[i] * math.exp(-(2 / self.l) * (self.phi_at(self.delays[i]) - self.phi_at(x)))

    def phi_at(self, u: float) -> float:
        m = int(np.searchsorted(self.knots, u, side="right") - 1)
        m = min(m, len(self.rates) - 1)
        return self.phi[m] + self.rates[m] * (u - self.knots[m])

    def __call__(self, i: int, u) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        phi = np.array([self.phi_at(x) for x in u.ravel()]).reshape(u.shape)
        return self.boundary[i] * np.exp(-(2 / self.l) * (self.phi_at(self.delays[i]) - phi))

    def segments(self, i: int, a: float, b: float):
        """Yield ``(x, width, c, w_i(x))`` for the knot pieces of ``[a, b]``."""
        for m in range(len(self.rates)):
            x = max(a, self.knots[m])
            y = min(b, self.knots[m + 1])
            if y > x:
                yield x, y - x, 2 * self.rates[m] / self.l, self._scale(i, x)

    def integral(self, i: int, a: float, b: float) -> float:
        return sum(w0 * _moments(c, width)[0] for _, width, c, w0 in self.segments(i, a, b))

    def moment(self, i: int, a: float, b: float, origin: float) -> float:
        """``int_a^b (u - origin) w_i(u) du``."""
        total = 0.0
        for x, width, c, w0 in self.segments(i, a, b):
            m0, m1 = _moments(c, width)
            total += w0 * (m1 + (x - origin) * m0)
        return total


def stationary_profile_fn(l: float, delays, probs) -> StationaryProfiles:
    M = len(delays)
    knots = np.array((0.0,) + tuple(delays))
    rates = np.array([sum(probs[: m]) for m in range(M)])  # R on [knot_m, knot_{m+1})
    phi = np.concatenate([[0.0], np.cumsum(rates * np.diff(knots))])
    prof = StationaryProfiles(l, tuple(delays), tuple(probs), [0.0] * M, knots, rates, phi)
    for i in reversed(range(M)):
        inflow = sum(prof.integral(j, delays[i], delays[j]) for j in range(i + 1, M))
        prof.boundary[i] = probs[i] + 2 * probs[i] * inflow / l
    return prof


def pending_level(l: float, delays, probs) -> float:
    """Stationary pending level from the jump balance:
    ``sum_i p_i h_i - (2/l) sum_{i>j} p_j int_{h_j}^{h_i} (u - h_j) w_i du``."""
    prof = stationary_profile_fn(l, delays, probs)
    total = math.fsum(p * h for p, h in zip(probs, delays))
    for i in range(len(delays)):
        for j in range(i):
            total -= (2 / l) * probs[j] * prof.moment(i, delays[j], delays[i], delays[j])
    return total


def profile_mass(l: float, delays, probs) -> float:
    """Stationary pending level as ``sum_i int_0^{h_i} w_i du``."""
    prof = stationary_profile_fn(l, delays, probs)
    return math.fsum(prof.integral(i, 0.0, h) for i, h in enumerate(delays))


def equilibrium_general(params: ModelParams | None = None, *, delays=None, probs=None,
                        dt: float | None = None, method: str = "bisect") -> EquilibriumResult:
    """Root of ``pending_level(l) - l/2`` on ``[2 h_1, 2 h_M]``.

    ``notes['route_gap']`` compares the pending level with the plain profile
    mass ``sum_i int w_i`` at the root.
    """
    delays, probs = _menu(params, delays, probs)
    fn = lambda l: pending_level(l, delays, probs) - l / 2
    l_star, iters = _solve(fn, 2 * delays[0], 2 * delays[-1], method)
    prof = stationary_profile_fn(l_star, delays, probs)
    grid = _u_grid(delays, dt)
    profiles = [prof(i, g) for i, g in enumerate(grid)]
    notes = {
        "route_gap": pending_level(l_star, delays, probs) - profile_mass(l_star, delays, probs),
        "boundary": list(prof.boundary),
    }
    return EquilibriumResult(
        l_star, l_star / 2, l_star / 2, grid, profiles,
        residual=abs(fn(l_star)), iterations=iters, method=method, notes=notes,
    )


def _u_grid(delays, dt):
    if dt is None:
        dt = float(common_step(delays)) / 50
    grids = []
    for h in delays:
        n = round(h / dt)
        grids.append(np.arange(n + 1) * dt)
    return grids


def _solve(fn, a, b, method):
    if method == "bisect":
        if a == b:
            if fn(a) == 0:
                return a, 0
            raise NoBracket(f"degenerate bracket [{a}, {b}] without a root")
        return bisect(fn, a, b)
    if method == "newton":
        fa, fb = fn(a), fn(b)
        if fa == 0:
            return a, 0
        if fb == 0:
            return b, 0
        if np.sign(fa) == np.sign(fb):
            raise NoBracket(f"no sign change on [{a}, {b}]")
        root, info = optimize.newton(fn, 0.5 * (a + b), full_output=True, disp=False)
        if not info.converged or not a <= root <= b:
            raise NonConvergence("secant iteration failed; use method='bisect'")
        return float(root), info.iterations
    raise ValueError(f"unknown method {method!r}")
