"""Agent-level simulation of the tangle with random proof-of-work delays.

Every tick ``n`` runs the same fixed sequence:

1. draw the POW type of each of the ``N`` arrivals (arrival-index order);
2. each arrival draws two parents uniformly, with replacement, from the tip
   list as it stands at tick ``n`` (arrival index, then parent slot);
3. measure the selection counts: a selected free tip is credited to the
   smallest type that selected it, and a pending tip of type ``i`` with
   residual life ``u`` jumps to the smallest selecting type ``j < i`` when
   ``n_j <= u``;
4. finish every POW due at tick ``n``;
5. build tick ``n + 1``: finished vertices become free tips, tips whose
   earliest directed POW finished stop being tips, selected free tips turn
   pending, and pending tips take on any earlier directed completion.

Types are 0-based indices into ``params.delays``. Residual life times (RLT)
are in ticks; a pending tip with RLT 0 is still a tip at that tick and is
gone at the next one.
"""

from __future__ import annotations

import csv
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .errors import (
    EmptyTangle,
    EmptyTipSet,
    IdentityViolation,
    InconsistentHistory,
    InsufficientHistory,
)
from .params import ModelParams, default_warmup, make_rng

# Parent id standing for vertices that are already attached (not tips).
SETTLED = -1


@dataclass
class Vertex:
    id: int
    arrival_tick: int
    pow_type: int
    completion_tick: int
    parents: tuple[int, int]


@dataclass
class PendingInfo:
    """POWs directed at a pending tip and the earliest of them.

    ``completion`` and ``pow_type`` cache the minimum completion tick and the
    smallest type among the POWs that reach it.
    """

    directed_completions: list[tuple[int, int]]
    completion: int
    pow_type: int

    @classmethod
    def single(cls, completion: int, pow_type: int) -> "PendingInfo":
        return cls([(completion, pow_type)], completion, pow_type)

    @classmethod
    def from_completions(cls, entries) -> "PendingInfo":
        entries = list(entries)
        if not entries:
            raise ValueError("a pending tip needs at least one directed POW")
        c, k = min(entries)
        return cls(entries, c, k)

    def add(self, completion: int, pow_type: int) -> None:
        self.directed_completions.append((completion, pow_type))
        if (completion, pow_type) < (self.completion, self.pow_type):
            self.completion = completion
            self.pow_type = pow_type

    def rlt(self, tick: int) -> int:
        return self.completion - tick


@dataclass
class StepRecord:
    """Counts observed at one tick.

    ``wgrid[i][u]`` is the number of type-``i`` pending tips with RLT ``u``
    ticks. ``arrivals``, ``free_selected`` and ``jumps`` describe the
    selections made at this tick and are ``None`` for snapshots that carry
    state only (the terminal tick of a run, explicit history).
    ``jumps`` maps ``(i, j, u)`` to the number of type-``i`` pending tips with
    RLT ``u`` that became type ``j``.
    """

    tick: int
    L: int
    F: int
    W: int
    wgrid: tuple[np.ndarray, ...] | None = None
    arrivals: np.ndarray | None = None
    free_selected: np.ndarray | None = None
    jumps: dict[tuple[int, int, int], int] | None = None

    def jump(self, i: int, j: int, u: int) -> int:
        return self.jumps.get((i, j, u), 0)


class TangleState:
    """Mutable bookkeeping of tips, pending tips and in-flight vertices."""

    def __init__(self, params: ModelParams, clock: int = 0):
        self.params = params
        self.clock = clock
        self.tips: list[int] = []
        self._pos: dict[int, int] = {}
        self.pending: dict[int, PendingInfo] = {}
        self.in_flight: dict[int, list[Vertex]] = defaultdict(list)
        self._due: dict[int, set[int]] = defaultdict(set)
        self._wcount: Counter = Counter()
        self.created = 0
        self.history: dict[int, StepRecord] = {}

    # -- views
    @property
    def L(self) -> int:
        return len(self.tips)

    @property
    def W(self) -> int:
        return len(self.pending)

    @property
    def F(self) -> int:
        return len(self.tips) - len(self.pending)

    @property
    def free_tips(self) -> set[int]:
        return {t for t in self.tips if t not in self.pending}

    @property
    def pending_tips(self) -> dict[int, PendingInfo]:
        return self.pending

    def wgrid(self) -> tuple[np.ndarray, ...]:
        n = self.clock
        return tuple(
            np.array([self._wcount.get((i, n + u), 0) for u in range(ni)], dtype=np.int64)
            for i, ni in enumerate(self.params.delay_ticks)
        )

    def snapshot(self) -> StepRecord:
        return StepRecord(self.clock, self.L, self.F, self.W, self.wgrid())

    def copy(self) -> "TangleState":
        other = TangleState(self.params, self.clock)
        other.tips = list(self.tips)
        other._pos = dict(self._pos)
        other.pending = {
            k: PendingInfo(list(v.directed_completions), v.completion, v.pow_type)
            for k, v in self.pending.items()
        }
        other.in_flight = defaultdict(list, {k: list(v) for k, v in self.in_flight.items()})
        other._due = defaultdict(set, {k: set(v) for k, v in self._due.items()})
        other._wcount = Counter(self._wcount)
        other.created = self.created
        other.history = dict(self.history)
        return other

    # -- mutation helpers
    def new_id(self) -> int:
        vid = self.created
        self.created += 1
        return vid

    def add_free_tip(self, vid: int) -> None:
        self._pos[vid] = len(self.tips)
        self.tips.append(vid)

    def remove_tip(self, vid: int) -> None:
        idx = self._pos.pop(vid)
        last = self.tips.pop()
        if last != vid:
            self.tips[idx] = last
            self._pos[last] = idx
        info = self.pending.pop(vid, None)
        if info is not None:
            self._due[info.completion].discard(vid)
            self._wcount[(info.pow_type, info.completion)] -= 1

    def direct(self, vid: int, completion: int, pow_type: int) -> None:
        """Record a POW finishing at ``completion`` directed at tip ``vid``."""
        info = self.pending.get(vid)
        if info is None:
            self.pending[vid] = PendingInfo.single(completion, pow_type)
            self._due[completion].add(vid)
            self._wcount[(pow_type, completion)] += 1
            return
        old = (info.completion, info.pow_type)
        info.add(completion, pow_type)
        if (info.completion, info.pow_type) != old:
            self._due[old[0]].discard(vid)
            self._wcount[old[::-1]] -= 1
            self._due[info.completion].add(vid)
            self._wcount[(info.pow_type, info.completion)] += 1

    def launch(self, vertex: Vertex) -> None:
        self.in_flight[vertex.completion_tick].append(vertex)


# ------------------------------------------------------------------ stepping

def step(state: TangleState, rng: np.random.Generator) -> tuple[TangleState, StepRecord]:
    """Advance ``state`` by one tick in place; return it with the tick's record."""
    params = state.params
    n = state.clock
    L = state.L
    if L == 0:
        raise EmptyTipSet(n)
    M = params.num_types
    N = params.batch_size
    dticks = params.delay_ticks

    types = rng.choice(M, size=N, p=params.probs)
    picks = rng.integers(0, L, size=(N, 2))

    record = state.snapshot()
    arrivals = np.bincount(types, minlength=M)
    free_selected = np.zeros(M, dtype=np.int64)
    jumps: Counter = Counter()

    min_type = np.full(L, M, dtype=np.int64)
    np.minimum.at(min_type, picks.ravel(), np.repeat(types, 2))
    tips = state.tips
    for pos in np.flatnonzero(min_type < M):
        k = int(min_type[pos])
        info = state.pending.get(tips[pos])
        if info is None:
            free_selected[k] += 1
        else:
            u = info.completion - n
            i = info.pow_type
            if k < i and dticks[k] <= u:
                jumps[(i, k, u)] += 1
    record.arrivals = arrivals
    record.free_selected = free_selected
    record.jumps = dict(jumps)

    parent_ids = [(tips[a], tips[b]) for a, b in picks.tolist()]

    # finish POWs due now; their targets stop being tips at n + 1
    for vid in sorted(state._due.pop(n, ())):
        state.remove_tip(vid)
    finished = state.in_flight.pop(n, [])

    for a in range(N):
        k = int(types[a])
        c = n + dticks[k]
        p0, p1 = parent_ids[a]
        vertex = Vertex(state.new_id(), n, k, c, (p0, p1))
        for p in (p0, p1) if p0 != p1 else (p0,):
            if p in state._pos:
                state.direct(p, c, k)
        state.launch(vertex)

    for vertex in finished:
        state.add_free_tip(vertex.id)

    state.clock = n + 1
    return state, record


# ------------------------------------------------------------ initialization

@dataclass(frozen=True)
class Warmup:
    """Start from ``N`` free genesis tips ``ticks`` before time 0."""

    ticks: int


@dataclass
class ExplicitHistory:
    """Initial condition given as count arrays.

    free, tips : F and L at ticks ``-2 n_M .. 0`` (length ``2 n_M + 1``).
    pending    : per type ``i``, W_i(0, u) for ``u = 0 .. n_i - 1``.
    arrivals   : shape ``(n_M, M)``, N_i at ticks ``-n_M .. -1``.
    free_selected : optional, same shape, F_i at ticks ``-n_M .. -1``.
    jumps      : optional, tick -> {(i, j, u): count} for ticks ``-n_M .. -1``.
    """

    free: Sequence[int]
    tips: Sequence[int]
    pending: Sequence[Sequence[int]]
    arrivals: np.ndarray
    free_selected: np.ndarray | None = None
    jumps: Mapping[int, Mapping[tuple[int, int, int], int]] | None = None


def genesis_state(params: ModelParams, clock: int) -> TangleState:
    state = TangleState(params, clock)
    for _ in range(params.batch_size):
        state.add_free_tip(state.new_id())
    return state


def state_from_tips(
    params: ModelParams,
    free: int,
    pending: Sequence[tuple[int, int]] = (),
    clock: int = 0,
) -> TangleState:
    """Build a state with ``free`` free tips and pending tips given as
    ``(type, rlt)`` pairs. Each pending tip gets one in-flight vertex whose POW
    determines its RLT."""
    dticks = params.delay_ticks
    state = TangleState(params, clock)
    for _ in range(free):
        state.add_free_tip(state.new_id())
    for i, u in pending:
        if not 0 <= u <= dticks[i] - 1:
            raise InconsistentHistory(
                f"type-{i} pending tip cannot have RLT {u} (max {dticks[i] - 1})"
            )
        vid = state.new_id()
        state.add_free_tip(vid)
        c = clock + u
        state.direct(vid, c, i)
        state.launch(Vertex(state.new_id(), c - dticks[i], i, c, (vid, vid)))
    return state


def _explicit_state(params: ModelParams, hist: ExplicitHistory) -> TangleState:
    dticks = params.delay_ticks
    M = params.num_types
    nM = params.max_delay_ticks
    H = params.history_ticks
    free = np.asarray(hist.free, dtype=np.int64)
    tips = np.asarray(hist.tips, dtype=np.int64)
    arrivals = np.asarray(hist.arrivals, dtype=np.int64)
    if len(free) < H + 1 or len(tips) < H + 1:
        raise InsufficientHistory(
            f"F and L histories need {H + 1} ticks, got {len(free)} and {len(tips)}"
        )
    if arrivals.ndim != 2 or arrivals.shape[0] < nM or arrivals.shape[1] != M:
        raise InsufficientHistory(f"arrivals must have shape ({nM}, {M})")
    free, tips, arrivals = free[-(H + 1):], tips[-(H + 1):], arrivals[-nM:]
    if len(hist.pending) != M or any(len(w) != d for w, d in zip(hist.pending, dticks)):
        raise InconsistentHistory("pending grids must have n_i entries per type")
    if np.any(free < 0) or np.any(tips < free):
        raise InconsistentHistory("need 0 <= F <= L at every history tick")
    if np.any(arrivals.sum(axis=1) != params.batch_size):
        raise InconsistentHistory("every history tick must have N arrivals")
    pending = [np.asarray(w, dtype=np.int64) for w in hist.pending]
    if free[-1] + sum(int(w.sum()) for w in pending) != tips[-1]:
        raise InconsistentHistory("L(0) must equal F(0) plus all pending tips")

    state = TangleState(params, 0)
    for _ in range(int(free[-1])):
        state.add_free_tip(state.new_id())
    for i in range(M):
        for j in range(-nM, 0):
            c = j + dticks[i]
            if c < 0:
                continue
            count = int(arrivals[j + nM, i])
            need = int(pending[i][c]) if c < dticks[i] else 0
            if need > 2 * count:
                raise InconsistentHistory(
                    f"{need} type-{i} pending tips with RLT {c} but only {count} "
                    f"type-{i} arrivals at tick {j} to direct POWs at them"
                )
            targets = []
            for _ in range(need):
                vid = state.new_id()
                state.add_free_tip(vid)
                state.direct(vid, c, i)
                targets.append(vid)
            targets += [SETTLED] * (2 * count - need)
            for a in range(count):
                state.launch(Vertex(state.new_id(), j, i, c, tuple(targets[2 * a: 2 * a + 2])))

    for j in range(-H, 0):
        rec = StepRecord(j, int(tips[j + H]), int(free[j + H]), int(tips[j + H] - free[j + H]))
        if j >= -nM:
            rec.arrivals = arrivals[j + nM].copy()
            if hist.free_selected is not None:
                rec.free_selected = np.asarray(hist.free_selected, dtype=np.int64)[-nM:][j + nM].copy()
            if hist.jumps is not None:
                rec.jumps = dict(hist.jumps.get(j, {}))
        state.history[j] = rec
    return state


def init_state(params: ModelParams, mode, rng: np.random.Generator | None = None) -> TangleState:
    """Create the state at tick 0 together with its history records.

    ``mode`` is a :class:`Warmup` (needs ``rng``) or an
    :class:`ExplicitHistory`. Warm-up seeds ``N`` free genesis tips at tick
    ``-k`` and simulates up to tick 0; records of the last ``2 n_M`` ticks
    are kept in ``state.history``.
    """
    H = params.history_ticks
    if isinstance(mode, ExplicitHistory):
        return _explicit_state(params, mode)
    if not isinstance(mode, Warmup):
        raise TypeError(f"unknown initialization mode {mode!r}")
    if mode.ticks < H:
        raise InsufficientHistory(
            f"warm-up of {mode.ticks} ticks is shorter than 2*n_M = {H}"
        )
    if rng is None:
        raise ValueError("warm-up initialization needs a random generator")
    state = genesis_state(params, -mode.ticks)
    while state.clock < 0:
        _, rec = step(state, rng)
        if rec.tick >= -H:
            state.history[rec.tick] = rec
    if state.L == 0:
        raise EmptyTangle("no tips left after warm-up")
    return state


def constant_history(params: ModelParams, l0: float) -> ExplicitHistory:
    """Explicit history holding ``L = lambda*l0`` and ``F = L/2`` constant.

    Arrivals per tick are split over types by largest remainder, and the
    ``L - F`` pending tips at time 0 are spread over the (type, RLT) cells in
    proportion to ``p_i``, never exceeding what the in-flight arrivals can
    support.
    """
    dticks = params.delay_ticks
    M = params.num_types
    nM = params.max_delay_ticks
    H = params.history_ticks
    L = int(round(params.lam * l0))
    F = L // 2 if L % 2 == 0 else (L + 1) // 2
    per_tick = _largest_remainder(params.batch_size, params.probs)
    arrivals = np.tile(per_tick, (nM, 1))
    cells = [(i, u) for i in range(M) for u in range(dticks[i])]
    cap = np.array([2 * per_tick[i] for i, _ in cells])
    weights = np.array([params.probs[i] for i, _ in cells])
    total = L - F
    if total > cap.sum():
        raise InconsistentHistory(
            f"{total} pending tips exceed the capacity {cap.sum()} of the in-flight POWs"
        )
    alloc = np.minimum(_largest_remainder(total, weights / weights.sum()), cap)
    while alloc.sum() < total:
        room = np.flatnonzero(alloc < cap)
        alloc[room[np.argmax(weights[room])]] += 1
    pending = [np.zeros(d, dtype=np.int64) for d in dticks]
    for (i, u), a in zip(cells, alloc):
        pending[i][u] = a
    return ExplicitHistory(
        free=[F] * (H + 1), tips=[L] * (H + 1), pending=pending, arrivals=arrivals
    )


def _largest_remainder(total: int, weights) -> np.ndarray:
    raw = np.asarray(weights, dtype=float) * total
    base = np.floor(raw).astype(np.int64)
    order = np.argsort(-(raw - base), kind="stable")
    base[order[: total - int(base.sum())]] += 1
    return base


# ------------------------------------------------------------------ runs

@dataclass
class Trajectory:
    """A simulated run: history before 0, ``n_T`` step records, and the
    state-only snapshot at tick ``n_T``."""

    params: ModelParams
    seed: int | None
    history: list[StepRecord]
    records: list[StepRecord]
    terminal: StepRecord
    _index: dict[int, StepRecord] = field(default=None, repr=False)

    def by_tick(self) -> dict[int, StepRecord]:
        if self._index is None:
            self._index = {r.tick: r for r in self.history + self.records + [self.terminal]}
        return self._index

    def snapshots(self) -> list[StepRecord]:
        """State records at ticks ``0 .. n_T``."""
        return self.records + [self.terminal]

    def counts(self) -> dict[str, np.ndarray]:
        snaps = self.snapshots()
        return {
            "tick": np.array([r.tick for r in snaps]),
            "L": np.array([r.L for r in snaps]),
            "F": np.array([r.F for r in snaps]),
            "W": np.array([r.W for r in snaps]),
        }


def run(params: ModelParams, seed: int | None = None, init=None) -> Trajectory:
    """Simulate ``n_T`` ticks. ``init`` defaults to a warm-up of
    ``10 n_M`` ticks; ``seed`` defaults to ``params.seed``.

    Identical seeds give identical trajectories. :class:`EmptyTipSet` carries
    the tick where the tangle ran dry.
    """
    seed = params.seed if seed is None else seed
    rng = make_rng(seed)
    if init is None:
        init = Warmup(default_warmup(params))
    state = init_state(params, init, rng)
    history = [state.history[t] for t in sorted(state.history)]
    records = []
    for _ in range(params.n_T):
        _, rec = step(state, rng)
        records.append(rec)
    return Trajectory(params, seed, history, records, state.snapshot())


# ------------------------------------------------------------ identities

@dataclass
class IdentityReport:
    tick: int
    evo_L_residual: int | None
    evo_W_residual: int | None


def _need(history: Mapping[int, StepRecord], tick: int, attr: str):
    rec = history.get(tick)
    value = getattr(rec, attr, None) if rec is not None else None
    if value is None:
        raise InsufficientHistory(f"no {attr} recorded for tick {tick}")
    return value


def _check(equation, tick, lhs, rhs, detail=""):
    if lhs != rhs:
        raise IdentityViolation(equation, tick, lhs, rhs, detail)


def check_step_identities(
    prev: StepRecord,
    next: StepRecord,
    params: ModelParams,
    history: Mapping[int, StepRecord],
) -> IdentityReport:
    """Verify the exact counting identities between ticks ``n`` and ``n+1``.

    Raises :class:`IdentityViolation` (tagged ``sum_N``, ``L=F+W``, ``evo_F``,
    ``evo_Wi1`` or ``evo_Wi2``) on the first failure. The tip-count balance
    and the pending-tip sum are evaluated as diagnostics and returned as
    residuals (``None`` when the history is too short to evaluate them).
    ``history`` maps ticks to records and must reach ``n_M`` ticks back.
    """
    n = prev.tick
    if next.tick != n + 1:
        raise ValueError(f"records are not consecutive: {n} -> {next.tick}")
    dticks = params.delay_ticks
    M = params.num_types

    _check("sum_N", n, int(prev.arrivals.sum()), params.batch_size)
    for rec in (prev, next):
        _check("L=F+W", rec.tick, rec.L, rec.F + rec.W)

    delayed = sum(int(_need(history, n - dticks[i], "arrivals")[i]) for i in range(M))
    _check("evo_F", n, next.F - prev.F, delayed - int(prev.free_selected.sum()))

    for i in range(M):
        inflow = int(prev.free_selected[i]) + sum(
            prev.jump(j, i, u)
            for j in range(i + 1, M)
            for u in range(dticks[i], dticks[j])
        )
        _check("evo_Wi1", n, int(next.wgrid[i][dticks[i] - 1]), inflow, f"type {i}")
        for u in range(1, dticks[i]):
            out = sum(prev.jump(i, j, u) for j in range(i) if dticks[j] <= u)
            _check(
                "evo_Wi2", n, int(next.wgrid[i][u - 1]), int(prev.wgrid[i][u]) - out,
                f"type {i}, u={u}",
            )

    try:
        res_L = (next.L - prev.L) - _evo_L_rhs(n, params, history)
    except InsufficientHistory:
        res_L = None
    try:
        res_W = prev.W - _evo_W_rhs(n, params, history)
    except InsufficientHistory:
        res_W = None
    return IdentityReport(n, res_L, res_W)


def _jump(history, tick, i, j, u):
    return _need(history, tick, "jumps").get((i, j, u), 0)


def _evo_L_rhs(n, params, history):
    dticks = params.delay_ticks
    M = params.num_types
    total = 0
    for i in range(M):
        total += int(_need(history, n - dticks[i], "arrivals")[i])
        total -= int(_need(history, n - dticks[i], "free_selected")[i])
    for i in range(M):
        for j in range(i):
            for u in range(dticks[j] + 1, dticks[i]):
                total -= _jump(history, n - dticks[j], i, j, u)
                total += _jump(history, n - u, i, j, u)
    return total


def _evo_W_rhs(n, params, history):
    dticks = params.delay_ticks
    M = params.num_types
    total = 0
    for i in range(M):
        for s in range(1, dticks[i] + 1):
            total += int(_need(history, n - s, "free_selected")[i])
    for i in range(M):
        for j in range(i):
            for s in range(dticks[j] + 1, dticks[i]):
                for u in range(s, dticks[i]):
                    total -= _jump(history, n - s, i, j, u)
    return total


def check_run_identities(traj: Trajectory) -> list[IdentityReport]:
    """Run :func:`check_step_identities` over every consecutive pair."""
    index = traj.by_tick()
    snaps = traj.snapshots()
    return [
        check_step_identities(a, b, traj.params, index)
        for a, b in zip(snaps[:-1], snaps[1:])
    ]


# ------------------------------------------------------------------ output

def write_series_csv(traj: Trajectory, path) -> None:
    """``tick, t, L, F, W, N_1..N_M, F_1..F_M`` for ticks ``0 .. n_T``."""
    params = traj.params
    M = params.num_types
    header = ["tick", "t", "L", "F", "W"]
    header += [f"N_{i + 1}" for i in range(M)] + [f"F_{i + 1}" for i in range(M)]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for rec in traj.snapshots():
            row = [rec.tick, repr(params.time(rec.tick)), rec.L, rec.F, rec.W]
            if rec.arrivals is None:
                row += [""] * (2 * M)
            else:
                row += [int(x) for x in rec.arrivals] + [int(x) for x in rec.free_selected]
            w.writerow(row)


def write_wgrid_csv(traj: Trajectory, path) -> None:
    """``tick, type, u_ticks, count`` (types 1-based)."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["tick", "type", "u_ticks", "count"])
        for rec in traj.snapshots():
            for i, grid in enumerate(rec.wgrid):
                for u, c in enumerate(grid):
                    w.writerow([rec.tick, i + 1, u, int(c)])
