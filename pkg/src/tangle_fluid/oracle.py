"""Exact one-tick expectations on tiny tip sets by brute-force enumeration.

Every assignment of POW types to the ``N`` arrivals (weight ``prod p``) and
every one of the ``L**(2N)`` equally likely parent tuples is visited, and the
counts are accumulated in exact rational arithmetic.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Sequence

from .errors import InconsistentHistory, ParamsError, TooLarge
from .params import ModelParams, exact_fraction, validate_params

MAX_TIPS = 6
MAX_BATCH = 3
MAX_TYPES = 3

FREE = None


@dataclass(frozen=True)
class TinyInstance:
    """A tip set at one tick.

    ``tips[k]`` is ``None`` for a free tip or ``(type, rlt)`` for a pending
    tip, with 0-based type and RLT in ticks. ``delays`` are tick counts.
    """

    tips: tuple
    batch_size: int
    probs: tuple
    delays: tuple[int, ...]

    def __post_init__(self):
        M = len(self.delays)
        if len(self.probs) != M:
            raise ParamsError("probs and delays differ in length")
        if any(b <= a for a, b in zip(self.delays, self.delays[1:])) or self.delays[0] < 1:
            raise ParamsError("delays must be increasing positive tick counts")
        for tip in self.tips:
            if tip is FREE:
                continue
            i, u = tip
            if not (0 <= i < M and 0 <= u < self.delays[i]):
                raise InconsistentHistory(f"pending tip {tip} is impossible for delays {self.delays}")

    @property
    def L(self) -> int:
        return len(self.tips)

    @property
    def F(self) -> int:
        return sum(t is FREE for t in self.tips)

    @property
    def num_types(self) -> int:
        return len(self.delays)

    def pending_grid(self) -> list[list[int]]:
        grid = [[0] * d for d in self.delays]
        for tip in self.tips:
            if tip is not FREE:
                grid[tip[0]][tip[1]] += 1
        return grid

    def fractions(self) -> list[Fraction]:
        return [exact_fraction(p) for p in self.probs]

    def check_size(self):
        if self.L > MAX_TIPS or self.batch_size > MAX_BATCH or self.num_types > MAX_TYPES:
            raise TooLarge(
                f"enumeration limited to L<={MAX_TIPS}, N<={MAX_BATCH}, M<={MAX_TYPES}; "
                f"got L={self.L}, N={self.batch_size}, M={self.num_types}"
            )

    def to_params(self) -> ModelParams:
        """Parameters with a unit tick, for driving the simulator."""
        return validate_params(dict(
            epsilon=1.0, batch_size=self.batch_size, delays=list(self.delays),
            probs=list(self.probs), horizon=1.0,
        ))

    def free_and_pending(self) -> tuple[int, list[tuple[int, int]]]:
        return self.F, [t for t in self.tips if t is not FREE]


@dataclass
class Expectations:
    """``N[i]``, ``F[i]`` and ``J[(i, j, u)]`` (0-based types, RLT in ticks)."""

    N: list
    F: list
    J: dict

    def as_rows(self):
        rows = [("N", i + 1, "", "", v) for i, v in enumerate(self.N)]
        rows += [("F", i + 1, "", "", v) for i, v in enumerate(self.F)]
        rows += [("J", i + 1, j + 1, u, v) for (i, j, u), v in sorted(self.J.items())]
        return rows


def _jump_keys(inst: TinyInstance):
    d = inst.delays
    return [
        (i, j, u)
        for i in range(inst.num_types)
        for j in range(i)
        for u in range(d[j], d[i])
    ]


def enumerate_expectations(inst: TinyInstance) -> Expectations:
    """Exact E[N_i], E[F_i] and E[J_{i,j}(u)] for one tick."""
    inst.check_size()
    M, N, L = inst.num_types, inst.batch_size, inst.L
    d = inst.delays
    probs = inst.fractions()
    parent_tuples = list(itertools.product(range(L), repeat=2 * N))
    total_tuples = len(parent_tuples)

    EN = [Fraction(0)] * M
    EF = [Fraction(0)] * M
    EJ = {key: Fraction(0) for key in _jump_keys(inst)}

    for assignment in itertools.product(range(M), repeat=N):
        weight = Fraction(1)
        for k in assignment:
            weight *= probs[k]
        if weight == 0:
            continue
        for k in assignment:
            EN[k] += weight
        # integer tallies over all parent tuples for this type assignment
        f_tally = [0] * M
        j_tally = dict.fromkeys(EJ, 0)
        for parents in parent_tuples:
            chosen_by: dict[int, set] = {}
            for slot, tip in enumerate(parents):
                chosen_by.setdefault(tip, set()).add(assignment[slot // 2])
            for tip, kinds in chosen_by.items():
                info = inst.tips[tip]
                if info is FREE:
                    f_tally[min(kinds)] += 1
                    continue
                i, u = info
                faster = [j for j in kinds if j < i and d[j] <= u]
                if faster:
                    j_tally[(i, min(faster), u)] += 1
        for k in range(M):
            EF[k] += weight * Fraction(f_tally[k], total_tuples)
        for key, c in j_tally.items():
            EJ[key] += weight * Fraction(c, total_tuples)
    return Expectations(EN, EF, EJ)


def leading_order_expectations(inst: TinyInstance) -> Expectations:
    """The large-L approximations ``2 N p_i F / L`` and ``2 N p_j W_i(u) / L``."""
    L = inst.L
    if L < 1:
        raise ValueError("need at least one tip")
    N = inst.batch_size
    p = inst.fractions()
    grid = inst.pending_grid()
    EN = [N * pi for pi in p]
    EF = [Fraction(2 * N * inst.F, L) * pi for pi in p]
    EJ = {(i, j, u): Fraction(2 * N * grid[i][u], L) * p[j] for (i, j, u) in _jump_keys(inst)}
    return Expectations(EN, EF, EJ)


# ------------------------------------------------------------- instance files

def parse_instance(text: str) -> TinyInstance:
    """Read ``key = value`` lines: ``tips``, ``batch_size``, ``probs``,
    ``delays`` (in ticks). Tips are comma separated, each ``free`` or
    ``pending:TYPE:RLT`` with a 1-based type."""
    raw = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParamsError(f"line {lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in ("tips", "batch_size", "probs", "delays"):
            raise ParamsError(f"line {lineno}: unknown key {key!r}")
        raw[key] = value
    missing = {"tips", "batch_size", "probs", "delays"} - raw.keys()
    if missing:
        raise ParamsError(f"missing key(s): {', '.join(sorted(missing))}")
    tips = []
    for item in raw["tips"].split(","):
        item = item.strip().lower()
        if item == "free":
            tips.append(FREE)
        elif item.startswith("pending:"):
            try:
                _, t, u = item.split(":")
                tips.append((int(t) - 1, int(u)))
            except ValueError:
                raise ParamsError(f"bad tip entry {item!r}") from None
        else:
            raise ParamsError(f"bad tip entry {item!r}")
    return TinyInstance(
        tips=tuple(tips),
        batch_size=int(raw["batch_size"]),
        probs=tuple(float(x) for x in raw["probs"].split(",")),
        delays=tuple(int(x) for x in raw["delays"].split(",")),
    )


def load_instance(path) -> TinyInstance:
    return parse_instance(Path(path).read_text())


def instance(tips: Sequence, batch_size: int, probs: Sequence[float], delays: Sequence[int]) -> TinyInstance:
    return TinyInstance(tuple(tips), batch_size, tuple(probs), tuple(delays))
