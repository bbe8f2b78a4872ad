"""Model parameters, tick arithmetic, config files and replica seeding.

All times inside the package are integer tick counts; a tick is one
inter-arrival period ``epsilon``. Real-valued times are derived on demand
(``tick * epsilon``) and never accumulated.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Any, Mapping

import numpy as np

from .errors import (
    BadProbabilities,
    MissingKey,
    NonDivisibleDelay,
    NonIncreasingDelays,
    NonPositive,
    ParamsError,
    UnknownKey,
)

PROB_TOL = 1e-12
_GRID_TOL = 1e-9
_RENORM_SLACK = 16 * np.finfo(float).eps
_MASK64 = (1 << 64) - 1

REQUIRED_KEYS = ("epsilon", "batch_size", "delays", "probs", "horizon")


def _as_ticks(value: float, epsilon: float) -> int | None:
    """Return value/epsilon if it is (numerically) an integer, else None."""
    ratio = value / epsilon
    n = round(ratio)
    if abs(ratio - n) > _GRID_TOL * max(1.0, abs(ratio)):
        return None
    return int(n)


@dataclass(frozen=True)
class ModelParams:
    """Validated parameters of the batch-arrival tangle model.

    Build instances with :func:`validate_params`; the constructor does not
    check anything.
    """

    epsilon: float
    batch_size: int
    delays: tuple[float, ...]
    probs: tuple[float, ...]
    horizon: float
    seed: int = 0

    @property
    def lam(self) -> float:
        """Arrival rate, ``batch_size / epsilon``."""
        return self.batch_size / self.epsilon

    @property
    def num_types(self) -> int:
        return len(self.delays)

    @property
    def delay_ticks(self) -> tuple[int, ...]:
        return tuple(_as_ticks(h, self.epsilon) for h in self.delays)

    @property
    def max_delay_ticks(self) -> int:
        return self.delay_ticks[-1]

    @property
    def n_T(self) -> int:
        return _as_ticks(self.horizon, self.epsilon)

    @property
    def history_ticks(self) -> int:
        """Length of the initial-condition window, ``2 h_M / epsilon``."""
        return 2 * self.max_delay_ticks

    def time(self, tick: int) -> float:
        return tick * self.epsilon

    def as_dict(self) -> dict[str, Any]:
        return {
            "epsilon": self.epsilon,
            "batch_size": self.batch_size,
            "delays": list(self.delays),
            "probs": list(self.probs),
            "horizon": self.horizon,
            "seed": self.seed,
        }

    def replace(self, **changes) -> "ModelParams":
        raw = self.as_dict()
        raw.update(changes)
        return validate_params(raw)


def _positive(name, value):
    if not value > 0:
        raise NonPositive(f"{name} must be positive, got {value!r}")


def validate_params(raw: Mapping[str, Any]) -> ModelParams:
    """Check a key/value mapping and return a :class:`ModelParams`.

    ``seed`` is optional (defaults to 0). Probabilities summing to 1 within
    ``1e-12`` are accepted and renormalized.
    """
    missing = [k for k in REQUIRED_KEYS if k not in raw]
    if missing:
        raise MissingKey(f"missing parameter(s): {', '.join(missing)}")

    epsilon = float(raw["epsilon"])
    _positive("epsilon", epsilon)
    batch = raw["batch_size"]
    if int(batch) != batch:
        raise ParamsError(f"batch_size must be an integer, got {batch!r}")
    batch = int(batch)
    _positive("batch_size", batch)
    horizon = float(raw["horizon"])
    _positive("horizon", horizon)

    delays = tuple(float(h) for h in np.atleast_1d(raw["delays"]))
    probs = np.asarray(np.atleast_1d(raw["probs"]), dtype=float)
    if len(delays) == 0:
        raise ParamsError("at least one delay is required")
    if len(delays) != len(probs):
        raise ParamsError(
            f"{len(delays)} delays but {len(probs)} probabilities"
        )
    for h in delays:
        _positive("delay", h)
    if any(b <= a for a, b in zip(delays, delays[1:])):
        raise NonIncreasingDelays(f"delays must be strictly increasing: {delays}")
    for h in delays:
        if _as_ticks(h, epsilon) is None:
            raise NonDivisibleDelay(
                f"delay {h} is not an integer multiple of epsilon={epsilon}"
            )
    if _as_ticks(horizon, epsilon) is None:
        raise NonDivisibleDelay(
            f"horizon {horizon} is not an integer multiple of epsilon={epsilon}"
        )

    if not np.all(np.isfinite(probs)) or np.any(probs <= 0) or np.any(probs > 1):
        raise BadProbabilities(f"probabilities must lie in (0, 1]: {probs.tolist()}")
    total = math.fsum(probs)
    if abs(total - 1.0) > PROB_TOL:
        raise BadProbabilities(f"probabilities sum to {total!r}, not 1")
    # Only rescale when the sum is off by more than rounding noise, so that
    # re-validating an already normalized record is a no-op.
    if abs(total - 1.0) > _RENORM_SLACK:
        probs = probs / total

    seed = int(raw.get("seed", 0)) & _MASK64
    return ModelParams(
        epsilon=epsilon,
        batch_size=batch,
        delays=delays,
        probs=tuple(float(p) for p in probs),
        horizon=horizon,
        seed=seed,
    )


def derive_replica_seed(master_seed: int, replica_index: int) -> int:
    """SplitMix64 mix of ``master_seed + (replica_index + 1) * golden``.

    The additive step is injective in ``replica_index`` (the golden-ratio
    increment is odd) and the finalizer is a bijection on 64-bit words, so
    distinct replicas of one run never share a seed. The value depends only
    on its two arguments, never on execution order.
    """
    if replica_index < 0:
        raise ValueError("replica_index must be non-negative")
    z = (int(master_seed) + (replica_index + 1) * 0x9E3779B97F4A7C15) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def make_rng(seed: int) -> np.random.Generator:
    """Counter-based Philox generator keyed by a 64-bit seed."""
    return np.random.Generator(np.random.Philox(key=int(seed) & _MASK64))


def exact_fraction(x: float) -> Fraction:
    """Decimal-faithful rational for a float read from a config file."""
    return Fraction(repr(float(x)))


def common_step(values) -> Fraction:
    """Largest step dividing every value exactly (as decimal rationals)."""
    fracs = [exact_fraction(v) for v in values]
    den = math.lcm(*(f.denominator for f in fracs))
    g = 0
    for f in fracs:
        g = math.gcd(g, f.numerator * (den // f.denominator))
    return Fraction(g, den)


# ---------------------------------------------------------------- config files

@dataclass(frozen=True)
class RunConfig:
    """Parameters plus the run-level settings of a config file."""

    params: ModelParams
    replicas: int = 1
    init_mode: str = "warmup"
    init_warmup: int | None = None
    output_dir: str = "."

    @property
    def warmup_ticks(self) -> int:
        if self.init_warmup is not None:
            return self.init_warmup
        return default_warmup(self.params)


INIT_MODES = ("warmup", "equilibrium")


def default_warmup(params: ModelParams) -> int:
    return 10 * params.max_delay_ticks


_CONFIG_KEYS = {
    "epsilon": float,
    "batch_size": int,
    "delays": lambda s: [float(x) for x in s.split(",") if x.strip()],
    "probs": lambda s: [float(x) for x in s.split(",") if x.strip()],
    "horizon": float,
    "seed": int,
    "replicas": int,
    "init_mode": str,
    "init_warmup": int,
    "output_dir": str,
}


def parse_config(text: str) -> RunConfig:
    """Parse ``key = value`` lines (arrays comma separated, ``#`` comments)."""
    raw: dict[str, Any] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParamsError(f"line {lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in _CONFIG_KEYS:
            raise UnknownKey(f"line {lineno}: unknown key {key!r}")
        if key in raw:
            raise ParamsError(f"line {lineno}: duplicate key {key!r}")
        try:
            raw[key] = _CONFIG_KEYS[key](value)
        except ValueError as exc:
            raise ParamsError(f"line {lineno}: bad value for {key}: {exc}") from None

    params = validate_params({k: raw[k] for k in REQUIRED_KEYS + ("seed",) if k in raw})
    init_mode = raw.get("init_mode", "warmup")
    if init_mode not in INIT_MODES:
        raise ParamsError(f"init_mode must be one of {INIT_MODES}, got {init_mode!r}")
    replicas = raw.get("replicas", 1)
    if replicas < 1:
        raise NonPositive("replicas must be >= 1")
    warmup = raw.get("init_warmup")
    if warmup is not None and warmup < params.history_ticks:
        raise ParamsError(
            f"init_warmup={warmup} ticks is shorter than the required "
            f"history of {params.history_ticks} ticks"
        )
    return RunConfig(
        params=params,
        replicas=replicas,
        init_mode=init_mode,
        init_warmup=warmup,
        output_dir=raw.get("output_dir", "."),
    )


def load_config(path) -> RunConfig:
    return parse_config(Path(path).read_text())
