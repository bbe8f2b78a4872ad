import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from tangle_fluid.errors import (
    BadProbabilities,
    MissingKey,
    NonDivisibleDelay,
    NonIncreasingDelays,
    NonPositive,
    ParamsError,
    UnknownKey,
)
from tangle_fluid.params import (
    common_step,
    derive_replica_seed,
    make_rng,
    parse_config,
    validate_params,
)

FIG = dict(epsilon=0.05, batch_size=20, delays=[1, 2], probs=[0.5, 0.5], horizon=50, seed=7)


def test_figure_parameters():
    p = validate_params(FIG)
    assert p.lam == pytest.approx(400)
    assert p.delay_ticks == (20, 40)
    assert p.n_T == 1000
    assert p.history_ticks == 80


def test_single_type():
    p = validate_params(dict(epsilon=0.1, batch_size=10, delays=[1.0], probs=[1.0], horizon=10))
    assert p.lam == pytest.approx(100)
    assert p.num_types == 1
    assert p.delay_ticks == (10,)


@pytest.mark.parametrize("change, exc", [
    (dict(epsilon=0.3), NonDivisibleDelay),
    (dict(horizon=50.01), NonDivisibleDelay),
    (dict(delays=[2, 1]), NonIncreasingDelays),
    (dict(delays=[1, 1]), NonIncreasingDelays),
    (dict(probs=[0.5, 0.6]), BadProbabilities),
    (dict(probs=[1.0, 0.0]), BadProbabilities),
    (dict(epsilon=0), NonPositive),
    (dict(batch_size=-1), NonPositive),
    (dict(horizon=-5), NonPositive),
    (dict(batch_size=2.5), ParamsError),
])
def test_rejections(change, exc):
    with pytest.raises(exc):
        validate_params(dict(FIG, **change))


def test_missing_key():
    raw = dict(FIG)
    del raw["probs"]
    with pytest.raises(MissingKey):
        validate_params(raw)


def test_decimal_probabilities_renormalized():
    p = validate_params(dict(FIG, delays=[1, 2, 3], probs=[0.1, 0.2, 0.7 + 5e-13]))
    assert sum(p.probs) == pytest.approx(1, abs=1e-15)


@settings(max_examples=200, deadline=None)
@given(
    k=st.integers(1, 20),
    n=st.integers(1, 200),
    w=st.lists(st.floats(0.01, 1.0), min_size=1, max_size=5),
    T=st.integers(1, 100),
)
def test_validate_is_idempotent(k, n, w, T):
    eps = 1.0 / k
    probs = np.array(w) / np.sum(w)
    delays = [float(i + 1) for i in range(len(w))]
    p = validate_params(dict(epsilon=eps, batch_size=n, delays=delays, probs=probs, horizon=T))
    again = validate_params(p.as_dict())
    assert again == p
    assert p.lam * p.epsilon == pytest.approx(n, rel=1e-15)
    assert all(a < b for a, b in zip(p.delay_ticks, p.delay_ticks[1:]))
    assert all(isinstance(d, int) and d > 0 for d in p.delay_ticks)


def test_replica_seed_frozen_and_injective():
    assert derive_replica_seed(7, 0) == 7191089600892374487
    assert derive_replica_seed(7, 1) != derive_replica_seed(7, 2)
    assert derive_replica_seed(7, 5) == derive_replica_seed(7, 5)
    seeds = {derive_replica_seed(7, k) for k in range(10_000)}
    assert len(seeds) == 10_000
    with pytest.raises(ValueError):
        derive_replica_seed(7, -1)


def test_rng_reproducible():
    a = make_rng(123).integers(0, 1 << 30, 10)
    b = make_rng(123).integers(0, 1 << 30, 10)
    assert np.array_equal(a, b)


def test_common_step():
    assert float(common_step([1, 2, 50])) == 1.0
    assert float(common_step([0.5, 1.25])) == 0.25


def test_parse_config():
    cfg = parse_config(
        """
        # figure scenario
        epsilon = 0.05
        batch_size = 20
        delays = 1, 2
        probs = 0.5, 0.5
        horizon = 50
        seed = 7
        replicas = 10
        init_mode = warmup
        init_warmup = 400
        output_dir = out
        """
    )
    assert cfg.params == validate_params(FIG)
    assert cfg.replicas == 10 and cfg.warmup_ticks == 400 and cfg.output_dir == "out"


@pytest.mark.parametrize("text, exc", [
    ("epsilon = 0.1\ncolour = red\n", UnknownKey),
    ("epsilon = 0.1\nepsilon = 0.2\n", ParamsError),
    ("epsilon 0.1\n", ParamsError),
])
def test_config_errors(text, exc):
    with pytest.raises(exc):
        parse_config(text)


def test_config_short_warmup():
    text = "epsilon=0.05\nbatch_size=20\ndelays=1,2\nprobs=.5,.5\nhorizon=50\ninit_warmup=79\n"
    with pytest.raises(ParamsError):
        parse_config(text)
