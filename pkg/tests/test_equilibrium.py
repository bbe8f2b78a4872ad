import math

import numpy as np
import pytest
from scipy.integrate import quad
from scipy.special import lambertw

from tangle_fluid.equilibrium import (
    bisect,
    equilibrium_general,
    equilibrium_m2,
    m2_equation,
    pending_level,
    profile_mass,
    stationary_profile_fn,
)
from tangle_fluid.errors import NoBracket, ParamsError
from tangle_fluid.params import validate_params

# l e^{-1/l} = 2  <=>  (1/l) e^{1/l} = 1/2
L_STAR_HALF = 1 / float(lambertw(0.5).real)


def test_m2_symmetric_case_against_lambert_w():
    res = equilibrium_m2(delays=(1, 2), probs=(0.5, 0.5))
    assert res.l_star == pytest.approx(L_STAR_HALF, abs=1e-12)
    assert res.l_star == pytest.approx(2.843, abs=5e-4)
    assert res.residual < 1e-12
    assert res.f_star == res.w_star == res.l_star / 2


def test_m2_without_second_type():
    res = equilibrium_m2(delays=(1, 2), probs=(1.0, 0.0))
    assert res.l_star == 2.0


def test_m2_profiles():
    res = equilibrium_m2(delays=(1, 2), probs=(0.5, 0.5), dt=0.01)
    w2 = res.profiles[1]
    assert w2[-1] == pytest.approx(0.5, abs=1e-15)
    upper = res.u_grid[1] >= 1
    assert np.all(w2 > 0)
    assert np.all(np.diff(w2[upper]) > 0)
    assert np.all(res.profiles[0] == 0.5)
    # the boundary-consistent w_1 carries extra inflow from type 2
    assert res.notes["w1_boundary_gap"] > 0


@pytest.mark.parametrize("delays, probs", [
    ((1, 2), (0.5, 0.5)), ((1, 3), (0.3, 0.7)), ((0.5, 2.5), (0.8, 0.2)), ((1, 2), (0.9, 0.1)),
])
def test_solvers_agree(delays, probs):
    a = equilibrium_m2(delays=delays, probs=probs)
    b = equilibrium_general(delays=delays, probs=probs)
    assert abs(a.l_star - b.l_star) < 1e-8
    assert a.residual < 1e-12
    assert 2 * delays[0] <= a.l_star <= 2 * delays[1]


@pytest.mark.parametrize("h", [0.5, 1.0, 1.5, 7.0])
def test_single_type(h):
    res = equilibrium_general(delays=(h,), probs=(1.0,))
    assert abs(res.l_star - 2 * h) < 1e-9
    assert abs(res.f_star - h) < 1e-9


def test_three_type_anchor():
    res = equilibrium_general(delays=(1, 2, 3), probs=(1 / 3, 1 / 3, 1 / 3))
    assert 2 < res.l_star < 6
    assert res.residual < 1e-9
    assert res.l_star == pytest.approx(3.686603059929706, abs=1e-12)


def test_newton_opt_in():
    a = equilibrium_general(delays=(1, 2, 3), probs=(0.2, 0.3, 0.5))
    b = equilibrium_general(delays=(1, 2, 3), probs=(0.2, 0.3, 0.5), method="newton")
    assert b.l_star == pytest.approx(a.l_star, abs=1e-10)


def test_pending_level_matches_quadrature():
    delays, probs, l = (1, 2, 3), (0.2, 0.3, 0.5), 3.3
    prof = stationary_profile_fn(l, delays, probs)

    def w(i, u):
        return prof(i, [u])[0]

    level = sum(p * h for p, h in zip(probs, delays))
    for i in range(3):
        for j in range(i):
            val, _ = quad(lambda u: (u - delays[j]) * w(i, u), delays[j], delays[i],
                          points=list(delays), epsabs=1e-13)
            level -= 2 / l * probs[j] * val
    assert pending_level(l, delays, probs) == pytest.approx(level, abs=1e-11)
    mass = sum(quad(lambda u: w(i, u), 0, h, points=list(delays), epsabs=1e-13)[0]
               for i, h in enumerate(delays))
    assert profile_mass(l, delays, probs) == pytest.approx(mass, abs=1e-11)


def test_boundary_consistent_profiles_close_the_balance():
    res = equilibrium_general(delays=(1, 2), probs=(0.5, 0.5))
    assert abs(res.notes["route_gap"]) < 1e-12


def test_m2_equation_sign_on_bracket():
    for p1 in (0.1, 0.3, 0.5, 0.7, 0.9):
        probs = (p1, 1 - p1)
        assert m2_equation(2.0, (1, 2), probs) <= 0
        assert m2_equation(4.0, (1, 2), probs) > 0


def test_no_bracket_reported():
    with pytest.raises(NoBracket):
        bisect(lambda x: x * x + 1, -1.0, 1.0)


def test_accepts_params():
    p = validate_params(dict(epsilon=0.05, batch_size=20, delays=[1, 2], probs=[0.5, 0.5], horizon=50))
    assert equilibrium_general(p).l_star == pytest.approx(L_STAR_HALF, abs=1e-12)
    with pytest.raises(ParamsError):
        equilibrium_m2(delays=(1, 2, 3), probs=(0.2, 0.3, 0.5))
    with pytest.raises(ParamsError):
        equilibrium_general(delays=(2, 1), probs=(0.5, 0.5))
