import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from pdwave import coeff
from pdwave.errors import InvalidProfile, UnsupportedFamily


def test_constant_values():
    p = coeff.Constant(2.0, period=3.0)
    assert p.beta == 2.0
    assert np.allclose(p.b([0.0, 1.7, 100.0]), 2.0)
    assert p.lam(1.5) == pytest.approx(math.exp(3.0))


def test_sinusoid_mean_and_primitive():
    p = coeff.Sinusoid(1.0, 0.5, 0.3, period=2.0)
    assert p.beta == 1.0
    for t in (0.4, 1.3, 5.7):
        ref, _ = integrate.quad(p.b, 0.0, t, epsabs=1e-13, limit=200)
        assert p.log_lambda(t) == pytest.approx(ref, rel=1e-12)


def test_square_wave_levels_and_breakpoints():
    p = coeff.SquareWave(0.5, 1.5, 0.25, period=2.0)
    assert p.b(0.1) == 0.5 and p.b(0.6) == 1.5
    assert p.beta == pytest.approx(0.25 * 0.5 + 0.75 * 1.5)
    assert np.allclose(p.breakpoints(0.0, 4.0), [0.5, 2.0, 2.5])
    assert p.b_side(0.5, -1) == 0.5 and p.b_side(0.5, +1) == 1.5
    assert p.b_side(2.0, -1) == 1.5
    assert p.total_variation() == pytest.approx(2.0)


def test_fourier_series_primitive():
    p = coeff.FourierSeries(1.0, cos=(0.2, 0.1), sin=(0.3,), period=1.5)
    t = 2.2
    ref, _ = integrate.quad(p.b, 0.0, t, epsabs=1e-13, limit=200)
    assert p.log_lambda(t) == pytest.approx(ref, rel=1e-12)
    d = (p.b(t + 1e-6) - p.b(t - 1e-6)) / 2e-6
    assert p.db(t) == pytest.approx(d, rel=1e-6)


@pytest.mark.parametrize("build", [
    lambda: coeff.Constant(-1.0),
    lambda: coeff.Constant(1.0, period=-1.0),
    lambda: coeff.Sinusoid(1.0, 1.5),
    lambda: coeff.SquareWave(-0.1, 1.0),
    lambda: coeff.SquareWave(0.0, 0.0),
    lambda: coeff.SquareWave(0.5, 1.0, duty=1.0),
    lambda: coeff.FourierSeries(0.1, cos=(1.0,)),
])
def test_invalid_profiles(build):
    with pytest.raises(InvalidProfile):
        build()


def test_hill_potential():
    p = coeff.Sinusoid(1.0, 0.5)
    t = 0.3
    expected = 4.0 - p.b(t) ** 2 - p.db(t)
    assert coeff.hill_potential(p, t, 2.0) == pytest.approx(expected)
    with pytest.raises(UnsupportedFamily):
        coeff.hill_potential(coeff.SquareWave(0.5, 1.5), t, 2.0)


def test_round_trip_dict():
    for p in (coeff.Constant(1.0), coeff.Sinusoid(1.0, 0.5, 0.1, 2.0),
              coeff.SquareWave(0.5, 1.5, 0.3), coeff.FourierSeries(1.0, (0.1,), (0.2, 0.05))):
        assert coeff.profile_from_dict(p.to_dict()) == p
    with pytest.raises(InvalidProfile):
        coeff.profile_from_dict({"family": "triangle"})


@settings(max_examples=40, deadline=None)
@given(b0=st.floats(0.1, 5.0), ratio=st.floats(0.0, 1.0), phase=st.floats(-3.0, 3.0),
       period=st.floats(0.2, 5.0), t=st.floats(0.0, 50.0), k=st.integers(1, 20))
def test_lambda_quasi_periodic(b0, ratio, phase, period, t, k):
    p = coeff.Sinusoid(b0, ratio * b0, phase, period)
    lhs = p.log_lambda(t + k * period)
    rhs = p.log_lambda(t) + k * p.beta * period
    assert lhs == pytest.approx(rhs, rel=1e-11, abs=1e-10)
    assert p.b(t + k * period) == pytest.approx(p.b(t), abs=1e-9)
