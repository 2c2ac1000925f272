import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

import oracles
from pdwave import coeff
from pdwave import propagator as prop
from pdwave.errors import FrameSingular


def test_constant_monodromy_matches_expm(constant):
    for xi in (0.3, 1.0, 2.5, 12.0):
        m = prop.monodromy(constant, 0.0, xi)
        assert np.allclose(m, oracles.constant_propagator(1.0, xi, 1.0), atol=1e-10)


def test_square_wave_matches_exact_product(square):
    xi = np.array([0.2, 1.0, 3.3, 9.0])
    m = prop.monodromy_family(square, xi)[0]
    for j, x in enumerate(xi):
        ref = oracles.square_monodromy(0.5, 1.5, 0.5, 1.0, x)
        assert np.allclose(m[j], ref, atol=1e-10)


def test_sinusoid_matches_magnus(sinusoid):
    b = oracles.sinusoid_b(1.0, 0.5)
    for xi in (0.5, 4.0):
        ref = oracles.magnus4(b, xi, 0.0, 1.0, steps=2000)
        assert np.allclose(prop.monodromy(sinusoid, 0.0, xi), ref, atol=1e-9)


def test_scalar_chart_matches_expm(constant):
    p = prop.propagate(constant, [0.7], [2.0], chart="scalar")[0, 0]
    assert np.allclose(p, oracles.constant_propagator(1.0, 0.7, 2.0, "scalar"), atol=1e-10)


def test_liouville_and_similarity(profiles):
    xi = np.linspace(0.1, 20.0, 40)
    ts = np.array([0.0, 0.21, 0.5, 0.93])
    for p in profiles.values():
        m = prop.monodromy_family(p, xi, ts)
        target = math.exp(-2 * p.beta * p.period)
        assert np.max(np.abs(prop.det2(m) / target - 1)) < 1e-8
        # M(t) is similar to M(0): same trace
        assert np.allclose(prop.trace2(m), prop.trace2(m[0])[None], atol=1e-9)


def test_monodromy_family_matches_direct(sinusoid):
    xi, t = 3.1, 0.37
    fam = prop.monodromy_family(sinusoid, [xi], [t])[0, 0]
    assert np.allclose(fam, prop.monodromy(sinusoid, t, xi), atol=1e-9)


def test_fundamental_solution_backwards(sinusoid):
    fwd = prop.fundamental_solution(sinusoid, 2.0, 0.5, 1.3)
    bwd = prop.fundamental_solution(sinusoid, 0.5, 2.0, 1.3)
    assert np.allclose(fwd @ bwd, np.eye(2), atol=1e-9)


def test_threads_do_not_change_results(sinusoid):
    xi = np.linspace(0.1, 10.0, 200)
    serial = prop.monodromy_family(sinusoid, xi)
    threaded = prop.monodromy_family(sinusoid, xi, opts=prop.IntegratorOptions(workers=3))
    assert np.array_equal(serial, threaded)


def test_rk45_agrees(sinusoid):
    a = prop.monodromy(sinusoid, 0.0, 2.0)
    b = prop.monodromy(sinusoid, 0.0, 2.0, opts=prop.IntegratorOptions(method="RK45"))
    assert np.allclose(a, b, atol=1e-8)


def test_options_validation():
    with pytest.raises(ValueError):
        prop.IntegratorOptions(method="Euler")
    with pytest.raises(ValueError):
        prop.IntegratorOptions(rtol=0.0)
    with pytest.raises(ValueError):
        prop.IntegratorOptions(max_step=2.0).step_for(1.0)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.complex_numbers(max_magnitude=10, allow_nan=False, allow_infinity=False),
                min_size=4, max_size=4))
def test_operator_norm_matches_svd(entries):
    m = np.array(entries).reshape(2, 2)
    assert prop.operator_norm(m) == pytest.approx(np.linalg.norm(m, 2), rel=1e-9, abs=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 200))
def test_monodromy_power(k):
    m = np.array([[0.9, 0.2], [-0.1, 0.7]])
    assert np.allclose(prop.monodromy_power(m, k), np.linalg.matrix_power(m, k), atol=1e-14)


def test_monodromy_power_rejects_zero():
    with pytest.raises(ValueError):
        prop.monodromy_power(np.eye(2), 0)


# -- high-frequency frame ---------------------------------------------------

def _quad_n(profile, t, xi, sign):
    re, _ = integrate.quad(lambda s: profile.b(s) * math.cos(2 * xi * (t - s)), 0, t, limit=400,
                           epsabs=1e-13, points=list(profile.breakpoints(0, t)) or None)
    im, _ = integrate.quad(lambda s: profile.b(s) * math.sin(2 * xi * (t - s)), 0, t, limit=400,
                           epsabs=1e-13, points=list(profile.breakpoints(0, t)) or None)
    return re + 1j * sign * im


@pytest.mark.parametrize("xi", [5.0, 50.0])
def test_n_pm_matches_quadrature(profiles, xi):
    for p in profiles.values():
        t = 1.7
        ref_p, ref_m = _quad_n(p, t, xi, +1), _quad_n(p, t, xi, -1)
        npl, nmi = prop.n_pm(p, t, xi)
        # linear interpolation of b: second-order in the panel width
        assert abs(npl - ref_p) < 1e-6 and abs(nmi - ref_m) < 1e-6
        npl, nmi = prop.n_pm(p, t, xi, per_period=8192)
        assert abs(npl - ref_p) < 5e-9 and abs(nmi - ref_m) < 5e-9


def test_n_pm_bound_and_decay(profiles):
    for p in profiles.values():
        sups = []
        for xi in (50.0, 100.0):
            frame = prop.build_frame(p, xi)
            sup = float(np.max(np.abs(frame.n_plus)))
            assert sup <= prop.n_pm_bound(p, 2 * p.period, xi)
            sups.append(sup)
        # O(1/|xi|) over a window: doubling xi roughly halves the sup
        assert 0.3 < sups[1] / sups[0] < 0.7


def test_n1_solves_its_system(sinusoid):
    xi = 20.0
    frame = prop.build_frame(sinusoid, xi)
    t = frame.t
    x12 = frame.N1[:, 0, 1]
    x21 = frame.N1[:, 1, 0]
    d12 = np.gradient(x12, t, edge_order=2)
    d21 = np.gradient(x21, t, edge_order=2)
    r12, r21 = prop.n1_residual(sinusoid, xi, t, x12, x21)
    inner = slice(5, -5)
    assert np.max(np.abs(d12 - r12)[inner]) < 1e-3
    assert np.max(np.abs(d21 - r21)[inner]) < 1e-3


def test_r2_is_small_at_high_frequency(constant):
    lo = prop.build_frame(constant, 10.0).sup_R2
    hi = prop.build_frame(constant, 40.0).sup_R2
    assert hi < 0.5 * lo


def test_frame_singular_at_low_frequency():
    with pytest.raises(FrameSingular):
        prop.build_frame(coeff.Constant(3.0), 0.5)


@pytest.mark.parametrize("xi", [8.0, 16.0])
def test_product_representation_matches_direct(profiles, xi):
    for p in profiles.values():
        for t in (0.0, 0.41):
            rep = prop.product_representation(p, t, xi)
            direct = prop.monodromy_family(p, [xi], [t])[0, 0]
            assert np.max(np.abs(rep.matrix - direct)) < 1e-8
            assert prop.operator_norm(rep.Q) <= math.exp(rep.int_norm_R2) * (1 + 1e-9)
            assert rep.prefactor == pytest.approx(math.exp(-p.beta * p.period))


def test_contraction_criterion_implies_contraction(sinusoid):
    xi = 32.0
    value = prop.contraction_criterion(sinusoid, xi)
    assert value < math.exp(sinusoid.beta * sinusoid.period)
    ts = np.linspace(0, 1, 16, endpoint=False)
    norms = prop.operator_norm(prop.monodromy_family(sinusoid, [xi], ts))
    bound = math.exp(-sinusoid.beta * sinusoid.period) * value
    assert np.all(norms <= bound * (1 + 1e-9))
