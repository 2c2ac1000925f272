import math

import numpy as np
import pytest
from scipy import integrate

import oracles
from pdwave import coeff, estimates as est, spectral, zones
from pdwave.errors import DegenerateDenominator, InsufficientSamples, QuadratureNotConverged


# -- quadrature and data ------------------------------------------------------------

@pytest.mark.parametrize("sigma", [-0.9, 0.0, 2.0, 3.1])
def test_radial_rule_moments(sigma):
    xi, w = est.radial_rule(sigma, 10.0)
    assert np.sum(w * xi**sigma * np.exp(-xi**2)) == pytest.approx(0.5 * math.gamma((sigma + 1) / 2),
                                                                   rel=1e-12)


def test_radial_rule_rejects_nonintegrable():
    with pytest.raises(ValueError):
        est.radial_rule(-1.0, 1.0)


@pytest.mark.parametrize("n", [1, 2, 3, 5])
def test_initial_norms_are_gaussian_moments(n):
    for data in (est.RadialData(n=n), est.RadialData.edge(n)):
        u, g, d = est.energy_norms(coeff.Constant(1.0), data, 0.0)
        assert u**2 == pytest.approx(oracles.gaussian_moment(n, data.power, 0), rel=1e-8)
        assert g**2 == pytest.approx(oracles.gaussian_moment(n, data.power, 1), rel=1e-8)
        assert d == 0.0


def test_n3_gaussian_norm_is_pi_three_halves():
    u, _, _ = est.energy_norms(coeff.Constant(1.0), est.RadialData(n=3), 0.0)
    assert u**2 == pytest.approx(math.pi**1.5, rel=1e-12)


def test_radial_data_validation():
    with pytest.raises(ValueError):
        est.RadialData(n=3, power=-1.5)
    with pytest.raises(ValueError):
        est.RadialData(n=7)


def test_quadrature_check_detects_coarse_grid(constant):
    with pytest.raises(QuadratureNotConverged):
        est.energy_norms(constant, est.RadialData(nodes=64), 0.0)


# -- mode evolution ------------------------------------------------------------------

def test_evolve_at_time_zero(sinusoid):
    assert est.evolve_mode(sinusoid, 1.3, (0.4, -0.7), 0.0) == pytest.approx((0.4, -0.7))


@pytest.mark.parametrize("t", [0.5, 7.0, 55.0, 1000.0])
def test_zero_frequency_keeps_constant_data(sinusoid, t):
    u, ut = est.evolve_mode(sinusoid, 0.0, (1.0, 0.0), t)
    assert u == pytest.approx(1.0, abs=1e-9) and ut == pytest.approx(0.0, abs=1e-9)


def test_constant_closed_form():
    u, ut = est.evolve_mode(coeff.Constant(1.0), 0.5, (1.0, 0.0), 3.0)
    ref = oracles.constant_mode(1.0, 0.5, 3.0, 1.0, 0.0)
    assert u == pytest.approx(ref[0], abs=1e-8) and ut == pytest.approx(ref[1], abs=1e-8)


def test_constant_closed_form_long_time():
    for xi in (0.3, 2.0):
        u, ut = est.evolve_mode(coeff.Constant(1.0), xi, (1.0, 0.5), 250.5)
        ref = oracles.constant_mode(1.0, xi, 250.5, 1.0, 0.5)
        assert u == pytest.approx(ref[0], rel=1e-6, abs=1e-14)


def test_evolve_paths_agree(profiles):
    xi = np.array([0.02, 0.1, 0.3, 0.45])
    ts = np.array([2.5, 9.0, 19.75])
    for p in profiles.values():
        a = est.evolve_modes(p, xi, 1.0, 0.3, ts, method="direct")
        b = est.evolve_modes(p, xi, 1.0, 0.3, ts, method="monodromy")
        c = est.evolve_modes(p, xi, 1.0, 0.3, ts, method="floquet")
        for x, y in ((a, b), (a, c), (b, c)):
            assert np.max(np.abs(x[0] - y[0])) < 1e-6
            assert np.max(np.abs(x[1] - y[1])) < 1e-6


def test_mode_energy_is_nonincreasing(profiles):
    xi = np.array([0.1, 0.9, 3.0, 11.0])
    ts = np.linspace(0.0, 12.0, 241)
    for p in profiles.values():
        u, ut = est.evolve_modes(p, xi, 1.0, -0.4, ts, method="direct")
        energy = xi**2 * u**2 + ut**2
        steps = np.diff(energy, axis=0)
        assert np.all(steps <= 1e-9 * energy[:-1])


def test_energy_identity(sinusoid):
    # d/dt (|xi|^2 |u|^2 + |u_t|^2) / 2 = -2 b |u_t|^2
    xi = 1.4
    ts = np.linspace(0.0, 3.0, 3001)
    u, ut = est.evolve_modes(sinusoid, [xi], 1.0, 0.0, ts, method="direct")
    e = 0.5 * (xi**2 * u[:, 0] ** 2 + ut[:, 0] ** 2)
    de = np.gradient(e, ts, edge_order=2)
    rhs = -2.0 * sinusoid.b(ts) * ut[:, 0] ** 2
    assert np.max(np.abs(de - rhs)[2:-2]) < 1e-5


def test_energy_norms_dissipative(sinusoid):
    data = est.RadialData(n=3, a2=0.5)
    _, g0, d0 = est.energy_norms(sinusoid, data, 0.0)
    for t in (1.0, 10.0, 300.0):
        _, g, d = est.energy_norms(sinusoid, data, t, check=False)
        assert g**2 + d**2 <= (g0**2 + d0**2) * (1 + 1e-9)


def test_solution_norm_bounded_by_data(sinusoid):
    data = est.RadialData.edge(3, a1=1.0, a2=1.0)
    times = np.concatenate([[0.0, 1.0, 10.0], est.stroboscopic_times(1.0, 1e2, 1e4, 12)])
    u, _, _ = est.energy_trace(sinusoid, data, times)
    scale = data.sobolev_norm(1) + data.sobolev_norm(2, -1)
    assert np.max(u.values) / scale <= 3.0


# -- slopes --------------------------------------------------------------------

def test_decay_slope_exact():
    t = np.geomspace(1e2, 1e4, 20)
    fit = est.decay_slope(est.NormTrace(t, 1 / (1 + t), "x"))
    assert fit.slope == pytest.approx(-1.0, abs=1e-12)
    assert est.decay_slope(est.NormTrace(t, np.full_like(t, 3.0), "c")).slope == pytest.approx(0, abs=1e-12)


def test_decay_slope_needs_samples():
    t = np.geomspace(1e2, 1e4, 7)
    with pytest.raises(InsufficientSamples):
        est.decay_slope(est.NormTrace(t, 1 / t, "x"))


def test_stroboscopic_times():
    t = est.stroboscopic_times(0.7)
    assert np.allclose(t / 0.7, np.round(t / 0.7))
    assert 25 <= t.size <= 30 and t[0] >= 99 and t[-1] <= 1e4 + 0.7


# -- multipliers -------------------------------------------------------------------

def test_multiplier_gradient_rate(sinusoid):
    ts = est.stroboscopic_times(1.0, 1e2, 1e4, 12)
    fit = est.decay_slope(est.multiplier_trace(sinusoid, ts, 2.0, 3, "gradient"))
    assert fit.slope == pytest.approx(est.multiplier_rate(2.0, 3, "gradient"), abs=0.05)


def test_multiplier_sup_norm(constant):
    a = est.multiplier_lr_norm(constant, 50.0, math.inf, 3, "solution")
    assert a == pytest.approx(1.0, abs=1e-3)
    g1 = est.multiplier_lr_norm(constant, 100.0, math.inf, 3, "gradient", check=False)
    g2 = est.multiplier_lr_norm(constant, 400.0, math.inf, 3, "gradient", check=False)
    assert g1 / g2 == pytest.approx(2.0, rel=0.02)


def test_multiplier_argument_checks(constant):
    with pytest.raises(ValueError):
        est.multiplier_lr_norm(constant, 1.0, 2.0, 3, "laplacian")
    with pytest.raises(ValueError):
        est.multiplier_lr_norm(constant, 0.0, 2.0, 3, "solution")
    with pytest.raises(ValueError):
        est.multiplier_lr_norm(constant, 1.0, 0.5, 3, "solution")


def test_difference_multiplier_bound(sinusoid):
    xi = np.geomspace(1e-3, spectral.small_frequency_cutoff(sinusoid), 60)
    # off-period times so that f_+(t) differs from f_+(0) = 1
    ts = np.array([1.3, 10.55, 100.25, 1000.7, 1e4 + 0.9])
    a2 = spectral.alpha2_integral(sinusoid)
    fd = spectral.floquet_data(sinusoid, xi, np.mod(ts, 1.0), which=("plus",))
    nu = np.real(fd.nu_plus)
    t = ts[:, None]
    lhs = np.abs(np.exp(-nu * t) * fd.f_plus - np.exp(-a2 * xi**2 * t))
    rhs = np.exp(-nu * t) * xi**2 + np.exp(-np.minimum(nu, a2 * xi**2) * t) * xi**4 * t
    live = rhs > 1e-250
    assert np.all(lhs[~live] < 1e-250)
    c = np.max(lhs[live] / rhs[live])
    # one constant for the whole grid, and bounded
    assert c < 10.0


# -- high-frequency part -------------------------------------------------------------

def test_smooth_ramp():
    x = np.linspace(0.0, 3.0, 301)
    r = est.smooth_ramp(x, 1.0)
    assert np.all(r[x <= 1.0] == 0.0) and np.all(r[x >= 2.0] == 1.0)
    assert np.all(np.diff(r) >= 0)


def test_exponential_tail_initial_value(constant):
    data = est.RadialData()
    tail = est.exponential_tail(constant, data, 0.5, [0.0])
    xi, w = data.grid()
    chi = est.smooth_ramp(xi, 0.5)
    u = data.u1(xi)
    expected = math.sqrt(np.sum(w * chi**2 * u**2)) + math.sqrt(np.sum(w * chi**2 * xi**2 * u**2))
    assert tail.values[0] == pytest.approx(expected, rel=1e-12)


def test_exponential_tail_certificate_rate(sinusoid):
    cert = zones.certify(sinusoid)
    data = est.RadialData()
    ts = np.array([10.0, 20.0, 40.0, 80.0])
    tail = est.exponential_tail(sinusoid, data, cert.c, ts, cert)
    ratios = tail.values[1:] / tail.values[:-1]
    assert np.all(ratios <= np.exp(-cert.delta_band * np.diff(ts)) * 1.05)
    with pytest.raises(ValueError):
        est.exponential_tail(sinusoid, data, 0.5 * cert.c, ts, cert)


def test_exponential_tail_constant_rate(constant):
    ts = np.arange(10.0, 41.0, 2.0)
    tail = est.exponential_tail(constant, est.RadialData(), 1.0, ts)
    assert -est.exponential_rate(tail, (10.0, 40.0)).slope >= 0.9


# -- diffusion phenomenon ---------------------------------------------------------

def test_w0_constant():
    u1, u2 = np.array([1.0, 2.0]), np.array([0.5, -1.0])
    w0 = est.w0_from_data(u1, u2, 2.0, 0.0)
    assert np.allclose(w0, u1 + u2 / 4.0)
    assert np.allclose(est.w0_from_data(0.0, u2, 2.0, 0.0), u2 / 4.0)


def test_w0_linear_in_u2(sinusoid):
    g = spectral.gamma(sinusoid)
    assert 2 * sinusoid.beta - g > 0
    assert est.w0_from_data(0.0, 1.0, 1.0, g) == pytest.approx(1 / (2 - g))
    with pytest.raises(DegenerateDenominator):
        est.w0_from_data(1.0, 1.0, 1.0, 2.0)


def test_w0_matches_zero_frequency_limit(sinusoid):
    # u_hat(t, 0) = u1 + u2 int_0^t lambda^-2 tends to the heat datum at xi = 0
    g = spectral.gamma(sinusoid)
    c1, c2 = est.w0_coefficients(sinusoid.beta, g)
    u, _ = est.evolve_mode(sinusoid, 0.0, (0.8, 0.3), 200.0)
    assert u == pytest.approx(c1 * 0.8 + c2 * 0.3, rel=1e-9)
    p1, _ = est.w0_coefficients(sinusoid.beta, g, printed=True)
    assert abs(p1 - c1) > 0.05


def test_heat_mode():
    assert est.heat_mode(0.5, 1.0, 2.0, 0.0) == 2.0
    assert est.heat_mode(0.5, 0.0, 2.0, 1e6) == 2.0
    assert est.heat_mode(0.5, 1.0, 1.0, 2.0) == pytest.approx(0.367879, abs=1e-6)
    with pytest.raises(ValueError):
        est.heat_mode(0.0, 1.0, 1.0, 1.0)


def test_diffusion_control_runs(sinusoid):
    data = est.RadialData.edge(3, a1=1.0, a2=1.0)
    ts = est.stroboscopic_times(1.0, 1e2, 1e4, 10)
    k = est.diffusion_constants(sinusoid)
    good = est.diffusion_difference(sinusoid, data, ts, constants=k)
    bad = est.diffusion_difference(sinusoid, data, ts, constants=k, w0_scale=1.1)
    plain = est.diffusion_difference(sinusoid, data, ts, constants=k, subtract=False)
    assert good.values[-1] <= 0.5 * bad.values[-1]
    assert abs(est.decay_slope(plain, (1e2, 1e4)).slope) < 0.05
