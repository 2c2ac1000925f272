"""Decay measurements on radial frequency data.

Every norm here is a Plancherel quadrature over |xi|; for radial data

    ||u||^2 = omega_n int_0^inf |u_hat(t, r)|^2 r^(n-1) dr

with omega_n the area of the unit sphere.  No (2 pi)^-n factor is applied,
so t = 0 norms of Gaussian data are simple Gamma-function moments.

Data near the edge of L^2 (a power |xi|^p with 2p + n slightly above 0)
make the algebraic rates sharp; plain Gaussians decay faster than the
worst case.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy import special

from . import propagator as prop
from . import spectral
from .errors import (DegenerateDenominator, InsufficientSamples, QuadratureNotConverged)
from .propagator import DEFAULT_OPTIONS

DIRECT_PERIODS = 20
QUAD_SPLIT = 1e-3
PANEL_NODES = 32
QUAD_RTOL = 1e-6


def sphere_area(n):
    """omega_n = 2 pi^(n/2) / Gamma(n/2)."""
    return 2.0 * math.pi ** (n / 2) / math.gamma(n / 2)


# -- quadrature --------------------------------------------------------------

@lru_cache(maxsize=64)
def _radial_rule(sigma, upper, nodes, split):
    if nodes % PANEL_NODES or nodes < 2 * PANEL_NODES:
        raise ValueError(f"node count must be a multiple of {PANEL_NODES}, at least {2 * PANEL_NODES}")
    split = min(split, upper / 10)
    x, w = special.roots_jacobi(PANEL_NODES, 0.0, sigma)
    xi0 = 0.5 * split * (1.0 + x)
    # weights for int h, valid when h / r^sigma is smooth
    w0 = (0.5 * split) ** (sigma + 1) * w / xi0**sigma
    edges = np.geomspace(split, upper, nodes // PANEL_NODES)
    gx, gw = np.polynomial.legendre.leggauss(PANEL_NODES)
    a, b = edges[:-1, None], edges[1:, None]
    xi1 = 0.5 * (b - a) * gx + 0.5 * (a + b)
    w1 = 0.5 * (b - a) * gw
    return np.concatenate([xi0, xi1.ravel()]), np.concatenate([w0, w1.ravel()])


def radial_rule(sigma, upper, nodes=2048, split=QUAD_SPLIT):
    """Nodes and weights for int_0^upper h(r) dr with h ~ r^sigma at 0.

    A Gauss-Jacobi panel absorbs the endpoint singularity on [0, split];
    geometric Gauss-Legendre panels of 32 nodes cover the rest.
    """
    if not sigma > -1:
        raise ValueError(f"integrand r^{sigma} is not integrable at 0")
    return _radial_rule(float(sigma), float(upper), int(nodes), float(split))


# -- data ------------------------------------------------------------------

@dataclass(frozen=True)
class RadialData:
    """u_hat_j(r) = a_j r^power exp(-r^2 / 2) in dimension n."""

    n: int = 3
    power: float = 0.0
    a1: float = 1.0
    a2: float = 0.0
    xi_max: float = 32.0
    nodes: int = 2048

    def __post_init__(self):
        if not (isinstance(self.n, int) and 1 <= self.n <= 6):
            raise ValueError(f"dimension must be an integer in 1..6, got {self.n}")
        if not 2 * self.power + self.n > 0:
            raise ValueError("data are not square integrable: need 2 power + n > 0")
        if not self.xi_max > 0:
            raise ValueError("xi_max must be positive")

    @classmethod
    def edge(cls, n=3, a1=1.0, a2=0.0, margin=0.05, **kw):
        """Data just inside L^2, for which the algebraic decay rates are sharp."""
        return cls(n=n, power=-n / 2 + margin, a1=a1, a2=a2, **kw)

    @property
    def sigma(self):
        """Exponent of |u_hat|^2 r^(n-1) at r = 0."""
        return 2 * self.power + self.n - 1

    def profile(self, xi):
        xi = np.asarray(xi, dtype=float)
        with np.errstate(divide="ignore"):
            return xi**self.power * np.exp(-0.5 * xi**2)

    def u1(self, xi):
        return self.a1 * self.profile(xi)

    def u2(self, xi):
        return self.a2 * self.profile(xi)

    def grid(self, nodes=None):
        """(xi, w) with sum w h(xi) ~ omega_n int h r^(n-1) dr."""
        xi, w = radial_rule(self.sigma, self.xi_max, nodes or self.nodes)
        return xi, w * sphere_area(self.n) * xi ** (self.n - 1)

    def sobolev_norm(self, which, s=0.0):
        """||<xi>^s u_j||_{L^2} of the data, by quadrature."""
        xi, w = self.grid()
        u = self.u1(xi) if which == 1 else self.u2(xi)
        return math.sqrt(float(np.sum(w * (1 + xi**2) ** s * u**2)))


@dataclass
class NormTrace:
    times: np.ndarray
    values: np.ndarray
    label: str

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.times.shape != self.values.shape:
            raise ValueError("times and values must have the same length")
        if not np.all(np.isfinite(self.values)):
            raise ValueError(f"non-finite values in trace {self.label!r}")

    def rows(self):
        return list(zip(self.times.tolist(), self.values.tolist()))


@dataclass
class SlopeFit:
    slope: float
    intercept: float
    max_residual: float
    window: tuple
    samples: int
    abscissa: str = "log(1+t)"

    def to_dict(self):
        return {"slope": self.slope, "intercept": self.intercept,
                "max_residual": self.max_residual, "window": list(self.window),
                "samples": self.samples, "abscissa": self.abscissa}


def stroboscopic_times(period, lo=1e2, hi=1e4, count=30):
    """About ``count`` log-spaced multiples of the period in [lo, hi].

    Sampling at whole periods removes the periodic wobble of f+- from slope
    fits.
    """
    ell = np.unique(np.round(np.geomspace(lo, hi, count) / period))
    return ell[ell > 0] * period


def _fit(x, y, window, abscissa):
    a, b = np.polyfit(x, y, 1)
    res = float(np.max(np.abs(y - (a * x + b))))
    return SlopeFit(float(a), float(b), res, tuple(window), int(x.size), abscissa)


def _window(trace, window, min_samples=8):
    lo, hi = window
    sel = (trace.times >= lo) & (trace.times <= hi) & (trace.values > 0)
    if sel.sum() < min_samples:
        raise InsufficientSamples(f"{sel.sum()} samples in window {window}, need {min_samples}")
    return trace.times[sel], trace.values[sel]


def decay_slope(trace, window=(1e2, 1e4)):
    """Least-squares slope of log value against log(1 + t)."""
    t, v = _window(trace, window)
    return _fit(np.log1p(t), np.log(v), window, "log(1+t)")


def exponential_rate(trace, window):
    """Least-squares slope of log value against t."""
    t, v = _window(trace, window)
    return _fit(t, np.log(v), window, "t")


# -- mode evolution ----------------------------------------------------------

def _split_periods(times, period):
    ell = np.floor(times / period + 1e-12)
    s = times - ell * period
    s = np.where(np.abs(s) < 1e-12 * period, 0.0, np.maximum(s, 0.0))
    return ell.astype(np.int64), s


def mode_propagators(profile, freqs, times, opts=DEFAULT_OPTIONS, method="auto"):
    """Scalar-chart fundamental matrices P(t, 0, xi); shape (nt, nf, 2, 2).

    ``method="direct"`` integrates up to max t; ``"monodromy"`` uses
    P(lT + s, 0) = P(s, 0) P(T, 0)^l; ``"auto"`` integrates directly while
    all times are below 20 periods.
    """
    freqs = np.atleast_1d(np.asarray(freqs, dtype=float))
    times = np.atleast_1d(np.asarray(times, dtype=float))
    if np.any(times < 0):
        raise ValueError("times must be nonnegative")
    T = profile.period
    if method == "auto":
        method = "direct" if times.max() <= DIRECT_PERIODS * T else "monodromy"
    if method == "direct":
        return prop.propagate(profile, freqs, times, chart="scalar", opts=opts)
    if method != "monodromy":
        raise ValueError(f"unknown method {method!r}")
    ell, s = _split_periods(times, T)
    s_uniq, s_inv = np.unique(s, return_inverse=True)
    base = prop.propagate(profile, freqs, np.concatenate([[T], s_uniq]), chart="scalar", opts=opts)
    pT, ps = base[0], base[1:]
    out = np.empty((times.size,) + pT.shape)
    powers = {}
    for i, (l, si) in enumerate(zip(ell, s_inv.ravel())):
        if l not in powers:
            powers[l] = prop.monodromy_power(pT, l) if l > 0 else np.broadcast_to(np.eye(2), pT.shape)
        out[i] = ps[si] @ powers[l]
    return out


def evolve_modes(profile, freqs, u1, u2, times, opts=DEFAULT_OPTIONS, method="auto"):
    """(u_hat, d_t u_hat) at every (t, xi); arrays of shape (nt, nf).

    ``method="floquet"`` uses the Phi_1, Phi_2 representation, which is only
    available inside the small-frequency instability interval.
    """
    freqs = np.atleast_1d(np.asarray(freqs, dtype=float))
    u1 = np.broadcast_to(np.asarray(u1, dtype=float), freqs.shape)
    u2 = np.broadcast_to(np.asarray(u2, dtype=float), freqs.shape)
    if method == "floquet":
        phi1, phi2, dphi1, dphi2 = spectral.phi_basis_floquet(profile, freqs, times, opts)
        return (np.real(phi1) * u1 + np.real(phi2) * u2,
                np.real(dphi1) * u1 + np.real(dphi2) * u2)
    p = mode_propagators(profile, freqs, times, opts, method)
    return (p[..., 0, 0] * u1 + p[..., 0, 1] * u2,
            p[..., 1, 0] * u1 + p[..., 1, 1] * u2)


def evolve_mode(profile, freq, data, t, opts=DEFAULT_OPTIONS, method="auto"):
    """(u_hat(t), d_t u_hat(t)) for a single frequency and data (u1_hat, u2_hat)."""
    if freq < 0:
        raise ValueError("radial frequency must be nonnegative")
    u, ut = evolve_modes(profile, [freq], data[0], data[1], [t], opts, method)
    return float(u[0, 0]), float(ut[0, 0])


# -- energy norms --------------------------------------------------------------

def _norms(xi, w, u, ut, chi=None):
    wc = w if chi is None else w * chi**2
    au, aut = np.abs(u) ** 2, np.abs(ut) ** 2
    return (np.sqrt(au @ wc), np.sqrt((au * xi**2) @ wc), np.sqrt(aut @ wc))


def _check(coarse, fine, what):
    coarse, fine = np.asarray(coarse), np.asarray(fine)
    rel = np.abs(coarse - fine) / np.maximum(np.abs(fine), 1e-300)
    if np.any(rel > QUAD_RTOL):
        raise QuadratureNotConverged(f"{what}: doubling the nodes changed the result by {rel.max():.2e}")


def energy_trace(profile, data, times, opts=DEFAULT_OPTIONS, check=False, method="auto"):
    """Three NormTraces (u, grad u, d_t u) in L^2 at the given times.

    With ``check=True`` the computation is repeated on twice the nodes and
    :class:`QuadratureNotConverged` is raised on a relative change > 1e-6.
    """
    times = np.atleast_1d(np.asarray(times, dtype=float))

    def run(nodes):
        xi, w = data.grid(nodes)
        u, ut = evolve_modes(profile, xi, data.u1(xi), data.u2(xi), times, opts, method)
        return _norms(xi, w, u, ut)

    vals = run(data.nodes)
    if check:
        _check(np.array(vals), np.array(run(2 * data.nodes)), "energy norms")
    labels = ("u_L2", "grad_u_L2", "dt_u_L2")
    return tuple(NormTrace(times, v, lab) for v, lab in zip(vals, labels))


def energy_norms(profile, data, t, opts=DEFAULT_OPTIONS, check=True):
    """(||u||, ||grad u||, ||d_t u||) in L^2 at time t."""
    return tuple(float(tr.values[0]) for tr in energy_trace(profile, data, [t], opts, check))


# -- multiplier norms ------------------------------------------------------------

WEIGHTS = ("solution", "gradient", "time_derivative")


def multiplier_trace(profile, times, r, n, weight, cutoff=None, opts=DEFAULT_OPTIONS,
                     nodes=1024, check=False):
    """L^r norms of the low-frequency multiplier chi(xi) |xi|^a e^{-nu_+ t} f_+(t, xi).

    ``weight`` picks a = 0 (solution), a = 1 (gradient) or, for the time
    derivative, |e^{-nu_+ t}| (|nu_+| |f_+| + |d_t f_+|).  chi is the sharp
    indicator of |xi| <= cutoff (default tau_0 / 2).  ``r = inf`` is a
    maximum over the nodes.
    """
    if weight not in WEIGHTS:
        raise ValueError(f"weight must be one of {WEIGHTS}")
    if not r >= 1:
        raise ValueError("need 1 <= r <= inf")
    times = np.atleast_1d(np.asarray(times, dtype=float))
    if np.any(times <= 0):
        raise ValueError("multiplier norms need t > 0")
    c = spectral.small_frequency_cutoff(profile, opts) if cutoff is None else float(cutoff)
    a = 1.0 if weight == "gradient" else 0.0
    # d_t f_+ and nu_+ both vanish like |xi|^2
    lead = 2.0 if weight == "time_derivative" else a
    sigma = n - 1 + (lead * r if math.isfinite(r) else 0.0)

    def run(m):
        xi, w = radial_rule(sigma, c, m)
        s = np.mod(times, profile.period)
        s_uniq, s_inv = np.unique(s, return_inverse=True)
        fd = spectral.floquet_data(profile, xi, s_uniq, opts, allow_complex=False, which=("plus",))
        nu = np.real(fd.nu_plus)[None, :]
        f = np.abs(fd.f_plus[s_inv.ravel()])
        decay = np.exp(-nu * times[:, None])
        if weight == "time_derivative":
            mult = decay * (np.abs(nu) * f + np.abs(fd.dtf_plus[s_inv.ravel()]))
        else:
            mult = decay * xi[None, :] ** a * f
        if not math.isfinite(r):
            return mult.max(axis=1)
        wm = sphere_area(n) * w * xi ** (n - 1)
        return (mult**r @ wm) ** (1.0 / r)

    vals = run(nodes)
    if check:
        _check(vals, run(2 * nodes), "multiplier norm")
    return NormTrace(times, vals, f"multiplier_{weight}_L{r}")


def multiplier_lr_norm(profile, t, r, n, weight, opts=DEFAULT_OPTIONS, cutoff=None, check=True):
    return float(multiplier_trace(profile, [t], r, n, weight, cutoff, opts, check=check).values[0])


def multiplier_rate(r, n, weight):
    """Predicted exponent of t for :func:`multiplier_trace`."""
    base = -n / (2 * r) if math.isfinite(r) else 0.0
    return base + {"solution": 0.0, "gradient": -0.5, "time_derivative": -1.0}[weight]


# -- high frequencies ------------------------------------------------------------

def smooth_ramp(xi, c):
    """C^infinity function equal to 0 below c and 1 above 2c."""
    x = np.clip((np.asarray(xi, dtype=float) - c) / c, 0.0, 1.0)

    def g(y):
        out = np.zeros_like(y)
        pos = y > 0
        out[pos] = np.exp(-1.0 / y[pos])
        return out

    return g(x) / (g(x) + g(1.0 - x))


def exponential_tail(profile, data, cutoff, times, cert=None, opts=DEFAULT_OPTIONS):
    """||chi u|| + ||chi grad u|| + ||chi d_t u|| with chi the ramp on [c, 2c]."""
    if cert is not None and cutoff < cert.c:
        raise ValueError(f"cutoff {cutoff} lies below the certified c = {cert.c}")
    xi, w = data.grid()
    u, ut = evolve_modes(profile, xi, data.u1(xi), data.u2(xi), times, opts)
    total = sum(_norms(xi, w, u, ut, smooth_ramp(xi, cutoff)))
    return NormTrace(times, total, "high_frequency_energy")


# -- diffusion phenomenon ---------------------------------------------------------

def w0_coefficients(beta, gamma, printed=False):
    """Weights (c1, c2) in w0_hat = c1 u1_hat + c2 u2_hat.

    c2 = 1 / (2 beta - gamma).  Matching Phi_1 at xi = 0, where
    Phi_1(t, 0) = 1, gives c1 = 1/2 + (beta - gamma/2)/(2 beta - gamma) = 1;
    ``printed=True`` returns the variant 1/2 + (beta - gamma)/(2 beta - gamma),
    which agrees only when gamma = 0.
    """
    d = 2.0 * beta - gamma
    if abs(d) < 1e-12:
        raise DegenerateDenominator("2 beta - gamma vanishes")
    c1 = 0.5 + (beta - gamma) / d if printed else 0.5 + (beta - 0.5 * gamma) / d
    return c1, 1.0 / d


def w0_from_data(u1, u2, beta, gamma, printed=False):
    """Fourier datum of the heat flow matched to the damped wave."""
    c1, c2 = w0_coefficients(beta, gamma, printed)
    return c1 * np.asarray(u1) + c2 * np.asarray(u2)


def heat_mode(alpha2, freq, w0, t):
    """exp(-alpha2 |xi|^2 t) w0_hat."""
    if not alpha2 > 0:
        raise ValueError("alpha2 must be positive")
    return np.exp(-alpha2 * np.asarray(freq) ** 2 * np.asarray(t)) * w0


@dataclass
class DiffusionConstants:
    alpha2: float
    gamma: float
    beta: float
    w0_coefficients: tuple = field(default=())


def diffusion_constants(profile):
    a2 = spectral.alpha2_integral(profile)
    g = spectral.gamma(profile)
    beta = profile.beta
    return DiffusionConstants(a2, g, beta, w0_coefficients(beta, g))


def diffusion_difference(profile, data, times, opts=DEFAULT_OPTIONS, constants=None,
                         w0_scale=1.0, subtract=True):
    """||u(t) - w(t)||_{L^2} for the heat flow w with datum w0.

    ``w0_scale`` multiplies w0 (a perturbed control); ``subtract=False``
    returns ||u(t)|| for comparison.  Pass ``constants`` to try other
    coefficients, e.g. ``w0_coefficients(beta, gamma, printed=True)``.
    """
    times = np.atleast_1d(np.asarray(times, dtype=float))
    k = diffusion_constants(profile) if constants is None else constants
    xi, w = data.grid()
    u1, u2 = data.u1(xi), data.u2(xi)
    u, _ = evolve_modes(profile, xi, u1, u2, times, opts)
    if subtract:
        c1, c2 = k.w0_coefficients
        w0 = w0_scale * (c1 * u1 + c2 * u2)
        u = u - heat_mode(k.alpha2, xi[None, :], w0[None, :], times[:, None])
    label = "u_minus_w_L2" if subtract else "u_L2"
    return NormTrace(times, np.sqrt(np.abs(u) ** 2 @ w), label)
