"""Contraction certificates for the monodromy family.

A certificate records a frequency N above which one period is a contraction,
a power k making M^k a contraction on [c, N], and the exponential rates these
imply.  Suprema over t are taken on a uniform grid and complemented by random
off-grid probes.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from . import propagator as prop
from . import spectral
from .errors import FrameSingular, SearchExhausted, SpectralRadiusViolation
from .propagator import DEFAULT_OPTIONS, operator_norm

MAX_ZONE = 2**20
MAX_POWER = 2**20


@dataclass
class ZoneCertificate:
    N: float
    c: float
    k: int
    sup_norm_high: float
    sup_norm_band: float
    delta_high: float
    delta_band: float
    criterion_value: float
    t_points: int
    xi_points: int
    high_xi_points: int
    period: float

    def to_dict(self):
        return asdict(self)


def _t_grid(period, t_points):
    return np.arange(t_points) * (period / t_points)


def find_high_zone(profile, opts=DEFAULT_OPTIONS, start=4.0, t_points=64, sub_points=8,
                   history=None):
    """Doubling search for N with the diagonalisation criterion below exp(beta T).

    At each candidate N the criterion is evaluated at ``sub_points``
    frequencies spread over [N, 2N] and the maximum is used, so a lucky phase
    of n^{+-} at exactly N cannot pass the test.  A frame that is not
    invertible counts as a failure and the search moves on.
    """
    bound = math.exp(profile.beta * profile.period)
    N = float(start)
    while N <= MAX_ZONE:
        try:
            value = max(prop.contraction_criterion(profile, xi, t_points)
                        for xi in np.linspace(N, 2 * N, sub_points))
        except FrameSingular:
            value = math.inf
        if history is not None:
            history.append((N, value))
        if value < bound:
            return N, value
        N *= 2.0
    raise SearchExhausted(f"no contraction zone below |xi| = {MAX_ZONE}")


def monodromy_grid(profile, freqs, t_points=64, opts=DEFAULT_OPTIONS):
    """M(t, xi) on a uniform t-grid of [0, T); shape (t_points, len(freqs), 2, 2)."""
    return prop.monodromy_family(profile, freqs, _t_grid(profile.period, t_points), opts)


def find_power_k(profile, c, N, t_points=64, xi_points=256, opts=DEFAULT_OPTIONS, grid=None):
    """Doubling search for k with max ||M^k(t, xi)|| < 1 on [0, T] x [c, N].

    The frequency grid is log-spaced.  Returns ``(k, sup_norm)``.
    """
    if not 0 < c < N:
        raise ValueError("need 0 < c < N")
    xi = np.geomspace(c, N, xi_points)
    m = monodromy_grid(profile, xi, t_points, opts) if grid is None else grid
    specs = spectral.spectra(m[0], profile.period, profile.beta)
    rho = np.array([sp.spectral_radius for sp in specs])
    if np.any(rho >= 1 - 1e-9):
        bad = xi[rho >= 1 - 1e-9]
        raise SpectralRadiusViolation(f"spectral radius >= 1 at |xi| = {bad[:5]}")
    k = 1
    mk = m
    while k <= MAX_POWER:
        sup = float(operator_norm(mk).max())
        if sup < 1.0:
            return k, sup
        mk = mk @ mk
        k *= 2
    raise SearchExhausted(f"no contracting power up to {MAX_POWER}")


def high_zone_sup(profile, N, t_points=64, xi_points=128, opts=DEFAULT_OPTIONS, span=16.0):
    """max ||M(t, xi)|| over the t-grid and a log grid of [N, span * N]."""
    xi = np.geomspace(N, span * N, xi_points)
    return float(operator_norm(monodromy_grid(profile, xi, t_points, opts)).max())


def decay_constants(cert):
    """(delta_high, delta_band) = (T^-1 log(1/s_high), (kT)^-1 log(1/s_band))."""
    T = cert.period
    return (math.log(1.0 / cert.sup_norm_high) / T,
            math.log(1.0 / cert.sup_norm_band) / (cert.k * T))


def certify(profile, c=None, opts=DEFAULT_OPTIONS, t_points=64, xi_points=256, high_xi_points=128):
    """Build a :class:`ZoneCertificate`; ``c`` defaults to half of tau_0."""
    if c is None:
        c = spectral.small_frequency_cutoff(profile, opts)
    N, crit = find_high_zone(profile, opts, t_points=t_points)
    k, s_band = find_power_k(profile, c, N, t_points, xi_points, opts)
    s_high = high_zone_sup(profile, N, t_points, high_xi_points, opts)
    if not s_high < 1:
        raise SearchExhausted(f"direct sup ||M|| = {s_high} >= 1 above N = {N}")
    cert = ZoneCertificate(N=N, c=float(c), k=k, sup_norm_high=s_high, sup_norm_band=s_band,
                           delta_high=0.0, delta_band=0.0, criterion_value=crit,
                           t_points=t_points, xi_points=xi_points,
                           high_xi_points=high_xi_points, period=profile.period)
    cert.delta_high, cert.delta_band = decay_constants(cert)
    return cert


def probe_certificate(profile, cert, rng, probes=50, opts=DEFAULT_OPTIONS, high_span=16.0):
    """Random off-grid checks of both zones.

    Returns a dict with the worst ||M(t, xi)|| for |xi| in [N, span*N] and the
    worst ||M^k(t, xi)|| for |xi| in [c, N], each at ``probes`` random points.
    """
    T = profile.period
    t_hi = rng.uniform(0.0, T, probes)
    xi_hi = cert.N * np.exp(rng.uniform(0.0, math.log(high_span), probes))
    t_band = rng.uniform(0.0, T, probes)
    xi_band = np.exp(rng.uniform(math.log(cert.c), math.log(cert.N), probes))
    hi = np.array([prop.monodromy_family(profile, [x], [t], opts)[0, 0] for x, t in zip(xi_hi, t_hi)])
    band = np.array([prop.monodromy_family(profile, [x], [t], opts)[0, 0]
                     for x, t in zip(xi_band, t_band)])
    return {
        "max_norm_high": float(operator_norm(hi).max()),
        "max_norm_band_power": float(operator_norm(prop.monodromy_power(band, cert.k)).max()),
        "probes": probes,
    }
