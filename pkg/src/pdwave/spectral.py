"""Floquet analysis of the monodromy family.

Eigenvalue classification, instability intervals, periodic Floquet factors,
the fundamental system Phi_1, Phi_2, and three independent estimates of the
small-frequency diffusion coefficient alpha_2.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy import integrate

from . import propagator as prop
from .errors import (
    DegenerateMonodromy,
    DenominatorSmall,
    DeterminantMismatch,
    EigenvectorDegenerate,
    NoiseDominated,
    SamplesOutsideI0,
)
from .propagator import DEFAULT_OPTIONS, IntegratorOptions, det2, trace2

DEGENERACY_TOL = 1e-10

#: tighter integration for finite differences in the frequency
FD_OPTIONS = IntegratorOptions(rtol=1e-12, atol=1e-14)


class Classification(str, enum.Enum):
    REAL_PAIR = "RealPair"
    COMPLEX_PAIR = "ComplexPair"
    DEGENERATE = "Degenerate"


@dataclass(frozen=True)
class MonodromySpectrum:
    kappa1: complex
    kappa2: complex
    classification: Classification
    nu_plus: complex
    nu_minus: complex
    discriminant: float

    @property
    def spectral_radius(self):
        return max(abs(self.kappa1), abs(self.kappa2))


def _discriminant(tr, period, beta):
    return np.real(tr) ** 2 - 4.0 * math.exp(-2.0 * beta * period)


def _classify(d):
    if d > DEGENERACY_TOL:
        return Classification.REAL_PAIR
    if d < -DEGENERACY_TOL:
        return Classification.COMPLEX_PAIR
    return Classification.DEGENERATE


def spectrum(m, period, beta):
    """Eigenvalues, classification and Floquet exponents of one monodromy matrix.

    kappa1 is the eigenvalue of larger modulus for a real pair and the one
    with nonnegative imaginary part for a complex pair; nu_plus belongs to
    kappa1.  Exponents use the principal logarithm, nu = -Log(kappa) / T.
    """
    m = np.asarray(m)
    target = math.exp(-2.0 * beta * period)
    det = complex(det2(m))
    if abs(det - target) >= 1e-6:
        raise DeterminantMismatch(f"det M = {det} but exp(-2 beta T) = {target}")
    tr = complex(trace2(m))
    d = float(_discriminant(tr, period, beta))
    cls = _classify(d)
    root = np.sqrt(tr * tr - 4.0 * det + 0j)
    if cls is Classification.DEGENERATE:
        k1 = k2 = tr / 2.0
    elif cls is Classification.REAL_PAIR:
        # larger modulus first; pick the sign of the root that avoids cancellation
        k1 = (tr + root) / 2.0 if tr.real >= 0 else (tr - root) / 2.0
        k2 = det / k1
    else:
        ka = (tr + root) / 2.0
        kb = (tr - root) / 2.0
        k1, k2 = (ka, kb) if ka.imag >= kb.imag else (kb, ka)
    nu1 = -np.log(complex(k1)) / period
    nu2 = -np.log(complex(k2)) / period
    return MonodromySpectrum(complex(k1), complex(k2), cls, complex(nu1), complex(nu2), d)


def spectra(ms, period, beta):
    return [spectrum(m, period, beta) for m in np.asarray(ms).reshape(-1, 2, 2)]


def discriminants(profile, freqs, opts=DEFAULT_OPTIONS):
    """(tr M(0, xi))^2 - 4 exp(-2 beta T) for an array of frequencies."""
    m = prop.monodromy_family(profile, freqs, opts=opts)[0]
    return _discriminant(trace2(m), profile.period, profile.beta)


# -- instability intervals -------------------------------------------

@dataclass
class InstabilityIntervals:
    """Intervals of |xi| where the monodromy eigenvalues are real.

    The first entry is I_0 = (0, tau_0]; the others are [tau_k^-, tau_k^+].
    An interval touching ``freq_max`` is truncated there.
    """

    intervals: list
    freq_max: float
    scan_points: int

    @property
    def tau0(self):
        return self.intervals[0][1]

    @property
    def higher(self):
        return self.intervals[1:]

    def contains(self, xi):
        return any(lo < xi <= hi if lo == 0.0 else lo <= xi <= hi for lo, hi in self.intervals)

    def to_dict(self):
        return {
            "I0": [0.0, self.tau0],
            "intervals": [list(iv) for iv in self.higher],
            "freq_max": self.freq_max,
            "scan_points": self.scan_points,
        }


def _bisect_edges(profile, lo, hi, lo_positive, width, opts):
    """Vectorised bisection of sign changes of the discriminant."""
    lo = np.array(lo, dtype=float)
    hi = np.array(hi, dtype=float)
    lo_pos = np.array(lo_positive, dtype=bool)
    while lo.size and np.max(hi - lo) > width:
        mid = 0.5 * (lo + hi)
        pos = discriminants(profile, mid, opts) > 0
        same = pos == lo_pos
        lo = np.where(same, mid, lo)
        hi = np.where(same, hi, mid)
    return 0.5 * (lo + hi)


def classify_stability_intervals(profile, freq_max, scan_points=2000, opts=DEFAULT_OPTIONS,
                                 width=1e-8):
    """Scan the discriminant on a uniform grid of (0, freq_max] and bisect sign changes."""
    if scan_points < 100:
        raise ValueError("scan_points must be at least 100")
    grid = freq_max * np.arange(1, scan_points + 1) / scan_points
    d = discriminants(profile, grid, opts)
    pos = d > DEGENERACY_TOL
    flips = np.nonzero(pos[1:] != pos[:-1])[0]
    edges = _bisect_edges(profile, grid[flips], grid[flips + 1], pos[flips], width, opts)
    intervals = []
    start = 0.0 if pos[0] else None
    for i, e in zip(flips, edges):
        if pos[i]:  # leaving a real-pair run
            intervals.append((float(start), float(e)))
            start = None
        else:
            start = e
    if start is not None:
        intervals.append((float(start), float(freq_max)))
    if not intervals or intervals[0][0] != 0.0:
        raise RuntimeError("discriminant is not positive near xi = 0")
    return InstabilityIntervals(intervals, float(freq_max), int(scan_points))


@lru_cache(maxsize=64)
def _tau0_cached(profile, opts):
    # the first sign change of the discriminant; I0 always reaches beyond 0
    hi = 2.0 * max(profile.beta, 1.0 / profile.period)
    while True:
        grid = hi * np.arange(1, 201) / 200
        d = discriminants(profile, grid, opts)
        neg = np.nonzero(d <= DEGENERACY_TOL)[0]
        if neg.size:
            j = neg[0]
            if j == 0:
                raise RuntimeError("I0 is narrower than the scan resolution")
            return float(_bisect_edges(profile, [grid[j - 1]], [grid[j]], [True], 1e-8, opts)[0])
        hi *= 2.0


def tau0(profile, opts=DEFAULT_OPTIONS):
    """Right end of I_0 = (0, tau_0]."""
    return _tau0_cached(profile, opts)


def small_frequency_cutoff(profile, opts=DEFAULT_OPTIONS, fraction=0.5):
    """The small-frequency zone |xi| <= c with c a fixed fraction of tau_0."""
    return fraction * tau0(profile, opts)


# -- Floquet factors ---------------------------------------------------------

@dataclass
class FloquetSolution:
    """One Floquet solution e^{-nu t} f(t) with T-periodic f, f(0) = 1."""

    nu: complex
    t: np.ndarray
    f: np.ndarray
    dtf: np.ndarray
    dtf0: complex
    periodicity_error: float

    @property
    def min_abs_f(self):
        return float(np.min(np.abs(self.f)))


@dataclass
class FloquetData:
    """Batched Floquet data for a set of frequencies (scalar chart).

    Arrays indexed ``[j]`` (per frequency) or ``[i, j]`` (sample time i).
    """

    freqs: np.ndarray
    s: np.ndarray
    nu_plus: np.ndarray
    nu_minus: np.ndarray
    f_plus: np.ndarray
    f_minus: np.ndarray
    dtf_plus: np.ndarray
    dtf_minus: np.ndarray
    classes: list = field(default_factory=list)

    @property
    def dtf0_plus(self):
        return self.dtf_plus[0] if self.s[0] == 0.0 else None


def _eigvec(p, kappa):
    """Unit eigenvector of the 2x2 matrix p for eigenvalue kappa (batched)."""
    v1 = np.stack([p[..., 0, 1], kappa - p[..., 0, 0]], axis=-1)
    v2 = np.stack([kappa - p[..., 1, 1], p[..., 1, 0]], axis=-1)
    n1 = np.linalg.norm(v1, axis=-1)
    n2 = np.linalg.norm(v2, axis=-1)
    v = np.where((n1 >= n2)[..., None], v1, v2)
    return v / np.maximum(n1, n2)[..., None]


def floquet_data(profile, freqs, s=None, opts=DEFAULT_OPTIONS, allow_complex=True,
                 which=("plus", "minus")):
    """Floquet exponents and periodic factors for many frequencies at once.

    ``s`` are the sample times in [0, T] (default: 0 only).  ``which`` selects
    the solutions to normalise; the minus factor is left as None when it is
    not requested, which matters near xi = 0 where u(0) of the minus
    eigenvector tends to zero.  Raises
    :class:`DegenerateMonodromy` at band edges and
    :class:`EigenvectorDegenerate` when the u-component of an eigenvector
    vanishes (then f cannot be normalised by f(0) = 1).
    """
    freqs = np.atleast_1d(np.asarray(freqs, dtype=float))
    T, beta = profile.period, profile.beta
    s = np.array([0.0]) if s is None else np.atleast_1d(np.asarray(s, dtype=float))
    if np.any((s < 0) | (s > T)):
        raise ValueError("sample times must lie in [0, T]")
    times = np.concatenate([[T], s])
    p = prop.propagate(profile, freqs, times, chart="scalar", opts=opts)
    pm, ps = p[0], p[1:]
    specs = [spectrum(pm[j], T, beta) for j in range(len(freqs))]
    classes = [sp.classification for sp in specs]
    for xi, sp in zip(freqs, specs):
        if sp.classification is Classification.DEGENERATE:
            raise DegenerateMonodromy(f"monodromy is degenerate at |xi| = {xi}")
        if not allow_complex and sp.classification is not Classification.REAL_PAIR:
            raise SamplesOutsideI0(f"|xi| = {xi} is not in an instability interval")
    k1 = np.array([sp.kappa1 for sp in specs])
    k2 = np.array([sp.kappa2 for sp in specs])
    nu1 = np.array([sp.nu_plus for sp in specs])
    nu2 = np.array([sp.nu_minus for sp in specs])
    out = {"plus": (None, None), "minus": (None, None)}
    for name, kappa, nu in (("plus", k1, nu1), ("minus", k2, nu2)):
        if name not in which:
            continue
        v = _eigvec(pm.astype(complex), kappa)
        if np.any(np.abs(v[:, 0]) < 1e-10):
            bad = freqs[np.abs(v[:, 0]) < 1e-10]
            raise EigenvectorDegenerate(f"u(0) vanishes for the {name} solution at |xi| = {bad}")
        y = ps @ v[None, :, :, None]  # (ns, nf, 2, 1)
        u, ut = y[..., 0, 0], y[..., 1, 0]
        growth = np.exp(nu[None, :] * s[:, None])
        f = growth * u / v[None, :, 0]
        dtf = growth * (nu[None, :] * u + ut) / v[None, :, 0]
        out[name] = (f, dtf)
    if np.all(np.isreal(nu1)) and np.all([c is Classification.REAL_PAIR for c in classes]):
        cast = np.real
    else:
        cast = np.asarray

    def opt(a):
        return None if a is None else cast(a)

    return FloquetData(
        freqs=freqs, s=s,
        nu_plus=cast(nu1), nu_minus=cast(nu2),
        f_plus=opt(out["plus"][0]), f_minus=opt(out["minus"][0]),
        dtf_plus=opt(out["plus"][1]), dtf_minus=opt(out["minus"][1]),
        classes=classes,
    )


def floquet_solutions(profile, freq, opts=DEFAULT_OPTIONS, samples=65):
    """The pair of Floquet solutions at one frequency, sampled on [0, T].

    At xi = 0 the plus solution is the constant 1 and the minus solution
    cannot be normalised (u(0) = 0); only the plus solution is returned then.
    """
    T = profile.period
    grid = np.linspace(0.0, T, samples)
    if freq == 0.0:
        plus = FloquetSolution(0j, grid, np.ones(samples, complex), np.zeros(samples, complex),
                               0j, 0.0)
        return plus, None
    fd = floquet_data(profile, [freq], grid, opts)
    sols = []
    for nu, f, dtf in ((fd.nu_plus, fd.f_plus, fd.dtf_plus), (fd.nu_minus, fd.f_minus, fd.dtf_minus)):
        f = np.asarray(f[:, 0], dtype=complex)
        dtf = np.asarray(dtf[:, 0], dtype=complex)
        sols.append(FloquetSolution(complex(nu[0]), grid, f, dtf, complex(dtf[0]),
                                    float(abs(f[-1] - f[0]))))
    return sols[0], sols[1]


def _phi_from_floquet(fd, beta, t_abs):
    """Phi_1, Phi_2 assembled from f+-, nu+- and d_t f+-(0); fd.s[0] must be 0."""
    nup, num = fd.nu_plus[None, :], fd.nu_minus[None, :]
    dp0, dm0 = fd.dtf_plus[0][None, :], fd.dtf_minus[0][None, :]
    denom = num - nup + dp0 - dm0
    if np.any(np.abs(denom) < 1e-10):
        raise DenominatorSmall("nu_- - nu_+ + d_t f_+(0) - d_t f_-(0) vanishes")
    t = np.asarray(t_abs, dtype=float)[:, None]
    ep = np.exp(-nup * t) * fd.f_plus[1:]
    em = np.exp(-num * t) * fd.f_minus[1:]
    dep = np.exp(-nup * t) * (fd.dtf_plus[1:] - nup * fd.f_plus[1:])
    dem = np.exp(-num * t) * (fd.dtf_minus[1:] - num * fd.f_minus[1:])
    shift = 0.5 * (dp0 + dm0) - beta
    phi2 = (ep - em) / denom
    dphi2 = (dep - dem) / denom
    phi1 = 0.5 * (ep + em) - shift * phi2
    dphi1 = 0.5 * (dep + dem) - shift * dphi2
    return phi1, phi2, dphi1, dphi2


def phi_basis_floquet(profile, freqs, times, opts=DEFAULT_OPTIONS):
    """(Phi_1, Phi_2, d_t Phi_1, d_t Phi_2) from the Floquet representation.

    Uses the periodicity of f+-: only f+-(t mod T) is integrated.  Arrays
    have shape ``(len(times), len(freqs))``.
    """
    T = profile.period
    times = np.atleast_1d(np.asarray(times, dtype=float))
    s = np.mod(times, T)
    fd = floquet_data(profile, freqs, np.concatenate([[0.0], s]), opts)
    return _phi_from_floquet(fd, profile.beta, times)


def phi_basis(profile, freq, t, opts=DEFAULT_OPTIONS, method="direct"):
    """The fundamental system Phi_1 (data 1, 0) and Phi_2 (data 0, 1) at time t.

    ``method="direct"`` integrates the scalar ODE; ``method="floquet"``
    assembles the closed formula from the Floquet factors (small frequencies).
    """
    if method == "direct":
        p = prop.propagate(profile, [freq], [t], chart="scalar", opts=opts)[0, 0]
        return complex(p[0, 0]), complex(p[0, 1])
    if method == "floquet":
        if freq == 0.0:
            # Phi_1 = 1, Phi_2 = int_0^t lambda^-2
            val, _ = integrate.quad(lambda x: np.exp(-2 * profile.log_lambda(x)), 0.0, t,
                                    epsabs=1e-13, epsrel=1e-12, limit=200,
                                    points=_quad_points(profile, 0.0, t))
            return 1.0 + 0j, complex(val)
        phi1, phi2, _, _ = phi_basis_floquet(profile, [freq], [t], opts)
        return complex(phi1[0, 0]), complex(phi2[0, 0])
    raise ValueError(f"unknown method {method!r}")


# -- small-frequency expansion -------------------------------------------------

def _quad_points(profile, a, b):
    pts = profile.breakpoints(a, b)
    return list(pts) if pts.size else None


def alpha2_integral(profile, epsabs=1e-12, epsrel=1e-12):
    """alpha_2 from the nested double integral of lambda ratios over one period.

    The integrand is evaluated as exponentials of differences of log lambda,
    every one of which is nonpositive, so large beta T cannot overflow.
    """
    T, beta = profile.period, profile.beta
    L = profile.log_lambda
    LT = float(L(T))

    def inner(tau):
        Lt = float(L(tau))
        f = lambda th: math.exp(2 * (float(L(th)) - Lt)) + math.exp(2 * (Lt - LT - float(L(th))))
        val, _ = integrate.quad(f, 0.0, tau, epsabs=epsabs, epsrel=epsrel, limit=200,
                                points=_quad_points(profile, 0.0, tau))
        return val

    outer, _ = integrate.quad(inner, 0.0, T, epsabs=epsabs, epsrel=epsrel, limit=200,
                              points=_quad_points(profile, 0.0, T))
    return outer / (T * (-math.expm1(-2 * beta * T)))


def _richardson(values, hs, order=2):
    """Two levels of Richardson extrapolation for an even error expansion."""
    a = np.asarray(values, dtype=float)
    levels = [a]
    p = order
    while len(a) > 1:
        r = (hs[0] / hs[1]) ** p  # constant ratio between consecutive steps
        a = (r * a[1:] - a[:-1]) / (r - 1.0)
        levels.append(a)
        p += 2
    return levels


def alpha2_trace_fd(profile, opts=FD_OPTIONS, steps=(1e-2, 5e-3, 2.5e-3)):
    """alpha_2 from second differences of xi -> tr M(0, xi) at xi = 0.

    Returns ``(alpha2, alpha1_residual)`` where the residual is the largest
    central first difference |d tr / d|xi|| over the steps.
    """
    T, beta = profile.period, profile.beta
    hs = np.asarray(steps, dtype=float)
    freqs = np.concatenate([[0.0], hs, -hs])
    tr = np.real(trace2(prop.monodromy_family(profile, freqs, opts=opts)[0]))
    t0, tp, tm = tr[0], tr[1:1 + len(hs)], tr[1 + len(hs):]
    d1 = (tp - tm) / (2 * hs)
    d2 = (tp - 2 * t0 + tm) / hs**2
    levels = _richardson(d2, hs)
    for prev, nxt in zip(levels[:-1], levels[1:]):
        if len(nxt) >= 2 and len(prev) >= 2:
            if abs(nxt[1] - nxt[0]) >= abs(prev[1] - prev[0]) and abs(prev[1] - prev[0]) > 0:
                raise NoiseDominated("Richardson sequence for d^2 tr M does not contract")
    second = levels[-1][0]
    # tr M = exp(-nu_+ T) + exp(-nu_- T) with nu_+ + nu_- = 2 beta, so the
    # second derivative at xi = 0 is -2 alpha_2 T (1 - exp(-2 beta T))
    alpha2 = -second / (2 * T * (-math.expm1(-2 * beta * T)))
    return float(alpha2), float(np.max(np.abs(d1)))


#: powers of |xi| in the exponent fit; the |xi|^6 column absorbs truncation
FIT_POWERS = (2, 3, 4, 6)


def nu_plus_samples(profile, freqs, opts=DEFAULT_OPTIONS):
    m = prop.monodromy_family(profile, freqs, opts=opts)[0]
    specs = spectra(m, profile.period, profile.beta)
    for xi, sp in zip(freqs, specs):
        if sp.classification is not Classification.REAL_PAIR:
            raise SamplesOutsideI0(f"|xi| = {xi} classifies as {sp.classification.value}")
    return np.array([sp.nu_plus.real for sp in specs])


def alpha2_exponent_fit(profile, opts=DEFAULT_OPTIONS, samples=10, lo=1e-2, hi=1e-1):
    """Least-squares fit of nu_+(xi) ~ sum_p c_p |xi|^p on log-spaced xi in [lo, hi].

    The fit is weighted by |xi|^-2 (relative error) and uses the powers in
    ``FIT_POWERS``.  Returns ``(alpha2, odd_residual)``, the |xi|^2
    coefficient and the magnitude of the |xi|^3 coefficient.
    """
    xi = np.logspace(math.log10(lo), math.log10(hi), samples)
    nu = nu_plus_samples(profile, xi, opts)
    basis = np.stack([xi ** (p - 2) for p in FIT_POWERS], axis=1)
    coef, *_ = np.linalg.lstsq(basis, nu / xi**2, rcond=None)
    return float(coef[0]), float(abs(coef[1]))


def gamma(profile, epsabs=1e-14, epsrel=1e-13):
    """gamma = 2 beta - (1 - exp(-2 beta T)) / int_0^T lambda^-2."""
    T, beta = profile.period, profile.beta
    val, _ = integrate.quad(lambda x: math.exp(-2 * float(profile.log_lambda(x))), 0.0, T,
                            epsabs=epsabs, epsrel=epsrel, limit=200,
                            points=_quad_points(profile, 0.0, T))
    return 2 * beta - (-math.expm1(-2 * beta * T)) / val


def gamma_floquet(profile, freqs=(0.05, 0.025), opts=DEFAULT_OPTIONS):
    """Extrapolate d_t f_-(0, xi) to xi = 0 (error even in xi)."""
    freqs = np.asarray(freqs, dtype=float)
    fd = floquet_data(profile, freqs, opts=opts)
    d = np.real(fd.dtf_minus[0])
    r = (freqs[0] / freqs[1]) ** 2
    return float((r * d[1] - d[0]) / (r - 1.0))


@dataclass
class SmallFreqExpansion:
    alpha2_integral: float
    alpha2_trace: float
    alpha2_fit: float
    alpha1_residual: float
    gamma: float
    gamma_floquet: float
    odd_coefficient_residual: float

    @property
    def alpha2(self):
        return self.alpha2_integral

    @property
    def max_relative_spread(self):
        vals = [self.alpha2_integral, self.alpha2_trace, self.alpha2_fit]
        return max(abs(a - b) / abs(b) for a in vals for b in vals)

    def to_dict(self):
        return {
            "alpha2_integral": self.alpha2_integral,
            "alpha2_trace": self.alpha2_trace,
            "alpha2_fit": self.alpha2_fit,
            "alpha1_residual": self.alpha1_residual,
            "gamma": self.gamma,
            "gamma_floquet": self.gamma_floquet,
            "odd_coefficient_residual": self.odd_coefficient_residual,
            "max_relative_spread": self.max_relative_spread,
        }


def small_freq_expansion(profile, opts=DEFAULT_OPTIONS):
    a_int = alpha2_integral(profile)
    a_tr, a1 = alpha2_trace_fd(profile)
    a_fit, odd = alpha2_exponent_fit(profile, opts)
    return SmallFreqExpansion(a_int, a_tr, a_fit, a1, gamma(profile), gamma_floquet(profile, opts=opts), odd)
