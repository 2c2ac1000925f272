"""Periodic dissipation coefficients b(t).

Four closed-form families are provided.  Each one knows its exact mean and
exact primitive, so the amplitude

    lambda(t) = exp(int_0^t b(s) ds)

never involves quadrature error.  All evaluation routines accept scalars or
numpy arrays.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidProfile, UnsupportedFamily

VALIDATION_POINTS = 10_000


class DissipationProfile:
    """Base class for a T-periodic coefficient b(t) >= 0 with positive mean.

    Subclasses implement ``_b`` (values on one period), ``_primitive``
    (int_0^t b for t in [0, T)), ``_mean`` and, where it exists, ``_db``.
    """

    family = "abstract"
    #: True for families that are only of bounded variation (jumps)
    bv_only = False

    period: float

    def _validate(self):
        if not (math.isfinite(self.period) and self.period > 0):
            raise InvalidProfile(f"period must be positive, got {self.period}")
        grid = np.linspace(0.0, self.period, VALIDATION_POINTS, endpoint=False)
        values = self._b(grid)
        if not np.all(np.isfinite(values)):
            raise InvalidProfile("b(t) is not finite on the validation grid")
        lo = float(values.min())
        if lo < -1e-14 * max(1.0, float(np.abs(values).max())):
            raise InvalidProfile(f"b(t) takes negative values (min {lo:.3e})")
        if not self._mean() > 0:
            raise InvalidProfile("mean dissipation must be positive")

    # -- evaluation -----------------------------------------------------

    def _reduce(self, t):
        t = np.asarray(t, dtype=float)
        return np.mod(t, self.period)

    def b(self, t):
        """b(t), using periodicity."""
        return self._b(self._reduce(t))

    def b_side(self, t, side):
        """One-sided limit b(t-) (``side=-1``) or b(t+) (``side=+1``)."""
        return self.b(t)

    def db(self, t):
        """Classical derivative b'(t)."""
        raise UnsupportedFamily(f"{self.family} has no classical derivative")

    @property
    def beta(self):
        """Mean value of b over one period."""
        return self._mean()

    def log_lambda(self, t):
        """log lambda(t) = int_0^t b, continued quasi-periodically."""
        t = np.asarray(t, dtype=float)
        k = np.floor(t / self.period)
        r = t - k * self.period
        return k * self.beta * self.period + self._primitive(r)

    def lam(self, t):
        return np.exp(self.log_lambda(t))

    def breakpoints(self, t0, t1):
        """Jump locations of b strictly inside (t0, t1)."""
        return np.empty(0)

    def total_variation(self):
        """Total variation of b over one period."""
        grid = np.linspace(0.0, self.period, VALIDATION_POINTS + 1)
        return float(np.abs(np.diff(self._b(grid))).sum())

    def sup(self):
        grid = np.linspace(0.0, self.period, VALIDATION_POINTS, endpoint=False)
        return float(self._b(grid).max())

    def to_dict(self):
        raise NotImplementedError


@dataclass(frozen=True)
class Constant(DissipationProfile):
    b0: float
    period: float = 1.0
    family = "constant"

    def __post_init__(self):
        if not self.b0 > 0:
            raise InvalidProfile(f"constant dissipation must be positive, got {self.b0}")
        self._validate()

    def _b(self, r):
        return np.full_like(np.asarray(r, dtype=float), self.b0)

    def _mean(self):
        return float(self.b0)

    def _primitive(self, r):
        return self.b0 * r

    def db(self, t):
        return np.zeros_like(np.asarray(t, dtype=float))

    def total_variation(self):
        return 0.0

    def sup(self):
        return float(self.b0)

    def to_dict(self):
        return {"family": self.family, "b0": self.b0, "period": self.period}


@dataclass(frozen=True)
class Sinusoid(DissipationProfile):
    """b(t) = b0 + a sin(2 pi t / T + phase)."""

    b0: float
    a: float
    phase: float = 0.0
    period: float = 1.0
    family = "sinusoid"

    def __post_init__(self):
        if abs(self.a) > self.b0:
            raise InvalidProfile(f"need |a| <= b0 for nonnegativity, got a={self.a}, b0={self.b0}")
        self._validate()

    @property
    def omega(self):
        return 2.0 * math.pi / self.period

    def _b(self, r):
        return self.b0 + self.a * np.sin(self.omega * r + self.phase)

    def _mean(self):
        return float(self.b0)

    def _primitive(self, r):
        w = self.omega
        return self.b0 * r + self.a / w * (math.cos(self.phase) - np.cos(w * r + self.phase))

    def db(self, t):
        t = self._reduce(t)
        return self.a * self.omega * np.cos(self.omega * t + self.phase)

    def total_variation(self):
        return 4.0 * abs(self.a)

    def sup(self):
        return float(self.b0 + abs(self.a))

    def to_dict(self):
        return {"family": self.family, "b0": self.b0, "a": self.a,
                "phase": self.phase, "period": self.period}


@dataclass(frozen=True)
class SquareWave(DissipationProfile):
    """b = b_lo on [0, duty*T), b = b_hi on [duty*T, T); right-continuous."""

    b_lo: float
    b_hi: float
    duty: float = 0.5
    period: float = 1.0
    family = "squarewave"
    bv_only = True

    def __post_init__(self):
        if self.b_lo < 0 or self.b_hi < 0:
            raise InvalidProfile("square wave levels must be nonnegative")
        if not 0.0 < self.duty < 1.0:
            raise InvalidProfile(f"duty must lie in (0, 1), got {self.duty}")
        self._validate()

    @property
    def switch(self):
        return self.duty * self.period

    def _b(self, r):
        r = np.asarray(r, dtype=float)
        return np.where(r < self.switch, self.b_lo, self.b_hi)

    def b_side(self, t, side):
        t = np.asarray(t, dtype=float)
        if side > 0:
            return self.b(t)
        # left limit: nudge back inside the preceding segment
        r = np.mod(t, self.period)
        left = np.where((r == 0.0) | (r > self.switch), self.b_hi, self.b_lo)
        return left.astype(float)

    def _mean(self):
        return float(self.duty * self.b_lo + (1.0 - self.duty) * self.b_hi)

    def _primitive(self, r):
        r = np.asarray(r, dtype=float)
        s = self.switch
        return np.where(r < s, self.b_lo * r, self.b_lo * s + self.b_hi * (r - s))

    def breakpoints(self, t0, t1):
        T = self.period
        k0 = math.floor(t0 / T) - 1
        k1 = math.ceil(t1 / T) + 1
        pts = []
        for k in range(k0, k1 + 1):
            for p in (k * T, k * T + self.switch):
                if t0 < p < t1:
                    pts.append(p)
        return np.array(sorted(pts))

    def total_variation(self):
        return 2.0 * abs(self.b_hi - self.b_lo)

    def sup(self):
        return float(max(self.b_lo, self.b_hi))

    def to_dict(self):
        return {"family": self.family, "b_lo": self.b_lo, "b_hi": self.b_hi,
                "duty": self.duty, "period": self.period}


@dataclass(frozen=True)
class FourierSeries(DissipationProfile):
    """b(t) = c0 + sum_k (cos_k cos(k w t) + sin_k sin(k w t)), w = 2 pi / T.

    ``cos`` and ``sin`` hold the coefficients for k = 1, 2, ...
    """

    c0: float
    cos: tuple = field(default=())
    sin: tuple = field(default=())
    period: float = 1.0
    family = "fourier"

    def __post_init__(self):
        object.__setattr__(self, "cos", tuple(float(c) for c in self.cos))
        object.__setattr__(self, "sin", tuple(float(s) for s in self.sin))
        self._validate()

    def _coeffs(self):
        m = max(len(self.cos), len(self.sin))
        a = np.zeros(m)
        s = np.zeros(m)
        a[: len(self.cos)] = self.cos
        s[: len(self.sin)] = self.sin
        return np.arange(1, m + 1), a, s

    @property
    def omega(self):
        return 2.0 * math.pi / self.period

    def _b(self, r):
        r = np.asarray(r, dtype=float)
        k, a, s = self._coeffs()
        out = np.full(r.shape, self.c0, dtype=float)
        for kk, ak, sk in zip(k, a, s):
            out = out + ak * np.cos(kk * self.omega * r) + sk * np.sin(kk * self.omega * r)
        return out

    def _mean(self):
        return float(self.c0)

    def _primitive(self, r):
        r = np.asarray(r, dtype=float)
        k, a, s = self._coeffs()
        out = self.c0 * r
        for kk, ak, sk in zip(k, a, s):
            kw = kk * self.omega
            out = out + ak / kw * np.sin(kw * r) + sk / kw * (1.0 - np.cos(kw * r))
        return out

    def db(self, t):
        r = self._reduce(t)
        k, a, s = self._coeffs()
        out = np.zeros_like(r)
        for kk, ak, sk in zip(k, a, s):
            kw = kk * self.omega
            out = out - ak * kw * np.sin(kw * r) + sk * kw * np.cos(kw * r)
        return out

    def to_dict(self):
        return {"family": self.family, "c0": self.c0, "cos": list(self.cos),
                "sin": list(self.sin), "period": self.period}


FAMILIES = {
    "constant": Constant,
    "sinusoid": Sinusoid,
    "squarewave": SquareWave,
    "fourier": FourierSeries,
}


def profile_from_dict(params):
    """Build a profile from a mapping such as the one produced by ``to_dict``."""
    params = dict(params)
    try:
        cls = FAMILIES[params.pop("family")]
    except KeyError as exc:
        raise InvalidProfile(f"unknown or missing family: {exc}") from None
    try:
        return cls(**params)
    except TypeError as exc:
        raise InvalidProfile(str(exc)) from None


# -- module-level operations --------------------------------------------

def eval_b(profile, t):
    return profile.b(t)


def mean_beta(profile):
    return profile.beta


def lam(profile, t):
    """lambda(t) = exp(int_0^t b).  Use :func:`log_lam` for large t."""
    return profile.lam(t)


def log_lam(profile, t):
    return profile.log_lambda(t)


def hill_potential(profile, t, freq):
    """|xi|^2 - b(t)^2 - b'(t), the potential of the Liouville-transformed equation."""
    if profile.bv_only:
        raise UnsupportedFamily(f"{profile.family} has jumps; b' is not a function")
    return freq**2 - profile.b(t) ** 2 - profile.db(t)
