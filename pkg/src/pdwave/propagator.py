"""Fundamental solutions and monodromy matrices of the frequency-domain system.

Two charts of the same ODE  u'' + |xi|^2 u + 2 b(t) u' = 0  are supported:

``"energy"``
    V = (|xi| u, D_t u) with D_t = -i d/dt, so that D_t V = A(t, xi) V and
    A = [[0, |xi|], [|xi|, 2 i b(t)]].  This is the chart in which
    ``||E(t, s, xi)|| <= 1``.
``"scalar"``
    y = (u, u') with y' = [[0, 1], [-|xi|^2, -2 b(t)]] y.  Real valued and
    regular at xi = 0; used for mode evolution and Floquet factors.

2x2 matrices are plain numpy arrays of shape ``(..., 2, 2)``; all helpers
broadcast over leading axes.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp

from .errors import FrameSingular, IntegratorFailure

#: frequencies are integrated in fixed-size batches so results do not depend
#: on the number of worker threads
CHUNK = 64

FRAME_POINTS_PER_PERIOD = 512

UNITARY = np.array([[1.0, -1.0], [1.0, 1.0]]) / math.sqrt(2.0)
UNITARY_INV = UNITARY.T.copy()


@dataclass(frozen=True)
class IntegratorOptions:
    rtol: float = 1e-10
    atol: float = 1e-12
    max_step: float | None = None  # defaults to T/50
    method: str = "DOP853"
    workers: int = 1

    def __post_init__(self):
        if not (self.rtol > 0 and self.atol > 0):
            raise ValueError("integrator tolerances must be positive")
        if self.method not in ("DOP853", "RK45"):
            raise ValueError(f"need an embedded pair of order >= 5, got {self.method}")
        if self.max_step is not None and not self.max_step > 0:
            raise ValueError("max_step must be positive")

    def step_for(self, period):
        h = period / 50.0 if self.max_step is None else self.max_step
        if h >= period:
            raise ValueError("max_step must be smaller than the period")
        return h


DEFAULT_OPTIONS = IntegratorOptions()


# -- 2x2 helpers ---------------------------------------------------------

def det2(m):
    m = np.asarray(m)
    return m[..., 0, 0] * m[..., 1, 1] - m[..., 0, 1] * m[..., 1, 0]


def trace2(m):
    m = np.asarray(m)
    return m[..., 0, 0] + m[..., 1, 1]


def inv2(m):
    m = np.asarray(m)
    out = np.empty_like(m)
    d = det2(m)
    out[..., 0, 0] = m[..., 1, 1]
    out[..., 1, 1] = m[..., 0, 0]
    out[..., 0, 1] = -m[..., 0, 1]
    out[..., 1, 0] = -m[..., 1, 0]
    return out / d[..., None, None]


def operator_norm(m):
    """Largest singular value, from the closed form for 2x2 matrices."""
    m = np.asarray(m)
    fro2 = np.sum(np.abs(m) ** 2, axis=(-2, -1))
    d = np.abs(det2(m))
    disc = np.sqrt(np.maximum(fro2**2 - 4.0 * d**2, 0.0))
    return np.sqrt(0.5 * (fro2 + disc))


def monodromy_power(m, k):
    """m**k by repeated squaring (k >= 1); broadcasts over leading axes."""
    if int(k) != k or k < 1:
        raise ValueError(f"power must be a positive integer, got {k}")
    k = int(k)
    m = np.asarray(m)
    result = None
    base = m
    while k:
        if k & 1:
            result = base if result is None else result @ base
        k >>= 1
        if k:
            base = base @ base
    return result


def coefficient_matrix(profile, t, freq):
    """A(t, xi) = [[0, |xi|], [|xi|, 2 i b(t)]]."""
    if np.any(np.asarray(freq) < 0):
        raise ValueError("radial frequency must be nonnegative")
    t, freq = np.broadcast_arrays(np.asarray(t, float), np.asarray(freq, float))
    a = np.zeros(t.shape + (2, 2), dtype=complex)
    a[..., 0, 1] = freq
    a[..., 1, 0] = freq
    a[..., 1, 1] = 2j * profile.b(t)
    return a


def liouville_det(profile, t, s):
    """exp(-2 int_s^t b), the exact determinant of E(t, s, xi)."""
    return np.exp(-2.0 * (profile.log_lambda(t) - profile.log_lambda(s)))


# -- integration core ------------------------------------------------------

def _segments(profile, t0, t1):
    cuts = profile.breakpoints(t0, t1)
    edges = np.concatenate([[t0], cuts, [t1]])
    return list(zip(edges[:-1], edges[1:]))


def integrate_segments(fun, y0, t0, t1, t_eval, profile, opts, scale=1):
    """Integrate a linear ODE over [t0, t1], restarting at jumps of b.

    Returns the states at the (sorted) points ``t_eval`` as an array of shape
    ``(len(t_eval), len(y0))``.  ``scale`` is the number of components the
    error norm averages over; tolerances are divided by ``sqrt(scale)`` so the
    RMS error control of the underlying solver bounds every component.
    """
    t_eval = np.asarray(t_eval, dtype=float)
    out = np.empty((len(t_eval), len(y0)), dtype=np.result_type(y0))
    h = opts.step_for(profile.period)
    fac = math.sqrt(scale)
    rtol = max(opts.rtol / fac, 1e-13)
    atol = opts.atol / fac
    y = np.asarray(y0)
    out[t_eval == t0] = y
    for a, b in _segments(profile, t0, t1):
        sel = (t_eval > a) & (t_eval <= b)
        pts = np.sort(t_eval[sel])
        stops = pts if pts.size and pts[-1] == b else np.concatenate([pts, [b]])
        sol = solve_ivp(fun, (a, b), y, method=opts.method, rtol=rtol, atol=atol,
                        max_step=h, t_eval=stops)
        if sol.status != 0:
            raise IntegratorFailure(sol.message)
        ys = sol.y.T
        if pts.size:
            idx = np.nonzero(sel)[0]
            out[idx[np.argsort(t_eval[idx], kind="stable")]] = ys[: pts.size]
        y = ys[-1]
    return out


def _rhs(profile, freqs, chart):
    xi = np.asarray(freqs, dtype=float)
    n = xi.size
    if chart == "energy":
        ixi = 1j * xi[:, None]

        def fun(t, y):
            e = y.reshape(n, 2, 2)
            d = np.empty_like(e)
            d[:, 0, :] = ixi * e[:, 1, :]
            d[:, 1, :] = ixi * e[:, 0, :] - 2.0 * profile.b(t) * e[:, 1, :]
            return d.ravel()
    elif chart == "scalar":
        xi2 = (xi**2)[:, None]

        def fun(t, y):
            e = y.reshape(n, 2, 2)
            d = np.empty_like(e)
            d[:, 0, :] = e[:, 1, :]
            d[:, 1, :] = -xi2 * e[:, 0, :] - 2.0 * profile.b(t) * e[:, 1, :]
            return d.ravel()
    else:
        raise ValueError(f"unknown chart {chart!r}")
    return fun


def _propagate_chunk(profile, freqs, times, s, chart, opts):
    n = len(freqs)
    dtype = complex if chart == "energy" else float
    y0 = np.tile(np.eye(2, dtype=dtype), (n, 1, 1)).ravel()
    fun = _rhs(profile, freqs, chart)
    ys = integrate_segments(fun, y0, s, float(times.max()), times, profile, opts, scale=4 * n)
    return ys.reshape(len(times), n, 2, 2)


def propagate(profile, freqs, times, s=0.0, chart="energy", opts=DEFAULT_OPTIONS):
    """Fundamental matrices E(t, s, xi) for every t in ``times`` and xi in ``freqs``.

    ``times`` must satisfy t >= s.  Returns an array of shape
    ``(len(times), len(freqs), 2, 2)``.  Negative frequencies are accepted
    (the ODE only depends on xi through A), which finite differences use.
    """
    freqs = np.atleast_1d(np.asarray(freqs, dtype=float))
    times = np.atleast_1d(np.asarray(times, dtype=float))
    if np.any(times < s):
        raise ValueError("propagate needs t >= s")
    uniq, inverse = np.unique(times, return_inverse=True)
    if uniq.max() == s:
        eye = np.eye(2, dtype=complex if chart == "energy" else float)
        return np.broadcast_to(eye, (len(times), len(freqs), 2, 2)).copy()
    chunks = [freqs[i:i + CHUNK] for i in range(0, len(freqs), CHUNK)]

    def job(chunk):
        return _propagate_chunk(profile, chunk, uniq, s, chart, opts)

    if opts.workers > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(opts.workers) as pool:
            parts = list(pool.map(job, chunks))
    else:
        parts = [job(c) for c in chunks]
    return np.concatenate(parts, axis=1)[inverse.ravel()]


def fundamental_solution(profile, t, s, freq, opts=DEFAULT_OPTIONS, chart="energy"):
    """E(t, s, xi) in the energy chart; t < s is served by inversion."""
    if freq < 0:
        raise ValueError("radial frequency must be nonnegative")
    if t >= s:
        return propagate(profile, [freq], [t], s=s, chart=chart, opts=opts)[0, 0]
    return inv2(propagate(profile, [freq], [s], s=t, chart=chart, opts=opts)[0, 0])


def monodromy(profile, t, freq, opts=DEFAULT_OPTIONS, chart="energy"):
    """M(t, xi) = E(t + T, t, xi), integrated directly from t."""
    T = profile.period
    return propagate(profile, [freq], [t + T], s=t, chart=chart, opts=opts)[0, 0]


def monodromy_family(profile, freqs, ts=(0.0,), opts=DEFAULT_OPTIONS, chart="energy"):
    """M(t, xi) for all t in ``ts`` (within [0, T]) and xi in ``freqs``.

    Computed as E(t + T, 0) E(t, 0)^{-1} from a single pass over [0, max t + T].
    Returns shape ``(len(ts), len(freqs), 2, 2)``.
    """
    ts = np.atleast_1d(np.asarray(ts, dtype=float))
    T = profile.period
    if np.all(ts == 0.0):
        m = propagate(profile, freqs, [T], chart=chart, opts=opts)
        return np.broadcast_to(m, (len(ts),) + m.shape[1:]).copy()
    e = propagate(profile, freqs, np.concatenate([ts, ts + T]), chart=chart, opts=opts)
    k = len(ts)
    return e[k:] @ inv2(e[:k])


# -- high-frequency diagonalisation --------------------------------------

def _moment_weights(theta):
    """w0 = int_0^1 (1-u) e^{i theta u} du and w1 = int_0^1 u e^{i theta u} du."""
    theta = np.asarray(theta, dtype=float)
    small = np.abs(theta) < 0.25
    th = np.where(small, 1.0, theta)
    e = np.exp(1j * th)
    w1 = e / (1j * th) + (e - 1.0) / th**2
    w01 = (e - 1.0) / (1j * th)
    # power series for small |theta|
    ts = np.where(small, theta, 0.0)
    s0 = np.zeros_like(ts, dtype=complex)
    s1 = np.zeros_like(ts, dtype=complex)
    term = np.ones_like(ts, dtype=complex)
    for k in range(14):
        s0 += term / (k + 1)
        s1 += term / (k + 2)
        term = term * 1j * ts / (k + 1)
    w1 = np.where(small, s1, w1)
    w01 = np.where(small, s0, w01)
    return w01 - w1, w1


def _filon_nodes(profile, t_end, per_period):
    T = profile.period
    m = max(1, int(math.ceil(t_end / T * per_period)))
    nodes = np.linspace(0.0, t_end, m + 1)
    cuts = profile.breakpoints(0.0, t_end)
    if cuts.size:
        nodes = np.union1d(nodes, cuts)
    return nodes


def _cumulative_filon(profile, nodes, omega):
    """int_0^{nodes[j]} e^{-i omega s} b(s) ds with b linearly interpolated per panel."""
    a, bnd = nodes[:-1], nodes[1:]
    h = bnd - a
    ba = profile.b_side(a, +1)
    bb = profile.b_side(bnd, -1)
    w0, w1 = _moment_weights(-omega * h)
    panel = h * np.exp(-1j * omega * a) * (ba * w0 + bb * w1)
    return np.concatenate([[0.0], np.cumsum(panel)])


def n_pm(profile, t, freq, per_period=FRAME_POINTS_PER_PERIOD):
    """n^{+-}(t, xi) = int_0^t e^{+-2i|xi|(t-s)} b(s) ds by Filon-type quadrature.

    b is interpolated linearly on ``per_period`` panels per period (with jump
    points as panel edges) and each panel is integrated exactly against the
    exponential, which keeps the O(|xi|^{-1}) behaviour intact.
    """
    if freq <= 0:
        raise ValueError("n_pm needs a positive frequency")
    t = float(t)
    if t == 0.0:
        return 0j, 0j
    nodes = _filon_nodes(profile, t, per_period)
    gp = _cumulative_filon(profile, nodes, 2.0 * freq)[-1]
    gm = _cumulative_filon(profile, nodes, -2.0 * freq)[-1]
    return np.exp(2j * freq * t) * gp, np.exp(-2j * freq * t) * gm


def n_pm_bound(profile, t, freq):
    """Integration-by-parts bound |n^{+-}(t, xi)| <= (2 sup b + TV_[0,t] b) / (2|xi|)."""
    periods = math.ceil(t / profile.period) if t > 0 else 0
    return (2.0 * profile.sup() + periods * profile.total_variation()) / (2.0 * freq)


@dataclass
class HighFreqFrame:
    """Diagonaliser N1 and remainder R2 sampled on a grid in [0, 2T].

    N1 solves D_t N1 = [D1, N1] + R1 with N1(0) = I.  Written in terms of the
    integrals ``n_plus``/``n_minus`` returned by :func:`n_pm` it reads
    N1 = [[1, -n_plus], [-n_minus, 1]].
    """

    freq: float
    t: np.ndarray
    n_plus: np.ndarray
    n_minus: np.ndarray
    N1: np.ndarray
    R1: np.ndarray
    R2: np.ndarray
    sup_N1_minus_I: float
    sup_R2: float
    min_det_N1: float

    @property
    def norm_R2(self):
        return operator_norm(self.R2)


def n1_residual(profile, freq, t, off12, off21):
    """Right-hand side of the N1 system's off-diagonal entries (d/dt form)."""
    b = profile.b(t)
    return 2j * freq * off12 - b, -2j * freq * off21 - b


def build_frame(profile, freq, t=None, per_period=None):
    """Sample N1, R1 and R2 on a grid of [0, 2T].

    The default grid has at least 512 points per period (more when the
    oscillation 2|xi| needs it) and contains every jump of b.
    Raises :class:`FrameSingular` if ``min |det N1| < 0.5``.
    """
    T = profile.period
    if per_period is None:
        per_period = max(FRAME_POINTS_PER_PERIOD, 64 * int(math.ceil(freq * T / 4.0)) * 4)
        per_period = min(per_period, 1 << 16)
    if t is None:
        nodes = _filon_nodes(profile, 2.0 * T, per_period)
    else:
        fine = _filon_nodes(profile, float(np.max(t)), per_period)
        nodes = np.union1d(fine, np.asarray(t, dtype=float))
    gp = _cumulative_filon(profile, nodes, 2.0 * freq)
    gm = _cumulative_filon(profile, nodes, -2.0 * freq)
    n_plus = np.exp(2j * freq * nodes) * gp
    n_minus = np.exp(-2j * freq * nodes) * gm
    k = len(nodes)
    N1 = np.zeros((k, 2, 2), dtype=complex)
    N1[:, 0, 0] = 1.0
    N1[:, 1, 1] = 1.0
    N1[:, 0, 1] = -n_plus
    N1[:, 1, 0] = -n_minus
    b = profile.b(nodes)
    R1 = np.zeros((k, 2, 2), dtype=complex)
    R1[:, 0, 1] = 1j * b
    R1[:, 1, 0] = 1j * b
    eye = np.eye(2)
    dets = np.abs(det2(N1))
    min_det = float(dets.min())
    if min_det < 0.5:
        raise FrameSingular(f"min |det N1| = {min_det:.3f} < 0.5 at |xi| = {freq}")
    R2 = -inv2(N1) @ R1 @ (eye - N1)
    return HighFreqFrame(
        freq=float(freq), t=nodes, n_plus=n_plus, n_minus=n_minus, N1=N1, R1=R1, R2=R2,
        sup_N1_minus_I=float(operator_norm(N1 - eye).max()),
        sup_R2=float(operator_norm(R2).max()),
        min_det_N1=min_det,
    )


def contraction_criterion(profile, freq, t_points=64, frame=None):
    """sup_t ||N1(t+T)|| exp(int_t^{t+T} ||R2||) ||N1^{-1}(t)|| over t_points in [0, T).

    A value below exp(beta T) certifies ||M(t, xi)|| < 1.
    """
    T = profile.period
    grid = np.arange(t_points) * (T / t_points)
    if frame is None:
        frame = build_frame(profile, freq, t=np.concatenate([grid, grid + T]))
    nodes = frame.t
    r2 = operator_norm(frame.R2)
    cum = np.concatenate([[0.0], np.cumsum(0.5 * (r2[1:] + r2[:-1]) * np.diff(nodes))])
    i0 = np.searchsorted(nodes, grid)
    i1 = np.searchsorted(nodes, grid + T)
    if not (np.allclose(nodes[i0], grid) and np.allclose(nodes[i1], grid + T)):
        raise ValueError("frame grid does not contain the criterion points")
    n1 = operator_norm(frame.N1)
    n1inv = operator_norm(inv2(frame.N1))
    values = n1[i1] * np.exp(cum[i1] - cum[i0]) * n1inv[i0]
    return float(values.max())


@dataclass
class ProductRepresentation:
    """Pieces of M(t, xi) = (lam(t)/lam(t+T)) U N1(t+T) E0~ Q N1(t)^{-1} U^{-1}."""

    prefactor: float
    N1_start: np.ndarray
    N1_end: np.ndarray
    E0_tilde: np.ndarray
    Q: np.ndarray
    int_norm_R2: float

    @property
    def matrix(self):
        inner = self.N1_end @ self.E0_tilde @ self.Q @ inv2(self.N1_start)
        return self.prefactor * (UNITARY @ inner @ UNITARY_INV)


def product_representation(profile, t, freq, opts=DEFAULT_OPTIONS):
    """Assemble the high-frequency product representation of M(t, xi).

    N1 is carried along by its own ODE and Q solves
    D_tau Q = E0~(t, tau) R2(tau) E0~(tau, t) Q, Q(t) = I, on [t, t+T]; the
    running integral of ||R2|| is integrated alongside for the bound
    ||Q|| <= exp(int ||R2||).
    """
    T = profile.period
    build_frame(profile, freq)  # raises FrameSingular when N1 is not usable
    xi = float(freq)

    def n1_fun(tau, y):
        d12, d21 = n1_residual(profile, xi, tau, y[0], y[1])
        return np.array([d12, d21])

    y0 = np.zeros(2, dtype=complex)
    if t > 0:
        y0 = integrate_segments(n1_fun, y0, 0.0, t, [t], profile, opts, scale=2)[0]

    def full_fun(tau, y):
        x12, x21 = y[0], y[1]
        d12, d21 = n1_residual(profile, xi, tau, x12, x21)
        b = profile.b(tau)
        n1 = np.array([[1.0, x12], [x21, 1.0]])
        r1 = np.array([[0.0, 1j * b], [1j * b, 0.0]])
        r2 = -inv2(n1) @ r1 @ (np.eye(2) - n1)
        ph = np.exp(1j * xi * (tau - t))
        # E0~(t, tau) R2 E0~(tau, t)
        conj = np.array([[r2[0, 0], r2[0, 1] * ph**-2], [r2[1, 0] * ph**2, r2[1, 1]]])
        q = y[2:6].reshape(2, 2)
        dq = 1j * conj @ q
        return np.concatenate([[d12, d21], dq.ravel(), [operator_norm(r2)]])

    start = np.concatenate([y0, np.eye(2, dtype=complex).ravel(), [0.0]])
    end = integrate_segments(full_fun, start, t, t + T, [t + T], profile, opts, scale=7)[0]
    n1s = np.array([[1.0, y0[0]], [y0[1], 1.0]])
    n1e = np.array([[1.0, end[0]], [end[1], 1.0]])
    e0 = np.diag([np.exp(1j * T * xi), np.exp(-1j * T * xi)])
    pref = float(np.exp(profile.log_lambda(t) - profile.log_lambda(t + T)))
    return ProductRepresentation(
        prefactor=pref, N1_start=n1s, N1_end=n1e, E0_tilde=e0,
        Q=end[2:6].reshape(2, 2), int_norm_R2=float(end[6].real),
    )


def reconstruct_monodromy_highfreq(profile, t, freq, opts=DEFAULT_OPTIONS):
    return product_representation(profile, t, freq, opts).matrix
