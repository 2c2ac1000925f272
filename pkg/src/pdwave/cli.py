"""Command-line front end.

    pdwave <subcommand> --config run.toml --out results/

The config file is a flat list of ``key = value`` lines (a subset of TOML);
values are JSON literals.  Profile parameters use dotted keys, e.g.

    profile.family = "sinusoid"
    profile.b0 = 1.0
    profile.a = 0.5
    profile.period = 1.0
    dimension = 3

Everything except ``metadata.json`` is a pure function of the config and the
seed, so repeated runs give byte-identical files.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import io
import json
import math
import platform
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__, coeff, estimates, spectral, zones
from . import propagator as prop
from .errors import ConfigError, InvalidProfile, NumericalError

SUBCOMMANDS = ("spectrum", "bands", "alpha2", "zones", "decay", "diffusion", "report")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_REPORT = 0, 1, 2, 3


# -- configuration -------------------------------------------------------------

@dataclass
class RunConfig:
    profile: dict = field(default_factory=lambda: {"family": "sinusoid", "b0": 1.0, "a": 0.5,
                                                   "phase": 0.0, "period": 1.0})
    dimension: int = 3
    rtol: float = 1e-10
    atol: float = 1e-12
    t_points: int = 64
    xi_points: int = 256
    xi_min: float = 1e-3
    xi_max: float = 30.0
    scan_points: int = 3000
    slope_lo: float = 1e2
    slope_hi: float = 1e4
    slope_samples: int = 30
    data_margin: float = 0.05
    data_a1: float = 1.0
    data_a2: float = 1.0
    quad_nodes: int = 2048
    probes: int = 50
    output: str = "out"

    def build_profile(self):
        return coeff.profile_from_dict(self.profile)

    def options(self, threads=1):
        return prop.IntegratorOptions(rtol=self.rtol, atol=self.atol, workers=threads)

    def data(self):
        return estimates.RadialData.edge(self.dimension, self.data_a1, self.data_a2,
                                         margin=self.data_margin, nodes=self.quad_nodes)

    def to_text(self):
        lines = [f"profile.{k} = {json.dumps(v)}" for k, v in self.profile.items()]
        for f in dataclasses.fields(self):
            if f.name != "profile":
                lines.append(f"{f.name} = {json.dumps(getattr(self, f.name))}")
        return "\n".join(lines) + "\n"


_POSITIVE = {"rtol", "atol", "t_points", "xi_points", "xi_min", "xi_max", "scan_points",
             "slope_lo", "slope_hi", "slope_samples", "data_margin", "quad_nodes", "probes",
             "dimension"}
_INTEGER = {"dimension", "t_points", "xi_points", "scan_points", "slope_samples",
            "quad_nodes", "probes"}


def parse_config(text, path="<config>"):
    """Parse and validate config text; errors carry the offending line."""
    cfg = RunConfig()
    fields = {f.name for f in dataclasses.fields(RunConfig)} - {"profile"}
    profile, where = {}, {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        key = key.strip()
        if not sep or not key:
            raise ConfigError("expected 'key = value'", lineno, path)
        try:
            val = json.loads(value.strip())
        except json.JSONDecodeError:
            raise ConfigError(f"cannot parse value for {key!r}: {value.strip()}", lineno, path) from None
        if key in where:
            raise ConfigError(f"duplicate key {key!r}", lineno, path)
        where[key] = lineno
        if key.startswith("profile."):
            profile[key[len("profile."):]] = val
            continue
        if key not in fields:
            raise ConfigError(f"unknown key {key!r}", lineno, path)
        if key in _INTEGER and not (isinstance(val, int) and not isinstance(val, bool)):
            raise ConfigError(f"{key} must be an integer", lineno, path)
        if key in _POSITIVE and not (isinstance(val, (int, float)) and val > 0):
            raise ConfigError(f"{key} must be positive", lineno, path)
        setattr(cfg, key, val)
    if profile:
        cfg.profile = profile
    _validate(cfg, where, path)
    return cfg


def _validate(cfg, where, path):
    def fail(msg, key):
        raise ConfigError(msg, where.get(key), path)

    period = cfg.profile.get("period", 1.0)
    if not (isinstance(period, (int, float)) and period > 0):
        fail(f"profile.period must be positive, got {period}", "profile.period")
    try:
        cfg.build_profile()
    except InvalidProfile as exc:
        fail(f"invalid profile: {exc}", "profile.family")
    if cfg.xi_min >= cfg.xi_max:
        fail("xi_min must be below xi_max", "xi_min")
    if cfg.slope_lo >= cfg.slope_hi:
        fail("slope_lo must be below slope_hi", "slope_lo")
    if cfg.dimension > 6:
        fail("dimension must lie in 1..6", "dimension")
    if cfg.quad_nodes % estimates.PANEL_NODES:
        fail(f"quad_nodes must be a multiple of {estimates.PANEL_NODES}", "quad_nodes")
    if not 2 * (-cfg.dimension / 2 + cfg.data_margin) + cfg.dimension > 0:
        fail("data_margin must be positive", "data_margin")


def load_config(path):
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc.strerror}", None, str(p)) from None
    return parse_config(text, str(p))


# -- output helpers --------------------------------------------------------------

def _fmt(x):
    if isinstance(x, (float, np.floating)):
        return f"{float(x):.16e}"
    return str(x)


def write_csv(path, header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(x) for x in row])
    Path(path).write_text(buf.getvalue())


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else str(v)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


def write_json(path, obj):
    Path(path).write_text(json.dumps(_clean(obj), indent=2, sort_keys=True) + "\n")


def check(name, value, tolerance, passed, comparison):
    """One judged entry: the value, what it was compared with and the verdict."""
    return {"name": name, "value": value, "tolerance": tolerance,
            "comparison": comparison, "passed": bool(passed)}


def write_trace(path, trace):
    write_csv(path, ["t", "value"], trace.rows())


# -- subcommands ---------------------------------------------------------------

class Context:
    def __init__(self, cfg, out, threads=1, seed=0):
        self.cfg = cfg
        self.out = Path(out)
        self.seed = seed
        self.profile = cfg.build_profile()
        self.opts = cfg.options(threads)
        self._cert = None

    def certificate(self):
        if self._cert is None:
            self._cert = zones.certify(self.profile, opts=self.opts, t_points=self.cfg.t_points,
                                       xi_points=self.cfg.xi_points)
        return self._cert

    def times(self):
        c = self.cfg
        return estimates.stroboscopic_times(self.profile.period, c.slope_lo, c.slope_hi,
                                            c.slope_samples)


def run_spectrum(ctx):
    p, c = ctx.profile, ctx.cfg
    T, beta = p.period, p.beta
    xi = np.linspace(c.xi_min, c.xi_max, c.xi_points)
    ts = np.arange(c.t_points) * (T / c.t_points)
    m = prop.monodromy_family(p, xi, ts, ctx.opts)
    liouville = float(np.max(np.abs(prop.det2(m) * math.exp(2 * beta * T) - 1.0)))
    specs = spectral.spectra(m[0], T, beta)
    rows = []
    mod_err = prod_err = 0.0
    rho = 0.0
    for x, sp in zip(xi, specs):
        k1, k2 = complex(sp.kappa1), complex(sp.kappa2)
        n1, n2 = complex(sp.nu_plus), complex(sp.nu_minus)
        rows.append([float(x), k1.real, k1.imag, k2.real, k2.imag, sp.classification.value,
                     n1.real, n1.imag, n2.real, n2.imag])
        rho = max(rho, sp.spectral_radius)
        if sp.classification is spectral.Classification.COMPLEX_PAIR:
            mod_err = max(mod_err, abs(abs(k1) - math.exp(-beta * T)), abs(abs(k2) - math.exp(-beta * T)))
        elif sp.classification is spectral.Classification.REAL_PAIR:
            prod_err = max(prod_err, abs((k1 * k2).real - math.exp(-2 * beta * T)))
    write_csv(ctx.out / "spectrum.csv",
              ["xi", "re_kappa1", "im_kappa1", "re_kappa2", "im_kappa2", "class",
               "re_nu_plus", "im_nu_plus", "re_nu_minus", "im_nu_minus"], rows)
    checks = [
        check("liouville_determinant", liouville, 1e-7, liouville < 1e-7, "max |det M e^{2 beta T} - 1| <"),
        check("complex_pair_modulus", mod_err, 1e-7, mod_err < 1e-7, "max ||kappa| - e^{-beta T}| <"),
        check("real_pair_product", prod_err, 1e-8, prod_err < 1e-8, "max |kappa1 kappa2 - e^{-2 beta T}| <"),
        check("spectral_radius", rho, 1.0, rho < 1.0, "max rho(M) <"),
    ]
    summary = {"grid": {"xi_min": c.xi_min, "xi_max": c.xi_max, "xi_points": c.xi_points,
                        "t_points": c.t_points}, "checks": checks}
    write_json(ctx.out / "spectrum.json", summary)
    return summary


def run_bands(ctx):
    c = ctx.cfg
    iv = spectral.classify_stability_intervals(ctx.profile, c.xi_max, c.scan_points, ctx.opts)
    summary = iv.to_dict()
    summary["checks"] = [check("tau0_positive", iv.tau0, 0.0, iv.tau0 > 0, "tau0 >")]
    write_json(ctx.out / "bands.json", summary)
    return summary


def run_alpha2(ctx):
    expansion = spectral.small_freq_expansion(ctx.profile, ctx.opts)
    summary = expansion.to_dict()
    spread = expansion.max_relative_spread
    gdiff = abs(expansion.gamma - expansion.gamma_floquet)
    summary["checks"] = [
        check("alpha2_agreement", spread, 1e-5, spread < 1e-5, "max pairwise relative spread <"),
        check("alpha1_residual", expansion.alpha1_residual, 1e-6, expansion.alpha1_residual < 1e-6, "<"),
        check("alpha2_positive", expansion.alpha2_integral, 0.0, expansion.alpha2_integral > 0, ">"),
        check("gamma_consistency", gdiff, 1e-4, gdiff < 1e-4, "|gamma - Floquet extrapolation| <"),
    ]
    write_json(ctx.out / "alpha2.json", summary)
    return summary


def run_zones(ctx):
    p = ctx.profile
    cert = ctx.certificate()
    rng = np.random.default_rng(ctx.seed)
    probes = zones.probe_certificate(p, cert, rng, ctx.cfg.probes, ctx.opts)
    recon = 0.0
    for x in (cert.N, 2 * cert.N):
        for t in (0.0, 0.5 * p.period):
            a = prop.reconstruct_monodromy_highfreq(p, t, x, ctx.opts)
            b = prop.monodromy_family(p, [x], [t], ctx.opts)[0, 0]
            recon = max(recon, float(np.max(np.abs(a - b))))
    summary = {"certificate": cert.to_dict(), "probes": probes, "seed": ctx.seed,
               "reconstruction_error": recon}
    summary["checks"] = [
        check("sup_norm_high", cert.sup_norm_high, 1.0, cert.sup_norm_high < 1, "<"),
        check("sup_norm_band", cert.sup_norm_band, 1.0, cert.sup_norm_band < 1, "<"),
        check("probe_high", probes["max_norm_high"], 1.0, probes["max_norm_high"] < 1, "<"),
        check("probe_band_power", probes["max_norm_band_power"], 1.0,
              probes["max_norm_band_power"] < 1, "<"),
        check("product_representation", recon, 1e-6, recon < 1e-6, "max entrywise error <"),
    ]
    write_json(ctx.out / "zones.json", summary)
    return summary


def _slope_check(name, fit, target, tol):
    return check(name, fit.slope, tol, abs(fit.slope - target) <= tol, f"|slope - ({target})| <=")


def run_decay(ctx):
    p, c = ctx.profile, ctx.cfg
    data = c.data()
    n = c.dimension
    ts = ctx.times()
    window = (c.slope_lo, c.slope_hi)
    traces = estimates.energy_trace(p, data, ts, ctx.opts, check=True)
    sig = 2 * data.power + n
    targets = {"u_L2": -sig / 4, "grad_u_L2": -(2 + sig) / 4, "dt_u_L2": -(4 + sig) / 4}
    tols = {"u_L2": 0.05, "grad_u_L2": 0.05, "dt_u_L2": 0.1}
    fits, checks = {}, []
    for tr in traces:
        write_trace(ctx.out / f"decay_{tr.label}.csv", tr)
        fit = estimates.decay_slope(tr, window)
        fits[tr.label] = dict(fit.to_dict(), target=targets[tr.label], tolerance=tols[tr.label])
        checks.append(_slope_check(f"energy_{tr.label}", fit, targets[tr.label], tols[tr.label]))
    for r in (2.0, 1.0):
        for weight in estimates.WEIGHTS:
            tr = estimates.multiplier_trace(p, ts, r, n, weight, opts=ctx.opts)
            write_trace(ctx.out / f"multiplier_{weight}_r{r:g}.csv", tr)
            fit = estimates.decay_slope(tr, window)
            target = estimates.multiplier_rate(r, n, weight)
            fits[tr.label] = dict(fit.to_dict(), target=target, tolerance=0.05)
            checks.append(_slope_check(f"multiplier_{weight}_r{r:g}", fit, target, 0.05))
    cert = ctx.certificate()
    tail_times = np.linspace(0.0, 80.0 * p.period, 33)
    tail = estimates.exponential_tail(p, estimates.RadialData(n=n, nodes=c.quad_nodes), cert.c,
                                      tail_times, cert, ctx.opts)
    write_trace(ctx.out / "decay_high_frequency.csv", tail)
    rate = estimates.exponential_rate(tail, (10.0 * p.period, 80.0 * p.period))
    fits["high_frequency"] = dict(rate.to_dict(), delta_band=cert.delta_band)
    bound = -0.95 * cert.delta_band
    checks.append(check("exponential_tail_rate", rate.slope, bound, rate.slope <= bound,
                        "slope <= -0.95 delta_band ="))
    summary = {"fits": fits, "data": dataclasses.asdict(data), "checks": checks}
    write_json(ctx.out / "decay.json", summary)
    return summary


def run_diffusion(ctx):
    p, c = ctx.profile, ctx.cfg
    data = c.data()
    ts = ctx.times()
    k = estimates.diffusion_constants(p)
    diff = estimates.diffusion_difference(p, data, ts, ctx.opts, k)
    control = estimates.diffusion_difference(p, data, ts, ctx.opts, k, w0_scale=1.1)
    plain = estimates.diffusion_difference(p, data, ts, ctx.opts, k, subtract=False)
    write_trace(ctx.out / "diffusion.csv", diff)
    write_trace(ctx.out / "diffusion_control.csv", control)
    write_trace(ctx.out / "diffusion_unsubtracted.csv", plain)
    window = (c.slope_lo, c.slope_hi)
    fit = estimates.decay_slope(diff, window)
    ratio = float(control.values[-1] / diff.values[-1])
    summary = {
        "alpha2": k.alpha2, "gamma": k.gamma, "w0_coefficients": list(k.w0_coefficients),
        "fit": fit.to_dict(), "control_fit": estimates.decay_slope(control, window).to_dict(),
        "unsubtracted_fit": estimates.decay_slope(plain, window).to_dict(),
        "control_ratio_at_end": ratio,
        "checks": [
            _slope_check("diffusion_slope", fit, -1.0, 0.1),
            check("control_ratio", ratio, 2.0, ratio >= 2.0, "perturbed / correct >="),
        ],
    }
    write_json(ctx.out / "diffusion.json", summary)
    return summary


RUNNERS = {
    "spectrum": run_spectrum,
    "bands": run_bands,
    "alpha2": run_alpha2,
    "zones": run_zones,
    "decay": run_decay,
    "diffusion": run_diffusion,
}


def run_report(ctx):
    entries = []
    for name, runner in RUNNERS.items():
        if name == "report":
            continue
        for entry in runner(ctx)["checks"]:
            entries.append(dict(entry, subcommand=name))
    summary = {"checks": entries, "passed": all(e["passed"] for e in entries),
               "failed": [e["name"] for e in entries if not e["passed"]]}
    write_json(ctx.out / "report.json", summary)
    return summary


RUNNERS["report"] = run_report


def run_subcommand(name, cfg, out=None, threads=1, seed=0):
    """Run one subcommand; returns (exit status, summary)."""
    if name not in RUNNERS:
        raise ValueError(f"unknown subcommand {name!r}")
    ctx = Context(cfg, out or cfg.output, threads, seed)
    ctx.out.mkdir(parents=True, exist_ok=True)
    start = time.perf_counter()
    summary = RUNNERS[name](ctx)
    write_json(ctx.out / "metadata.json", {
        "subcommand": name, "version": __version__, "seed": seed, "threads": threads,
        "wall_time_s": time.perf_counter() - start, "python": platform.python_version(),
    })
    status = EXIT_OK
    if name == "report" and not summary["passed"]:
        status = EXIT_REPORT
    return status, summary


def _parser():
    defaults = RunConfig().to_text()
    p = argparse.ArgumentParser(
        prog="pdwave",
        description="Monodromy spectra, contraction certificates and decay rates for damped "
                    "waves with periodic dissipation.",
        epilog="config keys and defaults:\n" + "".join("  " + line + "\n" for line in defaults.splitlines()),
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    p.add_argument("subcommand", choices=SUBCOMMANDS)
    p.add_argument("--config", help="flat key = value config file (defaults used if omitted)")
    p.add_argument("--out", help="output directory (default: the config's output key)")
    p.add_argument("--threads", type=int, default=1, help="worker threads for frequency sweeps")
    p.add_argument("--seed", type=int, default=0, help="seed for random off-grid probes")
    p.add_argument("--json", action="store_true", help="print the summary JSON to stdout")
    return p


def main(argv=None):
    args = _parser().parse_args(argv)
    try:
        if args.threads < 1:
            raise ConfigError("--threads must be at least 1")
        if not 0 <= args.seed < 2**64:
            raise ConfigError("--seed must be an unsigned 64-bit integer")
        cfg = load_config(args.config) if args.config else RunConfig()
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        status, summary = run_subcommand(args.subcommand, cfg, args.out, args.threads, args.seed)
    except NumericalError as exc:
        print(f"numerical error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    if args.json:
        print(json.dumps(_clean(summary), indent=2, sort_keys=True))
    if status == EXIT_REPORT:
        print("report: failed checks: " + ", ".join(summary["failed"]), file=sys.stderr)
    return status


if __name__ == "__main__":
    sys.exit(main())
