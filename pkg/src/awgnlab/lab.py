"""Experiment configuration, runners and report emission.

Each runner takes an :class:`ExperimentConfig` and returns a
:class:`RunReport`; :func:`write_outputs` writes the CSV table, the
``log(delta) log(gap)`` plot data, the JSON summary and a separate timing
file (so that CSV and JSON bytes depend only on the configuration).
"""

import csv
import io
import json
import math
import time
import warnings
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np
import yaml

from . import __version__
from .extremes import Moment, MaxGaussQuery, rate_fit, zmax_exact, zmax_mc
from .feedmi import feedback_mi_run, novikov_check, sup_norm_moment_check
from .gaussmi import (cor1_bound, mi_continuous_oracle, mi_sampled,
                      power_bound, thm1a_bound, thm1b_bound)
from .rng import stream, stream_id
from .simulate import (LinearFeedback, MessageScaled, SampleGrid,
                       check_conditions)
from .spectra import BandLimitedFlat, Tabulated, load_tabulated

__all__ = [
    "SCHEMA_VERSION",
    "CSV_COLUMNS",
    "EXPERIMENTS",
    "ConfigError",
    "ExperimentConfig",
    "RunReport",
    "load_config",
    "build_psd",
    "build_drift",
    "run_nonfeedback_gap",
    "run_feedback_gap",
    "run_maxgauss",
    "run_sanity",
    "run",
    "write_outputs",
]

SCHEMA_VERSION = 1
# absolute floor for comparisons against an exact zero (double round-off)
ROUNDOFF = 1e-12

CSV_COLUMNS = {
    "nonfeedback-gap": ["n", "delta", "mi_sampled_nats", "mi_oracle_nats",
                        "gap_nats", "thm1b_bound_nats", "cor1_bound_nats"],
    "feedback-gap": ["n", "delta", "mi_sampled_nats", "se_sampled",
                     "mi_continuous_nats", "se_continuous", "gap_nats",
                     "gap_se", "clip_count"],
    "maxgauss": ["n", "moment", "exact", "mc_mean", "mc_se",
                 "fitted_slope_so_far"],
    "sanity": ["check", "value", "std_error", "target", "passed"],
}
EXPERIMENTS = tuple(CSV_COLUMNS)


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    """Flat experiment configuration; field names are the config-file keys."""

    experiment: str = "nonfeedback-gap"
    seed: int = 0
    out_dir: str = "out"
    T: float = 8.0
    n_list: list = field(default_factory=lambda: [8, 16, 32, 64, 128, 256, 512])
    fine_n: int = 4096
    trials: int = 0
    workers: int = 1
    # input PSD (non-feedback)
    psd_kind: str = "bandlimited_flat"
    psd_P: float = 1.0
    psd_W: float = 4.0
    psd_table: str = ""
    # feedback drift
    drift_family: str = "linear_feedback"
    drift_theta: float = 1.0
    drift_kappa: float = 1.0
    messages: list = field(default_factory=lambda: [-1.0, 1.0])
    prior: list = field(default_factory=list)
    # tolerances and acceptance windows
    oracle_tol: float = 1e-2
    monotone_tol: float = 1e-9
    slope_floor: float = 0.5
    rate_eps: float = 0.1
    clip_fraction_max: float = 1e-3
    square_slope_window: list = field(default_factory=lambda: [-1.0, -0.80])
    fourth_slope_window: list = field(default_factory=lambda: [-2.0, -1.60])
    exp_slope_gap: float = 0.1
    mc_se_factor: float = 4.0
    supnorm_eps: float = 0.01

    def validate(self):
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment {self.experiment!r}")
        ns = [int(n) for n in self.n_list]
        if not ns:
            raise ConfigError("n_list is empty")
        if any(b <= a for a, b in zip(ns, ns[1:])):
            raise ConfigError("n_list must be strictly increasing")
        self.n_list = ns
        self.fine_n = int(self.fine_n)
        if self.experiment in ("nonfeedback-gap", "feedback-gap"):
            bad = [n for n in ns if self.fine_n % n]
            if bad:
                raise ConfigError(f"n_list entries {bad} do not divide fine_n={self.fine_n}")
        if self.experiment == "feedback-gap" and self.trials < 1:
            raise ConfigError("feedback-gap needs trials >= 1")
        return self

    def to_dict(self):
        return asdict(self)


def load_config(path=None, overrides=None, experiment=None):
    """Merge defaults, an optional YAML file and overrides (overrides win)."""
    data = {}
    if path:
        with open(path) as fh:
            loaded = yaml.safe_load(fh) or {}
        if not isinstance(loaded, dict):
            raise ConfigError(f"{path}: expected a flat key-value mapping")
        data.update(loaded)
    if experiment is not None:
        data["experiment"] = experiment
    data.update({k: v for k, v in (overrides or {}).items() if v is not None})
    known = {f.name for f in fields(ExperimentConfig)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f"unknown config keys: {unknown}")
    exp = data.get("experiment", "nonfeedback-gap")
    base = asdict(_DEFAULTS.get(exp, ExperimentConfig()))
    base.update(data)
    return ExperimentConfig(**base).validate()


_DEFAULTS = {
    "nonfeedback-gap": ExperimentConfig(experiment="nonfeedback-gap"),
    "feedback-gap": ExperimentConfig(
        experiment="feedback-gap", T=2.0, n_list=[8, 16, 32, 64, 128],
        fine_n=2048, trials=100_000),
    "maxgauss": ExperimentConfig(
        experiment="maxgauss", n_list=[2 ** k for k in range(4, 15)],
        trials=0),
    "sanity": ExperimentConfig(
        experiment="sanity", T=1.0, n_list=[1024], fine_n=1024,
        trials=100_000),
}


def build_psd(cfg):
    if cfg.psd_kind == "bandlimited_flat":
        return BandLimitedFlat(float(cfg.psd_P), float(cfg.psd_W))
    if cfg.psd_kind == "tabulated":
        if not cfg.psd_table:
            raise ConfigError("psd_kind=tabulated needs psd_table")
        return load_tabulated(cfg.psd_table)
    if cfg.psd_kind == "zero":
        return BandLimitedFlat(0.0, float(cfg.psd_W))
    raise ConfigError(f"unknown psd_kind {cfg.psd_kind!r}")


def build_drift(cfg):
    kw = {"messages": tuple(cfg.messages),
          "prior": tuple(cfg.prior) if cfg.prior else None}
    if cfg.drift_family == "linear_feedback":
        return LinearFeedback(theta=cfg.drift_theta, kappa=cfg.drift_kappa, **kw)
    if cfg.drift_family == "message_scaled":
        return MessageScaled(theta=cfg.drift_theta, **kw)
    if cfg.drift_family == "zero":
        return MessageScaled(theta=0.0, **kw)
    raise ConfigError(f"unknown drift_family {cfg.drift_family!r}")


@dataclass
class RunReport:
    experiment: str
    config: dict
    rows: list
    slopes: dict
    checks: dict
    wall_clock: float = 0.0
    version: str = __version__
    schema_version: int = SCHEMA_VERSION

    @property
    def passed(self):
        return all(c["passed"] for c in self.checks.values()
                   if c["passed"] is not None)

    def summary(self):
        """JSON-ready summary without the wall clock."""
        return {
            "schema_version": self.schema_version,
            "version": self.version,
            "experiment": self.experiment,
            "config": self.config,
            "rows": self.rows,
            "slopes": self.slopes,
            "checks": self.checks,
            "passed": self.passed,
        }


def _check(passed, detail):
    return {"passed": None if passed is None else bool(passed), "detail": detail}


def _fit_or_none(points):
    """rate_fit over points with positive values, or None if fewer than 3."""
    good = [(x, v) for x, v in points if v > 0 and math.isfinite(v)]
    if len(good) < 3:
        return None
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return rate_fit(good)


def _slope_entry(fit):
    if fit is None:
        return {"status": "insufficient points"}
    return {"status": "ok", "slope": fit.slope, "intercept": fit.intercept,
            "r2": fit.r2, "slope_se": fit.slope_se}


def run_nonfeedback_gap(cfg):
    """Sampled vs. continuous MI for a stationary Gaussian input."""
    psd = build_psd(cfg)
    T, ns = cfg.T, cfg.n_list
    oracle = mi_continuous_oracle(psd, T, cfg.fine_n, tol=cfg.oracle_tol)
    unc = oracle.uncertainty
    rows, mis, gaps = [], [], []
    ok_nonneg = ok_cor1 = ok_thm1b = ok_thm1a = ok_power = True
    for n in ns:
        mi = mi_sampled(psd, T, n).value
        gap = oracle.value - mi
        b1 = float(thm1b_bound(psd, T, n))
        bc = float(cor1_bound(psd, T, n))
        ba = float(thm1a_bound(psd, T, n, mi))
        ok_nonneg &= gap >= -cfg.monotone_tol - unc
        ok_cor1 &= gap + unc <= bc
        ok_thm1b &= gap + unc <= b1
        ok_thm1a &= math.sqrt(oracle.value + unc) <= ba
        ok_power &= mi <= power_bound(psd, T) + cfg.monotone_tol
        mis.append(mi)
        gaps.append(gap)
        rows.append({"n": n, "delta": T / n, "mi_sampled_nats": mi,
                     "mi_oracle_nats": oracle.value, "gap_nats": gap,
                     "thm1b_bound_nats": b1, "cor1_bound_nats": bc})
    nested = [i for i in range(1, len(ns)) if ns[i] % ns[i - 1] == 0]
    ok_mono = all(mis[i] >= mis[i - 1] - cfg.monotone_tol for i in nested)
    ok_gap_mono = all(gaps[i] <= gaps[i - 1] + cfg.monotone_tol for i in nested)
    fit = _fit_or_none([(T / n, g) for n, g in zip(ns, gaps)])
    checks = {
        "gap_nonnegative": _check(ok_nonneg, "gap >= -oracle uncertainty"),
        "cor1_gap_bound": _check(ok_cor1, "gap + uncertainty <= T P sqrt(W delta)"),
        "thm1b_gap_bound": _check(ok_thm1b, "gap + uncertainty <= T sqrt(delta m1 m0)"),
        "thm1a_sqrt_bound": _check(ok_thm1a, "sqrt(oracle + uncertainty) <= bound(a)"),
        "power_bound": _check(ok_power, "mi_sampled <= T m0 / 2"),
        "monotone_refinement": _check(ok_mono, "mi_sampled nondecreasing on nested grids"),
        "gap_nonincreasing": _check(ok_gap_mono, "gap nonincreasing on nested grids"),
        "gap_slope": _check(
            None if fit is None else fit.slope >= cfg.slope_floor,
            "insufficient points" if fit is None
            else f"slope {fit.slope:.4f} >= floor {cfg.slope_floor}"),
    }
    slopes = {"gap_vs_delta": _slope_entry(fit),
              "oracle": {"value": oracle.value, "uncertainty": unc,
                         "increments": list(oracle.increments)}}
    return RunReport(cfg.experiment, cfg.to_dict(), rows, slopes, checks)


def run_feedback_gap(cfg):
    """CRN-coupled continuous vs. sampled MI for the feedback channel."""
    drift = build_drift(cfg)
    fine = SampleGrid(cfg.T, cfg.fine_n)
    spot = check_conditions(drift, fine, stream(cfg.seed, stream_id("check")))
    if spot["lip_violations"] or spot["growth_violations"]:
        warnings.warn(f"declared drift constants violated on random paths: {spot}")
    coarse = [SampleGrid(cfg.T, n) for n in cfg.n_list]
    res = feedback_mi_run(drift, fine, coarse, cfg.trials, cfg.seed,
                          workers=cfg.workers)
    cont = res.continuous()
    H = drift.entropy
    rows, ok_entropy, ok_gap = [], cont.value <= H + 3 * cont.std_error, True
    n_msgs = len(drift.messages)
    clip_ok = True
    for j, g in enumerate(coarse):
        samp = res.sampled(j)
        gap, gap_se = res.gap(j)
        ok_entropy &= samp.value <= H + 3 * samp.std_error
        ok_gap &= gap >= -3 * gap_se
        clips = int(res.clips[j + 1])
        clip_ok &= clips <= cfg.clip_fraction_max * cfg.trials * n_msgs
        rows.append({"n": g.n, "delta": g.delta,
                     "mi_sampled_nats": samp.value, "se_sampled": samp.std_error,
                     "mi_continuous_nats": cont.value, "se_continuous": cont.std_error,
                     "gap_nats": gap, "gap_se": gap_se, "clip_count": clips})
    clip_ok &= int(res.clips[0]) <= cfg.clip_fraction_max * cfg.trials * n_msgs
    fit = _fit_or_none([(r["delta"], r["gap_nats"]) for r in rows])
    target = 0.5 - cfg.rate_eps
    checks = {
        "mi_below_entropy": _check(ok_entropy, f"all MI <= H(prior)={H:.6f} + 3 SE"),
        "gap_nonnegative": _check(ok_gap, "every gap >= -3 SE"),
        "clip_reliability": _check(clip_ok, "clipped exponents within threshold"),
        "gap_slope": _check(
            None if fit is None else fit.slope + 2 * fit.slope_se >= target,
            "insufficient points" if fit is None
            else f"slope {fit.slope:.4f} (se {fit.slope_se:.4f}) vs {target:.2f}"),
    }
    slopes = {"gap_vs_delta": _slope_entry(fit),
              "continuous": {"value": cont.value, "std_error": cont.std_error},
              "entropy": H, "condition_spot_check": spot}
    return RunReport(cfg.experiment, cfg.to_dict(), rows, slopes, checks)


def run_maxgauss(cfg):
    """Exact (and optionally Monte Carlo) moments of Z_max with slope fits."""
    rows = []
    exact = {m: [] for m in Moment}
    mc_ok = True
    for moment in Moment:
        pts = []
        for n in cfg.n_list:
            if moment is Moment.EXP_SQUARE and n < 3:
                continue
            val = zmax_exact(MaxGaussQuery(n, moment))
            exact[moment].append((n, val))
            pts.append((n, val - 1.0 if moment is Moment.EXP_SQUARE else val))
            fit = _fit_or_none(pts)
            mc_mean = mc_se = ""
            if cfg.trials > 0:
                mc_mean, mc_se = zmax_mc(MaxGaussQuery(n, moment, cfg.trials),
                                         cfg.seed + n)
                mc_ok &= abs(mc_mean - val) <= cfg.mc_se_factor * mc_se
            rows.append({"n": n, "moment": moment.value, "exact": val,
                         "mc_mean": mc_mean, "mc_se": mc_se,
                         "fitted_slope_so_far": "" if fit is None else fit.slope})
    fits = {m: _fit_or_none([(n, v - 1.0 if m is Moment.EXP_SQUARE else v)
                             for n, v in exact[m]]) for m in Moment}
    sq, fo, ex = fits[Moment.SQUARE], fits[Moment.FOURTH], fits[Moment.EXP_SQUARE]
    lo2, hi2 = cfg.square_slope_window
    lo4, hi4 = cfg.fourth_slope_window
    checks = {
        "square_slope": _check(
            None if sq is None else lo2 <= sq.slope <= hi2,
            "insufficient points" if sq is None
            else f"slope {sq.slope:.4f} in [{lo2}, {hi2}]"),
        "fourth_slope": _check(
            None if fo is None else lo4 <= fo.slope <= hi4,
            "insufficient points" if fo is None
            else f"slope {fo.slope:.4f} in [{lo4}, {hi4}]"),
        "exp_square_slope": _check(
            None if (ex is None or sq is None) else abs(ex.slope - sq.slope) <= cfg.exp_slope_gap,
            "insufficient points" if (ex is None or sq is None)
            else f"|{ex.slope:.4f} - {sq.slope:.4f}| <= {cfg.exp_slope_gap}"),
        "mc_agreement": _check(
            mc_ok if cfg.trials > 0 else None,
            f"|mc - exact| <= {cfg.mc_se_factor} SE" if cfg.trials > 0 else "no MC"),
    }
    slopes = {m.value: _slope_entry(f) for m, f in fits.items()}
    return RunReport(cfg.experiment, cfg.to_dict(), rows, slopes, checks)


def run_sanity(cfg):
    """Normalization identity, sup-norm moment and zero-information controls."""
    drift = build_drift(cfg)
    fine = SampleGrid(cfg.T, cfg.fine_n)
    rows, checks = [], {}

    mean, se = novikov_check(drift, fine, cfg.trials, cfg.seed)
    ok = abs(mean - 1.0) <= 3 * se if se > 0 else mean == 1.0
    rows.append({"check": "novikov", "value": mean, "std_error": se,
                 "target": 1.0, "passed": ok})
    checks["novikov"] = _check(ok, "E[exp(-int g dB - 1/2 int g^2)] within 3 SE of 1")

    half = max(1, cfg.trials // 2)
    m1, s1 = sup_norm_moment_check(drift, fine, cfg.supnorm_eps, half, cfg.seed)
    m2, s2 = sup_norm_moment_check(drift, fine, cfg.supnorm_eps, 2 * half, cfg.seed + 1)
    comb = math.hypot(s1, s2)
    ok = math.isfinite(m2) and abs(m2 - m1) <= 2 * comb
    rows.append({"check": "sup_norm_moment", "value": m2, "std_error": s2,
                 "target": m1, "passed": ok})
    checks["sup_norm_moment"] = _check(ok, "finite and stable across doubling trials (2 SE)")

    blind = LinearFeedback(theta=0.0, kappa=getattr(drift, "kappa", 1.0),
                           messages=drift.messages, prior=drift.prior)
    res = feedback_mi_run(blind, fine, [], max(100, cfg.trials // 10), cfg.seed,
                          workers=cfg.workers)
    est = res.continuous()
    se0 = est.std_error if math.isfinite(est.std_error) else 0.0
    ok = abs(est.value) <= 3 * se0 + ROUNDOFF
    rows.append({"check": "message_independent_mi", "value": est.value,
                 "std_error": se0, "target": 0.0, "passed": ok})
    checks["message_independent_mi"] = _check(ok, "MI within 3 SE of 0 (plus round-off floor)")

    zero = mi_sampled(BandLimitedFlat(0.0, 1.0), cfg.T, cfg.n_list[0]).value
    ok = zero == 0.0
    rows.append({"check": "zero_input_mi", "value": zero, "std_error": 0.0,
                 "target": 0.0, "passed": ok})
    checks["zero_input_mi"] = _check(ok, "g == 0 gives MI exactly 0")
    return RunReport(cfg.experiment, cfg.to_dict(), rows, {}, checks)


_RUNNERS = {
    "nonfeedback-gap": run_nonfeedback_gap,
    "feedback-gap": run_feedback_gap,
    "maxgauss": run_maxgauss,
    "sanity": run_sanity,
}


def run(cfg):
    start = time.perf_counter()
    report = _RUNNERS[cfg.experiment](cfg)
    report.wall_clock = time.perf_counter() - start
    return report


def _csv_text(report):
    cols = CSV_COLUMNS[report.experiment]
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=cols, lineterminator="\n")
    writer.writeheader()
    for row in report.rows:
        writer.writerow({k: row[k] for k in cols})
    return buf.getvalue()


def _plot_text(report):
    if report.experiment not in ("nonfeedback-gap", "feedback-gap"):
        return None
    lines = ["# log_delta log_gap"]
    for r in report.rows:
        if r["gap_nats"] > 0:
            lines.append(f"{math.log(r['delta'])!r} {math.log(r['gap_nats'])!r}")
    return "\n".join(lines) + "\n"


def _json_default(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.bool_):
        return bool(obj)
    raise TypeError(f"not JSON serializable: {type(obj)}")


def write_outputs(report, out_dir):
    """Write CSV, plot data, JSON summary and timing; return the paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    stem = report.experiment.replace("-", "_")
    paths = {"csv": out / f"{stem}.csv", "json": out / f"{stem}.json",
             "timing": out / f"{stem}.timing.json"}
    paths["csv"].write_text(_csv_text(report))
    paths["json"].write_text(
        json.dumps(report.summary(), indent=2, sort_keys=True,
                   default=_json_default) + "\n")
    paths["timing"].write_text(json.dumps({"wall_clock_s": report.wall_clock}) + "\n")
    plot = _plot_text(report)
    if plot is not None:
        paths["plot"] = out / f"{stem}_loglog.dat"
        paths["plot"].write_text(plot)
    return paths
