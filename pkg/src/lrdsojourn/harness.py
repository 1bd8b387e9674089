"""Monte Carlo experiments: CLT checks, reduction gaps, normality tests and report files.

A run is described by an :class:`ExperimentConfig` (plain JSON).  For each
horizon T the harness draws R fields, forms the normalised functional Y_T and
its rank-m projection Y_{m,T}, and records normality tests and the reduction
gap Var(Y_T - Y_{m,T}).  Replicate r at horizon index k always uses the
stream (seed, k, r), so reports do not depend on the thread count.

The gates are finite-T trends and non-rejections; they are not convergence
proofs.
"""

from __future__ import annotations

import csv
import json
import math
import time
from dataclasses import asdict, dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from scipy import special

from .covariance import CovarianceModel, check_lrd_conditions, model_from_dict, model_to_dict
from .errors import ParameterError, PreconditionError, SojournError, TooFewSamplesError
from .fields import GridSpec, replicate_rng, replicate_stats
from .geomprob import BodySpec, sphere_area
from .hermite import hermite, indicator_coeffs
from .sojourn import ThresholdSpec, moving_threshold
from .sphere import SphereGrid, SphericalSpectrum, sphere_replicate_stats, time_grid
from .variance import (discrete_chaos_variance, discrete_sojourn_variance, sigma2_ball, sigma2_body,
                       sigma2_sphere)

MIN_TEST_SAMPLES = 50
VARIANCE_METHODS = ("analytic", "discrete", "discrete-full")
GATE_NOTE = ("gates are finite-T trend and non-rejection checks at the stated level; "
             "they are not convergence proofs")


class ConfigError(ParameterError):
    """Malformed or inconsistent experiment configuration."""


# ---------------------------------------------------------------- configuration

@dataclass
class ExperimentConfig:
    model: dict
    d: int = 2
    body: object = "unit-ball"
    gamma: float = 0.0
    T: list = field(default_factory=lambda: [10.0])
    grid: dict = field(default_factory=dict)
    threshold: object = 1.0
    functional: dict = field(default_factory=lambda: {"kind": "indicator"})
    m: Optional[int] = None
    replicates: int = 100
    seed: int = 0
    variance_method: str = "analytic"
    sampler: str = "exact"
    surrogate: bool = False
    output: dict = field(default_factory=dict)

    def __post_init__(self):
        try:
            self.T = [float(t) for t in np.atleast_1d(self.T)]
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"T list is not numeric: {exc}") from None
        if not self.T or any(t <= 0 for t in self.T) or any(b <= a for a, b in zip(self.T, self.T[1:])):
            raise ConfigError("T list must be positive and strictly increasing")
        if int(self.replicates) < 1:
            raise ConfigError("replicates must be >= 1")
        self.replicates = int(self.replicates)
        if self.variance_method not in VARIANCE_METHODS:
            raise ConfigError(f"variance_method must be one of {VARIANCE_METHODS}")
        if self.sampler not in ("exact", "fast"):
            raise ConfigError("sampler must be 'exact' or 'fast'")
        if self.functional.get("kind") not in ("indicator", "hermite"):
            raise ConfigError("functional kind must be 'indicator' or 'hermite'")
        if self.functional["kind"] == "hermite" and int(self.functional.get("n", 0)) < 1:
            raise ConfigError("a Hermite functional needs n >= 1")
        ladder = self.grid.get("ladder")
        if ladder is not None:
            if any(int(b) % int(a) for a, b in zip(ladder, ladder[1:])) or any(int(a) < 1 for a in ladder):
                raise ConfigError("refinement ladder must be positive integers, each dividing the next")
        try:
            self.model_obj
            self.threshold_spec
        except SojournError as exc:
            raise ConfigError(str(exc)) from None

    # -- derived objects
    @property
    def model_obj(self) -> CovarianceModel:
        return model_from_dict(self.model)

    @property
    def threshold_spec(self) -> ThresholdSpec:
        return ThresholdSpec.from_dict(self.threshold)

    @property
    def is_sphere(self) -> bool:
        return self.body == "sphere"

    @property
    def rank(self) -> int:
        if self.m is not None:
            return int(self.m)
        if self.functional["kind"] == "hermite":
            return int(self.functional["n"])
        return 1

    def body_obj(self) -> BodySpec:
        return make_body(self.body, self.d)

    def to_dict(self) -> dict:
        out = asdict(self)
        return out

    @classmethod
    def from_dict(cls, obj: dict) -> "ExperimentConfig":
        if not isinstance(obj, dict) or "model" not in obj:
            raise ConfigError("config must be an object with a 'model' entry")
        obj = dict(obj)
        dom = obj.pop("domain", None)
        if dom is not None:
            for k in ("d", "body", "gamma", "T"):
                if k in dom:
                    obj[k] = dom[k]
        if "chaos" in obj:
            obj["m"] = obj.pop("chaos").get("m")
        known = set(cls.__dataclass_fields__)
        extra = set(obj) - known
        if extra:
            raise ConfigError(f"unknown config fields {sorted(extra)}")
        try:
            return cls(**obj)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        try:
            return cls.from_dict(json.loads(text))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from None


@lru_cache(maxsize=8)
def _cached_body(name: str, d: int) -> BodySpec:
    if name == "unit-ball":
        return BodySpec.unit_ball(d)
    if name == "cube":
        return BodySpec.cube(d)
    raise ConfigError(f"unknown body {name!r}")


def make_body(spec, d: int) -> BodySpec:
    """'unit-ball', 'cube', or {'chord_csv': path, 'volume': .., 'surface': .., 'sandwich': [..]}."""
    if isinstance(spec, str):
        return _cached_body(spec, d)
    if isinstance(spec, dict) and "chord_csv" in spec:
        try:
            return BodySpec.from_chord_csv(spec["chord_csv"], d, spec["volume"], spec["surface"],
                                           tuple(spec["sandwich"]) if spec.get("sandwich") else None,
                                           spec.get("name", "tabulated"))
        except KeyError as exc:
            raise ConfigError(f"tabulated body needs {exc}") from None
    raise ConfigError(f"cannot build a body from {spec!r}")


def _per_T(val, k, what):
    if isinstance(val, (list, tuple)):
        if k >= len(val):
            raise ConfigError(f"grid {what} list shorter than the T list")
        return val[k]
    return val


def make_grid(cfg: ExperimentConfig, k: int, factor: int = 1) -> GridSpec:
    T = cfg.T[k]
    g = cfg.grid
    body = cfg.body_obj()
    if "nx" in g and "nt" in g:
        return GridSpec(cfg.d, T, cfg.gamma, int(_per_T(g["nx"], k, "nx")) * factor,
                        int(_per_T(g["nt"], k, "nt")) * factor, body)
    if "h" in g and "dt" in g:
        return GridSpec.with_spacing(cfg.d, T, cfg.gamma, body, float(g["h"]) / factor, float(g["dt"]) / factor)
    raise ConfigError("grid needs (nx, nt) or (h, dt)")


# ---------------------------------------------------------------- normality tests

def _ad_inf(z):
    """Limiting CDF of the Anderson-Darling statistic (Marsaglia and Marsaglia approximation)."""
    if z <= 0:
        return 0.0
    if z < 2:
        return (math.exp(-1.2337141 / z) / math.sqrt(z)
                * (2.00012 + (0.247105 - (0.0649821 - (0.0347962 - (0.011672 - 0.00168691 * z) * z) * z) * z) * z))
    return math.exp(-math.exp(1.0776 - (2.30695 - (0.43424 - (0.082433 - (0.008056 - 0.0003146 * z) * z) * z) * z) * z))


def _ad_errfix(n, x):
    c = 0.01265 + 0.1757 / n
    if x < c:
        t = x / c
        t = math.sqrt(t) * (1 - t) * (49 * t - 102)
        return t * (0.0037 / n ** 3 + 0.00078 / n ** 2 + 0.00006 / n)
    if x < 0.8:
        t = (x - c) / (0.8 - c)
        t = -0.00022633 + (6.54034 - (14.6538 - (14.458 - (8.259 - 1.91864 * t) * t) * t) * t) * t
        return t * (0.04213 / n + 0.01365 / n ** 2)
    g3 = lambda v: -130.2137 + (745.2337 - (1705.091 - (1950.646 - (1116.360 - 255.7844 * v) * v) * v) * v) * v  # noqa: E731
    # the published coefficients leave g3(1) = -6e-4; remove it linearly so the fix vanishes at x = 1
    return (g3(x) - g3(1.0) * (x - 0.8) / 0.2) / n


def ad_pvalue(a2: float, n: int) -> float:
    x = _ad_inf(a2)
    return float(min(1.0, max(0.0, 1.0 - (x + _ad_errfix(n, x)))))


def normality_tests(samples) -> tuple:
    """(KS stat, KS p, AD stat, AD p) against N(0, 1).

    The KS p-value uses the Kolmogorov limit law at sqrt(n) + 0.12 + 0.11/sqrt(n)
    times the statistic.
    """
    x = np.sort(np.asarray(samples, dtype=float))
    n = x.size
    if n < MIN_TEST_SAMPLES:
        raise TooFewSamplesError(f"normality tests need at least {MIN_TEST_SAMPLES} samples, got {n}")
    if not np.all(np.isfinite(x)):
        raise PreconditionError("samples must be finite")
    F = special.ndtr(x)
    i = np.arange(1, n + 1)
    D = float(max(np.max(i / n - F), np.max(F - (i - 1) / n)))
    sn = math.sqrt(n)
    ks_p = float(special.kolmogorov((sn + 0.12 + 0.11 / sn) * D))
    lo = np.clip(special.log_ndtr(x), -745.0, 0.0)
    hi = np.clip(special.log_ndtr(-x[::-1]), -745.0, 0.0)
    A2 = float(-n - np.sum((2 * i - 1) * (lo + hi)) / n)
    return D, ks_p, A2, ad_pvalue(A2, n)


# ---------------------------------------------------------------- reports

@dataclass
class TBlock:
    T: float
    t_index: int
    u: Optional[float]
    n: int
    sigma2_theory: Optional[float]
    sigma2_discrete: Optional[float]
    var_full_discrete: Optional[float]
    denominator: float
    variance_method: str
    expected_mean: float
    mean_raw: float
    mean_raw_se: float
    mean_Y: float
    var_Y: float
    mean_Ym: float
    var_Ym: float
    ks_stat: Optional[float]
    ks_p: Optional[float]
    ad_stat: Optional[float]
    ad_p: Optional[float]
    reduction_gap: float
    gap_se: float
    failures: int
    partial: bool
    seed: int
    grid: dict
    runtime: float
    Y: list
    Ym: list
    refinement: list = field(default_factory=list)


@dataclass
class ReplicateReport:
    kind: str
    config: dict
    regime: dict
    blocks: list
    gated: bool = True
    note: str = GATE_NOTE
    trend: dict = field(default_factory=dict)

    def to_dict(self, runtime: bool = True) -> dict:
        out = {"kind": self.kind, "config": self.config, "regime": self.regime, "gated": self.gated,
               "note": self.note, "trend": self.trend, "blocks": [asdict(b) for b in self.blocks]}
        if not runtime:
            for b in out["blocks"]:
                b.pop("runtime")
        return out

    def to_json(self, runtime: bool = True) -> str:
        return json.dumps(self.to_dict(runtime), sort_keys=True, indent=1)

    @classmethod
    def from_dict(cls, obj: dict) -> "ReplicateReport":
        blocks = [TBlock(**b) for b in obj["blocks"]]
        return cls(obj["kind"], obj["config"], obj["regime"], blocks, obj["gated"], obj["note"], obj["trend"])

    @classmethod
    def from_json(cls, text: str) -> "ReplicateReport":
        return cls.from_dict(json.loads(text))


def _f(x):
    return None if x is None else float(x)


# ---------------------------------------------------------------- experiment core

def _variance_se(x):
    """Standard error of the sample variance (fourth-moment form)."""
    x = np.asarray(x, dtype=float)
    n = x.size
    if n < 2:
        return math.nan
    c = x - x.mean()
    return float(np.std(c * c, ddof=1) / math.sqrt(n))


def _planar_block(cfg, k, model, body, threads):
    T = cfg.T[k]
    grid = make_grid(cfg, k)
    m = cfg.rank
    kind = cfg.functional["kind"]
    if kind == "indicator":
        spec = cfg.threshold_spec
        if spec.moving:
            moving_threshold(spec, T, model, cfg.gamma, cfg.d)
        u = spec.level(T)
        coeffs = indicator_coeffs(u, m + 1)
        J0, Jm = coeffs[0], coeffs[m]
    else:
        n = int(cfg.functional["n"])
        u = None
        J0 = 0.0
        Jm = float(math.factorial(n)) if n == m else 0.0
    w = grid.cell_volume

    def stat(vals):
        hm = float(np.sum(hermite(m, vals))) * w
        if kind == "indicator":
            raw = float(np.count_nonzero(vals >= u)) * w
        else:
            raw = hm if int(cfg.functional["n"]) == m else float(np.sum(hermite(int(cfg.functional["n"]), vals))) * w
        return raw, hm

    out = replicate_stats(model, grid, cfg.seed, cfg.replicates, stat, method=cfg.sampler, t_index=k,
                          threads=threads)
    s2_theory = (sigma2_ball(m, cfg.d, cfg.gamma, T, model).value if body.kind == "unit-ball"
                 else sigma2_body(m, body, cfg.gamma, T, model).value)
    s2_disc = discrete_chaos_variance(grid, model, m) if cfg.variance_method != "analytic" else None
    v_full = None
    if kind == "indicator" and cfg.variance_method == "discrete-full":
        v_full = discrete_sojourn_variance(grid, model, u)
    refinement = []
    for f in cfg.grid.get("ladder") or []:
        g2 = make_grid(cfg, k, int(f))
        refinement.append({"factor": int(f), "sigma2_discrete": discrete_chaos_variance(g2, model, m),
                           "n_cells": g2.n_mask * g2.nt})
    return dict(out=out, u=u, J0=J0, Jm=Jm, mean_measure=grid.measure, s2_theory=s2_theory,
                s2_disc=s2_disc, v_full=v_full, grid=grid.to_dict(), refinement=refinement)


def _sphere_block(cfg, k, model, threads):
    T = cfg.T[k]
    if cfg.d != 3:
        raise ConfigError("sphere runs need d = 3")
    g = cfg.grid
    nt = int(_per_T(g.get("nt", int(round(T))), k, "nt"))
    L = int(g.get("L_max", 31))
    sg = SphereGrid(int(g.get("n_lat", 32)), int(g.get("n_lon", 64)), g.get("kind", "latlon"))
    times = time_grid(T, nt)
    spec_tab = SphericalSpectrum.from_model(model, L, np.arange(nt) * (T / nt), 3)
    m = cfg.rank
    kind = cfg.functional["kind"]
    th = cfg.threshold_spec
    if kind == "indicator":
        if th.moving:
            moving_threshold(th, T, model, cfg.gamma, cfg.d)
        u = th.level(T)
        coeffs = indicator_coeffs(u, m + 1)
        J0, Jm = coeffs[0], coeffs[m]
    else:
        u, J0 = None, 0.0
        Jm = float(math.factorial(m)) if int(cfg.functional["n"]) == m else 0.0

    def stat(fld):
        wts = fld.weights[None, :] * fld.dt
        hm = float(np.sum(wts * hermite(m, fld.values)))
        if kind == "indicator":
            raw = float(np.sum(wts * (fld.values >= u)))
        else:
            raw = float(np.sum(wts * hermite(int(cfg.functional["n"]), fld.values)))
        return raw, hm

    out = sphere_replicate_stats(spec_tab, times, cfg.seed, cfg.replicates, stat, L, sg, t_index=k,
                                 threads=threads, renormalize=bool(g.get("renormalize", False)))
    s2 = sigma2_sphere(m, 3, T, model).value
    return dict(out=out, u=u, J0=J0, Jm=Jm, mean_measure=T * sphere_area(3), s2_theory=s2, s2_disc=None,
                v_full=None, grid={**sg.to_dict(), "L_max": L, "nt": nt, "dt": T / nt,
                                   "tail_bound": spec_tab.tail_bound(L)}, refinement=[])


def _surrogate_block(cfg, k):
    out = np.array([[replicate_rng(cfg.seed, r, k).standard_normal()] * 2 for r in range(cfg.replicates)])
    return dict(out=out, u=None, J0=0.0, Jm=1.0, mean_measure=0.0, s2_theory=1.0, s2_disc=None,
                v_full=None, grid={}, refinement=[])


def _run(cfg: ExperimentConfig, threads: int, kind: str) -> ReplicateReport:
    model = None if cfg.surrogate else cfg.model_obj
    m = cfg.rank
    if cfg.surrogate:
        regime = {"verdict": "surrogate", "regime": "test hook", "explanation": "i.i.d. N(0,1) statistics"}
    else:
        lrd = check_lrd_conditions(model, m, cfg.gamma, cfg.d)
        regime = {"verdict": lrd.verdict, "regime": lrd.regime, "explanation": lrd.explanation,
                  "delta1": lrd.delta1, "delta2": lrd.delta2}
    body = None if (cfg.surrogate or cfg.is_sphere) else cfg.body_obj()
    blocks = []
    for k, T in enumerate(cfg.T):
        t0 = time.perf_counter()
        if cfg.surrogate:
            b = _surrogate_block(cfg, k)
        elif cfg.is_sphere:
            b = _sphere_block(cfg, k, model, threads)
        else:
            b = _planar_block(cfg, k, model, body, threads)
        out = np.asarray(b["out"], dtype=float).reshape(-1, 2)
        raw, hm = out[:, 0], out[:, 1]
        finite = np.isfinite(raw) & np.isfinite(hm)
        fails = int(np.count_nonzero(~finite))
        raw, hm = raw[finite], hm[finite]
        s2_chaos = b["s2_theory"] if (cfg.variance_method == "analytic" or b["s2_disc"] is None) else b["s2_disc"]
        sig = math.sqrt(s2_chaos)
        fm = math.factorial(m)
        if cfg.surrogate:
            denom, mean = 1.0, 0.0
        elif cfg.variance_method == "discrete-full" and b["v_full"] is not None:
            denom, mean = math.sqrt(b["v_full"]), b["J0"] * b["mean_measure"]
        else:
            denom, mean = abs(b["Jm"]) * sig / fm, b["J0"] * b["mean_measure"]
        if not denom > 0:
            raise SojournError(f"normaliser vanishes at T={T}")
        Y = (raw - mean) / denom
        sgn = 1.0 if b["Jm"] >= 0 else -1.0
        Ym = hm if cfg.surrogate else sgn * hm / sig
        D = Y - Ym
        tests = (None,) * 4
        if Y.size >= MIN_TEST_SAMPLES:
            tests = normality_tests(Y)
        n = Y.size
        blocks.append(TBlock(
            T=float(T), t_index=k, u=_f(b["u"]), n=int(n), sigma2_theory=_f(b["s2_theory"]),
            sigma2_discrete=_f(b["s2_disc"]), var_full_discrete=_f(b["v_full"]), denominator=float(denom),
            variance_method=cfg.variance_method, expected_mean=float(mean),
            mean_raw=float(raw.mean()) if n else math.nan,
            mean_raw_se=float(raw.std(ddof=1) / math.sqrt(n)) if n > 1 else math.nan,
            mean_Y=float(Y.mean()) if n else math.nan, var_Y=float(Y.var(ddof=1)) if n > 1 else math.nan,
            mean_Ym=float(Ym.mean()) if n else math.nan, var_Ym=float(Ym.var(ddof=1)) if n > 1 else math.nan,
            ks_stat=_f(tests[0]), ks_p=_f(tests[1]), ad_stat=_f(tests[2]), ad_p=_f(tests[3]),
            reduction_gap=float(D.var(ddof=1)) if n > 1 else math.nan, gap_se=_variance_se(D),
            failures=fails, partial=fails > 0.01 * cfg.replicates, seed=int(cfg.seed), grid=b["grid"],
            runtime=time.perf_counter() - t0, Y=[float(v) for v in Y], Ym=[float(v) for v in Ym],
            refinement=b["refinement"]))
    rep = ReplicateReport(kind, cfg.to_dict(), regime, blocks)
    if kind == "reduction":
        rep.gated = regime["verdict"] == "accepted"
        if not rep.gated:
            rep.note = "outside Condition 4: no reduction guarantee; not gated. " + GATE_NOTE
        rep.trend = gap_trend(blocks)
    return rep


def gap_trend(blocks: Sequence[TBlock], slack: float = 2.0) -> dict:
    """Monotonicity of the reduction gap along T, strict and with ``slack`` standard errors."""
    g = np.array([b.reduction_gap for b in blocks])
    se = np.array([b.gap_se for b in blocks])
    T = np.array([b.T for b in blocks])
    strict = bool(np.all(np.diff(g) < 0)) if g.size > 1 else True
    tol = slack * np.sqrt(se[1:] ** 2 + se[:-1] ** 2)
    with_slack = bool(np.all(np.diff(g) < tol)) if g.size > 1 else True
    slope = math.nan
    if g.size > 1 and np.all(g > 0):
        slope = float(np.polyfit(np.log(T), np.log(g), 1)[0])
    return {"gaps": g.tolist(), "se": se.tolist(), "decreasing_strict": strict,
            "decreasing_with_slack": with_slack, "slack_se": slack, "loglog_slope": slope}


def run_clt_experiment(cfg: ExperimentConfig, threads: int = 1) -> ReplicateReport:
    """Normalised sojourn statistics over the T list with normality tests per T."""
    return _run(cfg, threads, "clt")


def run_reduction_check(cfg: ExperimentConfig, threads: int = 1) -> ReplicateReport:
    """Empirical Var(Y_T - Y_{m,T}) along the T list with its trend."""
    return _run(cfg, threads, "reduction")


# ---------------------------------------------------------------- export

SUMMARY_COLUMNS = ["T", "sigma2_theory", "var_empirical", "ks_stat", "ks_p", "reduction_gap"]


def _fmt(x):
    return "" if x is None or (isinstance(x, float) and math.isnan(x)) else repr(float(x))


def write_summary_csv(report: ReplicateReport, path):
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(SUMMARY_COLUMNS)
        for b in report.blocks:
            w.writerow([_fmt(b.T), _fmt(b.sigma2_theory), _fmt(b.var_Y), _fmt(b.ks_stat), _fmt(b.ks_p),
                        _fmt(b.reduction_gap)])


def qq_data(samples) -> tuple:
    x = np.sort(np.asarray(samples, dtype=float))
    n = x.size
    q = special.ndtri((np.arange(1, n + 1) - 0.5) / n)
    return q, x


def write_qq_csv(samples, path):
    q, x = qq_data(samples)
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["quantile_theoretical", "quantile_empirical"])
        for a, b in zip(q, x):
            w.writerow([repr(float(a)), repr(float(b))])


def _plots(report: ReplicateReport, outdir: Path) -> list:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    files = []
    fig, ax = plt.subplots(figsize=(4.5, 4.5))
    for b in report.blocks:
        if b.n:
            q, x = qq_data(b.Y)
            ax.plot(q, x, ".", ms=2, label=f"T={b.T:g}")
    lim = 4.0
    ax.plot([-lim, lim], [-lim, lim], "k-", lw=0.8)
    ax.set_xlabel("N(0,1) quantile")
    ax.set_ylabel("empirical quantile of Y_T")
    ax.legend(fontsize=7)
    p = outdir / "qq.svg"
    fig.savefig(p)
    plt.close(fig)
    files.append(p)

    fig, ax = plt.subplots(figsize=(4.5, 3.5))
    T = [b.T for b in report.blocks]
    if T:
        ax.loglog(T, [b.sigma2_theory or math.nan for b in report.blocks], "o-", label="sigma_m^2 (theory)")
        if any(b.sigma2_discrete for b in report.blocks):
            ax.loglog(T, [b.sigma2_discrete or math.nan for b in report.blocks], "s--", label="sigma_m^2 (grid)")
        ax.legend(fontsize=7)
    ax.set_xlabel("T")
    ax.set_ylabel("variance")
    p = outdir / "variance_growth.svg"
    fig.savefig(p)
    plt.close(fig)
    files.append(p)
    return files


def export_report(report: ReplicateReport, outdir, plots: bool = True) -> list:
    """report.json, summary.csv, qq_T<k>.csv per horizon, and SVG plots."""
    outdir = Path(outdir)
    try:
        outdir.mkdir(parents=True, exist_ok=True)
        files = [outdir / "report.json", outdir / "summary.csv"]
        files[0].write_text(report.to_json())
        write_summary_csv(report, files[1])
        for b in report.blocks:
            p = outdir / f"qq_T{b.t_index}.csv"
            write_qq_csv(b.Y, p)
            files.append(p)
        if plots:
            files.extend(_plots(report, outdir))
    except OSError as exc:
        raise OSError(f"cannot write report under {outdir}: {exc}") from exc
    return files
