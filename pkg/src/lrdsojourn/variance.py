"""Variance of chaos components and of sojourn functionals.

The variance of the rank-m chaos term over the window [0, T] x T^gamma K is

    sigma^2_{m,K}(T) = 2 m! T |K|^2 T^{2 gamma d}
                       int_0^T int (1 - tau/T) psi_{T^gamma,K}(z) C^m(z, tau) dz dtau,

with psi the inter-point distance density of T^gamma K.  All integrals are
rescaled to the unit square before calling the adaptive cubature, so the
integration domain does not grow with T.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from ._quad import QuadResult, cube2, gauss_legendre, quad1
from .covariance import CovarianceModel, Separable, model_to_dict
from .errors import DomainError, ParameterError, RegimeError
from .geomprob import (BodySpec, _ibeta, ball_volume, convex_distance_density,
                       sphere_area, std_normal)


@dataclass
class VarianceReport:
    value: float
    error: float
    method: str
    converged: bool = True
    components: Optional[tuple] = None
    inputs: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def _power(c, m):
    # C^m through logs; covariances here are nonnegative
    c = np.asarray(c, dtype=float)
    out = np.zeros_like(c)
    pos = c > 0
    out[pos] = np.exp(m * np.log(c[pos]))
    return out


def _echo(**kw):
    out = {}
    for k, v in kw.items():
        if isinstance(v, CovarianceModel):
            out[k] = model_to_dict(v)
        elif isinstance(v, BodySpec):
            out[k] = {"name": v.name, "d": v.d, "kind": v.kind}
        else:
            out[k] = v
    return out


def _check_T(T):
    if not (T > 0) or not math.isfinite(T):
        raise DomainError(f"time horizon must be positive, got {T}")


# ---------------------------------------------------------------- chaos variances

def sigma2_ball(m: int, d: int, gamma: float, T: float, model: CovarianceModel, rtol: float = 1e-9) -> VarianceReport:
    """Rank-m chaos variance over the unit ball, in incomplete-beta form.

    sigma^2 = 8 m! pi^d / (d Gamma(d/2)^2) T^{2 gamma d + 2}
              int_0^1 (1-s) int_0^2 w^{d-1} C^m(T^gamma w, T s) I_{1-w^2/4}((d+1)/2, 1/2) dw ds
    """
    _check_T(T)
    if m < 1:
        raise ParameterError("chaos rank m must be >= 1")
    p = (d + 1) / 2
    lam = T ** gamma

    def f(x):
        s, w = x[:, 0], x[:, 1]
        return (1.0 - s) * w ** (d - 1) * _power(model(lam * w, T * s), m) * _ibeta(1.0 - w * w / 4.0, p, 0.5)

    r = cube2(f, [0.0, 0.0], [1.0, 2.0], rtol=rtol)
    pref = 8.0 * math.factorial(m) * math.pi ** d / (d * math.gamma(d / 2) ** 2) * T ** (2 * gamma * d + 2)
    return VarianceReport(pref * r.value, pref * r.error, "quadrature", r.converged,
                          inputs=_echo(m=m, d=d, gamma=gamma, T=T, model=model, body="unit-ball"))


def sigma2_body(m: int, body: BodySpec, gamma: float, T: float, model: CovarianceModel,
                rtol: float = 1e-9) -> VarianceReport:
    """Rank-m chaos variance over T^gamma K through the body's distance density."""
    _check_T(T)
    if m < 1:
        raise ParameterError("chaos rank m must be >= 1")
    lam = T ** gamma
    D = body.diameter

    def f(x):
        s, w = x[:, 0], x[:, 1]
        return (1.0 - s) * convex_distance_density(body, 1.0, w) * _power(model(lam * w, T * s), m)

    r = cube2(f, [0.0, 0.0], [1.0, D], rtol=rtol)
    pref = 2.0 * math.factorial(m) * T ** 2 * body.volume ** 2 * T ** (2 * gamma * body.d)
    return VarianceReport(pref * r.value, pref * r.error, "quadrature", r.converged,
                          inputs=_echo(m=m, d=body.d, gamma=gamma, T=T, model=model, body=body))


def separable_factors(m: int, model: Separable, T: float, gamma: float, d: int) -> tuple:
    """Time and space factors (b1, b2) with sigma^2 = m! b1 b2 on the unit ball.

    b1 = 2T int_0^T (1 - tau/T) C_time^m(tau) dtau
    b2 = |B|^2 d T^{gamma d} int_0^{2T^gamma} z^{d-1} C_space^m(z) I_{1-(z/2T^gamma)^2}((d+1)/2, 1/2) dz
    """
    if not isinstance(model, Separable):
        raise ParameterError("separable_factors needs a separable model")
    _check_T(T)
    lam = T ** gamma
    s2 = model.sigma2 ** m
    r1 = quad1(lambda s: (1.0 - s) * model.temporal(T * s) ** m, 0.0, 1.0, epsabs=0.0, epsrel=1e-11)
    b1 = 2.0 * T * T * r1.value * s2
    p = (d + 1) / 2

    def g(w):
        return w ** (d - 1) * model.spatial(lam * w) ** m * float(_ibeta(np.array([1.0 - w * w / 4.0]), p, 0.5)[0])

    r2 = quad1(g, 0.0, 2.0, epsabs=0.0, epsrel=1e-11)
    b2 = ball_volume(d) ** 2 * d * lam ** (2 * d) * r2.value
    return b1, b2


@dataclass
class AsymptoticConstants:
    L1: Optional[float]
    L2: Optional[float]
    L3: Optional[float]
    L4: Optional[float]
    L5: Optional[float]
    regime: str
    exponent: float
    log_power: int = 0  # extra log(T) factors at the boundary exponents

    def require(self, name: str) -> float:
        val = getattr(self, name)
        if val is None:
            raise RegimeError(f"{name} is not defined in the {self.regime} regime")
        return val


def asymptotic_constants(model: Separable, m: int, d: int, gamma: float) -> AsymptoticConstants:
    """Limit constants of b1 and b2 and the leading growth exponent of sigma^2 in T."""
    if not isinstance(model, Separable):
        raise ParameterError("asymptotic constants are only available for separable models")
    A, al = model.A, model.alpha_s
    if A <= 0 or (gamma > 0 and al <= 0):
        raise RegimeError("zero decay exponent: no limit regime")
    L1 = L2 = L3 = L4 = L5 = None
    logs = 0
    if A * m > 1:
        L1 = quad1(lambda t: model.temporal(t) ** m, 0.0, np.inf, epsabs=1e-12, epsrel=1e-10).value
        t_exp, t_lab = 1.0, "weak-time"
    elif A * m == 1:
        t_exp, t_lab = 1.0, "boundary-time"
        logs += 1
    else:
        L2 = 1.0 / ((1.0 - m * A) * (2.0 - m * A))
        t_exp, t_lab = 2.0 - m * A, "LRD-time"
    bd = ball_volume(d) ** 2 * d
    if gamma == 0:
        s_exp, s_lab = 0.0, "fixed-space"
    elif al * m > d:
        L3 = bd * quad1(lambda z: z ** (d - 1) * model.spatial(z) ** m, 0.0, np.inf,
                        epsabs=1e-12, epsrel=1e-10).value
        s_exp, s_lab = gamma * d, "weak-space"
    elif al * m == d:
        L4 = 4.0 * math.pi ** d / (d * math.gamma(d / 2) ** 2)
        s_exp, s_lab = gamma * d, "boundary-space"
        logs += 1
    else:
        q = d - m * al
        L5 = (2.0 ** (q + 1) * math.pi ** (d - 0.5) * math.gamma((q + 1) / 2)
              / (q * math.gamma(d / 2) * math.gamma((2 * d - m * al + 2) / 2)))
        s_exp, s_lab = gamma * (2 * d - m * al), "LRD-space"
    if t_lab == "LRD-time" and s_lab in ("fixed-space", "LRD-space"):
        regime = "LRD-time-only" if gamma == 0 else "LRD-space-time"
    elif t_lab == "weak-time" and s_lab in ("fixed-space", "weak-space"):
        regime = "weak-dependence"
    else:
        regime = f"{t_lab}/{s_lab}"
    return AsymptoticConstants(L1, L2, L3, L4, L5, regime, t_exp + s_exp, logs)


# ---------------------------------------------------------------- bivariate identity

_GL_THETA = 64


def bivariate_excess(u, rho):
    """P(X >= u, Y >= u) - (1 - Phi(u))^2 for a standard bivariate normal with correlation rho.

    Uses (1/2pi) int_0^{arcsin rho} exp(-u^2/(1 + sin t)) dt, i.e. the integral
    over v in [0, rho] of exp(-u^2/(1+v))/sqrt(1-v^2) after v = sin t, which
    removes the endpoint singularity at v = 1.
    """
    rho = np.asarray(rho, dtype=float)
    if np.any(rho < -1 - 1e-12) or np.any(rho > 1 + 1e-12):
        raise DomainError("correlation must lie in [-1, 1]")
    rho = np.clip(rho, -1.0, 1.0)
    if np.isinf(u):
        return np.zeros_like(rho) if rho.ndim else 0.0
    x, w = gauss_legendre(_GL_THETA)
    top = np.arcsin(rho)[..., None]
    th = top * x
    vals = np.exp(-u * u / (1.0 + np.sin(th)))
    out = (top[..., 0] * (vals @ w)) / (2.0 * math.pi)
    return float(out) if out.ndim == 0 else out


def joint_exceed_prob(u, rho):
    """P(X >= u, Y >= u) for a standard bivariate normal pair with correlation rho."""
    tail = 1.0 - std_normal(u)[1]
    val = tail * tail + bivariate_excess(u, rho)
    return float(val) if np.ndim(val) == 0 else val


def _level(threshold, T):
    if hasattr(threshold, "level"):
        return float(threshold.level(T))
    return float(threshold)


def var_sojourn_exact(threshold, T: float, body: BodySpec, gamma: float, model: CovarianceModel,
                      rtol: float = 1e-8) -> VarianceReport:
    """Exact variance of the excursion volume above u (or u(T)) over [0,T] x T^gamma K."""
    _check_T(T)
    if abs(model.variance - 1.0) > 1e-12:
        raise ParameterError("sojourn variance needs a unit-variance model")
    u = _level(threshold, T)
    inputs = _echo(u=u, T=T, gamma=gamma, model=model, body=body)
    if math.isinf(u):
        return VarianceReport(0.0, 0.0, "closed-form-limit", True, inputs=inputs)
    lam = T ** gamma

    def f(x):
        s, w = x[:, 0], x[:, 1]
        c = np.minimum(model(lam * w, T * s), 1.0)
        return (1.0 - s) * convex_distance_density(body, 1.0, w) * bivariate_excess(u, c)

    r = cube2(f, [0.0, 0.0], [1.0, body.diameter], rtol=rtol)
    pref = 2.0 * T * T * body.volume ** 2 * T ** (2 * gamma * body.d)
    return VarianceReport(pref * r.value, pref * r.error, "quadrature", r.converged, inputs=inputs)


def chaos_variance_sum(coeffs, N: int, T: float, body: BodySpec, gamma: float, model: CovarianceModel) -> np.ndarray:
    """Partial sums over q = 1..N of J_q^2 sigma_q^2 / (q!)^2."""
    terms = []
    for q in range(1, N + 1):
        s2 = sigma2_body(q, body, gamma, T, model).value
        terms.append(coeffs[q] ** 2 * s2 / math.factorial(q) ** 2)
    return np.cumsum(terms)


# ---------------------------------------------------------------- discrete (grid) versions

def _pair_groups(centers: np.ndarray):
    """Unique pairwise distances among cell centres and their multiplicities."""
    diff = centers[:, None, :] - centers[None, :, :]
    d2 = np.sum(diff * diff, axis=-1).ravel()
    scale = max(float(d2.max()), 1.0)
    key = np.round(d2 / scale, 12)
    uniq, inv, counts = np.unique(key, return_inverse=True, return_counts=True)
    dist = np.sqrt(np.bincount(inv, weights=d2) / counts)
    return dist, counts


def _lag_groups(nt: int, dt: float):
    k = np.arange(nt)
    counts = np.where(k == 0, nt, 2 * (nt - k)).astype(float)
    return k * dt, counts


def discrete_pair_sum(grid, model: CovarianceModel, func) -> float:
    """cellvol^2 * sum over all cell pairs of func(C(|x_i - x_j|, |t_a - t_b|))."""
    dist, dcount = _pair_groups(grid.centers)
    lags, tcount = _lag_groups(grid.nt, grid.dt)
    C = model(dist[:, None], lags[None, :])
    vals = func(C)
    return float(grid.cell_volume ** 2 * np.sum(dcount[:, None] * tcount[None, :] * vals))


def discrete_sojourn_variance(grid, model: CovarianceModel, u: float) -> float:
    """Exact variance of the cell-centre Riemann sum of 1{Z >= u}."""
    return discrete_pair_sum(grid, model, lambda c: bivariate_excess(u, np.minimum(c, 1.0)))


def discrete_chaos_variance(grid, model: CovarianceModel, m: int) -> float:
    """Exact variance of the cell-centre Riemann sum of H_m(Z)."""
    fm = math.factorial(m)
    return discrete_pair_sum(grid, model, lambda c: fm * _power(c, m))


# ---------------------------------------------------------------- sphere

def sigma2_sphere(n: int, d: int, T: float, model: CovarianceModel, rtol: float = 1e-9) -> VarianceReport:
    """Rank-n chaos variance of a field restricted to the unit sphere S_{d-1}, over [0, T].

    sigma_n^2 = 2 n! T |S_{d-1}|^2 int_0^T (1 - tau/T) E[C^n(||W1 - W2||, tau)] dtau
    with W1, W2 uniform on the sphere.  The chord z = 2 sin(phi) makes the
    chord density smooth: rho(z) dz = c_d 2^{d-1} sin^{d-2}(phi) cos^{d-2}(phi) dphi.
    """
    _check_T(T)
    if d < 2 or n < 1:
        raise ParameterError("need d >= 2 and n >= 1")
    cd = math.exp(math.lgamma(d / 2) - math.lgamma((d - 1) / 2)) / math.sqrt(math.pi) * 2.0 ** (d - 1)

    def f(x):
        s, ph = x[:, 0], x[:, 1]
        sc = np.sin(ph) * np.cos(ph)
        return (1.0 - s) * cd * sc ** (d - 2) * _power(model(2.0 * np.sin(ph), T * s), n)

    r = cube2(f, [0.0, 0.0], [1.0, math.pi / 2], rtol=rtol)
    pref = 2.0 * math.factorial(n) * T * T * sphere_area(d) ** 2
    return VarianceReport(pref * r.value, pref * r.error, "quadrature", r.converged,
                          inputs=_echo(m=n, d=d, T=T, model=model, body="sphere"))


# ---------------------------------------------------------------- growth diagnostics

@dataclass
class GrowthDiagnostic:
    T: list
    sigma2: list
    ratios: list
    slope: float

    @property
    def increasing(self) -> bool:
        return bool(np.all(np.diff(self.ratios) > 0))

    @property
    def decreasing(self) -> bool:
        return bool(np.all(np.diff(self.ratios) < 0))


def _slope(T, y):
    return float(np.polyfit(np.log(T), np.log(y), 1)[0])


def growth_ratio_diagnostic(m: int, body: BodySpec, gamma: float, d: int, model: CovarianceModel,
                            delta1: float, delta2: float, T_grid: Sequence[float]) -> GrowthDiagnostic:
    """sigma^2(T) / (T^{1+delta1} T^{gamma d (1+delta2)}) along an increasing T grid."""
    T_grid = [float(t) for t in T_grid]
    if len(T_grid) < 4 or np.any(np.diff(T_grid) <= 0):
        raise ParameterError("T grid must be increasing with at least 4 points")
    if body.d != d:
        raise ParameterError("body dimension does not match d")
    vals = []
    for T in T_grid:
        rep = sigma2_ball(m, d, gamma, T, model) if body.kind == "unit-ball" else sigma2_body(m, body, gamma, T, model)
        vals.append(rep.value)
    ratios = [v / (T ** (1 + delta1) * T ** (gamma * d * (1 + delta2))) for v, T in zip(vals, T_grid)]
    return GrowthDiagnostic(T_grid, vals, ratios, _slope(T_grid, vals))


def sphere_growth_integral(d: int, T: float, model: CovarianceModel) -> float:
    """int_0^T (1 - tau/T) int_0^2 z^{d-2} (1 - z^2/4)^{(d-3)/2} C(z, tau) dz dtau."""
    rep = sigma2_sphere(1, d, T, model)
    cd = math.exp(math.lgamma(d / 2) - math.lgamma((d - 1) / 2)) / math.sqrt(math.pi)
    return rep.value / (2.0 * T * sphere_area(d) ** 2 * cd)


def sphere_growth_diagnostic(d: int, model: CovarianceModel, delta: float, T_grid: Sequence[float]) -> GrowthDiagnostic:
    """T^{-delta} times the sphere growth integral along a T grid."""
    T_grid = [float(t) for t in T_grid]
    vals = [sphere_growth_integral(d, T, model) for T in T_grid]
    return GrowthDiagnostic(T_grid, vals, [v / T ** delta for v, T in zip(vals, T_grid)], _slope(T_grid, vals))


# ---------------------------------------------------------------- tables

def sigma2_table(T_grid: Sequence[float], m: int, body: BodySpec, gamma: float, model: CovarianceModel,
                 delta1: float = 0.0, delta2: float = 0.0) -> list:
    """Rows (T, sigma2, err, ratio) with ratio = sigma2 / (T^{1+delta1} T^{gamma d (1+delta2)})."""
    rows = []
    for T in T_grid:
        rep = (sigma2_ball(m, body.d, gamma, T, model) if body.kind == "unit-ball"
               else sigma2_body(m, body, gamma, T, model))
        ratio = rep.value / (T ** (1 + delta1) * T ** (gamma * body.d * (1 + delta2)))
        rows.append((float(T), rep.value, rep.error, ratio))
    return rows


def write_sigma2_csv(rows, path):
    path = Path(path)
    try:
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["T", "sigma2", "err", "ratio"])
            for r in rows:
                w.writerow([repr(float(x)) for x in r])
    except OSError as exc:
        raise OSError(f"cannot write variance table to {path}: {exc}") from exc
