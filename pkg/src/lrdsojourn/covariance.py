"""Space-time covariance families and their long-memory classification.

Every model is an immutable dataclass with a vectorised ``__call__(z, tau)``
returning C(z, tau) for spatial lag z = ||x - y|| and time lag tau.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, fields
from functools import lru_cache
from typing import Optional

import numpy as np
from scipy import integrate, interpolate, optimize, special

from .errors import DomainError, ParameterError

# ---------------------------------------------------------------- Mittag-Leffler

_ML_SERIES_MAX = 1.0
_ML_TABLE_MAX = 1e8


def _ml_series(nu, x):
    x = np.asarray(x, dtype=float)
    total = np.ones_like(x)
    lx = np.log(np.where(x > 0, x, 1.0))
    for k in range(1, 400):
        term = np.exp(k * lx - special.gammaln(nu * k + 1.0))
        term = np.where(x > 0, term, 0.0)
        total = total + (-1) ** k * term
        if np.all(term < 1e-17):
            break
    return total


def _ml_integral(nu, x):
    """E_nu(-x) from its Laplace-type integral, written in r = s^nu:

    E_nu(-x) = sin(nu pi)/(nu pi) * int_0^inf exp(-r^{1/nu}) x / (r^2 + 2 x r cos(nu pi) + x^2) dr.
    """
    cs = math.cos(nu * math.pi)
    pref = math.sin(nu * math.pi) / (nu * math.pi)
    inv = 1.0 / nu

    def g(r):
        return math.exp(-r ** inv) * x / (r * r + 2.0 * x * r * cs + x * x)

    upper = 750.0 ** nu  # exp(-r^{1/nu}) < 1e-325 beyond
    pts = [p for p in (x * abs(cs), x) if 0.0 < p < upper]
    val, _ = integrate.quad(g, 0.0, upper, points=pts or None, epsabs=1e-16, epsrel=1e-13, limit=400)
    return pref * val


def _ml_asymptotic(nu, x, terms=12):
    total = 0.0
    for k in range(1, terms + 1):
        total += (-1) ** (k + 1) * x ** (-k) * special.rgamma(1.0 - k * nu)
    return total


def mittag_leffler_neg(nu: float, x: float) -> float:
    """Mittag-Leffler function E_nu(-x) for 0 < nu <= 1 and x >= 0."""
    if not (0.0 < nu <= 1.0):
        raise DomainError(f"Mittag-Leffler index must lie in (0, 1], got {nu}")
    if not (x >= 0.0) or not math.isfinite(x):
        raise DomainError(f"Mittag-Leffler argument must be finite and >= 0, got {x}")
    if nu == 1.0:
        return math.exp(-x)
    if x <= _ML_SERIES_MAX:
        return float(_ml_series(nu, np.array([x]))[0])
    if x > _ML_TABLE_MAX:
        return _ml_asymptotic(nu, x)
    return _ml_integral(nu, x)


def ml_envelope(nu: float, x):
    """Two-sided bounds 1/(1+Gamma(1-nu)x) <= E_nu(-x) <= 1/(1+x/Gamma(1+nu)), nu in (0,1)."""
    x = np.asarray(x, dtype=float)
    return 1.0 / (1.0 + math.gamma(1.0 - nu) * x), 1.0 / (1.0 + x / math.gamma(1.0 + nu))


@lru_cache(maxsize=16)
def _ml_table(nu: float):
    t = np.linspace(0.0, math.log(_ML_TABLE_MAX), 1601)
    vals = np.array([_ml_integral(nu, math.exp(v)) for v in t])
    # interpolate log E in log x; smooth and slowly varying at both ends
    return interpolate.CubicSpline(t, np.log(vals))


def mittag_leffler_neg_vec(nu: float, x) -> np.ndarray:
    """Vectorised E_nu(-x): series on [0, 1], spline table of the exact routine beyond."""
    x = np.asarray(x, dtype=float)
    if nu == 1.0:
        return np.exp(-x)
    out = np.empty_like(x)
    lo = x <= _ML_SERIES_MAX
    hi = x > _ML_TABLE_MAX
    mid = ~(lo | hi)
    if lo.any():
        out[lo] = _ml_series(nu, x[lo])
    if mid.any():
        out[mid] = np.exp(_ml_table(float(nu))(np.log(x[mid])))
    if hi.any():
        out[hi] = [_ml_asymptotic(nu, v) for v in x[hi]]
    return out


# ---------------------------------------------------------------- Matérn pieces

def matern_phi(c: float, nu: float, u):
    """Matérn kernel in squared-distance form: (c sqrt(u))^nu K_nu(c sqrt(u)) / (2^{nu-1} Gamma(nu))."""
    scalar = np.ndim(u) == 0
    u = np.atleast_1d(np.asarray(u, dtype=float))
    if np.any(u < 0):
        raise DomainError("matern_phi needs u >= 0")
    t = c * np.sqrt(u)
    out = np.ones_like(t)
    pos = t > 0
    if pos.any():
        tp = t[pos]
        with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
            logv = (nu * np.log(tp) + np.log(special.kve(nu, tp)) - tp
                    - (nu - 1.0) * math.log(2.0) - special.gammaln(nu))
        val = np.exp(logv)
        # K_nu overflows only where (c sqrt u)^{2 min(nu,1)} is far below double precision
        val = np.where(np.isfinite(val), val, 1.0)
        out[pos] = np.minimum(val, 1.0)
    return float(out[0]) if scalar else out


def matern_spectral_const(c: float, nu: float, d: int) -> float:
    return math.exp(math.lgamma(nu + d / 2) + 2 * nu * math.log(c) - d / 2 * math.log(math.pi) - math.lgamma(nu))


def matern_spectral(c: float, nu: float, d: int, lam):
    """Spectral density M (c^2 + lambda^2)^{-(nu + d/2)}, normalised to unit variance."""
    lam = np.asarray(lam, dtype=float)
    val = matern_spectral_const(c, nu, d) * (c * c + lam * lam) ** (-(nu + d / 2))
    return float(val) if val.ndim == 0 else val


# ---------------------------------------------------------------- models

def _slowly_varying(x, kappa):
    # (log(e + x^2))^kappa equals 1 at the origin and varies slowly at infinity
    if kappa == 0:
        return 1.0
    return np.log(math.e + x * x) ** kappa


_KAPPA_RATIO = 1.2143  # half the minimum over s >= 0 of (e+s) log(e+s)/(1+s)


class CovarianceModel:
    family = ""
    test_hook = False

    def __call__(self, z, tau):
        z = np.asarray(z, dtype=float)
        tau = np.asarray(tau, dtype=float)
        if np.any(z < 0) or np.any(tau < 0):
            raise DomainError("covariance lags must be nonnegative")
        out = self._eval(z, np.abs(tau))
        return float(out) if np.ndim(out) == 0 else out

    @property
    def variance(self) -> float:
        return float(getattr(self, "sigma2", 1.0))

    def params(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class Separable(CovarianceModel):
    """sigma2 * L(z)(1+z^2)^{-alpha_s/2} * L1(tau)(1+tau^2)^{-A/2}, L(x) = log(e+x^2)^kappa."""

    alpha_s: float
    A: float
    kappa_s: float = 0.0
    kappa_t: float = 0.0
    sigma2: float = 1.0
    family = "separable"

    def __post_init__(self):
        if self.alpha_s < 0 or self.A < 0 or self.sigma2 <= 0:
            raise ParameterError("separable model needs alpha_s, A >= 0 and sigma2 > 0")
        for kap, ex, nm in ((self.kappa_s, self.alpha_s, "kappa_s"), (self.kappa_t, self.A, "kappa_t")):
            if kap < 0 or kap > _KAPPA_RATIO * ex + 1e-12:
                raise ParameterError(f"{nm}={kap} breaks monotone decay (need 0 <= kappa <= {_KAPPA_RATIO}*exponent)")

    def spatial(self, z):
        return _slowly_varying(z, self.kappa_s) * (1.0 + z * z) ** (-self.alpha_s / 2)

    def temporal(self, tau):
        return _slowly_varying(tau, self.kappa_t) * (1.0 + tau * tau) ** (-self.A / 2)

    def _eval(self, z, tau):
        return self.sigma2 * self.spatial(z) * self.temporal(tau)


@dataclass(frozen=True)
class _Gneiting(CovarianceModel):
    def _psi(self, tau):
        # psi evaluated at tau^2: (1 + a tau^{2 alpha})^beta
        return (1.0 + self.a * tau ** (2 * self.alpha)) ** self.beta

    def _eval(self, z, tau):
        p = self._psi(tau)
        return self.sigma2 * self._phi(z * z / p) / p ** (self.d / 2)

    def _check_psi(self):
        if self.a <= 0 or not (0 < self.alpha <= 1) or not (0 < self.beta <= 1):
            raise ParameterError("psi needs a > 0, alpha and beta in (0, 1]")
        if self.sigma2 <= 0 or self.d < 1:
            raise ParameterError("need sigma2 > 0 and d >= 1")


@dataclass(frozen=True)
class GneitingML(_Gneiting):
    """Gneiting class with phi(u) = E_nu(-u^gamma_t)."""

    nu: float
    gamma_t: float
    a: float
    alpha: float
    beta: float
    sigma2: float = 1.0
    d: int = 2
    family = "gneiting_ml"

    def __post_init__(self):
        if not (0 < self.nu <= 1) or not (0 < self.gamma_t <= 1):
            raise ParameterError("GneitingML needs nu and gamma_t in (0, 1]")
        self._check_psi()

    def _phi(self, u):
        return mittag_leffler_neg_vec(self.nu, u ** self.gamma_t)


@dataclass(frozen=True)
class GneitingRational(_Gneiting):
    """Gneiting class with phi(u) = (1 + c_t u^gamma_t)^{-nu}."""

    c_t: float
    gamma_t: float
    nu: float
    a: float
    alpha: float
    beta: float
    sigma2: float = 1.0
    d: int = 2
    family = "gneiting_rational"

    def __post_init__(self):
        if self.c_t <= 0 or not (0 < self.gamma_t <= 1) or self.nu <= 0:
            raise ParameterError("GneitingRational needs c_t > 0, gamma_t in (0, 1], nu > 0")
        self._check_psi()

    def _phi(self, u):
        return (1.0 + self.c_t * u ** self.gamma_t) ** (-self.nu)


@dataclass(frozen=True)
class GneitingMatern(_Gneiting):
    """Gneiting class with a Matérn phi."""

    c: float
    nu: float
    a: float
    alpha: float
    beta: float
    sigma2: float = 1.0
    d: int = 2
    family = "gneiting_matern"

    def __post_init__(self):
        if self.c <= 0 or self.nu <= 0:
            raise ParameterError("GneitingMatern needs c, nu > 0")
        self._check_psi()

    def _phi(self, u):
        return matern_phi(self.c, self.nu, u)


@dataclass(frozen=True)
class ExponentialBaseline(CovarianceModel):
    """exp(-theta_s z - theta_t tau): short memory in both arguments."""

    theta_s: float
    theta_t: float
    family = "exponential"

    def __post_init__(self):
        if self.theta_s <= 0 or self.theta_t <= 0:
            raise ParameterError("exponential model needs positive rates")

    def spatial(self, z):
        return np.exp(-self.theta_s * z)

    def temporal(self, tau):
        return np.exp(-self.theta_t * tau)

    def _eval(self, z, tau):
        return np.exp(-self.theta_s * z - self.theta_t * tau)


@dataclass(frozen=True)
class ConstantHook(CovarianceModel):
    """C == value everywhere.  Test hook only: never decays."""

    value: float = 1.0
    family = "constant_hook"
    test_hook = True

    @property
    def variance(self) -> float:
        return self.value

    def _eval(self, z, tau):
        return np.full(np.broadcast(z, tau).shape, self.value)


@dataclass(frozen=True)
class NuggetHook(CovarianceModel):
    """C = 1 at the origin and 0 elsewhere.  Test hook only."""

    family = "nugget_hook"
    test_hook = True

    def _eval(self, z, tau):
        return np.where((z == 0) & (tau == 0), 1.0, 0.0)


FAMILIES = {cls.family: cls for cls in (Separable, GneitingML, GneitingRational, GneitingMatern,
                                        ExponentialBaseline, ConstantHook, NuggetHook)}


def eval_cov(model: CovarianceModel, z, tau):
    return model(z, tau)


def model_to_dict(model: CovarianceModel) -> dict:
    return {"family": model.family, "params": model.params()}


def model_from_dict(obj: dict) -> CovarianceModel:
    try:
        cls = FAMILIES[obj["family"]]
    except KeyError as exc:
        raise ParameterError(f"unknown covariance family {obj.get('family')!r}") from exc
    params = dict(obj.get("params", {}))
    known = {f.name for f in fields(cls)}
    extra = set(params) - known
    if extra:
        raise ParameterError(f"unknown parameters for {cls.family}: {sorted(extra)}")
    try:
        return cls(**params)
    except TypeError as exc:
        raise ParameterError(str(exc)) from exc


def model_to_json(model: CovarianceModel) -> str:
    return json.dumps(model_to_dict(model), sort_keys=True)


def model_from_json(text: str) -> CovarianceModel:
    return model_from_dict(json.loads(text))


def schema_path():
    from importlib import resources
    return resources.files("lrdsojourn") / "schemas" / "covariance_model.schema.json"


# ---------------------------------------------------------------- memory regime

@dataclass(frozen=True)
class LrdCheckResult:
    verdict: str  # accepted | rejected | indeterminate
    delta1: Optional[tuple]
    delta2: Optional[tuple]
    regime: str  # LRD-time-only | LRD-space-time | weak-dependence | unclassified
    explanation: str

    @property
    def accepted(self) -> bool:
        return self.verdict == "accepted"

    def default_deltas(self) -> tuple:
        """Midpoints of the admissible intervals."""
        if not self.accepted:
            raise ParameterError("no admissible deltas for a non-accepted model")
        return 0.5 * sum(self.delta1), 0.5 * sum(self.delta2)


def check_lrd_conditions(model: CovarianceModel, m: int, gamma: float, d: int) -> LrdCheckResult:
    """Decide whether the variance of the rank-m chaos term grows fast enough.

    Only closed-form sufficient conditions are used; parameter sets outside
    them are reported as indeterminate.
    """
    if m < 1 or gamma < 0 or d < 1:
        raise ParameterError("need m >= 1, gamma >= 0, d >= 1")
    if isinstance(model, Separable):
        A, al = model.A, model.alpha_s
        if A == 0 or (gamma > 0 and al == 0):
            return LrdCheckResult("indeterminate", None, None, "unclassified",
                                  "zero decay exponent: covariance does not vanish at infinity")
        time_lrd = A < 1.0 / m
        space_lrd = al < d / m
        if time_lrd and (gamma == 0 or space_lrd):
            d1 = (0.0, 1.0 - m * A)
            if gamma == 0:
                d2, regime = (0.0, 1.0), "LRD-time-only"
                why = f"0 < A={A} < 1/m; spatial window fixed"
            else:
                d2, regime = (0.0, 1.0 - m * al / d), "LRD-space-time"
                why = f"0 < A={A} < 1/m and 0 < alpha_s={al} < d/m"
            return LrdCheckResult("accepted", d1, d2, regime, why)
        if not time_lrd and (gamma == 0 or not space_lrd):
            return LrdCheckResult("rejected", None, None, "weak-dependence",
                                  f"A={A} >= 1/m" + ("" if gamma == 0 else f" and alpha_s={al} >= d/m")
                                  + ": integrable covariance, variance grows like the window volume")
        return LrdCheckResult("indeterminate", None, None, "unclassified",
                              "memory in one argument only with an expanding window; not classified")
    if isinstance(model, (GneitingML, GneitingRational)):
        if m != 1:
            return LrdCheckResult("indeterminate", None, None, "unclassified",
                                  "sufficient condition only available for Hermite rank 1")
        g_eff = model.gamma_t * (model.nu if isinstance(model, GneitingRational) else 1.0)
        ab = model.alpha * model.beta
        if gamma > ab and g_eff < 1.0 / (2.0 * (gamma - ab)):
            d2 = (0.0, 1.0 - ab / gamma)
            d1 = (0.0, min(1.0, 1.0 - 2.0 * g_eff * (gamma - 2.0 * ab)))
            return LrdCheckResult("accepted", d1, d2, "LRD-space-time",
                                  f"gamma={gamma} > alpha*beta={ab} and effective gamma_t={g_eff} < "
                                  f"1/(2(gamma - alpha*beta))")
        return LrdCheckResult("indeterminate", None, None, "unclassified",
                              "sufficient condition gamma > alpha*beta, gamma_t < 1/(2(gamma - alpha*beta)) fails")
    if isinstance(model, ExponentialBaseline):
        return LrdCheckResult("rejected", None, None, "weak-dependence",
                              "exponential decay in space and time is integrable")
    return LrdCheckResult("indeterminate", None, None, "unclassified",
                          f"no closed-form condition for family {model.family!r}")


def _sup_over_tau(model: CovarianceModel, z: float) -> float:
    """max over tau >= 0 of C(z, tau); Gneiting covariances can rise in tau when z > 0."""
    t = np.concatenate([[0.0], np.logspace(-4, 10, 561)])
    c = np.asarray(model(np.full_like(t, z), t), dtype=float)
    k = int(np.argmax(c))
    best = float(c[k])
    if 0 < k < t.size - 1:
        r = optimize.minimize_scalar(lambda v: -float(model(z, v)), bounds=(t[k - 1], t[k + 1]),
                                     method="bounded", options={"xatol": 1e-12 * max(t[k], 1.0)})
        best = max(best, -float(r.fun))
    return best


def sup_cov_outside(model: CovarianceModel, T: float, gamma: float, beta1: float, beta2: float) -> float:
    """Upper bound of C over {tau >= T^beta1} ∪ {z >= T^(gamma beta2)}.

    Every family decreases in z at fixed tau and in tau along z = 0, and
    |C(z, tau)| <= C(0, tau), so the temporal ray peaks at its corner.  The
    spatial ray peaks on the line z = T^(gamma beta2), where the Gneiting
    families may still rise in tau; that line is searched numerically.  With
    gamma = 0 the spatial window is fixed and the spatial ray is dropped.
    """
    if T <= 1:
        raise DomainError("sup_cov_outside needs T > 1")
    if not (0 < beta1 < 1 and 0 < beta2 < 1):
        raise DomainError("beta1, beta2 must lie in (0, 1)")
    t_ray = float(model(0.0, T ** beta1))
    if gamma == 0:
        return max(t_ray, 0.0)
    z0 = T ** (gamma * beta2)
    z_ray = float(model(z0, 0.0)) if isinstance(model, (Separable, ExponentialBaseline)) else _sup_over_tau(model, z0)
    return max(t_ray, z_ray, 0.0)
