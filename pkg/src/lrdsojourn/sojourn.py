"""Sojourn (excursion-volume) functionals and their normalised statistics.

Continuous integrals over [0, T] x T^gamma K are replaced by cell-centre
Riemann sums over the sampled grid.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional, Sequence, Union

import numpy as np

from .covariance import CovarianceModel, check_lrd_conditions, sup_cov_outside
from .errors import DomainError, InadmissibleThresholdError, ParameterError, ZeroDenominatorError
from .geomprob import BodySpec, std_normal
from .hermite import HermiteCoeffs, hermite, indicator_coeffs
from .variance import sigma2_ball, sigma2_body


# ---------------------------------------------------------------- thresholds

@dataclass(frozen=True)
class ThresholdSpec:
    """Fixed level u, or a moving level c sqrt(log log T) / c (log T)^{eta/2}."""

    kind: str  # fixed | loglog | logpow
    u: float = 0.0
    c: float = 1.0
    eta: float = 0.5

    def __post_init__(self):
        if self.kind not in ("fixed", "loglog", "logpow"):
            raise ParameterError(f"unknown threshold family {self.kind!r}; only fixed, loglog, logpow")
        if self.kind != "fixed" and self.c <= 0:
            raise ParameterError("moving threshold needs c > 0")
        if self.kind == "logpow" and self.eta <= 0:
            raise ParameterError("logpow exponent eta must be positive")

    @classmethod
    def fixed(cls, u: float) -> "ThresholdSpec":
        return cls("fixed", u=u)

    @classmethod
    def loglog(cls, c: float = 1.0) -> "ThresholdSpec":
        return cls("loglog", c=c)

    @classmethod
    def logpow(cls, eta: float, c: float = 1.0) -> "ThresholdSpec":
        return cls("logpow", c=c, eta=eta)

    @property
    def moving(self) -> bool:
        return self.kind != "fixed"

    @property
    def growth_ok(self) -> bool:
        """u^2(T) = o(log T) holds for this family."""
        return self.kind != "logpow" or self.eta < 1

    def level(self, T: float) -> float:
        if self.kind == "fixed":
            return self.u
        if self.kind == "loglog":
            if T <= math.e:
                raise DomainError("log log T needs T > e")
            return self.c * math.sqrt(math.log(math.log(T)))
        if T <= 1:
            raise DomainError("log T needs T > 1")
        return self.c * math.log(T) ** (self.eta / 2)

    def to_dict(self) -> dict:
        if self.kind == "fixed":
            return {"kind": "fixed", "u": self.u}
        if self.kind == "loglog":
            return {"kind": "loglog", "c": self.c}
        return {"kind": "logpow", "c": self.c, "eta": self.eta}

    @classmethod
    def from_dict(cls, obj) -> "ThresholdSpec":
        if isinstance(obj, (int, float)):
            return cls.fixed(float(obj))
        if not isinstance(obj, dict) or "kind" not in obj:
            raise ParameterError("threshold must be a number or an object with a 'kind'")
        extra = set(obj) - {"kind", "u", "c", "eta"}
        if extra:
            raise ParameterError(f"unknown threshold fields {sorted(extra)}")
        return cls(**obj)


@dataclass
class ThresholdCheck:
    u: float
    admissible: bool
    betas: Optional[tuple]
    T_grid: list = field(default_factory=list)
    products: list = field(default_factory=list)
    detail: str = ""


def moving_threshold(spec: ThresholdSpec, T: float, model: Optional[CovarianceModel] = None,
                     gamma: float = 0.0, d: int = 2, betas: Optional[tuple] = None,
                     T_grid: Optional[Sequence[float]] = None) -> ThresholdCheck:
    """Level u(T) with its admissibility verdict.

    The growth condition u^2(T) = o(log T) is decided from the family.  With a
    model, u^2(T) * sup{C outside the (T^beta1, T^{gamma beta2}) box} is also
    evaluated along a geometric T grid and required to decrease at the end.
    """
    if spec.moving and T <= math.e:
        raise DomainError("moving thresholds need T > e")
    u = spec.level(T)
    if not spec.growth_ok:
        raise InadmissibleThresholdError(
            f"u^2(T) = o(log T) fails: logpow exponent eta={spec.eta} is not below 1")
    if model is None or not spec.moving:
        return ThresholdCheck(u, True, None, detail="growth condition holds")
    if T_grid is None:
        T_grid = [T * 10.0 ** k for k in range(0, 13, 2)]
    if betas is None:
        # the condition asks for some (beta1, beta2) inside (0, delta1) x (0, delta2)
        lrd = check_lrd_conditions(model, 1, gamma, d)
        if lrd.accepted:
            cands = [(f * lrd.delta1[1], f * lrd.delta2[1]) for f in (0.9, 0.5, 0.25)]
        else:
            cands = [(0.25, 0.25)]
    else:
        cands = [tuple(betas)]
    for betas in cands:
        prods = [spec.level(t) ** 2 * sup_cov_outside(model, t, gamma, betas[0], betas[1]) for t in T_grid]
        tail = np.diff(prods[-3:])
        if np.all(tail <= 0) and (prods[-1] < prods[0] or prods[-1] == 0.0):
            break
    else:
        raise InadmissibleThresholdError(
            f"u^2(T) sup C outside the box does not decrease along T up to {T_grid[-1]:.3g} "
            f"(betas={betas}, last values {prods[-3:]})")
    return ThresholdCheck(u, True, tuple(betas), list(map(float, T_grid)), list(map(float, prods)),
                          "growth condition holds; covariance tail product decreasing")


# ---------------------------------------------------------------- statistics

@dataclass
class SojournStat:
    raw: Union[float, np.ndarray]
    centered: Optional[Union[float, np.ndarray]] = None
    normalized: Optional[Union[float, np.ndarray]] = None
    mean_used: Optional[float] = None
    denominator: Optional[float] = None
    meta: dict = field(default_factory=dict)


def _values(fld):
    return fld.values if hasattr(fld, "values") else np.asarray(fld, dtype=float)


def _cell_weights(fld):
    """Per-value Riemann weights: a scalar for grid fields, an area vector for sphere fields."""
    if hasattr(fld, "weights"):
        return fld.weights[None, :] * fld.dt
    return fld.grid.cell_volume


def minkowski_m1(fld, u: float) -> SojournStat:
    """Excursion volume: cell volume times the number of cells with Z >= u."""
    w = _cell_weights(fld)
    raw = float(np.sum(w * (_values(fld) >= u)))
    return SojournStat(raw, meta={"u": u})


def sojourn_general(fld, G: Union[Callable, HermiteCoeffs]) -> SojournStat:
    """Riemann sum of G(Z); a HermiteCoeffs argument is evaluated through its truncated expansion."""
    z = _values(fld)
    gz = G.evaluate(z) if isinstance(G, HermiteCoeffs) else np.asarray(G(z), dtype=float)
    if gz.shape != z.shape:
        gz = np.broadcast_to(gz, z.shape)
    return SojournStat(float(np.sum(_cell_weights(fld) * gz)))


def _chaos_sigma(m, T, body, gamma, model):
    if body.kind == "unit-ball":
        return math.sqrt(sigma2_ball(m, body.d, gamma, T, model).value)
    return math.sqrt(sigma2_body(m, body, gamma, T, model).value)


def normalized_stat(raw, threshold_or_coeffs, T: float, body: BodySpec, gamma: float,
                    model: CovarianceModel, m: int = 1, sigma: Optional[float] = None,
                    measure: Optional[float] = None) -> SojournStat:
    """Y_T = (raw - J_0 |K| T^{1+gamma d}) / (|J_m| sigma_m / m!).

    ``sigma`` overrides the continuous chaos standard deviation (e.g. with a
    discrete pairwise value) and ``measure`` the window measure used for the
    mean (e.g. the masked grid volume).
    """
    if isinstance(threshold_or_coeffs, HermiteCoeffs):
        coeffs = threshold_or_coeffs
    else:
        th = threshold_or_coeffs
        u = th.level(T) if hasattr(th, "level") else float(th)
        coeffs = indicator_coeffs(u, max(m, 1) + 1)
    J0, Jm = float(coeffs[0]), float(coeffs[m])
    if measure is None:
        measure = body.volume * T ** (1 + gamma * body.d)
    if sigma is None:
        sigma = _chaos_sigma(m, T, body, gamma, model)
    denom = abs(Jm) * sigma / math.factorial(m)
    if not denom > 0:
        raise ZeroDenominatorError(f"normaliser |J_m| sigma_m / m! vanishes (J_m={Jm}, sigma={sigma})")
    mean = J0 * measure
    raw_a = np.asarray(raw, dtype=float)
    cen = raw_a - mean
    out = lambda a: float(a) if np.ndim(a) == 0 else a  # noqa: E731
    return SojournStat(out(raw_a), out(cen), out(cen / denom), mean, denom,
                       {"m": m, "T": T, "J0": J0, "Jm": Jm, "sigma": sigma})


def hermite_projection_stat(fld, m: int, T: float, body: BodySpec, gamma: float, model: CovarianceModel,
                            sign_Jm: float = 1.0, sigma: Optional[float] = None) -> SojournStat:
    """Y_{m,T} = sgn(J_m) * (Riemann sum of H_m(Z)) / sigma_m."""
    if sigma is None:
        sigma = _chaos_sigma(m, T, body, gamma, model)
    if not sigma > 0:
        raise ZeroDenominatorError("chaos standard deviation vanishes")
    raw = float(np.sum(_cell_weights(fld) * hermite(m, _values(fld))))
    s = 1.0 if sign_Jm >= 0 else -1.0
    return SojournStat(raw, raw, s * raw / sigma, 0.0, sigma, {"m": m, "T": T})


def sphere_sojourn(fld, threshold, T: Optional[float] = None) -> SojournStat:
    """Surface-measure excursion volume of a sphere-cross-time field."""
    T = fld.T if T is None else T
    u = threshold.level(T) if hasattr(threshold, "level") else float(threshold)
    st = minkowski_m1(fld, u)
    st.meta["T"] = T
    return st


def condition5_ratio(var_A: float, coeffs: HermiteCoeffs, m: int, sigma2_m: float) -> float:
    """Var(A_T) / (J_m^2 sigma_m^2 / (m!)^2); tends to 1 when the rank-m term dominates."""
    den = coeffs[m] ** 2 * sigma2_m / math.factorial(m) ** 2
    if den <= 0:
        raise ZeroDenominatorError("rank-m variance term vanishes")
    return float(var_A / den)


def write_replicates_csv(raw, centered, normalized, path):
    path = Path(path)
    try:
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["replicate", "raw", "centered", "normalized"])
            for i, (a, b, c) in enumerate(zip(raw, centered, normalized)):
                w.writerow([i, repr(float(a)), repr(float(b)), repr(float(c))])
    except OSError as exc:
        raise OSError(f"cannot write replicate statistics to {path}: {exc}") from exc
