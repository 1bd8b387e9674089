"""Fields restricted to the unit sphere: angular power spectra, covariances, simulation.

Conventions.  S_lm are real spherical harmonics, orthonormal for the surface
measure of the unit sphere, so that

    sum_m S_lm(u) S_lm(v) = h(l, d) / |S_{d-1}| * G_l(u . v)

with G_l the Gegenbauer polynomial of index (d-2)/2 normalised to G_l(1) = 1.
The restricted covariance then reads

    C_R(theta, tau) = sum_l h(l, d) A_l(tau) G_l(cos theta) / |S_{d-1}|.

For a spectral measure G(dlambda, dmu) with C(r, tau) = 2 int int cos(mu tau)
Y_d(lambda r) G, the matching angular spectrum is

    A_l(tau) = 2^d Gamma(d/2) pi^{d/2} int int cos(mu tau)
               [J_{l+(d-2)/2}(lambda) / lambda^{(d-2)/2}]^2 G(dlambda, dmu).

A literal variant with the prefactor 2 Gamma(d/2) pi^{d/2} is kept under
``normalization="literal"``; it does not reproduce C_R(0, 0) = C(0, 0).
"""

from __future__ import annotations

import csv
import json
import math
import struct
import warnings
from collections import OrderedDict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Callable, Optional, Sequence, Union

import numpy as np
from scipy import special

from ._quad import cube2, gauss_legendre, quad1
from .covariance import CovarianceModel, eval_cov
from .errors import (DivergentMeasureError, DomainError, NotPSDError, ParameterError,
                     TruncationWarning)
from .fields import _cholesky_jitter, replicate_rng
from .geomprob import sphere_area

MAGIC = b"LRDS"
DEFAULT_L_MAX = 64
TAIL_TOL = 1e-3


# ---------------------------------------------------------------- basics

def h_multiplicity(l: int, d: int) -> int:
    """Dimension of the degree-l spherical harmonics on S_{d-1}."""
    if l < 0 or d < 2:
        raise ParameterError("need l >= 0 and d >= 2")
    if d == 2:
        return 1 if l == 0 else 2
    return (2 * l + d - 2) * math.comb(l + d - 3, l) // (d - 2)


def gegenbauer_normalized(l, d: int, x):
    """G_l(x) = C_l^{(d-2)/2}(x) / C_l^{(d-2)/2}(1); Chebyshev T_l for d = 2."""
    x = np.clip(np.asarray(x, dtype=float), -1.0, 1.0)
    if d == 2:
        return np.cos(np.asarray(l) * np.arccos(x))
    if d == 3:
        return special.eval_legendre(l, x)
    a = (d - 2) / 2
    return special.eval_gegenbauer(l, a, x) / special.eval_gegenbauer(l, a, 1.0)


def spectral_const(d: int, normalization: str = "consistent") -> float:
    base = math.gamma(d / 2) * math.pi ** (d / 2)
    if normalization == "consistent":
        return 2.0 ** d * base
    if normalization == "literal":
        return 2.0 * base
    raise ParameterError(f"unknown normalization {normalization!r}")


def addition_const(d: int) -> float:
    """c_1^2(d) = 2^{d-1} Gamma(d/2) pi^{d/2}."""
    return 2.0 ** (d - 1) * math.gamma(d / 2) * math.pi ** (d / 2)


def _bessel_ratio(l: int, d: int, lam):
    """J_{l+(d-2)/2}(lam) / lam^{(d-2)/2}, finite at lam = 0."""
    lam = np.asarray(lam, dtype=float)
    a = (d - 2) / 2
    small = lam < 1e-8
    safe = np.where(small, 1.0, lam)
    if d == 3:
        out = math.sqrt(2 / math.pi) * special.spherical_jn(l, safe)
    else:
        out = special.jv(l + a, safe) / safe ** a
    # leading term of the power series near 0
    lead = lam ** l / (2.0 ** (l + a) * math.gamma(l + a + 1))
    return np.where(small, lead, out)


def bessel_kernel(d: int, x):
    """Y_d(x) = 2^{(d-2)/2} Gamma(d/2) J_{(d-2)/2}(x) / x^{(d-2)/2}, with Y_d(0) = 1."""
    x = np.abs(np.asarray(x, dtype=float))
    a = (d - 2) / 2
    return 2.0 ** a * math.gamma(d / 2) * _bessel_ratio(0, d, x)


# ---------------------------------------------------------------- spectral measures

@dataclass(frozen=True)
class SpectralMeasure:
    """Finite measure on (0, inf)^2 behind a covariance C(r, tau) = 2 int int cos(mu tau) Y_d(lambda r) G.

    kinds: ``point`` (atoms lam, mu, w), ``separable`` (densities g(lam) f(mu)),
    ``density`` (joint density on the box [0, lam_max] x [0, mu_max]).
    """

    kind: str
    lam: tuple = ()
    mu: tuple = ()
    w: tuple = ()
    g: Optional[Callable] = None
    f: Optional[Callable] = None
    joint: Optional[Callable] = None
    lam_max: float = math.inf
    mu_max: float = math.inf

    def __post_init__(self):
        if self.kind == "point":
            lam, mu, w = (np.asarray(v, dtype=float) for v in (self.lam, self.mu, self.w))
            if not (lam.shape == mu.shape == w.shape) or lam.ndim != 1 or lam.size == 0:
                raise ParameterError("point masses need equal-length nonempty lam, mu, w")
            if not np.all(np.isfinite(np.concatenate([lam, mu, w]))):
                raise DivergentMeasureError("point masses must be finite")
            if np.any(w < 0) or np.any(lam < 0) or np.any(mu < 0):
                raise ParameterError("atoms and weights must be nonnegative")
        elif self.kind == "separable":
            if self.g is None or self.f is None:
                raise ParameterError("separable measure needs densities g and f")
        elif self.kind == "density":
            if self.joint is None or not (math.isfinite(self.lam_max) and math.isfinite(self.mu_max)):
                raise ParameterError("joint density needs a callable and a finite box")
        else:
            raise ParameterError(f"unknown measure kind {self.kind!r}")

    @classmethod
    def point(cls, lam, mu, w) -> "SpectralMeasure":
        return cls("point", tuple(np.atleast_1d(lam).astype(float)), tuple(np.atleast_1d(mu).astype(float)),
                   tuple(np.atleast_1d(w).astype(float)))

    @classmethod
    def separable(cls, g, f, lam_max=math.inf, mu_max=math.inf) -> "SpectralMeasure":
        m = cls("separable", g=g, f=f, lam_max=lam_max, mu_max=mu_max)
        m.total_mass()
        return m

    @classmethod
    def density(cls, joint, lam_max, mu_max) -> "SpectralMeasure":
        return cls("density", joint=joint, lam_max=lam_max, mu_max=mu_max)

    def _mass1(self, fn, hi, what):
        r = quad1(lambda x: _nonneg(fn(x), what), 0.0, hi, limit=1000)
        if not (math.isfinite(r.value) and r.converged) or r.value > 1e300:
            raise DivergentMeasureError(f"{what} density does not have finite mass")
        return r.value

    def total_mass(self) -> float:
        if self.kind == "point":
            return float(np.sum(self.w))
        if self.kind == "separable":
            return self._mass1(self.g, self.lam_max, "spatial") * self._mass1(self.f, self.mu_max, "temporal")
        r = cube2(lambda x: self.joint(x[:, 0], x[:, 1]), [0.0, 0.0], [self.lam_max, self.mu_max], rtol=1e-10)
        if not math.isfinite(r.value):
            raise DivergentMeasureError("joint density does not have finite mass")
        return r.value

    def covariance(self, r, tau, d: int):
        """2 int int cos(mu tau) Y_d(lambda r) G(dlambda, dmu)."""
        r, tau = float(r), float(tau)
        if self.kind == "point":
            lam, mu, w = (np.asarray(v) for v in (self.lam, self.mu, self.w))
            return float(2.0 * np.sum(w * np.cos(mu * tau) * bessel_kernel(d, lam * r)))
        if self.kind == "separable":
            sp = quad1(lambda x: self.g(x) * bessel_kernel(d, x * r), 0.0, self.lam_max, limit=1000).value
            return 2.0 * sp * _cos_transform(self.f, tau, self.mu_max)
        res = cube2(lambda x: np.cos(x[:, 1] * tau) * bessel_kernel(d, x[:, 0] * r) * self.joint(x[:, 0], x[:, 1]),
                    [0.0, 0.0], [self.lam_max, self.mu_max], rtol=1e-10)
        return 2.0 * res.value


def _nonneg(v, what):
    if np.any(np.asarray(v) < 0):
        raise ParameterError(f"{what} density takes negative values")
    return v


def _cos_transform(f, tau, hi):
    if tau == 0.0:
        return quad1(f, 0.0, hi, limit=1000).value
    if math.isinf(hi):
        return quad1(f, 0.0, math.inf, weight="cos", wvar=tau, limit=1000).value
    return quad1(f, 0.0, hi, weight="cos", wvar=tau, limit=1000).value


def _spatial_factor(measure: SpectralMeasure, l: int, d: int) -> float:
    return quad1(lambda x: _bessel_ratio(l, d, x) ** 2 * measure.g(x), 0.0, measure.lam_max, limit=1000).value


def angular_power_spectrum(measure: SpectralMeasure, l: int, tau: float, d: int,
                           normalization: str = "consistent") -> float:
    """A_l(tau) of the restriction of the field with spectral measure ``measure`` to S_{d-1}."""
    if l < 0 or d < 2:
        raise ParameterError("need l >= 0 and d >= 2")
    c = spectral_const(d, normalization)
    tau = abs(float(tau))
    if measure.kind == "point":
        lam, mu, w = (np.asarray(v) for v in (measure.lam, measure.mu, measure.w))
        return float(c * np.sum(w * np.cos(mu * tau) * _bessel_ratio(l, d, lam) ** 2))
    if measure.kind == "separable":
        return c * _spatial_factor(measure, l, d) * _cos_transform(measure.f, tau, measure.mu_max)

    def fn(x):
        return np.cos(x[:, 1] * tau) * _bessel_ratio(l, d, x[:, 0]) ** 2 * measure.joint(x[:, 0], x[:, 1])

    r = cube2(fn, [0.0, 0.0], [measure.lam_max, measure.mu_max], rtol=1e-10, atol=1e-14)
    if not math.isfinite(r.value):
        raise DivergentMeasureError("angular spectrum integral diverges")
    return c * r.value


# ---------------------------------------------------------------- spectra

@dataclass
class SphericalSpectrum:
    """Table A_l(tau_j), l = 0..L, with C_R(0, 0) when known (for tail bounds)."""

    d: int
    taus: np.ndarray
    table: np.ndarray  # shape (L + 1, n_tau)
    c00: Optional[float] = None
    source: object = field(default=None, repr=False, compare=False)
    normalization: str = "consistent"

    def __post_init__(self):
        self.taus = np.asarray(self.taus, dtype=float)
        self.table = np.atleast_2d(np.asarray(self.table, dtype=float))
        if self.table.shape[1] != self.taus.size:
            raise ParameterError("table columns must match the tau grid")
        if self.taus.size and self.taus[0] != 0.0:
            raise ParameterError("the tau grid must start at 0")
        a0 = self.table[:, 0]
        if np.any(a0 < -1e-12 * max(1.0, float(np.max(np.abs(a0))))):
            raise ParameterError("A_l(0) must be nonnegative")
        if np.any(np.abs(self.table) > a0[:, None] * (1 + 1e-8) + 1e-12):
            raise ParameterError("|A_l(tau)| exceeds A_l(0); not a temporal covariance")

    @property
    def L_max(self) -> int:
        return self.table.shape[0] - 1

    @property
    def h(self) -> np.ndarray:
        return np.array([h_multiplicity(l, self.d) for l in range(self.L_max + 1)], dtype=float)

    def partial_variance(self, L_max: Optional[int] = None) -> float:
        L = self.L_max if L_max is None else min(L_max, self.L_max)
        return float(np.sum(self.h[:L + 1] * self.table[:L + 1, 0]) / sphere_area(self.d))

    def tail_bound(self, L_max: Optional[int] = None) -> float:
        """Sum_{l > L} h A_l(0) / |S_{d-1}|: bounds the truncation error of C_R at any (theta, tau)."""
        if self.c00 is None:
            return math.nan
        return max(0.0, self.c00 - self.partial_variance(L_max))

    def column(self, tau: float) -> np.ndarray:
        """A_l(tau) for every l in the table."""
        tau = abs(float(tau))
        j = np.flatnonzero(np.isclose(self.taus, tau, rtol=1e-12, atol=1e-12))
        if j.size:
            return self.table[:, j[0]]
        if self.source is not None:
            return _spectrum_column(self.source, self.L_max, tau, self.d, self.normalization)
        if tau > self.taus[-1]:
            raise DomainError(f"tau={tau} outside the tabulated range")
        return np.array([np.interp(tau, self.taus, row) for row in self.table])

    @classmethod
    def from_measure(cls, measure: SpectralMeasure, L_max: int, taus, d: int,
                     normalization: str = "consistent") -> "SphericalSpectrum":
        taus = np.asarray(taus, dtype=float)
        tab = np.stack([_spectrum_column(measure, L_max, t, d, normalization) for t in taus], axis=1)
        c00 = 2.0 * measure.total_mass() if normalization == "consistent" else None
        return cls(d, taus, tab, c00, measure, normalization)

    @classmethod
    def from_model(cls, model: CovarianceModel, L_max: int, taus, d: int = 3,
                   n_theta: Optional[int] = None) -> "SphericalSpectrum":
        """Project theta -> C(2 sin(theta/2), tau) onto the G_l (Gauss-Legendre in theta)."""
        taus = np.asarray(taus, dtype=float)
        n = n_theta or max(2 * L_max + 64, 256)
        th = _theta_projection(L_max, d, n)
        x, wts = th
        tab = np.empty((L_max + 1, taus.size))
        chord = 2.0 * np.sin(x / 2)
        for j, t in enumerate(taus):
            c = eval_cov(model, chord, np.full_like(chord, t))
            tab[:, j] = wts @ c
        return cls(d, taus, tab, float(eval_cov(model, 0.0, 0.0)), model)

    def to_csv(self, path):
        with Path(path).open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["l", "tau", "A"])
            for l in range(self.L_max + 1):
                for j, t in enumerate(self.taus):
                    w.writerow([l, repr(float(t)), repr(float(self.table[l, j]))])

    @classmethod
    def from_csv(cls, path, d: int, c00: Optional[float] = None) -> "SphericalSpectrum":
        try:
            with Path(path).open(newline="") as fh:
                rows = list(csv.DictReader(fh))
        except OSError as exc:
            raise ParameterError(f"cannot read spectrum {path}: {exc}") from exc
        if not rows or set(rows[0]) != {"l", "tau", "A"}:
            raise ParameterError(f"{path}: expected header l,tau,A")
        ls = sorted({int(r["l"]) for r in rows})
        taus = sorted({float(r["tau"]) for r in rows})
        if ls != list(range(len(ls))):
            raise ParameterError(f"{path}: degrees must run 0..L without gaps")
        tab = np.full((len(ls), len(taus)), np.nan)
        ti = {t: j for j, t in enumerate(taus)}
        for r in rows:
            tab[int(r["l"]), ti[float(r["tau"])]] = float(r["A"])
        if np.isnan(tab).any():
            raise ParameterError(f"{path}: incomplete (l, tau) table")
        return cls(d, np.array(taus), tab, c00)


def _spectrum_column(source, L_max, tau, d, normalization):
    if isinstance(source, SpectralMeasure):
        if source.kind == "separable":
            c = spectral_const(d, normalization) * _cos_transform(source.f, tau, source.mu_max)
            return np.array([c * _spatial_factor(source, l, d) for l in range(L_max + 1)])
        return np.array([angular_power_spectrum(source, l, tau, d, normalization) for l in range(L_max + 1)])
    x, wts = _theta_projection(L_max, d, max(2 * L_max + 64, 256))
    chord = 2.0 * np.sin(x / 2)
    return wts @ eval_cov(source, chord, np.full_like(chord, tau))


@lru_cache(maxsize=16)
def _theta_projection(L_max: int, d: int, n: int):
    """Nodes theta and the (L+1, n) weights with A_l = sum_k W[l, k] C(theta_k)."""
    t, w = gauss_legendre(n)
    x = math.pi * t
    w = math.pi * w
    G = np.stack([gegenbauer_normalized(l, d, np.cos(x)) for l in range(L_max + 1)])
    W = sphere_area(d - 1) * G * (w * np.sin(x) ** (d - 2))[None, :]
    return x, W


# ---------------------------------------------------------------- restricted covariance

def restricted_cov_series(spectrum: SphericalSpectrum, theta, tau: float, L_max: Optional[int] = None,
                          tol: float = TAIL_TOL):
    """Truncated expansion sum_{l <= L} h A_l(tau) G_l(cos theta) / |S_{d-1}|.

    Returns ``(value, tail_bound)``; warns when the bound exceeds ``tol``.
    """
    th = np.asarray(theta, dtype=float)
    if np.any((th < 0) | (th > math.pi + 1e-12)):
        raise DomainError("theta must lie in [0, pi]")
    L = spectrum.L_max if L_max is None else min(int(L_max), spectrum.L_max)
    col = spectrum.column(tau)[:L + 1]
    G = np.stack([gegenbauer_normalized(l, spectrum.d, np.cos(th)) for l in range(L + 1)])
    val = np.tensordot(spectrum.h[:L + 1] * col, G, axes=1) / sphere_area(spectrum.d)
    tail = spectrum.tail_bound(L)
    if tail > tol:
        warnings.warn(f"truncation tail bound {tail:.3g} exceeds {tol:g} at L_max={L}", TruncationWarning,
                      stacklevel=2)
    return (float(val) if np.ndim(val) == 0 else val), tail


def restricted_cov_direct(source: Union[CovarianceModel, SpectralMeasure], theta, tau: float, d: int = 3):
    """C_R(theta, tau) through the chord 2 sin(theta / 2)."""
    th = np.asarray(theta, dtype=float)
    if np.any((th < 0) | (th > math.pi + 1e-12)):
        raise DomainError("theta must lie in [0, pi]")
    chord = 2.0 * np.sin(th / 2)
    if isinstance(source, SpectralMeasure):
        out = np.vectorize(lambda r: source.covariance(r, tau, d))(chord)
        return float(out) if np.ndim(out) == 0 else out
    return eval_cov(source, chord, tau)


# ---------------------------------------------------------------- spherical harmonics

def real_sph_harm(l: int, m: int, theta, phi):
    """Real orthonormal spherical harmonic on S^2 (theta colatitude, phi longitude)."""
    theta = np.asarray(theta, dtype=float)
    phi = np.asarray(phi, dtype=float)
    p = special.sph_harm_y(l, abs(m), theta, np.zeros_like(theta)).real
    if m == 0:
        return p
    if m > 0:
        return math.sqrt(2) * p * np.cos(m * phi)
    return math.sqrt(2) * p * np.sin(-m * phi)


def _to_polar(x):
    x = np.asarray(x, dtype=float)
    r = float(np.linalg.norm(x))
    if r == 0:
        raise DomainError("points must be nonzero")
    u = x / r
    return r, math.acos(max(-1.0, min(1.0, u[2]))), math.atan2(u[1], u[0])


def addition_theorem_residual(lam: float, x, y, L_max: int) -> float:
    """|Y_3(lam |x - y|) - c_1^2 sum_{l <= L} sum_m S_lm(u) S_lm(v) J-products| in R^3."""
    if len(x) != 3 or len(y) != 3:
        raise ParameterError("the addition check is implemented for d = 3")
    r1, t1, p1 = _to_polar(x)
    r2, t2, p2 = _to_polar(y)
    rho = float(np.linalg.norm(np.asarray(x, float) - np.asarray(y, float)))
    lhs = float(bessel_kernel(3, lam * rho))
    c = addition_const(3)
    s = 0.0
    for l in range(L_max + 1):
        jj = _bessel_ratio(l, 3, lam * r1) * _bessel_ratio(l, 3, lam * r2)
        if jj == 0.0:
            continue
        sm = sum(float(real_sph_harm(l, m, t1, p1) * real_sph_harm(l, m, t2, p2)) for m in range(-l, l + 1))
        s += sm * float(jj)
    return abs(lhs - c * s)


# ---------------------------------------------------------------- grids and fields

@dataclass(frozen=True)
class SphereGrid:
    """Longitude-latitude grid on S^2; ``kind`` is 'latlon' (equiangular) or 'gauss'."""

    n_lat: int = 64
    n_lon: int = 128
    kind: str = "latlon"

    def __post_init__(self):
        if self.n_lat < 2 or self.n_lon < 2:
            raise ParameterError("need n_lat, n_lon >= 2")
        if self.kind not in ("latlon", "gauss"):
            raise ParameterError(f"unknown sphere grid {self.kind!r}")

    @property
    def colat(self) -> np.ndarray:
        if self.kind == "latlon":
            return (np.arange(self.n_lat) + 0.5) * math.pi / self.n_lat
        x, _ = np.polynomial.legendre.leggauss(self.n_lat)
        return np.arccos(x[::-1])

    @property
    def lon(self) -> np.ndarray:
        return (np.arange(self.n_lon) + 0.5) * 2.0 * math.pi / self.n_lon

    @property
    def band_weights(self) -> np.ndarray:
        """Surface area per cell in each latitude band."""
        if self.kind == "latlon":
            edges = np.arange(self.n_lat + 1) * math.pi / self.n_lat
            return (np.cos(edges[:-1]) - np.cos(edges[1:])) * 2.0 * math.pi / self.n_lon
        _, w = np.polynomial.legendre.leggauss(self.n_lat)
        return w[::-1] * 2.0 * math.pi / self.n_lon

    @property
    def weights(self) -> np.ndarray:
        return np.repeat(self.band_weights, self.n_lon)

    @property
    def n_cells(self) -> int:
        return self.n_lat * self.n_lon

    def points(self):
        th, ph = np.meshgrid(self.colat, self.lon, indexing="ij")
        return th.ravel(), ph.ravel()

    def to_dict(self) -> dict:
        return {"n_lat": self.n_lat, "n_lon": self.n_lon, "kind": self.kind}


@dataclass
class SphereField:
    grid: SphereGrid
    times: np.ndarray
    values: np.ndarray  # shape (nt, n_lat * n_lon)
    L_max: int
    seed: int
    replicate: int = 0
    scale: float = 1.0

    @property
    def dt(self) -> float:
        return float(self.times[1] - self.times[0]) if self.times.size > 1 else 1.0

    @property
    def T(self) -> float:
        return self.dt * self.times.size

    @property
    def weights(self) -> np.ndarray:
        return self.grid.weights

    def header(self) -> dict:
        return {"dims": list(self.values.shape), "dtype": "<f8", "seed": int(self.seed),
                "replicate": int(self.replicate), "L_max": self.L_max, "scale": self.scale,
                "grid": self.grid.to_dict(), "times": [float(t) for t in self.times]}


def time_grid(T: float, nt: int) -> np.ndarray:
    """Cell-centred times (k + 1/2) T / nt."""
    if T <= 0 or nt < 1:
        raise ParameterError("need T > 0 and nt >= 1")
    return (np.arange(nt) + 0.5) * T / nt


class SphereSampler:
    """Reusable factorisations for drawing T_R(x, t) = sum a_lm(t) S_lm(x) on a grid.

    Each a_lm is a stationary Gaussian sequence with covariance A_l(|t - s|);
    one Cholesky factor per degree is shared by its 2l + 1 orders.  Synthesis
    runs a Legendre sum per order m and an inverse real FFT in longitude.
    """

    def __init__(self, spectrum: SphericalSpectrum, times, L_max: Optional[int] = None,
                 grid: Optional[SphereGrid] = None, renormalize: bool = False, tol: float = TAIL_TOL):
        if spectrum.d != 3:
            raise ParameterError("synthesis is implemented for the sphere S^2 (d = 3)")
        self.grid = grid or SphereGrid()
        self.times = np.asarray(times, dtype=float)
        L = spectrum.L_max if L_max is None else int(L_max)
        if L > spectrum.L_max:
            raise ParameterError(f"spectrum only has degrees up to {spectrum.L_max}")
        if L >= self.grid.n_lon:
            raise ParameterError("L_max must be below n_lon")
        self.L = L
        tail = spectrum.tail_bound(L)
        if tail > tol:
            warnings.warn(f"truncation tail bound {tail:.3g} exceeds {tol:g} at L_max={L}", TruncationWarning,
                          stacklevel=2)
        nt = self.times.size
        lags = np.abs(self.times[:, None] - self.times[None, :])
        ulags, inv = np.unique(np.round(lags, 12), return_inverse=True)
        cols = np.stack([spectrum.column(t)[:L + 1] for t in ulags], axis=1)  # (L+1, n_lag)
        self.factors = []
        self.jitter = []
        for l in range(L + 1):
            K = cols[l][inv].reshape(nt, nt)
            if cols[l, 0] <= 0:
                self.factors.append(np.zeros((nt, nt)))
                self.jitter.append(0.0)
                continue
            try:
                Lc, jit = _cholesky_jitter(K, f"a_l for l={l}")
            except NotPSDError:
                raise NotPSDError(f"A_l(|t-s|) for l={l} is not positive semidefinite on the time grid") from None
            self.factors.append(Lc)
            self.jitter.append(jit)
        part = spectrum.partial_variance(L)
        self.scale = 1.0
        if renormalize and spectrum.c00 is not None and part > 0:
            self.scale = math.sqrt(spectrum.c00 / part)
        th = self.grid.colat
        # normalised associated Legendre values, one (L+1-m, n_lat) block per order m
        self.plm = [np.stack([special.sph_harm_y(l, m, th, np.zeros_like(th)).real for l in range(m, L + 1)])
                    for m in range(L + 1)]

    @property
    def n_coeffs(self) -> int:
        return (self.L + 1) ** 2

    def coefficients(self, rng: np.random.Generator) -> np.ndarray:
        """a_lm(t), shape (nt, L+1, 2L+1) with order m stored at column L + m."""
        nt = self.times.size
        xi = rng.standard_normal((nt, self.n_coeffs))
        a = np.zeros((nt, self.L + 1, 2 * self.L + 1))
        k = 0
        for l in range(self.L + 1):
            n = 2 * l + 1
            a[:, l, self.L - l:self.L + l + 1] = self.factors[l] @ xi[:, k:k + n]
            k += n
        return a

    def synthesize(self, a: np.ndarray) -> np.ndarray:
        nt, L = a.shape[0], self.L
        nlat, nlon = self.grid.n_lat, self.grid.n_lon
        n2 = 2 * nlon
        Y = np.zeros((nt, nlat, nlon + 1), dtype=complex)
        for m in range(L + 1):
            P = self.plm[m]  # (L+1-m, nlat)
            cos_part = a[:, m:, L + m] @ P
            if m == 0:
                Y[:, :, 0] = n2 * cos_part
                continue
            sin_part = a[:, m:, L - m] @ P
            Y[:, :, m] = n2 * math.sqrt(2) / 2 * (cos_part - 1j * sin_part)
        vals = np.fft.irfft(Y, n2, axis=2)[:, :, 1::2]
        return self.scale * vals.reshape(nt, nlat * nlon)

    def draw(self, rng: np.random.Generator) -> np.ndarray:
        return self.synthesize(self.coefficients(rng))


_SAMPLERS: "OrderedDict[tuple, SphereSampler]" = OrderedDict()


def _sampler(spectrum, times, L_max, grid, renormalize):
    key = (id(spectrum), tuple(np.round(np.asarray(times, float), 12)), L_max, grid, renormalize)
    s = _SAMPLERS.get(key)
    if s is None or s._spectrum is not spectrum:
        s = SphereSampler(spectrum, times, L_max, grid, renormalize)
        s._spectrum = spectrum
        _SAMPLERS[key] = s
        while len(_SAMPLERS) > 4:
            _SAMPLERS.popitem(last=False)
    return s


def simulate_sphere_field(spectrum: SphericalSpectrum, times, L_max: Optional[int] = None, seed: int = 0,
                          grid: Optional[SphereGrid] = None, rep: int = 0, t_index: int = 0,
                          renormalize: bool = False) -> SphereField:
    """One draw of the truncated sphere-cross-time field; deterministic in (seed, t_index, rep)."""
    s = _sampler(spectrum, times, L_max, grid or SphereGrid(), renormalize)
    vals = s.draw(replicate_rng(seed, rep, t_index))
    return SphereField(s.grid, s.times.copy(), vals, s.L, seed, rep, s.scale)


def sphere_replicate_stats(spectrum: SphericalSpectrum, times, seed: int, R: int,
                           stat: Callable[[SphereField], np.ndarray], L_max: Optional[int] = None,
                           grid: Optional[SphereGrid] = None, t_index: int = 0, threads: int = 1,
                           chunk: int = 16, renormalize: bool = False) -> np.ndarray:
    """Apply ``stat`` to R independent sphere fields; row r depends only on (seed, t_index, r)."""
    s = _sampler(spectrum, times, L_max, grid or SphereGrid(), renormalize)

    def run(lo):
        out = []
        for r in range(lo, min(lo + chunk, R)):
            fld = SphereField(s.grid, s.times, s.draw(replicate_rng(seed, r, t_index)), s.L, seed, r, s.scale)
            out.append(np.atleast_1d(np.asarray(stat(fld), dtype=float)))
        return out

    starts = list(range(0, R, chunk))
    if threads <= 1:
        parts = [run(st) for st in starts]
    else:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            parts = list(ex.map(run, starts))
    rows = [r for p in parts for r in p]
    return np.array(rows) if rows else np.empty((0, 0))


def harmonic_matrix(L: int, grid: SphereGrid) -> np.ndarray:
    """S_lm at the grid cells, shape ((L+1)^2, n_cells), rows ordered (l, m = -l..l)."""
    th, ph = grid.points()
    return np.stack([real_sph_harm(l, m, th, ph) for l in range(L + 1) for m in range(-l, l + 1)])


def estimate_angular_power(values, grid: SphereGrid, L: int) -> np.ndarray:
    """Per-map estimates mean_m (sum_cells w S_lm T)^2 of A_l, shape (n_maps, L+1)."""
    v = np.atleast_2d(np.asarray(values, dtype=float))
    S = harmonic_matrix(L, grid) * grid.weights[None, :]
    alm = v @ S.T
    out = np.empty((v.shape[0], L + 1))
    k = 0
    for l in range(L + 1):
        n = 2 * l + 1
        out[:, l] = np.mean(alm[:, k:k + n] ** 2, axis=1)
        k += n
    return out


def write_sphere_binary(fld: SphereField, path):
    """Flat binary: b'LRDS', uint32 header length, JSON header, little-endian float64 values."""
    head = json.dumps(fld.header(), sort_keys=True).encode()
    try:
        with Path(path).open("wb") as fh:
            fh.write(MAGIC)
            fh.write(struct.pack("<I", len(head)))
            fh.write(head)
            fh.write(np.ascontiguousarray(fld.values, dtype="<f8").tobytes())
    except OSError as exc:
        raise OSError(f"cannot write sphere field to {path}: {exc}") from exc


def read_sphere_binary(path):
    data = Path(path).read_bytes()
    if data[:4] != MAGIC:
        raise ParameterError(f"{path}: not a sphere field file")
    (n,) = struct.unpack("<I", data[4:8])
    head = json.loads(data[8:8 + n].decode())
    return head, np.frombuffer(data[8 + n:], dtype="<f8").reshape(head["dims"])


# ---------------------------------------------------------------- geodesic family

def white_cov(theta, u, phi: Callable, psi: Callable, sigma2: float = 1.0):
    """sigma^2 / psi(u^2) * phi(theta / psi(u^2)) on the sphere (theta the great-circle distance)."""
    th = np.asarray(theta, dtype=float)
    if np.any((th < 0) | (th > math.pi + 1e-12)):
        raise DomainError("theta must lie in [0, pi]")
    p = np.asarray(psi(np.asarray(u, dtype=float) ** 2), dtype=float)
    out = sigma2 / p * np.asarray(phi(th / p), dtype=float)
    return float(out) if np.ndim(out) == 0 else out
