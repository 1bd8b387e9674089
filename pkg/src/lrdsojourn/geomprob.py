"""Special functions and inter-point distance densities.

Distances between two independent uniform points in a scaled body Λ·K, or on
the unit sphere, have explicit densities.  The ball case is written with the
regularized incomplete beta function; general convex bodies go through the
chord-length distribution F_K of isotropic random lines.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
from scipy import special

from ._quad import gauss_legendre, quad1
from .errors import DomainError, MissingChordCDFError, ParameterError

_CF_EPS = 1e-15
_CF_TINY = 1e-300
_CF_MAXIT = 2000


def _as_out(x, scalar):
    return float(x) if scalar else x


# ---------------------------------------------------------------- special functions

def _betacf(x, a, b):
    """Modified Lentz evaluation of the incomplete-beta continued fraction."""
    qab = a + b
    qap = a + 1.0
    qam = a - 1.0
    c = np.ones_like(x)
    dd = 1.0 - qab * x / qap
    dd = np.where(np.abs(dd) < _CF_TINY, _CF_TINY, dd)
    dd = 1.0 / dd
    h = dd.copy()
    active = np.ones(x.shape, dtype=bool)
    for mm in range(1, _CF_MAXIT + 1):
        m2 = 2 * mm
        aa = mm * (b - mm) * x / ((qam + m2) * (a + m2))
        dd = 1.0 + aa * dd
        dd = np.where(np.abs(dd) < _CF_TINY, _CF_TINY, dd)
        c = 1.0 + aa / c
        c = np.where(np.abs(c) < _CF_TINY, _CF_TINY, c)
        dd = 1.0 / dd
        h = np.where(active, h * dd * c, h)
        aa = -(a + mm) * (qab + mm) * x / ((a + m2) * (qap + m2))
        dd = 1.0 + aa * dd
        dd = np.where(np.abs(dd) < _CF_TINY, _CF_TINY, dd)
        c = 1.0 + aa / c
        c = np.where(np.abs(c) < _CF_TINY, _CF_TINY, c)
        dd = 1.0 / dd
        delta = dd * c
        h = np.where(active, h * delta, h)
        active &= np.abs(delta - 1.0) > _CF_EPS
        if not active.any():
            break
    return h


def _beta_series(x, a, b):
    # I_x(a,b) = x^a/(a B(a,b)) * sum_k (1-b)_k/k! * a/(a+k) x^k, used for tiny x
    term = np.ones_like(x)
    total = np.ones_like(x)
    for k in range(1, 400):
        term = term * (k - b) / k * x
        contrib = term * a / (a + k)
        total = total + contrib
        if np.all(np.abs(contrib) <= 1e-17 * np.abs(total)):
            break
    return total


def _ibeta(x, a, b):
    """Regularized incomplete beta on [0, 1], vectorised in x."""
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    lbeta = special.betaln(a, b)
    lo = x <= 0.0
    hi = x >= 1.0
    out[lo] = 0.0
    out[hi] = 1.0
    mid = ~(lo | hi)
    if mid.any():
        xm = x[mid]
        flip = xm > (a + 1.0) / (a + b + 2.0)
        xs = np.where(flip, 1.0 - xm, xm)
        aa = np.where(flip, b, a)
        bb = np.where(flip, a, b)
        front = np.exp(aa * np.log(xs) + bb * np.log1p(-xs) - lbeta) / aa
        small = xs < 1e-3
        val = np.empty_like(xs)
        if (~small).any():
            val[~small] = front[~small] * _betacf(xs[~small], aa[~small], bb[~small])
        if small.any():
            # series in x converges fast near 0; front already carries x^a (1-x)^b
            val[small] = (np.exp(aa[small] * np.log(xs[small]) - lbeta) / aa[small]
                          * _beta_series(xs[small], aa[small], bb[small]))
        out[mid] = np.where(flip, 1.0 - val, val)
    return out


def incomplete_beta(mu, p, q):
    """Regularized incomplete beta I_mu(p, q) for mu in (0, 1]."""
    scalar = np.ndim(mu) == 0
    mu_arr = np.atleast_1d(np.asarray(mu, dtype=float))
    if not (p > 0 and q > 0):
        raise DomainError(f"incomplete_beta needs p, q > 0, got p={p}, q={q}")
    if np.any(~np.isfinite(mu_arr)) or np.any(mu_arr <= 0.0) or np.any(mu_arr > 1.0):
        raise DomainError("incomplete_beta needs mu in (0, 1]")
    out = _ibeta(mu_arr, float(p), float(q))
    return _as_out(out[0], True) if scalar else out


def std_normal(u):
    """Standard normal density and distribution function at u."""
    u = np.asarray(u, dtype=float)
    dens = np.exp(-0.5 * u * u) / math.sqrt(2.0 * math.pi)
    cdf = special.ndtr(u)
    if u.ndim == 0:
        return float(dens), float(cdf)
    return dens, cdf


def ball_volume(d: int) -> float:
    return math.pi ** (d / 2) / math.gamma(d / 2 + 1)


def sphere_area(d: int) -> float:
    """Surface area of the unit sphere S_{d-1} in R^d."""
    return 2.0 * math.pi ** (d / 2) / math.gamma(d / 2)


# ---------------------------------------------------------------- bodies

@dataclass(frozen=True)
class BodySpec:
    """A convex observation body K in R^d.

    ``chord_cdf`` is a pair ``(v, F)`` of knots of a monotone piecewise-linear
    chord-length CDF.  ``sandwich`` holds radii (F1, F2) with
    F1 * ball ⊆ K ⊆ F2 * ball.
    """

    d: int
    kind: str
    volume: float
    surface: float
    diameter: float
    chord_cdf: Optional[tuple] = None
    sandwich: Optional[tuple] = None
    name: str = ""
    _cache: dict = field(default_factory=dict, repr=False, compare=False, hash=False)

    def __post_init__(self):
        if self.d < 2:
            raise ParameterError("body dimension must be >= 2")
        if self.kind not in ("unit-ball", "tabulated-convex"):
            raise ParameterError(f"unknown body kind {self.kind!r}")
        if min(self.volume, self.surface, self.diameter) <= 0:
            raise ParameterError("volume, surface and diameter must be positive")
        if self.chord_cdf is not None:
            v, F = (np.asarray(a, dtype=float) for a in self.chord_cdf)
            if v.ndim != 1 or v.shape != F.shape or v.size < 2:
                raise ParameterError("chord CDF needs matching 1-d knot arrays")
            if np.any(np.diff(v) <= 0):
                raise ParameterError("chord CDF knots must be strictly increasing")
            if np.any(np.diff(F) < 0):
                raise ParameterError("chord CDF must be nondecreasing")
            if abs(v[0]) > 1e-12 or abs(F[0]) > 1e-12:
                raise ParameterError("chord CDF must start at (0, 0)")
            if abs(v[-1] - self.diameter) > 1e-9 * self.diameter or abs(F[-1] - 1.0) > 1e-12:
                raise ParameterError("chord CDF must reach 1 at the diameter")
            object.__setattr__(self, "chord_cdf", (v, F))
        if self.sandwich is not None:
            s1, s2 = self.sandwich
            if not (0 < s1 <= s2):
                raise ParameterError("sandwich radii need 0 < F1 <= F2")

    @classmethod
    def unit_ball(cls, d: int) -> "BodySpec":
        v = np.linspace(0.0, 2.0, 2049)
        F = 1.0 - (1.0 - v * v / 4.0) ** ((d - 1) / 2)
        F[-1] = 1.0
        return cls(d=d, kind="unit-ball", volume=ball_volume(d), surface=sphere_area(d),
                   diameter=2.0, chord_cdf=(v, F), sandwich=(1.0, 1.0), name="ball")

    @classmethod
    def from_chord_table(cls, d, v, F, volume, surface, sandwich=None, name="tabulated"):
        v = np.asarray(v, dtype=float)
        return cls(d=d, kind="tabulated-convex", volume=volume, surface=surface,
                   diameter=float(v[-1]), chord_cdf=(v, np.asarray(F, dtype=float)),
                   sandwich=sandwich, name=name)

    @classmethod
    def from_chord_csv(cls, path, d, volume, surface, sandwich=None, name=None):
        """Load a chord-length CDF from a CSV file with header ``v,F``."""
        path = Path(path)
        with path.open(newline="") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames is None or [c.strip() for c in reader.fieldnames] != ["v", "F"]:
                raise ParameterError(f"{path}: expected header 'v,F'")
            rows = [(float(r["v"]), float(r["F"])) for r in reader]
        v, F = np.array(rows).T
        return cls.from_chord_table(d, v, F, volume, surface, sandwich, name or path.stem)

    def to_chord_csv(self, path):
        if self.chord_cdf is None:
            raise MissingChordCDFError(f"body {self.name!r} has no chord CDF")
        v, F = self.chord_cdf
        with Path(path).open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["v", "F"])
            for a, b in zip(v, F):
                w.writerow([repr(float(a)), repr(float(b))])

    @classmethod
    def cube(cls, d: int, n_chords: int = 1_000_000, n_knots: int = 1025, seed: int = 0) -> "BodySpec":
        """Unit cube [-1/2, 1/2]^d with a Monte Carlo chord-length table."""
        rng = np.random.default_rng(seed)
        lengths = sample_cube_chords(d, n_chords, rng)
        D = math.sqrt(d)
        v = np.linspace(0.0, D, n_knots)
        F = np.searchsorted(np.sort(lengths), v, side="right") / lengths.size
        F[0] = 0.0
        F[-1] = 1.0
        return cls(d=d, kind="tabulated-convex", volume=1.0, surface=2.0 * d, diameter=D,
                   chord_cdf=(v, F), sandwich=(0.5, D / 2), name=f"cube{d}")

    def contains(self, x: np.ndarray) -> np.ndarray:
        """Membership test for points of shape (..., d); only for the built-in shapes."""
        x = np.asarray(x, dtype=float)
        if self.kind == "unit-ball":
            return np.sum(x * x, axis=-1) <= 1.0
        if self.name.startswith("cube"):
            return np.all(np.abs(x) <= 0.5, axis=-1)
        raise ParameterError(f"no membership test for body {self.name!r}")

    @property
    def bounding_halfwidth(self) -> float:
        if self.kind == "unit-ball":
            return 1.0
        if self.name.startswith("cube"):
            return 0.5
        raise ParameterError(f"no bounding box for body {self.name!r}")

    # tabulated density pieces, cached per body
    def _table(self):
        if "table" in self._cache:
            return self._cache["table"]
        if self.chord_cdf is None:
            raise MissingChordCDFError(f"body {self.name!r} has no chord CDF")
        v, F = self.chord_cdf
        S = 1.0 - F
        # G(v) = int_0^v (1-F); exact for the piecewise-linear table
        G = np.concatenate([[0.0], np.cumsum(0.5 * (S[1:] + S[:-1]) * np.diff(v))])
        # N = int_0^D z^{d-1} (G(D)-G(z)) dz = int_0^D (1-F(v)) v^d / d dv
        x, w = gauss_legendre(max(self.d + 3, 4))
        a, b = v[:-1, None], v[1:, None]
        nodes = a + (b - a) * x
        Sn = np.interp(nodes, v, S)
        N = float(np.sum((b - a) * w * Sn * nodes ** self.d / self.d))
        # Crofton consistency: the mean chord fixes |S_{d-1}||K| = |S_{d-2}| U G(D)/(d-1)
        s_d1 = sphere_area(self.d)
        s_d2 = sphere_area(self.d - 1)
        c2 = s_d2 * self.surface / (self.d - 1)
        raw_const = s_d1 * self.volume
        tab = {"v": v, "S": S, "G": G, "N": N,
               "crofton_defect": abs(c2 * G[-1] - raw_const) / raw_const,
               "raw_mass": c2 * N / self.volume ** 2}
        self._cache["table"] = tab
        return tab

    @property
    def crofton_defect(self) -> float:
        """Relative mismatch between the table's mean chord and the one implied by |K| and U."""
        return self._table()["crofton_defect"]

    @property
    def raw_mass(self) -> float:
        """Total mass of the chord-based density before renormalisation."""
        return self._table()["raw_mass"]


def sample_cube_chords(d: int, n: int, rng: np.random.Generator, chunk: int = 200_000) -> np.ndarray:
    """Chord lengths of isotropic uniform random lines through [-1/2, 1/2]^d."""
    R = math.sqrt(d) / 2
    out = []
    got = 0
    while got < n:
        theta = rng.standard_normal((chunk, d))
        theta /= np.linalg.norm(theta, axis=1, keepdims=True)
        e = rng.standard_normal((chunk, d))
        e -= np.sum(e * theta, axis=1, keepdims=True) * theta
        e /= np.linalg.norm(e, axis=1, keepdims=True)
        r = R * rng.random(chunk) ** (1.0 / (d - 1))
        p = r[:, None] * e
        with np.errstate(divide="ignore", invalid="ignore"):
            t1 = (-0.5 - p) / theta
            t2 = (0.5 - p) / theta
        tlo = np.where(np.isnan(t1), -np.inf, np.minimum(t1, t2))
        thi = np.where(np.isnan(t2), np.inf, np.maximum(t1, t2))
        # a zero direction component leaves the slab unconstrained when the point is inside it
        par = theta == 0.0
        inside = np.abs(p) <= 0.5
        tlo = np.where(par, np.where(inside, -np.inf, np.inf), tlo)
        thi = np.where(par, np.where(inside, np.inf, -np.inf), thi)
        length = np.min(thi, axis=1) - np.max(tlo, axis=1)
        hit = length > 0
        out.append(length[hit])
        got += int(hit.sum())
    return np.concatenate(out)[:n]


# ---------------------------------------------------------------- densities

def _check_support(z, upper, what):
    z = np.asarray(z, dtype=float)
    tol = 1e-12 * max(upper, 1.0)
    if np.any(~np.isfinite(z)) or np.any(z < -tol) or np.any(z > upper + tol):
        raise DomainError(f"{what}: z outside support [0, {upper}]")
    return np.clip(z, 0.0, upper)


def ball_distance_density(d: int, scale: float, z):
    """Density of ||P1 - P2|| for uniform points in the ball of radius ``scale``."""
    if d < 2 or scale <= 0:
        raise DomainError("need d >= 2 and scale > 0")
    scalar = np.ndim(z) == 0
    z = _check_support(np.atleast_1d(z), 2.0 * scale, "ball_distance_density")
    mu = 1.0 - (z / (2.0 * scale)) ** 2
    val = d / scale ** d * z ** (d - 1) * _ibeta(mu, (d + 1) / 2, 0.5)
    return _as_out(val[0], True) if scalar else val


def convex_distance_density(body: BodySpec, scale: float, z):
    """Distance density for the scaled body ``scale * K``.

    Unit balls use the closed form.  Tabulated bodies use the chord-length
    representation z^{d-1} int_z^D (1 - F_K(v)) dv, normalised on the table.
    """
    if body.kind == "unit-ball":
        return ball_distance_density(body.d, scale, z)
    if scale <= 0:
        raise DomainError("scale must be positive")
    tab = body._table()
    scalar = np.ndim(z) == 0
    z = _check_support(np.atleast_1d(z), scale * body.diameter, "convex_distance_density")
    x = z / scale
    v, S, G = tab["v"], tab["S"], tab["G"]
    idx = np.clip(np.searchsorted(v, x, side="right") - 1, 0, v.size - 2)
    h = x - v[idx]
    slope = (S[idx + 1] - S[idx]) / (v[idx + 1] - v[idx])
    Gx = G[idx] + S[idx] * h + 0.5 * slope * h * h
    val = np.maximum(x ** (body.d - 1) * (G[-1] - Gx), 0.0) / tab["N"] / scale
    return _as_out(val[0], True) if scalar else val


def _cdf_grid(density, upper, n_panels=2000, order=8):
    edges = np.linspace(0.0, upper, n_panels + 1)
    x, w = gauss_legendre(order)
    a, b = edges[:-1, None], edges[1:, None]
    nodes = (a + (b - a) * x).ravel()
    vals = density(nodes).reshape(n_panels, order)
    mass = np.sum(vals * w, axis=1) * np.diff(edges)
    return edges, np.concatenate([[0.0], np.cumsum(mass)])


def distance_cdf(body: BodySpec, scale: float, z):
    """CDF of the distance between two uniform points of ``scale * K``."""
    key = ("cdf", float(scale))
    upper = scale * body.diameter
    if key not in body._cache:
        body._cache[key] = _cdf_grid(lambda t: convex_distance_density(body, scale, t), upper)
    edges, cum = body._cache[key]
    scalar = np.ndim(z) == 0
    val = np.interp(np.clip(np.atleast_1d(z), 0.0, upper), edges, cum)
    return _as_out(val[0], True) if scalar else val


def sphere_chord_density(d: int, z):
    """Density of the chord distance between two uniform points on the unit sphere in R^d."""
    if d < 2:
        raise DomainError("need d >= 2")
    scalar = np.ndim(z) == 0
    z = _check_support(np.atleast_1d(z), 2.0, "sphere_chord_density")
    const = math.exp(math.lgamma(d / 2) - math.lgamma((d - 1) / 2)) / math.sqrt(math.pi)
    with np.errstate(divide="ignore"):
        val = const * z ** (d - 2) * (1.0 - z * z / 4.0) ** ((d - 3) / 2)
    return _as_out(val[0], True) if scalar else val


def sphere_chord_cdf(d: int, z):
    """CDF of the sphere chord distance: z = 2 sin(phi/2) maps to a beta law of sin^2(phi/2)."""
    scalar = np.ndim(z) == 0
    z = _check_support(np.atleast_1d(z), 2.0, "sphere_chord_cdf")
    val = _ibeta((z / 2.0) ** 2, (d - 1) / 2, (d - 1) / 2)
    return _as_out(val[0], True) if scalar else val


def ball_moment_integral(d: int) -> float:
    """Closed form of int_0^2 u^{d-1} I_{1-(u/2)^2}((d+1)/2, 1/2) du."""
    if d < 2:
        raise DomainError("need d >= 2")
    p = (d + 1) / 2
    return 2.0 ** d * special.beta(p, p) / (d * special.beta(p, 0.5))


# ---------------------------------------------------------------- sandwich check

@dataclass
class SandwichReport:
    passed: bool
    c1: float
    c2: float
    worst_violation: float
    worst_z: Optional[float]
    message: str = ""


def lord_sandwich_check(body: BodySpec, scale: float, z_grid, c1=None, c2=None, tol=1e-9) -> SandwichReport:
    """Check C1 psi_{ball(S1)} <= psi_K <= C2 psi_{ball(S2)} on a grid.

    Unless given, C1 and C2 are fitted as the extreme ratios on the grid.  The
    upper bound fails wherever psi_K is positive beyond the outer ball's
    support, the lower one wherever psi_K vanishes inside the inner ball's.
    """
    if body.sandwich is None:
        raise ParameterError("body has no sandwich radii")
    s1, s2 = body.sandwich
    z = np.asarray(z_grid, dtype=float)
    z = z[(z > 0) & (z < scale * body.diameter)]
    psi = convex_distance_density(body, scale, z)
    in1 = z < 2 * scale * s1
    in2 = z < 2 * scale * s2
    b1 = np.zeros_like(z)
    b2 = np.zeros_like(z)
    b1[in1] = ball_distance_density(body.d, scale * s1, z[in1])
    b2[in2] = ball_distance_density(body.d, scale * s2, z[in2])
    pos1 = in1 & (b1 > 0)
    pos2 = in2 & (b2 > 0)
    fit1 = float(np.min(psi[pos1] / b1[pos1])) if pos1.any() else 0.0
    fit2 = float(np.max(psi[pos2] / b2[pos2])) if pos2.any() else 0.0
    c1 = fit1 if c1 is None else c1
    c2 = fit2 if c2 is None else c2
    lower = c1 * b1 - psi
    upper = psi - c2 * b2
    viol = np.maximum(lower, upper)
    worst = int(np.argmax(viol)) if z.size else 0
    wv = float(viol[worst]) if z.size else 0.0
    msgs = []
    if c1 <= 0:
        msgs.append("inner constant is not positive")
    if not (s1 <= body.diameter / 2 + 1e-12 <= s2 + 2e-12):
        msgs.append(f"radii ({s1}, {s2}) do not bracket half the diameter {body.diameter / 2:.6g}")
    if wv > tol:
        msgs.append(f"inequality violated by {wv:.3g} at z={z[worst]:.6g}")
    passed = not msgs
    return SandwichReport(passed, float(c1), float(c2), max(wv, 0.0),
                          float(z[worst]) if (wv > tol and z.size) else None, "; ".join(msgs))


# ---------------------------------------------------------------- Monte Carlo helpers

def uniform_ball_points(d: int, n: int, rng: np.random.Generator, radius: float = 1.0) -> np.ndarray:
    g = rng.standard_normal((n, d))
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    return radius * g * rng.random(n)[:, None] ** (1.0 / d)


def uniform_sphere_points(d: int, n: int, rng: np.random.Generator) -> np.ndarray:
    g = rng.standard_normal((n, d))
    return g / np.linalg.norm(g, axis=1, keepdims=True)


def uniform_body_points(body: BodySpec, n: int, rng: np.random.Generator, scale: float = 1.0) -> np.ndarray:
    if body.kind == "unit-ball":
        return uniform_ball_points(body.d, n, rng, scale)
    if body.name.startswith("cube"):
        return scale * (rng.random((n, body.d)) - 0.5)
    raise ParameterError(f"no sampler for body {body.name!r}")


def pair_distances(body: BodySpec, n: int, rng: np.random.Generator, scale: float = 1.0) -> np.ndarray:
    p = uniform_body_points(body, n, rng, scale)
    q = uniform_body_points(body, n, rng, scale)
    return np.linalg.norm(p - q, axis=1)


def ball_moment_quadrature(d: int) -> float:
    """Adaptive quadrature of the moment integral, for cross-checking the closed form."""
    return quad1(lambda u: u ** (d - 1) * float(_ibeta(np.array([1 - u * u / 4]), (d + 1) / 2, 0.5)[0]),
                 0.0, 2.0, epsabs=1e-13, epsrel=1e-13).value
