"""Hermite polynomials and chaos coefficients of subordinating functions.

Coefficients follow J_n = E[G(Z) H_n(Z)] for a standard normal Z and the
probabilists' polynomials H_n, so that G = sum_n J_n/n! H_n.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from ._quad import gauss_legendre
from .errors import ParameterError, RankError
from .geomprob import std_normal

DEFAULT_N = 30
DEFAULT_ORDER = 128
RANK_TOL = 1e-10
_TAIL = 40.0


def hermite(n: int, z):
    """Probabilists' Hermite polynomial H_n(z) by the three-term recurrence."""
    if n < 0:
        raise ParameterError("Hermite degree must be >= 0")
    z = np.asarray(z, dtype=float)
    h_prev = np.ones_like(z)
    if n == 0:
        return float(h_prev) if z.ndim == 0 else h_prev
    h = z.copy()
    for k in range(1, n):
        h_prev, h = h, z * h - k * h_prev
    return float(h) if z.ndim == 0 else h


def hermite_table(N: int, z) -> np.ndarray:
    """Array H[n, ...] = H_n(z) for n = 0..N."""
    z = np.asarray(z, dtype=float)
    out = np.empty((N + 1,) + z.shape)
    out[0] = 1.0
    if N >= 1:
        out[1] = z
    for k in range(1, N):
        out[k + 1] = z * out[k] - k * out[k - 1]
    return out


@dataclass
class HermiteCoeffs:
    coeffs: np.ndarray
    rank: Optional[int]
    source: str
    converged: bool = True
    max_change: float = 0.0

    @property
    def N(self) -> int:
        return len(self.coeffs) - 1

    def __getitem__(self, n):
        return self.coeffs[n]

    def parseval_partial_sums(self) -> np.ndarray:
        """Partial sums of J_n^2/n!, n = 0..N (the L2 norm of the truncation)."""
        return np.cumsum(normalized(self.coeffs) ** 2)

    def evaluate(self, z):
        """Truncated expansion sum_n J_n/n! H_n(z)."""
        H = hermite_table(self.N, z)
        w = self.coeffs / np.array([math.factorial(k) for k in range(self.N + 1)], dtype=float)
        return np.tensordot(w, H, axes=1)

    def to_csv(self, path):
        with Path(path).open("w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["n", "J_n"])
            for n, c in enumerate(self.coeffs):
                wr.writerow([n, repr(float(c))])

    @classmethod
    def from_csv(cls, path, tol: float = RANK_TOL) -> "HermiteCoeffs":
        with Path(path).open(newline="") as fh:
            rd = csv.DictReader(fh)
            if rd.fieldnames is None or [c.strip() for c in rd.fieldnames] != ["n", "J_n"]:
                raise ParameterError(f"{path}: expected header 'n,J_n'")
            rows = sorted((int(r["n"]), float(r["J_n"])) for r in rd)
        if [r[0] for r in rows] != list(range(len(rows))):
            raise ParameterError(f"{path}: coefficient indices must run 0..N")
        hc = cls(np.array([r[1] for r in rows]), None, "csv")
        try:
            hc.rank = hermite_rank(hc, tol)
        except RankError:
            hc.rank = None
        return hc


def normalized(coeffs) -> np.ndarray:
    """J_n / sqrt(n!), the L2 size of each chaos component."""
    c = np.asarray(coeffs, dtype=float)
    lf = np.array([0.5 * math.lgamma(k + 1) for k in range(c.size)])
    with np.errstate(divide="ignore"):
        return np.sign(c) * np.exp(np.log(np.abs(c)) - lf)


def _gh_rule(order: int):
    x, w = np.polynomial.hermite_e.hermegauss(order)
    return x, w / math.sqrt(2.0 * math.pi)


def _panel_rule(order: int, breakpoints: Sequence[float]):
    # composite Gauss-Legendre against phi on [-40, 40], split at the jumps of G
    bps = sorted(b for b in breakpoints if -_TAIL < b < _TAIL)
    knots = [-_TAIL] + bps + [_TAIL]
    edges = []
    for a, b in zip(knots[:-1], knots[1:]):
        k = max(1, int(math.ceil(b - a)))
        edges.extend(np.linspace(a, b, k + 1)[:-1])
    edges.append(_TAIL)
    edges = np.array(edges)
    gx, gw = gauss_legendre(max(order // 4, 16))
    a, b = edges[:-1, None], edges[1:, None]
    x = (a + (b - a) * gx).ravel()
    w = ((b - a) * gw).ravel() * std_normal(x)[0]
    return x, w


def _coeffs_with(G, N, x, w):
    g = np.asarray(G(x), dtype=float)
    if g.shape != x.shape:
        g = np.array([G(v) for v in x], dtype=float)
    return hermite_table(N, x) @ (w * g)


def chaos_coeffs(G: Callable, N: int = DEFAULT_N, quad_order: int = DEFAULT_ORDER,
                 breakpoints: Optional[Sequence[float]] = None, tol: float = RANK_TOL) -> HermiteCoeffs:
    """Chaos coefficients J_0..J_N of G by quadrature against the Gaussian weight.

    Smooth G uses Gauss-Hermite of order ``quad_order``.  If G jumps, pass the
    jump locations as ``breakpoints`` and a composite Gauss-Legendre rule is
    used instead.  Convergence is checked by doubling the order.
    """
    if N < 1:
        raise ParameterError("truncation N must be >= 1")
    rule = _gh_rule if breakpoints is None else (lambda o: _panel_rule(o, breakpoints))
    c1 = _coeffs_with(G, N, *rule(quad_order))
    c2 = _coeffs_with(G, N, *rule(2 * quad_order))
    # compare on the sqrt(n!) scale; raw J_n grow factorially with n
    change = float(np.max(np.abs(normalized(c2) - normalized(c1))))
    hc = HermiteCoeffs(c2, None, "quadrature", converged=change <= 1e-8, max_change=change)
    try:
        hc.rank = hermite_rank(hc, tol)
    except RankError:
        hc.rank = None
    return hc


def indicator_coeffs(u: float, N: int = DEFAULT_N) -> HermiteCoeffs:
    """Closed-form coefficients of 1{z >= u}: J_0 = 1 - Phi(u), J_q = phi(u) H_{q-1}(u)."""
    if N < 1:
        raise ParameterError("truncation N must be >= 1")
    dens, cdf = std_normal(u)
    out = np.empty(N + 1)
    out[0] = 1.0 - cdf
    if math.isinf(u):
        out[1:] = 0.0
    else:
        out[1:] = dens * hermite_table(N - 1, np.array(u))
    return HermiteCoeffs(out, 1, f"closed-form-indicator({u})")


def hermite_rank(coeffs: HermiteCoeffs, tol: float = RANK_TOL) -> int:
    """Smallest n >= 1 whose normalised coefficient |J_n|/sqrt(n!) exceeds ``tol`` times the largest one."""
    c = np.abs(normalized(coeffs.coeffs))
    if c.size < 2:
        raise RankError("need at least J_0 and J_1")
    scale = float(np.max(c))
    if scale == 0:
        raise RankError("all coefficients vanish")
    above = np.nonzero(c[1:] > tol * scale)[0]
    if above.size == 0:
        raise RankError(f"no coefficient J_1..J_{c.size - 1} exceeds the tolerance; G is constant to truncation")
    return int(above[0] + 1)
