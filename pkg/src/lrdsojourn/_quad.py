"""Quadrature helpers.

Scalar one-dimensional integrals go through :func:`scipy.integrate.quad`;
two-dimensional integrals with vectorised integrands go through
:func:`scipy.integrate.cubature`.  Both report non-convergence through a flag
instead of raising.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import integrate

from .errors import QuadratureWarning

ABS_TOL = 1e-8


@dataclass(frozen=True)
class QuadResult:
    value: float
    error: float
    converged: bool


def quad1(f, a, b, epsabs=ABS_TOL, epsrel=1e-10, limit=500, **kwargs) -> QuadResult:
    """Adaptive 1-D quadrature; subdivision-cap hits are flagged, not raised."""
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", integrate.IntegrationWarning)
        value, err = integrate.quad(f, a, b, epsabs=epsabs, epsrel=epsrel, limit=limit, **kwargs)
    converged = not any(issubclass(w.category, integrate.IntegrationWarning) for w in caught)
    if not converged:
        warnings.warn(f"quad on [{a}, {b}] did not converge (err={err:.3g})", QuadratureWarning, stacklevel=2)
    return QuadResult(float(value), float(err), converged)


def cube2(f, lower, upper, rtol=1e-9, atol=0.0, max_subdivisions=20000, points=None) -> QuadResult:
    """Adaptive 2-D cubature of a vectorised integrand ``f(x)`` with ``x.shape == (n, 2)``."""
    kwargs = {}
    if points is not None:
        kwargs["points"] = points
    res = integrate.cubature(f, lower, upper, rtol=rtol, atol=atol,
                             max_subdivisions=max_subdivisions, **kwargs)
    converged = res.status == "converged"
    if not converged:
        warnings.warn(f"cubature did not converge (err={float(res.error):.3g})", QuadratureWarning, stacklevel=2)
    return QuadResult(float(res.estimate), float(res.error), converged)


@lru_cache(maxsize=32)
def gauss_legendre(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes and weights on [0, 1]."""
    x, w = np.polynomial.legendre.leggauss(n)
    x = 0.5 * (x + 1.0)
    w = 0.5 * w
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w
