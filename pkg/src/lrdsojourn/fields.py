"""Gaussian field samplers on space-time grids.

Two generators are provided.  ``simulate_grid_exact`` factorises the full
covariance matrix of the masked cells (or the two Kronecker factors for a
separable model).  ``simulate_grid_fast`` embeds the stationary covariance of
the whole bounding box in a periodic grid and synthesises by FFT.

Randomness comes from a Philox stream keyed by (master seed, T index,
replicate index), so every replicate can be regenerated on its own and the
output does not depend on how replicates are scheduled.
"""

from __future__ import annotations

import csv
import json
import math
import struct
from collections import OrderedDict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import linalg

from .covariance import CovarianceModel, ExponentialBaseline, Separable, model_to_dict
from .errors import (EmbeddingDefectError, NotPSDError, ParameterError, PreconditionError,
                     SizeCapError)
from .geomprob import BodySpec

EXACT_CAP = 4096
DEFECT_BOUND = 1e-3
MAGIC = b"LRDF"


def replicate_rng(seed: int, rep: int, t_index: int = 0) -> np.random.Generator:
    """Counter-based stream for replicate ``rep`` of horizon number ``t_index``."""
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(t_index), int(rep)))
    return np.random.Generator(np.random.Philox(ss))


# ---------------------------------------------------------------- grids

@dataclass(frozen=True)
class GridSpec:
    """Cell-centred lattice over [0, T] x (bounding box of T^gamma K).

    Spatial cells have side h = 2 T^gamma r / nx with r the body's bounding
    half-width; a cell belongs to the window when its centre lies in T^gamma K.
    """

    d: int
    T: float
    gamma: float
    nx: int
    nt: int
    body: BodySpec = field(compare=False)

    def __post_init__(self):
        if self.nx < 2 or self.nt < 2:
            raise ParameterError("need nx, nt >= 2")
        if self.body.d != self.d:
            raise ParameterError("body dimension does not match grid dimension")
        if self.T <= 0:
            raise ParameterError("T must be positive")
        if self.mask.sum() == 0:
            raise ParameterError("body mask is empty")

    @property
    def scale(self) -> float:
        return self.T ** self.gamma

    @property
    def halfwidth(self) -> float:
        return self.scale * self.body.bounding_halfwidth

    @property
    def h(self) -> float:
        return 2.0 * self.halfwidth / self.nx

    @property
    def dt(self) -> float:
        return self.T / self.nt

    @property
    def cell_volume(self) -> float:
        return self.h ** self.d * self.dt

    @property
    def axis(self) -> np.ndarray:
        return -self.halfwidth + (np.arange(self.nx) + 0.5) * self.h

    @property
    def times(self) -> np.ndarray:
        return (np.arange(self.nt) + 0.5) * self.dt

    @cached_property
    def full_index(self) -> np.ndarray:
        grids = np.meshgrid(*([np.arange(self.nx)] * self.d), indexing="ij")
        return np.stack([g.ravel() for g in grids], axis=1)

    @cached_property
    def mask(self) -> np.ndarray:
        pts = self.axis[self.full_index]
        return self.body.contains(pts / self.scale)

    @cached_property
    def index(self) -> np.ndarray:
        """Integer lattice indices of the masked cells, shape (n_mask, d)."""
        return self.full_index[self.mask]

    @cached_property
    def centers(self) -> np.ndarray:
        return self.axis[self.index]

    @cached_property
    def n_mask(self) -> int:
        return int(self.mask.sum())

    @property
    def spatial_measure(self) -> float:
        return self.n_mask * self.h ** self.d

    @property
    def measure(self) -> float:
        """Space-time measure of the masked window."""
        return self.spatial_measure * self.T

    @property
    def discretization_bias(self) -> float:
        exact = self.body.volume * self.scale ** self.d
        return (self.spatial_measure - exact) / exact

    def key(self) -> tuple:
        return (self.d, float(self.T), float(self.gamma), self.nx, self.nt, self.body.name, self.body.kind)

    def to_dict(self) -> dict:
        return {"d": self.d, "T": self.T, "gamma": self.gamma, "nx": self.nx, "nt": self.nt,
                "body": self.body.name, "h": self.h, "dt": self.dt, "n_mask": self.n_mask}

    @classmethod
    def with_spacing(cls, d, T, gamma, body, h, dt):
        """Grid whose cell sizes are as close as possible to (h, dt)."""
        nx = max(2, int(round(2.0 * T ** gamma * body.bounding_halfwidth / h)))
        nt = max(2, int(round(T / dt)))
        return cls(d, T, gamma, nx, nt, body)


@dataclass
class GridField:
    grid: GridSpec
    values: np.ndarray  # shape (nt, n_mask)
    model: CovarianceModel
    seed: int
    generator: str
    embedding_defect: float = 0.0
    replicate: int = 0

    def header(self) -> dict:
        return {"dims": list(self.values.shape), "dtype": "<f8", "seed": int(self.seed),
                "replicate": int(self.replicate), "generator": self.generator,
                "embedding_defect": self.embedding_defect, "grid": self.grid.to_dict(),
                "model": model_to_dict(self.model)}


# ---------------------------------------------------------------- exact sampler

_FACTOR_CACHE: "OrderedDict[tuple, tuple]" = OrderedDict()
_CACHE_SIZE = 8


def _cholesky_jitter(K: np.ndarray, what: str):
    jitter = 0.0
    scale = float(np.max(np.diag(K))) if K.size else 1.0
    while True:
        try:
            L = linalg.cholesky(K + jitter * scale * np.eye(K.shape[0]), lower=True, check_finite=False)
            return L, jitter
        except linalg.LinAlgError:
            jitter = 1e-12 if jitter == 0.0 else jitter * 10.0
            if jitter > 1e-6 * (1 + 1e-9):
                raise NotPSDError(f"covariance of {what} is not positive semidefinite up to jitter 1e-6")


def _exact_factor(model: CovarianceModel, grid: GridSpec, cap: int):
    key = (model, grid.key(), cap)
    if key in _FACTOR_CACHE:
        _FACTOR_CACHE.move_to_end(key)
        return _FACTOR_CACHE[key]
    X = grid.centers
    t = grid.times
    desc = f"{model.family} model {model_to_dict(model)['params']}"
    if isinstance(model, (Separable, ExponentialBaseline)):
        # product covariance: factor space and time separately (Kronecker structure)
        if max(len(X), len(t)) > cap:
            raise SizeCapError(f"separable factors of size {len(X)}, {len(t)} exceed cap {cap}")
        Ds = linalg.norm(X[:, None, :] - X[None, :, :], axis=-1)
        Ls, _ = _cholesky_jitter(model.variance * model.spatial(Ds), desc)
        Lt, _ = _cholesky_jitter(model.temporal(np.abs(t[:, None] - t[None, :])), desc)
        fac = ("kron", Ls, Lt)
    else:
        n = len(X) * len(t)
        if n > cap:
            raise SizeCapError(f"{n} space-time points exceed the exact-sampler cap {cap}")
        P = np.concatenate([np.repeat(t, len(X))[:, None], np.tile(X, (len(t), 1))], axis=1)
        Ds = linalg.norm(P[:, None, 1:] - P[None, :, 1:], axis=-1)
        Dt = np.abs(P[:, None, 0] - P[None, :, 0])
        L, _ = _cholesky_jitter(model(Ds, Dt), desc)
        fac = ("dense", L)
    _FACTOR_CACHE[key] = fac
    if len(_FACTOR_CACHE) > _CACHE_SIZE:
        _FACTOR_CACHE.popitem(last=False)
    return fac


def _exact_draw(fac, grid: GridSpec, rng: np.random.Generator) -> np.ndarray:
    nt, nm = grid.nt, grid.n_mask
    if fac[0] == "kron":
        _, Ls, Lt = fac
        xi = rng.standard_normal((nt, nm))
        return Lt @ xi @ Ls.T
    L = fac[1]
    return (L @ rng.standard_normal(nt * nm)).reshape(nt, nm)


def simulate_grid_exact(model: CovarianceModel, grid: GridSpec, seed: int, rep: int = 0,
                        t_index: int = 0, cap: int = EXACT_CAP) -> GridField:
    """One exact sample of the field on the masked grid cells."""
    fac = _exact_factor(model, grid, cap)
    vals = _exact_draw(fac, grid, replicate_rng(seed, rep, t_index))
    return GridField(grid, vals, model, seed, "exact", 0.0, rep)


# ---------------------------------------------------------------- circulant embedding

_EMBED_CACHE: "OrderedDict[tuple, tuple]" = OrderedDict()


def _periodic_lags(n: int, step: float) -> np.ndarray:
    j = np.arange(n)
    return np.minimum(j, n - j) * step


def circulant_spectrum(model: CovarianceModel, grid: GridSpec, pad: int = 2):
    """Eigenvalues of the periodic embedding and the clipped-mass defect."""
    ms = pad * grid.nx
    mt = pad * grid.nt
    axes = [_periodic_lags(ms, grid.h)] * grid.d
    r2 = np.zeros([ms] * grid.d)
    for k, a in enumerate(axes):
        shape = [1] * grid.d
        shape[k] = ms
        r2 = r2 + a.reshape(shape) ** 2
    tl = _periodic_lags(mt, grid.dt)
    c = model(np.sqrt(r2)[..., None], tl.reshape([1] * grid.d + [mt]))
    lam = np.fft.fftn(c).real
    neg = lam < 0
    total = float(np.sum(np.abs(lam)))
    defect = float(np.sum(np.abs(lam[neg]))) / total if total > 0 else 0.0
    return np.where(neg, 0.0, lam), defect


def _embedding(model, grid, bound, max_pad):
    key = (model, grid.key(), bound, max_pad)
    if key in _EMBED_CACHE:
        _EMBED_CACHE.move_to_end(key)
        return _EMBED_CACHE[key]
    pad = 2
    while True:
        lam, defect = circulant_spectrum(model, grid, pad)
        if defect <= bound:
            break
        if pad * 2 > max_pad:
            raise EmbeddingDefectError(
                f"embedding defect {defect:.3g} exceeds {bound:g} at padding {pad}; enlarge the grid "
                f"or refine the spacing")
        pad *= 2
    sq = np.sqrt(lam / lam.size)
    out = (sq, defect, pad)
    _EMBED_CACHE[key] = out
    if len(_EMBED_CACHE) > _CACHE_SIZE:
        _EMBED_CACHE.popitem(last=False)
    return out


def _fast_draw(emb, grid: GridSpec, rng: np.random.Generator) -> np.ndarray:
    sq = emb[0]
    xi = rng.standard_normal(sq.shape) + 1j * rng.standard_normal(sq.shape)
    y = np.fft.fftn(sq * xi).real
    box = y[tuple([slice(0, grid.nx)] * grid.d) + (slice(0, grid.nt),)]
    box = box.reshape(-1, grid.nt)
    return box[grid.mask].T.copy()


def simulate_grid_fast(model: CovarianceModel, grid: GridSpec, seed: int, rep: int = 0, t_index: int = 0,
                       defect_bound: float = DEFECT_BOUND, max_pad: int = 16) -> GridField:
    """One circulant-embedding sample; the spectrum is clipped at zero and the clipped mass recorded."""
    emb = _embedding(model, grid, defect_bound, max_pad)
    vals = _fast_draw(emb, grid, replicate_rng(seed, rep, t_index))
    return GridField(grid, vals, model, seed, "circulant", emb[1], rep)


# ---------------------------------------------------------------- replicate farms

def replicate_stats(model: CovarianceModel, grid: GridSpec, seed: int, R: int,
                    stat: Callable[[np.ndarray], np.ndarray], method: str = "exact", t_index: int = 0,
                    threads: int = 1, chunk: int = 32, **kwargs) -> np.ndarray:
    """Apply ``stat`` to R independent samples; row r depends only on (seed, t_index, r)."""
    if method == "exact":
        fac = _exact_factor(model, grid, kwargs.get("cap", EXACT_CAP))
        draw = lambda rng: _exact_draw(fac, grid, rng)  # noqa: E731
    elif method == "fast":
        emb = _embedding(model, grid, kwargs.get("defect_bound", DEFECT_BOUND), kwargs.get("max_pad", 16))
        draw = lambda rng: _fast_draw(emb, grid, rng)  # noqa: E731
    else:
        raise ParameterError(f"unknown sampler {method!r}")

    def run(lo):
        return [np.atleast_1d(np.asarray(stat(draw(replicate_rng(seed, r, t_index))), dtype=float))
                for r in range(lo, min(lo + chunk, R))]

    starts = list(range(0, R, chunk))
    if threads <= 1:
        parts = [run(s) for s in starts]
    else:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            parts = list(ex.map(run, starts))
    rows = [r for p in parts for r in p]
    return np.array(rows) if rows else np.empty((0, 0))


# ---------------------------------------------------------------- goodness check

@dataclass
class CovCheckReport:
    lags: list
    empirical: list
    theoretical: list
    studentized: list
    max_deviation: float
    replicates: int


DEFAULT_LAGS = ((0, 0), (1, 0), (0, 1), (1, 1), (2, 0), (0, 2))


def _lag_pairs(grid: GridSpec, ds: int):
    idx = grid.index
    lookup = {tuple(v): i for i, v in enumerate(idx)}
    a, b = [], []
    for i, v in enumerate(idx):
        w = list(v)
        w[0] += ds
        j = lookup.get(tuple(w))
        if j is not None:
            a.append(i)
            b.append(j)
    return np.array(a, dtype=int), np.array(b, dtype=int)


def empirical_cov_check(fields: Sequence[GridField], model: CovarianceModel,
                        lags: Sequence[tuple] = DEFAULT_LAGS, min_replicates: int = 100) -> CovCheckReport:
    """Studentised comparison of lag-averaged empirical covariances with the model.

    For each lag (spatial steps along the first axis, time steps) every
    replicate contributes the average product over all cell pairs at that
    lag; the mean over replicates is compared with C using the replicate
    standard error.
    """
    R = len(fields)
    if R < min_replicates:
        raise PreconditionError(f"need at least {min_replicates} replicates, got {R}")
    grid = fields[0].grid
    if any(f.grid.key() != grid.key() for f in fields):
        raise PreconditionError("replicates must share a grid")
    V = np.stack([f.values for f in fields])
    emp, theo, zs = [], [], []
    for ds, dtk in lags:
        a, b = _lag_pairs(grid, ds)
        if a.size == 0 or dtk >= grid.nt:
            raise ParameterError(f"lag ({ds}, {dtk}) has no pairs on this grid")
        prod = V[:, : grid.nt - dtk, a] * V[:, dtk:, b]
        per_rep = prod.reshape(R, -1).mean(axis=1)
        mu = float(per_rep.mean())
        se = float(per_rep.std(ddof=1) / math.sqrt(R))
        c = float(model(ds * grid.h, dtk * grid.dt))
        emp.append(mu)
        theo.append(c)
        zs.append((mu - c) / se if se > 0 else (0.0 if mu == c else math.inf))
    return CovCheckReport([tuple(x) for x in lags], emp, theo, zs, float(np.max(np.abs(zs))), R)


# ---------------------------------------------------------------- export

def write_field_binary(fld, path):
    """Flat binary: b'LRDF', uint32 header length, JSON header, little-endian float64 values."""
    head = json.dumps(fld.header(), sort_keys=True).encode()
    path = Path(path)
    try:
        with path.open("wb") as fh:
            fh.write(MAGIC)
            fh.write(struct.pack("<I", len(head)))
            fh.write(head)
            fh.write(np.ascontiguousarray(fld.values, dtype="<f8").tobytes())
    except OSError as exc:
        raise OSError(f"cannot write field to {path}: {exc}") from exc


def read_field_binary(path):
    data = Path(path).read_bytes()
    if data[:4] != MAGIC:
        raise ParameterError(f"{path}: not a field file")
    (n,) = struct.unpack("<I", data[4:8])
    head = json.loads(data[8:8 + n].decode())
    vals = np.frombuffer(data[8 + n:], dtype="<f8").reshape(head["dims"])
    return head, vals


def write_field_csv(fld: GridField, path, max_rows: int = 200_000):
    grid = fld.grid
    nt, nm = fld.values.shape
    if nt * nm > max_rows:
        raise SizeCapError(f"{nt * nm} rows exceed the CSV limit {max_rows}; use the binary format")
    X = grid.centers
    cols = ["t"] + [f"x{k + 1}" for k in range(grid.d)] + ["value"]
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(cols)
        for k, t in enumerate(grid.times):
            for i in range(nm):
                w.writerow([repr(float(t))] + [repr(float(x)) for x in X[i]] + [repr(float(fld.values[k, i]))])
