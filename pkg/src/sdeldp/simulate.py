"""Euler simulation of the small-noise SDE dX = b dt + sqrt(eps) sigma dB.

Noise streams are counter-based and fully keyed: replica ``i`` of root
seed ``s`` draws from ``Philox(key=(s, i))``, turning 53-bit uniforms into
Gaussians through the inverse normal CDF (``scipy.special.ndtri``).  The
transform is part of the reproducibility contract: identical
(root_seed, replica_index, n, m) always yield identical increments, on any
platform, regardless of how replicas are chunked or scheduled.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.special import ndtri

from . import backends
from .errors import DivergenceError, ValidationError
from .fields import BLOWUP_NORM
from .skeleton import SamplePath, common_nodes

__all__ = [
    "NoisePath",
    "ExperimentConfig",
    "sample_noise",
    "aggregate_noise",
    "euler_maruyama",
    "coupled_euler_gap",
    "sup_distance",
    "first_passage",
    "BatchSummary",
    "batch_summaries",
    "batch_coupled_gaps",
]


@dataclass(frozen=True)
class NoisePath:
    """Brownian increments on a uniform grid, with seed provenance."""

    grid: np.ndarray
    increments: np.ndarray
    root_seed: int
    replica_index: int

    @property
    def n(self):
        return self.increments.shape[0]

    @property
    def m(self):
        return self.increments.shape[1]


@dataclass(frozen=True)
class ExperimentConfig:
    """Shared knobs of a simulation experiment."""

    epsilon: float
    n: int
    replicas: int = 1
    root_seed: int = 0
    delta0: Optional[float] = None
    delta: Optional[float] = None
    R: Optional[float] = None
    x0: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.epsilon < 0:
            raise ValidationError(f"epsilon must be >= 0, got {self.epsilon}")
        if self.n < 1:
            raise ValidationError(f"n must be >= 1, got {self.n}")
        if self.replicas < 1:
            raise ValidationError(f"replicas must be >= 1, got {self.replicas}")
        for name in ("delta0", "delta", "R"):
            v = getattr(self, name)
            if v is not None and v <= 0:
                raise ValidationError(f"{name} must be positive, got {v}")
        if self.x0 is not None:
            object.__setattr__(self, "x0", np.atleast_1d(np.asarray(self.x0, dtype=float)))

    def start(self, field):
        if self.x0 is None:
            return np.zeros(field.d)
        if self.x0.shape != (field.d,):
            raise ValidationError(f"x0 shape {self.x0.shape} does not match d={field.d}")
        return self.x0


_TWO53 = float(2 ** 53)


def _uniforms(root_seed, replica_index, shape):
    bg = np.random.Philox(key=np.array([root_seed, replica_index], dtype=np.uint64))
    gen = np.random.Generator(bg)
    return (gen.integers(0, 2 ** 53, size=shape, dtype=np.uint64) + 0.5) / _TWO53


def sample_noise(n, m, root_seed, replica_index=0):
    """Gaussian increments for one replica; deterministic in all arguments."""
    if n < 1 or m < 1:
        raise ValidationError("noise dimensions must be >= 1")
    grid = np.linspace(0.0, 1.0, n + 1)
    dt = 1.0 / n
    z = ndtri(_uniforms(root_seed, replica_index, (n, m)))
    return NoisePath(grid=grid, increments=z * np.sqrt(dt),
                     root_seed=int(root_seed), replica_index=int(replica_index))


def _noise_block(n, m, root_seed, start, stop):
    """Stacked increments for replicas [start, stop); row i matches
    sample_noise(n, m, root_seed, start + i) exactly."""
    u = np.empty((stop - start, n, m))
    for i, rep in enumerate(range(start, stop)):
        u[i] = _uniforms(root_seed, rep, (n, m))
    return ndtri(u) * np.sqrt(1.0 / n)


def aggregate_noise(noise, factor):
    """Sum fine increments over blocks of ``factor``: the coarse-grid noise.

    Accumulation runs in ascending step order, matching the batch kernels
    bit for bit (vectorized reductions reorder partial sums).
    """
    if noise.n % factor != 0:
        raise ValidationError(f"factor {factor} does not divide n={noise.n}")
    view = noise.increments.reshape(noise.n // factor, factor, noise.m)
    inc = np.zeros((noise.n // factor, noise.m))
    for j in range(factor):
        inc += view[:, j, :]
    grid = noise.grid[::factor]
    return NoisePath(grid=grid, increments=inc,
                     root_seed=noise.root_seed, replica_index=noise.replica_index)


def euler_maruyama(field, cfg, noise, x0):
    """One Euler path: X_{k+1} = X_k + b(t_k, X_k) dt + sqrt(eps) sigma(t_k, X_k) dB_k."""
    if noise.n != cfg.n:
        raise ValidationError(f"noise grid ({noise.n} steps) does not match cfg.n={cfg.n}")
    if noise.m != field.m:
        raise ValidationError(f"noise dimension {noise.m} does not match field m={field.m}")
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    if x0.shape != (field.d,):
        raise ValidationError(f"x0 must have shape ({field.d},)")
    ts = noise.grid
    dts = np.diff(ts)
    se = np.sqrt(cfg.epsilon)
    xs = np.empty((cfg.n + 1, field.d))
    xs[0] = x0
    x = x0.copy()
    for k in range(cfg.n):
        x = (x + field.drift(ts[k], x) * dts[k]) + se * (field.diffusion(ts[k], x) @ noise.increments[k])
        if not np.all(np.isfinite(x)) or np.linalg.norm(x) > BLOWUP_NORM:
            raise DivergenceError(ts[k + 1], which=f"euler path ({field.label})")
        xs[k + 1] = x
    return SamplePath(ts, xs)


def coupled_euler_gap(field, cfg, n_fine, noise_fine, x0):
    """Sup distance at coarse nodes between the fine Euler path and the
    coarse path driven by the aggregated increments of the same noise."""
    if n_fine % cfg.n != 0:
        raise ValidationError(f"n_fine={n_fine} must be a multiple of cfg.n={cfg.n}")
    if noise_fine.n != n_fine:
        raise ValidationError("noise_fine must live on the fine grid")
    ratio = n_fine // cfg.n
    fine_cfg = ExperimentConfig(epsilon=cfg.epsilon, n=n_fine,
                                replicas=1, root_seed=cfg.root_seed)
    try:
        fine = euler_maruyama(field, fine_cfg, noise_fine, x0)
    except DivergenceError as e:
        raise DivergenceError(e.time, which=f"fine {e.which}") from None
    try:
        coarse = euler_maruyama(field, cfg, aggregate_noise(noise_fine, ratio), x0)
    except DivergenceError as e:
        raise DivergenceError(e.time, which=f"coarse {e.which}") from None
    diff = fine.values[::ratio] - coarse.values
    return float(np.max(np.linalg.norm(diff, axis=1)))


def sup_distance(a, b):
    """Max node distance between two paths over their shared grid nodes."""
    ia, ib = common_nodes(a.grid, b.grid)
    if ia.size == 0:
        raise ValidationError("paths share no grid nodes")
    return float(np.max(np.linalg.norm(a.values[ia] - b.values[ib], axis=1)))


def first_passage(path, level, kind="radius", reference=None):
    """First grid time at/after which the functional crosses ``level``.

    ``kind="radius"``: |x(t)| >= level.  ``kind="gap"``: |x(t) - y(t)| >=
    level against ``reference`` (shared nodes).  Returns None when the
    level is never reached; detection on the discrete grid is late-biased.
    """
    if level <= 0:
        raise ValidationError(f"level must be positive, got {level}")
    if kind == "radius":
        vals = np.linalg.norm(path.values, axis=1)
        grid = path.grid
    elif kind == "gap":
        if reference is None:
            raise ValidationError("gap passage needs a reference path")
        ia, ib = common_nodes(path.grid, reference.grid)
        if ia.size == 0:
            raise ValidationError("paths share no grid nodes")
        vals = np.linalg.norm(path.values[ia] - reference.values[ib], axis=1)
        grid = path.grid[ia]
    else:
        raise ValidationError(f"unknown passage kind {kind!r}")
    hit = np.nonzero(vals >= level)[0]
    return float(grid[hit[0]]) if hit.size else None


@dataclass
class BatchSummary:
    """Per-replica summaries of a batch simulation."""

    terminal: np.ndarray
    sup_norm: np.ndarray
    diverged: np.ndarray
    backend: str


def _chunk_size(n, m, replicas, budget_bytes=1 << 27):
    per = max(1, n * m * 8)
    return int(max(1, min(replicas, budget_bytes // per)))


def _run_chunks(replicas, chunk, worker_fn, workers=None):
    """Apply worker_fn(start, stop) over replica chunks; results are written
    into caller-owned arrays indexed by replica, so scheduling order is
    irrelevant."""
    spans = [(s, min(s + chunk, replicas)) for s in range(0, replicas, chunk)]
    w = backends.worker_count() if workers is None else workers
    if w <= 1 or len(spans) <= 1:
        for s, e in spans:
            worker_fn(s, e)
        return
    with ThreadPoolExecutor(max_workers=min(w, len(spans))) as pool:
        list(pool.map(lambda se: worker_fn(*se), spans))


def batch_summaries(field, cfg, x0=None, workers=None, backend=None):
    """Simulate cfg.replicas independent paths; return terminal states,
    running sup norms, and divergence flags (replica i is seeded by
    (cfg.root_seed, i) independently of chunking)."""
    x0 = cfg.start(field) if x0 is None else np.atleast_1d(np.asarray(x0, dtype=float))
    chosen = backends.resolve_backend(field, backend)
    M, n, m = cfg.replicas, cfg.n, field.m
    ts = np.linspace(0.0, 1.0, n + 1)
    dts = np.diff(ts)
    terminal = np.empty((M, field.d))
    sup_norm = np.empty(M)
    diverged = np.empty(M, dtype=bool)
    if chosen == "numba":
        from . import _kernels_numba
        drift, diff, params = backends.jit_kernels(field)

        def work(s, e):
            dW = _noise_block(n, m, cfg.root_seed, s, e)
            _kernels_numba.em_batch(drift, diff, params, x0, dW, ts, dts,
                                    np.sqrt(cfg.epsilon),
                                    terminal[s:e], sup_norm[s:e], diverged[s:e])
    else:
        from . import _kernels_numpy

        def work(s, e):
            dW = _noise_block(n, m, cfg.root_seed, s, e)
            _kernels_numpy.em_batch(field, cfg.epsilon, x0, dW, ts, dts,
                                    terminal[s:e], sup_norm[s:e], diverged[s:e])

    _run_chunks(M, _chunk_size(n, m, M), work, workers)
    return BatchSummary(terminal=terminal, sup_norm=sup_norm,
                        diverged=diverged, backend=chosen)


def batch_coupled_gaps(field, cfg, ns, n_fine, x0=None, workers=None, backend=None):
    """Coupled coarse/fine gap per replica for each coarse step count in
    ``ns``, reusing the same fine noise streams (common random numbers)."""
    for n in ns:
        if n_fine % n != 0:
            raise ValidationError(f"n={n} must divide n_fine={n_fine}")
    x0 = cfg.start(field) if x0 is None else np.atleast_1d(np.asarray(x0, dtype=float))
    chosen = backends.resolve_backend(field, backend)
    M, m = cfg.replicas, field.m
    tf = np.linspace(0.0, 1.0, n_fine + 1)
    dtf = np.diff(tf)
    gaps = {n: np.empty(M) for n in ns}
    diverged = {n: np.empty(M, dtype=bool) for n in ns}
    coarse_grids = {n: (np.linspace(0.0, 1.0, n + 1)) for n in ns}
    if chosen == "numba":
        from . import _kernels_numba
        drift, diff, params = backends.jit_kernels(field)

        def work(s, e):
            dW = _noise_block(n_fine, m, cfg.root_seed, s, e)
            for n in ns:
                tc = coarse_grids[n]
                _kernels_numba.coupled_gap_batch(
                    drift, diff, params, x0, dW, tf, dtf, tc, np.diff(tc),
                    n_fine // n, np.sqrt(cfg.epsilon),
                    gaps[n][s:e], diverged[n][s:e])
    else:
        from . import _kernels_numpy

        def work(s, e):
            dW = _noise_block(n_fine, m, cfg.root_seed, s, e)
            for n in ns:
                tc = coarse_grids[n]
                _kernels_numpy.coupled_gap_batch(
                    field, cfg.epsilon, x0, dW, tf, dtf, tc, np.diff(tc),
                    n_fine // n, gaps[n][s:e], diverged[n][s:e])

    _run_chunks(M, _chunk_size(n_fine, m, M), work, workers)
    return gaps, diverged, chosen
