"""Controlled skeleton ODE: x' = b(t,x) + sigma(t,x) u(t) with u = l'.

Controls are piecewise linear (so their slopes are piecewise constant and
the energy integral of |l'|^2 is a finite sum, evaluated exactly).  Two
integrators are provided: the plain explicit Euler flow on a refined grid,
and the frozen-coefficient Euler polygon that re-evaluates the
coefficients only at the nodes of a coarse uniform grid.  The latter is
the zero-noise twin of the stochastic Euler scheme and matches it
bit-for-bit at eps = 0.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DivergenceError, ValidationError
from .fields import BLOWUP_NORM

__all__ = [
    "ControlPath",
    "SamplePath",
    "energy",
    "integrate_skeleton",
    "integrate_skeleton_euler",
    "skeleton_gap",
    "common_nodes",
]

NODE_MATCH_TOL = 1e-9


@dataclass(frozen=True)
class ControlPath:
    """Piecewise-linear control l on [0,1] with l(0) = 0, values in R^m."""

    grid: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        grid = np.asarray(self.grid, dtype=float)
        values = np.atleast_2d(np.asarray(self.values, dtype=float).T).T
        if values.ndim == 1:
            values = values[:, None]
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "values", values)
        if grid.ndim != 1 or grid.shape[0] < 2:
            raise ValidationError("control grid needs at least two nodes")
        if abs(grid[0]) > 0 or abs(grid[-1] - 1.0) > 1e-12:
            raise ValidationError("control grid must cover exactly [0, 1]")
        if np.any(np.diff(grid) <= 0):
            raise ValidationError("control grid must be strictly increasing")
        if values.shape[0] != grid.shape[0]:
            raise ValidationError("control values must match the grid length")
        if np.any(values[0] != 0.0):
            raise ValidationError("controls start at l(0) = 0")
        if not np.all(np.isfinite(values)):
            raise ValidationError("control values must be finite")

    @property
    def m(self):
        return self.values.shape[1]

    @property
    def slopes(self):
        """Constant slope l' on each grid interval, shape (N, m)."""
        return np.diff(self.values, axis=0) / np.diff(self.grid)[:, None]

    def at(self, t):
        """Piecewise-linear evaluation (vectorized in t)."""
        t = np.asarray(t, dtype=float)
        out = np.empty(t.shape + (self.m,))
        for j in range(self.m):
            out[..., j] = np.interp(t, self.grid, self.values[:, j])
        return out

    @staticmethod
    def zero(m=1, nodes=2):
        grid = np.linspace(0.0, 1.0, nodes)
        return ControlPath(grid, np.zeros((nodes, m)))

    @staticmethod
    def linear(v, nodes=2):
        """l(t) = t * v."""
        v = np.atleast_1d(np.asarray(v, dtype=float))
        grid = np.linspace(0.0, 1.0, nodes)
        return ControlPath(grid, grid[:, None] * v[None, :])

    @staticmethod
    def from_slopes(grid, slopes):
        slopes = np.atleast_2d(np.asarray(slopes, dtype=float).T).T
        grid = np.asarray(grid, dtype=float)
        vals = np.vstack([np.zeros((1, slopes.shape[1])),
                          np.cumsum(slopes * np.diff(grid)[:, None], axis=0)])
        return ControlPath(grid, vals)


@dataclass(frozen=True)
class SamplePath:
    """A trajectory x(t_k) in R^d on a strictly increasing grid in [0,1]."""

    grid: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        grid = np.asarray(self.grid, dtype=float)
        values = np.asarray(self.values, dtype=float)
        if values.ndim == 1:
            values = values[:, None]
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "values", values)
        if np.any(np.diff(grid) <= 0):
            raise ValidationError("sample-path grid must be strictly increasing")
        if values.shape[0] != grid.shape[0]:
            raise ValidationError("sample-path values must match the grid length")
        if not np.all(np.isfinite(values)):
            raise ValidationError("sample-path values must be finite")

    @property
    def d(self):
        return self.values.shape[1]

    @property
    def start(self):
        return self.values[0]

    def sup_norm(self):
        return float(np.max(np.linalg.norm(self.values, axis=1)))


def energy(l):
    """Exact energy of the piecewise-linear control: sum |dl|^2 / dt."""
    dl = np.diff(l.values, axis=0)
    dt = np.diff(l.grid)
    return float(np.sum(np.sum(dl * dl, axis=1) / dt))


def _blown(x):
    return not np.all(np.isfinite(x)) or float(np.linalg.norm(x)) > BLOWUP_NORM


def integrate_skeleton(field, l, substeps, x0):
    """Explicit Euler flow of the controlled ODE on a refinement of l's grid.

    Each control interval is split into ``substeps`` uniform pieces and the
    coefficients are re-evaluated at every refined node.
    """
    if substeps < 1:
        raise ValidationError("substeps must be >= 1")
    if field.m != l.m:
        raise ValidationError(f"control dimension {l.m} does not match field m={field.m}")
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    if x0.shape != (field.d,):
        raise ValidationError(f"x0 must have shape ({field.d},)")
    slopes = l.slopes
    n_int = l.grid.shape[0] - 1
    total = n_int * substeps
    ts = np.empty(total + 1)
    xs = np.empty((total + 1, field.d))
    ts[0] = 0.0
    xs[0] = x0
    x = x0.copy()
    pos = 0
    for k in range(n_int):
        u = slopes[k]
        a, b = l.grid[k], l.grid[k + 1]
        sub = np.linspace(a, b, substeps + 1)
        for j in range(substeps):
            t = sub[j]
            h = sub[j + 1] - t
            x = x + (field.drift(t, x) + field.diffusion(t, x) @ u) * h
            if _blown(x):
                raise DivergenceError(sub[j + 1], which=f"skeleton flow ({field.label})")
            pos += 1
            ts[pos] = sub[j + 1]
            xs[pos] = x
    return SamplePath(ts, xs)


def integrate_skeleton_euler(field, l, n, x0):
    """Frozen-coefficient Euler polygon of the controlled ODE.

    The state is advanced on the union of the coarse uniform grid (n steps)
    and l's grid, with b and sigma held at the most recent coarse node (in
    both their time and state arguments, matching the stochastic Euler
    recursion exactly at eps = 0); the control slope still varies between
    nodes.
    """
    if n < 1:
        raise ValidationError("n must be >= 1")
    if field.m != l.m:
        raise ValidationError(f"control dimension {l.m} does not match field m={field.m}")
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    if x0.shape != (field.d,):
        raise ValidationError(f"x0 must have shape ({field.d},)")
    coarse = np.linspace(0.0, 1.0, n + 1)
    ts = _merge_grids(coarse, l.grid)
    slopes = l.slopes
    # control interval index for each union interval [ts[j], ts[j+1])
    ctrl_idx = np.minimum(np.searchsorted(l.grid, ts[:-1], side="right") - 1,
                          slopes.shape[0] - 1)
    coarse_set = set(np.round(coarse / NODE_MATCH_TOL).astype(np.int64).tolist())
    xs = np.empty((ts.shape[0], field.d))
    xs[0] = x0
    x = x0.copy()
    t_frozen = 0.0
    b_frozen = field.drift(t_frozen, x)
    s_frozen = field.diffusion(t_frozen, x)
    for j in range(ts.shape[0] - 1):
        h = ts[j + 1] - ts[j]
        u = slopes[ctrl_idx[j]]
        x = x + (b_frozen + s_frozen @ u) * h
        if _blown(x):
            raise DivergenceError(ts[j + 1], which=f"skeleton polygon ({field.label})")
        xs[j + 1] = x
        if int(round(ts[j + 1] / NODE_MATCH_TOL)) in coarse_set:
            t_frozen = ts[j + 1]
            b_frozen = field.drift(t_frozen, x)
            s_frozen = field.diffusion(t_frozen, x)
    return SamplePath(ts, xs)


def _merge_grids(a, b, tol=NODE_MATCH_TOL):
    ts = np.concatenate([a, b])
    ts.sort()
    keep = np.empty(ts.shape[0], dtype=bool)
    keep[0] = True
    keep[1:] = np.diff(ts) > tol
    return ts[keep]


def skeleton_gap(field, l, n, reference_substeps, x0, reference=None):
    """Sup distance at shared grid nodes between the Euler polygon with n
    coarse steps and a heavily substepped reference flow.

    Pass a precomputed ``reference`` path (from integrate_skeleton with the
    same substeps) when sweeping n, to avoid re-integrating it.
    """
    n_int = l.grid.shape[0] - 1
    if reference_substeps * n_int < 10 * n:
        raise ValidationError(
            f"reference must be at least 10x finer: {reference_substeps} substeps "
            f"x {n_int} control intervals < 10 * n = {10 * n}")
    approx = integrate_skeleton_euler(field, l, n, x0)
    ref = integrate_skeleton(field, l, reference_substeps, x0) if reference is None else reference
    ia, ib = common_nodes(approx.grid, ref.grid)
    if ia.size == 0:
        raise ValidationError("no shared nodes between polygon and reference")
    diff = approx.values[ia] - ref.values[ib]
    return float(np.max(np.linalg.norm(diff, axis=1)))


def common_nodes(grid_a, grid_b, tol=NODE_MATCH_TOL):
    """Index pairs (ia, ib) of nodes shared by two grids within tol."""
    ia, ib = [], []
    j = 0
    for i, t in enumerate(grid_a):
        while j < len(grid_b) and grid_b[j] < t - tol:
            j += 1
        if j < len(grid_b) and abs(grid_b[j] - t) <= tol:
            ia.append(i)
            ib.append(j)
    return np.array(ia, dtype=int), np.array(ib, dtype=int)
