"""Action minimization: the cheapest control driving the skeleton to a target.

The rate of a terminal point y is inf { e(l)/2 : F(l)(1) = y } and of a
path h is inf { e(l)/2 : F(l) = h }.  Both are attacked by discretizing
first (piecewise-constant slopes u on N control intervals, the same
forward recursion as the skeleton integrator) and then minimizing a
quadratic-penalty sequence

    J_mu(u) = 1/2 sum_k |u_k|^2 dt_k + mu * deviation(F_N(u), target)^2

with geometrically increasing mu and warm starts.  Gradients come from the
adjoint (reverse) recursion of the discrete forward map and are validated
against central finite differences by :func:`gradient_check`.  The default
stage optimizer is L-BFGS-B driven by the adjoint gradient; plain gradient
descent with Armijo backtracking (``method="gd"``) is the slow, dependable
baseline both share their convergence checks with.  Returned values are
upper bounds on the discrete optimum; the constraint residual is always
reported, never absorbed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field
from typing import List, Optional, Tuple

import numpy as np

from .errors import DivergenceError, ValidationError
from .fields import BLOWUP_NORM
from .skeleton import ControlPath, SamplePath, common_nodes

__all__ = [
    "RateQuery",
    "RateResult",
    "minimize_terminal",
    "minimize_path",
    "gradient_check",
    "rate_lower_envelope",
]

DEFAULT_PENALTIES = tuple(10.0 ** j for j in range(7))
RESIDUAL_FLOOR = 1e-8


@dataclass(frozen=True)
class RateQuery:
    """A rate-function evaluation request.

    Exactly one of ``terminal`` (a point y in R^d) or ``path`` (a
    SamplePath defined on a refinement of the control grid) must be set.
    ``deviation`` picks the path-matching penalty: "mean-square" (smooth,
    default) or "sup-node".
    """

    field: object
    x0: np.ndarray
    terminal: Optional[np.ndarray] = None
    path: Optional[SamplePath] = None
    N: int = 128
    penalties: Tuple[float, ...] = DEFAULT_PENALTIES
    max_iter: int = 2000
    gtol: float = 1e-9
    method: str = "lbfgs"
    deviation: str = "mean-square"
    multistart: int = 1
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "x0", np.atleast_1d(np.asarray(self.x0, dtype=float)))
        if self.terminal is not None:
            object.__setattr__(self, "terminal",
                               np.atleast_1d(np.asarray(self.terminal, dtype=float)))
        if (self.terminal is None) == (self.path is None):
            raise ValidationError("set exactly one of terminal or path")
        if self.N < 1:
            raise ValidationError("N must be >= 1")
        pens = tuple(float(p) for p in self.penalties)
        if not pens or any(p <= 0 for p in pens) or any(b <= a for a, b in zip(pens, pens[1:])):
            raise ValidationError("penalty weights must be positive and strictly increasing")
        object.__setattr__(self, "penalties", pens)
        if self.deviation not in ("mean-square", "sup-node"):
            raise ValidationError(f"unknown deviation metric {self.deviation!r}")
        if self.method not in ("lbfgs", "gd"):
            raise ValidationError(f"unknown optimizer {self.method!r}")
        if self.multistart < 1:
            raise ValidationError("multistart must be >= 1")

    def grid(self):
        return np.linspace(0.0, 1.0, self.N + 1)


@dataclass
class RateResult:
    """Outcome of a rate minimization (value = energy/2 of the control)."""

    value: float
    control: ControlPath
    constraint_residual: float
    penalty_trace: List[Tuple[float, float, float]] = dc_field(default_factory=list)
    grad_norm: float = math.nan
    converged: bool = False
    infeasible_trend: bool = False
    stages: int = 0
    iterations: int = 0

    def __str__(self):
        tag = "converged" if self.converged else "NOT CONVERGED"
        if self.infeasible_trend:
            tag += ", residual plateau (target may be unreachable)"
        return (f"value={self.value:.6g} residual={self.constraint_residual:.3g} "
                f"grad={self.grad_norm:.3g} [{tag}]")


def _forward(field, x0, ts, dts, slopes):
    """Trajectory of the discrete controlled recursion on the control grid."""
    N = dts.shape[0]
    xs = np.empty((N + 1, x0.shape[0]))
    xs[0] = x0
    x = x0
    for k in range(N):
        x = x + (field.drift(ts[k], x) + field.diffusion(ts[k], x) @ slopes[k]) * dts[k]
        if not np.all(np.isfinite(x)) or np.linalg.norm(x) > BLOWUP_NORM:
            raise DivergenceError(ts[k + 1], which=f"controlled flow ({field.label})")
        xs[k + 1] = x
    return xs


def _drift_jac(field, t, x, h=1e-6):
    if field.drift_jac is not None:
        return field.drift_jac(t, x)
    d = x.shape[0]
    J = np.empty((d, d))
    for l in range(d):
        e = np.zeros(d)
        e[l] = h * max(1.0, abs(x[l]))
        J[:, l] = (field.drift(t, x + e) - field.drift(t, x - e)) / (2.0 * e[l])
    return J


def _diffusion_jac(field, t, x, h=1e-6):
    if field.diffusion_jac is not None:
        return field.diffusion_jac(t, x)
    d = x.shape[0]
    J = np.empty((d, field.m, d))
    for l in range(d):
        e = np.zeros(d)
        e[l] = h * max(1.0, abs(x[l]))
        J[:, :, l] = (field.diffusion(t, x + e) - field.diffusion(t, x - e)) / (2.0 * e[l])
    return J


class _PenaltyProblem:
    """Penalized objective J_mu(u) with adjoint gradient."""

    def __init__(self, query):
        q = query
        self.q = q
        self.ts = q.grid()
        self.dts = np.diff(self.ts)
        self.field = q.field
        if q.terminal is not None:
            if q.terminal.shape != (q.field.d,):
                raise ValidationError(f"terminal target must have shape ({q.field.d},)")
            self.mode = "terminal"
        else:
            self.mode = "path"
            ic, ih = common_nodes(self.ts, q.path.grid)
            if ic.size != self.ts.shape[0]:
                raise ValidationError(
                    "path target must be defined on a refinement of the control grid")
            self.href = q.path.values[ih]

    def energy_half(self, u):
        return 0.5 * float(np.sum(np.sum(u * u, axis=1) * self.dts))

    def deviations(self, xs):
        if self.mode == "terminal":
            return xs[-1] - self.q.terminal
        return xs - self.href

    def residual(self, xs):
        dev = self.deviations(xs)
        if self.mode == "terminal":
            return float(np.linalg.norm(dev))
        return float(np.max(np.linalg.norm(dev, axis=1)))

    def penalty(self, xs):
        dev = self.deviations(xs)
        if self.mode == "terminal":
            return float(dev @ dev)
        sq = np.sum(dev * dev, axis=1)
        if self.q.deviation == "mean-square":
            return float(np.mean(sq))
        return float(np.max(sq))

    def value(self, u, mu):
        xs = _forward(self.field, self.q.x0, self.ts, self.dts, u)
        return self.energy_half(u) + mu * self.penalty(xs), xs

    def value_grad(self, u, mu):
        f = self.field
        xs = _forward(f, self.q.x0, self.ts, self.dts, u)
        J = self.energy_half(u) + mu * self.penalty(xs)
        N = self.dts.shape[0]
        grad = np.empty_like(u)
        lam = np.zeros(f.d)
        dev = self.deviations(xs)
        if self.mode == "terminal":
            lam += 2.0 * mu * dev
            node_pull = None
        elif self.q.deviation == "mean-square":
            node_pull = (2.0 * mu / xs.shape[0]) * dev
        else:
            node_pull = np.zeros_like(dev)
            worst = int(np.argmax(np.sum(dev * dev, axis=1)))
            node_pull[worst] = 2.0 * mu * dev[worst]
        if node_pull is not None:
            lam += node_pull[N]
        for k in range(N - 1, -1, -1):
            t, x, dt = self.ts[k], xs[k], self.dts[k]
            sig = f.diffusion(t, x)
            grad[k] = dt * u[k] + dt * (sig.T @ lam)
            A = _drift_jac(f, t, x) + np.einsum("ijl,j->il", _diffusion_jac(f, t, x), u[k])
            lam = lam + dt * (A.T @ lam)
            if node_pull is not None:
                lam += node_pull[k]
        return J, grad


def _descend_lbfgs(problem, u0, mu, max_iter, gtol):
    """L-BFGS-B stage solve on the flattened slopes; deterministic."""
    from scipy.optimize import minimize

    shape = u0.shape

    def fg(z):
        try:
            J, g = problem.value_grad(z.reshape(shape), mu)
        except DivergenceError:
            return 1e15, np.zeros(z.shape[0])
        return J, g.ravel()

    out = minimize(fg, u0.ravel(), jac=True, method="L-BFGS-B",
                   options={"maxiter": max_iter, "gtol": gtol, "ftol": 1e-18})
    u = out.x.reshape(shape)
    J, g = problem.value_grad(u, mu)
    return u, J, g, int(out.nit)


def _descend_gd(problem, u0, mu, max_iter, gtol):
    """Gradient descent with Armijo backtracking; deterministic, monotone in J."""
    u = u0.copy()
    J, g = problem.value_grad(u, mu)
    step = 1.0
    it = 0
    while it < max_iter:
        gnorm = float(np.max(np.abs(g)))
        if gnorm <= gtol:
            break
        g2 = float(np.sum(g * g))
        step = min(step * 2.0, 1e8)
        while True:
            cand = u - step * g
            try:
                Jc, _ = problem.value(cand, mu)
            except DivergenceError:
                Jc = math.inf
            if Jc <= J - 1e-4 * step * g2:
                break
            step *= 0.5
            if step < 1e-18:
                return u, J, g, it  # stagnated; caller flags non-convergence
        u = cand
        J, g = problem.value_grad(u, mu)
        it += 1
    return u, J, g, it


def _minimize_from(problem, u0):
    q = problem.q
    u = u0
    trace = []
    total_it = 0
    grad_norm = math.inf
    descend = _descend_lbfgs if q.method == "lbfgs" else _descend_gd
    for mu in q.penalties:
        u, J, g, it = descend(problem, u, mu, q.max_iter, q.gtol)
        total_it += it
        grad_norm = float(np.max(np.abs(g)))
        _, xs = problem.value(u, mu)
        trace.append((mu, J, problem.residual(xs)))
    _, xs = problem.value(u, q.penalties[-1])
    res = problem.residual(xs)
    infeasible = False
    if len(trace) >= 3 and res > 100.0 * RESIDUAL_FLOOR:
        r_prev, r_last = trace[-3][2], trace[-1][2]
        infeasible = (r_prev - r_last) < 0.01 * r_prev
    control = ControlPath.from_slopes(problem.ts, u)
    return RateResult(
        value=problem.energy_half(u),
        control=control,
        constraint_residual=res,
        penalty_trace=trace,
        grad_norm=grad_norm,
        converged=grad_norm <= q.gtol and not infeasible,
        infeasible_trend=infeasible,
        stages=len(q.penalties),
        iterations=total_it,
    )


def _minimize(query):
    problem = _PenaltyProblem(query)
    starts = [np.zeros((query.N, query.field.m))]
    if query.multistart > 1:
        rng = np.random.Generator(np.random.Philox(key=np.array(
            [query.seed, 0x8A7E], dtype=np.uint64)))
        for _ in range(query.multistart - 1):
            starts.append(rng.standard_normal((query.N, query.field.m)))
    best = None
    for u0 in starts:
        try:
            res = _minimize_from(problem, u0)
        except DivergenceError:
            if best is None and len(starts) == 1:
                raise
            continue
        score = (res.value + query.penalties[-1] * res.constraint_residual ** 2)
        if best is None or score < best[0]:
            best = (score, res)
    if best is None:
        raise DivergenceError(0.0, which=f"all starts diverged ({query.field.label})")
    return best[1]


def minimize_terminal(query):
    """Cheapest control steering the skeleton endpoint to query.terminal."""
    if query.terminal is None:
        raise ValidationError("minimize_terminal needs a terminal target")
    return _minimize(query)


def minimize_path(query):
    """Cheapest control tracking query.path at shared nodes.

    When the diffusion cannot span the needed directions the residual
    plateaus across penalty stages and the result carries
    ``infeasible_trend=True`` (numerical evidence for an infinite rate).
    """
    if query.path is None:
        raise ValidationError("minimize_path needs a path target")
    return _minimize(query)


def gradient_check(query, probe_count=3, mu=1.0, fd_step=1e-6, seed=0):
    """Max relative gap between the adjoint gradient and central finite
    differences of the penalized objective at random controls.

    Controls whose trajectories enter the field's non-smooth ball (e.g.
    the origin for fractional-power coefficients) are redrawn.
    """
    if probe_count < 1:
        raise ValidationError("probe_count must be >= 1")
    problem = _PenaltyProblem(query)
    rng = np.random.Generator(np.random.Philox(key=np.array(
        [seed, 0xF0D1], dtype=np.uint64)))
    worst = 0.0
    for _ in range(probe_count):
        u = None
        for _attempt in range(64):
            cand = rng.standard_normal((query.N, query.field.m))
            if query.field.nonsmooth_radius > 0:
                xs = _forward(query.field, query.x0, problem.ts, problem.dts, cand)
                if np.min(np.linalg.norm(xs, axis=1)) <= 2.0 * query.field.nonsmooth_radius:
                    continue
            u = cand
            break
        if u is None:
            raise ValidationError("could not sample a control clear of non-smooth loci")
        _, g = problem.value_grad(u, mu)
        fd = np.empty_like(g)
        for k in range(u.shape[0]):
            for j in range(u.shape[1]):
                h = fd_step * max(1.0, abs(u[k, j]))
                up, dn = u.copy(), u.copy()
                up[k, j] += h
                dn[k, j] -= h
                fd[k, j] = (problem.value(up, mu)[0] - problem.value(dn, mu)[0]) / (2.0 * h)
        rel = np.abs(g - fd) / np.maximum(np.maximum(np.abs(g), np.abs(fd)), 1e-8)
        worst = max(worst, float(np.max(rel)))
    return worst


def rate_lower_envelope(field, x0, targets, **query_kwargs):
    """minimize_terminal over a list of terminal points; returns
    [(y, RateResult)] with per-target convergence flags."""
    targets = [np.atleast_1d(np.asarray(y, dtype=float)) for y in targets]
    if not targets:
        raise ValidationError("targets must be nonempty")
    out = []
    for y in targets:
        q = RateQuery(field=field, x0=x0, terminal=y, **query_kwargs)
        out.append((y, minimize_terminal(q)))
    return out
