"""Numerical auditors for the hypotheses a coefficient field must satisfy.

Every checker is a sampling auditor, not a certifier: a "pass" means no
violation was found on the recorded sample set.  Inequalities are tested
with slack ``rhs * (1 + rel_tol) + abs_tol`` so boundary cases like x = y
do not trip on floating-point noise, and enlarging the tolerances can only
shrink the violation set.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field
from typing import Callable, List, Tuple

import numpy as np
from scipy.integrate import quad

from .errors import FieldEvaluationError, SingularIntegrandError, ValidationError

__all__ = [
    "ModulusSpec",
    "EnvelopeSpec",
    "SampleConfig",
    "ConditionReport",
    "OsgoodVerdict",
    "check_modulus_continuity",
    "check_localized_condition",
    "check_growth_condition",
    "check_bounded_integrability",
    "check_local_integrability",
    "osgood_integral",
    "test_function",
]

REL_TOL = 1e-9
ABS_TOL = 1e-12


@dataclass(frozen=True)
class ModulusSpec:
    """A scalar comparison function on the positive half-line.

    ``kind`` is "near-zero" for a uniqueness-grade modulus (vanishing at 0,
    nondecreasing) or "at-infinity" for a growth-grade one (nondecreasing
    and unbounded above ``lower``).  ``fn`` must accept numpy arrays.
    """

    fn: Callable[[np.ndarray], np.ndarray]
    kind: str = "near-zero"
    lower: float = 0.0
    claimed_monotone: bool = True
    label: str = "modulus"

    def __post_init__(self):
        if self.kind not in ("near-zero", "at-infinity"):
            raise ValidationError(f"modulus kind must be near-zero or at-infinity, got {self.kind!r}")

    def __call__(self, s):
        return self.fn(np.asarray(s, dtype=float))

    def audit(self, samples):
        """Check the kind's invariants on a sorted sample set; returns messages."""
        s = np.sort(np.asarray(samples, dtype=float))
        v = self(s)
        problems = []
        if np.any(v < 0):
            problems.append("negative values")
        if self.claimed_monotone and np.any(np.diff(v) < -1e-12 * np.maximum(1.0, np.abs(v[:-1]))):
            problems.append("not nondecreasing on samples")
        if self.kind == "near-zero":
            at0 = float(self(0.0))
            if not (at0 == 0.0 or abs(at0) < 1e-300):
                problems.append(f"fn(0) = {at0:g} != 0")
        else:
            if v[-1] < 1e6 and v[-1] <= v[0] * 1.0001 + 1.0:
                problems.append("does not appear to grow at infinity on samples")
        return problems


@dataclass(frozen=True)
class EnvelopeSpec:
    """A nonnegative time envelope on [0,1] with a numerically witnessed L2 norm."""

    fn: Callable[[np.ndarray], np.ndarray]
    square_integral: float
    nodes: int = 1024
    label: str = "envelope"

    def __call__(self, t):
        return self.fn(np.asarray(t, dtype=float))

    @staticmethod
    def from_fn(fn, nodes=1024, label="envelope"):
        grid = np.linspace(0.0, 1.0, nodes)
        vals = np.asarray(fn(grid), dtype=float)
        vals = np.broadcast_to(vals, grid.shape)
        if np.any(vals < 0) or not np.all(np.isfinite(vals)):
            raise ValidationError(f"envelope {label!r} must be finite and nonnegative on [0,1]")
        w = float(np.trapezoid(vals * vals, grid))
        return EnvelopeSpec(fn=fn, square_integral=w, nodes=nodes, label=label)

    @staticmethod
    def constant(c, label=None):
        c = float(c)
        if c < 0:
            raise ValidationError("constant envelope must be nonnegative")
        return EnvelopeSpec(fn=lambda t: np.full_like(np.asarray(t, dtype=float), c),
                            square_integral=c * c,
                            label=label or f"const({c:g})")


@dataclass(frozen=True)
class SampleConfig:
    """Deterministic sampling plan for the condition auditors.

    ``count`` spatial samples (points or pairs) at each of ``time_count``
    uniform times in [0,1].  ``radius`` bounds |x| for pair sampling,
    ``gap_min``/``gap_max`` bound |x-y| (log-uniform draw), and ``rmax``
    bounds |x| from above for the growth/integrability auditors.
    ``include_pairs`` appends explicit (x, y) pairs to the drawn ones.
    """

    count: int = 1024
    time_count: int = 16
    seed: int = 0
    radius: float = 1.0
    gap_min: float = 1e-9
    gap_max: float = 0.5
    rmax: float = 100.0
    include_pairs: tuple = ()

    def rng(self):
        return np.random.Generator(np.random.Philox(key=np.array([self.seed, 0xC0DE], dtype=np.uint64)))

    def times(self):
        return np.linspace(0.0, 1.0, max(2, self.time_count))


@dataclass
class ConditionReport:
    """Outcome of a sampling audit: pass iff no violation was recorded."""

    condition_id: str
    samples_checked: int
    violations: List[Tuple] = dc_field(default_factory=list)
    max_violations_kept: int = 32
    worst_ratio: float = 0.0

    @property
    def verdict(self):
        return "pass" if not self.violations else "fail"

    @property
    def passed(self):
        return not self.violations

    def record(self, t, x, y, lhs, rhs):
        if len(self.violations) < self.max_violations_kept:
            self.violations.append((float(t), np.asarray(x).tolist(),
                                    None if y is None else np.asarray(y).tolist(),
                                    float(lhs), float(rhs)))

    def __str__(self):
        return (f"[{self.condition_id}] verdict={self.verdict} "
                f"samples={self.samples_checked} violations={len(self.violations)}")


def _violates(lhs, rhs, rel_tol, abs_tol):
    return lhs > rhs * (1.0 + rel_tol) + abs_tol


def _check_finite(field, t, x, *arrays):
    for a in arrays:
        if not np.all(np.isfinite(a)):
            bad = np.argwhere(~np.isfinite(a).reshape(a.shape[0], -1).all(axis=1))
            idx = int(bad[0, 0]) if bad.size else 0
            raise FieldEvaluationError(field.label, t, x[idx])


def _pair_samples(rng, d, count, radius, gap_min, gap_max, inside=None, cap=None):
    """Pairs (x, y) with |x - y| log-uniform in [gap_min, gap_max].

    With ``inside=R`` both points are rejected into the ball |x| v |y| <= R
    (deterministic given the generator state).
    """
    xs = np.empty((count, d))
    ys = np.empty((count, d))
    lo, hi = math.log(gap_min), math.log(gap_max if cap is None else min(gap_max, cap))
    filled = 0
    while filled < count:
        need = count - filled
        x = rng.standard_normal((need, d))
        x *= (radius * rng.random(need) ** (1.0 / d) / np.linalg.norm(x, axis=1))[:, None]
        direc = rng.standard_normal((need, d))
        direc /= np.linalg.norm(direc, axis=1)[:, None]
        gap = np.exp(lo + (hi - lo) * rng.random(need))
        y = x + gap[:, None] * direc
        if inside is not None:
            keep = np.linalg.norm(y, axis=1) <= inside
            x, y = x[keep], y[keep]
        k = x.shape[0]
        xs[filled:filled + k] = x
        ys[filled:filled + k] = y
        filled += k
    return xs, ys


def _frob(mats):
    return np.sqrt(np.sum(mats * mats, axis=(-2, -1)))


def check_modulus_continuity(field, G, H, sampler, rel_tol=REL_TOL, abs_tol=ABS_TOL):
    """Audit ||sigma(t,x)-sigma(t,y)|| + |b(t,x)-b(t,y)| <= G(t) H(|x-y|)."""
    if H.kind != "near-zero":
        raise ValidationError("modulus continuity needs a near-zero modulus")
    rng = sampler.rng()
    xs, ys = _pair_samples(rng, field.d, sampler.count, sampler.radius,
                           sampler.gap_min, sampler.gap_max)
    if sampler.include_pairs:
        ex = np.atleast_2d([np.atleast_1d(np.asarray(p, dtype=float)) for p, _ in sampler.include_pairs])
        ey = np.atleast_2d([np.atleast_1d(np.asarray(q, dtype=float)) for _, q in sampler.include_pairs])
        xs = np.vstack([xs, ex])
        ys = np.vstack([ys, ey])
    gaps = np.linalg.norm(xs - ys, axis=1)
    report = ConditionReport("modulus-continuity", 0)
    for t in sampler.times():
        bx, by = field.drift(t, xs), field.drift(t, ys)
        sx, sy = field.diffusion(t, xs), field.diffusion(t, ys)
        _check_finite(field, t, xs, bx, sx)
        _check_finite(field, t, ys, by, sy)
        lhs = _frob(sx - sy) + np.linalg.norm(bx - by, axis=1)
        rhs = float(G(t)) * H(gaps)
        bad = _violates(lhs, rhs, rel_tol, abs_tol)
        report.samples_checked += xs.shape[0]
        report.worst_ratio = max(report.worst_ratio,
                                 float(np.max(lhs / np.maximum(rhs, 1e-300))))
        for i in np.nonzero(bad)[0]:
            report.record(t, xs[i], ys[i], lhs[i], rhs[i])
    return report


def check_localized_condition(field, f, eta, R, c0, sampler,
                              rel_tol=REL_TOL, abs_tol=ABS_TOL,
                              drop_diffusion_square=False):
    """Audit the localized one-sided bound on the ball |x| v |y| <= R.

    lhs = max(||sigma(t,x)-sigma(t,y)||^2 + 2<x-y, b(t,x)-b(t,y)>,
              |(sigma(t,x)-sigma(t,y))^T (x-y)|)
    rhs = f(t) eta(|x-y|^2), for pairs with 0 < |x-y| < c0.

    ``drop_diffusion_square`` switches to the weaker variant that replaces
    the first branch by <x-y, b(t,x)-b(t,y)> alone (no squared diffusion
    increment and no factor 2).
    """
    if not (0.0 < c0 < 1.0):
        raise ValidationError(f"c0 must lie in (0,1), got {c0}")
    if R <= 0:
        raise ValidationError(f"R must be positive, got {R}")
    rng = sampler.rng()
    xs, ys = _pair_samples(rng, field.d, sampler.count, R,
                           sampler.gap_min, c0 * (1.0 - 1e-12), inside=R, cap=c0)
    diff = xs - ys
    gap2 = np.sum(diff * diff, axis=1)
    cid = "localized-weak" if drop_diffusion_square else "localized"
    report = ConditionReport(cid, 0)
    for t in sampler.times():
        bx, by = field.drift(t, xs), field.drift(t, ys)
        sx, sy = field.diffusion(t, xs), field.diffusion(t, ys)
        _check_finite(field, t, xs, bx, sx)
        _check_finite(field, t, ys, by, sy)
        ds = sx - sy
        drift_pair = np.sum(diff * (bx - by), axis=1)
        cross = np.linalg.norm(np.einsum("...ij,...i->...j", ds, diff), axis=-1)
        if drop_diffusion_square:
            first = drift_pair
        else:
            first = _frob(ds) ** 2 + 2.0 * drift_pair
        lhs = np.maximum(first, cross)
        rhs = float(f(t)) * eta(gap2)
        bad = _violates(lhs, rhs, rel_tol, abs_tol)
        report.samples_checked += xs.shape[0]
        for i in np.nonzero(bad)[0]:
            report.record(t, xs[i], ys[i], lhs[i], rhs[i])
    return report


def check_growth_condition(field, g, gamma, K, sampler, rel_tol=REL_TOL, abs_tol=ABS_TOL):
    """Audit max(||sigma||^2 + 2<x,b>, |sigma^T x|) <= g(t)(gamma(|x|^2)+1) for |x| >= K."""
    if gamma.kind != "at-infinity":
        raise ValidationError("growth check needs an at-infinity modulus")
    if K <= 0 or sampler.rmax <= K:
        raise ValidationError(f"need 0 < K < rmax, got K={K}, rmax={sampler.rmax}")
    rng = sampler.rng()
    radii = np.exp(rng.uniform(math.log(K), math.log(sampler.rmax), sampler.count))
    radii[0] = K
    direc = rng.standard_normal((sampler.count, field.d))
    direc /= np.linalg.norm(direc, axis=1)[:, None]
    xs = radii[:, None] * direc
    n2 = np.sum(xs * xs, axis=1)
    report = ConditionReport("growth", 0)
    for t in sampler.times():
        b = field.drift(t, xs)
        s = field.diffusion(t, xs)
        _check_finite(field, t, xs, b, s)
        first = _frob(s) ** 2 + 2.0 * np.sum(xs * b, axis=1)
        cross = np.linalg.norm(np.einsum("...ij,...i->...j", s, xs), axis=-1)
        lhs = np.maximum(first, cross)
        rhs = float(g(t)) * (gamma(n2) + 1.0)
        bad = _violates(lhs, rhs, rel_tol, abs_tol)
        report.samples_checked += xs.shape[0]
        for i in np.nonzero(bad)[0]:
            report.record(t, xs[i], None, lhs[i], rhs[i])
    return report


def _sup_quadrature(field, points, times):
    sups = np.empty(times.shape[0])
    for k, t in enumerate(times):
        b = field.drift(t, points)
        s = field.diffusion(t, points)
        sups[k] = max(float(np.max(np.abs(b))), float(np.max(_frob(s))))
    return sups


def check_bounded_integrability(field, sampler):
    """Audit that the time integral of the global coefficient sup is finite.

    The sup over all of R^d is only observable for fields carrying an
    explicit bound (truncations do); otherwise a far-field sample up to
    ``rmax`` stands in, which can under-estimate the sup but still catches
    non-finite evaluations and unbounded growth along the sampled rays.
    """
    rng = sampler.rng()
    times = sampler.times()
    report = ConditionReport("bounded-integrability", 0)
    radii = np.exp(rng.uniform(0.0, math.log(sampler.rmax), sampler.count))
    direc = rng.standard_normal((sampler.count, field.d))
    direc /= np.linalg.norm(direc, axis=1)[:, None]
    xs = radii[:, None] * direc
    sups = np.empty(times.shape[0])
    for k, t in enumerate(times):
        b = field.drift(t, xs)
        s = field.diffusion(t, xs)
        _check_finite(field, t, xs, b, s)
        emp = max(float(np.max(np.abs(b))), float(np.max(_frob(s))))
        report.samples_checked += xs.shape[0]
        if field.sup_bound is not None:
            # sup_bound caps components; the Frobenius norm of a clamped
            # d x m matrix can reach sqrt(d m) times that
            cert = float(field.sup_bound(t)) * math.sqrt(field.d * field.m)
            if emp > cert * (1.0 + REL_TOL) + ABS_TOL:
                report.record(t, xs[int(np.argmax(_frob(s)))], None, emp, cert)
            sups[k] = cert
        else:
            sups[k] = emp
    total = float(np.trapezoid(sups, times))
    if not math.isfinite(total):
        report.record(times[-1], np.zeros(field.d), None, total, math.inf)
    report.integral = total
    return report


def check_local_integrability(field, R, sampler):
    """Audit that the time integral of sup_{|x|<=R}(|b| + ||sigma||^2) is finite."""
    if R <= 0:
        raise ValidationError(f"R must be positive, got {R}")
    from .fields import ball_point_set

    points = ball_point_set(field.d, R, sampler.count)
    times = sampler.times()
    report = ConditionReport("local-integrability", 0)
    sups = np.empty(times.shape[0])
    for k, t in enumerate(times):
        b = field.drift(t, points)
        s = field.diffusion(t, points)
        _check_finite(field, t, points, b, s)
        sups[k] = float(np.max(np.abs(b)) + np.max(_frob(s)) ** 2)
        report.samples_checked += points.shape[0]
    total = float(np.trapezoid(sups, times))
    if not math.isfinite(total):
        report.record(times[-1], np.zeros(field.d), None, total, math.inf)
    report.integral = total
    return report


@dataclass
class OsgoodVerdict:
    """Accumulated quadrature evidence for divergence of a modulus integral."""

    integral_values: List[Tuple[float, float]]
    verdict: str
    threshold: float

    def __str__(self):
        tail = self.integral_values[-1] if self.integral_values else (math.nan, math.nan)
        return f"osgood: {self.verdict} (value {tail[1]:.4g} at cutoff {tail[0]:.3g}, threshold {self.threshold:g})"


def osgood_integral(spec, anchor, probe, threshold, nodes_per_decade=1024, rel_tol=1e-6):
    """Accumulate the modulus integral toward its singular end.

    For a near-zero modulus the integrand is 1/eta(s) on (cutoff, anchor]
    with cutoffs decreasing toward 0; for an at-infinity one it is
    1/(gamma(s)+1) on [anchor, cutoff) with cutoffs increasing.  Quadrature
    is trapezoidal in log-coordinates (the singular/heavy end dominates and
    uniform grids are hopeless).  Verdicts: "diverges-heuristic" when the
    accumulated value exceeds ``threshold`` with non-vanishing increments,
    "converges" when relative increments drop below ``rel_tol`` while the
    total stays under threshold, "inconclusive" otherwise.
    """
    if threshold <= 0 or anchor <= 0:
        raise ValidationError("anchor and threshold must be positive")
    probe = [float(c) for c in probe]
    if not probe:
        raise ValidationError("need at least one cutoff")
    near = spec.kind == "near-zero"
    if near:
        if any(c >= anchor for c in probe) or any(b >= a for a, b in zip(probe, probe[1:])):
            raise ValidationError("near-zero cutoffs must decrease strictly below the anchor")
        integrand = lambda s: 1.0 / spec(s)
    else:
        if any(c <= anchor for c in probe) or any(b <= a for a, b in zip(probe, probe[1:])):
            raise ValidationError("at-infinity cutoffs must increase strictly above the anchor")
        integrand = lambda s: 1.0 / (spec(s) + 1.0)

    def piece(a, b):
        # integral over [a, b], 0 < a < b, log-spaced trapezoid
        la, lb = math.log(a), math.log(b)
        k = max(8, int(math.ceil((lb - la) / math.log(10.0) * nodes_per_decade)))
        v = np.linspace(la, lb, k + 1)
        s = np.exp(v)
        if near:
            e = spec(s)
            if np.any(e <= 0.0):
                raise SingularIntegrandError(
                    f"{spec.label} vanishes at an interior quadrature node")
            f = s / e
        else:
            f = s / (spec(s) + 1.0)
        if not np.all(np.isfinite(f)):
            raise SingularIntegrandError(f"integrand for {spec.label} is non-finite")
        return float(np.trapezoid(f, v))

    values = []
    total = 0.0
    prev_edge = anchor
    increments = []
    for cutoff in probe:
        inc = piece(cutoff, prev_edge) if near else piece(prev_edge, cutoff)
        total += inc
        increments.append(inc)
        values.append((cutoff, total))
        prev_edge = cutoff
    last_rel = increments[-1] / max(total, 1e-300)
    if total > threshold and last_rel > rel_tol:
        verdict = "diverges-heuristic"
    elif total <= threshold and last_rel < rel_tol:
        verdict = "converges"
    else:
        verdict = "inconclusive"
    return OsgoodVerdict(integral_values=values, verdict=verdict, threshold=float(threshold))


def test_function(eta, rho, lam, x):
    """exp(lam * integral_0^x ds / (eta(s) + rho)): the comparison weight
    used in uniqueness arguments; rho > 0 keeps the integrand bounded."""
    if rho <= 0:
        raise ValidationError(f"rho must be positive, got {rho}")
    if x < 0:
        raise ValidationError(f"x must be nonnegative, got {x}")
    if x == 0:
        return 1.0
    q, _ = quad(lambda s: 1.0 / (float(eta(s)) + rho), 0.0, x, limit=200)
    return math.exp(lam * q)
