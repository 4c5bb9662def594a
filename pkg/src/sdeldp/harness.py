"""Monte Carlo estimation of rare-event probabilities and their eps*log p curves.

Crude Monte Carlo only: acceptance-grade experiments use moderate noise
scales where events are actually samplable, and the vanishing-noise /
infinite-refinement statements are probed as trends and orderings, never
as limits.  Sweeps over nested events (growing exit radius, growing gap
threshold, coarser-vs-finer step counts) reuse the same per-replica noise
streams, so event inclusion makes the estimated probabilities ordered
deterministically, not just statistically.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field as dc_field, replace
from typing import List, Optional, Tuple

import numpy as np

from .errors import DivergenceRateError, ValidationError
from .simulate import ExperimentConfig, batch_coupled_gaps, batch_summaries

__all__ = [
    "EventSpec",
    "LdpPoint",
    "LdpReport",
    "estimate_event",
    "ldp_curve",
    "lemma1_experiment",
    "exit_probability_experiment",
    "RELIABLE_HITS",
    "ZERO_HIT_BOUND",
]

RELIABLE_HITS = 30
ZERO_HIT_BOUND = 3.0  # rule of three: 95% upper bound 3/M on a zero-hit probability
DIVERGENCE_ABORT = 1e-3


@dataclass(frozen=True)
class EventSpec:
    """A path event evaluated on grid nodes.

    kinds: ``terminal-halfspace`` (<a, X(1)> >= c), ``terminal-outside-ball``
    (|X(1) - y0| >= r), ``sup-exit`` (sup_t |X(t)| >= R), ``coupled-gap``
    (sup over coarse nodes |X_fine - X_coarse| >= delta0, fine count
    ``n_fine``; the coarse count is the experiment's n).
    """

    kind: str
    a: Optional[np.ndarray] = None
    c: float = 0.0
    y0: Optional[np.ndarray] = None
    r: float = 0.0
    R: float = 0.0
    delta0: float = 0.0
    n_fine: int = 0

    _KINDS = ("terminal-halfspace", "terminal-outside-ball", "sup-exit", "coupled-gap")

    def __post_init__(self):
        if self.kind not in self._KINDS:
            raise ValidationError(f"unknown event kind {self.kind!r}; choose from {self._KINDS}")
        if self.kind == "terminal-halfspace":
            if self.a is None:
                raise ValidationError("terminal-halfspace needs a direction vector a")
            object.__setattr__(self, "a", np.atleast_1d(np.asarray(self.a, dtype=float)))
            if not np.all(np.isfinite(self.a)) or not math.isfinite(self.c):
                raise ValidationError("halfspace parameters must be finite")
        elif self.kind == "terminal-outside-ball":
            if self.y0 is None:
                raise ValidationError("terminal-outside-ball needs a center y0")
            object.__setattr__(self, "y0", np.atleast_1d(np.asarray(self.y0, dtype=float)))
            if self.r < 0:
                raise ValidationError("ball radius r must be >= 0")
        elif self.kind == "sup-exit":
            if self.R <= 0:
                raise ValidationError("sup-exit needs R > 0")
        else:
            if self.delta0 <= 0 or self.n_fine < 1:
                raise ValidationError("coupled-gap needs delta0 > 0 and n_fine >= 1")

    def describe(self):
        if self.kind == "terminal-halfspace":
            return f"<a,X(1)> >= {self.c:g}"
        if self.kind == "terminal-outside-ball":
            return f"|X(1)-y0| >= {self.r:g}"
        if self.kind == "sup-exit":
            return f"sup|X| >= {self.R:g}"
        return f"sup|X_fine-X_coarse| >= {self.delta0:g} (n_fine={self.n_fine})"


def _binom_se(p_hat, m):
    return math.sqrt(max(p_hat * (1.0 - p_hat), 0.0) / m)


def _check_divergence(diverged, replicas):
    dead = int(np.count_nonzero(diverged))
    if dead > DIVERGENCE_ABORT * replicas:
        raise DivergenceRateError(dead, replicas)
    return dead


def estimate_event(field, cfg, event, workers=None, backend=None):
    """(p_hat, standard error, hits) for one event by crude Monte Carlo.

    Replica i is seeded by (cfg.root_seed, i); results are independent of
    chunking and scheduling.  Diverged replicas abort the estimate above a
    0.1% rate; below it they count as hits (all supported events are
    exceedance events, and an exploding path exceeds every finite level).
    """
    M = cfg.replicas
    if event.kind == "coupled-gap":
        if event.n_fine % cfg.n != 0:
            raise ValidationError(f"cfg.n={cfg.n} must divide n_fine={event.n_fine}")
        gaps, div, _ = batch_coupled_gaps(field, cfg, [cfg.n], event.n_fine,
                                          workers=workers, backend=backend)
        _check_divergence(div[cfg.n], M)
        hits = int(np.count_nonzero(gaps[cfg.n] >= event.delta0))
    else:
        summary = batch_summaries(field, cfg, workers=workers, backend=backend)
        dead = _check_divergence(summary.diverged, M)
        if event.kind == "sup-exit":
            hits = int(np.count_nonzero(summary.sup_norm >= event.R))
        else:
            alive = ~summary.diverged
            term = summary.terminal
            if event.kind == "terminal-halfspace":
                ind = (term[alive] @ event.a) >= event.c
            else:
                ind = np.linalg.norm(term[alive] - event.y0, axis=1) >= event.r
            hits = int(np.count_nonzero(ind)) + dead
    p_hat = hits / M
    return p_hat, _binom_se(p_hat, M), hits


@dataclass(frozen=True)
class LdpPoint:
    """One epsilon entry of an LDP curve."""

    epsilon: float
    n: int
    replicas: int
    hits: int
    p_hat: float
    std_err: float
    eps_log_p: float
    reliable: bool
    zero_hit_bound: bool

    @staticmethod
    def from_counts(epsilon, n, replicas, hits):
        p_hat = hits / replicas
        if hits == 0:
            # rule of three instead of log 0
            bound = ZERO_HIT_BOUND / replicas
            return LdpPoint(epsilon, n, replicas, 0, 0.0, 0.0,
                            epsilon * math.log(bound), False, True)
        return LdpPoint(epsilon, n, replicas, hits, p_hat,
                        _binom_se(p_hat, replicas),
                        epsilon * math.log(p_hat),
                        hits >= RELIABLE_HITS, False)


@dataclass
class LdpReport:
    """eps-indexed rare-event estimates against an optional rate bound."""

    event: EventSpec
    points: List[LdpPoint]
    rate_bound: Optional[float] = None
    root_seed: int = 0
    footnotes: List[str] = dc_field(default_factory=list)

    def table(self):
        lines = ["epsilon      p_hat        se           eps*log(p)   flags"]
        for p in self.points:
            flags = []
            if p.zero_hit_bound:
                flags.append("zero-hit bound 3/M")
            if not p.reliable:
                flags.append("unreliable (<30 hits)")
            lines.append(f"{p.epsilon:<12g} {p.p_hat:<12.6g} {p.std_err:<12.3g} "
                         f"{p.eps_log_p:<12.6g} {';'.join(flags)}")
        if self.rate_bound is not None:
            lines.append(f"rate bound  -inf I = {-self.rate_bound:g}")
        lines.extend(self.footnotes)
        return "\n".join(lines)


def ldp_curve(field, event, epsilons, cfg, rate_bound=None, workers=None, backend=None):
    """Estimate the event across a decreasing epsilon ladder.

    ``rate_bound`` (inf of the rate function over the event, from the rate
    solver) is carried into the report for plotting eps*log p against it.
    """
    epsilons = [float(e) for e in epsilons]
    if not epsilons or any(e <= 0 for e in epsilons):
        raise ValidationError("epsilons must be positive")
    if any(b >= a for a, b in zip(epsilons, epsilons[1:])):
        raise ValidationError("epsilons must be strictly decreasing")
    points = []
    for eps in epsilons:
        run_cfg = replace(cfg, epsilon=eps)
        p_hat, _, hits = estimate_event(field, run_cfg, event, workers=workers, backend=backend)
        if hits < RELIABLE_HITS:
            warnings.warn(
                f"only {hits} hits at epsilon={eps:g} (M={cfg.replicas}); "
                f"estimate flagged unreliable", stacklevel=2)
        points.append(LdpPoint.from_counts(eps, run_cfg.n, cfg.replicas, hits))
    return LdpReport(event=event, points=points, rate_bound=rate_bound,
                     root_seed=cfg.root_seed,
                     footnotes=["finite-eps estimates; the vanishing-noise limit is not asserted"])


def lemma1_experiment(field, cfg, ns, n_fine, delta0, workers=None, backend=None):
    """P(coupled coarse/fine gap >= delta0) per coarse step count.

    All coarse counts share the same fine noise streams (common random
    numbers), so the n-ordering reflects the discretization alone.
    Returns rows (n, p_hat, se, hits).
    """
    ns = [int(n) for n in ns]
    if delta0 is None or delta0 <= 0:
        raise ValidationError("delta0 must be positive")
    for n in ns:
        if n_fine % n != 0:
            raise ValidationError(f"every n must divide n_fine: {n} | {n_fine} fails")
    if field.sup_bound is None:
        warnings.warn(
            f"field {field.label!r} carries no coefficient bound; the coupled-gap "
            f"ordering is only meaningful for bounded fields (truncate first)",
            stacklevel=2)
    gaps, div, _ = batch_coupled_gaps(field, cfg, ns, n_fine, workers=workers, backend=backend)
    rows = []
    for n in ns:
        _check_divergence(div[n], cfg.replicas)
        hits = int(np.count_nonzero(gaps[n] >= delta0))
        p_hat = hits / cfg.replicas
        rows.append((n, p_hat, _binom_se(p_hat, cfg.replicas), hits))
    return rows


def exit_probability_experiment(field, cfg, radii, growth_report=None,
                                workers=None, backend=None):
    """P(sup_t |X(t)| >= R) for each R, on shared paths.

    The per-replica sup is computed once, so the indicators are pointwise
    ordered in R and the estimated probabilities are nonincreasing
    deterministically.  Returns rows (R, p_hat, se, hits).
    """
    radii = [float(r) for r in radii]
    if any(r <= 0 for r in radii):
        raise ValidationError("radii must be positive")
    if growth_report is not None and not growth_report.passed:
        warnings.warn(
            f"growth condition audit failed ({len(growth_report.violations)} violations); "
            f"exit probabilities may not decay", stacklevel=2)
    summary = batch_summaries(field, cfg, workers=workers, backend=backend)
    _check_divergence(summary.diverged, cfg.replicas)
    rows = []
    for R in radii:
        hits = int(np.count_nonzero(summary.sup_norm >= R))
        p_hat = hits / cfg.replicas
        rows.append((R, p_hat, _binom_se(p_hat, cfg.replicas), hits))
    return rows
