"""CSV artifact writers with pinned schemas.

Headers are part of the external contract and must not drift:

    condition_report.csv: condition_id,samples,violations,verdict
    ldp_curve.csv: epsilon,n,replicas,hits,p_hat,std_err,eps_log_p,rate_bound,reliable
    lemma1.csv: n,n_fine,delta0,epsilon,replicas,hits,p_hat,std_err
    rate.csv: target,value,residual,grad_norm,converged,stages
    exit.csv: R,epsilon,n,replicas,hits,p_hat,std_err
    path.csv: t,x1,...,xd

Floats are written with ``repr`` (shortest round-trip), so identical runs
produce byte-identical files.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "fmt",
    "write_condition_report",
    "write_ldp_curve",
    "write_lemma1",
    "write_rate",
    "write_exit",
    "write_path",
]


def fmt(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if v is None:
        return ""
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def _write(path, header, rows):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(header + "\n")
        for row in rows:
            fh.write(",".join(fmt(v) for v in row) + "\n")


def write_condition_report(path, reports):
    _write(path, "condition_id,samples,violations,verdict",
           [(r.condition_id, r.samples_checked, len(r.violations), r.verdict)
            for r in reports])


def write_ldp_curve(path, report):
    rows = [(p.epsilon, p.n, p.replicas, p.hits, p.p_hat, p.std_err,
             p.eps_log_p, report.rate_bound, p.reliable)
            for p in report.points]
    _write(path, "epsilon,n,replicas,hits,p_hat,std_err,eps_log_p,rate_bound,reliable", rows)


def write_lemma1(path, rows, n_fine, delta0, epsilon, replicas):
    out = [(n, n_fine, delta0, epsilon, replicas, hits, p_hat, se)
           for (n, p_hat, se, hits) in rows]
    _write(path, "n,n_fine,delta0,epsilon,replicas,hits,p_hat,std_err", out)


def write_rate(path, results):
    """results: list of (target array, RateResult)."""
    rows = []
    for y, r in results:
        target = ";".join(repr(float(c)) for c in np.atleast_1d(y))
        rows.append((target, r.value, r.constraint_residual, r.grad_norm,
                     r.converged, r.stages))
    _write(path, "target,value,residual,grad_norm,converged,stages", rows)


def write_exit(path, rows, epsilon, n, replicas):
    out = [(R, epsilon, n, replicas, hits, p_hat, se)
           for (R, p_hat, se, hits) in rows]
    _write(path, "R,epsilon,n,replicas,hits,p_hat,std_err", out)


def write_path(path, sample_path):
    d = sample_path.d
    header = "t," + ",".join(f"x{i + 1}" for i in range(d))
    rows = [(t,) + tuple(x) for t, x in zip(sample_path.grid, sample_path.values)]
    _write(path, header, rows)
