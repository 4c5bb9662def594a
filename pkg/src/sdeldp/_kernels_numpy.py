"""Pure-numpy batch stepping: the fallback twin of `_kernels_numba`.

Replicas are vectorized along the leading axis, so each Euler step is a
handful of array operations on (M, d) blocks.  This path works for every
field honoring the batched evaluation contract, including truncated and
expression-defined ones that cannot be jitted.  Per-element arithmetic is
ordered exactly like the numba kernels.
"""

import numpy as np

from .fields import BLOWUP_NORM


def em_batch(field, eps, x0, dW, ts, dts, terminal, sup_norm, diverged):
    M, n, m = dW.shape
    d = x0.shape[0]
    se = np.sqrt(eps)
    X = np.broadcast_to(x0, (M, d)).copy()
    alive = np.ones(M, dtype=bool)
    smax = np.linalg.norm(X, axis=1)
    for k in range(n):
        B = field.drift(ts[k], X)
        S = field.diffusion(ts[k], X)
        Xn = (X + B * dts[k]) + se * np.einsum("rij,rj->ri", S, dW[:, k, :])
        nrm = np.sqrt(np.einsum("ri,ri->r", Xn, Xn))
        bad = alive & (~np.isfinite(Xn).all(axis=1) | (nrm > BLOWUP_NORM))
        if bad.any():
            alive &= ~bad
            Xn[bad] = 0.0  # parked; summaries overwritten below
            nrm[bad] = 0.0
        X = np.where(alive[:, None], Xn, X)
        np.maximum(smax, np.where(alive, nrm, -np.inf), out=smax)
    terminal[:] = X
    terminal[~alive] = np.nan
    sup_norm[:] = smax
    sup_norm[~alive] = np.inf
    diverged[:] = ~alive


def coupled_gap_batch(field, eps, x0, dWf, tf, dtf, tc, dtc, ratio,
                      gap, diverged):
    M, nf, m = dWf.shape
    d = x0.shape[0]
    se = np.sqrt(eps)
    Xf = np.broadcast_to(x0, (M, d)).copy()
    Xc = Xf.copy()
    agg = np.zeros((M, m))
    g = np.zeros(M)
    alive = np.ones(M, dtype=bool)
    kc = 0
    for k in range(nf):
        B = field.drift(tf[k], Xf)
        S = field.diffusion(tf[k], Xf)
        Xn = (Xf + B * dtf[k]) + se * np.einsum("rij,rj->ri", S, dWf[:, k, :])
        nrm = np.sqrt(np.einsum("ri,ri->r", Xn, Xn))
        bad = alive & (~np.isfinite(Xn).all(axis=1) | (nrm > BLOWUP_NORM))
        if bad.any():
            alive &= ~bad
            Xn[bad] = 0.0
        Xf = np.where(alive[:, None], Xn, Xf)
        agg += np.where(alive[:, None], dWf[:, k, :], 0.0)
        if (k + 1) % ratio == 0:
            B = field.drift(tc[kc], Xc)
            S = field.diffusion(tc[kc], Xc)
            Xn = (Xc + B * dtc[kc]) + se * np.einsum("rij,rj->ri", S, agg)
            nrm = np.sqrt(np.einsum("ri,ri->r", Xn, Xn))
            bad = alive & (~np.isfinite(Xn).all(axis=1) | (nrm > BLOWUP_NORM))
            if bad.any():
                alive &= ~bad
                Xn[bad] = 0.0
            Xc = np.where(alive[:, None], Xn, Xc)
            agg[:] = 0.0
            kc += 1
            dist = np.linalg.norm(Xf - Xc, axis=1)
            np.maximum(g, np.where(alive, dist, -np.inf), out=g)
    gap[:] = g
    gap[~alive] = np.inf
    diverged[:] = ~alive
