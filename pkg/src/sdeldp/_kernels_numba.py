"""Numba-compiled hot loops for the batch Monte Carlo backend.

The Euler stepping over many replicas dominates harness runtime; these
kernels fuse it per replica.  Each built-in model contributes a pointwise
drift/diffusion kernel pair (signature ``(t, x, params, out)``), and the
stepping kernels take them as first-class function arguments so one loop
body serves every model.  Arithmetic mirrors the numpy fallback
(`_kernels_numpy`) operation for operation so the two backends agree to
the last bit on the built-ins.
"""

import numpy as np
from numba import njit

from .fields import BLOWUP_NORM


@njit(cache=True)
def _brownian_drift(t, x, p, out):
    for i in range(x.shape[0]):
        out[i] = 0.0


@njit(cache=True)
def _eye_diff(t, x, p, out):
    d, m = out.shape
    for i in range(d):
        for j in range(m):
            out[i, j] = 1.0 if i == j else 0.0


@njit(cache=True)
def _ou_drift(t, x, p, out):
    a = p[0]
    for i in range(x.shape[0]):
        out[i] = a * x[i]


@njit(cache=True)
def _rotational_drift(t, x, p, out):
    r = p[0]
    n2 = x[0] * x[0] + x[1] * x[1]
    c = -(n2 ** r)
    out[0] = c * x[0]
    out[1] = c * x[1]


@njit(cache=True)
def _rotational_diff(t, x, p, out):
    r = p[0]
    n2 = x[0] * x[0] + x[1] * x[1]
    nr = n2 ** (r / 2.0)
    out[0, 0] = -nr * x[1]
    out[1, 0] = nr * x[0]


@njit(cache=True)
def _cubic_drift(t, x, p, out):
    out[0] = -(x[0] * x[0] * x[0])


@njit(cache=True)
def _one_diff(t, x, p, out):
    out[0, 0] = 1.0


@njit(cache=True)
def _sqrt_drift_drift(t, x, p, out):
    v = x[0]
    s = 1.0 if v > 0.0 else (-1.0 if v < 0.0 else 0.0)
    out[0] = s * np.sqrt(np.abs(v))


@njit(cache=True)
def _zero_diff(t, x, p, out):
    for i in range(out.shape[0]):
        for j in range(out.shape[1]):
            out[i, j] = 0.0


_MODEL_KERNELS = {
    "brownian": (_brownian_drift, _eye_diff),
    "ou": (_ou_drift, _eye_diff),
    "rotational": (_rotational_drift, _rotational_diff),
    "cubic": (_cubic_drift, _one_diff),
    "sqrt_drift": (_sqrt_drift_drift, _zero_diff),
}


def model_kernels(name, params):
    """(drift_kernel, diffusion_kernel, params array) for a built-in model."""
    drift, diff = _MODEL_KERNELS[name]
    return drift, diff, np.asarray(params, dtype=np.float64)


@njit(nogil=True)
def em_batch(drift, diff, params, x0, dW, ts, dts, sqrt_eps,
             terminal, sup_norm, diverged):
    """Euler path per replica; records terminal state and running sup |x|.

    Diverged replicas (non-finite state or |x| > BLOWUP_NORM) stop stepping,
    get sup_norm = inf and terminal = nan.
    """
    M, n, m = dW.shape
    d = x0.shape[0]
    b = np.empty(d)
    s = np.empty((d, m))
    x = np.empty(d)
    xn = np.empty(d)
    for rep in range(M):
        for i in range(d):
            x[i] = x0[i]
        acc = 0.0
        for i in range(d):
            acc += x[i] * x[i]
        smax = np.sqrt(acc)
        ok = True
        for k in range(n):
            drift(ts[k], x, params, b)
            diff(ts[k], x, params, s)
            for i in range(d):
                mv = 0.0
                for j in range(m):
                    mv += s[i, j] * dW[rep, k, j]
                xn[i] = (x[i] + b[i] * dts[k]) + sqrt_eps * mv
            acc = 0.0
            fin = True
            for i in range(d):
                v = xn[i]
                if not np.isfinite(v):
                    fin = False
                acc += v * v
            nrm = np.sqrt(acc)
            if (not fin) or nrm > BLOWUP_NORM:
                ok = False
                break
            if nrm > smax:
                smax = nrm
            for i in range(d):
                x[i] = xn[i]
        if ok:
            diverged[rep] = False
            sup_norm[rep] = smax
            for i in range(d):
                terminal[rep, i] = x[i]
        else:
            diverged[rep] = True
            sup_norm[rep] = np.inf
            for i in range(d):
                terminal[rep, i] = np.nan


@njit(nogil=True)
def coupled_gap_batch(drift, diff, params, x0, dWf, tf, dtf, tc, dtc, ratio,
                      sqrt_eps, gap, diverged):
    """Fine Euler path and coarse Euler path on aggregated increments of the
    same noise; records the sup distance over coarse nodes per replica."""
    M, nf, m = dWf.shape
    d = x0.shape[0]
    b = np.empty(d)
    s = np.empty((d, m))
    xf = np.empty(d)
    xfn = np.empty(d)
    xc = np.empty(d)
    xcn = np.empty(d)
    agg = np.empty(m)
    for rep in range(M):
        for i in range(d):
            xf[i] = x0[i]
            xc[i] = x0[i]
        for j in range(m):
            agg[j] = 0.0
        g = 0.0
        kc = 0
        ok = True
        for k in range(nf):
            drift(tf[k], xf, params, b)
            diff(tf[k], xf, params, s)
            for i in range(d):
                mv = 0.0
                for j in range(m):
                    mv += s[i, j] * dWf[rep, k, j]
                xfn[i] = (xf[i] + b[i] * dtf[k]) + sqrt_eps * mv
            fin = True
            acc = 0.0
            for i in range(d):
                v = xfn[i]
                if not np.isfinite(v):
                    fin = False
                acc += v * v
            if (not fin) or np.sqrt(acc) > BLOWUP_NORM:
                ok = False
                break
            for j in range(m):
                agg[j] += dWf[rep, k, j]
            for i in range(d):
                xf[i] = xfn[i]
            if (k + 1) % ratio == 0:
                drift(tc[kc], xc, params, b)
                diff(tc[kc], xc, params, s)
                for i in range(d):
                    mv = 0.0
                    for j in range(m):
                        mv += s[i, j] * agg[j]
                    xcn[i] = (xc[i] + b[i] * dtc[kc]) + sqrt_eps * mv
                fin = True
                acc = 0.0
                for i in range(d):
                    v = xcn[i]
                    if not np.isfinite(v):
                        fin = False
                    acc += v * v
                if (not fin) or np.sqrt(acc) > BLOWUP_NORM:
                    ok = False
                    break
                for j in range(m):
                    agg[j] = 0.0
                kc += 1
                acc = 0.0
                for i in range(d):
                    xc[i] = xcn[i]
                    dv = xf[i] - xc[i]
                    acc += dv * dv
                dist = np.sqrt(acc)
                if dist > g:
                    g = dist
        if ok:
            diverged[rep] = False
            gap[rep] = g
        else:
            diverged[rep] = True
            gap[rep] = np.inf
