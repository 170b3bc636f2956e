"""
Hot loops.

Every kernel has a numba implementation (``*_nb``) and a pure-numpy one
(``*_np``).  The public name is bound to one of them at import time according
to :data:`archrep._jit.USE_NUMBA`; both stay importable so they can be tested
against each other and benchmarked.
"""

import numpy as np

from archrep._jit import USE_NUMBA, njit

__all__ = [
    "BACKEND",
    "arch_recursion",
    "rep_values",
    "step_sup_inf",
    "max_min_partial",
]


# --------------------------------------------------------------------------
# ARCH(p) recursion from zero initial lags
# --------------------------------------------------------------------------
def _arch_recursion_np(a, eps, keep):
    reps, T = eps.shape
    p = a.shape[0]
    y2 = np.zeros((reps, T + p))
    out = np.empty((reps, keep))
    first_kept = T - keep
    for t in range(T):
        s = np.ones(reps)
        for i in range(p):
            s = s + a[i] * y2[:, t + p - 1 - i]
        yt = np.sqrt(s) * eps[:, t]
        y2[:, t + p] = yt * yt
        if t >= first_kept:
            out[:, t - first_kept] = yt
    return out


@njit
def _arch_recursion_nb(a, eps, keep):
    reps, T = eps.shape
    p = a.shape[0]
    out = np.empty((reps, keep))
    y2 = np.zeros(T + p)
    first_kept = T - keep
    for r in range(reps):
        for t in range(T):
            s = 1.0
            for i in range(p):
                s = s + a[i] * y2[t + p - 1 - i]
            yt = np.sqrt(s) * eps[r, t]
            y2[t + p] = yt * yt
            if t >= first_kept:
                out[r, t - first_kept] = yt
    return out


# --------------------------------------------------------------------------
# Residual empirical process on a grid
# --------------------------------------------------------------------------
def _rep_values_np(res, phi, xs):
    n = res.shape[0]
    q = phi.shape[1]
    if n == 0:
        return np.zeros((q, xs.shape[0]))
    order = np.argsort(res, kind="mergesort")
    shifted = phi[order] - phi[0]
    csum = np.zeros((n + 1, q))
    np.cumsum(shifted, axis=0, out=csum[1:])
    cnt = np.searchsorted(res[order], xs, side="right")
    frac = cnt / n
    vals = csum[cnt] - frac[:, None] * csum[n]
    return vals.T / np.sqrt(n)


@njit
def _rep_values_nb(res, phi, xs):
    n = res.shape[0]
    q = phi.shape[1]
    m = xs.shape[0]
    out = np.zeros((q, m))
    if n == 0:
        return out
    order = np.argsort(res, kind="mergesort")
    sres = res[order]
    csum = np.zeros((n + 1, q))
    for i in range(n):
        t = order[i]
        for k in range(q):
            csum[i + 1, k] = csum[i, k] + (phi[t, k] - phi[0, k])
    root_n = np.sqrt(n)
    j = 0
    for i in range(m):
        x = xs[i]
        while j < n and sres[j] <= x:
            j += 1
        frac = j / n
        for k in range(q):
            out[k, i] = (csum[j, k] - frac * csum[n, k]) / root_n
    return out


# --------------------------------------------------------------------------
# sup / inf over x of  A(x) - c * G(x)
# A is the step function  sum_t w_t I{eps_t <= x}
# --------------------------------------------------------------------------
def _step_sup_inf_np(w_sorted, g_sorted, c):
    n = w_sorted.shape[0]
    steps = np.zeros(n + 1)
    np.cumsum(w_sorted, out=steps[1:])
    g_lo = np.empty(n + 1)
    g_hi = np.empty(n + 1)
    g_lo[0] = 0.0
    g_lo[1:] = g_sorted
    g_hi[:n] = g_sorted
    g_hi[n] = 1.0
    lo = steps - c * g_lo
    hi = steps - c * g_hi
    return max(lo.max(), hi.max()), min(lo.min(), hi.min())


@njit
def _step_sup_inf_nb(w_sorted, g_sorted, c):
    n = w_sorted.shape[0]
    acc = 0.0
    sup = 0.0 - c * 0.0
    inf = sup
    for i in range(n + 1):
        if i > 0:
            acc = acc + w_sorted[i - 1]
        g_lo = 0.0 if i == 0 else g_sorted[i - 1]
        g_hi = 1.0 if i == n else g_sorted[i]
        v1 = acc - c * g_lo
        v2 = acc - c * g_hi
        if v1 > sup:
            sup = v1
        if v2 > sup:
            sup = v2
        if v1 < inf:
            inf = v1
        if v2 < inf:
            inf = v2
    return sup, inf


# --------------------------------------------------------------------------
# max_i min(|S_i|, |S_n - S_i|) and max_i |S_i| for rows of partial sums
# --------------------------------------------------------------------------
def _max_min_partial_np(S):
    S = np.atleast_2d(S)
    absS = np.abs(S)
    tail = np.abs(S[:, -1:] - S)
    return np.minimum(absS, tail).max(axis=1), absS.max(axis=1)


@njit
def _max_min_partial_nb(S):
    reps, m = S.shape
    mn = np.zeros(reps)
    mx = np.zeros(reps)
    for r in range(reps):
        last = S[r, m - 1]
        best = 0.0
        top = 0.0
        for i in range(m):
            a = abs(S[r, i])
            b = abs(last - S[r, i])
            v = a if a < b else b
            if v > best:
                best = v
            if a > top:
                top = a
        mn[r] = best
        mx[r] = top
    return mn, mx


if USE_NUMBA:
    BACKEND = "numba"
    _arch_recursion = _arch_recursion_nb
    _rep_values = _rep_values_nb
    _step_sup_inf = _step_sup_inf_nb
    _max_min_partial = _max_min_partial_nb
else:
    BACKEND = "numpy"
    _arch_recursion = _arch_recursion_np
    _rep_values = _rep_values_np
    _step_sup_inf = _step_sup_inf_np
    _max_min_partial = _max_min_partial_np


def arch_recursion(a, eps, keep=None):
    """
    Run ``y_t = eps_t * sqrt(1 + sum_i a_i y_{t-i}^2)`` from zero lags.

    Parameters
    ----------
    a : ndarray
        Coefficients ``(a_1, ..., a_p)``.
    eps : ndarray
        Innovations, shape ``(T,)`` or ``(reps, T)``.
    keep : int, optional
        Number of trailing values to return. Defaults to all ``T``.

    Returns
    -------
    ndarray
        Simulated values with the same leading shape as ``eps``.
    """
    a = np.ascontiguousarray(a, dtype=np.float64)
    eps = np.asarray(eps, dtype=np.float64)
    one_d = eps.ndim == 1
    eps2 = np.ascontiguousarray(np.atleast_2d(eps))
    T = eps2.shape[1]
    keep = T if keep is None else int(keep)
    if not 0 <= keep <= T:
        raise ValueError("keep must lie in [0, T]")
    out = _arch_recursion(a, eps2, keep)
    return out[0] if one_d else out


def rep_values(res, phi, xs):
    """W values ``(q, m)`` for residuals ``res``, weights ``phi`` ``(n, q)`` and sorted ``xs``."""
    res = np.ascontiguousarray(res, dtype=np.float64)
    phi = np.ascontiguousarray(phi, dtype=np.float64)
    xs = np.ascontiguousarray(xs, dtype=np.float64)
    return _rep_values(res, phi, xs)


def step_sup_inf(w_sorted, g_sorted, c):
    """Return ``(sup, inf)`` over x of ``sum_{eps_(i) <= x} w_i - c G(x)``."""
    w_sorted = np.ascontiguousarray(w_sorted, dtype=np.float64)
    g_sorted = np.ascontiguousarray(g_sorted, dtype=np.float64)
    sup, inf = _step_sup_inf(w_sorted, g_sorted, float(c))
    return float(sup), float(inf)


def max_min_partial(S):
    """Row-wise ``(max_i min(|S_i|, |S_n - S_i|), max_i |S_i|)``."""
    S = np.ascontiguousarray(np.atleast_2d(S), dtype=np.float64)
    return _max_min_partial(S)
