"""
Empirical dependence diagnostics for simulated ARCH(p) paths.

``empirical_alpha`` lower-bounds the strong-mixing coefficient by a maximum
over a finite family of events built from marginal-quantile bins.  The
module also holds the coefficient-decay check for the unrolled variance
recursion, a quadrature oracle for the stationary marginal density (p = 1),
a law-of-large-numbers check and a sup statistic of a weighted innovation
empirical process.
"""

import json
from dataclasses import dataclass, field

import numpy as np

from archrep.exceptions import PathTooShort
from archrep.kernels import step_sup_inf
from archrep.model import ArchParams, Path, simulate_batch, simulate_path
from archrep.parallel import parallel_map
from archrep.rep import e_ratio, stationary_draws
from archrep.rng import make_rng, substream

__all__ = [
    "MixingReport",
    "ALL_BELOW_NOISE_FLOOR",
    "empirical_alpha",
    "mixing_decay_report",
    "noise_floor",
    "sigma2_unrolled",
    "mj_moment_estimate",
    "product_density_oracle",
    "lln_check",
    "stationary_mean",
    "weighted_sup_statistic",
]

FIT_OK = "ok"
ALL_BELOW_NOISE_FLOOR = "all_below_noise_floor"


# --------------------------------------------------------------------------
# alpha-hat over quantile-bin rectangles
# --------------------------------------------------------------------------
def _interval_matrix(bins):
    # rows: contiguous bin ranges [i, j], columns: bins
    rows = []
    for i in range(bins):
        for j in range(i, bins):
            r = np.zeros(bins)
            r[i:j + 1] = 1.0
            rows.append(r)
    return np.array(rows)


def _rectangle_matrix(bins, dims):
    """0/1 matrix mapping every rectangle of bin ranges to the cells it covers."""
    iv = _interval_matrix(bins)
    out = iv
    for _ in range(dims - 1):
        out = np.einsum("ai,bj->abij", out, iv).reshape(out.shape[0] * iv.shape[0], -1)
    return out


def _cells(codes, bins):
    # codes: (T, d) bin indices -> flat cell index, first column most significant
    flat = np.zeros(codes.shape[0], dtype=np.int64)
    for j in range(codes.shape[1]):
        flat = flat * bins + codes[:, j]
    return flat


def empirical_alpha(path, k, block_p=None, m=2, bins=4):
    """
    Lower estimate of the strong-mixing coefficient at lag ``k``.

    ``A`` ranges over rectangles of marginal-quantile bins for the future
    block ``(y_{t+k}, ..., y_{t+k+block_p-1})`` and ``B`` over rectangles for
    the past window ``(y_t, ..., y_{t-m+1})``.  The result is
    ``max |P(A B) - P(A) P(B)|`` with probabilities taken as time averages;
    it never exceeds 1/4.
    """
    y = path.y if isinstance(path, Path) else np.asarray(path, dtype=float)
    block_p = (path.p if isinstance(path, Path) else 1) if block_p is None else int(block_p)
    if bins < 2:
        raise ValueError("bins must be >= 2")
    if k < 1 or m < 1 or block_p < 1:
        raise ValueError("k, m and block_p must be positive")
    span = m - 1 + k + block_p - 1
    T = y.size - span
    if T < 10 * bins ** (m + block_p):
        raise PathTooShort(f"path of length {y.size} too short for k={k}, m={m}, bins={bins}")
    edges = np.quantile(y, np.arange(1, bins) / bins)
    code = np.searchsorted(edges, y, side="left")
    t0 = m - 1
    past = np.stack([code[t0 - j: t0 - j + T] for j in range(m)], axis=1)
    fut = np.stack([code[t0 + k + j: t0 + k + j + T] for j in range(block_p)], axis=1)
    nf, npast = bins ** block_p, bins ** m
    joint = np.bincount(_cells(fut, bins) * npast + _cells(past, bins), minlength=nf * npast)
    joint = joint.reshape(nf, npast) / T
    RA = _rectangle_matrix(bins, block_p)
    RB = _rectangle_matrix(bins, m)
    pab = RA @ joint @ RB.T
    pa = RA @ joint.sum(axis=1)
    pb = RB @ joint.sum(axis=0)
    return float(np.abs(pab - np.outer(pa, pb)).max())


def noise_floor(path_len, k, m):
    """``3 N_eff^{-1/2}`` with ``N_eff = path_len / (k + m)``."""
    return 3.0 / np.sqrt(path_len / (k + m))


@dataclass
class MixingReport:
    """Averaged alpha-hat per lag with a fit of ``log alpha = log C - gamma k``."""

    ks: list
    alpha_hat: np.ndarray
    se: np.ndarray
    floor: np.ndarray
    C: float
    gamma: float
    r2: float
    status: str
    event_family: dict
    reps: int
    path_len: int
    params: list = field(default_factory=list)
    per_rep: np.ndarray = field(default=None, repr=False)

    @property
    def fitted_lags(self):
        return [k for k, a, f in zip(self.ks, self.alpha_hat, self.floor) if a > f]

    def csv_rows(self):
        for k, a, s in zip(self.ks, self.alpha_hat, self.se):
            yield [int(k), float(a), float(s)]

    def summary(self):
        def num(v):
            return v if np.isfinite(v) else ("inf" if v > 0 else "-inf") if not np.isnan(v) else "nan"

        return {
            "status": self.status,
            "C": num(self.C),
            "gamma": num(self.gamma),
            "r2": num(self.r2),
            "fitted_lags": self.fitted_lags,
            "event_family": self.event_family,
            "reps": self.reps,
            "path_len": self.path_len,
            "params": self.params,
            "note": "alpha_hat is a lower estimate over a finite event family; "
                    "only the decay form is fitted, not the theoretical constants",
        }

    def to_json(self):
        return json.dumps(self.summary(), indent=2, sort_keys=True)


def _fit_decay(ks, alpha, floor):
    keep = alpha > floor
    if keep.sum() < 2:
        return np.nan, np.inf, np.nan, ALL_BELOW_NOISE_FLOOR
    x = np.asarray(ks, dtype=float)[keep]
    z = np.log(alpha[keep])
    slope, intercept = np.polyfit(x, z, 1)
    resid = z - (intercept + slope * x)
    ss = np.sum((z - z.mean()) ** 2)
    r2 = 1.0 - np.sum(resid**2) / ss if ss > 0 else 1.0
    return float(np.exp(intercept)), float(-slope), float(r2), FIT_OK


def mixing_decay_report(params, spec, ks, path_len=200_000, reps=20, bins=4, m=2, block_p=None,
                        seed=0, jobs=1):
    """
    Average ``empirical_alpha`` over ``reps`` independent paths and fit the
    geometric decay on lags above the noise floor.

    With fewer than two lags above the floor the report has status
    ``all_below_noise_floor`` and ``gamma = inf``.
    """
    params = params if isinstance(params, ArchParams) else ArchParams(params)
    ks = [int(k) for k in ks]
    if not ks or any(b <= a for a, b in zip(ks, ks[1:])):
        raise ValueError("ks must be nonempty and increasing")
    block_p = params.p if block_p is None else block_p

    def replicate(r):
        path = simulate_path(params, spec, path_len, seed=seed, stream=substream(10, r))
        return [empirical_alpha(path, k, block_p=block_p, m=m, bins=bins) for k in ks]

    per = np.array(parallel_map(replicate, reps, jobs), dtype=float).reshape(reps, len(ks))
    alpha = per.mean(axis=0)
    se = per.std(axis=0, ddof=1) / np.sqrt(reps) if reps > 1 else np.zeros(len(ks))
    floor = np.array([noise_floor(path_len, k, m) for k in ks])
    C, gamma, r2, status = _fit_decay(ks, alpha, floor)
    family = {"bins": bins, "m": m, "block_p": block_p, "events": "quantile-bin rectangles"}
    return MixingReport(ks, alpha, se, floor, C, gamma, r2, status, family, reps, path_len,
                        params.a.tolist(), per)


# --------------------------------------------------------------------------
# unrolled variance recursion
# --------------------------------------------------------------------------
def sigma2_unrolled(a, z, eps):
    """
    Conditional variance after running the recursion ``len(eps)`` steps from
    the lag vector ``z = (y_{-1}, ..., y_{-p})``.

    ``eps`` may be ``(k-1,)`` or ``(reps, k-1)``; the value is affine in
    ``z**2``.
    """
    a = np.asarray(a, dtype=float)
    p = a.size
    eps = np.atleast_2d(np.asarray(eps, dtype=float))
    reps = eps.shape[0]
    lag2 = np.tile(np.asarray(z, dtype=float) ** 2, (reps, 1))
    for j in range(eps.shape[1]):
        s = 1.0 + lag2 @ a
        y2 = s * eps[:, j] ** 2
        lag2 = np.concatenate([y2[:, None], lag2[:, : p - 1]], axis=1)
    return 1.0 + lag2 @ a


def mj_moment_estimate(params, spec, k, reps=10_000, seed=0, return_draws=False):
    """
    Monte-Carlo means of the coefficients ``M^0, ..., M^p`` of

        sigma^2_k(z) = M^0 + M^1 z_1^2 + ... + M^p z_p^2.

    Each coefficient is read off exactly from ``sigma^2_k(0)`` and
    ``sigma^2_k(e_j)`` on shared innovation histories of length ``k - 1``.
    """
    params = params if isinstance(params, ArchParams) else ArchParams(params)
    if k < 1:
        raise ValueError("k must be >= 1")
    p = params.p
    rng = make_rng(seed, substream(11, k))
    eps = np.asarray(spec.sampler(rng, reps * (k - 1)), dtype=float).reshape(reps, k - 1)
    base = sigma2_unrolled(params.a, np.zeros(p), eps)
    M = np.empty((reps, p + 1))
    M[:, 0] = base
    for j in range(p):
        e = np.zeros(p)
        e[j] = 1.0
        M[:, j + 1] = sigma2_unrolled(params.a, e, eps) - base
    mean = M.mean(axis=0)
    se = M.std(axis=0, ddof=1) / np.sqrt(reps) if reps > 1 else np.zeros(p + 1)
    if return_draws:
        return mean, se, M, eps
    return mean, se


# --------------------------------------------------------------------------
# stationary density as a scale mixture (p = 1)
# --------------------------------------------------------------------------
def product_density_oracle(params, spec, x, quad_points=2000, reps=100_000, seed=0):
    """
    Density of the stationary ``y_0 = sigma_0 eps_0`` at ``x``:
    ``int z^{-1} g(x / z) dF(z)`` with ``F`` the Monte-Carlo law of
    ``sigma_0 = sqrt(1 + a_1 y_{-1}^2)`` discretised at ``quad_points``
    equal-mass quantile nodes.
    """
    params = params if isinstance(params, ArchParams) else ArchParams(params)
    if params.p != 1:
        raise ValueError("the density oracle is implemented for p = 1")
    x = np.asarray(x, dtype=float)
    if params.a[0] == 0.0:
        return spec.pdf(x)
    draws = stationary_draws(params, spec, reps, seed, stream=substream(12, 0))
    sigma = np.sqrt(1.0 + params.a[0] * draws.Y0[:, 0] ** 2)
    # mass beyond the 1e-6 quantiles is dropped
    lo, hi = np.quantile(sigma, [1e-6, 1 - 1e-6])
    nodes = np.quantile(sigma, (np.arange(quad_points) + 0.5) / quad_points)
    nodes = np.clip(nodes, lo, hi)
    xs = np.atleast_1d(x)
    out = np.array([np.mean(spec.pdf(v / nodes) / nodes) for v in xs])
    return out.reshape(x.shape) if x.ndim else float(out[0])


# --------------------------------------------------------------------------
# LLN and the weighted sup statistic
# --------------------------------------------------------------------------
def lln_check(params, spec, n, reps=20, seed=0, factor=4):
    """
    Spread of the time average of ``e_1(Y_{t-1}, a)`` across ``reps`` paths
    at lengths ``n`` and ``factor * n``.

    Returns ``{"sd_short", "sd_long", "ratio", "means_short", "means_long"}``;
    for ``factor = 4`` the ratio should be near 2.
    """
    params = params if isinstance(params, ArchParams) else ArchParams(params)
    p = params.p
    out = {}
    for label, length in (("short", n), ("long", factor * n)):
        y, _ = simulate_batch(params, spec, reps, length + p, seed=seed,
                              stream=substream(13, length))
        means = np.empty(reps)
        for r in range(reps):
            U = Path(y[r], p).lags()
            means[r] = e_ratio(U, params.a)[:, 0].mean()
        out[f"means_{label}"] = means
        out[f"sd_{label}"] = float(means.std(ddof=1))
    out["ratio"] = out["sd_short"] / out["sd_long"]
    return out


def stationary_mean(params, spec, f, length=10_000_000, seed=0):
    """Time average of ``f(Y_{t-1})`` over one long path (ergodic estimate of ``E f``)."""
    params = params if isinstance(params, ArchParams) else ArchParams(params)
    total = 0.0
    count = 0
    chunk = 1_000_000
    path = simulate_path(params, spec, min(chunk, length), seed=seed, stream=substream(14, 0))
    done = 0
    part = 0
    while done < length:
        total += float(np.sum(f(path.lags())))
        count += path.n
        done += path.n
        part += 1
        if done < length:
            # continue from a fresh stationary stretch; chunks are independent
            path = simulate_path(params, spec, min(chunk, length - done), seed=seed,
                                 stream=substream(14, part))
    return total / count


def weighted_sup_statistic(params, spec, f, n, reps=200, seed=0, mean_f=None):
    """
    Replicates of ``sup_x |n^{-1/2} sum_t [f(Y_{t-1}) I{eps_t <= x} - G(x) E f]|``
    on simulated paths, with ``eps_t`` the true innovations.

    ``f`` maps the lag matrix ``(n, p)`` to ``(n,)``.  ``E f`` comes from a
    long-path average unless ``mean_f`` is supplied.
    """
    params = params if isinstance(params, ArchParams) else ArchParams(params)
    p = params.p
    if mean_f is None:
        mean_f = stationary_mean(params, spec, f, seed=seed)
    y, eps = simulate_batch(params, spec, reps, n + p, seed=seed, stream=substream(15, n))
    root_n = np.sqrt(n)
    out = np.empty(reps)
    for r in range(reps):
        U = Path(y[r], p).lags()
        w = np.asarray(f(U), dtype=float)
        e = eps[r, p:]
        order = np.argsort(e, kind="mergesort")
        sup, inf = step_sup_inf(w[order], spec.cdf(e[order]), n * mean_f)
        out[r] = max(sup, -inf) / root_n
    return out
