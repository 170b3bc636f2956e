"""
Minimum-distance and generalized-M estimators over the parameter set.

``W_n(., theta)`` is piecewise constant in ``theta`` so both objectives are
minimised with a derivative-free simplex search from several Latin-hypercube
starts.  Every proposal is projected back onto the parameter set.
"""

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from archrep.exceptions import PathTooShort
from archrep.model import ArchParams, ParamDomain
from archrep.rep import (
    _bias_from_draws,
    clipped_e_weight,
    get_psi,
    gm_score,
    md_objective,
    quantile_grid,
    stationary_draws,
)
from archrep.rng import make_rng

__all__ = [
    "EstimateResult",
    "IdentificationResult",
    "project_to_domain",
    "nelder_mead",
    "grid_minimize",
    "estimate_md",
    "estimate_gm",
    "identification_check",
]

CONVERGED = "converged"
BUDGET_EXHAUSTED = "budget_exhausted"
NON_IDENTIFIED = "non_identified"


@dataclass
class EstimateResult:
    theta_hat: ArchParams
    objective_value: float
    n_evals: int
    restarts_used: int
    converged: bool
    status: str = CONVERGED
    method: str = "md"
    trace: Optional[list] = field(default=None, repr=False)


def project_to_domain(theta, domain=None):
    """
    Euclidean projection onto ``{theta >= 0, ||theta||_1 <= 1/beta_a}``.

    Negative entries are clipped; when the clipped vector is still too long
    in l1 the original vector is projected onto the scaled simplex.
    """
    domain = ParamDomain() if domain is None else domain
    v = np.atleast_1d(np.asarray(theta, dtype=float))
    r = domain.radius
    clipped = np.maximum(v, 0.0)
    if clipped.sum() <= r:
        return ArchParams(clipped)
    # sort-based projection onto {x >= 0, sum x = r}
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - r
    idx = np.arange(1, v.size + 1)
    rho = np.nonzero(u - css / idx > 0)[0][-1]
    tau = css[rho] / (rho + 1.0)
    out = np.maximum(v - tau, 0.0)
    # guard the l1 bound against rounding
    s = out.sum()
    if s > r:
        out *= r / s
    return ArchParams(out)


def _key(value, theta):
    return (value, float(np.sum(theta)), tuple(theta.tolist()))


def nelder_mead(fun, x0, domain, step=0.1, max_evals=400, xtol=1e-4, ftol=1e-10):
    """
    Projected Nelder-Mead.

    Returns ``(x_best, f_best, n_evals, converged, history)``.  Converges when
    the simplex diameter drops below ``xtol`` or the spread of vertex values
    below ``ftol``.
    """
    proj = lambda z: project_to_domain(z, domain).a
    x0 = proj(x0)
    p = x0.size
    history = []

    def f(z):
        val = float(fun(z))
        history.append((z.copy(), val))
        return val

    simplex = [x0]
    for i in range(p):
        z = x0.copy()
        z[i] += step
        cand = proj(z)
        if np.allclose(cand, x0):
            z = x0.copy()
            z[i] -= step
            cand = proj(z)
        simplex.append(cand)
    simplex = np.array(simplex)
    vals = np.array([f(z) for z in simplex])
    converged = False
    while True:
        order = sorted(range(p + 1), key=lambda j: _key(vals[j], simplex[j]))
        simplex, vals = simplex[order], vals[order]
        diam = np.max(np.abs(simplex[1:] - simplex[0])) if p > 0 else 0.0
        if diam < xtol or vals[-1] - vals[0] < ftol:
            converged = True
            break
        if len(history) >= max_evals:
            break
        centroid = simplex[:-1].mean(axis=0)
        xr = proj(centroid + (centroid - simplex[-1]))
        fr = f(xr)
        if fr < vals[0]:
            xe = proj(centroid + 2.0 * (centroid - simplex[-1]))
            fe = f(xe)
            if fe < fr:
                simplex[-1], vals[-1] = xe, fe
            else:
                simplex[-1], vals[-1] = xr, fr
            continue
        if fr < vals[-2]:
            simplex[-1], vals[-1] = xr, fr
            continue
        if fr < vals[-1]:
            xc = proj(centroid + 0.5 * (xr - centroid))
            fc = f(xc)
            if fc <= fr:
                simplex[-1], vals[-1] = xc, fc
                continue
        else:
            xc = proj(centroid + 0.5 * (simplex[-1] - centroid))
            fc = f(xc)
            if fc < vals[-1]:
                simplex[-1], vals[-1] = xc, fc
                continue
        for j in range(1, p + 1):
            simplex[j] = proj(simplex[0] + 0.5 * (simplex[j] - simplex[0]))
            vals[j] = f(simplex[j])
    return simplex[0].copy(), float(vals[0]), len(history), converged, history


def _grid_points(p, domain, step):
    ax = np.arange(0.0, domain.radius + 1e-12, step)
    mesh = np.stack(np.meshgrid(*([ax] * p), indexing="ij"), axis=-1).reshape(-1, p)
    return mesh[mesh.sum(axis=1) <= domain.radius + 1e-12]


def grid_minimize(fun, p, domain=None, step=0.02):
    """Exhaustive minimisation over a lattice of the parameter set (``p <= 2``)."""
    if p > 2:
        raise ValueError("grid scan is limited to p <= 2")
    domain = ParamDomain() if domain is None else domain
    pts = _grid_points(p, domain, step)
    vals = np.array([fun(z) for z in pts])
    best = min(range(len(pts)), key=lambda j: _key(vals[j], pts[j]))
    return pts[best].copy(), float(vals[best]), pts, vals


def _starts(p, domain, restarts, seed):
    # Latin hypercube: one point per stratum on every axis
    rng = make_rng(seed, 0)
    u = rng.random((restarts, p))
    strata = np.stack([rng.permutation(restarts) for _ in range(p)], axis=1)
    raw = (strata + u) / restarts * domain.radius
    return [project_to_domain(z, domain).a for z in raw]


def _multistart(fun, p, domain, restarts, max_evals, tol, ftol, seed, prescan, keep_trace, method):
    starts = _starts(p, domain, restarts, seed)
    total = 0
    extra = 0
    trace = [] if keep_trace else None
    if prescan is None:
        prescan = p <= 2
    if prescan and p <= 2:
        g_best, _, pts, vals = grid_minimize(fun, p, domain)
        total += len(pts)
        starts = [g_best] + starts
        extra = 1
    best = None
    all_zero = True
    for x0 in starts:
        x, fx, ne, conv, hist = nelder_mead(fun, x0, domain, max_evals=max_evals, xtol=tol, ftol=ftol)
        total += ne
        all_zero = all_zero and all(v == 0.0 for _, v in hist)
        if keep_trace:
            trace.extend((h[0].tolist(), h[1]) for h in hist)
        if best is None or _key(fx, x) < _key(best[1], best[0]):
            best = (x, fx, conv)
    x, fx, conv = best
    status = CONVERGED if conv else BUDGET_EXHAUSTED
    if all_zero:
        status, conv = NON_IDENTIFIED, False
    return x, total, len(starts) - extra, conv, status, trace


def _check_length(path):
    if path.n < 50 * path.p:
        raise PathTooShort(f"need n >= 50 p = {50 * path.p}, got n = {path.n}")


def estimate_md(path, phi=None, grid=None, domain=None, restarts=20, max_evals=400, tol=1e-4,
                ftol=1e-10, seed=0, norm_power=2, prescan=None, trace=False, spec=None):
    """
    Minimum-distance estimate: minimise ``sum_i w_i ||W_n(x_i, theta)||^norm_power``.

    ``grid`` defaults to 64 quantiles of ``spec`` (standard normal when no
    spec is given) and ``phi`` to ``clipped-e(10)``.  For ``p <= 2`` a lattice
    scan seeds one extra simplex search unless ``prescan=False``.
    """
    _check_length(path)
    phi = clipped_e_weight() if phi is None else phi
    if grid is None:
        if spec is None:
            from archrep.innovations import standard_normal

            spec = standard_normal()
        grid = quantile_grid(spec)
    domain = ParamDomain() if domain is None else domain
    fun = lambda th: md_objective(path, th, phi, grid, norm_power)
    x, total, used, conv, status, tr = _multistart(
        fun, path.p, domain, restarts, max_evals, tol, ftol, seed, prescan, trace, "md"
    )
    theta = ArchParams(x)
    return EstimateResult(theta, md_objective(path, theta, phi, grid, norm_power), total, used,
                          conv, status, "md", tr)


def estimate_gm(path, phi=None, psi="square", domain=None, restarts=20, max_evals=400, tol=1e-4,
                ftol=1e-10, seed=0, prescan=None, trace=False):
    """
    Generalized-M estimate: minimise ``||l_n(theta)||^2``.

    ``objective_value`` is ``||l_n(theta_hat)||``.  A score that vanishes at
    every evaluated point is reported with status ``non_identified``.
    """
    _check_length(path)
    phi = clipped_e_weight() if phi is None else phi
    domain = ParamDomain() if domain is None else domain
    n = path.n

    def fun(th):
        l = gm_score(path, th, phi, psi)
        return float(l @ l) / n

    x, total, used, conv, status, tr = _multistart(
        fun, path.p, domain, restarts, max_evals, tol, ftol, seed, prescan, trace, "gm"
    )
    theta = ArchParams(x)
    return EstimateResult(theta, float(np.linalg.norm(gm_score(path, theta, phi, psi))), total,
                          used, conv, status, "gm", tr)


@dataclass
class IdentificationResult:
    delta0: Optional[float]
    se: Optional[float]
    identified: Optional[bool]
    status: str
    ratios: dict = field(default_factory=dict)


def identification_check(a, phi, spec, grid=None, theta_grid=(), reps=200_000, seed=0,
                         mode="md", psi="square", batches=20):
    """
    Estimate the identification constant ``delta_0``.

    MD: ``min_theta sum_i w_i ||b(x_i, theta)||^2 / ||theta - a||^2``.
    GM: ``min_theta ||int b(x, theta) dpsi(x)|| / ||theta - a||``, using
    ``int b dpsi = -Cov(phi(Y_0, theta), psi(eps_1(theta)))``.

    Standard errors come from ``batches`` equal batches of the draws.  The
    check passes when ``delta0 - 3 se > 0``.
    """
    a = a if isinstance(a, ArchParams) else ArchParams(a)
    others = [t if isinstance(t, ArchParams) else ArchParams(t) for t in theta_grid]
    others = [t for t in others if t != a]
    if not others:
        return IdentificationResult(None, None, None, "not_applicable")
    grid = quantile_grid(spec) if grid is None else grid
    draws = stationary_draws(a, spec, reps, seed)
    psi_f = get_psi(psi)
    power = 2 if mode == "md" else 1

    def lhs(d, theta):
        if mode == "md":
            b, _ = _bias_from_draws(d, theta, phi, grid.points)
            return float(grid.weights @ np.sum(b * b, axis=0))
        th = theta.a
        U = d.Y0[:, : th.size]
        res = d.y1 / np.sqrt(1.0 + (U * U) @ th)
        w = phi.evaluate(U, th)
        w = w - w[0]
        ps = psi_f(res)
        cov = ((w - w.mean(axis=0)) * (ps - ps.mean())[:, None]).mean(axis=0)
        return float(np.linalg.norm(cov))

    size = draws.reps // batches
    sub = [
        type(draws)(a, draws.Y0[i * size:(i + 1) * size], draws.y1[i * size:(i + 1) * size],
                    draws.eps1[i * size:(i + 1) * size])
        for i in range(batches)
    ]
    ratios = {}
    best = None
    for t in others:
        dist = float(np.linalg.norm(t.a - a.a)) ** power
        full = lhs(draws, t) / dist
        parts = np.array([lhs(s, t) / dist for s in sub])
        se = float(parts.std(ddof=1) / np.sqrt(batches))
        ratios[tuple(t.a.tolist())] = (full, se)
        if best is None or full < best[0]:
            best = (full, se)
    delta0, se = best
    return IdentificationResult(delta0, se, bool(delta0 - 3 * se > 0), "ok", ratios)
