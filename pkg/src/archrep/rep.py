"""
Residual empirical process.

For a trial parameter ``theta`` the residuals are
``eps_t(theta) = y_t / sqrt(1 + sum_k theta_k y_{t-k}^2)`` and the process is

    W_{n,k}(x, theta) = n^{-1/2} sum_t phi_k(Y_{t-1}, theta) [I{eps_t(theta) <= x} - G_n(x, theta)]

with ``G_n`` the residual ECDF.  Both estimators are functionals of it.  The
Monte-Carlo oracles for the drift ``b^a(x, theta)`` and the covariance
``S_{phi,e}`` live here as well.
"""

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import integrate

from archrep.exceptions import OrderMismatch
from archrep.kernels import rep_values
from archrep.model import ArchParams, Path, simulate_batch, default_burn_in
from archrep.rng import substream

__all__ = [
    "WeightFn",
    "XGrid",
    "ProcessEval",
    "constant_weight",
    "clipped_e_weight",
    "e_ratio_weight",
    "squared_lag_weight",
    "redescending_weight",
    "redescending_level",
    "user_weight",
    "weight_from_name",
    "quantile_grid",
    "get_psi",
    "volatility",
    "residuals",
    "residual_ecdf",
    "rep_eval",
    "md_objective",
    "gm_score",
    "StationaryDraws",
    "stationary_draws",
    "bias_oracle",
    "s_phi_e_matrix",
    "aul_diagnostic",
    "boundedness_statistic",
]


def _theta_vec(theta):
    if isinstance(theta, ArchParams):
        return theta.a
    return np.atleast_1d(np.asarray(theta, dtype=float))


# --------------------------------------------------------------------------
# weights and grids
# --------------------------------------------------------------------------
@dataclass(frozen=True)
class WeightFn:
    """
    Weight ``phi(U, theta)`` mapping lag windows ``(n, p)`` to ``(n, p)``.

    ``bound`` is ``sup |phi_k|`` (``inf`` when unbounded).
    """

    kind: str
    func: Callable
    bound: float = np.inf
    smooth: bool = True
    label: str = ""

    def evaluate(self, U, theta):
        U = np.atleast_2d(np.asarray(U, dtype=float))
        th = _theta_vec(theta)
        out = np.asarray(self.func(U, th), dtype=float)
        return np.broadcast_to(out, U.shape).copy() if out.shape != U.shape else out

    @property
    def name(self):
        return self.label or self.kind


def e_ratio(U, theta):
    """``e_k(U, theta) = U_k^2 / s(theta, U)``."""
    U2 = U * U
    s = 1.0 + U2 @ theta
    return U2 / s[:, None]


def constant_weight(c=1.0):
    c = float(c)
    return WeightFn("constant", lambda U, th: np.full(U.shape, c), bound=abs(c), label=f"constant({c:g})")


def clipped_e_weight(L=10.0):
    """``min(e_k(U, theta), L)``; bounded by ``L``."""
    L = float(L)
    return WeightFn("clipped-e", lambda U, th: np.minimum(e_ratio(U, th), L), bound=L,
                    smooth=False, label=f"clipped-e({L:g})")


def e_ratio_weight():
    """Plain ``e_k``; bounded only by ``1/theta_k``, unbounded near ``theta_k = 0``."""
    return WeightFn("e-ratio", e_ratio, bound=np.inf, label="e-ratio")


def squared_lag_weight():
    """``U_k^2``; unbounded in ``U``, used as the non-robust contrast."""
    return WeightFn("squared-lag", lambda U, th: U * U, bound=np.inf, label="squared-lag")


def redescending_level(kappa=2.0, spec=None):
    """``E[eps^2 exp(-eps^2/kappa)] / E[exp(-eps^2/kappa)]``; ``kappa/(kappa+2)`` for the normal law."""
    if spec is None or spec.name == "standard-normal":
        return kappa / (kappa + 2.0)
    lo, hi = spec.support
    num = integrate.quad(lambda x: x * x * np.exp(-x * x / kappa) * spec.pdf(x), lo, hi)[0]
    den = integrate.quad(lambda x: np.exp(-x * x / kappa) * spec.pdf(x), lo, hi)[0]
    return num / den


def redescending_weight(kappa=2.0, spec=None):
    """
    ``U_k^2 exp(-U_k^2/kappa) + m (1 - exp(-U_k^2/kappa))``.

    Bounded and free of ``theta``.  For large lags the weight tends to ``m``,
    the level it has on average under the innovation law, so a gross outlier
    in the lags moves ``W_n`` by little more than noise.
    """
    kappa = float(kappa)
    m = redescending_level(kappa, spec)

    def func(U, th):
        d = np.exp(-U * U / kappa)
        return U * U * d + m * (1.0 - d)

    return WeightFn("redescending", func, bound=kappa / np.e + m, label=f"redescending({kappa:g})")


def user_weight(func, bound=np.inf, label="user"):
    return WeightFn("user", func, bound=float(bound), smooth=False, label=label)


def weight_from_name(name, L=10.0, c=1.0, kappa=2.0, spec=None):
    if name == "redescending":
        return redescending_weight(kappa, spec)
    if name == "constant":
        return constant_weight(c)
    if name == "clipped-e":
        return clipped_e_weight(L)
    if name == "e-ratio":
        return e_ratio_weight()
    if name == "squared-lag":
        return squared_lag_weight()
    raise ValueError(f"unknown weight {name!r}")


@dataclass(frozen=True, eq=False)
class XGrid:
    """Finite integrating measure: ``weights`` at sorted ``points``."""

    points: np.ndarray
    probs: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        w = np.asarray(self.weights, dtype=float)
        if pts.ndim != 1 or w.shape != pts.shape:
            raise ValueError("points and weights must be 1-d of equal length")
        if np.any(np.diff(pts) < 0):
            raise ValueError("grid points must be sorted")
        if np.any(w < 0):
            raise ValueError("grid weights must be nonnegative")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "probs", np.asarray(self.probs, dtype=float))

    @property
    def m(self):
        return self.points.size

    @property
    def total_mass(self):
        return float(self.weights.sum())


def quantile_grid(spec, m=64):
    """Points ``G^{-1}(i/(m+1))``, ``i = 1..m``, equal weights ``1/m``."""
    probs = np.arange(1, m + 1) / (m + 1.0)
    return XGrid(np.asarray(spec.ppf(probs), dtype=float), probs, np.full(m, 1.0 / m))


# --------------------------------------------------------------------------
# score functions for the GM estimator
# --------------------------------------------------------------------------
def _huber(c):
    return lambda x: np.clip(x, -c, c)


_PSI = {
    "identity": lambda x: x,
    "sign": np.sign,
    "square": lambda x: x * x,
    "abs": np.abs,
}


def get_psi(psi):
    """
    Resolve a score function.

    Accepts a callable, ``"identity"``, ``"sign"``, ``"square"``, ``"abs"`` or
    ``"huber(c)"``.  Odd scores do not identify a scale parameter when the
    innovations are symmetric; the even ones do.
    """
    if callable(psi):
        return psi
    psi = str(psi).strip()
    if psi.startswith("huber"):
        inner = psi[5:].strip("() ")
        return _huber(float(inner) if inner else 1.345)
    try:
        return _PSI[psi]
    except KeyError:
        raise ValueError(f"unknown psi {psi!r}") from None


# --------------------------------------------------------------------------
# residuals and the process
# --------------------------------------------------------------------------
def volatility(theta, U):
    """Return ``(s, sigma)`` with ``s = 1 + sum_k theta_k U_k^2`` and ``sigma = sqrt(s)``."""
    th = _theta_vec(theta)
    U = np.asarray(U, dtype=float)
    s = 1.0 + (U * U) @ th
    return s, np.sqrt(s)


def _check_order(path, theta):
    q = _theta_vec(theta).size
    if q > path.p:
        raise OrderMismatch(f"parameter order {q} exceeds path order {path.p}")
    return q


def residuals(path, theta):
    """``eps_t(theta)`` for ``t = 1..n``."""
    q = _check_order(path, theta)
    _, sigma = volatility(theta, path.lags(q))
    return path.y / sigma


def residual_ecdf(path, theta, x):
    """Residual ECDF ``G_n(x, theta)``; ``x`` may be an array."""
    res = np.sort(residuals(path, theta))
    cnt = np.searchsorted(res, np.asarray(x, dtype=float), side="right")
    out = cnt / max(res.size, 1)
    return float(out) if np.ndim(out) == 0 else out


@dataclass(frozen=True, eq=False)
class ProcessEval:
    """``values[k, i] = W_{n,k}(grid.points[i], theta)``."""

    theta: ArchParams
    grid: XGrid
    values: np.ndarray
    n: int

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def rows(self):
        """``(x, theta..., k, value)`` records for CSV export."""
        th = list(self.theta.a)
        for k in range(self.values.shape[0]):
            for i, x in enumerate(self.grid.points):
                yield [float(x), *th, k + 1, float(self.values[k, i])]


def _process(path, theta, phi, points):
    q = _check_order(path, theta)
    U = path.lags(q)
    th = _theta_vec(theta)
    s = 1.0 + (U * U) @ th
    res = path.y / np.sqrt(s)
    w = phi.evaluate(U, th)
    return rep_values(res, w, points)


def rep_eval(path, theta, phi, grid):
    """Evaluate ``W_n`` on ``grid`` at ``theta``."""
    theta = theta if isinstance(theta, ArchParams) else ArchParams(theta)
    vals = _process(path, theta, phi, grid.points)
    return ProcessEval(theta, grid, vals, path.n)


def md_objective(path, theta, phi, grid, norm_power=2):
    """``sum_i weight_i ||W_n(x_i, theta)||^norm_power``."""
    if norm_power not in (1, 2):
        raise ValueError("norm_power must be 1 or 2")
    vals = _process(path, theta, phi, grid.points)
    sq = np.einsum("ki,ki->i", vals, vals)
    per_x = sq if norm_power == 2 else np.sqrt(sq)
    return float(grid.weights @ per_x)


def gm_score(path, theta, phi, psi="square"):
    """
    ``l_n(theta) = sum_t phi_t psi(eps_t) - (sum_t phi_t) * mean(psi(eps))``.

    Evaluated as ``sum_t (phi_t - phi_1)(psi_t - mean psi)`` which is the same
    quantity and vanishes exactly for constant ``phi`` and for ``n = 1``.
    """
    q = _check_order(path, theta)
    U = path.lags(q)
    th = _theta_vec(theta)
    res = path.y / np.sqrt(1.0 + (U * U) @ th)
    w = phi.evaluate(U, th)
    if res.size == 0:
        return np.zeros(q)
    ps = np.asarray(get_psi(psi)(res), dtype=float)
    centred = ps - ps.mean()
    return (w - w[0]).T @ centred


# --------------------------------------------------------------------------
# Monte-Carlo oracles over the stationary law
# --------------------------------------------------------------------------
@dataclass(frozen=True, eq=False)
class StationaryDraws:
    """Independent stationary pairs ``(Y_0, y_1)`` and the innovation ``eps_1``."""

    a: ArchParams
    Y0: np.ndarray
    y1: np.ndarray
    eps1: np.ndarray

    @property
    def reps(self):
        return self.y1.size


def stationary_draws(a, spec, reps, seed, burn_in=None, stream=0):
    """
    ``reps`` fresh stationary draws, each from its own burned-in short path
    of length ``burn_in + p + 1``.
    """
    a = a if isinstance(a, ArchParams) else ArchParams(a)
    p = a.p
    burn_in = default_burn_in(p) if burn_in is None else burn_in
    y, eps = simulate_batch(a, spec, reps, p + 1, burn_in=burn_in, seed=seed, stream=stream)
    Y0 = y[:, p - 1::-1][:, :p]  # (y_0, y_{-1}, ..., y_{1-p})
    return StationaryDraws(a, np.ascontiguousarray(Y0), y[:, p].copy(), eps[:, p].copy())


@dataclass(frozen=True, eq=False)
class BiasEstimate:
    """``values[k, i]`` estimates ``b^a_k(x_i, theta)``; ``se`` matches."""

    theta: ArchParams
    values: np.ndarray
    se: np.ndarray
    reps: int


def _bias_from_draws(draws, theta, phi, points):
    th = _theta_vec(theta)
    q = th.size
    U = draws.Y0[:, :q]
    res = draws.y1 / np.sqrt(1.0 + (U * U) @ th)
    w = phi.evaluate(U, th)
    w = w - w[0]
    ind = (res[:, None] <= points[None, :]).astype(float)  # (reps, m)
    wc = w - w.mean(axis=0)
    ic = ind - ind.mean(axis=0)
    r = res.size
    vals = (wc.T @ ic) / r
    prod_sq = np.einsum("rk,ri->ki", wc * wc, ic * ic) / r
    se = np.sqrt(np.maximum(prod_sq - vals * vals, 0.0) / r)
    return vals, se


def bias_oracle(a, theta, phi, spec, grid, reps=10_000, seed=0, draws=None, burn_in=None):
    """
    Monte-Carlo estimate of
    ``b^a(x, theta) = E phi(Y_0, theta) I{eps_1(theta) <= x} - E phi(Y_0, theta) P(eps_1(theta) <= x)``.

    Pass ``draws`` to reuse one stationary sample across several ``theta``.
    """
    if draws is None:
        if reps < 1000:
            raise ValueError("reps must be >= 1000")
        draws = stationary_draws(a, spec, reps, seed, burn_in=burn_in)
    theta = theta if isinstance(theta, ArchParams) else ArchParams(theta)
    points = grid.points if isinstance(grid, XGrid) else np.asarray(grid, dtype=float)
    vals, se = _bias_from_draws(draws, theta, phi, points)
    return BiasEstimate(theta, vals, se, draws.reps)


def s_phi_e_matrix(a, phi, spec, reps=100_000, seed=0, draws=None, burn_in=None):
    """
    Monte-Carlo ``S_{phi,e}(a) = E phi^0(Y_0, a) e^0(Y_0, a)^T`` with centred
    ``phi`` and ``e``.  Returns ``(S, se)``.
    """
    a = a if isinstance(a, ArchParams) else ArchParams(a)
    if draws is None:
        if reps < 1000:
            raise ValueError("reps must be >= 1000")
        draws = stationary_draws(a, spec, reps, seed, burn_in=burn_in)
    U = draws.Y0
    w = phi.evaluate(U, a.a)
    w = w - w[0]
    e = e_ratio(U, a.a)
    wc = w - w.mean(axis=0)
    ec = e - e.mean(axis=0)
    r = U.shape[0]
    S = wc.T @ ec / r
    second = (wc * wc).T @ (ec * ec) / r
    se = np.sqrt(np.maximum(second - S * S, 0.0) / r)
    return S, se


def _s_points(p, B, per_axis):
    if B == 0:
        return np.zeros((1, p))
    ax = np.linspace(-B, B, per_axis)
    mesh = np.stack(np.meshgrid(*([ax] * p), indexing="ij"), axis=-1).reshape(-1, p)
    keep = np.linalg.norm(mesh, axis=1) <= B + 1e-12
    return mesh[keep]


def aul_diagnostic(a, phi, spec, n_list, B=2.0, reps=200, seed=0, grid=None, S=None,
                   s_points=None, per_axis=9, s_reps=200_000):
    """
    Linearity check of ``W_n`` near the truth.

    For each ``n`` and replicate, the sup over the ``s``-grid (``||s|| <= B``)
    and the x-grid of ``||W~_n(x, a + s/sqrt n) - W_n(x, a + s/sqrt n)||``
    where ``W~_n(x, theta) = W_n(x, a) + (1/2) sqrt(n) x g(x) S (theta - a)``.
    Points leaving the parameter set are skipped.

    Returns ``{n: {"median", "p90", "values"}}``.
    """
    a = a if isinstance(a, ArchParams) else ArchParams(a)
    p = a.p
    grid = quantile_grid(spec) if grid is None else grid
    if S is None:
        S, _ = s_phi_e_matrix(a, phi, spec, reps=s_reps, seed=seed)
    pts = _s_points(p, B, per_axis) if s_points is None else np.atleast_2d(s_points)
    xs = grid.points
    slope = 0.5 * xs * spec.pdf(xs)  # (m,)
    out = {}
    for n in n_list:
        stats_n = np.zeros(reps)
        y, _ = simulate_batch(a, spec, reps, n + p, seed=seed, stream=substream(1, n))
        for r in range(reps):
            path = Path(y[r], p)
            w_a = _process(path, a, phi, xs)
            best = 0.0
            for s in pts:
                theta = a.a + s / np.sqrt(n)
                if np.any(theta < 0):
                    continue
                w_th = _process(path, theta, phi, xs)
                lin = w_a + np.outer(S @ s, slope)
                d = np.sqrt(np.sum((lin - w_th) ** 2, axis=0)).max()
                best = max(best, d)
            stats_n[r] = best
        out[n] = {"median": float(np.median(stats_n)), "p90": float(np.quantile(stats_n, 0.9)),
                  "values": stats_n}
    return out


@dataclass
class BoundednessResult:
    n: int
    values: np.ndarray  # (reps,) sup over k, x, theta and both one-sided parts
    plus_part: np.ndarray  # (reps, p) sup of (W - sqrt n [b - rho d])^-
    minus_part: np.ndarray  # (reps, p) sup of (W - sqrt n [b + rho d])^+

    @property
    def median(self):
        return float(np.median(self.values))

    @property
    def p90(self):
        return float(np.quantile(self.values, 0.9))


def boundedness_statistic(a, phi, spec, rho, n, theta_grid, x_grid=None, reps=200, seed=0,
                          bias=None, bias_reps=200_000):
    """
    Distribution over replicates of

        sup_{x, theta} (W_{n,k}(x, theta) - sqrt(n) [b_k(x, theta) -/+ rho ||theta - a||])^{-/+}

    on finite grids.  ``b`` is zero at ``theta = a`` (the residual there is
    the innovation, independent of the lags) and is taken from
    :func:`bias_oracle` elsewhere; pass ``bias`` as ``{tuple(theta): values}``
    to reuse oracle values.
    """
    a = a if isinstance(a, ArchParams) else ArchParams(a)
    p = a.p
    x_grid = quantile_grid(spec) if x_grid is None else x_grid
    xs = x_grid.points
    thetas = [t if isinstance(t, ArchParams) else ArchParams(t) for t in theta_grid]
    if bias is None:
        bias = {}
        need = [t for t in thetas if t != a]
        if need:
            draws = stationary_draws(a, spec, bias_reps, seed, stream=substream(2, 0))
            for t in need:
                bias[tuple(t.a)] = _bias_from_draws(draws, t, phi, xs)[0]
    root_n = np.sqrt(n)
    y, _ = simulate_batch(a, spec, reps, n + p, seed=seed, stream=substream(3, n))
    plus = np.zeros((reps, p))
    minus = np.zeros((reps, p))
    for r in range(reps):
        path = Path(y[r], p)
        for t in thetas:
            w = _process(path, t, phi, xs)
            if t == a:
                centre = w
            else:
                centre = w - root_n * np.asarray(bias[tuple(t.a)])
            dist = root_n * rho * float(np.linalg.norm(t.a - a.a))
            neg = np.maximum(-(centre + dist), 0.0).max(axis=1)
            pos = np.maximum(centre - dist, 0.0).max(axis=1)
            plus[r] = np.maximum(plus[r], neg)
            minus[r] = np.maximum(minus[r], pos)
    values = np.maximum(plus.max(axis=1), minus.max(axis=1))
    return BoundednessResult(n, values, plus, minus)
