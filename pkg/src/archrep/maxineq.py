"""
Monte-Carlo and exact checks of fourth-moment maximal inequalities for
partial sums.

Every check returns an :class:`IneqReport`; a check passes when the bound
dominates the estimate plus three standard errors.
"""

import itertools
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from archrep.exceptions import AlphaAtOrBelowOne, HypothesisViolated, PartitionConditionFailed
from archrep.kernels import max_min_partial, step_sup_inf
from archrep.model import ArchParams, simulate_batch
from archrep.rep import WeightFn
from archrep.rng import make_rng, substream

__all__ = [
    "IneqReport",
    "IncrementLaw",
    "rademacher",
    "gaussian_increments",
    "mn_statistic",
    "k_alpha",
    "calibrate_u",
    "check_hypothesis",
    "verify_m4_lemma",
    "verify_s4_corollary",
    "verify_rosenthal",
    "MagnitudePartition",
    "verify_partition_sup_bound",
    "ROSENTHAL_C0",
]

ROSENTHAL_C0 = 8.0
EXACT_MAX_N = 20
CHUNK_ROWS = 500


@dataclass
class IneqReport:
    statistic_name: str
    mc_estimate: float
    mc_se: float
    bound_value: float
    reps: int
    config: dict = field(default_factory=dict)
    exact: bool = False

    @property
    def margin(self):
        """``bound / (estimate + 3 se)``; infinite when the denominator is 0."""
        den = self.mc_estimate + 3.0 * self.mc_se
        if den <= 0:
            return np.inf
        return self.bound_value / den

    @property
    def passed(self):
        return bool(self.bound_value >= self.mc_estimate + 3.0 * self.mc_se)

    def row(self):
        return [self.statistic_name, self.mc_estimate, self.mc_se, self.bound_value,
                self.margin, self.reps, "exact" if self.exact else "mc",
                "PASS" if self.passed else "FAIL"]


CSV_HEADER = ["statistic", "estimate", "se", "bound", "margin", "reps", "mode", "result"]


# --------------------------------------------------------------------------
# increments
# --------------------------------------------------------------------------
@dataclass(frozen=True)
class IncrementLaw:
    """
    I.i.d. increment law with known variance and fourth moment, so the
    hypothesis ``E (eta_{i+1} + ... + eta_j)^4 <= (u_{i+1} + ... + u_j)^alpha``
    can be checked analytically.
    """

    name: str
    sampler: Callable
    var: float
    m4: float
    scale: float = 1.0

    def block_m4(self, m):
        """``E (eta_1 + ... + eta_m)^4`` for mean-zero i.i.d. increments."""
        m = np.asarray(m, dtype=float)
        return m * self.m4 + 3.0 * m * (m - 1.0) * self.var**2


def rademacher(c=1.0):
    c = float(c)
    return IncrementLaw("rademacher", lambda rng, shape: c * (2.0 * rng.integers(0, 2, shape) - 1.0),
                        c * c, c**4, c)


def gaussian_increments(c=1.0):
    c = float(c)
    return IncrementLaw("gaussian", lambda rng, shape: c * rng.standard_normal(shape),
                        c * c, 3.0 * c**4, c)


def mn_statistic(partial_sums):
    """``max_i min(|S_i|, |S_n - S_i|)`` over ``S_0, ..., S_n`` (``S_0 = 0`` included)."""
    S = np.asarray(partial_sums, dtype=float)
    if S.ndim == 1:
        return float(max_min_partial(S[None, :])[0][0])
    return max_min_partial(S)[0]


def k_alpha(alpha):
    """``(2^{-1/4} - 2^{-alpha/4})^{-4}`` for ``alpha > 1``."""
    alpha = float(alpha)
    if not alpha > 1.0:
        raise AlphaAtOrBelowOne(f"alpha must exceed 1, got {alpha}")
    return (2.0 ** -0.25 - 2.0 ** (-alpha / 4.0)) ** -4


def calibrate_u(law, n, alpha):
    """Smallest constant ``u`` with ``E S_m^4 <= (u m)^alpha`` for every ``m <= n``."""
    m = np.arange(1, n + 1, dtype=float)
    return float(np.max(law.block_m4(m) ** (1.0 / alpha) / m))


def check_hypothesis(law, u, alpha):
    """Raise :class:`HypothesisViolated` unless every window satisfies the moment hypothesis."""
    u = np.asarray(u, dtype=float)
    n = u.size
    cs = np.concatenate([[0.0], np.cumsum(u)])
    for m in range(1, n + 1):
        window = cs[m:] - cs[:-m]  # all windows of length m
        lhs = float(law.block_m4(m))
        worst = float(window.min())
        if lhs > worst**alpha * (1.0 + 1e-12):
            raise HypothesisViolated(
                f"E S_{m}^4 = {lhs:.6g} exceeds (sum u)^alpha = {worst ** alpha:.6g} on a window"
            )


def _resolve_u(law, u, n, alpha):
    if u is None:
        u = calibrate_u(law, n, alpha)
    u = np.broadcast_to(np.asarray(u, dtype=float), (n,)).copy()
    if np.any(u < 0):
        raise ValueError("u must be nonnegative")
    check_hypothesis(law, u, alpha)
    return u


def _enumerate_sums(n, c):
    signs = np.array(list(itertools.product((-1.0, 1.0), repeat=n))) * c
    S = np.zeros((signs.shape[0], n + 1))
    np.cumsum(signs, axis=1, out=S[:, 1:])
    return S


def _mc_sums(law, n, reps, seed, stream):
    rng = make_rng(seed, stream)
    for start in range(0, reps, CHUNK_ROWS):
        rows = min(CHUNK_ROWS, reps - start)
        inc = law.sampler(rng, (rows, n))
        S = np.zeros((rows, n + 1))
        np.cumsum(inc, axis=1, out=S[:, 1:])
        yield S


def _partial_sum_check(name, law, u, n, alpha, reps, seed, exact, bound_factor):
    if n < 1:
        raise ValueError("n must be >= 1")
    law = rademacher() if law is None else law
    u = _resolve_u(law, u, n, alpha)
    bound = bound_factor * k_alpha(alpha) * float(u.sum()) ** alpha
    use_m = name == "M_n^4"
    config = {"law": law.name, "scale": law.scale, "n": n, "alpha": alpha,
              "u_sum": float(u.sum()), "seed": seed}
    if exact is None:
        exact = law.name == "rademacher" and n <= 12
    if exact:
        if law.name != "rademacher" or n > EXACT_MAX_N:
            raise ValueError(f"exact enumeration needs rademacher increments and n <= {EXACT_MAX_N}")
        S = _enumerate_sums(n, law.scale)
        mn, mx = max_min_partial(S)
        stat = mn**4 if use_m else mx**4
        return IneqReport(name, float(stat.mean()), 0.0, bound, 2**n, config, exact=True)
    vals = []
    for S in _mc_sums(law, n, reps, seed, substream(20, n)):
        mn, mx = max_min_partial(S)
        vals.append(mn**4 if use_m else mx**4)
    v = np.concatenate(vals)
    se = float(v.std(ddof=1) / np.sqrt(v.size)) if v.size > 1 else 0.0
    return IneqReport(name, float(v.mean()), se, bound, int(reps), config)


def verify_m4_lemma(increment_law=None, u=None, n=10, alpha=1.5, reps=10_000, seed=0, exact=None):
    """
    ``E M_n^4 <= K_alpha (u_1 + ... + u_n)^alpha``.

    ``u`` defaults to the analytic calibration of :func:`calibrate_u`.
    Rademacher increments with ``n <= 12`` are enumerated exhaustively
    unless ``exact=False``.
    """
    return _partial_sum_check("M_n^4", increment_law, u, n, alpha, reps, seed, exact, 1.0)


def verify_s4_corollary(increment_law=None, u=None, n=10, alpha=1.5, reps=10_000, seed=0,
                        exact=None):
    """``E max_i S_i^4 <= 2^{alpha-1} K_alpha (u_1 + ... + u_n)^alpha``."""
    return _partial_sum_check("max S_i^4", increment_law, u, n, alpha, reps, seed, exact,
                              2.0 ** (alpha - 1.0))


# --------------------------------------------------------------------------
# weighted empirical process on ARCH paths
# --------------------------------------------------------------------------
def _as_weight(f, params, component=0):
    """Turn ``f`` into a map from the lag matrix ``(n, p)`` to ``(n,)``."""
    if isinstance(f, WeightFn):
        return lambda U: f.evaluate(U, params.a)[:, component]
    if callable(f):
        return lambda U: np.asarray(f(U), dtype=float).reshape(U.shape[0])
    c = float(f)
    return lambda U: np.full(U.shape[0], c)


def _lag_matrix(row, p):
    n = row.size - p
    return np.stack([row[p - 1 - k: p - 1 - k + n] for k in range(p)], axis=1)


def _batched_paths(params, spec, n, reps, seed, stream):
    p = params.p
    for start in range(0, reps, CHUNK_ROWS):
        rows = min(CHUNK_ROWS, reps - start)
        y, eps = simulate_batch(params, spec, rows, n + p, seed=seed,
                                stream=substream(stream, start // CHUNK_ROWS))
        for r in range(rows):
            yield _lag_matrix(y[r], p), eps[r, p:]


def verify_rosenthal(params, spec, f=1.0, x=None, n=2000, reps=10_000, seed=0):
    """
    ``E (n^{-1/2} sum_t f(Y_{t-1}) [I{eps_t <= x} - G(x)])^4 <= 8 E f^4``.

    ``E f^4`` is the pooled sample average over all simulated lag windows.
    ``x`` defaults to the median of the innovation law.
    """
    params = params if isinstance(params, ArchParams) else ArchParams(params)
    x = float(spec.ppf(0.5)) if x is None else float(x)
    Gx = float(spec.cdf(x))
    fw = _as_weight(f, params)
    root_n = np.sqrt(n)
    stat = np.empty(reps)
    f4_sum = 0.0
    for r, (U, eps) in enumerate(_batched_paths(params, spec, n, reps, seed, 21)):
        w = fw(U)
        stat[r] = (w @ ((eps <= x) - Gx) / root_n) ** 4
        f4_sum += float(np.sum(w**4))
    ef4 = f4_sum / (reps * n)
    se = float(stat.std(ddof=1) / np.sqrt(reps)) if reps > 1 else 0.0
    config = {"params": params.a.tolist(), "x": x, "n": n, "seed": seed, "E_f4": ef4}
    return IneqReport("rosenthal", float(stat.mean()), se, ROSENTHAL_C0 * ef4, reps, config)


# --------------------------------------------------------------------------
# sup over a partition of the lag space
# --------------------------------------------------------------------------
@dataclass(frozen=True)
class MagnitudePartition:
    """
    Countable partition of the lag space by ``|f|``.

    Bin ``j`` (any integer) holds ``anchor * ratio**j <= |f| < anchor * ratio**(j+1)``
    so ``sup/inf <= ratio`` on every bin.  Points with ``f = 0`` carry no
    weight and are dropped.  ``ratio = None`` gives the one-bin partition.
    """

    ratio: float = None
    anchor: float = 1.0

    @classmethod
    def geometric(cls, lo, hi, bins):
        """Ratio chosen so that ``bins`` bins span ``[lo, hi]``; bins continue beyond."""
        if bins == 1:
            return cls(None)
        if not 0 < lo < hi:
            raise ValueError("need 0 < lo < hi")
        return cls(float((hi / lo) ** (1.0 / bins)), float(lo))

    def assign(self, absf):
        """Bin labels; ``None`` partition puts every nonzero value in bin 0."""
        if self.ratio is None:
            lab = np.zeros(absf.shape)
        else:
            with np.errstate(divide="ignore"):
                lab = np.floor(np.log(absf / self.anchor) / np.log(self.ratio))
        lab = np.where(absf > 0, lab, np.iinfo(np.int64).min)
        return lab.astype(np.int64)


ZERO_BIN = np.iinfo(np.int64).min


def _partition_constants(bin_sup, bin_inf, d):
    """Realised ``N = max sup/inf`` and least ``L`` with ``sum_{sup_j <= v} sup_j <= L v^d``."""
    sup = np.asarray(bin_sup, dtype=float)
    inf = np.asarray(bin_inf, dtype=float)
    if not sup.size:
        return 1.0, 0.0
    N = float(np.max(sup / inf))
    s = np.sort(sup)
    # the left side jumps at each sup_j, so the ratio peaks right there
    L = float(np.max(np.cumsum(s) / s**d))
    return N, L


def _pilot_partition(fw, params, spec, n, seed, bins):
    if bins == 1:
        return MagnitudePartition(None)
    pilot = next(_batched_paths(params, spec, max(n, 10_000), 1, seed, 22))[0]
    absf = np.abs(fw(pilot))
    absf = absf[absf > 0]
    if absf.size == 0:
        return MagnitudePartition(None)
    lo, hi = np.quantile(absf, [0.001, 0.999])
    return MagnitudePartition.geometric(lo, hi, bins) if hi > lo else MagnitudePartition(None)


def verify_partition_sup_bound(params, spec, f, partition=None, n=2000, d=1.0, N_ratio=None,
                               L=None, reps=500, seed=0, bins=8):
    """
    ``E sup_z |sum_j S_{n,j}(z_j)| <= (8 sqrt2 K_{3/2})^{1/4} R + n^{(d-2)/4} 3 N^d L R^d``
    with ``S_{n,j}(z) = n^{-1/2} sum_t f_j(Y_{t-1}) [I{eps_t <= z} - G(z)]``
    and ``f_j = f I{bin j}``.

    The default partition is geometric with ``bins`` bins between the 0.1%
    and 99.9% quantiles of ``|f|`` on a pilot path, continued in both
    directions.  ``N`` and ``L`` are measured on the bins that occur;
    supplied values are checked against them
    (:class:`PartitionConditionFailed` when violated), measured values are
    used otherwise.  ``R = sum_j (E f_j^4)^{1/4}`` is estimated from the
    replicates.  The sup over ``z`` separates across bins and is exact for
    each step function.
    """
    params = params if isinstance(params, ArchParams) else ArchParams(params)
    if not 1.0 <= d < 2.0:
        raise ValueError("d must lie in [1, 2)")
    fw = _as_weight(f, params)
    if partition is None:
        partition = _pilot_partition(fw, params, spec, n, seed, bins)
    bin_sup = {}
    bin_inf = {}
    f4 = {}
    stat = np.empty(reps)
    root_n = np.sqrt(n)
    for r, (U, eps) in enumerate(_batched_paths(params, spec, n, reps, seed, 23)):
        w = fw(U)
        lab = partition.assign(np.abs(w))
        order = np.argsort(eps, kind="mergesort")
        g = spec.cdf(eps[order])
        w_sorted = w[order]
        lab_sorted = lab[order]
        total_sup = 0.0
        total_inf = 0.0
        for j in np.unique(lab_sorted):
            if j == ZERO_BIN:
                continue
            sel = lab_sorted == j
            wj = w_sorted[sel]
            sup, inf = step_sup_inf(wj, g[sel], float(wj.sum()))
            total_sup += sup
            total_inf += inf
            aj = np.abs(wj)
            j = int(j)
            bin_sup[j] = max(bin_sup.get(j, 0.0), float(aj.max()))
            bin_inf[j] = min(bin_inf.get(j, np.inf), float(aj.min()))
            f4[j] = f4.get(j, 0.0) + float(np.sum(wj**4))
        stat[r] = max(total_sup, -total_inf) / root_n
    keys = sorted(bin_sup)
    R = float(sum((f4[j] / (reps * n)) ** 0.25 for j in keys))
    N_real, L_real = _partition_constants([bin_sup[j] for j in keys], [bin_inf[j] for j in keys], d)
    if N_ratio is not None and N_real > N_ratio * (1 + 1e-12):
        raise PartitionConditionFailed(f"realised sup/inf ratio {N_real:.6g} exceeds N = {N_ratio}")
    if L is not None and L_real > L * (1 + 1e-12):
        raise PartitionConditionFailed(f"realised L = {L_real:.6g} exceeds supplied L = {L}")
    N_use = N_real if N_ratio is None else float(N_ratio)
    L_use = L_real if L is None else float(L)
    lead = (8.0 * np.sqrt(2.0) * k_alpha(1.5)) ** 0.25
    bound = lead * R + n ** ((d - 2.0) / 4.0) * 3.0 * N_use**d * L_use * R**d
    se = float(stat.std(ddof=1) / np.sqrt(reps)) if reps > 1 else 0.0
    config = {"params": params.a.tolist(), "n": n, "d": d, "N": N_use, "L": L_use, "R": R,
              "bins_used": len(keys), "ratio": partition.ratio, "seed": seed}
    return IneqReport("partition_sup", float(stat.mean()), se, bound, reps, config)
