"""
Innovation laws and the moment/density conditions on them.
"""

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import integrate, special, stats

from archrep.exceptions import MissingMoment
from archrep.rng import make_rng

__all__ = [
    "InnovationSpec",
    "ConditionReport",
    "standard_normal",
    "student_t",
    "uniform_symmetric",
    "tabulated",
    "from_name",
    "sample_innovations",
    "check_conditions",
]

KNOWN_LAWS = ("standard-normal", "student-t", "uniform-symmetric", "user-tabulated")


@dataclass(frozen=True, eq=False)
class InnovationSpec:
    """
    Law of the i.i.d. innovations.

    ``moments`` maps an exponent ``r`` to ``E|eps|^r`` (``inf`` when the
    moment does not exist).  The table is filled from closed forms for the
    built-in laws and must be supplied for tabulated ones.
    """

    name: str
    pdf: Callable
    cdf: Callable
    ppf: Callable
    sampler: Callable
    moments: dict
    beta0: float = 0.5
    params: dict = field(default_factory=dict)
    dpdf: Optional[Callable] = None
    support: tuple = (-np.inf, np.inf)

    def moment(self, r):
        """``E|eps|^r`` from the table."""
        for key, val in self.moments.items():
            if np.isclose(float(key), float(r), rtol=0.0, atol=1e-12):
                return float(val)
        raise MissingMoment(f"moment E|eps|^{r:g} missing for law {self.name!r}")

    @property
    def high_order(self):
        """Exponent ``8 + beta0`` used by the eighth-moment condition."""
        return 8.0 + self.beta0

    def sample(self, n, seed, stream=0):
        return sample_innovations(self, n, seed, stream)

    def describe(self):
        out = {"name": self.name, "beta0": self.beta0}
        out.update(self.params)
        return out


def _abs_moment_normal(r):
    return 2.0 ** (r / 2.0) * special.gamma((r + 1.0) / 2.0) / np.sqrt(np.pi)


def standard_normal(beta0=0.5):
    orders = (1.0, 2.0, 4.0, 8.0 + beta0)
    return InnovationSpec(
        name="standard-normal",
        pdf=stats.norm.pdf,
        cdf=stats.norm.cdf,
        ppf=stats.norm.ppf,
        sampler=lambda rng, n: rng.standard_normal(n),
        moments={r: _abs_moment_normal(r) for r in orders},
        beta0=beta0,
        dpdf=lambda x: -np.asarray(x) * stats.norm.pdf(x),
    )


def student_t(df, beta0=0.5):
    """Student t with ``df > 2`` degrees of freedom rescaled to unit variance."""
    df = float(df)
    if df <= 2:
        raise ValueError("student-t needs df > 2 for a finite variance")
    scale = np.sqrt((df - 2.0) / df)
    law = stats.t(df, scale=scale)

    def abs_moment(r):
        if r >= df:
            return np.inf
        return float(
            scale**r
            * df ** (r / 2.0)
            * special.gamma((r + 1.0) / 2.0)
            * special.gamma((df - r) / 2.0)
            / (np.sqrt(np.pi) * special.gamma(df / 2.0))
        )

    def dpdf(x):
        x = np.asarray(x, dtype=float)
        u = x / scale
        return law.pdf(x) * (-(df + 1.0) * u / (df + u * u)) / scale

    orders = (1.0, 2.0, 4.0, 8.0 + beta0)
    return InnovationSpec(
        name="student-t",
        pdf=law.pdf,
        cdf=law.cdf,
        ppf=law.ppf,
        sampler=lambda rng, n: scale * rng.standard_t(df, n),
        moments={r: abs_moment(r) for r in orders},
        beta0=beta0,
        params={"df": df},
        dpdf=dpdf,
    )


def uniform_symmetric(half_width=1.0, beta0=0.5):
    c = float(half_width)
    if c <= 0:
        raise ValueError("half_width must be positive")
    law = stats.uniform(loc=-c, scale=2 * c)
    orders = (1.0, 2.0, 4.0, 8.0 + beta0)
    return InnovationSpec(
        name="uniform-symmetric",
        pdf=law.pdf,
        cdf=law.cdf,
        ppf=law.ppf,
        sampler=lambda rng, n: rng.uniform(-c, c, n),
        moments={r: c**r / (r + 1.0) for r in orders},
        beta0=beta0,
        params={"half_width": c},
        dpdf=lambda x: np.zeros_like(np.asarray(x, dtype=float)),
        support=(-c, c),
    )


def tabulated(x, density, moments, beta0=0.5):
    """
    Law with a piecewise-linear density through ``(x, density)``.

    The table is renormalised to integrate to one.  CDF and quantile are the
    exact integral of the interpolant and its inverse.  ``moments`` must hold
    at least the exponents 2 and ``8 + beta0``.
    """
    x = np.asarray(x, dtype=float)
    d = np.asarray(density, dtype=float)
    if x.ndim != 1 or x.shape != d.shape or x.size < 2:
        raise ValueError("x and density must be 1-d arrays of equal length >= 2")
    if np.any(np.diff(x) <= 0):
        raise ValueError("x must be strictly increasing")
    if np.any(d < 0):
        raise ValueError("density must be nonnegative")
    h = np.diff(x)
    mass = np.concatenate([[0.0], np.cumsum(0.5 * h * (d[:-1] + d[1:]))])
    d = d / mass[-1]
    mass = mass / mass[-1]
    slope = np.diff(d) / h

    def pdf(v):
        v = np.asarray(v, dtype=float)
        return np.interp(v, x, d, left=0.0, right=0.0)

    def cdf(v):
        v = np.asarray(v, dtype=float)
        i = np.clip(np.searchsorted(x, v, side="right") - 1, 0, x.size - 2)
        u = np.clip(v - x[i], 0.0, h[i])
        out = mass[i] + d[i] * u + 0.5 * slope[i] * u * u
        return np.where(v < x[0], 0.0, np.where(v >= x[-1], 1.0, out))

    def ppf(q):
        q = np.asarray(q, dtype=float)
        i = np.clip(np.searchsorted(mass, q, side="right") - 1, 0, x.size - 2)
        delta = np.maximum(q - mass[i], 0.0)
        disc = np.sqrt(np.maximum(d[i] ** 2 + 2.0 * slope[i] * delta, 0.0))
        denom = d[i] + disc
        with np.errstate(divide="ignore", invalid="ignore"):
            u = np.where(denom > 0, 2.0 * delta / denom, 0.0)
        return x[i] + np.minimum(u, h[i])

    def dpdf(v):
        v = np.asarray(v, dtype=float)
        i = np.clip(np.searchsorted(x, v, side="right") - 1, 0, x.size - 2)
        inside = (v >= x[0]) & (v < x[-1])
        return np.where(inside, slope[i], 0.0)

    return InnovationSpec(
        name="user-tabulated",
        pdf=pdf,
        cdf=cdf,
        ppf=ppf,
        sampler=lambda rng, n: ppf(rng.random(n)),
        moments={float(k): float(v) for k, v in moments.items()},
        beta0=beta0,
        params={"points": int(x.size)},
        dpdf=dpdf,
        support=(float(x[0]), float(x[-1])),
    )


def from_name(name, beta0=0.5, **params):
    """Build a built-in law from its name and parameters (config selector)."""
    if name == "standard-normal":
        return standard_normal(beta0=beta0)
    if name == "student-t":
        if "df" not in params or params["df"] is None:
            raise ValueError("student-t requires df")
        return student_t(params["df"], beta0=beta0)
    if name == "uniform-symmetric":
        return uniform_symmetric(params.get("half_width", 1.0) or 1.0, beta0=beta0)
    if name == "user-tabulated":
        return tabulated(params["x"], params["density"], params["moments"], beta0=beta0)
    raise ValueError(f"unknown innovation law {name!r}; choose from {KNOWN_LAWS}")


def sample_innovations(spec, n, seed, stream=0):
    """``n`` i.i.d. draws from ``spec``; bit-identical for equal arguments."""
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = make_rng(seed, stream)
    return np.asarray(spec.sampler(rng, int(n)), dtype=float)


@dataclass
class ConditionReport:
    condition1: bool
    condition3: bool
    condition5: bool
    witnesses: dict

    @property
    def all_hold(self):
        return self.condition1 and self.condition3 and self.condition5


def _derivative(spec, xs):
    if spec.dpdf is not None:
        return np.asarray(spec.dpdf(xs), dtype=float)
    h = 1e-5 * (1.0 + np.abs(xs))
    return (spec.pdf(xs + h) - spec.pdf(xs - h)) / (2 * h)


def check_conditions(spec, domain, points=10_000, tail_tol=1e-4):
    """
    Check the stationarity, density and moment conditions.

    Condition 1 is checked uniformly over the domain:
    ``E eps^2 * sup_{a in domain} ||a||_1 < 1``.  The density condition is
    scanned on ``points`` equispaced points between the ``1e-6`` and
    ``1 - 1e-6`` quantiles, with ``|x g(x)| < tail_tol`` at both ends
    standing in for the limit at infinity.
    """
    m1 = spec.moment(1)
    m2 = spec.moment(2)
    m4 = spec.moment(4)
    m8 = spec.moment(spec.high_order)

    cond1_value = m2 * domain.sup_l1
    cond1 = bool(np.isfinite(m2) and cond1_value < 1.0)

    lo, hi = spec.ppf(1e-6), spec.ppf(1 - 1e-6)
    xs = np.linspace(lo, hi, points)
    g = np.asarray(spec.pdf(xs), dtype=float)
    dg = _derivative(spec, xs)
    deriv_sup = float(np.max((1 + xs**2) * np.abs(dg)))
    abs_dg_x = float(integrate.trapezoid(np.abs(dg * xs), xs))
    tail_left = float(abs(lo * spec.pdf(lo)))
    tail_right = float(abs(hi * spec.pdf(hi)))
    positive = bool(np.all(g > 0))
    cond3 = bool(
        positive
        and tail_left < tail_tol
        and tail_right < tail_tol
        and np.isfinite(deriv_sup)
        and np.isfinite(abs_dg_x)
    )

    cond5 = bool(np.isfinite(m8))
    witnesses = {
        "m1": m1,
        "m2": m2,
        "m4": m4,
        "m8_beta": m8,
        "high_order": spec.high_order,
        "sup_l1": domain.sup_l1,
        "condition1_value": cond1_value,
        "g_positive": positive,
        "tail_left": tail_left,
        "tail_right": tail_right,
        "deriv_sup": deriv_sup,
        "abs_deriv_x_integral": abs_dg_x,
        "scan_range": (float(lo), float(hi)),
        "finite": {"m1": bool(np.isfinite(m1)), "m2": bool(np.isfinite(m2)),
                   "m4": bool(np.isfinite(m4)), "m8_beta": cond5},
    }
    return ConditionReport(cond1, cond3, cond5, witnesses)
