"""
Gross-outlier contamination and the estimator robustness experiment.

A contaminated observation is ``y_t + z_t xi_t`` with ``z_t`` Bernoulli(gamma)
and ``xi_t`` drawn from an outlier law, both independent of the path.
"""

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from archrep.estimators import estimate_gm, estimate_md
from archrep.exceptions import ArchRepError, InsufficientGammaGrid
from archrep.model import ArchParams, simulate_path
from archrep.parallel import parallel_map
from archrep.rep import _process, e_ratio_weight, redescending_weight
from archrep.rng import make_rng, substream

__all__ = [
    "OutlierLaw",
    "point_mass",
    "two_point",
    "user_outliers",
    "ContaminationScheme",
    "contaminate",
    "CellResult",
    "BiasTable",
    "robustness_experiment",
    "influence_summary",
    "flip_perturbation",
]

DEFAULT_GAMMAS = (0.0, 0.01, 0.02, 0.05)


@dataclass(frozen=True)
class OutlierLaw:
    """Sampler ``(rng, n) -> xi`` with a short descriptor."""

    label: str
    sampler: Callable
    scale: float = 0.0

    def sample(self, rng, n):
        xi = np.asarray(self.sampler(rng, n), dtype=float)
        if not np.all(np.isfinite(xi)):
            raise ValueError("outlier draws must be finite")
        return xi


def point_mass(c):
    c = float(c)
    return OutlierLaw(f"point({c:g})", lambda rng, n: np.full(n, c), abs(c))


def two_point(c):
    """``+c`` or ``-c`` with probability 1/2 each."""
    c = float(c)
    return OutlierLaw(f"+-{c:g}", lambda rng, n: c * (2.0 * rng.integers(0, 2, n) - 1.0), abs(c))


def user_outliers(sampler, label="user", scale=np.nan):
    return OutlierLaw(label, sampler, scale)


@dataclass(frozen=True)
class ContaminationScheme:
    gamma: float
    outlier_law: OutlierLaw

    def __post_init__(self):
        # gamma = 1 is allowed as a degenerate check (every value shifted)
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError("gamma must lie in [0, 1]")


def contaminate(path, scheme, seed, stream=0):
    """
    Add ``z_t xi_t`` to every value ``y_{1-p}, ..., y_n`` of ``path``.

    Indicators and outliers come from separate substreams of ``(seed,
    stream)`` so two laws used with the same seed hit the same positions.
    """
    n_all = path.values.size
    z = make_rng(seed, substream(stream, 0)).random(n_all) < scheme.gamma
    if not np.any(z):
        return path.with_values(path.values.copy())
    xi = scheme.outlier_law.sample(make_rng(seed, substream(stream, 1)), n_all)
    return path.with_values(path.values + np.where(z, xi, 0.0))


@dataclass
class CellResult:
    gamma: float
    method: str
    phi_kind: str
    law: str
    theta_hat: np.ndarray  # (reps, p); NaN rows for failed fits
    errors: np.ndarray  # (reps,)
    failures: int = 0

    @property
    def median_err(self):
        return float(np.nanmedian(self.errors))

    @property
    def p90_err(self):
        return float(np.nanquantile(self.errors, 0.9))

    @property
    def reps(self):
        return int(self.errors.size)


@dataclass
class BiasTable:
    params: ArchParams
    n: int
    cells: list = field(default_factory=list)

    HEADER = ("gamma", "method", "phi_kind", "law", "median_err", "p90_err", "reps")

    def cell(self, gamma, method, phi_kind, law):
        for c in self.cells:
            if c.gamma == gamma and c.method == method and c.phi_kind == phi_kind and c.law == law:
                return c
        raise KeyError((gamma, method, phi_kind, law))

    def rows(self):
        for c in self.cells:
            yield [c.gamma, c.method, c.phi_kind, c.law, c.median_err, c.p90_err, c.reps]


def _fit(method, path, phi, restarts, seed, psi):
    if method == "md":
        return estimate_md(path, phi, restarts=restarts, seed=seed).theta_hat.a
    return estimate_gm(path, phi, psi=psi, restarts=restarts, seed=seed).theta_hat.a


def robustness_experiment(params, spec, phi_bounded=None, phi_unbounded=None, gammas=DEFAULT_GAMMAS,
                          outlier_laws=None, n=4000, reps=50, seed=0, methods=("md", "gm"),
                          restarts=20, psi="square", cells=None, jobs=1):
    """
    Replicate fits on contaminated paths for every
    ``(gamma, law, method, phi)`` cell.

    Replicate ``r`` uses the same clean path and the same contamination
    positions in every cell, so cells can be compared pairwise.  ``cells``
    restricts the grid to an explicit list of ``(gamma, law_label, method,
    phi_kind)`` tuples with ``phi_kind`` in ``{"bounded", "unbounded"}``.
    A fit that raises marks its replicate as failed (NaN) and the
    experiment continues.  The bounded weight defaults to
    :func:`~archrep.rep.redescending_weight` and the unbounded one to the
    plain e-ratio.
    """
    params = params if isinstance(params, ArchParams) else ArchParams(params)
    phi_bounded = redescending_weight(spec=spec) if phi_bounded is None else phi_bounded
    phi_unbounded = e_ratio_weight() if phi_unbounded is None else phi_unbounded
    laws = [two_point(100.0)] if outlier_laws is None else list(outlier_laws)
    phis = {"bounded": phi_bounded, "unbounded": phi_unbounded}
    plan = []
    if cells is None:
        for g in gammas:
            for law in (laws if g > 0 else laws[:1]):
                for m in methods:
                    for kind in phis:
                        plan.append((float(g), law, m, kind))
    else:
        by_label = {law.label: law for law in laws}
        plan = [(float(g), by_label[lab], m, kind) for g, lab, m, kind in cells]
    table = BiasTable(params, n)

    def replicate(r):
        clean = simulate_path(params, spec, n, seed=seed, stream=substream(30, r))
        dirty = {}
        out = []
        for g, law, m, kind in plan:
            if (g, law.label) not in dirty:
                scheme = ContaminationScheme(g, law)
                dirty[(g, law.label)] = contaminate(clean, scheme, seed, substream(31, r, int(g * 1e6)))
            try:
                out.append(_fit(m, dirty[(g, law.label)], phis[kind], restarts, r, psi))
            except ArchRepError:
                out.append(None)
        return out

    fits = parallel_map(replicate, reps, jobs)
    results = {}
    for c, (g, law, m, kind) in enumerate(plan):
        th = np.full((reps, params.p), np.nan)
        fails = 0
        for r in range(reps):
            if fits[r][c] is None:
                fails += 1
            else:
                th[r] = fits[r][c]
        results[(g, law.label, m, kind)] = (th, fails)
    for g, law, m, kind in plan:
        th, fails = results[(g, law.label, m, kind)]
        err = np.linalg.norm(th - params.a, axis=1)
        table.cells.append(CellResult(g, m, phis[kind].name, law.label, th, err, fails))
    return table


def influence_summary(table, method="md", phi_kind=None, laws=None):
    """
    Finite-difference influence per outlier law,
    ``IF = (median theta^gamma - median theta^0) / gamma`` at the smallest
    positive gamma, and ``GES = max_law ||IF||``.

    Returns ``{"if": {law: vector}, "norm": {law: float}, "gamma": float, "ges": float}``.
    """
    cells = [c for c in table.cells if c.method == method
             and (phi_kind is None or c.phi_kind == phi_kind)]
    positive = sorted({c.gamma for c in cells if c.gamma > 0})
    if not positive or not any(c.gamma == 0 for c in cells):
        raise InsufficientGammaGrid("need gamma = 0 and at least one positive gamma")
    g = positive[0]
    base = [c for c in cells if c.gamma == 0][0]
    med0 = np.nanmedian(base.theta_hat, axis=0)
    out_if = {}
    norms = {}
    for c in cells:
        if c.gamma != g or (laws is not None and c.law not in laws):
            continue
        v = (np.nanmedian(c.theta_hat, axis=0) - med0) / g
        out_if[c.law] = v
        norms[c.law] = float(np.linalg.norm(v))
    return {"if": out_if, "norm": norms, "gamma": g, "ges": max(norms.values()) if norms else 0.0}


def flip_perturbation(path, theta, phi, points, index, value):
    """
    Largest change of any ``W_{n,k}(x, theta)`` on ``points`` when the value
    at position ``index`` of ``path.values`` is replaced by ``value``.
    """
    before = _process(path, theta, phi, points)
    vals = path.values.copy()
    vals[index] = value
    after = _process(path.with_values(vals), theta, phi, points)
    return float(np.abs(after - before).max())
