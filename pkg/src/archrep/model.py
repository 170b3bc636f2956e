"""
ARCH(p) parameters, parameter domain, path simulation and closed-form oracles.

The intercept of the conditional variance is fixed to one, so a parameter is
the vector of lag coefficients ``a = (a_1, ..., a_p)``.
"""

import csv
import io
from dataclasses import dataclass
from typing import Optional

import numpy as np

from archrep.exceptions import HistoryTooShort, NonStationary
from archrep.kernels import arch_recursion
from archrep.rng import make_rng

__all__ = [
    "ArchParams",
    "ParamDomain",
    "Path",
    "default_burn_in",
    "simulate_path",
    "simulate_batch",
    "volterra_squared",
    "stationary_second_moment",
    "write_path_csv",
    "read_path_csv",
]

# draws per batch chunk; part of the reproducibility contract of simulate_batch
CHUNK = 4096


@dataclass(frozen=True, eq=False)
class ArchParams:
    """Lag coefficients of the conditional variance, all nonnegative."""

    a: np.ndarray

    def __post_init__(self):
        a = np.array(self.a, dtype=float, ndmin=1)
        if a.ndim != 1 or a.size < 1:
            raise ValueError("a must be a nonempty vector")
        if not np.all(np.isfinite(a)):
            raise ValueError("a must be finite")
        if np.any(a < 0):
            raise ValueError(f"coefficients must be nonnegative, got {a.tolist()}")
        a.setflags(write=False)
        object.__setattr__(self, "a", a)

    @property
    def p(self):
        return self.a.size

    @property
    def l1(self):
        return float(self.a.sum())

    def __eq__(self, other):
        return isinstance(other, ArchParams) and np.array_equal(self.a, other.a)

    def __hash__(self):
        return hash(tuple(self.a.tolist()))

    def __repr__(self):
        return f"ArchParams({self.a.tolist()})"


@dataclass(frozen=True)
class ParamDomain:
    """
    Parameter set ``{theta >= 0, ||theta||_1 <= 1/beta_a}``.

    With a ``center`` and ``delta`` the domain is additionally restricted to
    the l1-ball of radius ``delta`` around ``center``.
    """

    beta_a: float = 1.0
    center: Optional[tuple] = None
    delta: float = 0.0

    def __post_init__(self):
        if not self.beta_a > 0:
            raise ValueError("beta_a must be positive")
        if self.delta < 0:
            raise ValueError("delta must be nonnegative")
        if self.center is not None:
            object.__setattr__(self, "center", tuple(float(c) for c in np.atleast_1d(self.center)))

    @property
    def radius(self):
        """Upper bound ``1/beta_a`` on the l1 norm."""
        return 1.0 / self.beta_a

    @property
    def sup_l1(self):
        if self.center is None:
            return self.radius
        return min(self.radius, float(np.sum(self.center)) + self.delta)

    def contains(self, theta, atol=1e-12):
        t = theta.a if isinstance(theta, ArchParams) else np.asarray(theta, dtype=float)
        if np.any(t < -atol) or t.sum() > self.radius + atol:
            return False
        if self.center is not None:
            c = np.asarray(self.center)
            if c.size != t.size or np.abs(t - c).sum() > self.delta + atol:
                return False
        return True

    def center_condition(self, spec):
        """``E eps^2 (||b||_1 + delta) < 1`` for the ``Theta^delta`` scheme."""
        if self.center is None:
            return True
        return spec.moment(2) * (float(np.sum(self.center)) + self.delta) < 1.0


@dataclass(frozen=True, eq=False)
class Path:
    """
    Observed series ``y_{1-p}, ..., y_n``.

    ``values[0]`` is ``y_{1-p}``; the first ``p`` entries are the pre-sample.
    ``eps`` holds the innovations that generated ``values`` when known.
    """

    values: np.ndarray
    p: int
    params: Optional[ArchParams] = None
    seed: Optional[int] = None
    burn_in: int = 0
    stream: int = 0
    eps: Optional[np.ndarray] = None

    def __post_init__(self):
        v = np.array(self.values, dtype=float, ndmin=1)
        if v.size < self.p:
            raise ValueError("a path needs at least p values")
        if not np.all(np.isfinite(v)):
            raise ValueError("path values must be finite")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)
        if self.eps is not None:
            e = np.array(self.eps, dtype=float)
            e.setflags(write=False)
            object.__setattr__(self, "eps", e)

    @property
    def n(self):
        return self.values.size - self.p

    @property
    def y(self):
        """Observations ``y_1, ..., y_n``."""
        return self.values[self.p:]

    @property
    def times(self):
        return np.arange(1 - self.p, self.n + 1)

    def lags(self, q=None):
        """Matrix ``U`` with ``U[t-1, k] = y_{t-1-k}`` for ``t = 1..n``, ``k < q``."""
        q = self.p if q is None else q
        if q > self.p:
            raise ValueError("cannot take more lags than the pre-sample holds")
        n = self.n
        out = np.empty((n, q))
        for k in range(q):
            out[:, k] = self.values[self.p - 1 - k : self.p - 1 - k + n]
        return out

    def with_values(self, values, **meta):
        kw = dict(p=self.p, params=self.params, seed=self.seed, burn_in=self.burn_in,
                  stream=self.stream, eps=None)
        kw.update(meta)
        return Path(values, **kw)


def default_burn_in(p):
    return 2000 + 50 * int(p)


def _check_stationary(params, spec):
    r = spec.moment(2) * params.l1
    if not r < 1.0:
        raise NonStationary(f"E eps^2 * ||a||_1 = {r:.6g} >= 1")
    return r


def simulate_path(params, spec, n, burn_in=None, seed=0, stream=0):
    """
    Simulate ``n`` observations plus ``p`` pre-sample values.

    The recursion starts from zero lags and the first ``burn_in`` values are
    discarded.  Identical arguments give bit-identical paths.
    """
    if n < 0:
        raise ValueError("n must be nonnegative")
    _check_stationary(params, spec)
    p = params.p
    burn_in = default_burn_in(p) if burn_in is None else int(burn_in)
    rng = make_rng(seed, stream)
    total = burn_in + n + p
    eps = np.asarray(spec.sampler(rng, total), dtype=float)
    y = arch_recursion(params.a, eps)
    return Path(
        y[burn_in:], p, params=params, seed=seed, burn_in=burn_in, stream=stream, eps=eps[burn_in:]
    )


def simulate_batch(params, spec, reps, length, burn_in=None, seed=0, stream=0):
    """
    ``reps`` independent stationary stretches of ``length`` values each.

    Returns ``(y, eps)`` of shape ``(reps, length)``.  Innovations are drawn
    row-major in chunks of :data:`CHUNK` rows from the ``(seed, stream)``
    generator.
    """
    _check_stationary(params, spec)
    burn_in = default_burn_in(params.p) if burn_in is None else int(burn_in)
    rng = make_rng(seed, stream)
    total = burn_in + length
    y = np.empty((reps, length))
    eps_out = np.empty((reps, length))
    for start in range(0, reps, CHUNK):
        rows = min(CHUNK, reps - start)
        eps = np.asarray(spec.sampler(rng, rows * total), dtype=float).reshape(rows, total)
        y[start:start + rows] = arch_recursion(params.a, eps, keep=length)
        eps_out[start:start + rows] = eps[:, burn_in:]
    return y, eps_out


def volterra_squared(params, eps, L=40):
    """
    Truncated Volterra expansion of ``y_t^2``.

    ``eps`` holds ``eps_{t-K}, ..., eps_t`` (last entry is ``eps_t``) with
    ``K >= L * p``.  Terms with more than ``L`` coefficient factors are
    dropped.
    """
    if L < 0:
        raise ValueError("L must be nonnegative")
    a = params.a
    p = a.size
    eps = np.asarray(eps, dtype=float)
    depth = L * p
    if eps.size < depth + 1:
        raise HistoryTooShort(f"need {depth + 1} innovations, got {eps.size}")
    e2 = eps[::-1][: depth + 1] ** 2  # e2[d] = eps_{t-d}^2
    # level[d]: sum over index sequences with the current number of factors
    # and total lag d of the product a_j1 ... a_jl * e2[j1] * e2[j1 + j2] * ...
    level = np.zeros(depth + 1)
    level[0] = 1.0
    total = 1.0
    for _ in range(L):
        nxt = np.zeros(depth + 1)
        for j in range(1, p + 1):
            nxt[j:] += a[j - 1] * level[:-j]
        nxt *= e2
        level = nxt
        total += level.sum()
    return float(e2[0] * total)


def stationary_second_moment(params, spec):
    """``E y^2 = E eps^2 / (1 - E eps^2 ||a||_1)``."""
    _check_stationary(params, spec)
    m2 = spec.moment(2)
    return m2 / (1.0 - m2 * params.l1)


def _fmt(v):
    return repr(float(v))


def write_path_csv(path, dest=None):
    """
    Write ``t,y`` rows (pre-sample included) with ``#`` header lines.

    Returns the text when ``dest`` is None, otherwise writes to the file.
    """
    buf = io.StringIO(newline="")
    params = "" if path.params is None else " ".join(_fmt(v) for v in path.params.a)
    buf.write(f"# p={path.p}\n")
    buf.write(f"# params={params}\n")
    buf.write(f"# seed={'' if path.seed is None else path.seed}\n")
    buf.write(f"# stream={path.stream}\n")
    buf.write(f"# burn_in={path.burn_in}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["t", "y"])
    for t, v in zip(path.times, path.values):
        w.writerow([int(t), _fmt(v)])
    text = buf.getvalue()
    if dest is None:
        return text
    with open(dest, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)
    return None


def read_path_csv(src):
    """Inverse of :func:`write_path_csv`; accepts a filename."""
    meta = {}
    rows = []
    with open(src, encoding="utf-8") as fh:
        for line in fh:
            line = line.rstrip("\n")
            if line.startswith("#"):
                key, _, val = line[1:].strip().partition("=")
                meta[key.strip()] = val.strip()
            elif line and not line.startswith("t,"):
                rows.append(line.split(","))
    ts = np.array([int(r[0]) for r in rows])
    ys = np.array([float(r[1]) for r in rows])
    if "p" in meta:
        p = int(meta["p"])
    else:
        p = int(1 - ts[0]) if ts.size else 1
    params = None
    if meta.get("params"):
        params = ArchParams([float(v) for v in meta["params"].split()])
    seed = int(meta["seed"]) if meta.get("seed") else None
    return Path(
        ys, p, params=params, seed=seed,
        burn_in=int(meta.get("burn_in") or 0), stream=int(meta.get("stream") or 0),
    )
