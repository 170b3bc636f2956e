"""
Acceptance gate.  Each test prints one ``criterion N: PASS|FAIL`` line with
the measured numbers; the lines are repeated in the terminal summary.
"""

import numpy as np

from archrep.cli import main
from archrep.estimators import estimate_gm, estimate_md
from archrep.innovations import standard_normal
from archrep.maxineq import verify_m4_lemma, verify_rosenthal, verify_s4_corollary
from archrep.mixing import ALL_BELOW_NOISE_FLOOR, mixing_decay_report, stationary_mean, weighted_sup_statistic
from archrep.model import ArchParams, Path, simulate_path, volterra_squared
from archrep.rep import (
    boundedness_statistic,
    XGrid,
    bias_oracle,
    clipped_e_weight,
    constant_weight,
    e_ratio,
    e_ratio_weight,
    gm_score,
    quantile_grid,
    redescending_weight,
    rep_eval,
    volatility,
    weight_from_name,
)
from archrep.robustness import influence_summary, robustness_experiment, two_point

from conftest import ACCEPTANCE, naive_w

N = standard_normal()


def report(num, ok, detail):
    line = f"criterion {num}: {'PASS' if ok else 'FAIL'} {detail}"
    print(line)
    ACCEPTANCE[num] = line
    assert ok, line


def test_criterion_01_stationary_moment():
    hits = 0
    for s in range(20):
        m = np.mean(simulate_path(ArchParams([0.5]), N, 100_000, seed=s).y ** 2)
        hits += abs(m - 2.0) <= 0.1
    report(1, hits >= 18, f"{hits}/20 seeds within 5% of 2.0")


def test_criterion_02_volterra_equivalence():
    rng = np.random.default_rng(2)
    worst = 0.0
    for i, a in enumerate(([0.5], [0.3, 0.2], [0.2, 0.2, 0.1], [0.6], [0.1, 0.4])):
        params = ArchParams(a)
        path = simulate_path(params, N, 2000, seed=i)
        p = params.p
        for t in rng.integers(40 * p + 1, 2001, 20):
            idx = p + int(t)
            v = volterra_squared(params, path.eps[: idx + 1], L=40)
            worst = max(worst, abs(v - path.values[idx] ** 2) / path.values[idx] ** 2)
    report(2, worst <= 1e-6, f"max relative gap {worst:.3g} over 100 times on 5 paths")


def test_criterion_03_centering():
    grid = quantile_grid(N)
    path = simulate_path(ArchParams([0.5]), N, 2000, seed=3)
    w_zero = all(np.all(rep_eval(path, [t], constant_weight(c), grid).values == 0.0)
                 for t in (0.0, 0.3, 0.5, 0.9) for c in (1.0, -2.0))
    l_zero = all(np.all(gm_score(path, [t], constant_weight(c), psi) == 0.0)
                 for t in (0.0, 0.3, 0.5, 0.9) for c in (1.0, -2.0) for psi in ("square", "sign"))
    b = bias_oracle([0.5], [0.5], clipped_e_weight(), N, grid, reps=100_000, seed=3)
    inside = int(np.sum(np.abs(b.values) <= 3 * b.se))
    ok = w_zero and l_zero and inside == grid.m
    report(3, ok, f"W==0 {w_zero}, l_n==0 {l_zero}, bias within 3se at {inside}/{grid.m} points")


def test_criterion_04_brute_force():
    rng = np.random.default_rng(4)
    worst = 0.0
    for i in range(20):
        p = 1 + i % 3
        n = int(rng.integers(10, 201))
        path = Path(rng.standard_normal(n + p) * rng.uniform(0.5, 3), p)
        theta = rng.dirichlet(np.ones(p)) * rng.uniform(0, 1)
        phi = weight_from_name(["clipped-e", "e-ratio", "squared-lag", "constant"][i % 4],
                               L=rng.uniform(0.5, 5), c=rng.uniform(-2, 2))
        pts = np.sort(rng.standard_normal(int(rng.integers(1, 65))) * 2)
        grid = XGrid(pts, np.zeros_like(pts), np.full(pts.size, 1.0 / pts.size))
        U = path.lags()
        _, sig = volatility(theta, U)
        oracle = naive_w(path.y / sig, phi.evaluate(U, theta), pts)
        worst = max(worst, float(np.abs(rep_eval(path, theta, phi, grid).values - oracle).max()))
    report(4, worst <= 1e-10, f"max |fast - naive| {worst:.3g} over 20 configurations")


def test_criterion_05_partial_sum_inequalities():
    parts = []
    ok = True
    for fn, tag in ((verify_m4_lemma, "M4"), (verify_s4_corollary, "S4")):
        for n in (8, 10, 12):
            r = fn(n=n, alpha=1.5)
            ok &= r.exact and r.margin >= 1 and r.passed
            parts.append(f"{tag} n={n} exact margin {r.margin:.3g}")
        r = fn(n=1024, alpha=1.5, reps=10_000, seed=5, exact=False)
        ok &= r.passed
        parts.append(f"{tag} n=1024 mc est {r.mc_estimate:.4g}+-{r.mc_se:.2g} margin {r.margin:.3g}")
    report(5, ok, "; ".join(parts))


def test_criterion_06_rosenthal():
    r = verify_rosenthal([0.5], N, f=1.0, n=4000, reps=10_000, seed=6)
    rel = abs(r.mc_estimate - 3 / 16) / (3 / 16)
    ok = rel <= 0.15 and r.passed and r.mc_estimate <= 8
    report(6, ok, f"E S^4 {r.mc_estimate:.4f} (rel. gap to 3/16 {rel:.3f}), bound {r.bound_value:g}, "
                  f"margin {r.margin:.1f}")


def _errors(fit, n, reps=50, **kw):
    out = []
    for r in range(reps):
        path = simulate_path(ArchParams([0.5]), N, n, seed=r, stream=7)
        out.append(abs(fit(path, seed=r, **kw).theta_hat.a[0] - 0.5))
    return np.array(out)


def test_criterion_07_consistency_and_rate():
    # MD runs with the bounded redescending weight; clipped-e is reported alongside
    phi = redescending_weight()
    md_big, md_small = _errors(estimate_md, 4000, phi=phi), _errors(estimate_md, 500, phi=phi)
    gm_big, gm_small = _errors(estimate_gm, 4000), _errors(estimate_gm, 500)
    ce_big, ce_small = _errors(estimate_md, 4000), _errors(estimate_md, 500)
    md_ratio = np.median(md_small) / np.median(md_big)
    gm_ratio = np.median(gm_small) / np.median(gm_big)
    ok = (np.median(md_big) <= 0.08 and np.median(gm_big) <= 0.08
          and 1.8 <= md_ratio <= 4.5 and 1.8 <= gm_ratio <= 4.5)
    report(7, ok, f"median err n=4000 MD {np.median(md_big):.4f} GM {np.median(gm_big):.4f}; "
                  f"ratio 500/4000 MD {md_ratio:.2f} GM {gm_ratio:.2f}; "
                  f"[clipped-e MD: err {np.median(ce_big):.4f}, ratio "
                  f"{np.median(ce_small) / np.median(ce_big):.2f}]")


def test_criterion_08_mixing_decay():
    ks = list(range(1, 13))
    rep = mixing_decay_report([0.6], N, ks, path_len=200_000, reps=20, seed=8)
    iid = mixing_decay_report([0.0], N, ks, path_len=200_000, reps=20, seed=8)
    ok = rep.gamma > 0 and rep.r2 >= 0.6 and iid.status == ALL_BELOW_NOISE_FLOOR
    report(8, ok, f"gamma {rep.gamma:.3f}, r2 {rep.r2:.3f} on lags {rep.fitted_lags}; "
                  f"iid status {iid.status}")


def test_criterion_09_op1_stability():
    phi = clipped_e_weight()
    thetas = [[0.3], [0.4], [0.5], [0.6], [0.7]]
    bnd = {n: boundedness_statistic([0.5], phi, N, 0.1, n, thetas, reps=200, seed=4).p90
           for n in (500, 4000)}
    f = lambda U: np.minimum(e_ratio(U, np.array([0.5]))[:, 0], 10.0)
    mf = stationary_mean([0.5], N, f, seed=9)
    sup = {n: float(np.quantile(weighted_sup_statistic([0.5], N, f, n, reps=200, seed=9, mean_f=mf), 0.9))
           for n in (500, 4000)}
    r1 = bnd[4000] / bnd[500]
    r2 = sup[4000] / sup[500]
    report(9, r1 <= 1.5 and r2 <= 1.5,
           f"boundedness p90 {bnd[500]:.3f}->{bnd[4000]:.3f} (x{r1:.2f}); "
           f"weighted sup p90 {sup[500]:.3f}->{sup[4000]:.3f} (x{r2:.2f})")


def test_criterion_10_robustness():
    cells = [(0.0, "+-100", "md", "bounded"),
             (0.01, "+-100", "md", "bounded"),
             (0.01, "+-1000", "md", "bounded"),
             (0.05, "+-100", "md", "bounded"),
             (0.05, "+-100", "md", "unbounded")]
    table = robustness_experiment([0.5], N, redescending_weight(), e_ratio_weight(),
                                  outlier_laws=[two_point(100.0), two_point(1000.0)], n=4000,
                                  reps=50, seed=10, cells=cells)
    bounded = table.cell(0.05, "md", "redescending(2)", "+-100")
    unbounded = table.cell(0.05, "md", "e-ratio", "+-100")
    worse = int(np.sum(unbounded.errors > bounded.errors))
    infl = influence_summary(table, "md", "redescending(2)")
    n100, n1000 = infl["norm"]["+-100"], infl["norm"]["+-1000"]
    plateau = n1000 / n100 if n100 > 0 else (1.0 if n1000 == 0 else np.inf)
    ok = bounded.median_err <= 0.15 and worse >= 40 and plateau <= 1.5
    report(10, ok, f"bounded MD median err {bounded.median_err:.4f}; unbounded worse in {worse}/50; "
                   f"GES ratio +-1000/+-100 {plateau:.3f} (|IF| {n100:.3g}, {n1000:.3g})")


CLI_RUNS = {
    "simulate": ["simulate", "--a", "0.5", "--n", "500", "--seed", "11"],
    "estimate": ["estimate", "--a", "0.5", "--n", "600", "--restarts", "3", "--seed", "11"],
    "mixing": ["mixing", "--a", "0.6", "--ks", "1-4", "--path-len", "20000", "--reps", "2", "--seed", "11"],
    "maxineq": ["maxineq", "--lemma", "m4", "--n", "64", "--mc", "--reps", "500", "--seed", "11"],
    "robustness": ["robustness", "--a", "0.5", "--n", "600", "--reps", "2", "--gammas", "0,0.02",
                   "--outliers", "100", "--restarts", "2", "--seed", "11"],
    "check": ["check", "--a", "0.5"],
}


def test_criterion_11_determinism(tmp_path):
    identical = {}
    for name, argv in CLI_RUNS.items():
        bodies = []
        for run in ("first", "second"):
            out = tmp_path / f"{name}_{run}"
            code = main([*argv, "--out", str(out)])
            assert code in (0, 2), (name, code)
            bodies.append((tmp_path / f"{name}_{run}.csv").read_bytes())
        identical[name] = bodies[0] == bodies[1]
    bad = [k for k, v in identical.items() if not v]
    report(11, not bad, f"byte-identical CSV for {sum(identical.values())}/{len(identical)} subcommands"
                        + (f"; differing: {bad}" if bad else ""))
