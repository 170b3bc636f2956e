import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from archrep.exceptions import OrderMismatch
from archrep.innovations import standard_normal
from archrep.model import ArchParams, Path, simulate_path
from archrep.rep import (
    XGrid,
    aul_diagnostic,
    bias_oracle,
    boundedness_statistic,
    clipped_e_weight,
    constant_weight,
    e_ratio_weight,
    gm_score,
    md_objective,
    quantile_grid,
    rep_eval,
    residual_ecdf,
    residuals,
    s_phi_e_matrix,
    redescending_level,
    redescending_weight,
    user_weight,
    volatility,
    weight_from_name,
)

from conftest import naive_w


@pytest.fixture(scope="module")
def path05():
    return simulate_path(ArchParams([0.5]), standard_normal(), 400, seed=3)


def test_volatility_examples():
    s, sig = volatility(ArchParams([0.0]), np.array([[7.0]]))
    assert s[0] == 1.0 and sig[0] == 1.0
    s, sig = volatility(ArchParams([0.5]), np.array([[2.0]]))
    assert s[0] == pytest.approx(3.0) and sig[0] == pytest.approx(np.sqrt(3.0))
    s, _ = volatility([0.25, 0.25], np.array([[1.0, 1.0]]))
    assert s[0] == pytest.approx(1.5)


def test_residuals_recover_innovations(path05):
    res = residuals(path05, path05.params)
    np.testing.assert_allclose(res, path05.eps[-path05.n:], atol=1e-12)
    np.testing.assert_array_equal(residuals(path05, [0.0]), path05.y)


def test_residual_hand_value():
    # y_0 = 4, theta = 0.5 -> s = 9, y_1 = 3 -> eps = 1
    path = Path([4.0, 3.0], 1)
    assert residuals(path, [0.5])[0] == pytest.approx(1.0)


def test_residual_order_mismatch():
    with pytest.raises(OrderMismatch):
        residuals(Path([1.0, 2.0, 3.0], 1), [0.1, 0.1])


def test_residual_ecdf_examples(path05):
    assert residual_ecdf(path05, [0.5], np.inf) == 1.0
    assert residual_ecdf(path05, [0.5], -1e9) == 0.0
    path = Path([0.0, -1.0, 0.0, 1.0, 2.0], 1)
    assert residual_ecdf(path, [0.0], 0.5) == 0.5


def test_two_point_process_value():
    # residuals (1, -1), weights (1, 0): W(0) = 2^{-1/2} * 1 * (0 - 1/2)
    path = Path([0.0, 1.0, -1.0], 1)
    phi = user_weight(lambda U, th: (U == 0.0).astype(float))
    w = rep_eval(path, [0.0], phi, XGrid([0.0], [0.5], [1.0])).values
    assert w[0, 0] == pytest.approx(naive_w(np.array([1.0, -1.0]), np.array([[1.0], [0.0]]), np.array([0.0]))[0, 0])
    assert w[0, 0] == pytest.approx(-0.5 * 2**-0.5)


@pytest.mark.parametrize("phi", [constant_weight(1.0), constant_weight(-3.5)], ids=["c1", "c-3.5"])
def test_constant_weight_kills_process(path05, phi):
    grid = quantile_grid(standard_normal())
    for th in ([0.0], [0.3], [0.9]):
        assert np.all(rep_eval(path05, th, phi, grid).values == 0.0)
        assert md_objective(path05, th, phi, grid) == 0.0
        np.testing.assert_array_equal(gm_score(path05, th, phi), [0.0])


def test_process_vanishes_far_out(path05):
    grid = XGrid([-1e9, 1e9], [0.0, 1.0], [1.0, 1.0])
    assert np.all(rep_eval(path05, [0.4], clipped_e_weight(), grid).values == 0.0)


def test_zero_weights_zero_objective(path05):
    grid = XGrid([-1.0, 0.0, 1.0], [0.2, 0.5, 0.8], [0.0, 0.0, 0.0])
    assert md_objective(path05, [0.4], clipped_e_weight(), grid) == 0.0


def test_objective_powers(path05):
    grid = quantile_grid(standard_normal(), m=16)
    vals = rep_eval(path05, [0.3], clipped_e_weight(), grid).values
    assert md_objective(path05, [0.3], clipped_e_weight(), grid, 2) == pytest.approx(
        np.sum(grid.weights * vals[0] ** 2))
    assert md_objective(path05, [0.3], clipped_e_weight(), grid, 1) == pytest.approx(
        np.sum(grid.weights * np.abs(vals[0])))
    with pytest.raises(ValueError):
        md_objective(path05, [0.3], clipped_e_weight(), grid, 3)


def test_process_bound(path05):
    phi = clipped_e_weight()
    grid = quantile_grid(standard_normal())
    vals = rep_eval(path05, [0.2], phi, grid).values
    wmax = np.abs(phi.evaluate(path05.lags(), [0.2])).max()
    assert np.abs(vals).max() <= 2 * np.sqrt(path05.n) * wmax


@given(st.floats(-5, 5), st.floats(0.0, 0.9))
def test_shift_invariance(c, th):
    path = simulate_path(ArchParams([0.3, 0.2]), standard_normal(), 120, seed=1)
    grid = quantile_grid(standard_normal(), m=16)
    base = clipped_e_weight(3.0)
    shifted = user_weight(lambda U, t: base.evaluate(U, t) + c)
    theta = [th / 2, th / 2]
    np.testing.assert_allclose(rep_eval(path, theta, shifted, grid).values,
                               rep_eval(path, theta, base, grid).values, atol=1e-12)


def test_matches_naive_double_loop():
    rng = np.random.default_rng(0)
    for i in range(20):
        p = 1 + i % 3
        n = int(rng.integers(5, 200))
        path = Path(rng.standard_normal(n + p) * 2, p)
        theta = rng.random(p) / p
        phi = [clipped_e_weight(rng.uniform(0.5, 5)), e_ratio_weight(), weight_from_name("squared-lag")][i % 3]
        pts = np.sort(rng.standard_normal(int(rng.integers(1, 30))) * 2)
        grid = XGrid(pts, np.zeros_like(pts), np.ones_like(pts))
        U = path.lags()
        s, sig = volatility(theta, U)
        oracle = naive_w(path.y / sig, phi.evaluate(U, theta), pts)
        np.testing.assert_allclose(rep_eval(path, theta, phi, grid).values, oracle, atol=1e-10, rtol=0)


def test_gm_score_sign_identity(path05):
    # l_n = -sum_x W_n(x) dpsi * sqrt(n); sign has a single jump of 2 at 0
    for th in ([0.1], [0.5], [0.8]):
        for phi in (clipped_e_weight(), e_ratio_weight()):
            w0 = rep_eval(path05, th, phi, XGrid([0.0], [0.5], [1.0])).values[:, 0]
            np.testing.assert_allclose(gm_score(path05, th, phi, "sign"),
                                       -2.0 * np.sqrt(path05.n) * w0, atol=1e-9)


def test_gm_score_single_observation():
    path = Path([1.0, 2.0], 1)
    np.testing.assert_array_equal(gm_score(path, [0.5], clipped_e_weight()), [0.0])


def test_gm_score_identity_psi_small_at_truth():
    a = ArchParams([0.5])
    at, off = [], []
    for r in range(50):
        path = simulate_path(a, standard_normal(), 4000, seed=r)
        at.append(np.linalg.norm(gm_score(path, a, clipped_e_weight(), "identity")))
        off.append(np.linalg.norm(gm_score(path, [0.8], clipped_e_weight(), "identity")))
    # l_n / n -> 0 at the truth
    assert np.median(at) / 4000 < 0.02
    # an odd psi with symmetric innovations gives a centred score at every theta,
    # so a wrong theta is not systematically further from zero
    assert 0.5 < np.median(off) / np.median(at) < 2.0


def test_gm_score_square_separates():
    a = ArchParams([0.5])
    at, off = [], []
    for r in range(50):
        path = simulate_path(a, standard_normal(), 4000, seed=r)
        at.append(np.linalg.norm(gm_score(path, a, clipped_e_weight(), "square")))
        off.append(np.linalg.norm(gm_score(path, [0.8], clipped_e_weight(), "square")))
    assert np.median(at) < np.median(off)


@pytest.fixture(scope="module")
def grid64():
    return quantile_grid(standard_normal())


def test_bias_zero_at_truth(grid64):
    b = bias_oracle([0.5], [0.5], clipped_e_weight(), standard_normal(), grid64, reps=20_000, seed=1)
    assert np.all(np.abs(b.values) <= 3 * b.se + 1e-15)


def test_bias_constant_weight_exact(grid64):
    b = bias_oracle([0.5], [0.2], constant_weight(2.0), standard_normal(), grid64, reps=2000, seed=1)
    assert np.all(b.values == 0.0)


def test_bias_vanishes_far_right():
    b = bias_oracle([0.5], [0.2], clipped_e_weight(), standard_normal(), np.array([1e9]), reps=2000, seed=1)
    assert b.values[0, 0] == pytest.approx(0.0, abs=1e-15)


def test_bias_nonzero_away_from_truth(grid64):
    b = bias_oracle([0.5], [0.1], clipped_e_weight(), standard_normal(), grid64, reps=20_000, seed=1)
    assert np.max(np.abs(b.values) / np.maximum(b.se, 1e-300)) > 5


def test_bias_needs_reps(grid64):
    with pytest.raises(ValueError):
        bias_oracle([0.5], [0.1], clipped_e_weight(), standard_normal(), grid64, reps=10)


def test_s_matrix_iid_case():
    # a = 0: e = eps^2 and S = Var(chi^2_1) = 2
    S, se = s_phi_e_matrix(ArchParams([0.0]), e_ratio_weight(), standard_normal(), reps=100_000, seed=2)
    assert abs(S[0, 0] - 2.0) <= 3 * se[0, 0]


def test_s_matrix_constant_and_psd():
    S, se = s_phi_e_matrix([0.3], constant_weight(), standard_normal(), reps=5000, seed=2)
    assert np.all(S == 0.0)
    S, se = s_phi_e_matrix([0.3, 0.2], e_ratio_weight(), standard_normal(), reps=50_000, seed=2)
    np.testing.assert_allclose(S, S.T, atol=3 * se.max())
    assert np.linalg.eigvalsh((S + S.T) / 2).min() >= -3 * se.max()


def test_aul_trivial_cases():
    S = np.array([[0.5]])
    out = aul_diagnostic([0.5], clipped_e_weight(), standard_normal(), [200], reps=5, S=S,
                         s_points=[[0.0]])
    assert np.all(out[200]["values"] == 0.0)
    out = aul_diagnostic([0.5], clipped_e_weight(), standard_normal(), [200], B=0.0, reps=5, S=S)
    assert np.all(out[200]["values"] == 0.0)


@pytest.mark.slow
def test_aul_decreasing_in_n():
    out = aul_diagnostic([0.5], clipped_e_weight(), standard_normal(), [500, 2000, 8000], B=2.0,
                         reps=40, seed=1, per_axis=5, s_reps=50_000)
    meds = [out[n]["median"] for n in (500, 2000, 8000)]
    assert meds[0] > meds[2]


def test_boundedness_trivial_cases():
    one = boundedness_statistic([0.5], constant_weight(), standard_normal(), 0.1, 1, [[0.5]], reps=10)
    assert np.all(one.values == 0.0)
    big = boundedness_statistic([0.5], clipped_e_weight(), standard_normal(), 1e6, 500, [[0.9]],
                                reps=10, bias_reps=5000)
    assert np.all(big.plus_part == 0.0) and np.all(big.minus_part == 0.0)


def test_redescending_level_normal_closed_form():
    for kappa in (0.5, 2.0, 7.0):
        assert redescending_level(kappa) == pytest.approx(kappa / (kappa + 2))
        # the quadrature branch agrees on the normal law
        from archrep.innovations import tabulated

        xs = np.linspace(-12, 12, 20001)
        tab = tabulated(xs, standard_normal().pdf(xs), {2.0: 1.0})
        assert redescending_level(kappa, tab) == pytest.approx(kappa / (kappa + 2), rel=1e-5)


def test_redescending_level_student_t_mc():
    from archrep.innovations import student_t

    spec = student_t(5.0)
    e = spec.sample(400_000, seed=1)
    d = np.exp(-e * e / 2)
    assert redescending_level(2.0, spec) == pytest.approx(np.mean(e * e * d) / np.mean(d), rel=0.01)


@given(st.floats(-1e6, 1e6))
def test_redescending_bounded_and_limit(u):
    w = redescending_weight(2.0)
    v = w.evaluate(np.array([[u]]), [0.3])[0, 0]
    assert 0.0 <= v <= w.bound
    assert w.evaluate(np.array([[1e4]]), [0.0])[0, 0] == pytest.approx(0.5)
    assert weight_from_name("redescending").name == "redescending(2)"
