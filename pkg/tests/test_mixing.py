import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from archrep.exceptions import PathTooShort
from archrep.innovations import standard_normal, student_t
from archrep.mixing import (
    ALL_BELOW_NOISE_FLOOR,
    empirical_alpha,
    lln_check,
    mixing_decay_report,
    mj_moment_estimate,
    noise_floor,
    product_density_oracle,
    sigma2_unrolled,
    stationary_mean,
    weighted_sup_statistic,
)
from archrep.model import ArchParams, simulate_batch, simulate_path
from archrep.rng import substream
from archrep.rep import e_ratio


@pytest.fixture(scope="module")
def iid_path():
    return simulate_path(ArchParams([0.0]), standard_normal(), 200_000, seed=0)


@pytest.fixture(scope="module")
def arch_path():
    return simulate_path(ArchParams([0.6]), standard_normal(), 200_000, seed=1)


def _brute_alpha(y, k, m, bins):
    # enumerate every rectangle directly on p = 1 blocks
    edges = np.quantile(y, np.arange(1, bins) / bins)
    code = np.searchsorted(edges, y, side="left")
    T = y.size - (m - 1) - k
    fut = code[m - 1 + k: m - 1 + k + T]
    past = [code[m - 1 - j: m - 1 - j + T] for j in range(m)]
    ranges = [(i, j) for i in range(bins) for j in range(i, bins)]
    best = 0.0
    for lo, hi in ranges:
        A = (fut >= lo) & (fut <= hi)
        for rect in np.ndindex(*([len(ranges)] * m)):
            B = np.ones(T, bool)
            for d, ri in enumerate(rect):
                B &= (past[d] >= ranges[ri][0]) & (past[d] <= ranges[ri][1])
            best = max(best, abs(np.mean(A & B) - A.mean() * B.mean()))
    return best


def test_alpha_matches_brute_force():
    y = simulate_path(ArchParams([0.6]), standard_normal(), 3000, seed=2).y
    for k, m, bins in ((1, 1, 3), (2, 2, 3), (5, 2, 2)):
        assert empirical_alpha(y, k, m=m, bins=bins) == pytest.approx(_brute_alpha(y, k, m, bins), abs=1e-12)


def test_alpha_iid_small(iid_path):
    for k in range(1, 13):
        assert empirical_alpha(iid_path, k) <= 0.02


def test_alpha_range(arch_path):
    for k in (1, 3, 12):
        assert 0.0 <= empirical_alpha(arch_path, k) <= 0.25


def test_alpha_more_bins_on_nested_family(arch_path):
    # bins=4 quantile edges contain the bins=2 edges, so the family only grows
    for k in (1, 2, 5):
        assert empirical_alpha(arch_path, k, bins=4) >= empirical_alpha(arch_path, k, bins=2)


def test_alpha_decays_over_replicates():
    wins = 0
    for r in range(50):
        path = simulate_path(ArchParams([0.6]), standard_normal(), 200_000, seed=100 + r)
        wins += empirical_alpha(path, 1) > empirical_alpha(path, 10)
    assert wins >= 45


def test_alpha_errors():
    y = np.random.default_rng(0).standard_normal(100)
    with pytest.raises(PathTooShort):
        empirical_alpha(y, 1, m=2, bins=4)
    with pytest.raises(ValueError):
        empirical_alpha(y, 1, bins=1)


def test_noise_floor():
    assert noise_floor(200_000, 1, 2) == pytest.approx(3 / np.sqrt(200_000 / 3))


def test_decay_report_iid_control():
    rep = mixing_decay_report([0.0], standard_normal(), list(range(1, 6)), path_len=50_000, reps=3)
    assert rep.status == ALL_BELOW_NOISE_FLOOR and rep.gamma == np.inf
    summary = json.loads(rep.to_json())
    assert summary["gamma"] == "inf"


def test_decay_report_arch_and_parallel_equal():
    ks = [1, 2, 3, 4]
    a = mixing_decay_report([0.6], standard_normal(), ks, path_len=100_000, reps=4, seed=3)
    b = mixing_decay_report([0.6], standard_normal(), ks, path_len=100_000, reps=4, seed=3, jobs=2)
    np.testing.assert_array_equal(a.alpha_hat, b.alpha_hat)
    assert a.gamma > 0
    assert len(list(a.csv_rows())) == len(ks)
    with pytest.raises(ValueError):
        mixing_decay_report([0.6], standard_normal(), [3, 1], path_len=10_000, reps=1)


def test_sigma2_affine_in_z2():
    rng = np.random.default_rng(4)
    a = np.array([0.3, 0.2, 0.1])
    eps = rng.standard_normal(6)
    M0 = sigma2_unrolled(a, np.zeros(3), eps)[0]
    Mj = [sigma2_unrolled(a, np.eye(3)[j], eps)[0] - M0 for j in range(3)]
    for _ in range(10):
        z = rng.standard_normal(3) * 3
        assert sigma2_unrolled(a, z, eps)[0] == pytest.approx(M0 + np.dot(Mj, z**2), abs=1e-10)


def test_mj_depth_one_hand_expansion():
    mean, se = mj_moment_estimate([0.5], standard_normal(), 1, reps=10)
    np.testing.assert_array_equal(mean, [1.0, 0.5])
    np.testing.assert_array_equal(se, [0.0, 0.0])


def test_mj_zero_params():
    for k in (1, 4):
        mean, _ = mj_moment_estimate([0.0, 0.0], standard_normal(), k, reps=100)
        np.testing.assert_array_equal(mean[1:], [0.0, 0.0])


@pytest.mark.parametrize("k", [2, 3, 5])
def test_mj_mean_matches_closed_form(k):
    # E M^1_k = a^k (E eps^2)^(k-1), E M^0_k = sum_{j<k} a^j (E eps^2)^j
    mean, se = mj_moment_estimate([0.5], standard_normal(), k, reps=50_000, seed=1)
    assert abs(mean[1] - 0.5**k) <= 4 * se[1]
    assert abs(mean[0] - sum(0.5**j for j in range(k))) <= 4 * se[0]


def test_mj_log_slope_negative():
    ks = np.arange(2, 11)
    m1 = [mj_moment_estimate([0.5], standard_normal(), int(k), reps=10_000)[0][1] for k in ks]
    assert np.polyfit(ks, np.log(m1), 1)[0] < 0


def test_density_oracle_iid_exact():
    xs = np.linspace(-3, 3, 7)
    np.testing.assert_array_equal(product_density_oracle([0.0], standard_normal(), xs), standard_normal().pdf(xs))
    with pytest.raises(ValueError):
        product_density_oracle([0.1, 0.1], standard_normal(), 0.0)


def test_density_oracle_even_and_kde():
    xs = np.linspace(-3, 3, 25)
    f = product_density_oracle([0.5], standard_normal(), xs, reps=100_000, seed=1)
    np.testing.assert_allclose(f, f[::-1], atol=1e-3)
    y = simulate_path(ArchParams([0.5]), standard_normal(), 100_000, seed=8).y
    assert np.max(np.abs(stats.gaussian_kde(y)(xs) - f)) <= 0.02


def test_lln_check_ratio():
    ratios = [lln_check([0.5], standard_normal(), 5000, reps=20, seed=s)["ratio"] for s in range(10)]
    assert 2 * 0.7 <= np.median(ratios) <= 2 * 1.3


def test_stationary_mean_e_ratio():
    m = stationary_mean([0.0], standard_normal(), lambda U: U[:, 0] ** 2, length=200_000)
    assert m == pytest.approx(1.0, abs=0.02)


@pytest.mark.slow
def test_weighted_sup_stable():
    f = lambda U: np.minimum(e_ratio(U, np.array([0.5]))[:, 0], 10.0)
    mf = stationary_mean([0.5], standard_normal(), f, length=2_000_000)
    small = weighted_sup_statistic([0.5], standard_normal(), f, 1000, reps=100, seed=1, mean_f=mf)
    big = weighted_sup_statistic([0.5], standard_normal(), f, 4000, reps=100, seed=1, mean_f=mf)
    assert np.quantile(big, 0.9) <= 1.5 * np.quantile(small, 0.9)


@given(st.integers(0, 10**6))
def test_weighted_sup_constant_is_ks(seed):
    # f = 1 reduces to sqrt(n) times the Kolmogorov distance of the innovations
    n = 50
    spec = student_t(5.0)
    out = weighted_sup_statistic([0.0], spec, lambda U: np.ones(U.shape[0]), n, reps=1,
                                 seed=seed, mean_f=1.0)
    _, eps = simulate_batch(ArchParams([0.0]), spec, 1, n + 1, seed=seed, stream=substream(15, n))
    ks = stats.kstest(eps[0, 1:], spec.cdf).statistic
    assert out[0] == pytest.approx(np.sqrt(n) * ks, abs=1e-12)
