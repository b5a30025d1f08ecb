import numpy as np
import pytest
from scipy import stats

from tslab.bandit import BanditConfig
from tslab.bounds import compute_beta, theorem1_bound
from tslab.linalg import SpdMatrix
from tslab.regret import (
    REGRET_CSV_COLUMNS,
    bayes_regret_curve,
    blocks,
    chi_square_diagnostic,
    decoupling_experiment,
    event_violation_rate,
    geometric_horizons,
    ks_critical_value,
    regret_rows,
    sandwich,
    wilson_interval,
    worker_count,
)


def config(d=1, sigma=1.0, r=1.0, scale=1.0):
    return BanditConfig(d, r, sigma, SpdMatrix.identity(d, scale))


class TestPlumbing:
    def test_horizons(self):
        np.testing.assert_array_equal(geometric_horizons(0), [0])
        np.testing.assert_array_equal(geometric_horizons(1), [1])
        np.testing.assert_array_equal(geometric_horizons(64), [1, 2, 4, 8, 16, 32, 64])
        np.testing.assert_array_equal(geometric_horizons(100), [1, 2, 4, 8, 16, 32, 64, 100])

    def test_blocks(self):
        assert blocks(0) == []
        assert blocks(600) == [(0, 256), (1, 256), (2, 88)]

    def test_worker_cap(self, monkeypatch):
        monkeypatch.setenv("TSLAB_THREADS", "1")
        assert worker_count() == 1
        assert worker_count(3) == 3

    def test_wilson_matches_scipy(self):
        for k, n in [(0, 100), (3, 100), (50, 100), (100, 100), (7, 100_000)]:
            ci = stats.binomtest(k, n).proportion_ci(confidence_level=0.95, method="wilson")
            lo, hi = wilson_interval(k, n)
            assert lo == pytest.approx(ci.low, abs=1e-12)
            assert hi == pytest.approx(ci.high, abs=1e-12)


class TestRegretCurve:
    def test_zero_horizon(self):
        c = bayes_regret_curve(config(), 0, 10)
        np.testing.assert_array_equal(c.mean_regret, [0.0])

    def test_requires_two_replicates(self):
        with pytest.raises(ValueError):
            bayes_regret_curve(config(), 10, 1)

    def test_dominated_by_upper_bound(self):
        c = bayes_regret_curve(config(), 64, 5000, base_seed=2)
        for T, m in zip(c.horizons, c.mean_regret):
            assert m <= theorem1_bound(1, int(T), 1.0, 1.0, np.eye(1))
        assert c.is_monotone()
        assert np.all(c.half_width > 0)

    def test_half_width_scaling(self):
        cfg = config(d=2)
        hw = {n: bayes_regret_curve(cfg, 16, n, base_seed=5).half_width for n in (1024, 2048, 4096)}
        # Quadrupling halves the half-width; doubling divides it by sqrt 2.
        np.testing.assert_allclose(hw[1024] / hw[4096], 2.0, rtol=0.2)
        np.testing.assert_allclose(hw[1024] / hw[2048], np.sqrt(2.0), rtol=0.2)

    def test_worker_count_independent(self):
        cfg = config(d=3, sigma=0.5)
        a = bayes_regret_curve(cfg, 32, 600, base_seed=7, workers=1)
        b = bayes_regret_curve(cfg, 32, 600, base_seed=7, workers=2)
        np.testing.assert_array_equal(a.mean_regret, b.mean_regret)
        np.testing.assert_array_equal(a.half_width, b.half_width)

    def test_random_policy_is_worse(self):
        cfg = config(d=3)
        ts = bayes_regret_curve(cfg, 64, 500, base_seed=1)
        rnd = bayes_regret_curve(cfg, 64, 500, base_seed=1, policy="random")
        assert rnd.mean_regret[-1] > ts.mean_regret[-1] + 3 * (rnd.half_width[-1] + ts.half_width[-1])

    def test_rows(self):
        cfg = config(d=2)
        c = bayes_regret_curve(cfg, 8, 50, base_seed=1)
        rows = regret_rows(cfg, c)
        assert len(rows) == len(c.horizons)
        assert all(set(r) == set(REGRET_CSV_COLUMNS) for r in rows)
        assert all(r["bound_lower"] <= r["bound_upper"] for r in rows)
        assert [p.T for p in sandwich(cfg, c)] == list(c.horizons)


class TestEventRate:
    def test_huge_beta(self):
        assert event_violation_rate(config(d=2), 1e6, 16, 500).union_rate == 0.0

    def test_zero_beta(self):
        assert event_violation_rate(config(d=2), 0.0, 16, 500).union_rate == 1.0

    def test_negative_beta(self):
        with pytest.raises(ValueError):
            event_violation_rate(config(), -1.0, 4, 10)

    def test_union_bound(self):
        T = 32
        rep = event_violation_rate(config(d=4), compute_beta(4, T), T, 20_000, base_seed=3)
        assert rep.wilson_high <= 1 / T**2 + 3 * rep.half_width
        assert rep.per_step.shape == (T,)


class TestChiSquare:
    def test_t0_two_dims(self):
        (res,) = chi_square_diagnostic(config(d=2), [0], 10_000, base_seed=4)
        assert res.passed
        assert res.critical_value == pytest.approx(ks_critical_value(10_000))

    def test_scalar_case(self):
        # d = 1 at t = 0: (theta_hat - theta*)^2 / (2 * Sigma0) with both prior draws.
        res = chi_square_diagnostic(config(d=1, scale=3.0), [0, 8], 10_000, base_seed=5)
        assert all(r.passed for r in res)

    def test_missing_half_rejects(self):
        res = chi_square_diagnostic(config(d=2), [0], 10_000, base_seed=4, scale=1.0)
        assert not res[0].passed


class TestDecoupling:
    def test_single_scale(self):
        rep = decoupling_experiment(config(d=2), [1.0], 16, 64, base_seed=1)
        assert rep.early_exponent is None and rep.late_exponent is None
        assert np.all(rep.early_regret >= 0)
        assert rep.to_dict()["early_window"] == 2

    def test_preconditions(self):
        with pytest.raises(ValueError):
            decoupling_experiment(config(d=4), [1.0], 12, 10)
        with pytest.raises(ValueError):
            decoupling_experiment(config(d=2), [1.0, 4.0], 16, 10)

    def test_early_regret_grows_with_prior_scale(self):
        rep = decoupling_experiment(config(d=3, sigma=0.5), [1.0, 16.0], 64, 400, base_seed=2)
        assert rep.early_regret[1] > 2 * rep.early_regret[0]
        assert rep.early_exponent is not None and rep.early_exponent > 0.5
