import numpy as np
import pytest
from scipy import integrate, stats

from tslab.bandit import BanditConfig, GaussianPosterior, posterior_batch, run_episode
from tslab.bounds import theorem3_bound
from tslab.errors import InvalidInit, InvalidParameter
from tslab.linalg import SpdMatrix, random_rotation, spd_from_eigenvalues
from tslab.logconcave import (
    GaussianDensity,
    GaussianNoise,
    LogConcaveConfig,
    PosteriorDensity,
    QuadraticPlusHuberDensity,
    SamplerSettings,
    SmoothedLaplaceNoise,
    convexity_gap,
    empirical_subgaussian_check,
    gaussian_mgf_margin,
    gradient_check,
    lc_regret_curve,
    lc_thompson_episode,
    make_noise,
    mala_chain,
    mala_sample,
    norm_tail_check,
)
from tslab.regret import bayes_regret_curve


def _random_history(d, t, rng):
    acts = rng.standard_normal((t, d))
    acts /= np.linalg.norm(acts, axis=1, keepdims=True)
    return acts, rng.standard_normal(t)


def _densities():
    rng = np.random.default_rng(0)
    lam = spd_from_eigenvalues([3.0, 1.0, 0.4], random_rotation(3, rng))
    acts, rews = _random_history(3, 12, rng)
    return {
        "gauss": GaussianDensity([0.5, -1.0, 0.0], lam.inverse()),
        "huber": QuadraticPlusHuberDensity(lam, mean=[0.2, 0.0, -0.3], kappa=0.7, eps=0.2),
        "noise-gauss": GaussianNoise(0.8),
        "noise-laplace": SmoothedLaplaceNoise(0.8, kappa=1.5, eps=0.3),
        "posterior": PosteriorDensity(
            QuadraticPlusHuberDensity(lam, kappa=0.5), SmoothedLaplaceNoise(0.5), acts, rews
        ),
    }


@pytest.mark.parametrize("name", list(_densities()))
class TestDensityContracts:
    def test_gradient_matches_finite_differences(self, name):
        dens = _densities()[name]
        probes = np.random.default_rng(1).standard_normal((20, dens.dim)) * 1.5
        assert gradient_check(dens, probes) <= 1e-5

    def test_strong_convexity_probe(self, name):
        dens = _densities()[name]
        rng = np.random.default_rng(2)
        x = rng.standard_normal((500, dens.dim)) * 3
        y = rng.standard_normal((500, dens.dim)) * 3
        assert np.all(convexity_gap(dens, x, y) >= -1e-8)


class TestExactSamplers:
    def _ks_against_density(self, samples, logpdf, lo=-12, hi=12):
        norm, _ = integrate.quad(lambda x: np.exp(logpdf(x)), lo, hi)
        cdf = lambda x: integrate.quad(lambda s: np.exp(logpdf(s)), lo, x)[0] / norm  # noqa: E731
        grid = np.linspace(lo, hi, 2001)
        vals = np.array([0.0] + [integrate.quad(lambda s: np.exp(logpdf(s)), a, b)[0] for a, b in zip(grid[:-1], grid[1:])])
        table = np.cumsum(vals) / norm
        assert abs(cdf(0.3) - np.interp(0.3, grid, table)) < 1e-6
        return stats.kstest(samples, lambda x: np.interp(x, grid, table))

    def test_smoothed_laplace(self):
        noise = SmoothedLaplaceNoise(1.3, kappa=1.0, eps=0.1)
        w = noise.draw(20_000, np.random.default_rng(3))
        ks = self._ks_against_density(w, lambda x: -noise.psi(x))
        assert ks.statistic < stats.kstwo.ppf(0.99, w.size)

    def test_huber_marginals(self):
        # Diagonal Lambda makes the coordinates independent.
        dens = QuadraticPlusHuberDensity(SpdMatrix.diag([1.0, 4.0]), kappa=0.8, eps=0.1)
        x = dens.sample(20_000, np.random.default_rng(4))
        for j, lam in enumerate([1.0, 4.0]):
            logpdf = lambda s, lam=lam: -0.5 * lam * s * s - 0.8 * (np.sqrt(s * s + 0.01) - 0.1)  # noqa: E731
            ks = self._ks_against_density(x[:, j], logpdf)
            assert ks.statistic < stats.kstwo.ppf(0.99, x.shape[0])

    def test_make_noise(self):
        assert isinstance(make_noise("gauss", 1.0), GaussianNoise)
        assert isinstance(make_noise("smoothed-laplace", 1.0), SmoothedLaplaceNoise)
        with pytest.raises(InvalidParameter):
            make_noise("cauchy", 1.0)
        with pytest.raises(InvalidParameter):
            GaussianNoise(0.0)


class TestPosteriorDensity:
    def test_chain_rule_pairwise(self):
        rng = np.random.default_rng(5)
        prior = QuadraticPlusHuberDensity(SpdMatrix.identity(2), kappa=0.3)
        noise = SmoothedLaplaceNoise(0.7)
        acts, rews = _random_history(2, 9, rng)
        post = PosteriorDensity(prior, noise, acts, rews)
        for _ in range(20):
            a, b = rng.standard_normal((2, 2))
            direct = lambda th: prior.log_density(th) + sum(-noise.psi(y - x @ th) for x, y in zip(acts, rews))  # noqa: E731
            assert post.log_density(a) - post.log_density(b) == pytest.approx(direct(a) - direct(b), rel=1e-12, abs=1e-12)

    def test_gaussian_matches_conjugate_posterior(self):
        rng = np.random.default_rng(6)
        cov = spd_from_eigenvalues([2.0, 0.5, 1.0], random_rotation(3, rng))
        mu0 = np.array([0.3, 0.0, -0.2])
        acts, rews = _random_history(3, 20, rng)
        exact = posterior_batch(GaussianPosterior.from_prior(mu0, cov), acts, rews, 0.6)
        post = PosteriorDensity(GaussianDensity(mu0, cov), GaussianNoise(0.6), acts, rews)
        ref = stats.multivariate_normal(exact.mean, exact.covariance.array)
        pts = rng.standard_normal((10, 3))
        lp = post.log_density(pts) - ref.logpdf(pts)
        assert np.ptp(lp) <= 1e-9

    def test_implied_precision_matches_bandit(self):
        cfg = BanditConfig(3, 1.0, 0.5, spd_from_eigenvalues([1.0, 2.0, 4.0]))
        traj = run_episode(cfg, 40, seed=3)
        post = PosteriorDensity(GaussianDensity(np.zeros(3), cfg.prior_cov), GaussianNoise(0.5), traj.actions, traj.rewards)
        assert np.max(np.abs(post.strong_convexity.array - traj.final_posterior.precision.array)) <= 1e-10

    def test_appended(self):
        post = PosteriorDensity(GaussianDensity(np.zeros(2), np.eye(2)), GaussianNoise(1.0))
        assert post.appended([1.0, 0.0], 0.5).t == 1


class TestMala:
    def test_standard_normal(self):
        res = mala_chain(GaussianDensity([0.0], [[1.0]]), np.full((1000, 1), 2.0), 10_000, 0.5, np.random.default_rng(7))
        assert abs(res.x.mean()) < 0.05
        assert 0.5 < res.acceptance_rate.mean() < 1.0

    def test_tiny_steps_stay_put(self):
        init = np.array([0.4, -0.3])
        h, n = 1e-10, 200
        x = mala_sample(GaussianDensity(np.zeros(2), np.eye(2)), init, n, h, np.random.default_rng(8))
        assert np.linalg.norm(x - init) < 10 * np.sqrt(h * n)

    def test_invalid_init(self):
        with pytest.raises(InvalidInit):
            mala_sample(GaussianDensity(np.zeros(2), np.eye(2)), np.array([np.nan, 0.0]), 5, 0.1, np.random.default_rng(0))

    def test_invalid_settings(self):
        g = GaussianDensity([0.0], [[1.0]])
        with pytest.raises(InvalidParameter):
            mala_sample(g, np.zeros(1), 5, 0.0, np.random.default_rng(0))
        with pytest.raises(InvalidParameter):
            mala_sample(g, np.zeros(1), 0, 0.1, np.random.default_rng(0))

    def test_conjugate_posterior_cloud(self):
        rng = np.random.default_rng(9)
        cov = spd_from_eigenvalues([1.5, 1.0, 0.5], random_rotation(3, rng))
        theta = rng.standard_normal(3)
        acts, _ = _random_history(3, 20, rng)
        rews = acts @ theta + 0.5 * rng.standard_normal(20)
        exact = posterior_batch(GaussianPosterior.from_prior(np.zeros(3), cov), acts, rews, 0.5)
        post = PosteriorDensity(GaussianDensity(np.zeros(3), cov), GaussianNoise(0.5), acts, rews)
        res = mala_chain(post, np.zeros((1000, 3)), 150, 0.5, rng)
        err_mean = np.linalg.norm(res.x.mean(axis=0) - exact.mean) / np.linalg.norm(exact.mean)
        err_cov = np.linalg.norm(np.cov(res.x.T) - exact.covariance.array) / np.linalg.norm(exact.covariance.array)
        assert err_mean < 0.1
        assert err_cov < 0.1


def _gauss_lc(d, sigma=1.0):
    return LogConcaveConfig(d, 1.0, GaussianDensity(np.zeros(d), np.eye(d)), GaussianNoise(sigma))


class TestThompson:
    def test_empty(self):
        traj = lc_thompson_episode(_gauss_lc(2), 0, seed=1)
        assert len(traj) == 0 and traj.total_regret == 0.0

    def test_trajectory_schema(self):
        traj = lc_thompson_episode(_gauss_lc(3), 15, seed=2)
        assert traj.actions.shape == (15, 3) and traj.theta_hats.shape == (15, 3)
        assert np.all(traj.pseudo_regret >= -1e-12)
        np.testing.assert_allclose(np.linalg.norm(traj.actions, axis=1), 1.0)
        assert traj.extras["acceptance_rate"].shape == (15,)

    def test_shares_instances_with_exact_ts(self):
        traj = lc_thompson_episode(_gauss_lc(2), 5, seed=4)
        exact = run_episode(BanditConfig(2, 1.0, 1.0, np.eye(2)), 5, seed=4)
        np.testing.assert_allclose(traj.theta_star, exact.theta_star)

    def test_gaussian_equivalence_small(self):
        d, T, n = 2, 32, 256
        lc = lc_regret_curve(_gauss_lc(d), T, n, base_seed=3)
        ex = bayes_regret_curve(BanditConfig(d, 1.0, 1.0, np.eye(d)), T, n, base_seed=3)
        assert np.all(np.abs(lc.mean_regret - ex.mean_regret) <= lc.half_width + ex.half_width)

    def test_smoothed_laplace_within_bound(self):
        for d in (1, 2):
            cfg = LogConcaveConfig(d, 1.0, GaussianDensity(np.zeros(d), np.eye(d)), SmoothedLaplaceNoise(1.0))
            c = lc_regret_curve(cfg, 32, 128, base_seed=d, sampler=SamplerSettings(n_steps=40))
            for T, m, h in zip(c.horizons, c.mean_regret, c.half_width):
                assert m <= theorem3_bound(d, int(T), 1.0, 1.0, np.eye(d)) + 3 * h


class TestConcentrationChecks:
    def test_gaussian_analytic_margin(self):
        sigma = np.array([[2.0, 0.3], [0.3, 1.0]])
        v = np.array([0.4, -0.7])
        assert gaussian_mgf_margin(sigma, v) == pytest.approx(-0.5 * v @ sigma @ v)
        assert gaussian_mgf_margin(sigma, np.zeros(2)) == 0.0

    def test_zero_direction(self):
        x = np.random.default_rng(0).standard_normal((10_000, 2))
        rep = empirical_subgaussian_check(x, np.eye(2), [[0.0, 0.0]])
        assert rep.margins[0] == 0.0 and rep.passed

    def test_huber_passes_and_control_fails(self):
        lam = SpdMatrix.diag([1.0, 2.0, 0.5])
        dens = QuadraticPlusHuberDensity(lam, kappa=0.5)
        x = dens.sample(50_000, np.random.default_rng(1))
        v = np.vstack([np.eye(3) * 0.8, [[0.5, 0.5, 0.5]]])
        assert empirical_subgaussian_check(x, lam, v, mean=dens.mean).passed
        assert not empirical_subgaussian_check(x, lam.scaled(4.0), v, mean=dens.mean).passed

    def test_gaussian_empirical_margin_close_to_analytic(self):
        cov = np.array([[1.0, 0.2], [0.2, 0.5]])
        x = np.random.default_rng(2).multivariate_normal([0, 0], cov, size=200_000)
        v = np.array([[0.5, 0.5]])
        rep = empirical_subgaussian_check(x, np.linalg.inv(cov), v, mean=np.zeros(2))
        assert rep.margins[0] == pytest.approx(gaussian_mgf_margin(cov, v[0]), abs=4 * rep.errors[0])

    def test_norm_tail(self):
        x = np.random.default_rng(3).standard_normal((1_000_000, 4))
        rep = norm_tail_check(x, np.eye(4), 2.0, [0.0, 0.5, 1.0, 1.5])
        assert rep.rows[0].bound == 2.0
        assert rep.passed
        assert all(r.frequency < r.bound for r in rep.rows)
        assert not norm_tail_check(x, np.eye(4), 0.01, [0.5, 1.0, 1.5]).passed
        with pytest.raises(InvalidParameter):
            norm_tail_check(x, np.eye(4), 0.0, [1.0])
