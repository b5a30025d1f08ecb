import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from tslab.bandit import (
    BanditConfig,
    BanditInstance,
    GaussianPosterior,
    optimal_action,
    posterior_batch,
    posterior_update,
    run_episode,
    simulate_batch,
    step,
    thompson_step,
)
from tslab.bounds import theorem1_bound, theorem2_bound
from tslab.errors import ActionOutOfSet, DimensionMismatch, InvalidParameter
from tslab.linalg import SpdMatrix, random_rotation, spd_from_eigenvalues


def config(d=2, r=1.0, sigma=1.0, scale=1.0, mean=None):
    return BanditConfig(d, r, sigma, SpdMatrix.identity(d, scale), mean)


class TestConfig:
    def test_rejects_bad_parameters(self):
        with pytest.raises(InvalidParameter):
            config(sigma=0.0)
        with pytest.raises(InvalidParameter):
            config(r=-1.0)
        with pytest.raises(DimensionMismatch):
            BanditConfig(3, 1.0, 1.0, SpdMatrix.identity(2))
        with pytest.raises(InvalidParameter):
            BanditConfig(2, 1.0, 1.0, SpdMatrix.diag([1.0, 0.0]))

    def test_fingerprint_stable(self):
        assert config().fingerprint() == config().fingerprint()
        assert config().fingerprint() != config(sigma=2.0).fingerprint()
        assert config(mean=[0.0, 0.0]).fingerprint() == config().fingerprint()


class TestOptimalAction:
    def test_normalization(self):
        np.testing.assert_allclose(optimal_action([3.0, 4.0], 2.0), [1.2, 1.6])
        np.testing.assert_array_equal(optimal_action([1.0, 0.0], 1.0), [1.0, 0.0])

    def test_zero_tie_break(self):
        np.testing.assert_array_equal(optimal_action(np.zeros(3), 1.0), [1.0, 0.0, 0.0])
        # Every point of the sphere attains the maximum 0 when theta = 0.
        grid = np.stack([np.cos(np.linspace(0, 2 * np.pi, 721)), np.sin(np.linspace(0, 2 * np.pi, 721))], 1)
        assert np.max(grid @ np.zeros(2)) == np.zeros(2) @ optimal_action(np.zeros(2), 1.0)

    def test_rowwise(self):
        th = np.array([[3.0, 4.0], [0.0, 0.0], [0.0, -2.0]])
        np.testing.assert_allclose(optimal_action(th, 1.0), [[0.6, 0.8], [1.0, 0.0], [0.0, -1.0]])

    def test_brute_force_argmax(self):
        rng = np.random.default_rng(0)
        angles = np.linspace(0, 2 * np.pi, 20001)
        sphere = np.stack([np.cos(angles), np.sin(angles)], 1)
        for _ in range(20):
            th = rng.standard_normal(2)
            assert th @ optimal_action(th, 1.0) >= np.max(sphere @ th) - 1e-12


class TestStep:
    def test_noiseless_limit(self):
        inst = BanditInstance(config(sigma=1e-12), np.array([0.5, -0.25]))
        a = np.array([0.6, 0.8])
        assert step(inst, a, np.random.default_rng(0)) == pytest.approx(0.5 * 0.6 - 0.25 * 0.8, abs=1e-8)

    def test_deterministic(self):
        inst = BanditInstance(config(), np.array([0.5, -0.25]))
        a = np.array([1.0, 0.0])
        assert step(inst, a, np.random.default_rng(3)) == step(inst, a, np.random.default_rng(3))

    def test_out_of_set(self):
        inst = BanditInstance(config(), np.zeros(2))
        with pytest.raises(ActionOutOfSet):
            step(inst, np.array([1.0, 0.1]), np.random.default_rng(0))
        step(inst, np.array([1.0 + 1e-13, 0.0]), np.random.default_rng(0))

    def test_zero_action_noise_mean(self):
        inst = BanditInstance(config(sigma=2.0), np.array([1.0, 1.0]))
        rng = np.random.default_rng(4)
        n = 100_000
        draws = np.array([step(inst, np.zeros(2), rng) for _ in range(n)])
        assert abs(draws.mean()) <= 3 * 2.0 / np.sqrt(n)


class TestPosterior:
    def test_scalar_conjugacy(self):
        post = posterior_update(GaussianPosterior.from_prior([0.0], [[1.0]]), [1.0], 2.0, 1.0)
        assert post.precision.array[0, 0] == 2.0
        assert post.covariance.array[0, 0] == pytest.approx(0.5)
        assert post.mean[0] == pytest.approx(1.0)
        batch = posterior_batch(GaussianPosterior.from_prior([0.0], [[1.0]]), [[1.0]], [2.0], 1.0)
        np.testing.assert_allclose(batch.mean, post.mean)
        np.testing.assert_allclose(batch.covariance.array, post.covariance.array)

    def test_zero_action(self):
        prior = GaussianPosterior.from_prior([1.0, -1.0], np.diag([2.0, 3.0]))
        post = posterior_update(prior, np.zeros(2), 5.0, 1.0)
        np.testing.assert_allclose(post.mean, prior.mean)
        np.testing.assert_allclose(post.covariance.array, prior.covariance.array)

    def test_empty_batch(self):
        prior = GaussianPosterior.from_prior([0.0, 0.0], np.eye(2))
        assert posterior_batch(prior, np.zeros((0, 2)), np.zeros(0), 1.0) is prior

    def test_batch_mismatch(self):
        prior = GaussianPosterior.from_prior([0.0, 0.0], np.eye(2))
        with pytest.raises(DimensionMismatch):
            posterior_batch(prior, np.zeros((3, 2)), np.zeros(2), 1.0)

    @pytest.mark.parametrize("d,t", [(4, 30), (3, 50), (6, 150)])
    def test_incremental_matches_batch(self, d, t):
        rng = np.random.default_rng(d * 100 + t)
        cov = spd_from_eigenvalues(rng.uniform(0.2, 5.0, d), random_rotation(d, rng))
        prior = GaussianPosterior.from_prior(rng.standard_normal(d), cov)
        acts = rng.standard_normal((t, d))
        acts /= np.maximum(np.linalg.norm(acts, axis=1, keepdims=True), 1.0)
        rews = rng.standard_normal(t)
        post = prior
        for a, y in zip(acts, rews):
            post = posterior_update(post, a, y, 0.7)
        batch = posterior_batch(prior, acts, rews, 0.7)
        assert np.max(np.abs(post.mean - batch.mean)) <= 1e-8
        assert np.max(np.abs(post.covariance.array - batch.covariance.array)) <= 1e-8
        assert np.max(np.abs(post.precision.array - batch.precision.array)) <= 1e-8
        assert np.max(np.abs(post.precision.array @ post.covariance.array - np.eye(d))) <= 1e-7


class TestThompsonStep:
    def test_collapsed_posterior(self):
        inst = BanditInstance(config(d=3), np.array([1.0, 0.0, 0.0]))
        mean = np.array([0.3, -0.4, 1.2])
        post = GaussianPosterior.from_prior(mean, SpdMatrix.identity(3, 1e-12))
        a, _, _, _ = thompson_step(inst, post, np.random.default_rng(0))
        np.testing.assert_allclose(a, optimal_action(mean, 1.0), atol=1e-5)

    def test_reproducible(self):
        inst = BanditInstance(config(d=3), np.array([1.0, 0.5, 0.0]))
        post = GaussianPosterior.from_config(inst.config)
        a = thompson_step(inst, post, np.random.default_rng(9))
        b = thompson_step(inst, post, np.random.default_rng(9))
        for x, y in zip(a[:3], b[:3]):
            np.testing.assert_array_equal(x, y)
        np.testing.assert_array_equal(a[3].mean, b[3].mean)

    def test_conditional_law(self):
        rng = np.random.default_rng(2)
        d = 3
        cov = spd_from_eigenvalues([2.0, 1.0, 0.5], random_rotation(d, rng))
        post = GaussianPosterior.from_prior(np.array([1.0, -2.0, 0.5]), cov)
        inst = BanditInstance(BanditConfig(d, 1.0, 1.0, cov), np.zeros(d))
        draws = np.array([thompson_step(inst, post, rng)[2] for _ in range(10_000)])
        np.testing.assert_allclose(draws.mean(axis=0), post.mean, atol=0.05 * np.sqrt(2.0))
        np.testing.assert_allclose(np.cov(draws.T), cov.array, atol=0.05 * 2.0)


class TestEpisode:
    def test_empty(self):
        traj = run_episode(config(), 0, seed=1)
        assert len(traj) == 0
        assert traj.total_regret == 0.0

    def test_length_and_nonnegative_regret(self):
        for seed in range(100):
            traj = run_episode(config(d=3, sigma=0.5), 20, seed)
            assert len(traj) == 20
            assert np.all(traj.pseudo_regret >= -1e-12)

    def test_deterministic(self):
        a = run_episode(config(d=3), 30, seed=4)
        b = run_episode(config(d=3), 30, seed=4)
        np.testing.assert_array_equal(a.actions, b.actions)
        np.testing.assert_array_equal(a.rewards, b.rewards)

    def test_final_posterior_matches_batch(self):
        cfg = config(d=4, sigma=0.5, mean=[0.5, 0.0, -1.0, 0.2])
        traj = run_episode(cfg, 150, seed=8)
        batch = posterior_batch(GaussianPosterior.from_config(cfg), traj.actions, traj.rewards, cfg.sigma)
        assert np.max(np.abs(traj.final_posterior.mean - batch.mean)) <= 1e-8
        assert np.max(np.abs(traj.final_posterior.covariance.array - batch.covariance.array)) <= 1e-8

    def test_posterior_contraction(self):
        cfg = config(d=3, sigma=0.5)
        rng = np.random.default_rng(0)
        inst = BanditInstance(cfg, rng.standard_normal(3))
        post = GaussianPosterior.from_config(cfg)
        top = [post.covariance.max_eig]
        for _ in range(100):
            post = thompson_step(inst, post, rng)[3]
            top.append(post.covariance.max_eig)
        assert np.all(np.diff(top) <= 1e-12)

    @pytest.mark.parametrize("seed", [0, 3, 17])
    def test_batch_engine_matches_episode(self, seed):
        cfg = config(d=3, sigma=0.7, scale=2.0)
        traj = run_episode(cfg, 130, seed)
        res = simulate_batch(cfg, 130, 1, seed, keep_history=True)
        np.testing.assert_allclose(res.theta_star[0], traj.theta_star, atol=1e-12)
        np.testing.assert_allclose(res.actions[0], traj.actions, atol=1e-8)
        np.testing.assert_allclose(res.pseudo_regret[0], traj.pseudo_regret, atol=1e-8)
        np.testing.assert_allclose(res.err_sq[0], traj.err_sq, rtol=1e-8, atol=1e-10)
        np.testing.assert_allclose(res.potential[0], traj.potentials, rtol=1e-8)

    def test_total_regret_bracket(self):
        # d = 1, Sigma0 = 1, sigma = 1, r = 1, T = 100 over 2000 seeds.
        cfg = config(d=1)
        res = simulate_batch(cfg, 100, 2000, seed=21)
        mean = res.pseudo_regret.sum(axis=1).mean()
        lower = theorem2_bound(1.0, [1.0], 100)
        upper = theorem1_bound(1, 100, 1.0, 1.0, np.eye(1))
        assert lower <= mean <= upper


@given(st.integers(0, 2**31), st.integers(1, 6), st.integers(1, 40))
@settings(max_examples=25, deadline=None)
def test_pseudo_regret_nonnegative_property(seed, d, T):
    res = simulate_batch(config(d=d, sigma=0.3), T, 8, seed)
    assert np.all(res.pseudo_regret >= -1e-12)


def _energy_perm_pvalue(x, y, rng, n_resamples=199):
    obs = stats.energy_distance(x, y)
    pooled = np.concatenate([x, y])
    count = 0
    for _ in range(n_resamples):
        perm = rng.permutation(pooled)
        if stats.energy_distance(perm[: x.size], perm[x.size :]) >= obs:
            count += 1
    return (count + 1) / (n_resamples + 1)


def test_exchangeability_of_sample_and_truth():
    """Given the history, theta_hat and theta* have the same law.

    Both are whitened by their episode's posterior and compared with
    two-sample energy-distance permutation tests on fixed projections.
    """
    d, T, n = 2, 6, 10_000
    cfg = config(d=d, sigma=0.5)
    res = simulate_batch(cfg, T, n, seed=33)
    rng = np.random.default_rng(1)
    chol = np.linalg.cholesky(res.final_cov)
    fresh = res.final_mean + np.einsum("bij,bj->bi", chol, rng.standard_normal((n, d)))
    white = lambda x: np.linalg.solve(chol, (x - res.final_mean)[:, :, None])[:, :, 0]  # noqa: E731
    zs, zh = white(res.theta_star), white(fresh)
    dirs = np.array([[1.0, 0.0], [0.0, 1.0], [np.sqrt(0.5), np.sqrt(0.5)]])
    pvals = [_energy_perm_pvalue(zs @ w, zh @ w, rng) for w in dirs]
    assert min(pvals) * len(dirs) > 0.01
