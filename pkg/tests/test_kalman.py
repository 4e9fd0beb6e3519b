import numpy as np
import pytest

from menkf.exceptions import DimensionError
from menkf.kalman import GaussianBelief, LinearStateSpace, kf_forecast, kf_update


def random_system(rng, n, m):
    transition = rng.standard_normal((n, n)) * 0.5
    obs = rng.standard_normal((m, n))
    q_root = rng.standard_normal((n, n))
    r_root = rng.standard_normal((m, m))
    return LinearStateSpace(
        H=obs,
        M=transition,
        R=r_root @ r_root.T + np.eye(m),
        Q=q_root @ q_root.T + 0.5 * np.eye(n),
    )


def random_belief(rng, n):
    root = rng.standard_normal((n, n))
    return GaussianBelief(rng.standard_normal(n), root @ root.T + np.eye(n))


class TestForecast:
    def test_scalar_example(self):
        ss = LinearStateSpace(H=[[1.0]], M=[[2.0]], R=[[1.0]], Q=[[1.0]])
        out = kf_forecast(GaussianBelief([1.0], [[1.0]]), ss)
        assert out.mean[0] == pytest.approx(2.0)
        assert out.cov[0, 0] == pytest.approx(5.0)

    def test_matches_simulated_transitions(self):
        # moments of 10^6 simulated draws x' = M x + w
        rng = np.random.default_rng(21)
        n = 4
        ss = random_system(rng, n, 2)
        prior = random_belief(rng, n)
        out = kf_forecast(prior, ss)

        draws = 1_000_000
        x = rng.multivariate_normal(prior.mean, prior.cov, size=draws)
        w = rng.multivariate_normal(np.zeros(n), ss.Q, size=draws)
        sim = x @ ss.M.T + w
        np.testing.assert_allclose(out.mean, sim.mean(axis=0),
                                   atol=0.01 * np.abs(out.mean).max())
        np.testing.assert_allclose(out.cov, np.cov(sim.T),
                                   atol=0.01 * np.abs(out.cov).max())

    def test_dim_mismatch(self):
        ss = LinearStateSpace(H=np.eye(2), M=np.eye(2), R=np.eye(2), Q=np.eye(2))
        with pytest.raises(DimensionError):
            kf_forecast(GaussianBelief(np.zeros(3), np.eye(3)), ss)


class TestUpdate:
    def test_scalar_example(self):
        ss = LinearStateSpace(H=[[1.0]], M=[[1.0]], R=[[1.0]], Q=[[0.0]])
        post = kf_update(GaussianBelief([0.0], [[1.0]]), [2.0], ss)
        assert post.mean[0] == pytest.approx(1.0)
        assert post.cov[0, 0] == pytest.approx(0.5)

    def test_matches_joint_gaussian_conditioning(self):
        # independent path: condition the joint (x, y) Gaussian by brute force
        rng = np.random.default_rng(33)
        n, m = 3, 2
        ss = random_system(rng, n, m)
        forecast = random_belief(rng, n)
        y = rng.standard_normal(m)

        cross = forecast.cov @ ss.H.T
        obs_cov = ss.H @ forecast.cov @ ss.H.T + ss.R
        mean_by_hand = forecast.mean + cross @ np.linalg.solve(
            obs_cov, y - ss.H @ forecast.mean)
        cov_by_hand = forecast.cov - cross @ np.linalg.solve(obs_cov, cross.T)

        post = kf_update(forecast, y, ss)
        np.testing.assert_allclose(post.mean, mean_by_hand, atol=1e-10)
        np.testing.assert_allclose(post.cov, cov_by_hand, atol=1e-10)

    def test_update_never_inflates_covariance(self):
        # posterior <= forecast in the Loewner order
        rng = np.random.default_rng(8)
        for _ in range(10):
            n = int(rng.integers(1, 6))
            m = int(rng.integers(1, 4))
            ss = random_system(rng, n, m)
            forecast = random_belief(rng, n)
            post = kf_update(forecast, rng.standard_normal(m), ss)
            assert np.linalg.eigvalsh(forecast.cov - post.cov).min() >= -1e-8

    def test_exact_observation_pins_mean(self):
        # H = I and R -> 0: the posterior mean goes to y
        rng = np.random.default_rng(13)
        n = 3
        forecast = random_belief(rng, n)
        y = rng.standard_normal(n)
        ss = LinearStateSpace(H=np.eye(n), M=np.eye(n),
                              R=1e-12 * np.eye(n), Q=np.zeros((n, n)))
        post = kf_update(forecast, y, ss)
        np.testing.assert_allclose(post.mean, y, atol=1e-6)
        assert np.abs(post.cov).max() < 1e-6

    def test_observation_order_irrelevant(self):
        rng = np.random.default_rng(55)
        n, m = 4, 3
        ss = random_system(rng, n, m)
        forecast = random_belief(rng, n)
        y = rng.standard_normal(m)
        post = kf_update(forecast, y, ss)

        perm = rng.permutation(m)
        p = np.eye(m)[perm]
        shuffled = LinearStateSpace(H=p @ ss.H, M=ss.M, R=p @ ss.R @ p.T, Q=ss.Q)
        post_shuffled = kf_update(forecast, p @ y, shuffled)
        np.testing.assert_allclose(post_shuffled.mean, post.mean, atol=1e-10)
        np.testing.assert_allclose(post_shuffled.cov, post.cov, atol=1e-10)

    def test_wrong_observation_length(self):
        ss = LinearStateSpace(H=np.eye(2), M=np.eye(2), R=np.eye(2), Q=np.eye(2))
        with pytest.raises(DimensionError):
            kf_update(GaussianBelief(np.zeros(2), np.eye(2)), np.zeros(3), ss)


class TestBeliefValidation:
    def test_asymmetric_cov_rejected(self):
        with pytest.raises(Exception):
            GaussianBelief(np.zeros(2), np.array([[1.0, 0.5], [0.0, 1.0]]))

    def test_shape_mismatch_rejected(self):
        with pytest.raises(DimensionError):
            GaussianBelief(np.zeros(2), np.eye(3))
