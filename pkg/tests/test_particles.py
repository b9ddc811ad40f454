import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra import numpy as hnp

from conftest import rng_of
from deltaplan.particles import (
    ParticleBelief,
    WeightDegeneracyError,
    effective_sample_size,
    from_prior,
    moments,
    propagate,
    resample,
    sis_update,
    systematic_resample_indices,
)


class GridWorld:
    """Deterministic-drift test model: terminal beyond x >= limit."""

    def __init__(self, limit=10.0, noise=0.0, reward_value=1.0):
        self.limit = limit
        self.noise = noise
        self.reward_value = reward_value

    def propagate_states(self, states, action, rng):
        out = states + np.asarray(action, dtype=float)
        if self.noise:
            out = out + self.noise * rng.standard_normal(states.shape)
        return out

    def reward_batch(self, t, states, action=None):
        return np.full(states.shape[0], self.reward_value)

    def terminal_mask(self, states):
        return states[:, 0] >= self.limit


class GaussObs:
    def __init__(self, sigma):
        self.sigma = sigma

    def obs_logpdf(self, z, states):
        sq = ((states - np.asarray(z)) ** 2).sum(axis=1)
        return -0.5 * sq / self.sigma**2 - np.log(2 * np.pi * self.sigma**2)


def uniform_belief(states, t=0):
    n = states.shape[0]
    return ParticleBelief(states, np.full(n, 1.0 / n), 1.0, t)


class TestPropagate:
    def test_deterministic_shift_no_terminals(self):
        states = rng_of(0).normal(size=(40, 2))
        belief = uniform_belief(states)
        out, reward, surv = propagate(belief, np.array([1.0, -0.5]), GridWorld(limit=1e9), rng_of(1))
        np.testing.assert_allclose(out.states, states + np.array([1.0, -0.5]))
        assert surv == 1.0
        assert reward == pytest.approx(1.0)
        assert out.time_index == 1

    def test_all_terminal_flags_fully_terminal(self):
        states = np.full((10, 2), 20.0)
        belief = uniform_belief(states)
        out, reward, surv = propagate(belief, np.zeros(2), GridWorld(limit=5.0), rng_of(2))
        assert surv == 0.0
        assert out.fully_terminal
        assert out.survival_mass == 0.0

    def test_straddling_survival_factor_matches_direct_sum(self):
        rng = rng_of(3)
        states = rng.uniform(0, 10, size=(200, 2))
        w = rng.random(200)
        w /= w.sum()
        belief = ParticleBelief(states, w, 1.0, 0)
        model = GridWorld(limit=6.0)
        out, _, surv = propagate(belief, np.zeros(2), model, rng_of(4))
        # independent recomputation over the propagated set
        expected = float(w[out.states[:, 0] < 6.0].sum())
        assert surv == pytest.approx(expected, abs=1e-12)
        np.testing.assert_allclose(out.weights.sum(), 1.0, atol=1e-9)

    def test_propagating_terminal_belief_rejected(self):
        belief = ParticleBelief(np.zeros((3, 2)), np.full(3, 1 / 3), 0.0, 1, fully_terminal=True)
        with pytest.raises(ValueError):
            propagate(belief, np.zeros(2), GridWorld(), rng_of(5))

    def test_survival_mass_is_product_of_factors(self):
        rng = rng_of(6)
        states = rng.uniform(0, 4, size=(300, 2))
        belief = uniform_belief(states)
        model = GridWorld(limit=6.0, noise=1.0)
        product = 1.0
        for _ in range(4):
            belief, _, surv = propagate(belief, np.array([0.7, 0.0]), model, rng)
            if belief.fully_terminal:
                break
            product *= surv
            assert belief.survival_mass == pytest.approx(product, abs=1e-12)


class TestSisUpdate:
    def test_constant_likelihood_leaves_weights(self):
        class FlatObs:
            def obs_logpdf(self, z, states):
                return np.full(states.shape[0], -3.7)

        rng = rng_of(7)
        w = rng.random(50)
        w /= w.sum()
        belief = ParticleBelief(rng.normal(size=(50, 2)), w, 1.0, 0)
        out = sis_update(belief, np.zeros(2), FlatObs())
        np.testing.assert_allclose(out.weights, w, atol=1e-15)

    def test_single_supported_particle_takes_all_weight(self):
        class OneHot:
            def obs_logpdf(self, z, states):
                out = np.full(states.shape[0], -np.inf)
                out[3] = -1.0
                return out

        belief = uniform_belief(rng_of(8).normal(size=(10, 2)))
        out = sis_update(belief, np.zeros(2), OneHot())
        assert out.weights[3] == pytest.approx(1.0)
        assert out.weights.sum() == pytest.approx(1.0)

    def test_posterior_mean_matches_grid_bayes_oracle(self):
        rng = rng_of(9)
        prior_sigma, obs_sigma = 1.0, 0.5
        n = 40_000
        states = prior_sigma * rng.standard_normal((n, 2))
        belief = uniform_belief(states)
        z = np.array([0.8, -0.4])
        out = sis_update(belief, z, GaussObs(obs_sigma))
        post_mean, post_cov = moments(out)
        # dense-grid Bayes for the conjugate 1D marginals
        grid = np.linspace(-5, 5, 4001)
        for dim in range(2):
            prior = np.exp(-0.5 * grid**2 / prior_sigma**2)
            lik = np.exp(-0.5 * (z[dim] - grid) ** 2 / obs_sigma**2)
            post = prior * lik
            post /= post.sum()
            oracle_mean = float(post @ grid)
            se = np.sqrt(post_cov[dim, dim] / effective_sample_size(out.weights))
            assert abs(post_mean[dim] - oracle_mean) < 3.0 * se + 1e-3

    def test_all_zero_likelihood_raises_with_observation(self):
        class DeadObs:
            def obs_logpdf(self, z, states):
                return np.full(states.shape[0], -np.inf)

        belief = uniform_belief(np.zeros((5, 2)))
        z = np.array([9.0, 9.0])
        with pytest.raises(WeightDegeneracyError) as err:
            sis_update(belief, z, DeadObs())
        np.testing.assert_array_equal(err.value.observation, z)


class TestResample:
    def test_uniform_weights_keep_every_particle_once(self):
        states = np.arange(20, dtype=float).reshape(10, 2)
        belief = uniform_belief(states)
        out = resample(belief, rng_of(10))
        np.testing.assert_array_equal(np.sort(out.states, axis=0), np.sort(states, axis=0))
        np.testing.assert_allclose(out.weights, 0.1)

    def test_degenerate_weight_copies_single_particle(self):
        states = np.arange(20, dtype=float).reshape(10, 2)
        w = np.zeros(10)
        w[4] = 1.0
        belief = ParticleBelief(states, w, 1.0, 0)
        out = resample(belief, rng_of(11))
        np.testing.assert_array_equal(out.states, np.tile(states[4], (10, 1)))

    def test_mean_preserved_in_expectation(self):
        rng = rng_of(12)
        states = rng.normal(size=(100, 2))
        w = rng.random(100)
        w /= w.sum()
        belief = ParticleBelief(states, w, 1.0, 0)
        target = w @ states
        means = []
        for i in range(1000):
            out = resample(belief, rng_of(13, i))
            means.append(out.weights @ out.states)
        means = np.array(means)
        se = means.std(axis=0) / np.sqrt(len(means))
        assert np.all(np.abs(means.mean(axis=0) - target) < 4.0 * se + 1e-12)

    def test_survival_mass_preserved(self):
        belief = ParticleBelief(np.zeros((8, 2)), np.full(8, 0.125), 0.37, 2)
        out = resample(belief, rng_of(14))
        assert out.survival_mass == 0.37
        assert out.time_index == 2

    @given(u0=st.floats(0.0, 0.999999))
    @settings(max_examples=50, deadline=None)
    def test_systematic_indices_are_monotone_and_complete(self, u0):
        w = np.array([0.1, 0.4, 0.2, 0.3])
        idx = systematic_resample_indices(w, u0)
        assert idx.shape == (4,)
        assert np.all(np.diff(idx) >= 0)
        assert idx.min() >= 0 and idx.max() <= 3


class TestMoments:
    def test_single_particle(self):
        belief = ParticleBelief(np.array([[3.0, -1.0]]), np.ones(1), 1.0, 0)
        mean, cov = moments(belief)
        np.testing.assert_array_equal(mean, [3.0, -1.0])
        np.testing.assert_array_equal(cov, np.zeros((2, 2)))

    def test_two_point_hand_value(self):
        belief = ParticleBelief(
            np.array([[0.0, 0.0], [2.0, 0.0]]), np.array([0.5, 0.5]), 1.0, 0
        )
        mean, cov = moments(belief)
        np.testing.assert_allclose(mean, [1.0, 0.0])
        assert cov[0, 0] == pytest.approx(1.0)

    @given(
        states=hnp.arrays(
            np.float64,
            st.tuples(st.integers(2, 30), st.just(2)),
            elements=st.floats(-50, 50),
        ),
        seed=st.integers(0, 2**16),
    )
    @settings(max_examples=100, deadline=None)
    def test_matches_naive_two_pass(self, states, seed):
        rng = rng_of(15, seed)
        w = rng.random(states.shape[0]) + 1e-6
        w /= w.sum()
        belief = ParticleBelief(states, w, 1.0, 0)
        mean, cov = moments(belief)
        naive_mean = sum(w[i] * states[i] for i in range(len(w)))
        naive_cov = sum(
            w[i] * np.outer(states[i] - naive_mean, states[i] - naive_mean)
            for i in range(len(w))
        )
        np.testing.assert_allclose(mean, naive_mean, atol=1e-12)
        np.testing.assert_allclose(cov, naive_cov, atol=1e-12)

    def test_terminal_belief_rejected(self):
        belief = ParticleBelief(np.zeros((3, 2)), np.full(3, 1 / 3), 0.0, 0, fully_terminal=True)
        with pytest.raises(ValueError):
            moments(belief)


class TestQDecomposition:
    def test_mixed_termination_expectation_identity(self):
        """r(b,a) + gamma * survival * E[value | alive] equals the naive
        mixed expectation when future value is per-particle computable."""
        rng = rng_of(16)
        states = rng.uniform(0, 10, size=(500, 2))
        w = rng.random(500)
        w /= w.sum()
        belief = ParticleBelief(states, w, 1.0, 0)
        model = GridWorld(limit=6.0, reward_value=2.0)
        gamma = 0.9
        future_value = 5.0  # constant continuation for surviving particles
        out, reward, surv = propagate(belief, np.zeros(2), model, rng_of(17))
        lhs = reward + gamma * surv * future_value
        alive = out.states[:, 0] < 6.0
        naive = float((w * 2.0).sum() + gamma * (w * alive * future_value).sum())
        assert lhs == pytest.approx(naive, abs=1e-9)


def test_from_prior_uniform_weights():
    belief = from_prior(lambda rng, n: rng.normal(size=(n, 2)), 64, rng_of(18))
    assert belief.n_particles == 64
    np.testing.assert_allclose(belief.weights, 1 / 64)
    assert belief.survival_mass == 1.0
