import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import rng_of
from deltaplan.tiny import (
    EnumerationLimitError,
    HistoryPolicy,
    RewardSchedule,
    TinyDiscretePomdp,
    corollary_rhs,
    exact_bound_m,
    exact_phi,
    exact_q_value,
    exact_value,
    lemma_reward_sides,
    load_tiny,
    optimal_policy,
    random_policy,
    random_tiny,
    save_tiny,
)


def degenerate_chain(horizon=3, gamma=1.0) -> TinyDiscretePomdp:
    """One state, one observation, reward 1 per step."""
    return TinyDiscretePomdp(
        transition=np.ones((2, 1, 1)),
        p_z=np.ones((1, 1)),
        q_z=np.ones((1, 1)),
        rewards=np.ones((horizon + 1, 1, 2)),
        horizon=horizon,
        gamma=gamma,
        b0=np.ones(1),
    )


def constant_policy(model, action=0) -> HistoryPolicy:
    from deltaplan.tiny import all_histories

    return HistoryPolicy({h: action for h in all_histories(model, model.horizon - 1)})


class TestValidation:
    def test_rows_must_be_stochastic(self):
        with pytest.raises(ValueError, match="sum to 1"):
            TinyDiscretePomdp(
                transition=np.full((1, 2, 2), 0.4),
                p_z=np.full((2, 2), 0.5),
                q_z=np.full((2, 2), 0.5),
                rewards=np.zeros((2, 2, 1)),
                horizon=1,
                gamma=1.0,
                b0=np.array([0.5, 0.5]),
            )

    def test_gamma_range(self):
        with pytest.raises(ValueError, match="gamma"):
            degenerate_chain(gamma=0.0)


class TestExactValue:
    def test_degenerate_chain_value(self):
        model = degenerate_chain()
        policy = constant_policy(model)
        assert exact_value(model, policy, "original") == pytest.approx(4.0, abs=1e-12)

    def test_identical_models_bit_for_bit(self):
        for i in range(10):
            model = random_tiny(rng_of(10, i), identical_models=True)
            policy = random_policy(model, rng_of(11, i))
            assert exact_value(model, policy, "original") == exact_value(
                model, policy, "simplified"
            )

    def test_matches_independent_recursive_oracle(self):
        def recursive_value(model, policy, which, t, belief, hist):
            obs = model.obs_matrix(which)
            if t == model.horizon:
                return float(belief @ model.rewards[t, :, 0])
            a = policy.action(hist)
            total = float(belief @ model.rewards[t, :, a])
            prop = belief @ model.transition[a]
            for z in range(model.n_obs):
                lz = float(prop @ obs[:, z])
                if lz <= 0:
                    continue
                post = prop * obs[:, z] / lz
                total += model.gamma * lz * recursive_value(
                    model, policy, which, t + 1, post, hist + ((a, z),)
                )
            return total

        for i in range(25):
            model = random_tiny(rng_of(12, i), n_states=3, n_obs=3, horizon=3)
            policy = random_policy(model, rng_of(13, i))
            for which in ("original", "simplified"):
                expected = recursive_value(model, policy, which, 0, model.b0, ())
                assert exact_value(model, policy, which) == pytest.approx(
                    expected, abs=1e-10
                )

    def test_enumeration_guard(self):
        model = random_tiny(rng_of(14), n_states=2, n_obs=3, horizon=3)
        policy = random_policy(model, rng_of(15))
        with pytest.raises(EnumerationLimitError) as err:
            exact_value(model, policy, "original", limit=10)
        assert err.value.count == 27


class TestExactQ:
    def test_policy_action_is_definitional(self):
        model = random_tiny(rng_of(16), horizon=2)
        policy = random_policy(model, rng_of(17))
        a0 = policy.action(())
        assert exact_q_value(model, policy, a0, "original") == pytest.approx(
            exact_value(model, policy, "original"), abs=1e-14
        )

    def test_one_step_closed_form(self):
        model = random_tiny(rng_of(18), horizon=1)
        policy = random_policy(model, rng_of(19))
        for a in range(model.n_actions):
            immediate = float(model.b0 @ model.rewards[0, :, a])
            prop = model.b0 @ model.transition[a]
            terminal = float(prop @ model.rewards[1, :, 0])
            expected = immediate + model.gamma * terminal
            assert exact_q_value(model, policy, a, "original") == pytest.approx(
                expected, abs=1e-12
            )

    def test_identical_models_equal_q(self):
        model = random_tiny(rng_of(20), identical_models=True)
        policy = random_policy(model, rng_of(21))
        for a in range(model.n_actions):
            assert exact_q_value(model, policy, a, "original") == exact_q_value(
                model, policy, a, "simplified"
            )


class TestBoundOracles:
    def test_identical_models_zero_bound(self):
        model = random_tiny(rng_of(22), identical_models=True)
        policy = random_policy(model, rng_of(23))
        assert exact_bound_m(model, policy) == 0.0

    def test_zero_horizon_zero_bound(self):
        model = degenerate_chain(horizon=0)
        policy = HistoryPolicy({(): 0})
        assert exact_bound_m(model, policy) == 0.0

    def test_bound_dominates_value_gap(self):
        for i in range(200):
            model = random_tiny(rng_of(24, i))
            policy = random_policy(model, rng_of(25, i))
            gap = abs(
                exact_value(model, policy, "original")
                - exact_value(model, policy, "simplified")
            )
            assert gap <= exact_bound_m(model, policy) + 1e-9

    def test_action_bound_dominates_q_gap(self):
        for i in range(100):
            model = random_tiny(rng_of(26, i))
            policy = random_policy(model, rng_of(27, i))
            for a in range(model.n_actions):
                gap = abs(
                    exact_q_value(model, policy, a, "original")
                    - exact_q_value(model, policy, a, "simplified")
                )
                assert gap <= exact_phi(model, policy, a) + 1e-9

    def test_bound_equals_scaled_expectation_form(self):
        for i in range(50):
            model = random_tiny(rng_of(28, i), gamma=(1.0, 0.9, 0.5)[i % 3])
            policy = random_policy(model, rng_of(29, i))
            assert exact_bound_m(model, policy) == pytest.approx(
                corollary_rhs(model, policy), abs=1e-9
            )


class TestLemmaEquivalence:
    def test_history_vs_trajectory_sides(self):
        for i in range(50):
            model = random_tiny(rng_of(30, i))
            policy = random_policy(model, rng_of(31, i))
            for which in ("original", "simplified"):
                for step in range(1, model.horizon + 1):
                    lhs, rhs = lemma_reward_sides(model, policy, step, which)
                    assert lhs == pytest.approx(rhs, abs=1e-9)


class TestRewardSchedule:
    @given(
        r=st.lists(st.floats(0.0, 50.0), min_size=1, max_size=8),
        gamma=st.floats(0.1, 1.0),
    )
    @settings(max_examples=200, deadline=None)
    def test_recursion_invariant(self, r, gamma):
        sched = RewardSchedule(np.array(r), gamma)
        v = sched.v_max_per_step
        horizon = len(r) - 1
        assert v[horizon] == pytest.approx(r[horizon])
        for t in range(horizon):
            assert v[t] == pytest.approx(r[t] + gamma * v[t + 1], rel=1e-12)

    def test_rejects_negative_bounds(self):
        with pytest.raises(ValueError):
            RewardSchedule(np.array([-1.0]), 1.0)


class TestOptimalPolicy:
    def test_optimal_beats_random(self):
        for i in range(10):
            model = random_tiny(rng_of(32, i), horizon=2)
            pol_opt, root_q = optimal_policy(model, "original")
            v_opt = exact_value(model, pol_opt, "original")
            assert v_opt == pytest.approx(root_q.max(), abs=1e-10)
            pol_rand = random_policy(model, rng_of(33, i))
            assert v_opt >= exact_value(model, pol_rand, "original") - 1e-10


class TestSerialization:
    def test_round_trip_bit_exact(self, tmp_path):
        model = random_tiny(rng_of(34), horizon=3)
        path = tmp_path / "model.txt"
        save_tiny(model, path)
        loaded = load_tiny(path)
        np.testing.assert_array_equal(loaded.transition, model.transition)
        np.testing.assert_array_equal(loaded.p_z, model.p_z)
        np.testing.assert_array_equal(loaded.q_z, model.q_z)
        np.testing.assert_array_equal(loaded.rewards, model.rewards)
        np.testing.assert_array_equal(loaded.b0, model.b0)
        assert loaded.gamma == model.gamma
        assert loaded.horizon == model.horizon
        policy = random_policy(model, rng_of(35))
        assert exact_value(loaded, policy, "original") == exact_value(
            model, policy, "original"
        )

    def test_rejects_unknown_header(self, tmp_path):
        path = tmp_path / "bad.txt"
        path.write_text("something-else v9\n")
        with pytest.raises(ValueError, match="header"):
            load_tiny(path)
