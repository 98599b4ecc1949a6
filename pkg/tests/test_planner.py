import numpy as np
import pytest

from spectral_pomdp.domains import tiger, with_reward_observations
from spectral_pomdp.hankel import exact_hankel
from spectral_pomdp.model import DiscretePomdp
from spectral_pomdp.planner import (
    PlannerConfig,
    RewardSpec,
    derive_state_rewards,
    filter_step,
    ground_truth_backend,
    observation_distribution,
    plan,
    psr_backend,
    recovered_backend,
    reward_observation_spec,
    run_episode,
    sample_step_belief,
    sample_step_partition,
)
from spectral_pomdp.psr import extract_psr, psr_predict, truncated_svd
from spectral_pomdp.recovery import align_to_ground_truth

from helpers import exact_recovered, get_domain


def flip_chain():
    """One action, two states swapping deterministically, identity emissions."""
    return DiscretePomdp(
        actions=("go",),
        observations=("zero", "one"),
        trans=np.array([[[0.0, 1.0], [1.0, 0.0]]]),
        obs=np.array([[[1.0, 0.0], [0.0, 1.0]]]),
        init=np.array([1.0, 0.0]),
    )


class TestRewardSpec:
    def test_observation_based(self):
        spec = RewardSpec("observation-based", observation_rewards=np.array([[1.0, 0.0]]))
        assert spec.mode == "observation-based"

    def test_state_based(self):
        spec = RewardSpec("state-based", state_rewards=np.array([0.0, 1.0]))
        assert spec.state_rewards[1] == 1.0

    def test_rejects_all_zero(self):
        with pytest.raises(ValueError, match="nonzero"):
            RewardSpec("state-based", state_rewards=np.zeros(3))

    def test_rejects_non_finite(self):
        with pytest.raises(ValueError, match="finite"):
            RewardSpec("observation-based", observation_rewards=np.array([[np.inf, 0.0]]))

    def test_rejects_unknown_mode(self):
        with pytest.raises(ValueError, match="mode"):
            RewardSpec("belief-based", state_rewards=np.ones(2))

    def test_requires_active_map(self):
        with pytest.raises(ValueError, match="state"):
            RewardSpec("state-based", observation_rewards=np.ones((1, 2)))


class TestPlannerConfig:
    def test_defaults(self):
        cfg = PlannerConfig()
        assert cfg.ucb_constant == 2.0
        assert cfg.max_depth == 3
        assert cfg.simulations_per_step == 1000
        assert cfg.exploration_exponent == 0.5
        assert cfg.discount == 0.95
        assert not cfg.log_bonus

    def test_validation(self):
        with pytest.raises(ValueError):
            PlannerConfig(max_depth=0)
        with pytest.raises(ValueError):
            PlannerConfig(simulations_per_step=0)
        with pytest.raises(ValueError):
            PlannerConfig(discount=1.0)


class TestBackends:
    def test_ground_truth_likelihoods_are_observation_diagonals(self):
        model = tiger()
        backend = ground_truth_backend(model)
        np.testing.assert_allclose(backend.likelihoods, model.obs, atol=1e-12)
        np.testing.assert_allclose(backend.norm_vec, 1.0)
        np.testing.assert_allclose(backend.init_state, model.init)
        np.testing.assert_allclose(backend.native_rewards, model.reward.T)

    def test_psr_backend_uses_terminal_vector(self):
        model = get_domain("sfr3")
        est = exact_hankel(model, 3, 2)
        psr = extract_psr(est, truncated_svd(est, 1e-6, 20))
        backend = psr_backend(psr)
        np.testing.assert_array_equal(backend.norm_vec, psr.m_inf)
        np.testing.assert_array_equal(backend.init_state, psr.m0)
        assert backend.partition is None
        assert backend.native_rewards is None

    def test_recovered_backend(self):
        _, _, rec = exact_recovered("sfr3", (3, 2), 0.1)
        backend = recovered_backend(rec)
        np.testing.assert_allclose(backend.norm_vec, 1.0)
        np.testing.assert_array_equal(backend.init_state, rec.belief)
        assert backend.partition == rec.partition


class TestPlan:
    def test_tiger_uniform_belief_listens(self):
        # exploration constant scaled to the domain's +-100 reward range;
        # the generic default of 2 under-explores after one bad rollout
        model = tiger()
        backend = ground_truth_backend(model)
        cfg = PlannerConfig(ucb_constant=10.0)
        for seed in range(5):
            a = plan(backend, np.array([0.5, 0.5]), cfg, seed=seed)
            assert model.actions[a] == "listen"

    def test_zero_probability_root_belief(self):
        backend = ground_truth_backend(tiger())
        with pytest.raises(ValueError, match="root belief"):
            plan(backend, np.zeros(2), PlannerConfig(), seed=0)

    def test_all_zero_native_rewards_terminate(self):
        model = tiger()
        silent = DiscretePomdp(
            actions=model.actions,
            observations=model.observations,
            trans=model.trans,
            obs=model.obs,
            init=model.init,
            reward=np.zeros((2, 3)),
        )
        backend = ground_truth_backend(silent)
        a = plan(backend, model.init, PlannerConfig(simulations_per_step=50), seed=3)
        assert 0 <= a < 3

    def test_deterministic_in_seed(self):
        backend = ground_truth_backend(tiger())
        cfg = PlannerConfig(simulations_per_step=200)
        first = plan(backend, np.array([0.5, 0.5]), cfg, seed=42)
        second = plan(backend, np.array([0.5, 0.5]), cfg, seed=42)
        assert first == second

    def test_psr_rejects_state_rewards(self):
        model = get_domain("sfr3")
        est = exact_hankel(model, 3, 2)
        psr = extract_psr(est, truncated_svd(est, 1e-6, 20))
        backend = psr_backend(psr)
        spec = RewardSpec("state-based", state_rewards=np.array([0.0, 1.0, 0.0]))
        with pytest.raises(ValueError, match="state-based"):
            plan(backend, psr.m0, PlannerConfig(), reward=spec, seed=0)

    def test_psr_has_no_native_rewards(self):
        model = get_domain("sfr3")
        est = exact_hankel(model, 3, 2)
        psr = extract_psr(est, truncated_svd(est, 1e-6, 20))
        backend = psr_backend(psr)
        with pytest.raises(ValueError, match="native"):
            plan(backend, psr.m0, PlannerConfig(), seed=0)

    def test_state_reward_length_checked(self):
        backend = ground_truth_backend(tiger())
        spec = RewardSpec("state-based", state_rewards=np.array([1.0, 0.0, 0.0]))
        with pytest.raises(ValueError, match="length"):
            plan(backend, np.array([0.5, 0.5]), PlannerConfig(), reward=spec, seed=0)


class TestSampleSteps:
    def test_deterministic_chain_point_belief(self):
        model = flip_chain()
        backend = ground_truth_backend(model)
        spec = RewardSpec("observation-based", observation_rewards=np.array([[5.0, 0.0]]))
        rng = np.random.default_rng(0)
        nxt, o, rew = sample_step_belief(backend, np.array([1.0, 0.0]), 0, rng, spec)
        assert o == 0
        assert rew == 5.0
        np.testing.assert_allclose(nxt, [0.0, 1.0], atol=1e-12)

    def test_observation_distribution_is_simplex(self):
        _, _, rec = exact_recovered("sfr3", (3, 2), 0.1)
        backend = recovered_backend(rec)
        for a in range(3):
            w = observation_distribution(backend, rec.belief, a)
            assert w.min() >= 0.0
            assert w.sum() == pytest.approx(1.0, abs=1e-12)

    def test_step_distribution_matches_psr_one_step(self):
        _, psr, rec = exact_recovered("sfr3", (3, 2), 0.1, project=False)
        backend = recovered_backend(rec)
        for a in range(3):
            w = observation_distribution(backend, rec.belief, a)
            for o in range(2):
                _, raw = psr_predict(psr, ((a, o),))
                assert w[o] == pytest.approx(raw, abs=1e-8)

    def test_strategy_equivalence_frequencies(self):
        # both sampling strategies must induce the same observation law
        _, _, rec = exact_recovered("sfr3", (3, 2), 0.1)
        backend = recovered_backend(rec)
        steps = 100_000
        rng_act = np.random.default_rng(10)
        actions = rng_act.integers(0, 3, size=steps)
        counts = np.zeros((2, 3, 2))
        for k, rng_seed in enumerate((11, 12)):
            rng = np.random.default_rng(rng_seed)
            x = backend.init_state.copy()
            for t in range(steps):
                a = int(actions[t])
                if k == 0:
                    x, o, _ = sample_step_belief(backend, x, a, rng)
                else:
                    x, _, o, _ = sample_step_partition(backend, x, a, rng)
                counts[k, a, o] += 1
        tv = 0.5 * np.abs(counts[0] / steps - counts[1] / steps).sum()
        assert tv < 0.01

    def test_partition_sampling_zero_mass(self):
        _, _, rec = exact_recovered("sfr3", (3, 2), 0.1)
        backend = recovered_backend(rec)
        rng = np.random.default_rng(0)
        with pytest.raises(ValueError, match="partition mass"):
            sample_step_partition(backend, np.zeros(3), 0, rng)

    def test_partition_sample_reports_block(self):
        _, _, rec = exact_recovered("sfr3", (3, 2), 0.1)
        backend = recovered_backend(rec)
        rng = np.random.default_rng(3)
        _, p, o, _ = sample_step_partition(backend, rec.belief, 0, rng)
        assert 0 <= p < len(rec.partition)
        assert o in (0, 1)


class TestDeriveRewards:
    def test_ml_ends_selects_directional_middle(self):
        model = get_domain("directional_hallway")
        spec = derive_state_rewards(model, "ml-ends")
        assert spec.mode == "state-based"
        np.testing.assert_array_equal(spec.state_rewards, [0.0, 1.0, 0.0])

    def test_max_entropy_selects_noisy_middle(self):
        model = get_domain("noisy_hallway")
        spec = derive_state_rewards(model, "max-entropy")
        np.testing.assert_array_equal(spec.state_rewards, [0.0, 1.0, 0.0])

    def test_tie_reported(self):
        flat = DiscretePomdp(
            actions=("a", "b"),
            observations=("x", "y"),
            trans=np.tile(np.eye(2), (2, 1, 1)),
            obs=np.full((2, 2, 2), 0.5),
            init=np.array([0.5, 0.5]),
        )
        with pytest.warns(UserWarning, match="tie"):
            spec = derive_state_rewards(flat, "max-entropy")
        np.testing.assert_array_equal(spec.state_rewards, [1.0, 0.0])

    def test_ml_ends_without_candidate(self):
        model = get_domain("noisy_hallway")
        with pytest.raises(ValueError, match="end"):
            derive_state_rewards(model, "ml-ends")

    def test_unknown_rule(self):
        with pytest.raises(ValueError, match="rule"):
            derive_state_rewards(get_domain("noisy_hallway"), "most-visited")

    def test_on_recovered_model_targets_true_middle(self):
        truth, _, rec = exact_recovered("directional_hallway", (2, 2), 0.01)
        spec = derive_state_rewards(rec, "ml-ends")
        perm, _, _ = align_to_ground_truth(rec, truth, 0.1)
        chosen = int(np.argmax(spec.state_rewards))
        assert perm[chosen] == 1


class TestRewardObservationSpec:
    def test_tiger_values_cycle(self):
        wrapped = with_reward_observations(tiger())
        spec = reward_observation_spec(wrapped)
        assert spec.mode == "observation-based"
        assert spec.observation_rewards.shape == (3, 6)
        np.testing.assert_array_equal(
            spec.observation_rewards[0], [-100.0, -1.0, 10.0, -100.0, -1.0, 10.0]
        )
        np.testing.assert_array_equal(
            spec.observation_rewards[0], spec.observation_rewards[2]
        )


class TestEpisodes:
    def test_filter_reset_on_impossible_observation(self):
        model = get_domain("sfr3")
        est = exact_hankel(model, 3, 2)
        psr = extract_psr(est, truncated_svd(est, 1e-6, 20))
        backend = psr_backend(psr)
        state, was_reset = filter_step(backend, psr.m0, 0, 1)
        assert was_reset
        np.testing.assert_array_equal(state, psr.m0)

    def test_filter_normal_step_matches_belief_update(self):
        model = tiger()
        backend = ground_truth_backend(model)
        state, was_reset = filter_step(backend, model.init, 0, 0)
        assert not was_reset
        # hand value: posterior after hearing left under listen
        np.testing.assert_allclose(state, [0.85, 0.15], atol=1e-12)

    def test_episode_deterministic(self):
        model = tiger()
        backend = ground_truth_backend(model)
        cfg = PlannerConfig(simulations_per_step=100)
        a = run_episode(model, backend, cfg, n_steps=40, seed=9)
        b = run_episode(model, backend, cfg, n_steps=40, seed=9)
        assert a.discounted_return == b.discounted_return
        assert a.total_reward == b.total_reward
        assert a.filter_resets == b.filter_resets

    def test_planner_beats_random_on_tiger(self):
        model = tiger()
        backend = ground_truth_backend(model)
        cfg = PlannerConfig(ucb_constant=10.0, simulations_per_step=1000)
        planned = [
            run_episode(model, backend, cfg, n_steps=150, seed=s).discounted_return
            for s in range(4)
        ]
        random = [
            run_episode(model, None, cfg, n_steps=150, seed=s).discounted_return
            for s in range(4)
        ]
        assert min(planned) > max(random)
        assert np.mean(planned) > 0.0
        assert np.mean(random) < 0.0

    def test_episode_on_exact_psr_never_resets(self):
        model = get_domain("sfr3")
        est = exact_hankel(model, 3, 2)
        psr = extract_psr(est, truncated_svd(est, 1e-6, 20))
        backend = psr_backend(psr)
        spec = RewardSpec(
            "observation-based",
            observation_rewards=np.array([[0.0, 1.0]] * 3),
        )
        out = run_episode(model, backend, PlannerConfig(simulations_per_step=60),
                          reward=spec, n_steps=60, seed=2)
        assert out.filter_resets == 0
        assert np.isfinite(out.discounted_return)
