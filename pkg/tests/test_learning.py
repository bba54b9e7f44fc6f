"""Tests for online estimation of the actual kernel."""

import numpy as np
import pytest

from sepcon.constants import TV_THRESHOLD
from sepcon.learning import (
    KernelEstimate,
    expected_transitions,
    learn_online,
    observation_pair_likelihood,
    probe_distance,
)
from sepcon.oracle import random_history_strategy
from sepcon.simulator import run_episode
from sepcon.solver import solve


class TestKernelEstimate:
    def test_prior_is_uniform(self):
        for pseudo in (0.0, 1.0):
            kernel = KernelEstimate(3, 2, pseudo).kernel()
            np.testing.assert_allclose(kernel, np.full((3, 2, 3), 1 / 3))

    def test_smoothing(self):
        est = KernelEstimate(2, 1, pseudo_count=1.0)
        est.add(0, 0, 1)
        est.add(0, 0, 1)
        np.testing.assert_allclose(est.kernel()[0, 0], [1 / 4, 3 / 4])

    def test_rejects_bad_inputs(self):
        with pytest.raises(ValueError):
            KernelEstimate(2, 2, pseudo_count=-1.0)
        with pytest.raises(ValueError):
            KernelEstimate(2, 2, counts=np.zeros((2, 2, 3)))

    def test_copy_is_independent(self):
        est = KernelEstimate(2, 1)
        twin = est.copy()
        twin.add(1, 0, 0)
        assert est.counts.sum() == 0.0
        assert twin.to_dict()["counts"][1][0] == [1.0, 0.0]

    def test_deterministic_rows_are_exact_after_one_visit(self, deterministic_system):
        sys = deterministic_system()
        strategy = solve(sys).strategy
        est = KernelEstimate.for_system(sys, pseudo_count=0.0)
        traj = run_episode(sys, strategy, "learned", estimate=est, seed=0)
        kernel = est.kernel()
        for r in traj.stages:
            a = sys.action_index(r.u)
            np.testing.assert_array_equal(kernel[r.x_hat, a], sys.actual_kernel[0, r.x_hat, a])

    def test_soft_counts_add_one_transition_per_stage(self, tiny):
        sys = tiny.with_overrides(coupling="independent")
        strategy = solve(sys).strategy
        est = KernelEstimate.for_system(sys)
        for seed in range(5):
            run_episode(sys, strategy, "learned", estimate=est, seed=seed)
        assert est.counts.sum() == pytest.approx(5 * sys.horizon)
        assert est.episodes == 5
        assert est.hard_counts.sum() == 0.0

    def test_repeated_histories_share_one_entry(self, tiny):
        sys = tiny.with_overrides(coupling="independent")
        strategy = solve(sys).strategy
        est = KernelEstimate.for_system(sys)
        traj = run_episode(sys, strategy, "learned", estimate=est, seed=11, update=False)
        for _ in range(3):
            est.update(sys, traj)
        assert est.num_histories == 1
        assert est.soft_counts.sum() == pytest.approx(3 * sys.horizon)

    def test_soft_counts_are_refit_under_the_current_kernel(self, tiny):
        sys = tiny.with_overrides(coupling="independent")
        strategy = solve(sys).strategy
        est = KernelEstimate.for_system(sys)
        for seed in range(40):
            run_episode(sys, strategy, "learned", estimate=est, seed=seed)
        est.refit(sys, max_steps=2000, tolerance=1e-12)
        np.testing.assert_allclose(est.expected_counts(sys), est.soft_counts, atol=1e-8)

    def test_early_episodes_are_revised(self, tiny):
        sys = tiny.with_overrides(coupling="independent")
        strategy = solve(sys).strategy
        est = KernelEstimate.for_system(sys)
        frozen = np.zeros_like(est.counts)
        for seed in range(30):
            kernel = est.kernel()
            traj = run_episode(sys, strategy, "learned", estimate=est, seed=seed, update=False)
            actions = [sys.action_index(u) for u in traj.actions]
            model = [sys.observation_index(y) for y in traj.observations + [traj.y_final]]
            actual = [sys.observation_index(y) for y in traj.actual_observations]
            xi = expected_transitions(sys, kernel, actions, model, actual)
            for t, a in enumerate(actions):
                frozen[:, a, :] += xi[t]
            est.update(sys, traj)
        est.refit(sys, max_steps=2000, tolerance=1e-12)
        assert frozen.sum() == pytest.approx(est.soft_counts.sum())
        assert not np.allclose(frozen, est.soft_counts, atol=1e-3)

    def test_copy_keeps_histories(self, tiny):
        sys = tiny.with_overrides(coupling="independent")
        strategy = solve(sys).strategy
        est = KernelEstimate.for_system(sys)
        run_episode(sys, strategy, "learned", estimate=est, seed=2)
        twin = est.copy()
        run_episode(sys, strategy, "learned", estimate=twin, seed=3)
        assert est.episodes == 1
        assert twin.episodes == 2
        np.testing.assert_allclose(twin.counts.sum(), 2 * sys.horizon)
        assert est.to_dict()["histories"] == 1

    @pytest.mark.slow
    def test_noisy_sensor_estimate_is_consistent(self, tiny):
        strategy = solve(tiny).strategy
        result = learn_online(tiny, strategy, 20000, seed=0)
        est = result.estimate
        est.refit(tiny, max_steps=500)
        truth = tiny.actual_kernel[0]
        visited = est.counts.sum(axis=2) > 2000
        assert visited.any()
        error = np.abs(est.kernel() - truth).max(axis=2)
        assert float(error[visited].max()) <= 0.05


class TestExpectedTransitions:
    def test_identity_sensors_give_hard_counts(self, learning):
        sys = learning.with_overrides(coupling="independent")
        kernel = np.full((3, 2, 3), 1 / 3)
        xi = expected_transitions(sys, kernel, [0, 1, 1, 0], [0, 0, 0, 0, 0], [2, 0, 1, 1, 2])
        assert xi.shape == (4, 3, 3)
        assert xi[0, 2, 0] == pytest.approx(1.0)
        assert xi[3, 1, 2] == pytest.approx(1.0)

    def test_each_stage_sums_to_one(self, tiny):
        kernel = tiny.actual_kernel[0]
        xi = expected_transitions(tiny, kernel, [0, 1], [0, 1, 1], [0, 1, 1])
        np.testing.assert_allclose(xi.sum(axis=(1, 2)), 1.0)

    def test_impossible_history(self, deterministic_system):
        sys = deterministic_system(actual_flips=False)
        # the estimated kernel keeps the state, the history says it moved
        assert expected_transitions(sys, sys.actual_kernel[0], [0], [0, 0], [0, 1]) is None

    def test_model_observations_inform_the_actual_path(self, tiny):
        # shared sensor noise ties ŷ to y, so the same ŷ reads differently
        kernel = tiny.actual_kernel[0]
        agree = expected_transitions(tiny, kernel, [0], [0, 0], [0, 0])
        differ = expected_transitions(tiny, kernel, [0], [1, 1], [0, 0])
        assert not np.allclose(agree, differ)

    def test_pair_likelihood_is_a_distribution_over_readings(self, tiny):
        for coupling in ("shared", "independent"):
            sys = tiny.with_overrides(coupling=coupling)
            total = sum(
                observation_pair_likelihood(sys, 0, y, yh) for y in range(2) for yh in range(2)
            )
            np.testing.assert_allclose(total, 1.0)

    def test_shared_noise_rules_out_crossed_readings(self, deterministic_system):
        sys = deterministic_system()
        # identity sensors: y = x and ŷ = x̂, whatever the noise
        like = observation_pair_likelihood(sys, 0, 0, 1).reshape(2, 2)
        np.testing.assert_array_equal(like, [[0.0, 1.0], [0.0, 0.0]])


class TestLearnOnline:
    def test_probe_distance_of_the_true_kernel_is_zero(self, learning):
        traj = run_episode(learning, solve(learning).strategy, seed=0)
        assert probe_distance(learning, learning, traj.actions, traj.observations) == 0.0

    def test_curve_shape_and_determinism(self, learning):
        strategy = solve(learning).strategy
        first = learn_online(learning, strategy, 20, seed=4)
        second = learn_online(learning, strategy, 20, seed=4)
        assert len(first.tv_curve) == 21
        assert len(first.kernels) == 21
        assert first.tv_curve == second.tv_curve
        assert first.estimate.episodes == 20

    def test_distance_shrinks_with_data(self, learning):
        strategy = solve(learning).strategy
        result = learn_online(learning, strategy, 400, seed=0)
        assert result.tv_curve[-1] < result.tv_curve[0]

    def test_replanning(self, learning):
        strategy = solve(learning).strategy
        result = learn_online(learning, strategy, 10, seed=0, replan_every=5)
        assert result.replans == 2

    def test_rejects_bad_arguments(self, learning):
        strategy = solve(learning).strategy
        with pytest.raises(ValueError):
            learn_online(learning, strategy, -1)
        with pytest.raises(ValueError):
            learn_online(learning, strategy, 5, replan_every=0)

    @pytest.mark.slow
    def test_learned_filter_converges(self, learning):
        strategy = solve(learning).strategy
        finals = [learn_online(learning, strategy, 3000, seed=s).tv_curve[-1] for s in range(20)]
        assert float(np.mean(finals)) < TV_THRESHOLD

    @pytest.mark.slow
    def test_uniform_kernel_rows_are_recovered(self, learning, rng):
        uniform = learning.with_actual_kernel(np.full((3, 2, 3), 1 / 3))
        # a random history table visits every (x̂, u) row often
        strategy = random_history_strategy(uniform, rng)
        result = learn_online(uniform, strategy, 10_000, seed=0)
        error = np.abs(result.estimate.kernel() - 1 / 3).max()
        assert float(error) <= 0.05
