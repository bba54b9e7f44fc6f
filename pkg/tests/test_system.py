"""Tests for the paired finite system: couplings, sampling and validation."""

import numpy as np
import pytest

from sepcon.errors import ValidationError
from sepcon.system import (
    JointSample,
    check_sample,
    couple_rows,
    inverse_transform,
    mismatch_penalty,
    observe,
    stage_cost,
    step_actual,
    step_model,
    terminal_cost,
)


class TestCoupling:
    def test_shared_coupling_has_the_given_marginals(self, rng):
        for _ in range(200):
            p = rng.dirichlet(np.ones(4))
            q = rng.dirichlet(np.ones(4))
            joint = couple_rows(p, q, "shared")
            np.testing.assert_allclose(joint.sum(axis=1), p, atol=1e-12)
            np.testing.assert_allclose(joint.sum(axis=0), q, atol=1e-12)
            assert np.all(joint >= 0.0)

    def test_identical_rows_couple_onto_the_diagonal(self):
        p = np.array([0.2, 0.5, 0.3])
        joint = couple_rows(p, p, "shared")
        np.testing.assert_allclose(joint, np.diag(p), atol=1e-15)

    def test_independent_coupling_is_the_product(self):
        p = np.array([0.25, 0.75])
        q = np.array([0.6, 0.4])
        np.testing.assert_allclose(couple_rows(p, q, "independent"), np.outer(p, q))

    def test_shared_coupling_matches_inverse_transform_sampling(self, rng):
        p = np.array([0.1, 0.6, 0.3])
        q = np.array([0.5, 0.2, 0.3])
        draws = rng.random(50_000)
        counts = np.zeros((3, 3))
        for u in draws:
            counts[inverse_transform(p, u), inverse_transform(q, u)] += 1
        np.testing.assert_allclose(counts / draws.size, couple_rows(p, q), atol=0.015)


class TestInverseTransform:
    @pytest.mark.parametrize(
        "draw,expected", [(0.0, 0), (0.1, 0), (0.2, 1), (0.69, 1), (0.71, 2), (0.999999, 2)]
    )
    def test_picks_the_cdf_interval(self, draw, expected):
        assert inverse_transform(np.array([0.2, 0.5, 0.3]), draw) == expected

    def test_zero_mass_entries_are_never_drawn(self, rng):
        row = np.array([0.5, 0.0, 0.5])
        assert all(inverse_transform(row, u) != 1 for u in rng.random(1000))


class TestDynamics:
    def test_shared_draw_moves_identical_systems_identically(self, noiseless, rng):
        for _ in range(500):
            x = int(rng.integers(3))
            a = int(rng.integers(2))
            x_next, draw = step_model(noiseless, 0, x, a, rng)
            assert step_actual(noiseless, 0, x, a, disturbance=draw) == x_next

    def test_independent_coupling_ignores_the_model_draw(self, noiseless):
        independent = noiseless.with_overrides(coupling="independent")
        with pytest.raises(ValueError):
            step_actual(independent, 0, 0, 0, disturbance=0.5)

    def test_stage_out_of_range(self, tiny, rng):
        with pytest.raises(IndexError):
            step_model(tiny, tiny.horizon, 0, 0, rng)

    def test_noiseless_sensor_reports_the_state(self, noiseless, rng):
        for x in range(3):
            assert observe(noiseless, 0, 0, x, rng=rng) == x
        with pytest.raises(ValueError):
            observe(noiseless, 0, 0, 0)

    def test_costs(self, noiseless, tiny):
        assert stage_cost(noiseless, 0, 2, 1) == 2.5
        assert terminal_cost(tiny, 1) == 2.0
        # default metric is the squared index distance, beta = 1
        assert mismatch_penalty(noiseless, 0, 2) == 4.0
        assert mismatch_penalty(noiseless, 1, 1) == 0.0


class TestSampling:
    DRAWS = 100_000

    @staticmethod
    def _within_three_standard_errors(counts, row, draws):
        freq = counts / draws
        se = np.sqrt(row * (1.0 - row) / draws)
        assert np.all(np.abs(freq - row) <= 3.0 * se + 1e-12), (freq, row)

    def test_model_transition_frequencies(self, tiny, rng):
        counts = np.zeros(2)
        for _ in range(self.DRAWS):
            x_next, _ = step_model(tiny, 0, 1, 0, rng)
            counts[x_next] += 1
        self._within_three_standard_errors(counts, tiny.model_kernel[0, 1, 0], self.DRAWS)

    def test_actual_transition_frequencies(self, tiny, rng):
        independent = tiny.with_overrides(coupling="independent")
        counts = np.zeros(2)
        for _ in range(self.DRAWS):
            counts[step_actual(independent, 0, 0, 1, rng=rng)] += 1
        self._within_three_standard_errors(counts, tiny.actual_kernel[0, 0, 1], self.DRAWS)

    def test_observation_frequencies(self, tiny, rng):
        counts = np.zeros(2)
        for _ in range(self.DRAWS):
            counts[observe(tiny, 0, 0, 0, rng=rng)] += 1
        self._within_three_standard_errors(counts, tiny.observation_kernels[0][0, 0], self.DRAWS)

    def test_shared_pair_frequencies_follow_the_coupled_law(self, tiny, rng):
        counts = np.zeros((2, 2))
        for _ in range(self.DRAWS):
            x_next, draw = step_model(tiny, 0, 0, 1, rng)
            counts[x_next, step_actual(tiny, 0, 1, 1, disturbance=draw)] += 1
        law = couple_rows(tiny.model_kernel[0, 0, 1], tiny.actual_kernel[0, 1, 1])
        np.testing.assert_allclose(counts / self.DRAWS, law, atol=0.01)


class TestSystem:
    def test_joint_actions_and_feasibility(self, team):
        assert team.num_actions == 4
        assert team.action_index((1, 0)) == 2
        assert team.action_tuple(3) == (1, 1)
        # subsystem 2 is restricted to action 0 at stage 0
        assert team.feasible_actions(0) == [0, 2]
        assert team.feasible_actions(1) == [0, 1, 2, 3]

    def test_joint_observation_kernel(self, team):
        table = team.joint_observation_kernel(0)
        assert table.shape == (2, 4)
        np.testing.assert_allclose(table.sum(axis=1), 1.0)
        assert table[0, team.observation_index((0, 0))] == pytest.approx(0.9 * 0.7)

    def test_identifies_state(self, noiseless, tiny):
        assert noiseless.identifies_state(0)
        assert not tiny.identifies_state(0)

    def test_cost_span(self, tiny):
        # stage ranges 1.5 + 1.5, mismatch 1.0 * 1 * 2 stages, terminal 2
        assert tiny.costs.span == pytest.approx(7.0)

    def test_with_overrides_keeps_the_rest(self, tiny):
        changed = tiny.with_overrides(beta=0.0, coupling="independent")
        assert changed.costs.mismatch_weight == 0.0
        assert changed.coupling == "independent"
        np.testing.assert_array_equal(changed.model_kernel, tiny.model_kernel)
        assert tiny.costs.mismatch_weight == 1.0

    def test_with_actual_kernel_is_revalidated(self, tiny):
        bad = np.full((2, 2, 2), 0.6)
        with pytest.raises(ValidationError):
            tiny.with_actual_kernel(bad)
        learned = tiny.with_actual_kernel(np.full((2, 2, 2), 0.5))
        assert learned.actual_kernel.shape == (tiny.horizon, 2, 2, 2)

    def test_arrays_are_read_only(self, tiny):
        with pytest.raises(ValueError):
            tiny.model_kernel[0, 0, 0, 0] = 1.0

    def test_check_sample(self, tiny):
        check_sample(tiny, JointSample(0, 1, (1,), (0,), (1,)))
        with pytest.raises(ValidationError):
            check_sample(tiny, JointSample(2, 0, (0,), (0,), (0,)))
        with pytest.raises(ValidationError):
            check_sample(tiny, JointSample(0, 0, (2,), (0,), (0,)))
