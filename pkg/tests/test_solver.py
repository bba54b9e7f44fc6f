"""Tests for the belief-space dynamic program and strategy evaluation."""

import json

import numpy as np
import pytest

from sepcon.belief import JointBelief, condition, init_belief
from sepcon.config import validate_system
from sepcon.constants import FIXTURES_DIR, MAX_GRID_NODES
from sepcon.errors import BudgetError, StrategyError
from sepcon.factory import create_terminal_value, grid_tolerance
from sepcon.instances import random_system, tiny_suite
from sepcon.oracle import exact_cost, exhaustive_optimal, random_history_strategy
from sepcon.solver import (
    HistoryStrategy,
    Solution,
    backup,
    check_concavity,
    evaluate_strategy,
    q_values,
    resolve_action,
    solve,
    tree_size,
)
from sepcon.values import mesh_size, sample_beliefs


def _symmetric_tiny():
    """tiny with both actions made identical, so every decision is a tie."""
    raw = json.loads((FIXTURES_DIR / "tiny.json").read_text(encoding="utf-8"))
    for key in ("model_kernel", "actual_kernel"):
        raw[key] = [[row[0], row[0]] for row in raw[key]]
    raw["costs"]["stage"] = [[c[0], c[0]] for c in raw["costs"]["stage"]]
    return validate_system(raw)


class TestSolve:
    def test_alpha_solution_shape(self, tiny):
        solution = solve(tiny)
        assert len(solution.values) == tiny.horizon + 1
        assert [v.stage for v in solution.values] == [0, 1, 2]
        assert len(solution.strategy.stages) == tiny.horizon
        assert solution.resolution is None

    def test_matches_the_oracle_on_fixtures(self, tiny, team, noiseless):
        for sys in (tiny, team, noiseless):
            dp = solve(sys).initial_value()
            assert abs(dp - exhaustive_optimal(sys).cost) <= 1e-9

    def test_matches_the_oracle_on_random_instances(self):
        for sys in tiny_suite(10, seed=3):
            dp = solve(sys).initial_value()
            assert abs(dp - exhaustive_optimal(sys).cost) <= 1e-9, sys.name

    def test_matches_the_oracle_on_two_subsystem_instances(self):
        for sys in tiny_suite(6, seed=5, subsystems=2):
            assert sys.num_subsystems == 2
            dp = solve(sys).initial_value()
            assert abs(dp - exhaustive_optimal(sys).cost) <= 1e-9, sys.name

    def test_value_is_nondecreasing_in_beta(self, tiny, team, noiseless):
        systems = [tiny, team, noiseless, *tiny_suite(6, seed=8)]
        for sys in systems:
            values = [solve(sys.with_overrides(beta=b)).initial_value() for b in (0.0, 1.0, 10.0)]
            assert values[0] <= values[1] + 1e-12, sys.name
            assert values[1] <= values[2] + 1e-12, sys.name

    def test_strategy_attains_the_value(self, tiny, team):
        for sys in (tiny, team):
            solution = solve(sys)
            value = evaluate_strategy(sys, solution.strategy)
            assert value.method == "exact"
            assert value.value == pytest.approx(solution.initial_value(), abs=1e-9)

    def test_value_lower_bounds_every_strategy(self, rng):
        for sys in tiny_suite(4, seed=11):
            v0 = solve(sys).initial_value()
            for _ in range(100):
                strategy = random_history_strategy(sys, rng)
                assert v0 <= evaluate_strategy(sys, strategy).value + 1e-9

    def test_evaluation_matches_outcome_enumeration(self, rng):
        sys = random_system(rng, num_states=2, horizon=2, sparse=True)
        for _ in range(10):
            strategy = random_history_strategy(sys, rng)
            assert evaluate_strategy(sys, strategy).value == pytest.approx(
                exact_cost(sys, strategy), abs=1e-12
            )

    def test_grid_approximates_alpha(self, tiny):
        exact = solve(tiny, "alpha").initial_value()
        grid = solve(tiny, "grid", resolution=8)
        assert grid.resolution == 8
        assert len(grid.values[0]) == mesh_size(4, 8)
        assert abs(grid.initial_value() - exact) <= grid_tolerance(tiny, 0, 8)

    def test_grid_refinement_does_not_hurt(self, tiny):
        exact = solve(tiny).initial_value()
        coarse = abs(solve(tiny, "grid", resolution=2).initial_value() - exact)
        fine = abs(solve(tiny, "grid", resolution=12).initial_value() - exact)
        assert fine <= coarse + 1e-12

    def test_grid_budget(self, noiseless):
        with pytest.raises(ValueError):
            solve(noiseless, "grid", resolution=MAX_GRID_NODES)

    def test_progress_callback(self, tiny):
        lines = []
        solve(tiny, progress=lines.append)
        assert len(lines) == tiny.horizon
        assert lines[0].startswith("stage 1")

    def test_backup_stage_mismatch(self, tiny):
        terminal = create_terminal_value(tiny)
        with pytest.raises(ValueError):
            backup(tiny, terminal, 0)

    def test_q_values_shape(self, tiny, rng):
        terminal = create_terminal_value(tiny)
        beliefs = sample_beliefs(rng, 4, 7)
        assert q_values(tiny, 1, beliefs, terminal, [0, 1]).shape == (7, 2)


class TestStrategies:
    def test_ties_go_to_the_lowest_action(self):
        sys = _symmetric_tiny()
        stages = solve(sys).strategy.stages
        beliefs = sample_beliefs(np.random.default_rng(0), 4, 20)
        for stage in stages:
            assert stage.act_many(beliefs).tolist() == [0] * 20

    def test_feasible_sets_are_respected(self, team, rng):
        strategy = solve(team).strategy
        for b in sample_beliefs(rng, 4, 50):
            u = strategy.act(0, JointBelief(b.reshape(2, 2), 0))
            assert u[1] == 0

    def test_separated_strategy_ignores_history(self, tiny):
        strategy = solve(tiny).strategy
        pi = condition(tiny, init_belief(tiny), 1)
        assert strategy.decide(0, pi, ((0,),)) == strategy.decide(0, pi, ((1,),))
        assert strategy.component(0, 0)(pi) == strategy.act(0, pi)[0]
        with pytest.raises(IndexError):
            strategy.component(0, 1)

    def test_stage_mismatch(self, tiny):
        strategy = solve(tiny).strategy
        with pytest.raises(ValueError):
            strategy.stages[1].act(init_belief(tiny))

    def test_history_strategy_errors(self, team):
        missing = HistoryStrategy({})
        pi = init_belief(team)
        with pytest.raises(StrategyError):
            resolve_action(team, missing, 0, pi, ((0, 0),))
        infeasible = HistoryStrategy({((0, 0),): team.action_index((0, 1))})
        with pytest.raises(StrategyError):
            resolve_action(team, infeasible, 0, pi, ((0, 0),))

    def test_evaluation_budget(self, tiny):
        strategy = solve(tiny).strategy
        assert tree_size(tiny) == 2 + 4 + 8
        with pytest.raises(BudgetError):
            evaluate_strategy(tiny, strategy, max_nodes=5)
        est = evaluate_strategy(tiny, strategy, max_nodes=5, monte_carlo=True, episodes=2000)
        assert est.method == "monte-carlo"
        assert est.stderr > 0.0
        exact = evaluate_strategy(tiny, strategy).value
        assert abs(est.value - exact) <= 5 * est.stderr


class TestConcavity:
    def test_alpha_values_are_concave(self, tiny, noiseless):
        for sys in (tiny, noiseless):
            for v in solve(sys).values:
                report = check_concavity(v, trials=10**4, rng=np.random.default_rng(1))
                assert report.ok, report

    def test_grid_violations_stay_within_tolerance(self, tiny):
        for v in solve(tiny, "grid", resolution=6).values[:-1]:
            report = check_concavity(v, trials=10**4, rng=np.random.default_rng(2))
            assert report.ok
            assert report.max_violation <= v.tolerance

    def test_zero_trials(self, tiny):
        report = check_concavity(create_terminal_value(tiny), trials=0)
        assert report.trials == 0 and report.ok


class TestSolutionTable:
    def test_alpha_table_rows(self, tiny):
        rows = solve(tiny).table(resolution=4)
        assert len(rows) == (tiny.horizon + 1) * mesh_size(4, 4)
        assert rows[-1]["action"] is None
        assert rows[0]["action"] in {(0,), (1,)}
        assert set(rows[0]) == {"stage", "node", "belief", "value", "action"}

    def test_dict_round_trip_keeps_the_strategy(self, tiny, rng):
        solution = solve(tiny)
        back = Solution.from_dict(tiny, json.loads(json.dumps(solution.to_dict())))
        assert back.initial_value() == pytest.approx(solution.initial_value(), abs=1e-12)
        for b in sample_beliefs(rng, 4, 20):
            pi = JointBelief(b.reshape(2, 2), 0)
            assert back.strategy.act(0, pi) == solution.strategy.act(0, pi)
