"""
Belief-space dynamic program over the joint information state.

Backups include the expected mismatch penalty β·d(X', X̂'); strategies are
extracted by one-step lookahead on the next stage's value function, so each
subsystem's law reads nothing but the current belief.
"""

import math
from dataclasses import dataclass
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from sepcon.belief import (
    JointBelief,
    condition,
    coupled_kernel,
    init_belief,
    observation_probabilities,
    pair_likelihood,
)
from sepcon.constants import (
    CSV_ALPHA_RESOLUTION,
    DEFAULT_REPRESENTATION,
    MAX_TREE_NODES,
    TIE_TOL,
)
from sepcon.errors import BudgetError, StrategyError
from sepcon.factory import create_terminal_value, grid_tolerance, terminal_vector
from sepcon.system import System
from sepcon.values import (
    AlphaValueFunction,
    GridValueFunction,
    ValueFunction,
    prune_dominated,
    sample_beliefs,
    simplex_mesh,
    value_function_from_dict,
)

History = Tuple[Tuple[int, ...], ...]
Progress = Optional[Callable[[str], None]]


def _immediate(sys: System, t: int, a: int) -> Tuple[np.ndarray, np.ndarray]:
    """(stage cost over pairs, expected mismatch penalty over pairs) for joint action a."""
    n = sys.num_states
    cost = np.repeat(sys.costs.stage_cost[t, :, a], n)
    metric = sys.costs.state_metric.reshape(-1)
    penalty = sys.costs.mismatch_weight * (coupled_kernel(sys, t, a) @ metric)
    return cost, penalty


def q_values(
    sys: System, t: int, beliefs: np.ndarray, v_next: ValueFunction, actions: Sequence[int]
) -> np.ndarray:
    """
    Expected cost-to-go of each action at each belief.

    Args:
        sys: System
        t: Stage (0 <= t < T)
        beliefs: Flattened beliefs at stage t, shape (M, |X|²)
        v_next: Value function of stage t+1
        actions: Joint action indices to score

    Returns:
        (M, len(actions)) array; observations of zero probability are skipped.
    """
    b = np.atleast_2d(beliefs)
    like = pair_likelihood(sys, t + 1)
    out = np.empty((b.shape[0], len(actions)))
    for j, a in enumerate(actions):
        cost, penalty = _immediate(sys, t, a)
        pred = b @ coupled_kernel(sys, t, a)
        total = b @ (cost + penalty)
        joint = pred[:, :, None] * like[None, :, :]
        p_y = joint.sum(axis=1)
        for y in range(like.shape[1]):
            live = p_y[:, y] > 0.0
            if not np.any(live):
                continue
            post = joint[live, :, y] / p_y[live, y][:, None]
            total[live] += p_y[live, y] * v_next.values(post)
        out[:, j] = total
    return out


def _argmin(q: np.ndarray) -> np.ndarray:
    """Column of the first entry within TIE_TOL of each row's minimum."""
    best = q.min(axis=1, keepdims=True)
    return np.argmax(q <= best + TIE_TOL, axis=1)


class StageStrategy:
    """Greedy joint law g_t at one stage: argmin of the one-step lookahead on V_{t+1}."""

    def __init__(self, sys: System, stage: int, v_next: ValueFunction):
        self.sys = sys
        self.stage = stage
        self.v_next = v_next
        self.actions = sys.feasible_actions(stage)

    def act(self, belief: JointBelief) -> Tuple[int, ...]:
        """Joint action for a belief; ties go to the lowest joint-action index."""
        if belief.stage != self.stage:
            raise ValueError(f"belief is for stage {belief.stage}, strategy for {self.stage}")
        q = q_values(self.sys, self.stage, belief.flat[None, :], self.v_next, self.actions)
        return self.sys.action_tuple(self.actions[int(_argmin(q)[0])])

    def act_many(self, beliefs: np.ndarray) -> np.ndarray:
        """Joint action indices for many flattened beliefs (M, |X|²) at this stage."""
        q = q_values(self.sys, self.stage, beliefs, self.v_next, self.actions)
        return np.asarray(self.actions)[_argmin(q)]


class SeparatedStrategy:
    """
    g = (g_t^k): every subsystem maps the joint belief to its own action.

    There is no history argument anywhere on this class.
    """

    def __init__(self, sys: System, stages: Sequence[StageStrategy]):
        if len(stages) != sys.horizon:
            raise ValueError(f"expected {sys.horizon} stage laws, got {len(stages)}")
        self.sys = sys
        self.stages = list(stages)

    def act(self, t: int, belief: JointBelief) -> Tuple[int, ...]:
        return self.stages[t].act(belief)

    def component(self, t: int, k: int) -> Callable[[JointBelief], int]:
        """g_t^k as a standalone map from belief to subsystem k's action."""
        if not 0 <= k < self.sys.num_subsystems:
            raise IndexError(f"subsystem {k} out of range")
        stage = self.stages[t]
        return lambda belief: stage.act(belief)[k]

    def decide(self, t: int, belief: JointBelief, history: History) -> Tuple[int, ...]:
        return self.act(t, belief)


class HistoryStrategy:
    """Deterministic centralized strategy keyed on the joint observation history y_0..y_t."""

    def __init__(self, table: Dict[History, int], name: str = "history"):
        self.table = dict(table)
        self.name = name

    def decide(self, t: int, belief: JointBelief, history: History) -> int:
        if history not in self.table:
            raise StrategyError(f"no action for history {history} at stage {t}")
        return self.table[history]


def resolve_action(sys: System, strategy: Any, t: int, belief: JointBelief, history: History) -> int:
    """
    Joint action index chosen by any strategy form, checked against the feasible set.

    Raises:
        StrategyError: If the strategy yields nothing or an infeasible action.
    """
    u = strategy.decide(t, belief, history)
    if u is None:
        raise StrategyError(f"strategy produced no action at stage {t}")
    a = sys.action_index(u)
    if a not in sys.feasible_actions(t):
        raise StrategyError(f"action {sys.action_tuple(a)} infeasible at stage {t}")
    return a


def _backup_alpha(sys: System, v_next: AlphaValueFunction, t: int) -> AlphaValueFunction:
    like = pair_likelihood(sys, t + 1)
    n2 = sys.num_states**2
    blocks, labels = [], []
    for a in sys.feasible_actions(t):
        kernel = coupled_kernel(sys, t, a)
        cost, penalty = _immediate(sys, t, a)
        current = (cost + penalty)[None, :]
        for y in range(like.shape[1]):
            column = like[:, y]
            if not np.any(column):
                continue
            projected = v_next.alphas @ (kernel * column[None, :]).T
            projected, _ = prune_dominated(projected, np.zeros(len(projected), dtype=int))
            current = (current[:, None, :] + projected[None, :, :]).reshape(-1, n2)
            current, _ = prune_dominated(current, np.zeros(len(current), dtype=int))
        blocks.append(current)
        labels.append(np.full(len(current), a, dtype=int))
    alphas, actions = prune_dominated(np.vstack(blocks), np.concatenate(labels))
    return AlphaValueFunction(t, alphas, actions)


def _backup_grid(sys: System, v_next: GridValueFunction, t: int) -> GridValueFunction:
    actions = sys.feasible_actions(t)
    q = q_values(sys, t, v_next.beliefs, v_next, actions)
    values = q.min(axis=1)
    tol = grid_tolerance(sys, t, v_next.resolution)
    return GridValueFunction(t, v_next.resolution, v_next.nodes, values, tol)


def backup(
    sys: System, v_next: ValueFunction, t: int
) -> Tuple[ValueFunction, StageStrategy]:
    """
    One Bellman step V_{t+1} -> V_t with the greedy stage law.

    Raises:
        ValueError: If v_next is not for stage t+1 or has an unknown representation.
    """
    if v_next.stage != t + 1:
        raise ValueError(f"backup at stage {t} needs V_{t + 1}, got V_{v_next.stage}")
    if isinstance(v_next, AlphaValueFunction):
        v_t: ValueFunction = _backup_alpha(sys, v_next, t)
    elif isinstance(v_next, GridValueFunction):
        v_t = _backup_grid(sys, v_next, t)
    else:
        raise ValueError(f"Unsupported value function representation: {type(v_next).__name__}")
    return v_t, StageStrategy(sys, t, v_next)


@dataclass
class Solution:
    """Value functions V_0..V_T and the separated strategy extracted from them."""

    sys: System
    values: List[ValueFunction]
    strategy: SeparatedStrategy
    kind: str

    @property
    def resolution(self) -> Optional[int]:
        head = self.values[0]
        return head.resolution if isinstance(head, GridValueFunction) else None

    def value(self, belief: JointBelief) -> float:
        return self.values[belief.stage].value(belief)

    def initial_value(self) -> float:
        """E_{y_0}[V_0(Π_0)] where Π_0 conditions the prior on the first observation."""
        prior = init_belief(self.sys)
        p_y = observation_probabilities(self.sys, prior)
        terms = [
            p * self.values[0].value(condition(self.sys, prior, y))
            for y, p in enumerate(p_y)
            if p > 0.0
        ]
        return math.fsum(terms)

    def table(self, resolution: int = CSV_ALPHA_RESOLUTION) -> List[Dict[str, Any]]:
        """
        Rows of (stage, node, belief, value, greedy action).

        Grid solutions list their own mesh nodes; alpha solutions are tabulated
        on a mesh of the given resolution.
        """
        rows = []
        for t, v in enumerate(self.values):
            if isinstance(v, GridValueFunction):
                points = v.beliefs
            else:
                points = simplex_mesh(self.sys.num_states**2, resolution) / float(resolution)
            values = v.values(points)
            actions = self.strategy.stages[t].act_many(points) if t < self.sys.horizon else None
            for i, point in enumerate(points):
                rows.append(
                    {
                        "stage": t,
                        "node": i,
                        "belief": point,
                        "value": float(values[i]),
                        "action": None if actions is None else self.sys.action_tuple(actions[i]),
                    }
                )
        return rows

    def to_dict(self) -> Dict[str, Any]:
        return {
            "kind": self.kind,
            "horizon": self.sys.horizon,
            "initial_value": self.initial_value(),
            "values": [v.to_dict() for v in self.values],
        }

    @classmethod
    def from_dict(cls, sys: System, data: Dict[str, Any]) -> "Solution":
        """Rebuild a solution (and its strategy) from `to_dict` output for the same system."""
        values = [value_function_from_dict(v) for v in data["values"]]
        if len(values) != sys.horizon + 1:
            raise ValueError(f"expected {sys.horizon + 1} value functions, got {len(values)}")
        stages = [StageStrategy(sys, t, values[t + 1]) for t in range(sys.horizon)]
        return cls(sys, values, SeparatedStrategy(sys, stages), data["kind"])


def solve(
    sys: System,
    kind: str = DEFAULT_REPRESENTATION,
    resolution: Optional[int] = None,
    progress: Progress = None,
) -> Solution:
    """
    Backward recursion from V_T down to V_0.

    Args:
        sys: Validated system
        kind: "alpha" (exact) | "grid" (simplex mesh)
        resolution: Mesh resolution for grids
        progress: Optional callback receiving one line per stage

    Returns:
        Solution with values indexed by stage and a separated strategy
    """
    v = create_terminal_value(sys, kind, resolution)
    values: List[ValueFunction] = [v]
    stages: List[StageStrategy] = []
    for t in reversed(range(sys.horizon)):
        v, stage = backup(sys, v, t)
        values.append(v)
        stages.append(stage)
        if progress:
            progress(f"stage {t}: {len(v)} {'vectors' if kind == 'alpha' else 'nodes'}")
    values.reverse()
    stages.reverse()
    return Solution(sys, values, SeparatedStrategy(sys, stages), kind)


@dataclass(frozen=True)
class StrategyEvaluation:
    value: float
    stderr: float
    method: str


def tree_size(sys: System) -> int:
    """Number of belief nodes in the full observation-history tree."""
    y = sys.num_observations
    return sum(y ** (t + 1) for t in range(sys.horizon + 1))


def _cost_to_go(sys: System, strategy: Any, pi: JointBelief, history: History) -> float:
    t = pi.stage
    if t == sys.horizon:
        return float(pi.flat @ terminal_vector(sys))
    a = resolve_action(sys, strategy, t, pi, history)
    cost, penalty = _immediate(sys, t, a)
    pred = pi.flat @ coupled_kernel(sys, t, a)
    like = pair_likelihood(sys, t + 1)
    terms = [float(pi.flat @ (cost + penalty))]
    for y, p in enumerate(pred @ like):
        if p <= 0.0:
            continue
        post = JointBelief((pred * like[:, y] / p).reshape(pi.mass.shape), t + 1)
        terms.append(p * _cost_to_go(sys, strategy, post, history + (sys.observation_tuple(y),)))
    return math.fsum(terms)


def evaluate_strategy(
    sys: System,
    strategy: Any,
    max_nodes: int = MAX_TREE_NODES,
    monte_carlo: bool = False,
    episodes: int = 10**4,
    seed: int = 0,
) -> StrategyEvaluation:
    """
    Expected total model cost J_0(g) (stage + β·mismatch + terminal).

    Exact by forward enumeration over observation histories when the tree has
    at most max_nodes nodes; otherwise Monte Carlo when allowed.

    Raises:
        BudgetError: If the tree is too large and monte_carlo is False.
    """
    size = tree_size(sys)
    if size > max_nodes:
        if not monte_carlo:
            raise BudgetError(f"history tree has {size} nodes (limit {max_nodes})")
        from sepcon.simulator import monte_carlo_cost

        est = monte_carlo_cost(sys, strategy, episodes=episodes, base_seed=seed)
        return StrategyEvaluation(est.model_cost, est.model_stderr, "monte-carlo")
    prior = init_belief(sys)
    terms = []
    for y, p in enumerate(observation_probabilities(sys, prior)):
        if p <= 0.0:
            continue
        pi = condition(sys, prior, y)
        terms.append(p * _cost_to_go(sys, strategy, pi, (sys.observation_tuple(y),)))
    return StrategyEvaluation(math.fsum(terms), 0.0, "exact")


@dataclass(frozen=True)
class ConcavityReport:
    trials: int
    violations: int
    max_violation: float
    tolerance: float

    @property
    def ok(self) -> bool:
        return self.violations == 0


def check_concavity(
    v: ValueFunction,
    trials: int = 1000,
    rng: Optional[np.random.Generator] = None,
    tolerance: Optional[float] = None,
) -> ConcavityReport:
    """
    Sample belief pairs and mixing weights; count chords lying above V beyond tolerance.

    The default tolerance is the representation's own: float slack for alpha
    vectors, the interpolation error bound for grids.
    """
    rng = rng or np.random.default_rng(0)
    dim = v.alphas.shape[1] if isinstance(v, AlphaValueFunction) else v.dim
    tol = v.tolerance if tolerance is None else tolerance
    if trials <= 0:
        return ConcavityReport(0, 0, 0.0, tol)
    p1 = sample_beliefs(rng, dim, trials)
    p2 = sample_beliefs(rng, dim, trials)
    lam = rng.random(trials)[:, None]
    mix = lam * p1 + (1.0 - lam) * p2
    chord = lam[:, 0] * v.values(p1) + (1.0 - lam[:, 0]) * v.values(p2)
    gap = chord - v.values(mix)
    return ConcavityReport(
        trials, int(np.sum(gap > tol)), float(max(gap.max(), 0.0)), tol
    )
