"""
Brute-force ground truth for tiny instances.

Nothing here goes through the recursive filter or the value-function code:
posteriors come from explicit path enumeration, expected costs from walking
every latent outcome, and optima from searching deterministic history-based
strategies directly. Strategies under test are only queried for actions.
"""

import itertools
import math
from dataclasses import dataclass
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from sepcon.belief import JointBelief, coupled_kernel, pair_likelihood
from sepcon.constants import MAX_STRATEGY_COUNT, MAX_TREE_NODES, TIE_TOL
from sepcon.errors import BudgetError, ImpossibleObservationError
from sepcon.solver import History, HistoryStrategy, resolve_action
from sepcon.system import ActionLike, System


@dataclass(frozen=True)
class EnumerationBudget:
    max_tree_nodes: int = MAX_TREE_NODES
    max_strategy_count: int = MAX_STRATEGY_COUNT

    def __post_init__(self):
        if self.max_tree_nodes < 1 or self.max_strategy_count < 1:
            raise ValueError("enumeration budgets must be positive")


class _Counter:
    def __init__(self, limit: int, what: str):
        self.limit = limit
        self.what = what
        self.count = 0

    def tick(self, amount: int = 1) -> None:
        self.count += amount
        if self.count > self.limit:
            raise BudgetError(f"{self.what} exceeds budget of {self.limit}")


def brute_force_posterior(
    sys: System,
    actions: Sequence[ActionLike],
    observations: Sequence[ActionLike],
    budget: EnumerationBudget = EnumerationBudget(),
) -> JointBelief:
    """
    P(X_t, X̂_t | y_0..y_t, u_0..u_{t-1}) by summing over every pair path.

    Raises:
        BudgetError: If the number of paths exceeds the tree budget.
        ImpossibleObservationError: If the history has probability zero.
    """
    n2 = sys.num_states**2
    t = len(observations) - 1
    if len(actions) != t:
        raise ValueError(f"need {t} actions for {t + 1} observations, got {len(actions)}")
    _Counter(budget.max_tree_nodes, "path count").tick(n2 ** (t + 1))
    prior = sys.initial_joint.reshape(-1)
    ys = [sys.observation_index(y) for y in observations]
    kernels = [coupled_kernel(sys, s, u) for s, u in enumerate(actions)]
    likes = [pair_likelihood(sys, s)[:, y] for s, y in enumerate(ys)]
    mass = np.zeros(n2)
    for path in itertools.product(range(n2), repeat=t + 1):
        w = prior[path[0]] * likes[0][path[0]]
        for s in range(t):
            if w == 0.0:
                break
            w *= kernels[s][path[s], path[s + 1]] * likes[s + 1][path[s + 1]]
        mass[path[-1]] += w
    total = math.fsum(mass)
    if total <= 0.0:
        raise ImpossibleObservationError(t, tuple(actions), tuple(observations))
    return JointBelief((mass / total).reshape(sys.num_states, sys.num_states), t)


def exact_cost(
    sys: System, strategy: Any, budget: EnumerationBudget = EnumerationBudget()
) -> float:
    """
    Expected total model cost by walking every latent outcome.

    Enumerates the initial pair, every observation, and every coupled successor
    pair, summing cost × probability over the leaves with compensated summation.
    Belief-based strategies are shown the path-enumerated posterior of each
    history; history tables are looked up directly.
    """
    n = sys.num_states
    metric = sys.costs.state_metric.reshape(-1)
    beta = sys.costs.mismatch_weight
    nodes = _Counter(budget.max_tree_nodes, "outcome tree")
    needs_belief = not isinstance(strategy, HistoryStrategy)
    decisions: Dict[History, int] = {}
    terms: List[float] = []

    def decide(t: int, history: History) -> int:
        if history not in decisions:
            taken = [decisions[history[: s + 1]] for s in range(t)]
            pi = brute_force_posterior(sys, taken, history, budget) if needs_belief else None
            decisions[history] = resolve_action(sys, strategy, t, pi, history)
        return decisions[history]

    def walk(t: int, s: int, weight: float, history: History) -> None:
        nodes.tick()
        x = s // n
        if t == sys.horizon:
            terms.append(weight * sys.costs.terminal_cost[x])
            return
        like = sys.joint_observation_kernel(t)[x]
        for y in np.flatnonzero(like):
            h = history + (sys.observation_tuple(y),)
            a = decide(t, h)
            w = weight * like[y]
            terms.append(w * sys.costs.stage_cost[t, x, a])
            row = coupled_kernel(sys, t, a)[s]
            for s2 in np.flatnonzero(row):
                terms.append(w * row[s2] * beta * metric[s2])
                walk(t + 1, int(s2), w * row[s2], h)

    prior = sys.initial_joint.reshape(-1)
    for s in np.flatnonzero(prior):
        walk(0, int(s), prior[s], ())
    return math.fsum(terms)


def reachable_histories(
    sys: System, budget: EnumerationBudget = EnumerationBudget()
) -> List[List[History]]:
    """
    Observation histories y_0..y_t (t < T) of positive probability under some action choice.

    Returns one sorted list per decision stage.
    """
    nodes = _Counter(budget.max_tree_nodes, "history tree")
    stages: List[set] = [set() for _ in range(sys.horizon)]
    prior = sys.initial_joint.reshape(-1)

    def visit(t: int, history: History, weight: np.ndarray) -> None:
        nodes.tick()
        stages[t].add(history)
        if t + 1 == sys.horizon:
            return
        like = pair_likelihood(sys, t + 1)
        # summed over actions: the support is the union of every action's support
        pred = sum(weight @ coupled_kernel(sys, t, a) for a in sys.feasible_actions(t))
        for y in range(like.shape[1]):
            nxt = pred * like[:, y]
            if nxt.sum() > 0.0:
                visit(t + 1, history + (sys.observation_tuple(y),), nxt)

    like0 = pair_likelihood(sys, 0)
    for y in range(like0.shape[1]):
        w = prior * like0[:, y]
        if w.sum() > 0.0:
            visit(0, (sys.observation_tuple(y),), w)
    return [sorted(s) for s in stages]


def strategy_count(sys: System, histories: List[List[History]]) -> int:
    return math.prod(len(sys.feasible_actions(t)) ** len(hs) for t, hs in enumerate(histories))


def random_history_strategy(
    sys: System,
    rng: np.random.Generator,
    histories: Optional[List[List[History]]] = None,
) -> HistoryStrategy:
    """Uniformly random deterministic history-based strategy."""
    histories = histories if histories is not None else reachable_histories(sys)
    table = {}
    for t, hs in enumerate(histories):
        feasible = sys.feasible_actions(t)
        for h in hs:
            table[h] = feasible[int(rng.integers(len(feasible)))]
    return HistoryStrategy(table, name="random")


@dataclass(frozen=True)
class OracleResult:
    cost: float
    strategy: HistoryStrategy
    method: str
    strategies: int


def _tree_optimum(sys: System, budget: EnumerationBudget) -> Tuple[float, Dict[History, int]]:
    """Branch-wise minimum over the history tree with unnormalized path weights."""
    nodes = _Counter(budget.max_tree_nodes, "history tree")
    metric = sys.costs.state_metric.reshape(-1)
    terminal = np.repeat(sys.costs.terminal_cost, sys.num_states)
    table: Dict[History, int] = {}

    def best(t: int, history: History, weight: np.ndarray) -> float:
        nodes.tick()
        like = pair_likelihood(sys, t + 1)
        choice, choice_cost = None, math.inf
        for a in sys.feasible_actions(t):
            kernel = coupled_kernel(sys, t, a)
            stage = np.repeat(sys.costs.stage_cost[t, :, a], sys.num_states)
            pred = weight @ kernel
            terms = [float(weight @ stage), sys.costs.mismatch_weight * float(pred @ metric)]
            if t + 1 == sys.horizon:
                terms.append(float(pred @ terminal))
            else:
                for y in range(like.shape[1]):
                    nxt = pred * like[:, y]
                    if nxt.sum() > 0.0:
                        terms.append(best(t + 1, history + (sys.observation_tuple(y),), nxt))
            total = math.fsum(terms)
            if total < choice_cost - TIE_TOL:
                choice, choice_cost = a, total
        table[history] = choice
        return choice_cost

    prior = sys.initial_joint.reshape(-1)
    like0 = pair_likelihood(sys, 0)
    terms = []
    for y in range(like0.shape[1]):
        w = prior * like0[:, y]
        if w.sum() > 0.0:
            terms.append(best(0, (sys.observation_tuple(y),), w))
    return math.fsum(terms), table


def exhaustive_optimal(
    sys: System,
    method: str = "auto",
    budget: EnumerationBudget = EnumerationBudget(),
    progress: Optional[Callable[[str], None]] = None,
) -> OracleResult:
    """
    Minimum expected cost over every deterministic history-based strategy.

    Args:
        method: "enumerate" tries every strategy literally; "tree" minimizes
            branch by branch over the same strategy space; "auto" enumerates
            when the count fits the budget.

    Raises:
        BudgetError: If the chosen method exceeds its budget.
        ValueError: On an unknown method.
    """
    if method not in ("auto", "enumerate", "tree"):
        raise ValueError(f"Unknown method: {method!r}")
    histories = reachable_histories(sys, budget)
    count = strategy_count(sys, histories)
    if method == "enumerate" and count > budget.max_strategy_count:
        raise BudgetError(f"{count} strategies exceed budget of {budget.max_strategy_count}")
    if method == "tree" or count > budget.max_strategy_count:
        cost, table = _tree_optimum(sys, budget)
        return OracleResult(cost, HistoryStrategy(table, "oracle"), "tree", count)

    keys = [h for hs in histories for h in hs]
    domains = [sys.feasible_actions(len(h) - 1) for h in keys]
    best_cost, best_table = math.inf, None
    step = max(1, count // 10)
    for i, combo in enumerate(itertools.product(*domains)):
        table = dict(zip(keys, combo))
        cost = exact_cost(sys, HistoryStrategy(table), budget)
        if cost < best_cost:
            best_cost, best_table = cost, table
        if progress and (i + 1) % step == 0:
            progress(f"{i + 1}/{count} strategies")
    return OracleResult(best_cost, HistoryStrategy(best_table, "oracle"), "enumerate", count)
