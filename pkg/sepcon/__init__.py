"""
sepcon — separated control for a finite CPS model run beside the actual CPS.

Solve the belief-space dynamic program over (model state, actual state)
pairs, run model and actual side by side, learn the actual kernel online, and
check the results against brute-force oracles.
"""

__version__ = "0.1.0"

from sepcon.belief import JointBelief, filter_history, init_belief, update
from sepcon.config import load_system, validate_system
from sepcon.errors import (
    BudgetError,
    ConfigError,
    ImpossibleObservationError,
    SepconError,
    StrategyError,
    ValidationError,
)
from sepcon.learning import KernelEstimate, learn_online
from sepcon.oracle import exhaustive_optimal
from sepcon.repository import ArtifactRepository
from sepcon.simulator import cost_equality_check, monte_carlo_cost, run_episode
from sepcon.solver import Solution, evaluate_strategy, solve
from sepcon.system import System


def get_system(name: str) -> System:
    """
    Load a shipped fixture (or a JSON path) as a validated System.

    Raises:
        ConfigError: If the file is missing or not valid JSON.
        ValidationError: If the description violates an invariant.
    """
    return load_system(name)[0]


__all__ = [
    "__version__",
    "ArtifactRepository",
    "BudgetError",
    "ConfigError",
    "ImpossibleObservationError",
    "JointBelief",
    "KernelEstimate",
    "SepconError",
    "Solution",
    "StrategyError",
    "System",
    "ValidationError",
    "cost_equality_check",
    "evaluate_strategy",
    "exhaustive_optimal",
    "filter_history",
    "get_system",
    "init_belief",
    "learn_online",
    "load_system",
    "monte_carlo_cost",
    "run_episode",
    "solve",
    "update",
    "validate_system",
]
