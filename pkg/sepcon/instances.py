"""Random tiny systems for cross-checking the solver against the oracle."""

from typing import Iterator, Optional, Sequence

import numpy as np

from sepcon.system import CostModel, System


def _stochastic(rng: np.random.Generator, shape: Sequence[int], sparse: bool = False) -> np.ndarray:
    """Random rows on the last axis; sparse rows put some entries at exactly zero."""
    rows = rng.dirichlet(np.ones(shape[-1]), size=tuple(shape[:-1]))
    if sparse:
        mask = rng.random(rows.shape) < 0.3
        mask[..., 0] = False
        rows = np.where(mask, 0.0, rows)
        rows /= rows.sum(axis=-1, keepdims=True)
    return rows


def random_system(
    rng: np.random.Generator,
    num_states: int = 2,
    actions: Sequence[int] = (2,),
    observations: Sequence[int] = (2,),
    horizon: int = 2,
    beta: Optional[float] = None,
    coupling: str = "shared",
    model_equals_actual: bool = False,
    sparse: bool = False,
    name: str = "random",
) -> System:
    """
    Draw a valid system with Dirichlet kernels and uniform costs in [0, 1).

    Args:
        beta: Mismatch weight (default: uniform in [0, 2))
        model_equals_actual: Use the model kernel for the actual system too
        sparse: Zero out some kernel entries so that some observations are impossible
    """
    n = num_states
    joint_actions = int(np.prod(actions))
    model = _stochastic(rng, (horizon, n, joint_actions, n), sparse)
    actual = model if model_equals_actual else _stochastic(rng, (horizon, n, joint_actions, n), sparse)
    obs = tuple(_stochastic(rng, (horizon + 1, n, y), sparse) for y in observations)
    marginal = rng.dirichlet(np.ones(n))
    initial = np.diag(marginal) if model_equals_actual else np.outer(marginal, rng.dirichlet(np.ones(n)))
    costs = CostModel(
        stage_cost=rng.random((horizon, n, joint_actions)),
        terminal_cost=rng.random(n),
        mismatch_weight=float(rng.uniform(0.0, 2.0)) if beta is None else beta,
    )
    return System(
        num_states=n,
        actions_per_subsystem=tuple(actions),
        observations_per_subsystem=tuple(observations),
        horizon=horizon,
        model_kernel=model,
        actual_kernel=actual,
        observation_kernels=obs,
        initial_joint=initial,
        costs=costs,
        coupling=coupling,
        name=name,
    )


def tiny_suite(count: int, seed: int = 0, subsystems: int = 1) -> Iterator[System]:
    """|X|=2, T=2 instances, two actions and readings per subsystem; coupling and sparsity alternate."""
    rng = np.random.default_rng(seed)
    for i in range(count):
        yield random_system(
            rng,
            actions=(2,) * subsystems,
            observations=(2,) * subsystems,
            coupling="shared" if i % 2 == 0 else "independent",
            sparse=i % 3 == 2,
            name=f"random-{seed}-{i}",
        )
