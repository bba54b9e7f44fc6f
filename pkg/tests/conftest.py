"""Shared fixtures: shipped system files and small hand-built systems."""

import numpy as np
import pytest

from sepcon.config import load_system
from sepcon.system import CostModel, System


@pytest.fixture
def tiny() -> System:
    return load_system("tiny")[0]


@pytest.fixture
def noiseless() -> System:
    return load_system("noiseless")[0]


@pytest.fixture
def team() -> System:
    return load_system("team")[0]


@pytest.fixture
def learning() -> System:
    return load_system("learning")[0]


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(42)


def _deterministic_system(horizon: int = 3, actual_flips: bool = True) -> System:
    """Two states, two actions, identity sensors. The model keeps its state; the actual flips it under action 0."""
    keep = np.array([[[1.0, 0.0], [1.0, 0.0]], [[0.0, 1.0], [0.0, 1.0]]])
    flip = np.array([[[0.0, 1.0], [1.0, 0.0]], [[1.0, 0.0], [0.0, 1.0]]])
    return System(
        num_states=2,
        actions_per_subsystem=(2,),
        observations_per_subsystem=(2,),
        horizon=horizon,
        model_kernel=np.broadcast_to(keep, (horizon, 2, 2, 2)),
        actual_kernel=np.broadcast_to(flip if actual_flips else keep, (horizon, 2, 2, 2)),
        observation_kernels=(np.broadcast_to(np.eye(2), (horizon + 1, 2, 2)),),
        initial_joint=np.diag([0.5, 0.5]),
        costs=CostModel(
            stage_cost=np.broadcast_to(np.array([[0.0, 0.2], [1.0, 0.7]]), (horizon, 2, 2)),
            terminal_cost=np.array([0.0, 1.0]),
            mismatch_weight=1.0,
        ),
        name="deterministic",
    )


@pytest.fixture
def deterministic_system():
    """Builder for a tiny system with deterministic kernels and identity sensors."""
    return _deterministic_system
