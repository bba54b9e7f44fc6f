"""Value-function factory — representation selection and terminal values."""

from typing import Literal, Optional

import numpy as np

from sepcon.constants import DEFAULT_REPRESENTATION, MAX_GRID_NODES
from sepcon.system import System
from sepcon.values import (
    AlphaValueFunction,
    GridValueFunction,
    ValueFunction,
    default_resolution,
    mesh_size,
    simplex_mesh,
)

RepresentationKind = Literal["alpha", "grid"]
TERMINAL_ACTION = -1


def terminal_vector(sys: System) -> np.ndarray:
    """c_T(x) laid out over flattened pairs (x, x̂); the actual state carries no terminal cost."""
    return np.repeat(sys.costs.terminal_cost, sys.num_states)


def grid_tolerance(sys: System, stage: int, resolution: int) -> float:
    """Interpolation error allowance of a grid value function at the given stage."""
    return 2.0 * (sys.horizon - stage + 1) * sys.costs.span / resolution


def resolve_resolution(sys: System, resolution: Optional[int] = None) -> int:
    """
    Mesh resolution m for the system's joint belief.

    Raises:
        ValueError: If an explicit resolution is not positive or the mesh
            would exceed MAX_GRID_NODES.
    """
    dim = sys.num_states**2
    if resolution is None:
        return default_resolution(dim)
    if resolution < 1:
        raise ValueError(f"grid resolution must be positive, got {resolution}")
    size = mesh_size(dim, resolution)
    if size > MAX_GRID_NODES:
        raise ValueError(
            f"grid resolution {resolution} gives {size} nodes (limit {MAX_GRID_NODES})"
        )
    return resolution


def create_terminal_value(
    sys: System,
    kind: RepresentationKind = DEFAULT_REPRESENTATION,
    resolution: Optional[int] = None,
) -> ValueFunction:
    """
    V_T for the requested representation.

    Args:
        sys: System whose terminal cost is used
        kind: "alpha" (exact, one vector) | "grid" (simplex mesh)
        resolution: Mesh resolution for grids (default: largest within MAX_GRID_NODES)

    Returns:
        AlphaValueFunction or GridValueFunction for stage T

    Raises:
        ValueError: On an unknown kind or an unusable resolution
    """
    vec = terminal_vector(sys)
    if kind == "alpha":
        return AlphaValueFunction(sys.horizon, vec[None, :], np.array([TERMINAL_ACTION]))
    if kind == "grid":
        m = resolve_resolution(sys, resolution)
        nodes = simplex_mesh(sys.num_states**2, m)
        values = (nodes / float(m)) @ vec
        return GridValueFunction(sys.horizon, m, nodes, values, 0.0)
    raise ValueError(f"Unknown representation: {kind!r} (expected 'alpha' or 'grid')")
