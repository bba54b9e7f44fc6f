"""
Value functions over the joint-belief simplex.

Two representations: a set of alpha vectors (value = min over vectors of the
inner product, concave by construction) and a regular simplex mesh with
Freudenthal (barycentric) interpolation between mesh nodes.
"""

import itertools
from math import comb
from typing import Any, Dict, Tuple, Union

import numpy as np

from sepcon.belief import JointBelief
from sepcon.constants import ALPHA_CONCAVITY_SLACK, MAX_GRID_NODES, PRUNE_TOL

BeliefLike = Union[JointBelief, np.ndarray]


def _flat(belief: BeliefLike) -> np.ndarray:
    if isinstance(belief, JointBelief):
        return belief.flat
    return np.asarray(belief, dtype=float).reshape(-1)


def prune_dominated(alphas: np.ndarray, actions: np.ndarray, tol: float = PRUNE_TOL):
    """
    Drop vectors pointwise dominated by another vector (lower is better).

    Among duplicates within tol the earliest one is kept, so appending
    candidates in action order keeps the lowest action index.
    """
    m = alphas.shape[0]
    if m <= 1:
        return alphas, actions
    keep = np.ones(m, dtype=bool)
    chunk = max(1, 2_000_000 // max(1, m * alphas.shape[1]))
    for start in range(0, m, chunk):
        block = alphas[start : start + chunk]
        # dom[i, j]: vector j is everywhere <= vector i (+tol)
        dom = np.all(alphas[None, :, :] <= block[:, None, :] + tol, axis=2)
        for r in range(block.shape[0]):
            i = start + r
            dom[r, i] = False
            rivals = np.flatnonzero(dom[r])
            if rivals.size == 0:
                continue
            # j and i mutually dominant means duplicates: the earlier one wins
            mutual = np.all(alphas[i] <= alphas[rivals] + tol, axis=1)
            if np.any(~mutual) or np.any(rivals < i):
                keep[i] = False
    return alphas[keep], actions[keep]


class AlphaValueFunction:
    """V_t(π) = min_α ⟨α, π⟩ with each vector labelled by its first joint action."""

    kind = "alpha"

    def __init__(self, stage: int, alphas: np.ndarray, actions: np.ndarray):
        self.stage = int(stage)
        self.alphas = np.asarray(alphas, dtype=float)
        self.actions = np.asarray(actions, dtype=int)
        if not np.all(np.isfinite(self.alphas)):
            raise ValueError("alpha vectors must be finite")
        self.tolerance = ALPHA_CONCAVITY_SLACK * (1.0 + float(np.abs(self.alphas).max()))

    def __len__(self) -> int:
        return self.alphas.shape[0]

    def value(self, belief: BeliefLike) -> float:
        return float(np.min(self.alphas @ _flat(belief)))

    def values(self, beliefs: np.ndarray) -> np.ndarray:
        """Vectorized value at many flattened beliefs (B, N)."""
        return np.min(np.asarray(beliefs) @ self.alphas.T, axis=1)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "kind": self.kind,
            "stage": self.stage,
            "alphas": self.alphas.tolist(),
            "actions": self.actions.tolist(),
        }


def mesh_size(dim: int, resolution: int) -> int:
    """Number of distributions over `dim` outcomes with denominator `resolution`."""
    return comb(resolution + dim - 1, dim - 1)


def default_resolution(dim: int, max_nodes: int = MAX_GRID_NODES) -> int:
    """Largest resolution whose mesh stays within max_nodes (at least 1)."""
    m = 1
    while mesh_size(dim, m + 1) <= max_nodes:
        m += 1
    return m


def simplex_mesh(dim: int, resolution: int) -> np.ndarray:
    """All count vectors of length dim summing to resolution (stars and bars)."""
    rows = []
    for bars in itertools.combinations(range(resolution + dim - 1), dim - 1):
        edges = (-1,) + bars + (resolution + dim - 1,)
        rows.append([edges[i + 1] - edges[i] - 1 for i in range(dim)])
    return np.array(rows, dtype=int).reshape(-1, dim)


def freudenthal(beliefs: np.ndarray, resolution: int) -> Tuple[np.ndarray, np.ndarray]:
    """
    Vertices and barycentric weights of the Freudenthal sub-simplex holding each belief.

    Args:
        beliefs: Flattened beliefs, shape (P, dim) or (dim,)
        resolution: Mesh resolution m

    Returns:
        (counts, weights) with counts of shape (P, dim, dim) holding each vertex
        as a count vector summing to m, and weights of shape (P, dim).
    """
    b = np.atleast_2d(np.asarray(beliefs, dtype=float))
    p, dim = b.shape
    m = float(resolution)
    if dim == 1:
        return np.full((p, 1, 1), resolution, dtype=int), np.ones((p, 1))
    # cumulative coordinates y_i = m * sum_{j >= i} b_j, i = 1..dim-1
    y = m * np.cumsum(b[:, ::-1], axis=1)[:, ::-1][:, 1:]
    near = np.round(y)
    y = np.clip(np.where(np.abs(y - near) < 1e-9, near, y), 0.0, m)
    base = np.floor(y)
    frac = y - base
    order = np.argsort(-frac, axis=1, kind="stable")
    rows = np.arange(p)
    corners = np.empty((p, dim, dim - 1))
    corners[:, 0] = base
    for k in range(1, dim):
        corners[:, k] = corners[:, k - 1]
        corners[rows, k, order[:, k - 1]] += 1.0
    ordered = np.take_along_axis(frac, order, axis=1)
    weights = np.empty((p, dim))
    weights[:, 0] = 1.0 - ordered[:, 0]
    weights[:, 1:-1] = ordered[:, :-1] - ordered[:, 1:]
    weights[:, -1] = ordered[:, -1]
    full = np.concatenate(
        [np.full((p, dim, 1), m), corners, np.zeros((p, dim, 1))], axis=2
    )
    counts = np.rint(full[:, :, :-1] - full[:, :, 1:]).astype(np.int64)
    return counts, weights


class GridValueFunction:
    """Values on a regular simplex mesh, Freudenthal-interpolated in between."""

    kind = "grid"

    def __init__(
        self,
        stage: int,
        resolution: int,
        nodes: np.ndarray,
        values: np.ndarray,
        tolerance: float = 0.0,
    ):
        self.stage = int(stage)
        self.resolution = int(resolution)
        self.nodes = np.asarray(nodes, dtype=np.int64)
        self.node_values = np.asarray(values, dtype=float)
        if self.node_values.shape != (self.nodes.shape[0],):
            raise ValueError("one value per mesh node is required")
        if not np.all(np.isfinite(self.node_values)):
            raise ValueError("grid values must be finite")
        self.tolerance = float(tolerance)
        dim = self.nodes.shape[1]
        radix = self.resolution + 1
        if dim * np.log2(radix) < 62:
            self._powers = radix ** np.arange(dim, dtype=np.int64)
            keys = self.nodes @ self._powers
            self._order = np.argsort(keys)
            self._keys = keys[self._order]
            self._index = None
        else:
            self._powers = None
            self._index = {tuple(int(c) for c in row): i for i, row in enumerate(self.nodes)}

    def __len__(self) -> int:
        return self.nodes.shape[0]

    @property
    def dim(self) -> int:
        return self.nodes.shape[1]

    @property
    def beliefs(self) -> np.ndarray:
        """Mesh nodes as flattened beliefs."""
        return self.nodes / float(self.resolution)

    def _lookup(self, counts: np.ndarray) -> np.ndarray:
        """Node index of every count vector in a (Q, dim) array."""
        if self._index is not None:
            try:
                return np.array([self._index[tuple(int(c) for c in row)] for row in counts])
            except KeyError as e:
                raise ValueError(f"belief vertex {e.args[0]} is not a node of this mesh")
        keys = counts @ self._powers
        pos = np.clip(np.searchsorted(self._keys, keys), 0, len(self._keys) - 1)
        if not np.array_equal(self._keys[pos], keys):
            raise ValueError("belief vertex is not a node of this mesh")
        return self._order[pos]

    def values(self, beliefs: np.ndarray) -> np.ndarray:
        """Interpolated values at many flattened beliefs (B, N)."""
        b = np.atleast_2d(np.asarray(beliefs, dtype=float))
        if b.shape[1] != self.dim:
            raise ValueError(f"belief has {b.shape[1]} entries, mesh expects {self.dim}")
        counts, weights = freudenthal(b, self.resolution)
        used = weights > 0.0
        out = np.zeros(b.shape[0])
        idx = self._lookup(counts[used])
        np.add.at(out, np.nonzero(used)[0], weights[used] * self.node_values[idx])
        return out

    def value(self, belief: BeliefLike) -> float:
        return float(self.values(_flat(belief)[None, :])[0])

    def to_dict(self) -> Dict[str, Any]:
        return {
            "kind": self.kind,
            "stage": self.stage,
            "resolution": self.resolution,
            "nodes": self.nodes.tolist(),
            "values": self.node_values.tolist(),
            "tolerance": self.tolerance,
        }


ValueFunction = Union[AlphaValueFunction, GridValueFunction]


def value_function_from_dict(data: Dict[str, Any]) -> ValueFunction:
    kind = data.get("kind")
    if kind == "alpha":
        return AlphaValueFunction(data["stage"], np.array(data["alphas"]), np.array(data["actions"]))
    if kind == "grid":
        return GridValueFunction(
            data["stage"],
            data["resolution"],
            np.array(data["nodes"]),
            np.array(data["values"]),
            data.get("tolerance", 0.0),
        )
    raise ValueError(f"Unknown value function kind: {kind!r}")


def sample_beliefs(rng: np.random.Generator, dim: int, count: int) -> np.ndarray:
    """Uniform samples from the belief simplex."""
    return rng.dirichlet(np.ones(dim), size=count)
