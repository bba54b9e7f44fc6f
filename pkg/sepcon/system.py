"""Finite paired CPS: model and actual kernels, sensors, costs and one-step dynamics."""

from dataclasses import dataclass, field, replace
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from sepcon.constants import ROW_SUM_TOL
from sepcon.errors import ValidationError

COUPLINGS = ("shared", "independent")

ActionLike = Union[int, Sequence[int]]


def _freeze(arr: Any, dtype: Any = float) -> np.ndarray:
    out = np.array(arr, dtype=dtype)
    out.setflags(write=False)
    return out


def _check_stochastic(name: str, arr: np.ndarray, labels: Sequence[str]) -> None:
    """Raise on the first row (last axis) that is negative or does not sum to 1."""
    if not np.all(np.isfinite(arr)):
        idx = tuple(np.argwhere(~np.isfinite(arr))[0][:-1])
        raise ValidationError("non-finite entry", _location(name, labels, idx))
    if np.any(arr < 0):
        idx = np.argwhere(arr < 0)[0]
        raise ValidationError(
            f"negative entry {arr[tuple(idx)]:g}", _location(name, labels, idx[:-1])
        )
    sums = arr.sum(axis=-1)
    bad = np.argwhere(np.abs(sums - 1.0) > ROW_SUM_TOL)
    if bad.size:
        idx = tuple(bad[0])
        raise ValidationError(
            f"row sum {sums[idx]:.12g} ≠ 1", _location(name, labels, idx)
        )


def _location(name: str, labels: Sequence[str], idx: Sequence[int]) -> str:
    return name + "".join(f"[{lab}={int(i)}]" for lab, i in zip(labels, idx))


def inverse_transform(row: np.ndarray, draw: float) -> int:
    """Sample an index from a probability row by inverting its ascending-index CDF."""
    cdf = np.cumsum(row)
    cdf[-1] = 1.0
    idx = int(np.searchsorted(cdf, draw, side="right"))
    return min(idx, len(row) - 1)


def couple_rows(p: np.ndarray, q: np.ndarray, coupling: str = "shared") -> np.ndarray:
    """
    Joint law of (i, j) when i ~ p and j ~ q.

    Under shared coupling both rows are inverted against the same uniform draw,
    so the mass of (i, j) is the overlap of the two CDF intervals. Independent
    coupling is the product law.
    """
    if coupling == "independent":
        return np.outer(p, q)
    fp = np.cumsum(p)
    fq = np.cumsum(q)
    fp[-1] = 1.0
    fq[-1] = 1.0
    fp_prev = np.concatenate(([0.0], fp[:-1]))
    fq_prev = np.concatenate(([0.0], fq[:-1]))
    lower = np.maximum.outer(fp_prev, fq_prev)
    upper = np.minimum.outer(fp, fq)
    return np.clip(upper - lower, 0.0, None)


@dataclass(frozen=True, eq=False)
class CostModel:
    """Stage, terminal and mismatch costs of the model objective."""

    stage_cost: np.ndarray
    terminal_cost: np.ndarray
    mismatch_weight: float = 0.0
    state_metric: Optional[np.ndarray] = None

    def __post_init__(self):
        object.__setattr__(self, "stage_cost", _freeze(self.stage_cost))
        object.__setattr__(self, "terminal_cost", _freeze(self.terminal_cost))
        n = self.terminal_cost.shape[0]
        metric = self.state_metric
        if metric is None:
            idx = np.arange(n, dtype=float)
            metric = (idx[:, None] - idx[None, :]) ** 2
        object.__setattr__(self, "state_metric", _freeze(metric))
        object.__setattr__(self, "mismatch_weight", float(self.mismatch_weight))

    @property
    def span(self) -> float:
        """Range of total cost any single trajectory can accumulate."""
        stage = self.stage_cost
        per_stage = (stage.max(axis=(1, 2)) - stage.min(axis=(1, 2))).sum()
        mismatch = self.mismatch_weight * float(self.state_metric.max()) * stage.shape[0]
        terminal = float(self.terminal_cost.max() - self.terminal_cost.min())
        return float(per_stage + mismatch + terminal)


@dataclass(frozen=True, eq=False)
class System:
    """
    Paired finite CPS (model and actual) over a shared state space.

    Kernels are stored per stage as (T, |X|, |U|, |X|) where |U| is the number of
    joint actions, indexed in C order over subsystems. Observation kernels are
    stored per subsystem as (T+1, |X|, |Y^k|).
    """

    num_states: int
    actions_per_subsystem: Tuple[int, ...]
    observations_per_subsystem: Tuple[int, ...]
    horizon: int
    model_kernel: np.ndarray
    actual_kernel: np.ndarray
    observation_kernels: Tuple[np.ndarray, ...]
    initial_joint: np.ndarray
    costs: CostModel
    coupling: str = "shared"
    feasible: Tuple[np.ndarray, ...] = ()
    delays: Tuple[int, ...] = ()
    name: str = "system"
    _cache: Dict[Any, Any] = field(
        default_factory=dict, init=False, repr=False, compare=False
    )

    def __post_init__(self):
        object.__setattr__(self, "actions_per_subsystem", tuple(int(a) for a in self.actions_per_subsystem))
        object.__setattr__(
            self,
            "observations_per_subsystem",
            tuple(int(y) for y in self.observations_per_subsystem),
        )
        object.__setattr__(self, "model_kernel", _freeze(self.model_kernel))
        object.__setattr__(self, "actual_kernel", _freeze(self.actual_kernel))
        object.__setattr__(
            self, "observation_kernels", tuple(_freeze(o) for o in self.observation_kernels)
        )
        object.__setattr__(self, "initial_joint", _freeze(self.initial_joint))
        k = len(self.actions_per_subsystem)
        if not self.feasible:
            feasible = tuple(
                np.ones((self.horizon, a), dtype=bool) for a in self.actions_per_subsystem
            )
        else:
            feasible = self.feasible
        object.__setattr__(self, "feasible", tuple(_freeze(f, bool) for f in feasible))
        if not self.delays:
            object.__setattr__(self, "delays", (1,) * k)
        else:
            object.__setattr__(self, "delays", tuple(int(d) for d in self.delays))
        check_system(self)

    @property
    def num_subsystems(self) -> int:
        return len(self.actions_per_subsystem)

    @property
    def num_actions(self) -> int:
        """Number of joint actions."""
        return int(np.prod(self.actions_per_subsystem))

    @property
    def num_observations(self) -> int:
        """Number of joint observations."""
        return int(np.prod(self.observations_per_subsystem))

    def action_index(self, u: ActionLike) -> int:
        """Joint action index from an index or a per-subsystem tuple."""
        if isinstance(u, (int, np.integer)):
            return int(u)
        return int(np.ravel_multi_index(tuple(int(v) for v in u), self.actions_per_subsystem))

    def action_tuple(self, index: int) -> Tuple[int, ...]:
        return tuple(int(v) for v in np.unravel_index(int(index), self.actions_per_subsystem))

    def observation_index(self, y: ActionLike) -> int:
        """Joint observation index from an index or a per-subsystem tuple."""
        if isinstance(y, (int, np.integer)):
            return int(y)
        return int(
            np.ravel_multi_index(tuple(int(v) for v in y), self.observations_per_subsystem)
        )

    def observation_tuple(self, index: int) -> Tuple[int, ...]:
        return tuple(
            int(v) for v in np.unravel_index(int(index), self.observations_per_subsystem)
        )

    def feasible_actions(self, t: int) -> List[int]:
        """Joint action indices whose every component is feasible at stage t."""
        key = ("feasible", t)
        if key not in self._cache:
            masks = [f[t] for f in self.feasible]
            joint = masks[0]
            for m in masks[1:]:
                joint = np.logical_and.outer(joint, m).reshape(-1)
            self._cache[key] = [int(i) for i in np.flatnonzero(joint)]
        return self._cache[key]

    def joint_observation_kernel(self, t: int) -> np.ndarray:
        """Likelihood table L[x, y] of the joint observation y^{1:K} at stage t."""
        key = ("obs", t)
        if key not in self._cache:
            table = np.array(self.observation_kernels[0][t])
            for o in self.observation_kernels[1:]:
                table = (table[:, :, None] * o[t][:, None, :]).reshape(self.num_states, -1)
            table.setflags(write=False)
            self._cache[key] = table
        return self._cache[key]

    def identifies_state(self, t: int) -> bool:
        """True when the joint observation at stage t reveals the state exactly."""
        table = self.joint_observation_kernel(t)
        binary = np.all((table == 0.0) | (table == 1.0))
        return bool(binary and np.all((table > 0).sum(axis=0) <= 1))

    def with_actual_kernel(self, kernel: np.ndarray) -> "System":
        """Copy of the system with a different actual kernel; re-validated."""
        kernel = np.asarray(kernel, dtype=float)
        if kernel.ndim == 3:
            kernel = np.broadcast_to(kernel, (self.horizon,) + kernel.shape)
        return replace(self, actual_kernel=kernel)

    def with_overrides(
        self, beta: Optional[float] = None, coupling: Optional[str] = None
    ) -> "System":
        """Copy with mismatch weight and/or coupling mode replaced."""
        costs = self.costs
        if beta is not None:
            costs = replace(costs, mismatch_weight=beta)
        return replace(self, costs=costs, coupling=coupling or self.coupling)


@dataclass(frozen=True)
class JointSample:
    """One realization of (X_t, X̂_t, U_t, Y_t, Ŷ_t)."""

    x: int
    x_hat: int
    u: Tuple[int, ...]
    y: Tuple[int, ...]
    y_hat: Tuple[int, ...]


def check_system(sys: System) -> None:
    """Raise ValidationError on the first violated invariant."""
    n = sys.num_states
    t_len = sys.horizon
    if n < 1:
        raise ValidationError("must be positive", "num_states")
    if t_len < 1:
        raise ValidationError("must be at least 1", "horizon")
    if not sys.actions_per_subsystem:
        raise ValidationError("at least one subsystem is required", "subsystems")
    if len(sys.observations_per_subsystem) != sys.num_subsystems:
        raise ValidationError("one observation count per subsystem", "subsystems")
    for k, (a, y) in enumerate(zip(sys.actions_per_subsystem, sys.observations_per_subsystem)):
        if a < 1:
            raise ValidationError("must be positive", f"subsystems[{k}].actions")
        if y < 1:
            raise ValidationError("must be positive", f"subsystems[{k}].observations")
    if sys.coupling not in COUPLINGS:
        raise ValidationError(f"must be one of {COUPLINGS}", "coupling")
    shape = (t_len, n, sys.num_actions, n)
    for name in ("model_kernel", "actual_kernel"):
        arr = getattr(sys, name)
        if arr.shape != shape:
            raise ValidationError(f"shape {arr.shape} != expected {shape}", name)
        _check_stochastic(name, arr, ("t", "x", "u"))
    if len(sys.observation_kernels) != sys.num_subsystems:
        raise ValidationError("one kernel per subsystem", "observation_kernels")
    for k, obs in enumerate(sys.observation_kernels):
        name = f"observation_kernels[{k}]"
        expected = (t_len + 1, n, sys.observations_per_subsystem[k])
        if obs.shape != expected:
            raise ValidationError(f"shape {obs.shape} != expected {expected}", name)
        _check_stochastic(name, obs, ("t", "x"))
    joint = sys.initial_joint
    if joint.shape != (n, n):
        raise ValidationError(f"shape {joint.shape} != expected {(n, n)}", "initial_joint")
    _check_stochastic("initial_joint", joint.reshape(1, -1), ())
    if len(sys.delays) != sys.num_subsystems or min(sys.delays) < 1:
        raise ValidationError("one delay >= 1 per subsystem", "delays")
    for k, mask in enumerate(sys.feasible):
        if mask.shape != (t_len, sys.actions_per_subsystem[k]):
            raise ValidationError(f"shape {mask.shape} mismatch", f"feasible[{k}]")
        empty = np.flatnonzero(~mask.any(axis=1))
        if empty.size:
            raise ValidationError("empty feasible set", f"feasible[{k}][t={int(empty[0])}]")
    _check_costs(sys)


def _check_costs(sys: System) -> None:
    costs = sys.costs
    n = sys.num_states
    expected = (sys.horizon, n, sys.num_actions)
    if costs.stage_cost.shape != expected:
        raise ValidationError(
            f"shape {costs.stage_cost.shape} != expected {expected}", "costs.stage"
        )
    if costs.terminal_cost.shape != (n,):
        raise ValidationError(f"shape must be ({n},)", "costs.terminal")
    for name, arr in (("costs.stage", costs.stage_cost), ("costs.terminal", costs.terminal_cost)):
        if not np.all(np.isfinite(arr)):
            raise ValidationError("non-finite cost entry", name)
    if not np.isfinite(costs.mismatch_weight) or costs.mismatch_weight < 0:
        raise ValidationError("must be finite and nonnegative", "costs.beta")
    metric = costs.state_metric
    if metric.shape != (n, n):
        raise ValidationError(f"shape must be ({n}, {n})", "costs.metric")
    if not np.all(np.isfinite(metric)) or np.any(metric < 0):
        raise ValidationError("entries must be finite and nonnegative", "costs.metric")
    if np.any(np.diag(metric) != 0):
        raise ValidationError("diagonal must be zero", "costs.metric")
    if not np.array_equal(metric, metric.T):
        raise ValidationError("must be symmetric", "costs.metric")


def check_sample(sys: System, sample: JointSample) -> None:
    """Raise ValidationError if any index of the sample is out of range."""
    n = sys.num_states
    if not (0 <= sample.x < n and 0 <= sample.x_hat < n):
        raise ValidationError("state index out of range", "sample")
    for k, (u, y, yh) in enumerate(zip(sample.u, sample.y, sample.y_hat)):
        if not 0 <= u < sys.actions_per_subsystem[k]:
            raise ValidationError("action index out of range", f"sample.u[{k}]")
        if not (0 <= y < sys.observations_per_subsystem[k] and 0 <= yh < sys.observations_per_subsystem[k]):
            raise ValidationError("observation index out of range", f"sample.y[{k}]")


def _check_stage(sys: System, t: int, last: int) -> None:
    if not 0 <= t <= last:
        raise IndexError(f"stage {t} out of range 0..{last}")


def step_model(
    sys: System, t: int, x: int, u: ActionLike, rng: np.random.Generator
) -> Tuple[int, float]:
    """Sample the model successor; returns it together with the uniform draw used."""
    _check_stage(sys, t, sys.horizon - 1)
    draw = float(rng.random())
    row = sys.model_kernel[t, x, sys.action_index(u)]
    return inverse_transform(row, draw), draw


def step_actual(
    sys: System,
    t: int,
    x_hat: int,
    u: ActionLike,
    disturbance: Optional[float] = None,
    rng: Optional[np.random.Generator] = None,
) -> int:
    """
    Sample the actual successor.

    Under shared coupling the model's draw is reused when given; under
    independent coupling a fresh draw is taken from rng.
    """
    _check_stage(sys, t, sys.horizon - 1)
    if sys.coupling == "shared" and disturbance is not None:
        draw = disturbance
    else:
        if rng is None:
            raise ValueError("an rng is required to draw a fresh disturbance")
        draw = float(rng.random())
    row = sys.actual_kernel[t, x_hat, sys.action_index(u)]
    return inverse_transform(row, draw)


def observe(
    sys: System,
    t: int,
    k: int,
    x: int,
    rng: Optional[np.random.Generator] = None,
    noise: Optional[float] = None,
) -> int:
    """Sample subsystem k's observation of state x at stage t (model or actual alike)."""
    _check_stage(sys, t, sys.horizon)
    if not 0 <= k < sys.num_subsystems:
        raise IndexError(f"subsystem {k} out of range")
    if not 0 <= x < sys.num_states:
        raise IndexError(f"state {x} out of range")
    if noise is None:
        if rng is None:
            raise ValueError("either rng or noise is required")
        noise = float(rng.random())
    return inverse_transform(sys.observation_kernels[k][t, x], noise)


def stage_cost(sys: System, t: int, x: int, u: ActionLike) -> float:
    return float(sys.costs.stage_cost[t, x, sys.action_index(u)])


def terminal_cost(sys: System, x: int) -> float:
    return float(sys.costs.terminal_cost[x])


def mismatch_penalty(sys: System, x_next: int, x_hat_next: int) -> float:
    """β·d(x', x̂'): the discrepancy integral evaluated at the realized actual state."""
    return sys.costs.mismatch_weight * float(sys.costs.state_metric[x_next, x_hat_next])
