"""System description files — JSON schema parsing into a validated System."""

from pathlib import Path
from typing import Any, Dict, Tuple, Union

import numpy as np

from sepcon.errors import ValidationError
from sepcon.system import COUPLINGS, CostModel, System
from sepcon.utils import read_json, resolve_config_path


def _required(raw: Dict[str, Any], key: str, where: str = "") -> Any:
    if key not in raw:
        raise ValidationError("missing required field", f"{where}{key}")
    return raw[key]


def _count(raw: Dict[str, Any], key: str, where: str = "") -> int:
    value = _required(raw, key, where)
    if isinstance(value, bool) or not isinstance(value, int):
        raise ValidationError("must be an integer", f"{where}{key}")
    if value < 1:
        raise ValidationError("must be at least 1", f"{where}{key}")
    return value


def _array(value: Any, name: str, dtype: Any = float) -> np.ndarray:
    try:
        return np.asarray(value, dtype=dtype)
    except (TypeError, ValueError):
        raise ValidationError("ragged or non-numeric array", name)


def _staged(value: Any, name: str, ndim: int, stages: int, dtype: Any = float) -> np.ndarray:
    """Accept a stationary array (ndim-1) broadcast over stages, or a per-stage one."""
    arr = _array(value, name, dtype)
    if arr.ndim == ndim - 1:
        return np.broadcast_to(arr, (stages,) + arr.shape)
    if arr.ndim == ndim:
        if arr.shape[0] != stages:
            raise ValidationError(f"expected {stages} stages, got {arr.shape[0]}", name)
        return arr
    raise ValidationError(f"expected {ndim - 1} (stationary) or {ndim} dimensions", name)


def _initial_joint(value: Any, n: int) -> np.ndarray:
    if isinstance(value, dict):
        if "diagonal" in value:
            p = _array(value["diagonal"], "initial_joint.diagonal")
            if p.shape != (n,):
                raise ValidationError(f"shape must be ({n},)", "initial_joint.diagonal")
            return np.diag(p)
        p = _array(_required(value, "model", "initial_joint."), "initial_joint.model")
        q = _array(_required(value, "actual", "initial_joint."), "initial_joint.actual")
        if p.shape != (n,) or q.shape != (n,):
            raise ValidationError(f"marginals must have shape ({n},)", "initial_joint")
        return np.outer(p, q)
    return _array(value, "initial_joint")


def validate_system(raw: Dict[str, Any]) -> System:
    """
    Build a System from a parsed description.

    Raises:
        ValidationError: On the first violated invariant, with its field location.
    """
    if not isinstance(raw, dict):
        raise ValidationError("system description must be an object")
    n = _count(raw, "num_states")
    horizon = _count(raw, "horizon")
    coupling = raw.get("coupling", "shared")
    if coupling not in COUPLINGS:
        raise ValidationError(f"must be one of {COUPLINGS}", "coupling")

    subsystems = _required(raw, "subsystems")
    if not isinstance(subsystems, list) or not subsystems:
        raise ValidationError("must be a non-empty list", "subsystems")
    actions, observations, delays, feasible = [], [], [], []
    for k, sub in enumerate(subsystems):
        where = f"subsystems[{k}]."
        if not isinstance(sub, dict):
            raise ValidationError("must be an object", f"subsystems[{k}]")
        a = _count(sub, "actions", where)
        actions.append(a)
        observations.append(_count(sub, "observations", where))
        delay = sub.get("delay", 1)
        if isinstance(delay, bool) or not isinstance(delay, int) or delay < 1:
            raise ValidationError("must be an integer >= 1", f"{where}delay")
        delays.append(delay)
        if "feasible" in sub:
            mask = _staged(sub["feasible"], f"{where}feasible", 2, horizon, bool)
            if mask.shape[1] != a:
                raise ValidationError(f"expected {a} entries per stage", f"{where}feasible")
            feasible.append(mask)
        else:
            feasible.append(np.ones((horizon, a), dtype=bool))

    model = _staged(_required(raw, "model_kernel"), "model_kernel", 4, horizon)
    actual = model
    if "actual_kernel" in raw:
        actual = _staged(raw["actual_kernel"], "actual_kernel", 4, horizon)

    obs_raw = _required(raw, "observation_kernels")
    if not isinstance(obs_raw, list) or len(obs_raw) != len(subsystems):
        raise ValidationError("one kernel per subsystem", "observation_kernels")
    obs = tuple(
        _staged(o, f"observation_kernels[{k}]", 3, horizon + 1) for k, o in enumerate(obs_raw)
    )

    costs_raw = _required(raw, "costs")
    if not isinstance(costs_raw, dict):
        raise ValidationError("must be an object", "costs")
    stage = _staged(_required(costs_raw, "stage", "costs."), "costs.stage", 3, horizon)
    terminal = _array(_required(costs_raw, "terminal", "costs."), "costs.terminal")
    beta = costs_raw.get("beta", 0.0)
    if isinstance(beta, bool) or not isinstance(beta, (int, float)):
        raise ValidationError("must be a number", "costs.beta")
    metric = costs_raw.get("metric")
    costs = CostModel(
        stage_cost=stage,
        terminal_cost=terminal,
        mismatch_weight=beta,
        state_metric=None if metric is None else _array(metric, "costs.metric"),
    )

    return System(
        num_states=n,
        actions_per_subsystem=tuple(actions),
        observations_per_subsystem=tuple(observations),
        horizon=horizon,
        model_kernel=model,
        actual_kernel=actual,
        observation_kernels=obs,
        initial_joint=_initial_joint(_required(raw, "initial_joint"), n),
        costs=costs,
        coupling=coupling,
        feasible=tuple(feasible),
        delays=tuple(delays),
        name=str(raw.get("name", "system")),
    )


def load_system(name_or_path: Union[str, Path]) -> Tuple[System, Dict[str, Any]]:
    """
    Load and validate a system description by fixture name or path.

    Returns:
        (System, raw description dict)

    Raises:
        ConfigError: If the file is missing or not valid JSON.
        ValidationError: If the description violates an invariant.
    """
    path = resolve_config_path(str(name_or_path))
    raw = read_json(path)
    return validate_system(raw), raw

