"""
Parallel operation of the CPS model and the actual CPS.

Both systems are stepped under the same strategy output; under shared
coupling they consume the same transition draw and the same sensor noise.
"""

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Any, Callable, Dict, List, Optional, Tuple

import numpy as np

from sepcon.belief import JointBelief, condition, init_belief, predict
from sepcon.memory import DelayedMemory, information_key, init_memory
from sepcon.solver import resolve_action
from sepcon.system import (
    System,
    inverse_transform,
    mismatch_penalty,
    observe,
    stage_cost,
    step_actual,
    step_model,
    terminal_cost,
)
from sepcon.utils import standard_error

if TYPE_CHECKING:
    from sepcon.learning import KernelEstimate

MODES = ("exact", "learned")


@dataclass(frozen=True)
class StageRecord:
    stage: int
    x: int
    x_hat: int
    u: Tuple[int, ...]
    y: Tuple[int, ...]
    y_hat: Tuple[int, ...]
    belief: Tuple[float, ...]
    stage_cost: float
    actual_cost: float
    mismatch: float
    x_next: int
    x_hat_next: int
    memory: Dict[str, Any] = field(default_factory=dict)

    def to_record(self) -> Dict[str, Any]:
        return {
            "stage": self.stage,
            "x": self.x,
            "x_hat": self.x_hat,
            "u": list(self.u),
            "y": list(self.y),
            "y_hat": list(self.y_hat),
            "belief": list(self.belief),
            "stage_cost": self.stage_cost,
            "actual_cost": self.actual_cost,
            "mismatch": self.mismatch,
            "memory": self.memory,
        }


@dataclass
class Trajectory:
    """One episode of both systems, stage by stage, plus the terminal record."""

    seed: int
    mode: str
    stages: List[StageRecord] = field(default_factory=list)
    x_final: int = 0
    x_hat_final: int = 0
    y_final: Tuple[int, ...] = ()
    y_hat_final: Tuple[int, ...] = ()
    terminal_cost: float = 0.0
    actual_terminal_cost: float = 0.0
    memory: Optional[DelayedMemory] = None

    @property
    def model_total(self) -> float:
        """Σ c_t(x_t, u_t) + Σ β·d(x_{t+1}, x̂_{t+1}) + c_T(x_T)."""
        return (
            math.fsum(r.stage_cost for r in self.stages)
            + math.fsum(r.mismatch for r in self.stages)
            + self.terminal_cost
        )

    @property
    def actual_total(self) -> float:
        """Σ c_t(x̂_t, u_t) + c_T(x̂_T)."""
        return math.fsum(r.actual_cost for r in self.stages) + self.actual_terminal_cost

    @property
    def coincides(self) -> bool:
        """True when model and actual states agree at every stage."""
        return all(r.x == r.x_hat for r in self.stages) and self.x_final == self.x_hat_final

    @property
    def actions(self) -> List[Tuple[int, ...]]:
        return [r.u for r in self.stages]

    @property
    def observations(self) -> List[Tuple[int, ...]]:
        """Model-side joint observations y_0..y_{T-1}, as seen by the controller."""
        return [r.y for r in self.stages]

    @property
    def actual_observations(self) -> List[Tuple[int, ...]]:
        """ŷ_0..ŷ_T."""
        return [r.y_hat for r in self.stages] + [self.y_hat_final]

    def terminal_record(self) -> Dict[str, Any]:
        return {
            "stage": len(self.stages),
            "x": self.x_final,
            "x_hat": self.x_hat_final,
            "y": list(self.y_final),
            "y_hat": list(self.y_hat_final),
            "terminal_cost": self.terminal_cost,
            "actual_terminal_cost": self.actual_terminal_cost,
            "memory": self.memory.to_record() if self.memory is not None else None,
        }


def _observe_both(
    sys: System, t: int, x: int, x_hat: int, rng: np.random.Generator
) -> Tuple[Tuple[int, ...], Tuple[int, ...]]:
    ys, yhs = [], []
    for k in range(sys.num_subsystems):
        noise = float(rng.random())
        ys.append(observe(sys, t, k, x, noise=noise))
        if sys.coupling == "shared":
            yhs.append(observe(sys, t, k, x_hat, noise=noise))
        else:
            yhs.append(observe(sys, t, k, x_hat, rng=rng))
    return tuple(ys), tuple(yhs)


def run_episode(
    sys: System,
    strategy: Any,
    mode: str = "exact",
    estimate: Optional["KernelEstimate"] = None,
    seed: int = 0,
    belief_system: Optional[System] = None,
    update: bool = True,
) -> Trajectory:
    """
    Run model and actual side by side for the full horizon.

    Args:
        sys: True system (the actual kernel drives the environment)
        strategy: Separated or history-based strategy
        mode: "exact" filters with the true kernels; "learned" filters with the
            estimated actual kernel
        estimate: Kernel estimate, required in learned mode
        seed: Episode seed; fully determines the trajectory
        belief_system: System the filter uses (overrides mode's default)
        update: In learned mode, fold the episode into the estimate afterwards

    Raises:
        ValueError: On an unknown mode or a learned mode without estimate
        ImpossibleObservationError: Propagated from the filter
        StrategyError: If the strategy has no feasible output
    """
    if mode not in MODES:
        raise ValueError(f"Unknown mode: {mode!r} (expected one of {MODES})")
    if mode == "learned" and estimate is None and belief_system is None:
        raise ValueError("learned mode needs a kernel estimate")
    if belief_system is None:
        belief_system = sys if mode == "exact" else sys.with_actual_kernel(estimate.kernel())

    rng = np.random.default_rng(seed)
    n = sys.num_states
    pair = inverse_transform(sys.initial_joint.reshape(-1), float(rng.random()))
    x, x_hat = divmod(pair, n)
    memory = init_memory(sys.delays)
    traj = Trajectory(seed=seed, mode=mode)
    prior: JointBelief = init_belief(belief_system)

    for t in range(sys.horizon):
        y, y_hat = _observe_both(sys, t, x, x_hat, rng)
        belief = condition(belief_system, prior, y)
        memory = memory.record(y)
        a = resolve_action(sys, strategy, t, belief, information_key(memory))
        seen = memory.to_record()
        u = sys.action_tuple(a)
        memory = memory.commit(u)
        x_next, draw = step_model(sys, t, x, a, rng)
        x_hat_next = step_actual(sys, t, x_hat, a, disturbance=draw, rng=rng)
        traj.stages.append(
            StageRecord(
                stage=t,
                x=x,
                x_hat=x_hat,
                u=u,
                y=y,
                y_hat=y_hat,
                belief=tuple(float(v) for v in belief.flat),
                stage_cost=stage_cost(sys, t, x, a),
                actual_cost=stage_cost(sys, t, x_hat, a),
                mismatch=mismatch_penalty(sys, x_next, x_hat_next),
                x_next=x_next,
                x_hat_next=x_hat_next,
                memory=seen,
            )
        )
        prior = predict(belief_system, belief, a)
        x, x_hat = x_next, x_hat_next

    traj.y_final, traj.y_hat_final = _observe_both(sys, sys.horizon, x, x_hat, rng)
    traj.x_final, traj.x_hat_final = x, x_hat
    traj.terminal_cost = terminal_cost(sys, x)
    traj.actual_terminal_cost = terminal_cost(sys, x_hat)
    traj.memory = memory.record(traj.y_final)
    if mode == "learned" and update and estimate is not None:
        estimate.update(sys, traj)
    return traj


@dataclass(frozen=True)
class CostEstimate:
    """Monte Carlo averages of the actual cost Ĵ and the model objective J."""

    episodes: int
    actual_cost: float
    actual_stderr: float
    model_cost: float
    model_stderr: float
    gap: float
    gap_stderr: float
    mismatch: float


def _summarize(trajectories: List[Trajectory]) -> CostEstimate:
    actual = np.array([tr.actual_total for tr in trajectories])
    model = np.array([tr.model_total for tr in trajectories])
    mismatch = np.array([math.fsum(r.mismatch for r in tr.stages) for tr in trajectories])
    return CostEstimate(
        episodes=len(trajectories),
        actual_cost=float(actual.mean()),
        actual_stderr=standard_error(actual),
        model_cost=float(model.mean()),
        model_stderr=standard_error(model),
        gap=float((model - actual).mean()),
        gap_stderr=standard_error(model - actual),
        mismatch=float(mismatch.mean()),
    )


def run_episodes(
    sys: System,
    strategy: Any,
    episodes: int,
    base_seed: int = 0,
    belief_system: Optional[System] = None,
    workers: int = 1,
    progress: Optional[Callable[[str], None]] = None,
) -> List[Trajectory]:
    """Independent episodes with seeds base_seed, base_seed+1, ...; order follows seeds."""
    if episodes < 1:
        raise ValueError(f"episodes must be >= 1, got {episodes}")
    mode = "exact" if belief_system is None else "learned"

    def one(i: int) -> Trajectory:
        return run_episode(
            sys, strategy, mode, seed=base_seed + i, belief_system=belief_system, update=False
        )

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            out = list(pool.map(one, range(episodes)))
    else:
        out = []
        step = max(1, episodes // 10)
        for i in range(episodes):
            out.append(one(i))
            if progress and (i + 1) % step == 0:
                progress(f"{i + 1}/{episodes} episodes")
    return out


def monte_carlo_cost(
    sys: System,
    strategy: Any,
    mode: str = "exact",
    episodes: int = 1000,
    base_seed: int = 0,
    estimate: Optional["KernelEstimate"] = None,
    workers: int = 1,
    progress: Optional[Callable[[str], None]] = None,
) -> CostEstimate:
    """
    Average Ĵ (actual states) and J (model states plus mismatch) over seeded episodes.

    In learned mode the estimate is frozen for the whole run.
    """
    if mode not in MODES:
        raise ValueError(f"Unknown mode: {mode!r} (expected one of {MODES})")
    belief_system = None
    if mode == "learned":
        if estimate is None:
            raise ValueError("learned mode needs a kernel estimate")
        belief_system = sys.with_actual_kernel(estimate.kernel())
    runs = run_episodes(sys, strategy, episodes, base_seed, belief_system, workers, progress)
    return _summarize(runs)


@dataclass(frozen=True)
class CostEqualityReport:
    """Model-versus-actual cost comparison over one batch of episodes."""

    estimate: CostEstimate
    coinciding: int
    mismatch_zero_when_coinciding: bool
    penalty_iff_equal: bool
    all_coincide: bool

    @property
    def costs_agree(self) -> bool:
        """J and Ĵ agree within three standard errors of their paired difference."""
        est = self.estimate
        if est.gap_stderr == 0.0:
            return abs(est.gap) <= 1e-12 * max(1.0, abs(est.model_cost))
        return abs(est.gap) <= 3.0 * est.gap_stderr


def cost_equality_check(
    sys: System, strategy: Any, episodes: int = 1000, seed: int = 0, workers: int = 1
) -> CostEqualityReport:
    """
    Check that optimizing the model objective also optimizes the actual cost.

    Reports (a) whether mismatch penalties vanish along every episode whose
    trajectories coincide, (b) whether J and Ĵ agree within three standard
    errors, and whether the penalty is zero exactly when successor states agree.
    """
    runs = run_episodes(sys, strategy, episodes, seed, workers=workers)
    coinciding = [tr for tr in runs if tr.coincides]
    zero_when = all(r.mismatch == 0.0 for tr in coinciding for r in tr.stages)
    iff = all(
        (r.mismatch == 0.0) == (r.x_next == r.x_hat_next) for tr in runs for r in tr.stages
    )
    return CostEqualityReport(
        estimate=_summarize(runs),
        coinciding=len(coinciding),
        mismatch_zero_when_coinciding=zero_when,
        penalty_iff_equal=iff,
        all_coincide=len(coinciding) == len(runs),
    )


def trace_records(traj: Trajectory) -> List[Dict[str, Any]]:
    """Per-stage records followed by the terminal record."""
    return [r.to_record() for r in traj.stages] + [traj.terminal_record()]
