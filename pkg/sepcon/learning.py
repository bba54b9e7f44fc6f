"""Count-based online estimation of the unknown actual kernel."""

from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from sepcon.belief import condition, coupled_kernel, init_belief, total_variation, update
from sepcon.constants import EM_STEPS_PER_UPDATE, EM_TOLERANCE, SMOOTHING_PSEUDO_COUNT
from sepcon.system import System, couple_rows

History = Tuple[Tuple[int, ...], Tuple[int, ...], Tuple[int, ...]]


class KernelEstimate:
    """
    Transition counts over (x̂, u, x̂') with additive smoothing.

    The estimate is stationary: transitions of every stage are pooled.
    When observations identify the actual state the counts are integral and
    accumulate directly. Otherwise every distinct episode history is kept and
    its posterior-expected transitions are recomputed under the current
    estimate on each update (batch EM), so early episodes are not frozen at
    the guess that was current when they arrived.
    """

    def __init__(
        self,
        num_states: int,
        num_actions: int,
        pseudo_count: float = SMOOTHING_PSEUDO_COUNT,
        counts: Optional[np.ndarray] = None,
    ):
        if pseudo_count < 0:
            raise ValueError(f"pseudo_count must be >= 0, got {pseudo_count}")
        self.num_states = num_states
        self.num_actions = num_actions
        self.pseudo_count = float(pseudo_count)
        shape = (num_states, num_actions, num_states)
        self.hard_counts = np.zeros(shape) if counts is None else np.array(counts, dtype=float)
        if self.hard_counts.shape != shape or np.any(self.hard_counts < 0):
            raise ValueError(f"counts must be nonnegative with shape {shape}")
        self.soft_counts = np.zeros(shape)
        self.episodes = 0
        self._histories: Dict[History, int] = {}
        self._likelihoods: List[np.ndarray] = []
        self._weights: List[int] = []

    @classmethod
    def for_system(cls, sys: System, pseudo_count: float = SMOOTHING_PSEUDO_COUNT) -> "KernelEstimate":
        return cls(sys.num_states, sys.num_actions, pseudo_count)

    @property
    def counts(self) -> np.ndarray:
        return self.hard_counts + self.soft_counts

    @property
    def num_histories(self) -> int:
        return len(self._histories)

    def copy(self) -> "KernelEstimate":
        out = KernelEstimate(self.num_states, self.num_actions, self.pseudo_count, self.hard_counts)
        out.soft_counts = self.soft_counts.copy()
        out.episodes = self.episodes
        out._histories = dict(self._histories)
        out._likelihoods = list(self._likelihoods)
        out._weights = list(self._weights)
        return out

    def kernel(self) -> np.ndarray:
        """P̃(x̂' | x̂, u) as (|X|, |U|, |X|); rows with no mass are uniform."""
        smoothed = self.counts + self.pseudo_count
        totals = smoothed.sum(axis=2, keepdims=True)
        uniform = np.full_like(smoothed, 1.0 / self.num_states)
        return np.divide(smoothed, totals, out=uniform, where=totals > 0)

    def add(self, x_hat: int, a: int, x_hat_next: int, weight: float = 1.0) -> None:
        self.hard_counts[x_hat, a, x_hat_next] += weight

    def update(self, sys: System, traj: Any, steps: int = EM_STEPS_PER_UPDATE) -> None:
        """
        Fold one finished episode into the estimate.

        Identifying sensors give hard counts from ŷ and u. Otherwise the
        history (u, y, ŷ) is stored and the expected counts of all stored
        histories are refit for at most `steps` EM iterations.
        """
        actions = tuple(sys.action_index(u) for u in traj.actions)
        actual = [sys.observation_index(y) for y in traj.actual_observations]
        if all(sys.identifies_state(t) for t in range(sys.horizon + 1)):
            states = [
                int(np.argmax(sys.joint_observation_kernel(t)[:, y])) for t, y in enumerate(actual)
            ]
            for t, a in enumerate(actions):
                self.add(states[t], a, states[t + 1])
        else:
            model = [sys.observation_index(y) for y in list(traj.observations) + [traj.y_final]]
            self._remember(sys, (actions, tuple(model), tuple(actual)))
            self.refit(sys, steps)
        self.episodes += 1

    def _remember(self, sys: System, history: History) -> None:
        index = self._histories.get(history)
        if index is not None:
            self._weights[index] += 1
            return
        _, model, actual = history
        self._histories[history] = len(self._weights)
        self._likelihoods.append(
            np.stack([
                observation_pair_likelihood(sys, t, y, yh)
                for t, (y, yh) in enumerate(zip(model, actual))
            ])
        )
        self._weights.append(1)

    def expected_counts(self, sys: System) -> np.ndarray:
        """Posterior-expected transitions of every stored history under the current kernel."""
        out = np.zeros_like(self.soft_counts)
        if not self._histories:
            return out
        actions = np.array([h[0] for h in self._histories], dtype=int)
        xi, valid = _batched_transitions(
            sys.with_actual_kernel(self.kernel()), actions, np.stack(self._likelihoods)
        )
        weights = np.where(valid, np.array(self._weights, dtype=float), 0.0)
        for t in range(actions.shape[1]):
            for a in np.unique(actions[:, t]):
                rows = actions[:, t] == a
                out[:, a, :] += np.tensordot(weights[rows], xi[rows, t], axes=1)
        return out

    def refit(
        self, sys: System, max_steps: int = EM_STEPS_PER_UPDATE, tolerance: float = EM_TOLERANCE
    ) -> int:
        """
        EM on the stored histories, warm-started at the current counts.

        Returns:
            Number of iterations run; stops early once no expected count moves
            by more than `tolerance`
        """
        for step in range(1, max_steps + 1):
            fresh = self.expected_counts(sys)
            delta = float(np.max(np.abs(fresh - self.soft_counts), initial=0.0))
            self.soft_counts = fresh
            if delta <= tolerance:
                return step
        return max_steps

    def to_dict(self) -> Dict[str, Any]:
        return {
            "pseudo_count": self.pseudo_count,
            "episodes": self.episodes,
            "histories": self.num_histories,
            "counts": self.counts.tolist(),
        }


def observation_pair_likelihood(sys: System, t: int, y: int, y_hat: int) -> np.ndarray:
    """
    p(y, ŷ | x, x̂) over flattened pairs s = x·|X| + x̂.

    Under shared coupling both sensors invert the same noise draw per
    subsystem; under independent coupling the two readings are independent.
    """
    n = sys.num_states
    ys = sys.observation_tuple(y)
    yhs = sys.observation_tuple(y_hat)
    out = np.ones((n, n))
    for k, obs in enumerate(sys.observation_kernels):
        rows = obs[t]
        for x in range(n):
            for xh in range(n):
                out[x, xh] *= couple_rows(rows[x], rows[xh], sys.coupling)[ys[k], yhs[k]]
    return out.reshape(-1)


def _batched_transitions(
    learned: System, actions: np.ndarray, likelihoods: np.ndarray
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Forward-backward over the (x, x̂) chain for a batch of histories.

    Args:
        learned: System whose actual kernel is the current estimate
        actions: (H, T) joint action indices
        likelihoods: (H, T+1, |X|²) observation likelihoods per pair

    Returns:
        ξ of shape (H, T, |X|, |X|) over actual transitions, and a mask of
        histories with positive likelihood
    """
    n = learned.num_states
    batch, horizon = actions.shape
    kernels = np.stack([
        np.stack([coupled_kernel(learned, t, a) for a in range(learned.num_actions)])
        for t in range(horizon)
    ])
    valid = np.ones(batch, dtype=bool)
    alpha = np.empty((batch, horizon + 1, n * n))

    def normalize(mass: np.ndarray) -> np.ndarray:
        total = mass.sum(axis=1)
        valid[total <= 0.0] = False
        return mass / np.where(total > 0.0, total, 1.0)[:, None]

    alpha[:, 0] = normalize(learned.initial_joint.reshape(-1)[None, :] * likelihoods[:, 0])
    for t in range(horizon):
        step = kernels[t, actions[:, t]]
        alpha[:, t + 1] = normalize(
            np.einsum("hi,hij->hj", alpha[:, t], step) * likelihoods[:, t + 1]
        )
    beta = np.ones((batch, n * n))
    out = np.zeros((batch, horizon, n, n))
    for t in reversed(range(horizon)):
        step = kernels[t, actions[:, t]]
        weight = likelihoods[:, t + 1] * beta
        xi = alpha[:, t, :, None] * step * weight[:, None, :]
        total = xi.sum(axis=(1, 2))
        valid[total <= 0.0] = False
        xi = xi / np.where(total > 0.0, total, 1.0)[:, None, None]
        out[:, t] = xi.reshape(batch, n, n, n, n).sum(axis=(1, 3))
        beta = normalize(np.einsum("hij,hj->hi", step, weight))
    return out, valid


def expected_transitions(
    sys: System,
    kernel: np.ndarray,
    actions: Sequence[int],
    observations: Sequence[int],
    actual_observations: Sequence[int],
) -> Optional[np.ndarray]:
    """
    Posterior expected actual transitions ξ_t(i, j) of one episode.

    Conditions on u_0..u_{T-1}, the model observations y_0..y_T and the actual
    observations ŷ_0..ŷ_T, with the estimated `kernel` in place of the actual
    one. Returns None if the history has zero likelihood under it.
    """
    learned = sys.with_actual_kernel(kernel)
    likes = np.stack([
        observation_pair_likelihood(sys, t, y, yh)
        for t, (y, yh) in enumerate(zip(observations, actual_observations))
    ])
    xi, valid = _batched_transitions(learned, np.array([list(actions)], dtype=int), likes[None])
    return xi[0] if valid[0] else None


def probe_distance(
    sys: System,
    learned: System,
    actions: Sequence[Any],
    observations: Sequence[Any],
) -> float:
    """Largest total-variation gap between the exact and learned filters along one history."""
    exact = condition(sys, init_belief(sys), observations[0])
    approx = condition(learned, init_belief(learned), observations[0])
    worst = total_variation(exact, approx)
    for u, y in zip(actions, observations[1:]):
        exact = update(sys, exact, u, y)
        approx = update(learned, approx, u, y)
        worst = max(worst, total_variation(exact, approx))
    return worst


@dataclass
class LearningResult:
    """Estimate after each episode, TV curve on the probe history, final estimate."""

    estimate: KernelEstimate
    kernels: List[np.ndarray] = field(default_factory=list)
    tv_curve: List[float] = field(default_factory=list)
    replans: int = 0


def learn_online(
    sys: System,
    strategy: Any,
    episodes: int,
    seed: int = 0,
    pseudo_count: float = SMOOTHING_PSEUDO_COUNT,
    replan_every: Optional[int] = None,
    kind: str = "alpha",
    resolution: Optional[int] = None,
    progress: Optional[Callable[[str], None]] = None,
) -> LearningResult:
    """
    Run learned-belief episodes sequentially, updating the estimate between episodes.

    The true actual kernel of `sys` drives the environment only. The probe
    history is one exact-belief episode at `seed`; learning episodes use
    seeds seed+1, seed+2, ... tv_curve[i] is the filter gap after i episodes.

    Args:
        replan_every: Re-solve on the learned system every this many episodes
            (default: keep the offline strategy fixed)
    """
    from sepcon.simulator import run_episode
    from sepcon.solver import solve

    if episodes < 0:
        raise ValueError(f"episodes must be >= 0, got {episodes}")
    if replan_every is not None and replan_every < 1:
        raise ValueError(f"replan_every must be >= 1, got {replan_every}")
    probe = run_episode(sys, strategy, "exact", seed=seed)
    estimate = KernelEstimate.for_system(sys, pseudo_count)
    result = LearningResult(estimate=estimate)

    def measure() -> None:
        learned = sys.with_actual_kernel(estimate.kernel())
        result.kernels.append(estimate.kernel())
        result.tv_curve.append(probe_distance(sys, learned, probe.actions, probe.observations))

    measure()
    for i in range(episodes):
        run_episode(sys, strategy, "learned", estimate=estimate, seed=seed + 1 + i)
        measure()
        if replan_every and (i + 1) % replan_every == 0:
            strategy = solve(sys.with_actual_kernel(estimate.kernel()), kind, resolution).strategy
            result.replans += 1
        if progress and (i + 1) % max(1, episodes // 10) == 0:
            progress(f"episode {i + 1}/{episodes}: tv={result.tv_curve[-1]:.4g}")
    return result
