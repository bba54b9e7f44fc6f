"""
Joint information state Π_t over (model state, actual state) and its update.

The update takes the previous belief, the realized joint action and the new
joint observation; it has no strategy argument, which is what makes it
policy-independent.
"""

from dataclasses import dataclass
from typing import Any, Dict, Optional, Sequence, Tuple

import numpy as np

from sepcon.constants import BELIEF_TOL
from sepcon.errors import ImpossibleObservationError, ValidationError
from sepcon.system import ActionLike, System, couple_rows


@dataclass(frozen=True, eq=False)
class JointBelief:
    """Probability mass over X × X (rows: model state, columns: actual state)."""

    mass: np.ndarray
    stage: int

    def __post_init__(self):
        mass = np.array(self.mass, dtype=float)
        if mass.ndim != 2 or mass.shape[0] != mass.shape[1]:
            raise ValidationError(f"belief must be square, got shape {mass.shape}", "belief")
        if np.any(mass < 0) or abs(mass.sum() - 1.0) > BELIEF_TOL:
            raise ValidationError(f"belief mass {mass.sum():.12g} is not a distribution", "belief")
        mass.setflags(write=False)
        object.__setattr__(self, "mass", mass)

    @property
    def flat(self) -> np.ndarray:
        """Row-major flattening, index s = x·|X| + x̂."""
        return self.mass.reshape(-1)

    def to_record(self) -> Dict[str, Any]:
        return {"stage": self.stage, "mass": self.flat.tolist()}


def coupled_kernel(sys: System, t: int, u: ActionLike) -> np.ndarray:
    """
    P(x', x̂' | x, x̂, u) as an (|X|², |X|²) matrix over flattened pairs.

    Shared coupling is the comonotone coupling of the model and actual rows,
    matching the inverse-transform sampling in `system.step_actual`.
    """
    a = sys.action_index(u)
    key = ("coupled", t, a)
    if key not in sys._cache:
        n = sys.num_states
        out = np.empty((n * n, n * n))
        for x in range(n):
            p = sys.model_kernel[t, x, a]
            for xh in range(n):
                q = sys.actual_kernel[t, xh, a]
                out[x * n + xh] = couple_rows(p, q, sys.coupling).reshape(-1)
        out.setflags(write=False)
        sys._cache[key] = out
    return sys._cache[key]


def pair_likelihood(sys: System, t: int) -> np.ndarray:
    """L[s, y] = p(y | x) for flattened pairs s = (x, x̂); the actual state plays no part."""
    key = ("pair_obs", t)
    if key not in sys._cache:
        table = np.repeat(sys.joint_observation_kernel(t), sys.num_states, axis=0)
        table.setflags(write=False)
        sys._cache[key] = table
    return sys._cache[key]


def init_belief(sys: System) -> JointBelief:
    """Prior law of (X_0, X̂_0)."""
    return JointBelief(sys.initial_joint, 0)


def predict(sys: System, pi: JointBelief, u: ActionLike) -> JointBelief:
    """Push the belief through the coupled kernel (before the next observation)."""
    if not 0 <= pi.stage < sys.horizon:
        raise IndexError(f"cannot predict from stage {pi.stage}")
    nxt = pi.flat @ coupled_kernel(sys, pi.stage, u)
    return JointBelief(nxt.reshape(pi.mass.shape) / nxt.sum(), pi.stage + 1)


def condition(sys: System, pi: JointBelief, y: ActionLike, u: Any = None) -> JointBelief:
    """Bayes correction of a belief with the joint observation taken at its stage."""
    yi = sys.observation_index(y)
    like = sys.joint_observation_kernel(pi.stage)[:, yi]
    post = pi.mass * like[:, None]
    norm = post.sum()
    if norm <= 0.0:
        raise ImpossibleObservationError(pi.stage, u, sys.observation_tuple(yi))
    return JointBelief(post / norm, pi.stage)


def update(sys: System, pi: JointBelief, u: ActionLike, y: ActionLike) -> JointBelief:
    """φ_t: Π_{t+1} ∝ p(y_{t+1} | x') · Σ P(x', x̂' | x, x̂, u) Π_t(x, x̂)."""
    return condition(sys, predict(sys, pi, u), y, u=u)


def observation_probabilities(sys: System, prior: JointBelief) -> np.ndarray:
    """P(y | prior) for every joint observation at the prior's stage."""
    return prior.flat @ pair_likelihood(sys, prior.stage)


def marginals(pi: JointBelief) -> Tuple[np.ndarray, np.ndarray]:
    """(model marginal, actual marginal)."""
    return model_marginal(pi), actual_marginal(pi)


def model_marginal(pi: JointBelief) -> np.ndarray:
    return pi.mass.sum(axis=1)


def actual_marginal(pi: JointBelief) -> np.ndarray:
    """P(X̂_t | data): what the controller knows about the actual system."""
    return pi.mass.sum(axis=0)


def total_variation(a: JointBelief, b: JointBelief) -> float:
    return 0.5 * float(np.abs(a.mass - b.mass).sum())


def filter_history(
    sys: System,
    actions: Sequence[ActionLike],
    observations: Sequence[ActionLike],
    start: Optional[JointBelief] = None,
) -> Tuple[JointBelief, ...]:
    """
    Run the filter over a realized history.

    observations holds y_0..y_t and actions u_0..u_{t-1}; returns Π_0..Π_t.
    """
    pi = condition(sys, start or init_belief(sys), observations[0])
    beliefs = [pi]
    for u, y in zip(actions, observations[1:]):
        pi = update(sys, pi, u, y)
        beliefs.append(pi)
    return tuple(beliefs)
