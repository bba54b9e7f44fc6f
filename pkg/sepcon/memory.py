"""Delayed-sharing information structure: shared record Δ_t and private records Λ_t^k."""

from dataclasses import dataclass
from typing import Any, Dict, Optional, Sequence, Tuple

from sepcon.errors import ValidationError

Joint = Tuple[int, ...]


@dataclass(frozen=True)
class SharedRecord:
    """One stage of Δ_t. Components not yet shared (asymmetric delays) are None."""

    stage: int
    observations: Tuple[Optional[int], ...]
    actions: Tuple[Optional[int], ...]


@dataclass(frozen=True)
class PrivateWindow:
    """Λ_t^k: the last n_k observations and n_k - 1 actions of one subsystem."""

    subsystem: int
    observations: Tuple[Tuple[int, int], ...]
    actions: Tuple[Tuple[int, int], ...]


@dataclass(frozen=True)
class DelayedMemory:
    """
    Persistent record of everything pushed so far.

    `now` is the last stage whose observation was recorded (-1 before any).
    Observations of stages 0..now are held; the action of stage `now` may be
    pending. Views derive Δ_t and Λ_t^k from the full record, so every entry
    leaving a private window lands in the shared record exactly once.
    """

    delays: Tuple[int, ...]
    observations: Tuple[Joint, ...] = ()
    actions: Tuple[Joint, ...] = ()

    @property
    def now(self) -> int:
        return len(self.observations) - 1

    @property
    def num_subsystems(self) -> int:
        return len(self.delays)

    def record(self, y: Sequence[int]) -> "DelayedMemory":
        """Record the observations y^{1:K} of the next stage."""
        if len(self.actions) != len(self.observations):
            raise ValueError(f"action of stage {self.now} not committed yet")
        y = tuple(int(v) for v in y)
        if len(y) != self.num_subsystems:
            raise ValidationError(
                f"expected {self.num_subsystems} observations, got {len(y)}", "push.y"
            )
        return DelayedMemory(self.delays, self.observations + (y,), self.actions)

    def commit(self, u: Sequence[int]) -> "DelayedMemory":
        """Commit the actions u^{1:K} taken at the current stage."""
        if len(self.actions) != len(self.observations) - 1:
            raise ValueError("no pending stage to commit an action to")
        u = tuple(int(v) for v in u)
        if len(u) != self.num_subsystems:
            raise ValidationError(
                f"expected {self.num_subsystems} actions, got {len(u)}", "push.u"
            )
        return DelayedMemory(self.delays, self.observations, self.actions + (u,))

    def push(self, y: Sequence[int], u: Sequence[int]) -> "DelayedMemory":
        """Record a full stage (observation and action) and advance."""
        return self.record(y).commit(u)

    def to_record(self) -> Dict[str, Any]:
        return {
            "now": self.now,
            "delays": list(self.delays),
            "shared": [
                {"stage": r.stage, "y": list(r.observations), "u": list(r.actions)}
                for r in shared_view(self)
            ],
            "private": [
                {
                    "k": w.subsystem,
                    "y": [list(p) for p in w.observations],
                    "u": [list(p) for p in w.actions],
                }
                for w in (private_view(self, k) for k in range(self.num_subsystems))
            ],
        }


def init_memory(delays: Sequence[int]) -> DelayedMemory:
    """Empty memory for the given per-subsystem delays (n_k >= 1)."""
    delays = tuple(int(d) for d in delays)
    if not delays:
        raise ValueError("at least one subsystem delay is required")
    if min(delays) < 1:
        raise ValueError(f"delays must be >= 1, got {delays}")
    return DelayedMemory(delays)


def push(mem: DelayedMemory, y: Sequence[int], u: Sequence[int]) -> DelayedMemory:
    return mem.push(y, u)


def shared_view(mem: DelayedMemory) -> Tuple[SharedRecord, ...]:
    """Δ_t: stages whose data has left at least one private window."""
    t = mem.now
    last = t - min(mem.delays)
    records = []
    for s in range(0, last + 1):
        ys = tuple(
            mem.observations[s][k] if s <= t - n else None for k, n in enumerate(mem.delays)
        )
        us = tuple(
            mem.actions[s][k] if s <= t - n and s < len(mem.actions) else None
            for k, n in enumerate(mem.delays)
        )
        records.append(SharedRecord(s, ys, us))
    return tuple(records)


def private_view(mem: DelayedMemory, k: int) -> PrivateWindow:
    """Λ_t^k = (y^k_{t-n+1..t}, u^k_{t-n+1..t-1})."""
    if not 0 <= k < mem.num_subsystems:
        raise IndexError(f"subsystem {k} out of range")
    t = mem.now
    start = max(0, t - mem.delays[k] + 1)
    obs = tuple((s, mem.observations[s][k]) for s in range(start, t + 1))
    acts = tuple((s, mem.actions[s][k]) for s in range(start, min(t, len(mem.actions))))
    return PrivateWindow(k, obs, acts)


def information_key(mem: DelayedMemory) -> Tuple[Joint, ...]:
    """
    Joint observation history y_0..y_t reassembled from Δ_t and every Λ_t^k.

    Under deterministic strategies past actions are functions of past
    observations, so this is the information-history equivalence class.
    """
    t = mem.now
    rows = [[None] * mem.num_subsystems for _ in range(t + 1)]
    for rec in shared_view(mem):
        for k, y in enumerate(rec.observations):
            if y is not None:
                rows[rec.stage][k] = y
    for k in range(mem.num_subsystems):
        for s, y in private_view(mem, k).observations:
            rows[s][k] = y
    return tuple(tuple(r) for r in rows)
