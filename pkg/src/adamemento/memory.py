"""Experience stores for the memory-reflection module.

``MBuffer`` keeps the best trajectories seen so far, ordered by return
(higher first) and then by length (shorter first).  ``RBuffer`` is a FIFO
ring of ``(observation, action)`` pairs where a memory action led to failure.
"""
from __future__ import annotations

import bisect
import enum
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyBufferError, ValidationError

TERMINAL_KINDS = ("goal", "death", "truncated")


@dataclass
class Trajectory:
    observations: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    total_return: float
    effective_length: int
    terminal_kind: str
    states: np.ndarray | None = field(default=None, repr=False)

    @property
    def steps(self):
        return list(zip(self.observations, self.actions.tolist(), self.rewards.tolist()))

    @property
    def offerable(self) -> bool:
        return self.effective_length > 0

    def sort_key(self):
        return (-self.total_return, self.effective_length)


def _rng(seed):
    return seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)


def finalize_trajectory(raw_steps, terminal_kind: str, states=None) -> Trajectory:
    """Build a stored trajectory from ``(obs, action, reward)`` steps.

    A trajectory that ended in death loses its fatal last step, which is then
    excluded from both the length and the return.
    """
    if terminal_kind not in TERMINAL_KINDS:
        raise ValidationError(f"unknown terminal kind {terminal_kind!r}")
    if not len(raw_steps):
        raise ValidationError("cannot finalize an empty trajectory")
    keep = list(raw_steps[:-1]) if terminal_kind == "death" else list(raw_steps)
    if keep:
        obs = np.stack([np.asarray(s[0], dtype=np.float64) for s in keep])
    else:
        obs = np.zeros((0, np.asarray(raw_steps[0][0]).shape[0]))
    actions = np.array([int(s[1]) for s in keep], dtype=np.int64)
    rewards = np.array([float(s[2]) for s in keep], dtype=np.float64)
    if states is not None:
        states = np.asarray(states, dtype=np.int64)[:len(keep)]
    return Trajectory(obs, actions, rewards, float(rewards.sum()), len(keep), terminal_kind, states)


class OfferResult(enum.Enum):
    ACCEPTED = "accepted"
    REJECTED_WORSE = "rejected_worse"
    REJECTED_EMPTY = "rejected_empty"

    def __bool__(self):
        return self is OfferResult.ACCEPTED


class MBuffer:
    def __init__(self, capacity: int = 10):
        if capacity <= 0:
            raise ValidationError("capacity must be positive")
        self.capacity = capacity
        self.entries: list[Trajectory] = []
        self._keys: list[tuple] = []

    def __len__(self):
        return len(self.entries)

    @property
    def full(self) -> bool:
        return len(self.entries) >= self.capacity

    @property
    def worst(self) -> Trajectory | None:
        return self.entries[-1] if self.entries else None

    def would_accept(self, total_return: float, length: int) -> bool:
        """Cheap pre-check so callers can skip finalizing hopeless candidates."""
        if length <= 0:
            return False
        if not self.full:
            return True
        return (-total_return, length) < self._keys[-1]

    def offer(self, candidate: Trajectory) -> OfferResult:
        if not candidate.offerable:
            return OfferResult.REJECTED_EMPTY
        key = candidate.sort_key()
        if self.full:
            # replace the worst entry only on strictly higher return, or equal
            # return with a strictly shorter length
            if not key < self._keys[-1]:
                return OfferResult.REJECTED_WORSE
            self.entries.pop()
            self._keys.pop()
        i = bisect.bisect_right(self._keys, key)
        self._keys.insert(i, key)
        self.entries.insert(i, candidate)
        return OfferResult.ACCEPTED

    def sample(self, rng) -> Trajectory:
        if not self.entries:
            raise EmptyBufferError("M-buffer is empty")
        return self.entries[int(_rng(rng).integers(len(self.entries)))]

    def pairs(self):
        """All stored ``(observations, actions)`` stacked."""
        if not self.entries:
            return None, None
        return (np.concatenate([t.observations for t in self.entries]),
                np.concatenate([t.actions for t in self.entries]))


class RBuffer:
    def __init__(self, capacity: int = 5000):
        if capacity <= 0:
            raise ValidationError("capacity must be positive")
        self.capacity = capacity
        self.entries: deque = deque(maxlen=capacity)

    def __len__(self):
        return len(self.entries)

    def push(self, pairs):
        for obs, action in pairs:
            self.entries.append((np.asarray(obs, dtype=np.float64), int(action)))

    def sample(self, batch: int, rng):
        if not self.entries:
            raise EmptyBufferError("R-buffer is empty")
        idx = _rng(rng).integers(len(self.entries), size=batch)
        return [self.entries[i] for i in idx]


def offer(buffer: MBuffer, candidate: Trajectory) -> OfferResult:
    return buffer.offer(candidate)


def sample_m(buffer: MBuffer, rng) -> Trajectory:
    return buffer.sample(rng)


def push_failures(buffer: RBuffer, pairs):
    buffer.push(pairs)


def sample_r(buffer: RBuffer, batch: int, rng):
    return buffer.sample(batch, rng)


def pack_buffers(mbuf: MBuffer, rbuf: RBuffer, out: dict, meta: dict):
    meta["mbuf"] = dict(capacity=mbuf.capacity, entries=[
        dict(total_return=t.total_return, effective_length=t.effective_length,
             terminal_kind=t.terminal_kind, has_states=t.states is not None)
        for t in mbuf.entries])
    for i, t in enumerate(mbuf.entries):
        out[f"mbuf/{i}/obs"] = t.observations
        out[f"mbuf/{i}/actions"] = t.actions
        out[f"mbuf/{i}/rewards"] = t.rewards
        if t.states is not None:
            out[f"mbuf/{i}/states"] = t.states
    meta["rbuf"] = dict(capacity=rbuf.capacity, size=len(rbuf))
    if len(rbuf):
        out["rbuf/obs"] = np.stack([o for o, _ in rbuf.entries])
        out["rbuf/actions"] = np.array([a for _, a in rbuf.entries], dtype=np.int64)


def unpack_buffers(arrays: dict, meta: dict):
    mbuf = MBuffer(meta["mbuf"]["capacity"])
    for i, info in enumerate(meta["mbuf"]["entries"]):
        t = Trajectory(arrays[f"mbuf/{i}/obs"], arrays[f"mbuf/{i}/actions"], arrays[f"mbuf/{i}/rewards"],
                       info["total_return"], info["effective_length"], info["terminal_kind"],
                       arrays.get(f"mbuf/{i}/states") if info["has_states"] else None)
        mbuf.entries.append(t)
        mbuf._keys.append(t.sort_key())
    rbuf = RBuffer(meta["rbuf"]["capacity"])
    if meta["rbuf"]["size"]:
        rbuf.push(zip(arrays["rbuf/obs"], arrays["rbuf/actions"]))
    return mbuf, rbuf
