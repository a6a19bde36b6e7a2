"""Experience collection across a vector of gridworld envs."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .. import curiosity as cf
from ..env import VecGridEnv, encode_indices
from ..memory import MBuffer, RBuffer, finalize_trajectory
from .policy import SOURCE_MEMORY, EnsembleConfig, policy_forward, select_actions


@dataclass
class EpisodeRecord:
    index: int
    update: int
    env: int
    length: int
    total_return: float
    kind: str
    memory_steps: int


@dataclass
class Rollout:
    states: np.ndarray
    next_states: np.ndarray
    actions: np.ndarray
    sources: np.ndarray
    ext_rewards: np.ndarray
    int_rewards: np.ndarray
    raw_int_rewards: np.ndarray
    dones: np.ndarray
    log_probs: np.ndarray
    v_ext: np.ndarray
    v_int: np.ndarray
    last_v_ext: np.ndarray
    last_v_int: np.ndarray
    n_cells: int
    episodes: list = field(default_factory=list)

    @property
    def n_steps(self) -> int:
        return self.states.shape[0]

    @property
    def n_envs(self) -> int:
        return self.states.shape[1]

    def observations(self, flat_idx=None):
        s = self.states.reshape(-1)
        return encode_indices(self.n_cells, s if flat_idx is None else s[flat_idx])


class EpisodeTracker:
    """Per-env running episodes; they may straddle rollout boundaries."""

    def __init__(self, n_envs: int):
        self.steps = [[] for _ in range(n_envs)]
        self.count = 0

    def add(self, env, state, action, reward, source):
        self.steps[env].append((int(state), int(action), float(reward), int(source)))

    def finish(self, env):
        steps, self.steps[env] = self.steps[env], []
        self.count += 1
        return steps


@dataclass
class RolloutContext:
    """Mutable state threaded through successive rollouts."""
    rng: np.random.Generator
    tracker: EpisodeTracker
    ensemble: EnsembleConfig | None = None
    mbuf: MBuffer | None = None
    rbuf: RBuffer | None = None
    normalizer: cf.RunningNormalizer = field(default_factory=cf.RunningNormalizer)
    int_clip: float | None = None
    update: int = 0
    reflect_on_truncation: bool = False


def _terminal_kind(fell, terminated):
    if fell:
        return "death"
    return "goal" if terminated else "truncated"


def _store_episode(ctx: RolloutContext, steps, kind, n_cells, window):
    if ctx.mbuf is not None and kind != "death":
        ret = sum(s[2] for s in steps)
        if ctx.mbuf.would_accept(ret, len(steps)):
            obs = encode_indices(n_cells, [s[0] for s in steps])
            raw = [(obs[i], s[1], s[2]) for i, s in enumerate(steps)]
            ctx.mbuf.offer(finalize_trajectory(raw, kind, states=[s[0] for s in steps]))
    failed_episode = kind == "death" or (kind == "truncated" and ctx.reflect_on_truncation)
    if ctx.rbuf is not None and failed_episode:
        tail = steps[-window:] if window else []
        failed = [s for s in tail if s[3] == SOURCE_MEMORY]
        if failed:
            obs = encode_indices(n_cells, [s[0] for s in failed])
            ctx.rbuf.push(zip(obs, [s[1] for s in failed]))


def intrinsic_for_states(model: cf.CoarseFineModel, states, n_cells):
    """Raw intrinsic reward per cell index, evaluated once per distinct cell."""
    flat = np.asarray(states).reshape(-1)
    uniq, inv = np.unique(flat, return_inverse=True)
    r, _, _ = cf.intrinsic_rewards(model, encode_indices(n_cells, uniq))
    return r[inv].reshape(np.shape(states))


def collect_rollout(envs: VecGridEnv, policy, pred, refl, curiosity_model, n_steps: int,
                    ctx: RolloutContext) -> Rollout:
    """Advance every env ``n_steps`` times.

    Intrinsic rewards are computed afterwards for the arrival cells with the
    current (pre-update) curiosity model and normalized in time-major order.
    Finished episodes are offered to the M-buffer; deaths push the
    memory-sourced pairs of the last ``failure_window`` steps to the R-buffer.
    """
    n, n_cells = envs.n, envs.spec.n_cells
    shape = (n_steps, n)
    states = np.empty(shape, dtype=np.int64)
    next_states = np.empty(shape, dtype=np.int64)
    actions = np.empty(shape, dtype=np.int64)
    sources = np.empty(shape, dtype=np.int64)
    ext = np.empty(shape)
    dones = np.empty(shape)
    logp = np.empty(shape)
    v_ext = np.empty(shape)
    v_int = np.empty(shape)
    episodes = []
    mask = ctx.ensemble.mask(n) if ctx.ensemble is not None else None
    window = ctx.ensemble.failure_window if ctx.ensemble is not None else 0
    for t in range(n_steps):
        cur = envs.indices()
        a, src, lp, out = select_actions(policy, encode_indices(n_cells, cur), ctx.rng,
                                         pred, refl, ctx.ensemble, mask)
        res = envs.step(a)
        states[t], actions[t], sources[t], logp[t] = cur, a, src, lp
        v_ext[t], v_int[t] = out.v_ext, out.v_int
        next_states[t] = res["next_index"]
        ext[t] = res["reward"]
        done = res["terminated"] | res["truncated"]
        dones[t] = done
        for e in range(n):
            ctx.tracker.add(e, cur[e], a[e], res["reward"][e], src[e])
        for e in np.flatnonzero(done):
            steps = ctx.tracker.finish(e)
            kind = _terminal_kind(res["fell"][e], res["terminated"][e])
            episodes.append(EpisodeRecord(ctx.tracker.count - 1, ctx.update, int(e), len(steps),
                                          float(sum(s[2] for s in steps)), kind,
                                          sum(1 for s in steps if s[3] == SOURCE_MEMORY)))
            _store_episode(ctx, steps, kind, n_cells, window)
    last = policy_forward(policy, envs.observations())
    if curiosity_model is not None:
        raw = intrinsic_for_states(curiosity_model, next_states, n_cells)
        r_hat, ctx.normalizer = cf.normalize_batch(ctx.normalizer, raw.reshape(-1))
        r_hat = r_hat.reshape(shape)
        if ctx.int_clip is not None:
            r_hat = np.minimum(r_hat, ctx.int_clip)
    else:
        raw = np.zeros(shape)
        r_hat = np.zeros(shape)
    return Rollout(states, next_states, actions, sources, ext, r_hat, raw, dones, logp, v_ext, v_int,
                   last.v_ext, last.v_int, n_cells, episodes)
