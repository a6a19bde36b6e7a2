"""Tabular Q-learning baseline on gridworld specs."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..env import N_ACTIONS, GridSpec, reset, step


def q_learning_step(q_table, transition, alpha: float, gamma: float):
    """One-step update on a copy; ``transition = (s, a, r, s_next, terminal)``."""
    s, a, r, s2, terminal = transition
    q = np.array(q_table, dtype=np.float64, copy=True)
    target = r if terminal else r + gamma * q[s2].max()
    q[s, a] += alpha * (target - q[s, a])
    return q


def epsilon_greedy(q_row, epsilon: float, rng) -> int:
    if rng.random() < epsilon:
        return int(rng.integers(len(q_row)))
    return int(np.argmax(q_row))


@dataclass
class QLearningRun:
    q: np.ndarray
    episode_lengths: list = field(default_factory=list)
    episode_returns: list = field(default_factory=list)
    falls: int = 0


def train_q_learning(spec: GridSpec, episodes: int, alpha=0.5, gamma=0.99, epsilon=0.1, seed=0,
                     epsilon_decay: float = 1.0, min_epsilon: float = 0.0) -> QLearningRun:
    """Epsilon-greedy Q-learning; epsilon is multiplied by ``epsilon_decay`` after each episode."""
    rng = np.random.default_rng(seed)
    run = QLearningRun(np.zeros((spec.n_cells, N_ACTIONS)))
    eps = epsilon
    for _ in range(episodes):
        state, _ = reset(spec)
        total, length = 0.0, 0
        while not state.done:
            s = spec.index(state.position)
            a = epsilon_greedy(run.q[s], eps, rng)
            state, _, r, term, _, fell = step(state, spec, a)
            s2 = spec.index(state.position)
            # truncation is not a true terminal, so it still bootstraps
            run.q = q_learning_step(run.q, (s, a, r, s2, term), alpha, gamma)
            total += r
            length += 1
            run.falls += int(fell)
        run.episode_lengths.append(length)
        run.episode_returns.append(total)
        eps = max(min_epsilon, eps * epsilon_decay)
    return run


def greedy_path(spec: GridSpec, q, max_steps=None):
    """Cells visited by the greedy policy from the start, and the terminal flags."""
    state, _ = reset(spec)
    path = [state.position]
    term = fell = False
    limit = max_steps or spec.max_steps
    while not state.done and len(path) <= limit:
        a = int(np.argmax(q[spec.index(state.position)]))
        state, _, _, term, _, fell = step(state, spec, a)
        path.append(state.position)
    return path, term and not fell
