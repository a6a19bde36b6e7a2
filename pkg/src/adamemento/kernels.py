"""Hot inner loops, each in two flavours.

``*_loop`` functions are scalar loops compiled with numba; ``*_numpy`` are
vectorized numpy equivalents.  The public names at the bottom dispatch to one
of them according to :data:`adamemento._accel.USE_NUMBA`.  Both flavours are
importable directly so tests and the benchmark can compare them.
"""
from __future__ import annotations

import math

import numpy as np

from ._accel import USE_NUMBA, njit

# up, down, left, right
MOVES_DR = np.array([-1, 1, 0, 0], dtype=np.int64)
MOVES_DC = np.array([0, 0, -1, 1], dtype=np.int64)


# ---------------------------------------------------------------- value iteration


@njit
def value_iteration_loop(P, R, gamma, q0, tol, max_sweeps):
    n_s, n_a = R.shape
    q = q0.copy()
    q_new = np.empty_like(q)
    v = np.empty(n_s)
    history = np.empty(max_sweeps)
    residual = np.inf
    it = 0
    while it < max_sweeps:
        for s in range(n_s):
            best = q[s, 0]
            for a in range(1, n_a):
                if q[s, a] > best:
                    best = q[s, a]
            v[s] = best
        residual = 0.0
        for s in range(n_s):
            for a in range(n_a):
                acc = 0.0
                for s2 in range(n_s):
                    acc += P[s, a, s2] * v[s2]
                val = R[s, a] + gamma * acc
                diff = abs(val - q[s, a])
                if diff > residual:
                    residual = diff
                q_new[s, a] = val
        q, q_new = q_new, q
        history[it] = residual
        it += 1
        if residual <= tol:
            break
    return q, it, residual, history[:it].copy()


def value_iteration_numpy(P, R, gamma, q0, tol, max_sweeps):
    q = np.array(q0, dtype=np.float64, copy=True)
    history = []
    residual = np.inf
    it = 0
    while it < max_sweeps:
        q_new = R + gamma * (P @ q.max(axis=1))
        residual = float(np.abs(q_new - q).max())
        q = q_new
        history.append(residual)
        it += 1
        if residual <= tol:
            break
    return q, it, residual, np.asarray(history, dtype=np.float64)


# ---------------------------------------------------------------- GAE


@njit
def gae_loop(rewards, values, last_values, dones, gamma, lam):
    n_t, n_e = rewards.shape
    adv = np.empty((n_t, n_e))
    for e in range(n_e):
        running = 0.0
        for t in range(n_t - 1, -1, -1):
            if t == n_t - 1:
                next_v = last_values[e]
            else:
                next_v = values[t + 1, e]
            nonterminal = 1.0 - dones[t, e]
            delta = rewards[t, e] + gamma * next_v * nonterminal - values[t, e]
            running = delta + gamma * lam * nonterminal * running
            adv[t, e] = running
    return adv


def gae_numpy(rewards, values, last_values, dones, gamma, lam):
    n_t = rewards.shape[0]
    adv = np.empty_like(rewards, dtype=np.float64)
    running = np.zeros(rewards.shape[1])
    next_v = np.asarray(last_values, dtype=np.float64)
    for t in range(n_t - 1, -1, -1):
        nonterminal = 1.0 - dones[t]
        delta = rewards[t] + gamma * next_v * nonterminal - values[t]
        running = delta + gamma * lam * nonterminal * running
        adv[t] = running
        next_v = values[t]
    return adv


# ---------------------------------------------------------------- grid stepping


@njit
def grid_step_loop(rows, cols, actions, steps, blocked, cliff, goal,
                   max_steps, step_reward, goal_reward, cliff_reward):
    n = rows.shape[0]
    height, width = blocked.shape
    new_r = np.empty(n, dtype=np.int64)
    new_c = np.empty(n, dtype=np.int64)
    new_steps = np.empty(n, dtype=np.int64)
    reward = np.empty(n)
    terminated = np.zeros(n, dtype=np.bool_)
    truncated = np.zeros(n, dtype=np.bool_)
    fell = np.zeros(n, dtype=np.bool_)
    dr = (-1, 1, 0, 0)
    dc = (0, 0, -1, 1)
    for i in range(n):
        a = actions[i]
        r = rows[i] + dr[a]
        c = cols[i] + dc[a]
        if r < 0 or r >= height or c < 0 or c >= width or blocked[r, c]:
            r = rows[i]
            c = cols[i]
        new_r[i] = r
        new_c[i] = c
        new_steps[i] = steps[i] + 1
        if cliff[r, c]:
            reward[i] = cliff_reward
            terminated[i] = True
            fell[i] = True
        elif goal[r, c]:
            reward[i] = goal_reward
            terminated[i] = True
        else:
            reward[i] = step_reward
        if not terminated[i] and new_steps[i] >= max_steps:
            truncated[i] = True
    return new_r, new_c, new_steps, reward, terminated, truncated, fell


def grid_step_numpy(rows, cols, actions, steps, blocked, cliff, goal,
                    max_steps, step_reward, goal_reward, cliff_reward):
    height, width = blocked.shape
    r = rows + MOVES_DR[actions]
    c = cols + MOVES_DC[actions]
    inside = (r >= 0) & (r < height) & (c >= 0) & (c < width)
    rc = np.clip(r, 0, height - 1)
    cc = np.clip(c, 0, width - 1)
    ok = inside & ~blocked[rc, cc]
    new_r = np.where(ok, r, rows).astype(np.int64)
    new_c = np.where(ok, c, cols).astype(np.int64)
    new_steps = (steps + 1).astype(np.int64)
    fell = cliff[new_r, new_c]
    reached = goal[new_r, new_c] & ~fell
    reward = np.where(fell, cliff_reward, np.where(reached, goal_reward, step_reward)).astype(np.float64)
    terminated = fell | reached
    truncated = ~terminated & (new_steps >= max_steps)
    return new_r, new_c, new_steps, reward, terminated, truncated, fell.copy()


# ---------------------------------------------------------------- running normalization


@njit
def welford_loop(values, count, mean, m2, warmup, floor):
    out = np.empty(values.shape[0])
    for i in range(values.shape[0]):
        x = values[i]
        count += 1.0
        delta = x - mean
        mean += delta / count
        m2 += delta * (x - mean)
        if count <= warmup:
            out[i] = 0.0
        else:
            std = math.sqrt(m2 / count)
            out[i] = x / max(std, floor)
    return out, count, mean, m2


def welford_numpy(values, count, mean, m2, warmup, floor):
    x = np.asarray(values, dtype=np.float64)
    n = x.shape[0]
    if n == 0:
        return np.empty(0), count, mean, m2
    k = np.arange(1, n + 1, dtype=np.float64)
    shift = x[0]
    csum = np.cumsum(x - shift)
    mean_b = shift + csum / k
    m2_b = np.cumsum((x - shift) ** 2) - csum ** 2 / k
    m2_b = np.maximum(m2_b, 0.0)
    # Chan et al. pairwise merge of the prior stats with every prefix
    tot = count + k
    delta = mean_b - mean
    means = mean + delta * k / tot
    m2s = m2 + m2_b + delta ** 2 * count * k / tot
    std = np.sqrt(m2s / tot)
    out = np.where(tot <= warmup, 0.0, x / np.maximum(std, floor))
    return out, float(tot[-1]), float(means[-1]), float(m2s[-1])


if USE_NUMBA:
    value_iteration = value_iteration_loop
    gae = gae_loop
    grid_step = grid_step_loop
    welford = welford_loop
else:
    value_iteration = value_iteration_numpy
    gae = gae_numpy
    grid_step = grid_step_numpy
    welford = welford_numpy
