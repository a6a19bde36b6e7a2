"""Exact tabular MDP machinery and mechanical checks of the two guarantees.

* :func:`check_theorem1` - adding a bounded, non-negative bonus to the reward
  keeps the optimal action of every state.
* :func:`check_theorem2` - switching to the greedy action wherever the
  reflection confidence of that action clears ``kappa`` never lowers the
  value of any state.

Argmax ties are broken towards the lowest action index.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .env import GridSpec, N_ACTIONS
from .errors import ContractError, DegenerateGapError, ValidationError

DEFAULT_TOL = 1e-10
MAX_SWEEPS = 100_000
TIE_TOL = 1e-9


@dataclass(frozen=True)
class TabularMDP:
    transition: np.ndarray
    reward: np.ndarray
    gamma: float

    def __post_init__(self):
        P = np.ascontiguousarray(self.transition, dtype=np.float64)
        R = np.ascontiguousarray(self.reward, dtype=np.float64)
        object.__setattr__(self, "transition", P)
        object.__setattr__(self, "reward", R)
        if P.ndim != 3 or P.shape[0] != P.shape[2] or R.shape != P.shape[:2]:
            raise ValidationError(f"shape mismatch: P{P.shape} R{R.shape}")
        if not 0.0 <= self.gamma < 1.0:
            raise ValidationError(f"gamma must lie in [0, 1), got {self.gamma}")
        if (P < 0).any():
            raise ValidationError("negative transition probability")
        if np.abs(P.sum(axis=2) - 1.0).max() > 1e-12:
            raise ValidationError("transition rows must sum to 1")

    @property
    def n_states(self) -> int:
        return self.reward.shape[0]

    @property
    def n_actions(self) -> int:
        return self.reward.shape[1]

    def with_reward(self, reward) -> "TabularMDP":
        return TabularMDP(self.transition, reward, self.gamma)


@dataclass(frozen=True)
class SolveResult:
    q_star: np.ndarray
    v_star: np.ndarray
    iterations: int
    residual: float
    gamma: float
    residual_history: np.ndarray = field(default=None, repr=False)


def _check_probs(probs, what):
    probs = np.asarray(probs, dtype=np.float64)
    if (probs < 0).any() or np.abs(probs.sum(axis=1) - 1.0).max() > 1e-12:
        raise ValidationError(f"{what} rows must be distributions")
    return probs


def random_mdp(seed: int, n_states: int, n_actions: int, gamma: float) -> TabularMDP:
    if n_states < 2 or n_actions < 2:
        raise ValidationError("need at least 2 states and 2 actions")
    if not 0.0 < gamma < 1.0:
        raise ValidationError(f"gamma must lie in (0, 1), got {gamma}")
    rng = np.random.default_rng(seed)
    raw = rng.random((n_states, n_actions, n_states)) + 1e-3
    P = raw / raw.sum(axis=2, keepdims=True)
    # absorb the normalization rounding into the largest entry of each row
    fix = 1.0 - P.sum(axis=2)
    idx = P.argmax(axis=2)
    np.put_along_axis(P, idx[..., None], np.take_along_axis(P, idx[..., None], 2) + fix[..., None], 2)
    R = rng.random((n_states, n_actions))
    return TabularMDP(P, R, float(gamma))


def value_iteration(mdp: TabularMDP, tol: float = DEFAULT_TOL, max_sweeps: int = MAX_SWEEPS) -> SolveResult:
    if tol <= 0:
        raise ValidationError("tol must be positive")
    q0 = np.zeros_like(mdp.reward)
    q, it, residual, hist = kernels.value_iteration(
        mdp.transition, mdp.reward, float(mdp.gamma), q0, float(tol), int(max_sweeps))
    return SolveResult(q_star=q, v_star=q.max(axis=1), iterations=int(it),
                       residual=float(residual), gamma=float(mdp.gamma), residual_history=hist)


def policy_evaluation(mdp: TabularMDP, policy, tol: float = DEFAULT_TOL) -> np.ndarray:
    """State values of ``policy`` by a direct linear solve.

    ``tol`` only bounds the accepted Bellman residual of the solution.
    """
    pi = _check_probs(policy, "policy")
    P_pi = np.einsum("sa,sat->st", pi, mdp.transition)
    r_pi = (pi * mdp.reward).sum(axis=1)
    v = np.linalg.solve(np.eye(mdp.n_states) - mdp.gamma * P_pi, r_pi)
    resid = np.abs(r_pi + mdp.gamma * P_pi @ v - v).max()
    if resid > max(tol, 1e-9 * max(1.0, np.abs(v).max())):
        raise ValidationError(f"policy evaluation residual {resid:.3g} above tolerance")
    return v


def q_from_v(mdp: TabularMDP, v) -> np.ndarray:
    return mdp.reward + mdp.gamma * (mdp.transition @ v)


def greedy_policy(q) -> np.ndarray:
    q = np.asarray(q)
    pi = np.zeros_like(q, dtype=np.float64)
    pi[np.arange(q.shape[0]), q.argmax(axis=1)] = 1.0
    return pi


def action_gaps(q, tie_tol: float = TIE_TOL) -> np.ndarray:
    """Per-state ``Q(s, a*) - Q(s, a_sub)`` with ``a_sub`` the best non-argmax action."""
    q = np.asarray(q)
    best = q.argmax(axis=1)
    masked = q.copy()
    masked[np.arange(q.shape[0]), best] = -np.inf
    gaps = q[np.arange(q.shape[0]), best] - masked.max(axis=1)
    spread = q.max(axis=1) - q.min(axis=1)
    flat = np.flatnonzero(spread <= tie_tol)
    if flat.size:
        s = int(flat[0])
        raise DegenerateGapError(f"state {s}: all actions tie in Q*", state=s)
    return gaps


def assumption1_bound(solve: SolveResult) -> float:
    """``(1 - gamma) * min_s [Q*(s, a*) - Q*(s, a_sub)]``."""
    return float((1.0 - solve.gamma) * action_gaps(solve.q_star).min())


def _vi_tol(tol, gamma):
    return min(DEFAULT_TOL, tol * (1.0 - gamma) / 4.0)


@dataclass(frozen=True)
class Theorem1Result:
    holds: bool
    violating_states: list
    argmax_ok: bool
    sandwich_ok: bool
    bound: float
    max_shift: float


def check_theorem1(mdp: TabularMDP, bonus, tol: float = 1e-8, base: SolveResult | None = None) -> Theorem1Result:
    bonus = np.asarray(bonus, dtype=np.float64)
    if bonus.shape != mdp.reward.shape:
        raise ValidationError(f"bonus shape {bonus.shape} != {mdp.reward.shape}")
    vi_tol = _vi_tol(tol, mdp.gamma)
    base = base or value_iteration(mdp, vi_tol)
    C = assumption1_bound(base)
    bad = np.argwhere((bonus < 0) | (bonus > C))
    if bad.size:
        s, a = map(int, bad[0])
        raise ContractError(f"bonus[{s},{a}]={bonus[s, a]!r} outside [0, C={C!r}]")
    shaped = value_iteration(mdp.with_reward(mdp.reward + bonus), vi_tol)
    q, q1 = base.q_star, shaped.q_star
    a_star = q.argmax(axis=1)
    rows = np.arange(mdp.n_states)
    argmax_ok = q1[rows, a_star] >= q1.max(axis=1) - TIE_TOL
    upper = C / (1.0 - mdp.gamma)
    sandwich_ok = ((q1 >= q - tol) & (q1 <= q + upper + tol)).all(axis=1)
    ok = argmax_ok & sandwich_ok
    violating = [int(s) for s in np.flatnonzero(~ok)]
    return Theorem1Result(holds=not violating, violating_states=violating,
                          argmax_ok=bool(argmax_ok.all()), sandwich_ok=bool(sandwich_ok.all()),
                          bound=C, max_shift=float((q1 - q).max()))


def ensemble_policy(pi, conf, a_star, kappa: float) -> np.ndarray:
    """Per-state switch: greedy at ``a_star`` where its confidence clears ``kappa``."""
    pi = np.asarray(pi, dtype=np.float64)
    rows = np.arange(pi.shape[0])
    fire = np.asarray(conf)[rows, a_star] >= kappa
    new = pi.copy()
    new[fire] = 0.0
    new[rows[fire], a_star[fire]] = 1.0
    return new


@dataclass(frozen=True)
class Theorem2Result:
    holds: bool
    min_gap: float
    fired_states: int
    v_pi: np.ndarray = field(repr=False)
    v_new: np.ndarray = field(repr=False)


def check_theorem2(mdp: TabularMDP, pi, conf, kappa: float, tol: float = 1e-9) -> Theorem2Result:
    pi = _check_probs(pi, "policy")
    conf = np.asarray(conf, dtype=np.float64)
    if conf.shape != pi.shape or (conf < 0).any() or (conf > 1).any():
        raise ValidationError("confidence table must match the policy shape and lie in [0, 1]")
    v_pi = policy_evaluation(mdp, pi)
    q_pi = q_from_v(mdp, v_pi)
    a_star = q_pi.argmax(axis=1)
    rows = np.arange(mdp.n_states)
    others = conf.copy()
    others[rows, a_star] = -np.inf
    bad = np.flatnonzero(conf[rows, a_star] <= others.max(axis=1))
    if bad.size:
        s = int(bad[0])
        raise ContractError(f"state {s}: confidence of greedy action {int(a_star[s])} is not the strict maximum")
    pi_new = ensemble_policy(pi, conf, a_star, kappa)
    v_new = policy_evaluation(mdp, pi_new)
    gap = v_new - v_pi
    return Theorem2Result(holds=bool((gap >= -tol).all()), min_gap=float(gap.min()),
                          fired_states=int((conf[rows, a_star] >= kappa).sum()),
                          v_pi=v_pi, v_new=v_new)


def gridworld_to_mdp(spec: GridSpec, gamma: float = 0.99) -> TabularMDP:
    """Deterministic tabular encoding of a gridworld.

    Goal and cliff cells become absorbing with zero reward; walls are kept
    as unreachable self-looping states so indices match observations.  The
    per-episode step cap is not modelled.
    """
    n = spec.n_cells
    P = np.zeros((n, N_ACTIONS, n))
    R = np.zeros((n, N_ACTIONS))
    blocked, cliff, goal = spec.masks()
    absorbing = cliff | goal | blocked
    for s in range(n):
        r, c = spec.cell(s)
        if absorbing[r, c]:
            P[s, :, s] = 1.0
            continue
        for a in range(N_ACTIONS):
            r2 = r + int(kernels.MOVES_DR[a])
            c2 = c + int(kernels.MOVES_DC[a])
            if not spec.in_bounds((r2, c2)) or blocked[r2, c2]:
                r2, c2 = r, c
            P[s, a, spec.index((r2, c2))] = 1.0
            if cliff[r2, c2]:
                R[s, a] = spec.cliff_reward
            elif goal[r2, c2]:
                R[s, a] = spec.goal_reward
            else:
                R[s, a] = spec.step_reward
    return TabularMDP(P, R, gamma)
