"""Dual-stream GAE and the clipped-surrogate PPO update."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import kernels, nn
from ..errors import TrainingAbort
from .policy import LOGP_CLAMP, PolicyNet, policy_forward


@dataclass
class RewardConfig:
    ext_coef: float = 2.0
    int_coef: float = 1.0
    gamma_ext: float = 0.999
    gamma_int: float = 0.99
    gae_lambda: float = 0.95
    int_clip: float | None = None


@dataclass
class PPOConfig:
    clip_eps: float = 0.1
    epochs: int = 4
    minibatches: int = 4
    entropy_coef: float = 0.001
    max_grad_norm: float = 0.5
    lr: float = 1e-4
    stable_eps: float = 1e-8


def gae(rewards, values, last_values, dones, gamma, lam):
    return kernels.gae(np.ascontiguousarray(rewards, dtype=np.float64),
                       np.ascontiguousarray(values, dtype=np.float64),
                       np.ascontiguousarray(last_values, dtype=np.float64),
                       np.ascontiguousarray(dones, dtype=np.float64), float(gamma), float(lam))


def compute_gae(rollout, cfg: RewardConfig, use_intrinsic: bool = True):
    """``(advantages, ext_returns, int_returns)``.

    The extrinsic stream is episodic (cut at every done flag); the intrinsic
    stream ignores episode boundaries.
    """
    a_ext = gae(rollout.ext_rewards, rollout.v_ext, rollout.last_v_ext, rollout.dones,
                cfg.gamma_ext, cfg.gae_lambda)
    ext_returns = a_ext + rollout.v_ext
    if use_intrinsic:
        a_int = gae(rollout.int_rewards, rollout.v_int, rollout.last_v_int,
                    np.zeros_like(rollout.dones, dtype=np.float64), cfg.gamma_int, cfg.gae_lambda)
        int_returns = a_int + rollout.v_int
        advantages = cfg.ext_coef * a_ext + cfg.int_coef * a_int
    else:
        int_returns = np.zeros_like(ext_returns)
        advantages = cfg.ext_coef * a_ext
    return advantages, ext_returns, int_returns


def normalize_advantages(adv, eps=1e-8):
    adv = np.asarray(adv, dtype=np.float64)
    centered = adv - adv.mean()
    return centered / max(float(adv.std()), eps)


def ppo_loss_and_grads(policy: PolicyNet, obs, actions, old_logp, adv, ret_ext, ret_int, hp: PPOConfig):
    """Loss terms and flat gradients for one minibatch.

    Total loss = -clipped surrogate - entropy_coef * entropy
    + 0.5 mean (V_ext - R_ext)^2 [+ 0.5 mean (V_int - R_int)^2].
    """
    out = policy_forward(policy, obs)
    c_trunk, c_pi, c_ve, c_vi = out.caches
    b = obs.shape[0]
    rows = np.arange(b)
    p = out.probs
    logp_all = np.log(np.maximum(p, LOGP_CLAMP))
    logp = logp_all[rows, actions]
    ratio = np.exp(logp - old_logp)
    clipped = np.clip(ratio, 1.0 - hp.clip_eps, 1.0 + hp.clip_eps)
    unclipped_obj = ratio * adv
    clipped_obj = clipped * adv
    surrogate = np.minimum(unclipped_obj, clipped_obj)
    entropy = -(p * logp_all).sum(axis=1)
    policy_loss = -surrogate.mean()
    v_ext_loss = 0.5 * ((out.v_ext - ret_ext) ** 2).mean()
    v_int_loss = 0.5 * ((out.v_int - ret_int) ** 2).mean() if policy.use_int_head else 0.0

    # d(-surrogate)/d logp is -ratio*adv where the unclipped branch is active
    active = unclipped_obj <= clipped_obj
    g_logp = -(active * ratio * adv) / b
    onehot = np.zeros_like(p)
    onehot[rows, actions] = 1.0
    dz = g_logp[:, None] * (onehot - p)
    dz += hp.entropy_coef * p * (logp_all + entropy[:, None]) / b
    g_pi, g_h = nn.backward(policy.pi, c_pi, dz, wrt_pre=True)
    g_ve, g_h2 = nn.backward(policy.v_ext, c_ve, ((out.v_ext - ret_ext) / b)[:, None])
    g_h = g_h + g_h2
    if policy.use_int_head:
        g_vi, g_h3 = nn.backward(policy.v_int, c_vi, ((out.v_int - ret_int) / b)[:, None])
        g_h = g_h + g_h3
    else:
        g_vi = policy.v_int.zeros_like()
    g_trunk, _ = nn.backward(policy.trunk, c_trunk, g_h)
    grads = nn.concat(g_trunk, g_pi, g_ve, g_vi)
    total = policy_loss - hp.entropy_coef * entropy.mean() + v_ext_loss + v_int_loss
    stats = dict(loss=float(total), policy_loss=float(policy_loss), v_ext_loss=float(v_ext_loss),
                 v_int_loss=float(v_int_loss), entropy=float(entropy.mean()),
                 clip_frac=float((np.abs(ratio - 1.0) > hp.clip_eps).mean()))
    return stats, grads


def ppo_update(policy: PolicyNet, obs, actions, old_logp, advantages, ext_returns, int_returns,
               hp: PPOConfig, rng, update_index=None):
    """Epochs x minibatches of clipped PPO on flattened rollout data.

    Advantages are normalized once over the whole batch.  Returns mean stats
    over every minibatch step.
    """
    n = actions.shape[0]
    adv = normalize_advantages(advantages, hp.stable_eps)
    mb_size = n // hp.minibatches
    totals = dict(policy_loss=0.0, v_ext_loss=0.0, v_int_loss=0.0, entropy=0.0, clip_frac=0.0)
    count = 0
    for _ in range(hp.epochs):
        perm = rng.permutation(n)
        for m in range(hp.minibatches):
            idx = perm[m * mb_size:(m + 1) * mb_size]
            stats, grads = ppo_loss_and_grads(policy, obs(idx) if callable(obs) else obs[idx],
                                              actions[idx], old_logp[idx], adv[idx],
                                              ext_returns[idx], int_returns[idx], hp)
            if not np.isfinite(stats["loss"]):
                raise TrainingAbort(f"non-finite PPO loss at update {update_index}, minibatch {m}",
                                    update=update_index, minibatch=m)
            grads = nn.clip_grad_norm(grads, hp.max_grad_norm)
            flat, policy.adam = nn.adam_step(policy.flat(), grads, policy.adam, hp.lr)
            policy.set_flat(flat)
            for k in totals:
                totals[k] += stats[k]
            count += 1
    return {k: v / max(count, 1) for k, v in totals.items()}
