"""Plain PPO learner with no curiosity and no memory.

Kept deliberately separate from :mod:`.trainer` so that the full loop, run
with both components switched off, can be checked against it bit for bit.
"""
from __future__ import annotations

import numpy as np

from ..config import RunConfig
from ..env import N_ACTIONS, VecGridEnv, encode_indices
from .metrics import MetricsLog
from .policy import make_policy, policy_forward, sample_from, LOGP_CLAMP
from .ppo import gae, ppo_update
from .trainer import ppo_config, stream

NAN = float("nan")


def train_base_learner(cfg: RunConfig, on_row=None) -> MetricsLog:
    spec = cfg.grid_spec()
    n, n_cells, T = cfg.num_env, spec.n_cells, cfg.num_step
    policy = make_policy(n_cells, N_ACTIONS, stream(cfg.seed, "policy_init"), cfg.hidden_size,
                         use_int_head=False, eps=cfg.stable_eps)
    act_rng = stream(cfg.seed, "actions")
    ppo_rng = stream(cfg.seed, "ppo")
    hp = ppo_config(cfg)
    envs = VecGridEnv(spec, n)
    ep_return = [0.0] * n
    log = MetricsLog(cfg.hash(), cfg.seed)
    env_steps = 0
    for update in range(1, cfg.total_updates + 1):
        obs = np.empty((T, n, n_cells))
        actions = np.empty((T, n), dtype=np.int64)
        rewards, dones, logp, values = (np.empty((T, n)) for _ in range(4))
        finished = []
        for t in range(T):
            obs[t] = envs.observations()
            out = policy_forward(policy, obs[t])
            a = sample_from(out.probs, act_rng.random(n))
            res = envs.step(a)
            actions[t], values[t], rewards[t] = a, out.v_ext, res["reward"]
            logp[t] = np.log(np.maximum(out.probs[np.arange(n), a], LOGP_CLAMP))
            done = res["terminated"] | res["truncated"]
            dones[t] = done
            for e in range(n):
                ep_return[e] += float(res["reward"][e])
                if done[e]:
                    finished.append(ep_return[e])
                    ep_return[e] = 0.0
        env_steps += T * n
        last_v = policy_forward(policy, encode_indices(n_cells, envs.indices())).v_ext
        adv = gae(rewards, values, last_v, dones, cfg.gamma, cfg.gae_lambda)
        returns = adv + values
        adv = cfg.ext_coef * adv
        stats = ppo_update(policy, obs.reshape(T * n, n_cells), actions.reshape(-1), logp.reshape(-1),
                           adv.reshape(-1), returns.reshape(-1), np.zeros(T * n), hp, ppo_rng, update)
        row = dict(update=update, env_steps=env_steps,
                   mean_ext_return=float(np.mean(finished)) if finished else NAN,
                   mean_int_reward=0.0, memory_action_frac=0.0,
                   cliff_falls_cum=envs.fall_count, coverage=envs.coverage(),
                   pred_loss=NAN, refl_loss=NAN, ae_loss=NAN,
                   policy_loss=stats["policy_loss"], v_ext_loss=stats["v_ext_loss"],
                   v_int_loss=stats["v_int_loss"], entropy=stats["entropy"])
        log.append(row)
        if on_row is not None:
            on_row(row)
    return log
