"""The full training loop: PPO base learner + coarse-fine intrinsic reward +
memory-reflection ensemble."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import checkpoint as ckpt
from .. import curiosity as cf
from .. import memrefl
from ..config import RunConfig, parse_config
from ..env import N_ACTIONS, GridSpec, VecGridEnv
from ..memory import MBuffer, RBuffer, pack_buffers, unpack_buffers
from .metrics import MetricsLog
from .policy import EnsembleConfig, PolicyNet, make_policy
from .ppo import PPOConfig, RewardConfig, compute_gae, ppo_update
from .rollout import EpisodeTracker, RolloutContext, collect_rollout

# Independent random streams derived from the master seed as
# SeedSequence([seed, index]); indices are fixed so that enabling or
# disabling a component never shifts another component's stream.
STREAMS = {
    "policy_init": 0,
    "actions": 1,
    "ppo": 2,
    "curiosity_init": 3,
    "curiosity": 4,
    "prediction_init": 5,
    "reflection_init": 6,
    "memory": 7,
}


def stream(seed: int, name: str) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed), STREAMS[name]]))


def reward_config(cfg: RunConfig) -> RewardConfig:
    return RewardConfig(ext_coef=cfg.ext_coef, int_coef=cfg.int_coef, gamma_ext=cfg.gamma,
                        gamma_int=cfg.int_gamma, gae_lambda=cfg.gae_lambda, int_clip=cfg.int_clip)


def ppo_config(cfg: RunConfig) -> PPOConfig:
    return PPOConfig(clip_eps=cfg.ppo_eps, epochs=cfg.epoch, minibatches=cfg.mini_batch,
                     entropy_coef=cfg.entropy, max_grad_norm=cfg.clip_grad_norm,
                     lr=cfg.learning_rate, stable_eps=cfg.stable_eps)


@dataclass
class Learner:
    cfg: RunConfig
    spec: GridSpec
    envs: VecGridEnv
    policy: PolicyNet
    ctx: RolloutContext
    ppo_rng: np.random.Generator
    curiosity: cf.CoarseFineModel | None = None
    curiosity_rng: np.random.Generator | None = None
    pred: memrefl.PredictionNet | None = None
    refl: memrefl.ReflectionNet | None = None
    memory_rng: np.random.Generator | None = None
    update: int = 0
    env_steps: int = 0


def build_learner(cfg: RunConfig) -> Learner:
    spec = cfg.grid_spec()
    obs_dim = spec.n_cells
    eps = cfg.stable_eps
    policy = make_policy(obs_dim, N_ACTIONS, stream(cfg.seed, "policy_init"), cfg.hidden_size,
                         use_int_head=cfg.curiosity_enabled, eps=eps)
    ctx = RolloutContext(rng=stream(cfg.seed, "actions"), tracker=EpisodeTracker(cfg.num_env))
    learner = Learner(cfg, spec, VecGridEnv(spec, cfg.num_env), policy, ctx, stream(cfg.seed, "ppo"))
    if cfg.curiosity_enabled:
        learner.curiosity = cf.make_coarse_fine(obs_dim, stream(cfg.seed, "curiosity_init"),
                                                cfg.hidden_size, cfg.latent_size, cfg.effective_lambda, eps)
        learner.curiosity_rng = stream(cfg.seed, "curiosity")
        ctx.normalizer = cf.RunningNormalizer(warmup=float(cfg.obs_norm_step * cfg.num_env))
        if cfg.int_clip is not None:
            ctx.int_clip = cfg.int_clip / cfg.int_coef
    if cfg.memory_enabled:
        hidden = (cfg.hidden_size, cfg.hidden_size)
        learner.pred = memrefl.make_prediction_net(obs_dim, N_ACTIONS, stream(cfg.seed, "prediction_init"),
                                                   hidden, eps)
        learner.refl = memrefl.make_reflection_net(obs_dim, N_ACTIONS, stream(cfg.seed, "reflection_init"),
                                                   hidden, eps)
        learner.memory_rng = stream(cfg.seed, "memory")
        ctx.mbuf = MBuffer(cfg.good_buffer_size)
        ctx.rbuf = RBuffer(cfg.bad_buffer_size)
        ctx.ensemble = EnsembleConfig(kappa=cfg.confidence,
                                      ensemble_env_count=cfg.num_env - cfg.ori_policy_env_num,
                                      failure_window=cfg.failure_window)
        ctx.reflect_on_truncation = cfg.reflect_on_truncation
    return learner


def train_curiosity(learner: Learner, rollout) -> float:
    """Epoch x MiniBatch autoencoder steps over the rollout's arrival cells."""
    cfg = learner.cfg
    flat = rollout.next_states.reshape(-1)
    n = flat.shape[0]
    mb = n // cfg.mini_batch
    losses = []
    for _ in range(cfg.epoch):
        perm = learner.curiosity_rng.permutation(n)
        for m in range(cfg.mini_batch):
            idx = flat[perm[m * mb:(m + 1) * mb]]
            obs = np.zeros((idx.shape[0], rollout.n_cells))
            obs[np.arange(idx.shape[0]), idx] = 1.0
            losses.append(cf.train_autoencoder(learner.curiosity, obs, cfg.learning_rate,
                                               cfg.update_proportion, learner.curiosity_rng))
    return float(np.mean(losses))


def _nan_if_none(x):
    return float("nan") if x is None else float(x)


def train_exploitation(learner: Learner):
    """Refit the prediction and reflection nets on the current buffers."""
    cfg = learner.cfg
    ctx = learner.ctx
    if not len(ctx.mbuf) and not len(ctx.rbuf):
        return float("nan"), float("nan")
    pred_loss = None
    if len(ctx.mbuf):
        pred_loss = memrefl.train_prediction(learner.pred, ctx.mbuf, cfg.exploit_steps, cfg.learning_rate,
                                             learner.memory_rng, batch_m=cfg.good_buffer_batch_size)
    refl_loss = memrefl.train_reflection(learner.refl, ctx.mbuf, ctx.rbuf, cfg.exploit_steps,
                                         cfg.learning_rate, learner.memory_rng,
                                         batch_r=cfg.bad_buffer_batch_size,
                                         batch_m=cfg.good_buffer_batch_size)
    return _nan_if_none(pred_loss), _nan_if_none(refl_loss)


def train_step(learner: Learner) -> dict:
    """One iteration: collect, fit curiosity, GAE, PPO, periodic exploitation."""
    cfg = learner.cfg
    learner.update += 1
    learner.ctx.update = learner.update
    rollout = collect_rollout(learner.envs, learner.policy, learner.pred, learner.refl,
                              learner.curiosity, cfg.num_step, learner.ctx)
    learner.env_steps += rollout.n_steps * rollout.n_envs
    ae_loss = train_curiosity(learner, rollout) if learner.curiosity is not None else float("nan")
    use_int = learner.curiosity is not None
    adv, ret_ext, ret_int = compute_gae(rollout, reward_config(cfg), use_intrinsic=use_int)
    stats = ppo_update(learner.policy, rollout.observations, rollout.actions.reshape(-1),
                       rollout.log_probs.reshape(-1), adv.reshape(-1), ret_ext.reshape(-1),
                       ret_int.reshape(-1), ppo_config(cfg), learner.ppo_rng, learner.update)
    pred_loss = refl_loss = float("nan")
    if learner.pred is not None and learner.update % cfg.exploit_update == 0:
        pred_loss, refl_loss = train_exploitation(learner)
    returns = [e.total_return for e in rollout.episodes]
    row = dict(update=learner.update, env_steps=learner.env_steps,
               mean_ext_return=float(np.mean(returns)) if returns else float("nan"),
               mean_int_reward=float(rollout.int_rewards.mean()),
               memory_action_frac=float(rollout.sources.mean()),
               cliff_falls_cum=learner.envs.fall_count, coverage=learner.envs.coverage(),
               pred_loss=pred_loss, refl_loss=refl_loss, ae_loss=ae_loss,
               policy_loss=stats["policy_loss"], v_ext_loss=stats["v_ext_loss"],
               v_int_loss=stats["v_int_loss"], entropy=stats["entropy"])
    return row, rollout


def train(cfg: RunConfig, on_row=None, learner: Learner | None = None) -> MetricsLog:
    """Run ``cfg.total_updates`` iterations; ``on_row`` sees each metrics row as it is produced."""
    learner = learner or build_learner(cfg)
    log = MetricsLog(cfg.hash(), cfg.seed)
    for _ in range(cfg.total_updates):
        row, rollout = train_step(learner)
        log.append(row)
        log.episodes.extend(rollout.episodes)
        if on_row is not None:
            on_row(row)
    log.learner = learner
    return log


# ---------------------------------------------------------------- checkpoints


def save_learner(path, learner: Learner):
    arrays, meta = {}, {}
    meta["config"] = learner.cfg.to_text()
    meta["update"] = learner.update
    meta["env_steps"] = learner.env_steps
    meta["policy_use_int"] = learner.policy.use_int_head
    ckpt.pack_net("policy", learner.policy.flat(), arrays, meta)
    meta["policy_trunk_layers"] = len(learner.policy.trunk.layers)
    ckpt.pack_adam("policy_adam", learner.policy.adam, arrays, meta)
    rngs = {"actions": learner.ctx.rng, "ppo": learner.ppo_rng}
    if learner.curiosity is not None:
        c = learner.curiosity
        ckpt.pack_net("curiosity", c.net, arrays, meta)
        ckpt.pack_adam("curiosity_adam", c.adam, arrays, meta)
        meta["curiosity_info"] = dict(n_encoder_layers=c.n_encoder_layers, lambda_l1=c.lambda_l1,
                                      train_steps=c.train_steps)
        n = learner.ctx.normalizer
        meta["normalizer"] = dict(count=n.count, mean=n.mean, m2=n.m2, warmup=n.warmup)
        rngs["curiosity"] = learner.curiosity_rng
    if learner.pred is not None:
        for name, net in (("prediction", learner.pred), ("reflection", learner.refl)):
            ckpt.pack_net(name, net.params, arrays, meta)
            ckpt.pack_adam(f"{name}_adam", net.adam, arrays, meta)
            meta[f"{name}_steps"] = net.train_steps
        pack_buffers(learner.ctx.mbuf, learner.ctx.rbuf, arrays, meta)
        rngs["memory"] = learner.memory_rng
    meta["rng"] = {k: r.bit_generator.state for k, r in rngs.items()}
    envs = learner.envs
    for name in ("rows", "cols", "steps", "visits"):
        arrays[f"envs/{name}"] = getattr(envs, name)
    meta["envs"] = dict(fall_count=envs.fall_count)
    meta["tracker"] = dict(count=learner.ctx.tracker.count, steps=learner.ctx.tracker.steps)
    return ckpt.save(path, arrays, meta)


def _rng_from_state(state):
    g = np.random.default_rng()
    g.bit_generator.state = state
    return g


def load_learner(path) -> Learner:
    """Restore a learner (nets, optimizers, buffers, normalizer, RNG streams,
    env positions and in-flight episodes) so that training resumes exactly."""
    arrays, meta = ckpt.load(path)
    cfg = parse_config(None, [l for l in meta["config"].splitlines() if l.strip()])
    learner = build_learner(cfg)
    flat = ckpt.unpack_net("policy", arrays, meta)
    learner.policy.set_flat(flat)
    learner.policy.adam = ckpt.unpack_adam("policy_adam", arrays, meta)
    learner.update = meta["update"]
    learner.env_steps = meta["env_steps"]
    learner.ctx.rng = _rng_from_state(meta["rng"]["actions"])
    learner.ppo_rng = _rng_from_state(meta["rng"]["ppo"])
    if "curiosity" in meta:
        c = learner.curiosity
        c.net = ckpt.unpack_net("curiosity", arrays, meta)
        c.adam = ckpt.unpack_adam("curiosity_adam", arrays, meta)
        c.train_steps = meta["curiosity_info"]["train_steps"]
        learner.ctx.normalizer = cf.RunningNormalizer(**meta["normalizer"])
        learner.curiosity_rng = _rng_from_state(meta["rng"]["curiosity"])
    if "prediction" in meta:
        for name, net in (("prediction", learner.pred), ("reflection", learner.refl)):
            net.params = ckpt.unpack_net(name, arrays, meta)
            net.adam = ckpt.unpack_adam(f"{name}_adam", arrays, meta)
            net.train_steps = meta[f"{name}_steps"]
        learner.ctx.mbuf, learner.ctx.rbuf = unpack_buffers(arrays, meta)
        learner.memory_rng = _rng_from_state(meta["rng"]["memory"])
    if "envs" in meta:
        for name in ("rows", "cols", "steps", "visits"):
            setattr(learner.envs, name, arrays[f"envs/{name}"])
        learner.envs.fall_count = meta["envs"]["fall_count"]
        learner.ctx.tracker.count = meta["tracker"]["count"]
        learner.ctx.tracker.steps = [[tuple(s) for s in env] for env in meta["tracker"]["steps"]]
    return learner
