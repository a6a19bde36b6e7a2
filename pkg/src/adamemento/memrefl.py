"""Prediction network (imitates M-buffer actions) and reflection network
(scores how trustworthy a predicted action is)."""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from . import nn
from .memory import MBuffer, RBuffer

log = logging.getLogger(__name__)


@dataclass
class PredictionNet:
    params: nn.NetParams
    adam: nn.AdamState
    n_actions: int
    train_steps: int = 0


@dataclass
class ReflectionNet:
    params: nn.NetParams
    adam: nn.AdamState
    n_actions: int
    train_steps: int = 0


def make_prediction_net(obs_dim, n_actions, seed, hidden=(64, 64), eps=1e-8) -> PredictionNet:
    sizes = [obs_dim, *hidden, n_actions]
    params = nn.init_net(sizes, ["relu"] * len(hidden) + ["softmax"], seed)
    return PredictionNet(params, nn.init_adam(params, epsilon=eps), n_actions)


def make_reflection_net(obs_dim, n_actions, seed, hidden=(64, 64), eps=1e-8) -> ReflectionNet:
    sizes = [obs_dim + n_actions, *hidden, 1]
    params = nn.init_net(sizes, ["relu"] * len(hidden) + ["sigmoid"], seed)
    return ReflectionNet(params, nn.init_adam(params, epsilon=eps), n_actions)


def one_hot(actions, n):
    actions = np.asarray(actions, dtype=np.int64)
    out = np.zeros((actions.shape[0], n))
    out[np.arange(actions.shape[0]), actions] = 1.0
    return out


def reflection_inputs(obs, actions, n_actions):
    obs = np.atleast_2d(np.asarray(obs, dtype=np.float64))
    return np.concatenate([obs, one_hot(np.atleast_1d(actions), n_actions)], axis=1)


def _rng(seed):
    return seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)


def _sample_trajectories(mbuf: MBuffer, rng, batch_m: int):
    trajs = [mbuf.sample(rng) for _ in range(batch_m)]
    obs = np.concatenate([t.observations for t in trajs])
    actions = np.concatenate([t.actions for t in trajs])
    return obs, actions


def train_prediction(net: PredictionNet, mbuf: MBuffer, updates: int, lr: float, rng_seed,
                     batch_m: int = 1):
    """Cross-entropy of stored actions, ``batch_m`` sampled trajectories per step.

    Returns the loss of the final step, or ``None`` when the buffer is empty.
    """
    if not len(mbuf):
        log.warning("M-buffer empty; prediction training skipped")
        return None
    rng = _rng(rng_seed)
    loss = float("nan")
    for _ in range(updates):
        obs, actions = _sample_trajectories(mbuf, rng, batch_m)
        targets = one_hot(actions, net.n_actions)
        loss, grads = nn.loss_and_grad(net.params, (obs, targets), "cross_entropy")
        net.params, net.adam = nn.adam_step(net.params, grads, net.adam, lr)
        net.train_steps += 1
    return loss


def predict_actions(net: PredictionNet, obs_batch):
    dist, _ = nn.forward(net.params, np.atleast_2d(obs_batch))
    return dist.argmax(axis=1), dist


def predict_action(net: PredictionNet, obs):
    """``(argmax action, distribution)``; ties resolve to the lowest index."""
    actions, dist = predict_actions(net, obs)
    return int(actions[0]), dist[0]


def reflection_batch(mbuf: MBuffer, rbuf: RBuffer, n_actions: int, batch_r: int, rng, batch_m: int = 1):
    """Inputs and 1/0 targets: ``batch_m`` M trajectories (label 1) plus ``batch_r`` R pairs (label 0)."""
    parts, labels = [], []
    if len(mbuf):
        obs, actions = _sample_trajectories(mbuf, rng, batch_m)
        parts.append(reflection_inputs(obs, actions, n_actions))
        labels.append(np.ones(len(actions)))
    if len(rbuf):
        pairs = rbuf.sample(batch_r, rng)
        parts.append(reflection_inputs(np.stack([o for o, _ in pairs]), [a for _, a in pairs], n_actions))
        labels.append(np.zeros(len(pairs)))
    return np.concatenate(parts), np.concatenate(labels)[:, None]


def train_reflection(net: ReflectionNet, mbuf: MBuffer, rbuf: RBuffer, updates: int, lr: float,
                     rng_seed, batch_r: int = 128, batch_m: int = 1):
    """Squared error towards 1 on M pairs and 0 on R pairs.

    Returns the loss of the final step, or ``None`` if both buffers are empty.
    """
    if not len(mbuf) and not len(rbuf):
        log.warning("both buffers empty; reflection training skipped")
        return None
    rng = _rng(rng_seed)
    loss = float("nan")
    for _ in range(updates):
        inputs, targets = reflection_batch(mbuf, rbuf, net.n_actions, batch_r, rng, batch_m)
        loss, grads = nn.loss_and_grad(net.params, (inputs, targets), "binary_target_mse")
        net.params, net.adam = nn.adam_step(net.params, grads, net.adam, lr)
        net.train_steps += 1
    return loss


def confidences(net: ReflectionNet, obs_batch, actions) -> np.ndarray:
    out, _ = nn.forward(net.params, reflection_inputs(obs_batch, actions, net.n_actions))
    return out[:, 0]


def confidence(net: ReflectionNet, obs, action: int) -> float:
    return float(confidences(net, obs, [action])[0])
