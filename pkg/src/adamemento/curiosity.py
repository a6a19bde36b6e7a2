"""Coarse-fine novelty: an autoencoder whose own per-state loss is the
intrinsic reward.

``r_i(s) = 0.5 * ||s - dec(enc(s))||^2 + lambda * ||enc(s)||_1``

The reconstruction term flags unfamiliar states; the latent L1 term
separates states that reconstruct equally well but excite the encoder
differently.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from . import kernels, nn

NORM_FLOOR = 1e-8


@dataclass
class CoarseFineModel:
    net: nn.NetParams
    n_encoder_layers: int
    lambda_l1: float
    adam: nn.AdamState
    train_steps: int = 0

    @property
    def encoder(self) -> nn.NetParams:
        return nn.NetParams.unchecked(self.net.layers[:self.n_encoder_layers])

    @property
    def decoder(self) -> nn.NetParams:
        return nn.NetParams.unchecked(self.net.layers[self.n_encoder_layers:])

    @property
    def latent_index(self) -> int:
        return self.n_encoder_layers - 1


def make_coarse_fine(obs_dim, seed, hidden=64, latent=32, lambda_l1=0.01, eps=1e-8) -> CoarseFineModel:
    sizes = [obs_dim, hidden, latent, hidden, obs_dim]
    net = nn.init_net(sizes, ["relu", "relu", "relu", "sigmoid"], seed)
    return CoarseFineModel(net, 2, float(lambda_l1), nn.init_adam(net, epsilon=eps))


def intrinsic_rewards(model: CoarseFineModel, obs_batch):
    """Vectorized :func:`intrinsic_reward`: arrays ``(r_i, recon_err, sparsity)``."""
    s = np.atleast_2d(np.asarray(obs_batch, dtype=np.float64))
    z, _ = nn.forward(model.encoder, s)
    s_hat, _ = nn.forward(model.decoder, z)
    recon = 0.5 * ((s - s_hat) ** 2).sum(axis=1)
    sparsity = np.abs(z).sum(axis=1)
    return recon + model.lambda_l1 * sparsity, recon, sparsity


def intrinsic_reward(model: CoarseFineModel, obs):
    r, recon, sp = intrinsic_rewards(model, obs)
    return float(r[0]), float(recon[0]), float(sp[0])


def objective(model: CoarseFineModel, obs_batch):
    """Mean training loss and its gradient on ``obs_batch``."""
    obs_batch = np.atleast_2d(np.asarray(obs_batch, dtype=np.float64))
    if model.lambda_l1 > 0:
        return nn.loss_and_grad(model.net, (obs_batch, obs_batch), "mse",
                                model.lambda_l1, model.latent_index)
    return nn.loss_and_grad(model.net, (obs_batch, obs_batch), "mse")


def train_autoencoder(model: CoarseFineModel, obs_batch, lr: float, proportion: float, rng_seed):
    """One Adam step on a random ``proportion`` of ``obs_batch``.

    Returns the mean loss on the subsample before the step, or ``None`` for
    an empty batch.
    """
    if not 0.0 < proportion <= 1.0:
        raise ValueError("proportion must lie in (0, 1]")
    obs_batch = np.asarray(obs_batch, dtype=np.float64)
    if obs_batch.ndim != 2 or obs_batch.shape[0] == 0:
        return None
    rng = rng_seed if isinstance(rng_seed, np.random.Generator) else np.random.default_rng(rng_seed)
    n = obs_batch.shape[0]
    k = max(1, int(proportion * n))
    idx = np.sort(rng.choice(n, size=k, replace=False)) if k < n else np.arange(n)
    loss, grads = objective(model, obs_batch[idx])
    model.net, model.adam = nn.adam_step(model.net, grads, model.adam, lr)
    model.train_steps += 1
    return loss


@dataclass(frozen=True)
class RunningNormalizer:
    count: float = 0.0
    mean: float = 0.0
    m2: float = 0.0
    warmup: float = 0.0

    @property
    def variance(self) -> float:
        return self.m2 / self.count if self.count > 0 else 0.0

    @property
    def std(self) -> float:
        return float(np.sqrt(self.variance))


def normalize_batch(norm: RunningNormalizer, values):
    """Feed ``values`` through the running statistics in order.

    Each value is divided by the std *after* it has been absorbed; values
    that arrive while ``count <= warmup`` are withheld as 0.
    """
    vals = np.ascontiguousarray(values, dtype=np.float64).ravel()
    out, count, mean, m2 = kernels.welford(vals, float(norm.count), float(norm.mean), float(norm.m2),
                                           float(norm.warmup), NORM_FLOOR)
    return out, replace(norm, count=float(count), mean=float(mean), m2=float(m2))


def normalize_intrinsic(norm: RunningNormalizer, r_i: float):
    out, norm = normalize_batch(norm, [r_i])
    return float(out[0]), norm


def latent_sparsity_profile(model: CoarseFineModel, obs_list) -> list[float]:
    z, _ = nn.forward(model.encoder, np.atleast_2d(np.asarray(obs_list, dtype=np.float64)))
    return np.abs(z).sum(axis=1).tolist()
