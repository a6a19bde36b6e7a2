"""Actor-critic network with extrinsic and intrinsic value heads, and the
confidence-gated choice between the base policy and the memory predictor."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import memrefl, nn

SOURCE_BASE = 0
SOURCE_MEMORY = 1
SOURCE_NAMES = ("base", "memory")
LOGP_CLAMP = 1e-12


@dataclass
class PolicyNet:
    trunk: nn.NetParams
    pi: nn.NetParams
    v_ext: nn.NetParams
    v_int: nn.NetParams
    adam: nn.AdamState
    use_int_head: bool = True

    @property
    def n_actions(self) -> int:
        return self.pi.layers[-1].weight.shape[0]

    @property
    def obs_dim(self) -> int:
        return self.trunk.layers[0].weight.shape[1]

    def flat(self) -> nn.NetParams:
        return nn.concat(self.trunk, self.pi, self.v_ext, self.v_int)

    def set_flat(self, flat: nn.NetParams):
        self.trunk, self.pi, self.v_ext, self.v_int = nn.split(
            flat, [len(self.trunk.layers), 1, 1, 1])


def make_policy(obs_dim, n_actions, seed, hidden=64, use_int_head=True, eps=1e-8) -> PolicyNet:
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    trunk = nn.init_net([obs_dim, hidden, hidden], ["relu", "relu"], rng)
    pi = nn.init_net([hidden, n_actions], ["softmax"], rng)
    v_ext = nn.init_net([hidden, 1], ["identity"], rng)
    v_int = nn.init_net([hidden, 1], ["identity"], rng)
    # small policy head so the initial policy is close to uniform
    pi.layers[0].weight *= 0.01
    net = PolicyNet(trunk, pi, v_ext, v_int, None, use_int_head)
    net.adam = nn.init_adam(net.flat(), epsilon=eps)
    return net


@dataclass
class PolicyOutput:
    probs: np.ndarray
    v_ext: np.ndarray
    v_int: np.ndarray
    caches: tuple


def policy_forward(policy: PolicyNet, obs) -> PolicyOutput:
    obs = np.atleast_2d(obs)
    h, c_trunk = nn.forward(policy.trunk, obs)
    probs, c_pi = nn.forward(policy.pi, h)
    v_ext, c_ve = nn.forward(policy.v_ext, h)
    v_int, c_vi = nn.forward(policy.v_int, h)
    return PolicyOutput(probs, v_ext[:, 0], v_int[:, 0], (c_trunk, c_pi, c_ve, c_vi))


def sample_from(probs, u):
    """Inverse-CDF sampling of one action per row with uniforms ``u``."""
    cdf = np.cumsum(probs, axis=1)
    a = (cdf <= u[:, None]).sum(axis=1)
    return np.minimum(a, probs.shape[1] - 1)


@dataclass
class EnsembleConfig:
    kappa: float = 0.85
    ensemble_env_count: int = 16
    failure_window: int = 10

    def mask(self, n_envs: int) -> np.ndarray:
        """Ensemble-enabled envs are the last ``ensemble_env_count`` indices."""
        m = np.zeros(n_envs, dtype=bool)
        if self.ensemble_env_count:
            m[n_envs - self.ensemble_env_count:] = True
        return m


def select_actions(policy: PolicyNet, obs, rng, pred=None, refl=None, cfg: EnsembleConfig | None = None,
                   ensemble_mask=None):
    """Actions for a batch of observations.

    One uniform is drawn per row whatever the source, so the base-policy
    random stream is the same with or without the memory gate.  Returns
    ``(actions, sources, log_probs, policy_output)``; log-probs are always
    under the base policy.
    """
    out = policy_forward(policy, obs)
    n = out.probs.shape[0]
    u = rng.random(n)
    actions = sample_from(out.probs, u)
    sources = np.zeros(n, dtype=np.int64)
    ready = pred is not None and refl is not None and pred.train_steps > 0 and cfg is not None
    if ready and ensemble_mask is not None and ensemble_mask.any():
        idx = np.flatnonzero(ensemble_mask)
        obs2 = np.atleast_2d(obs)[idx]
        a_hat, _ = memrefl.predict_actions(pred, obs2)
        conf = memrefl.confidences(refl, obs2, a_hat)
        use = conf >= cfg.kappa
        actions[idx[use]] = a_hat[use]
        sources[idx[use]] = SOURCE_MEMORY
    logp = np.log(np.maximum(out.probs[np.arange(n), actions], LOGP_CLAMP))
    return actions, sources, logp, out


def ensemble_action(policy, pred, refl, obs, cfg: EnsembleConfig, env_is_ensemble: bool, rng):
    """Single-observation form of :func:`select_actions`: ``(action, source name)``."""
    mask = np.array([bool(env_is_ensemble)])
    actions, sources, _, _ = select_actions(policy, np.atleast_2d(obs), rng, pred, refl, cfg, mask)
    return int(actions[0]), SOURCE_NAMES[int(sources[0])]


def greedy_actions(policy: PolicyNet, obs, pred=None, refl=None, kappa=None):
    """Deterministic variant used for replay: base argmax unless memory is confident."""
    out = policy_forward(policy, obs)
    actions = out.probs.argmax(axis=1)
    sources = np.zeros(actions.shape[0], dtype=np.int64)
    if pred is not None and refl is not None and pred.train_steps > 0 and kappa is not None:
        a_hat, _ = memrefl.predict_actions(pred, obs)
        use = memrefl.confidences(refl, obs, a_hat) >= kappa
        actions = np.where(use, a_hat, actions)
        sources[use] = SOURCE_MEMORY
    return actions, sources
