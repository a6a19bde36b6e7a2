"""Central finite-difference gradient probes shared by several tests."""
import numpy as np

from adamemento import nn
from adamemento.curiosity import make_coarse_fine
from adamemento.memrefl import make_prediction_net, make_reflection_net, one_hot

H = 1e-5
FLOOR = 1e-6


def rel_error(a, b):
    return abs(a - b) / max(abs(a), abs(b), FLOOR)


def probe(params, batch, loss_kind, rng, n_probes, l1=0.0, latent=None):
    """Max relative error over ``n_probes`` random parameter coordinates."""
    _, grads = nn.loss_and_grad(params, batch, loss_kind, l1, latent)
    arrays, g_arrays = params.arrays(), grads.arrays()
    worst = 0.0
    for _ in range(n_probes):
        k = int(rng.integers(len(arrays)))
        idx = tuple(int(rng.integers(d)) for d in arrays[k].shape)
        vals = []
        for sign in (1, -1):
            bumped = [a.copy() for a in arrays]
            bumped[k][idx] += sign * H
            vals.append(nn.loss_and_grad(params.with_arrays(bumped), batch, loss_kind, l1, latent)[0])
        numeric = (vals[0] - vals[1]) / (2 * H)
        worst = max(worst, rel_error(g_arrays[k][idx], numeric))
    return worst


def role_case(role, seed, obs_dim=6, n_actions=4, batch=8):
    """(params, batch, loss_kind, l1, latent_index) for one network role."""
    rng = np.random.default_rng(seed)
    x = rng.random((batch, obs_dim))
    if role == "prediction":
        net = make_prediction_net(obs_dim, n_actions, seed, hidden=(16, 16)).params
        t = one_hot(rng.integers(n_actions, size=batch), n_actions)
        return net, (x, t), "cross_entropy", 0.0, None
    if role == "reflection":
        net = make_reflection_net(obs_dim, n_actions, seed, hidden=(16, 16)).params
        xa = np.hstack([x, one_hot(rng.integers(n_actions, size=batch), n_actions)])
        return net, (xa, rng.integers(2, size=(batch, 1)).astype(float)), "binary_target_mse", 0.0, None
    model = make_coarse_fine(obs_dim, seed, hidden=16, latent=8, lambda_l1=0.05)
    return model.net, (x, x), "mse", model.lambda_l1, model.latent_index
