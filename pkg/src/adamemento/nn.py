"""Small dense networks with hand-written backprop and Adam.

Layers hold an ``(out, in)`` weight matrix, a bias and an activation.
Inputs are row batches: ``(batch, in) -> (batch, out)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError, NumericalError, ValidationError

ACTIVATIONS = ("relu", "sigmoid", "softmax", "identity")
LOSS_KINDS = ("cross_entropy", "mse", "binary_target_mse")
LOG_CLAMP = 1e-12
SIGMOID_CLIP = 30.0


@dataclass
class Layer:
    weight: np.ndarray
    bias: np.ndarray
    activation: str


@dataclass
class NetParams:
    layers: list

    def __post_init__(self):
        for i, layer in enumerate(self.layers):
            if layer.activation not in ACTIVATIONS:
                raise ValidationError(f"layer {i}: unknown activation {layer.activation!r}")
            if layer.activation == "softmax" and i != len(self.layers) - 1:
                raise ValidationError("softmax is only allowed on the final layer")
            if layer.bias.shape != (layer.weight.shape[0],):
                raise ValidationError(f"layer {i}: bias shape {layer.bias.shape} vs weight {layer.weight.shape}")
            if i and layer.weight.shape[1] != self.layers[i - 1].weight.shape[0]:
                raise ValidationError(f"layer {i}: fan_in {layer.weight.shape[1]} does not chain")

    @classmethod
    def unchecked(cls, layers) -> "NetParams":
        obj = cls.__new__(cls)
        obj.layers = list(layers)
        return obj

    @property
    def sizes(self) -> list[int]:
        return [self.layers[0].weight.shape[1]] + [l.weight.shape[0] for l in self.layers]

    @property
    def activations(self) -> list[str]:
        return [l.activation for l in self.layers]

    def arrays(self) -> list[np.ndarray]:
        out = []
        for layer in self.layers:
            out += [layer.weight, layer.bias]
        return out

    def with_arrays(self, arrays) -> "NetParams":
        arrays = list(arrays)
        return NetParams.unchecked(Layer(arrays[2 * i], arrays[2 * i + 1], l.activation)
                                   for i, l in enumerate(self.layers))

    def copy(self) -> "NetParams":
        return self.with_arrays(a.copy() for a in self.arrays())

    def zeros_like(self) -> "NetParams":
        return self.with_arrays(np.zeros_like(a) for a in self.arrays())

    def equals(self, other: "NetParams") -> bool:
        return (self.activations == other.activations
                and all(np.array_equal(a, b) for a, b in zip(self.arrays(), other.arrays())))


def _rng(seed):
    return seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)


def init_net(layer_sizes, activations, seed) -> NetParams:
    if len(layer_sizes) < 2 or len(activations) != len(layer_sizes) - 1:
        raise ValidationError("need >= 2 sizes and one activation per layer")
    rng = _rng(seed)
    layers = []
    for fan_in, fan_out, act in zip(layer_sizes[:-1], layer_sizes[1:], activations):
        w = rng.standard_normal((fan_out, fan_in)) / np.sqrt(fan_in)
        layers.append(Layer(w, np.zeros(fan_out), act))
    return NetParams(layers)


def _activate(z, kind):
    if kind == "relu":
        return np.maximum(z, 0.0)
    if kind == "sigmoid":
        return 1.0 / (1.0 + np.exp(-np.clip(z, -SIGMOID_CLIP, SIGMOID_CLIP)))
    if kind == "softmax":
        e = np.exp(z - z.max(axis=1, keepdims=True))
        return e / e.sum(axis=1, keepdims=True)
    return z


def _activation_grad(kind, z, a, grad_a):
    """Gradient w.r.t. the pre-activation given the gradient w.r.t. the output."""
    if kind == "relu":
        return grad_a * (z > 0)
    if kind == "sigmoid":
        return grad_a * a * (1.0 - a) * (np.abs(z) < SIGMOID_CLIP)
    if kind == "softmax":
        return a * (grad_a - (grad_a * a).sum(axis=1, keepdims=True))
    return grad_a


@dataclass
class Cache:
    inputs: list = field(default_factory=list)
    pre: list = field(default_factory=list)
    post: list = field(default_factory=list)


def forward(params: NetParams, x):
    """Returns ``(output, cache)``; a 1-D input gives a 1-D output."""
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    h = x[None, :] if single else x
    if h.shape[1] != params.layers[0].weight.shape[1]:
        raise ValidationError(f"input width {h.shape[1]} != fan_in {params.layers[0].weight.shape[1]}")
    cache = Cache()
    for layer in params.layers:
        cache.inputs.append(h)
        z = h @ layer.weight.T + layer.bias
        h = _activate(z, layer.activation)
        cache.pre.append(z)
        cache.post.append(h)
    return (h[0] if single else h), cache


def backward(params: NetParams, cache: Cache, grad_out, extra=None, wrt_pre=False):
    """Backpropagate ``grad_out`` through the whole network.

    ``grad_out`` is the gradient w.r.t. the final output (or its
    pre-activation when ``wrt_pre``).  ``extra`` maps a layer index to an
    additional gradient on that layer's post-activation.  Returns
    ``(grads, grad_input)``.
    """
    extra = extra or {}
    n = len(params.layers)
    g = np.asarray(grad_out, dtype=np.float64)
    if g.ndim == 1:
        g = g[None, :]
    grads = [None] * n
    for i in range(n - 1, -1, -1):
        layer = params.layers[i]
        if i in extra:
            g = g + extra[i]
        if not (wrt_pre and i == n - 1):
            g = _activation_grad(layer.activation, cache.pre[i], cache.post[i], g)
        grads[i] = Layer(g.T @ cache.inputs[i], g.sum(axis=0), layer.activation)
        g = g @ layer.weight
    return NetParams.unchecked(grads), g


def _as_arrays(batch):
    if isinstance(batch, tuple) and len(batch) == 2 and isinstance(batch[0], np.ndarray):
        inputs, targets = batch
    else:
        if not len(batch):
            raise ValidationError("empty batch")
        inputs = np.stack([np.asarray(b[0], dtype=np.float64) for b in batch])
        targets = np.stack([np.atleast_1d(np.asarray(b[1], dtype=np.float64)) for b in batch])
    inputs = np.atleast_2d(np.asarray(inputs, dtype=np.float64))
    targets = np.asarray(targets, dtype=np.float64)
    if targets.ndim == 1:
        targets = targets[:, None] if inputs.shape[0] == targets.shape[0] else targets[None, :]
    if inputs.shape[0] == 0:
        raise ValidationError("empty batch")
    return inputs, targets


def per_example_loss(out, targets, loss_kind):
    if loss_kind == "cross_entropy":
        return -(targets * np.log(np.maximum(out, LOG_CLAMP))).sum(axis=1)
    if loss_kind == "mse":
        return 0.5 * ((out - targets) ** 2).sum(axis=1)
    if loss_kind == "binary_target_mse":
        return ((out - targets) ** 2).sum(axis=1)
    raise ValidationError(f"unknown loss kind {loss_kind!r}")


def loss_and_grad(params: NetParams, batch, loss_kind: str, l1_latent_coeff: float = 0.0,
                  latent_layer_index: int | None = None):
    """Mean per-example loss plus ``l1_latent_coeff * mean ||h_latent||_1``.

    Per-example losses: ``cross_entropy`` is ``-sum t log p`` (log clamped at
    1e-12), ``mse`` is ``0.5 * ||y - t||^2`` and ``binary_target_mse`` is
    ``||y - t||^2`` with targets in {0, 1}.
    """
    if loss_kind not in LOSS_KINDS:
        raise ValidationError(f"unknown loss kind {loss_kind!r}")
    if l1_latent_coeff < 0:
        raise ValidationError("l1_latent_coeff must be >= 0")
    if (l1_latent_coeff > 0) != (latent_layer_index is not None):
        raise ValidationError("latent_layer_index must be given iff l1_latent_coeff > 0")
    if loss_kind == "cross_entropy" and params.layers[-1].activation != "softmax":
        raise ContractError("cross_entropy requires a softmax output layer")
    inputs, targets = _as_arrays(batch)
    if loss_kind == "binary_target_mse" and not np.isin(targets, (0.0, 1.0)).all():
        raise ValidationError("binary_target_mse targets must be 0 or 1")
    out, cache = forward(params, inputs)
    if out.shape != targets.shape:
        raise ValidationError(f"target shape {targets.shape} != output shape {out.shape}")
    b = inputs.shape[0]
    loss = per_example_loss(out, targets, loss_kind).mean()
    if loss_kind == "cross_entropy":
        g = np.where(out > LOG_CLAMP, -targets / np.maximum(out, LOG_CLAMP), 0.0) / b
    elif loss_kind == "mse":
        g = (out - targets) / b
    else:
        g = 2.0 * (out - targets) / b
    extra = None
    if l1_latent_coeff > 0:
        latent = cache.post[latent_layer_index]
        loss += l1_latent_coeff * np.abs(latent).sum(axis=1).mean()
        # subgradient of |x| taken as 0 at 0
        extra = {latent_layer_index: l1_latent_coeff * np.sign(latent) / b}
    grads, _ = backward(params, cache, g, extra)
    return float(loss), grads


@dataclass
class AdamState:
    first_moment: list
    second_moment: list
    step_count: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8

    def copy(self) -> "AdamState":
        return AdamState([m.copy() for m in self.first_moment], [v.copy() for v in self.second_moment],
                         self.step_count, self.beta1, self.beta2, self.epsilon)


def init_adam(params: NetParams, beta1=0.9, beta2=0.999, epsilon=1e-8) -> AdamState:
    return AdamState([np.zeros_like(a) for a in params.arrays()],
                     [np.zeros_like(a) for a in params.arrays()], 0, beta1, beta2, epsilon)


def adam_step(params: NetParams, grads: NetParams, state: AdamState, lr: float):
    """Bias-corrected Adam; returns fresh ``(params, state)``."""
    p_arr, g_arr = params.arrays(), grads.arrays()
    if len(p_arr) != len(g_arr) or any(p.shape != g.shape for p, g in zip(p_arr, g_arr)):
        raise ValidationError("gradient shapes do not match parameters")
    for i, g in enumerate(g_arr):
        if not np.isfinite(g).all():
            raise NumericalError(f"non-finite gradient in layer {i // 2}", layer=i // 2)
    t = state.step_count + 1
    b1, b2, eps = state.beta1, state.beta2, state.epsilon
    c1 = 1.0 - b1 ** t
    c2 = 1.0 - b2 ** t
    new_p, new_m, new_v = [], [], []
    for p, g, m, v in zip(p_arr, g_arr, state.first_moment, state.second_moment):
        m = b1 * m + (1.0 - b1) * g
        v = b2 * v + (1.0 - b2) * g * g
        new_p.append(p - lr * (m / c1) / (np.sqrt(v / c2) + eps))
        new_m.append(m)
        new_v.append(v)
    return params.with_arrays(new_p), AdamState(new_m, new_v, t, b1, b2, eps)


def global_norm(grads: NetParams) -> float:
    return float(np.sqrt(sum(float((a * a).sum()) for a in grads.arrays())))


def clip_grad_norm(grads: NetParams, max_norm: float) -> NetParams:
    if max_norm <= 0:
        raise ValidationError("max_norm must be positive")
    norm = global_norm(grads)
    if norm <= max_norm:
        return grads
    scale = max_norm / norm
    return grads.with_arrays(a * scale for a in grads.arrays())


def concat(*nets: NetParams) -> NetParams:
    """Layers of several parameter sets as one flat list (no chaining check)."""
    return NetParams.unchecked(l for n in nets for l in n.layers)


def split(flat: NetParams, counts) -> list[NetParams]:
    out, i = [], 0
    for c in counts:
        out.append(NetParams.unchecked(flat.layers[i:i + c]))
        i += c
    return out
