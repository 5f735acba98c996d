"""Feed-forward networks with MSE backprop and Adam.

Layer ``l`` computes ``y_l = act_l(V_l @ y_{l-1})``, plus ``c_l`` inside the
activation when the network carries biases (it does not by default).
Everything is float64. Inputs may be a single vector ``(d,)`` or a batch
``(n, d)``. Parameter and gradient lists hold the weight matrices followed
by the bias vectors, if any.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

ACTIVATIONS = ("tanh", "leaky_relu", "linear")
LEAKY_SLOPE = 0.01


@dataclass
class MlpNetwork:
    weights: list
    activations: list
    leaky_slope: float = LEAKY_SLOPE
    biases: list | None = None

    def __post_init__(self):
        if len(self.weights) != len(self.activations):
            raise ValueError("one activation per layer is required")
        if self.biases is not None:
            if len(self.biases) != len(self.weights) or any(
                    c.shape != (w.shape[0],) for c, w in zip(self.biases, self.weights)):
                raise ValueError("one bias vector of length fan_out per layer is required")
        for act in self.activations:
            if act not in ACTIVATIONS:
                raise ValueError(f"unknown activation {act!r}")
        for a, b in zip(self.weights[:-1], self.weights[1:]):
            if a.shape[0] != b.shape[1]:
                raise ValueError(f"layer dims do not chain: {a.shape} -> {b.shape}")

    @property
    def layer_dims(self):
        return [self.weights[0].shape[1]] + [w.shape[0] for w in self.weights]

    @property
    def params(self):
        return list(self.weights) + list(self.biases or [])

    @property
    def n_params(self):
        return sum(p.size for p in self.params)

    def with_params(self, params):
        n = len(self.weights)
        biases = list(params[n:]) if self.biases is not None else None
        return MlpNetwork(list(params[:n]), list(self.activations), self.leaky_slope, biases)

    def copy(self):
        return self.with_params([p.copy() for p in self.params])

    def to_dict(self):
        out = {
            "layer_dims": self.layer_dims,
            "activations": list(self.activations),
            "leaky_slope": self.leaky_slope,
            "weights": [w.tolist() for w in self.weights],
        }
        if self.biases is not None:
            out["biases"] = [c.tolist() for c in self.biases]
        return out

    @classmethod
    def from_dict(cls, obj):
        weights = [np.asarray(w, dtype=float) for w in obj["weights"]]
        biases = [np.asarray(c, dtype=float) for c in obj["biases"]] if "biases" in obj else None
        return cls(weights, list(obj["activations"]), obj.get("leaky_slope", LEAKY_SLOPE), biases)


def mlp_init(layer_dims, activations, rng, std_scale=1.0, leaky_slope=LEAKY_SLOPE, bias_std=None):
    """He-initialise an MLP: ``V_l ~ N(0, 2 / fan_in)`` (times ``std_scale``).

    With ``bias_std=None`` the network is bias-free. Otherwise biases are
    drawn from ``N(0, bias_std^2)`` after all weights, so the weights match
    the bias-free network built from the same generator state.
    """
    if len(layer_dims) < 2:
        raise ValueError("need at least input and output dims")
    if len(activations) != len(layer_dims) - 1:
        raise ValueError("len(activations) must be len(layer_dims) - 1")
    weights = []
    for fan_in, fan_out in zip(layer_dims[:-1], layer_dims[1:]):
        std = std_scale * np.sqrt(2.0 / fan_in)
        weights.append(rng.normal(0.0, std, size=(fan_out, fan_in)))
    biases = None
    if bias_std is not None:
        biases = [rng.normal(0.0, bias_std, size=fan_out) for fan_out in layer_dims[1:]]
    return MlpNetwork(weights, list(activations), leaky_slope, biases)


def _act(tag, z, slope):
    if tag == "tanh":
        return np.tanh(z)
    if tag == "leaky_relu":
        return np.where(z > 0, z, slope * z)
    return z


def _act_grad(tag, z, y, slope):
    if tag == "tanh":
        return 1.0 - y * y
    if tag == "leaky_relu":
        return np.where(z > 0, 1.0, slope)
    return np.ones_like(z)


def _as_batch(net, x):
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    xb = x[None, :] if single else x
    if xb.ndim != 2 or xb.shape[1] != net.weights[0].shape[1]:
        raise ValueError(f"input dim {x.shape} does not match network input {net.weights[0].shape[1]}")
    return xb, single


def _pre(net, layer, y):
    z = y @ net.weights[layer].T
    return z + net.biases[layer] if net.biases is not None else z


def _forward_cache(net, xb):
    zs, ys = [], [xb]
    for layer, tag in enumerate(net.activations):
        z = _pre(net, layer, ys[-1])
        zs.append(z)
        ys.append(_act(tag, z, net.leaky_slope))
    return zs, ys


def mlp_forward(net, x):
    xb, single = _as_batch(net, x)
    out = xb
    for layer, tag in enumerate(net.activations):
        out = _act(tag, _pre(net, layer, out), net.leaky_slope)
    return out[0] if single else out


def mlp_grad_mse(net, x, target):
    """Squared-error loss ``||net(x) - target||^2`` and its parameter gradients.

    For a batch the loss and gradients are averaged over rows; the per-row
    loss stays a raw (unnormalised) squared norm.
    """
    xb, single = _as_batch(net, x)
    tb = np.asarray(target, dtype=float)
    tb = tb[None, :] if tb.ndim == 1 else tb
    if tb.shape != (xb.shape[0], net.weights[-1].shape[0]):
        raise ValueError(f"target shape {tb.shape} does not match output")
    zs, ys = _forward_cache(net, xb)
    n = xb.shape[0]
    err = ys[-1] - tb
    loss = float(np.sum(err * err) / n)
    upstream = 2.0 * err / n
    n_layers = len(net.weights)
    grads, bias_grads = [None] * n_layers, [None] * n_layers
    for layer in range(n_layers - 1, -1, -1):
        delta = upstream * _act_grad(net.activations[layer], zs[layer], ys[layer + 1], net.leaky_slope)
        grads[layer] = delta.T @ ys[layer]
        bias_grads[layer] = delta.sum(axis=0)
        upstream = delta @ net.weights[layer]
    return loss, grads + (bias_grads if net.biases is not None else [])


@dataclass
class AdamState:
    m: list
    v: list
    lr: float = 1e-2
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0

    @classmethod
    def for_network(cls, net, lr=1e-2, beta1=0.9, beta2=0.999, eps=1e-8):
        zeros = [np.zeros_like(p) for p in net.params]
        return cls([z.copy() for z in zeros], zeros, lr, beta1, beta2, eps)

    def copy(self):
        return AdamState([a.copy() for a in self.m], [a.copy() for a in self.v],
                         self.lr, self.beta1, self.beta2, self.eps, self.t)


def adam_step(net, state, grads):
    """One bias-corrected Adam update. Returns ``(new_net, new_state)``."""
    params = net.params
    if len(grads) != len(params) or any(g.shape != w.shape for g, w in zip(grads, params)):
        raise ValueError("gradient shapes do not match network parameters")
    t = state.t + 1
    b1, b2 = state.beta1, state.beta2
    new_w, new_m, new_v = [], [], []
    for w, g, m, v in zip(params, grads, state.m, state.v):
        m = b1 * m + (1.0 - b1) * g
        v = b2 * v + (1.0 - b2) * g * g
        m_hat = m / (1.0 - b1 ** t)
        v_hat = v / (1.0 - b2 ** t)
        new_w.append(w - state.lr * m_hat / (np.sqrt(v_hat) + state.eps))
        new_m.append(m)
        new_v.append(v)
    return net.with_params(new_w), AdamState(new_m, new_v, state.lr, b1, b2, state.eps, t)


def flatten_weights(net):
    return np.concatenate([w.ravel() for w in net.weights])


def unflatten_weights(vector, layer_dims, activations, leaky_slope=LEAKY_SLOPE):
    """Fill a network's weights from a flat vector, layer by layer, row-major."""
    vector = np.asarray(vector, dtype=float)
    shapes = [(o, i) for i, o in zip(layer_dims[:-1], layer_dims[1:])]
    total = sum(o * i for o, i in shapes)
    if vector.shape != (total,):
        raise ValueError(f"expected {total} weights, got {vector.shape}")
    weights, pos = [], 0
    for shape in shapes:
        n = shape[0] * shape[1]
        weights.append(vector[pos:pos + n].reshape(shape).copy())
        pos += n
    return MlpNetwork(weights, list(activations), leaky_slope)
