"""Minimal dense feed-forward network engine on float64 numpy: forward pass
with cached activations, exact reverse-mode gradients (including the gradient
with respect to the input, needed to chain through autoregressive rollouts),
Adam, and a cross-entropy loss.

Checkpoint format ("heatplan-net", version 1): a JSON object with
  {"format": "heatplan-net", "version": 1,
   "layers": [{"in": int, "out": int, "activation": str | [str, ...]}, ...],
   "params": [{"w": [[...]], "b": [...]}, ...]}
Weight matrices are stored row-major with shape (in, out); JSON float
round-tripping preserves float64 bit patterns.
"""

import json
from dataclasses import dataclass

import numpy as np

_ELEMENTWISE = ("relu", "tanh", "identity")


@dataclass(frozen=True)
class LayerSpec:
    """One dense layer. `activation` is a name, or a tuple of names assigning
    one elementwise activation per output unit (only valid on the last layer,
    as is softmax)."""

    in_dim: int
    out_dim: int
    activation: object = "identity"

    def __post_init__(self):
        if self.in_dim < 1 or self.out_dim < 1:
            raise ValueError("layer dimensions must be >= 1")
        if isinstance(self.activation, (tuple, list)):
            object.__setattr__(self, "activation", tuple(self.activation))
            if len(self.activation) != self.out_dim:
                raise ValueError("per-unit activation list must match out_dim")
            for name in self.activation:
                if name not in _ELEMENTWISE:
                    raise ValueError(f"unknown per-unit activation {name!r}")
        elif self.activation not in _ELEMENTWISE + ("softmax",):
            raise ValueError(f"unknown activation {self.activation!r}")


def _apply(name, pre):
    if name == "relu":
        return np.maximum(pre, 0.0)
    if name == "tanh":
        return np.tanh(pre)
    if name == "identity":
        return pre
    raise ValueError(name)


def _elementwise_grad(name, post, grad):
    if name == "relu":
        return grad * (post > 0.0)
    if name == "tanh":
        return grad * (1.0 - post * post)
    if name == "identity":
        return grad
    raise ValueError(name)


class Network:
    """A chain of dense layers. Parameters are plain float64 arrays; frozen
    networks are safe to read from any number of threads."""

    def __init__(self, specs: list[LayerSpec], weights: list[np.ndarray],
                 biases: list[np.ndarray]):
        if len(specs) != len(weights) or len(specs) != len(biases):
            raise ValueError("specs/weights/biases length mismatch")
        for i, spec in enumerate(specs):
            if weights[i].shape != (spec.in_dim, spec.out_dim):
                raise ValueError(f"layer {i} weight shape {weights[i].shape} "
                                 f"does not match spec {spec}")
            if biases[i].shape != (spec.out_dim,):
                raise ValueError(f"layer {i} bias shape mismatch")
            if spec.activation == "softmax" or isinstance(spec.activation, tuple):
                if i != len(specs) - 1:
                    raise ValueError("softmax/per-unit activations only on the final layer")
            if i > 0 and spec.in_dim != specs[i - 1].out_dim:
                raise ValueError(f"layer {i} input dim does not chain")
        self.specs = list(specs)
        self.weights = weights
        self.biases = biases

    @property
    def in_dim(self) -> int:
        return self.specs[0].in_dim

    @property
    def out_dim(self) -> int:
        return self.specs[-1].out_dim

    def params(self) -> list[np.ndarray]:
        """Flat view of all parameter arrays (weights then bias per layer)."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend((w, b))
        return out

    def copy(self) -> "Network":
        return Network(self.specs, [w.copy() for w in self.weights],
                       [b.copy() for b in self.biases])

    def forward(self, x: np.ndarray):
        """Run the network. Accepts a single vector or a (batch, in_dim) array;
        returns (output, cache) with the cache feeding `backward`."""
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        act = x[None, :] if single else x
        if act.shape[1] != self.in_dim:
            raise ValueError(f"input dim {act.shape[1]} != {self.in_dim}")
        cache = []
        for spec, w, b in zip(self.specs, self.weights, self.biases):
            pre = act @ w + b
            if spec.activation == "softmax":
                shifted = pre - pre.max(axis=1, keepdims=True)
                expd = np.exp(shifted)
                post = expd / expd.sum(axis=1, keepdims=True)
            elif isinstance(spec.activation, tuple):
                post = np.empty_like(pre)
                for j, name in enumerate(spec.activation):
                    post[:, j] = _apply(name, pre[:, j])
            else:
                post = _apply(spec.activation, pre)
            cache.append((act, post))
            act = post
        out = act[0] if single else act
        return out, (cache, single)

    def backward(self, cache, grad_out: np.ndarray):
        """Backpropagate `grad_out` (shaped like the forward output) through a
        cached forward pass. Returns ([(dW, db), ...], grad_input)."""
        layer_cache, single = cache
        if len(layer_cache) != len(self.specs):
            raise ValueError("cache does not match network")
        grad = np.asarray(grad_out, dtype=float)
        if single:
            grad = grad[None, :]
        grads = [None] * len(self.specs)
        for i in range(len(self.specs) - 1, -1, -1):
            spec = self.specs[i]
            x_in, post = layer_cache[i]
            if grad.shape != post.shape:
                raise ValueError("upstream gradient shape mismatch")
            if spec.activation == "softmax":
                inner = (grad * post).sum(axis=1, keepdims=True)
                d_pre = post * (grad - inner)
            elif isinstance(spec.activation, tuple):
                d_pre = np.empty_like(grad)
                for j, name in enumerate(spec.activation):
                    d_pre[:, j] = _elementwise_grad(name, post[:, j], grad[:, j])
            else:
                d_pre = _elementwise_grad(spec.activation, post, grad)
            grads[i] = (x_in.T @ d_pre, d_pre.sum(axis=0))
            grad = d_pre @ self.weights[i].T
        return grads, (grad[0] if single else grad)


def init_network(specs: list[LayerSpec], rng: np.random.Generator) -> Network:
    """Glorot-uniform initialization: weights in +-sqrt(6 / (fan_in + fan_out)),
    zero biases."""
    weights, biases = [], []
    for spec in specs:
        limit = np.sqrt(6.0 / (spec.in_dim + spec.out_dim))
        weights.append(rng.uniform(-limit, limit, size=(spec.in_dim, spec.out_dim)))
        biases.append(np.zeros(spec.out_dim))
    return Network(specs, weights, biases)


class Adam:
    """Adam with bias correction, mutating parameter arrays in place."""

    def __init__(self, lr: float = 1e-3, beta1: float = 0.9, beta2: float = 0.999,
                 eps: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = None
        self.v = None

    def step(self, params: list[np.ndarray], grads: list[np.ndarray]) -> None:
        if self.m is None:
            self.m = [np.zeros_like(p) for p in params]
            self.v = [np.zeros_like(p) for p in params]
        if len(params) != len(self.m) or len(params) != len(grads):
            raise ValueError("params/grads do not match optimizer state")
        self.t += 1
        correct1 = 1.0 - self.beta1 ** self.t
        correct2 = 1.0 - self.beta2 ** self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            if g.shape != p.shape:
                raise ValueError("gradient shape mismatch")
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            p -= self.lr * (m / correct1) / (np.sqrt(v / correct2) + self.eps)


def cross_entropy_loss(pred: np.ndarray, target: np.ndarray,
                       eps_floor: float = 1e-12):
    """Cross entropy between predicted and target distributions.

    Both arguments must be valid probability vectors (rows summing to 1
    within 1e-6, no negative entries). Returns (loss, grad w.r.t. pred),
    averaged over rows for batched input.
    """
    pred = np.asarray(pred, dtype=float)
    target = np.asarray(target, dtype=float)
    if pred.shape != target.shape:
        raise ValueError("pred/target shape mismatch")
    single = pred.ndim == 1
    p = pred[None, :] if single else pred
    t = target[None, :] if single else target
    if np.any(p < 0) or np.any(t < 0):
        raise ValueError("probabilities must be nonnegative")
    if np.any(np.abs(p.sum(axis=1) - 1.0) > 1e-6) or np.any(np.abs(t.sum(axis=1) - 1.0) > 1e-6):
        raise ValueError("probability rows must sum to 1")
    n_rows = p.shape[0]
    loss = float(-(t * np.log(p + eps_floor)).sum() / n_rows)
    grad = -(t / (p + eps_floor)) / n_rows
    return loss, (grad[0] if single else grad)


def save_network(net: Network, path) -> None:
    blob = network_to_dict(net)
    with open(path, "w") as fh:
        json.dump(blob, fh)


def load_network(path) -> Network:
    with open(path) as fh:
        return network_from_dict(json.load(fh))


def network_to_dict(net: Network) -> dict:
    return {
        "format": "heatplan-net",
        "version": 1,
        "layers": [{"in": s.in_dim, "out": s.out_dim,
                    "activation": list(s.activation) if isinstance(s.activation, tuple)
                    else s.activation} for s in net.specs],
        "params": [{"w": w.tolist(), "b": b.tolist()}
                   for w, b in zip(net.weights, net.biases)],
    }


def network_from_dict(blob: dict) -> Network:
    if blob.get("format") != "heatplan-net" or blob.get("version") != 1:
        raise ValueError("unsupported checkpoint format")
    specs = [LayerSpec(layer["in"], layer["out"],
                       tuple(layer["activation"]) if isinstance(layer["activation"], list)
                       else layer["activation"]) for layer in blob["layers"]]
    weights = [np.asarray(p["w"], dtype=float) for p in blob["params"]]
    biases = [np.asarray(p["b"], dtype=float) for p in blob["params"]]
    return Network(specs, weights, biases)
