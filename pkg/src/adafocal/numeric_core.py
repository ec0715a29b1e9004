"""Small dense MLP classifier, softmax, backprop and SGD with momentum.

Everything works in float64. Weight matrices are stored as ``(fan_in, fan_out)``
so a batch ``X`` of shape ``(B, d)`` maps to ``X @ W + b``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import NumericError, ShapeError

ACTIVATIONS = ("relu",)


@dataclass
class MlpModel:
    layer_dims: list[int]
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    activation: str = "relu"

    def __post_init__(self):
        if len(self.layer_dims) < 2:
            raise ShapeError("need at least input and output dims")
        if self.layer_dims[-1] < 2:
            raise ShapeError(f"final dim must be >= 2 classes, got {self.layer_dims[-1]}")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        n_layers = len(self.layer_dims) - 1
        if len(self.weights) != n_layers or len(self.biases) != n_layers:
            raise ShapeError("number of weight/bias arrays does not match layer_dims")
        self.weights = [np.asarray(w, dtype=np.float64) for w in self.weights]
        self.biases = [np.asarray(b, dtype=np.float64) for b in self.biases]
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            expected = (self.layer_dims[i], self.layer_dims[i + 1])
            if w.shape != expected:
                raise ShapeError(f"layer {i}: weight shape {w.shape}, expected {expected}")
            if b.shape != (expected[1],):
                raise ShapeError(f"layer {i}: bias shape {b.shape}, expected {(expected[1],)}")

    @property
    def num_classes(self) -> int:
        return self.layer_dims[-1]

    def parameters(self) -> list[np.ndarray]:
        return [*self.weights, *self.biases]

    def copy(self) -> "MlpModel":
        return MlpModel(
            list(self.layer_dims),
            [w.copy() for w in self.weights],
            [b.copy() for b in self.biases],
            self.activation,
        )


@dataclass
class Gradients:
    weights: list[np.ndarray]
    biases: list[np.ndarray]

    def parameters(self) -> list[np.ndarray]:
        return [*self.weights, *self.biases]


@dataclass
class OptimizerState:
    learning_rate: float
    momentum: float
    velocities: list[np.ndarray] = field(default_factory=list)

    def __post_init__(self):
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError(f"momentum must be in [0, 1), got {self.momentum}")
        if not self.learning_rate > 0:
            raise ValueError(f"learning_rate must be positive, got {self.learning_rate}")


def init_mlp(layer_dims: list[int], seed: int = 0) -> MlpModel:
    """Glorot-uniform weights, zero biases, drawn from a seeded generator."""
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(layer_dims[:-1], layer_dims[1:]):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return MlpModel(list(layer_dims), weights, biases)


def init_optimizer(model: MlpModel, learning_rate: float, momentum: float = 0.9) -> OptimizerState:
    return OptimizerState(
        learning_rate, momentum, [np.zeros_like(p) for p in model.parameters()]
    )


def _check_inputs(model: MlpModel, inputs) -> np.ndarray:
    x = np.asarray(inputs, dtype=np.float64)
    if x.ndim == 1:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != model.layer_dims[0]:
        raise ShapeError(f"inputs of shape {x.shape} do not match input dim {model.layer_dims[0]}")
    return x


def forward_trace(model: MlpModel, inputs) -> list[np.ndarray]:
    """Run the network and keep every layer's input for backprop.

    Returns ``[a_0, a_1, ..., a_L]`` where ``a_0`` is the input batch,
    ``a_l`` the post-activation output of layer ``l`` and ``a_L`` the logits.
    """
    x = _check_inputs(model, inputs)
    acts = [x]
    last = len(model.weights) - 1
    for i, (w, b) in enumerate(zip(model.weights, model.biases)):
        z = acts[-1] @ w + b
        if i < last:
            z = np.maximum(z, 0.0)
        acts.append(z)
    if not np.all(np.isfinite(acts[-1])):
        raise NumericError("non-finite logits")
    return acts


def forward(model: MlpModel, inputs) -> np.ndarray:
    """Logits of shape ``(batch, K)``."""
    return forward_trace(model, inputs)[-1]


def softmax(logits) -> np.ndarray:
    """Row-wise softmax over the last axis with max-subtraction."""
    z = np.asarray(logits, dtype=np.float64)
    if z.shape[-1] < 2:
        raise ShapeError("softmax needs at least two classes")
    if not np.all(np.isfinite(z)):
        raise NumericError("softmax input contains non-finite values")
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def log_softmax(logits) -> np.ndarray:
    z = np.asarray(logits, dtype=np.float64)
    if not np.all(np.isfinite(z)):
        raise NumericError("log_softmax input contains non-finite values")
    z = z - z.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def logit_grad_from_prob_grad(probs: np.ndarray, dprobs: np.ndarray) -> np.ndarray:
    """Chain a gradient w.r.t. softmax outputs back to the logits.

    For ``p = softmax(z)``: ``dL/dz_j = p_j * (g_j - sum_k g_k p_k)``.
    """
    probs = np.asarray(probs, dtype=np.float64)
    dprobs = np.asarray(dprobs, dtype=np.float64)
    if probs.shape != dprobs.shape:
        raise ShapeError(f"probs {probs.shape} vs dprobs {dprobs.shape}")
    inner = np.sum(dprobs * probs, axis=-1, keepdims=True)
    return probs * (dprobs - inner)


def true_prob_grad_to_logit_grad(probs: np.ndarray, dloss_dtrue_prob, true_labels) -> np.ndarray:
    """Logit gradient for a loss that depends only on ``p[y]``.

    ``dL/dz = g * p_y * (onehot(y) - p)``.
    """
    probs = np.asarray(probs, dtype=np.float64)
    labels = np.asarray(true_labels, dtype=np.intp)
    g = np.asarray(dloss_dtrue_prob, dtype=np.float64)
    if probs.ndim != 2 or labels.shape != (probs.shape[0],) or g.shape != labels.shape:
        raise ShapeError("probs must be (B, K) with one label and one derivative per row")
    rows = np.arange(probs.shape[0])
    p_true = probs[rows, labels]
    dz = -probs * (g * p_true)[:, None]
    dz[rows, labels] += g * p_true
    return dz


def backward(model: MlpModel, trace: list[np.ndarray], dlogits) -> Gradients:
    """Backprop a logit gradient through a trace from :func:`forward_trace`."""
    delta = np.asarray(dlogits, dtype=np.float64)
    if delta.shape != trace[-1].shape:
        raise ShapeError(f"dlogits {delta.shape} vs logits {trace[-1].shape}")
    n_layers = len(model.weights)
    gw: list[np.ndarray] = [None] * n_layers  # type: ignore[list-item]
    gb: list[np.ndarray] = [None] * n_layers  # type: ignore[list-item]
    for i in range(n_layers - 1, -1, -1):
        a_in = trace[i]
        gw[i] = a_in.T @ delta
        gb[i] = delta.sum(axis=0)
        if i > 0:
            delta = (delta @ model.weights[i].T) * (trace[i] > 0.0)
    return Gradients(gw, gb)


def backward_from_prob_grad(
    model: MlpModel, inputs, probs, dloss_dtrue_prob, true_labels
) -> Gradients:
    """Parameter gradients of ``sum_n L_n(p_n)`` given ``dL_n/dp_n`` per sample.

    ``probs`` must be the softmax of ``forward(model, inputs)``. Callers that
    average over the batch pass derivatives already divided by the batch size.
    """
    trace = forward_trace(model, inputs)
    probs = np.asarray(probs, dtype=np.float64)
    if probs.shape != trace[-1].shape:
        raise ShapeError(f"probs {probs.shape} vs logits {trace[-1].shape}")
    dz = true_prob_grad_to_logit_grad(probs, dloss_dtrue_prob, true_labels)
    return backward(model, trace, dz)


def sgd_momentum_step(
    model: MlpModel, grads: Gradients, state: OptimizerState
) -> tuple[MlpModel, OptimizerState]:
    """Classical momentum: ``v <- mu*v + g``; ``theta <- theta - lr*v``."""
    params = model.parameters()
    gparams = grads.parameters()
    velocities = state.velocities or [np.zeros_like(p) for p in params]
    if len(gparams) != len(params) or len(velocities) != len(params):
        raise ShapeError("gradient/velocity count does not match model parameters")
    new_params, new_vel = [], []
    for p, g, v in zip(params, gparams, velocities):
        if g.shape != p.shape or v.shape != p.shape:
            raise ShapeError(f"gradient shape {g.shape} vs parameter {p.shape}")
        v = state.momentum * v + g
        new_vel.append(v)
        new_params.append(p - state.learning_rate * v)
    n = len(model.weights)
    updated = MlpModel(list(model.layer_dims), new_params[:n], new_params[n:], model.activation)
    return updated, OptimizerState(state.learning_rate, state.momentum, new_vel)
