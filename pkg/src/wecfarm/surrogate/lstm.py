"""A small numpy LSTM for sequence-to-one regression, with BPTT and Adam."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from ..errors import InvalidArgument, TrainingFailure

INPUT_DIM = 2
MODEL_FORMAT = "wecfarm-lstm/1"


@dataclass(frozen=True)
class HyperParams:
    """Training hyper-parameters; the integer fields are rounded on construction."""

    minibatch: int = 32
    learning_rate: float = 0.01
    epochs: int = 200
    layers: int = 1
    hidden: int = 32

    BOUNDS = {
        "minibatch": (5, 100),
        "learning_rate": (1e-4, 1e-1),
        "epochs": (50, 600),
        "layers": (1, 2),
        "hidden": (10, 150),
    }

    def __post_init__(self):
        for name, (lo, hi) in self.BOUNDS.items():
            v = getattr(self, name)
            if not lo <= v <= hi:
                raise InvalidArgument(f"{name}={v} outside [{lo}, {hi}]")
        for name in ("minibatch", "epochs", "layers", "hidden"):
            if int(getattr(self, name)) != getattr(self, name):
                raise InvalidArgument(f"{name} must be an integer")
            object.__setattr__(self, name, int(getattr(self, name)))
        object.__setattr__(self, "learning_rate", float(self.learning_rate))


@dataclass(frozen=True)
class Normalization:
    """Coordinates are divided by ``side``; targets are standardized."""

    side: float
    target_mean: float = 0.0
    target_std: float = 1.0

    def inputs(self, x):
        return np.asarray(x, dtype=float) / self.side

    def targets(self, y):
        return (np.asarray(y, dtype=float) - self.target_mean) / self.target_std

    def denormalize(self, z):
        return np.asarray(z, dtype=float) * self.target_std + self.target_mean

    def positions(self, u):
        return np.asarray(u, dtype=float) * self.side


@dataclass
class LSTMModel:
    """Stacked LSTM with a linear head on the last hidden state.

    ``weights[l]`` has shape ``(in_l + hidden, 4 * hidden)`` with gate blocks
    ordered input, forget, cell, output; ``biases[l]`` has ``4 * hidden``.
    The head bias is a 1-element array so optimizers can update it in place.
    """

    weights: list[np.ndarray]
    biases: list[np.ndarray]
    head_w: np.ndarray
    head_b: np.ndarray
    norm: Normalization
    validation_r: float = math.nan
    hyper: HyperParams | None = None
    extras: dict = field(default_factory=dict, compare=False)

    @property
    def layers(self) -> int:
        return len(self.weights)

    @property
    def hidden(self) -> int:
        return self.head_w.shape[0]

    def shape_header(self) -> dict:
        return {"input": INPUT_DIM, "layers": self.layers, "hidden": self.hidden}

    def params(self) -> list[np.ndarray]:
        """All trainable arrays, in gradient order."""
        return [*self.weights, *self.biases, self.head_w, self.head_b]

    def __post_init__(self):
        self.head_b = np.asarray(self.head_b, dtype=float).reshape(1)
        h = self.head_w.shape[0]
        for l, (w, b) in enumerate(zip(self.weights, self.biases)):
            d = INPUT_DIM if l == 0 else h
            if w.shape != (d + h, 4 * h) or b.shape != (4 * h,):
                raise InvalidArgument(f"layer {l} weights have shape {w.shape}, expected {(d + h, 4 * h)}")

    def copy(self) -> "LSTMModel":
        return LSTMModel(
            [w.copy() for w in self.weights], [b.copy() for b in self.biases], self.head_w.copy(),
            self.head_b.copy(), self.norm, self.validation_r, self.hyper, dict(self.extras),
        )

    def predict(self, sequences) -> np.ndarray:
        """Power in watts for a batch ``(B, T, 2)`` of raw position sequences."""
        x = np.asarray(sequences, dtype=float)
        if x.ndim == 2:
            x = x[None]
        if x.ndim != 3 or x.shape[2] != INPUT_DIM or x.shape[1] < 1:
            raise InvalidArgument(f"sequences must have shape (batch, T>=1, 2), got {x.shape}")
        z, _ = forward(self, self.norm.inputs(x))
        return self.norm.denormalize(z)


def init_model(layers: int, hidden: int, norm: Normalization, rng: np.random.Generator) -> LSTMModel:
    """Uniform weights in +-1/sqrt(hidden); forget-gate bias 1, other biases 0."""
    bound = 1.0 / math.sqrt(hidden)
    weights, biases = [], []
    for l in range(layers):
        d = INPUT_DIM if l == 0 else hidden
        weights.append(rng.uniform(-bound, bound, (d + hidden, 4 * hidden)))
        b = np.zeros(4 * hidden)
        b[hidden:2 * hidden] = 1.0
        biases.append(b)
    head_w = rng.uniform(-bound, bound, hidden)
    return LSTMModel(weights, biases, head_w, np.zeros(1), norm)


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def forward(model: LSTMModel, x: np.ndarray):
    """Normalized output ``(B,)`` and the per-step caches needed by :func:`backward`."""
    batch, steps, _ = x.shape
    h_dim = model.hidden
    caches = []
    seq = x
    for w, b in zip(model.weights, model.biases):
        d_in = w.shape[0] - h_dim
        w_h = w[d_in:]
        # input projections for all timesteps at once
        zx = seq @ w[:d_in] + b
        h = np.zeros((batch, h_dim))
        c = np.zeros((batch, h_dim))
        hs = np.empty((steps + 1, batch, h_dim))
        hs[0] = h
        gates = np.empty((steps, batch, 4 * h_dim))
        cs = np.empty((steps + 1, batch, h_dim))
        cs[0] = c
        tcs = np.empty((steps, batch, h_dim))
        for t in range(steps):
            z = zx[:, t] + h @ w_h
            a = _sigmoid(z)
            a[:, 2 * h_dim:3 * h_dim] = np.tanh(z[:, 2 * h_dim:3 * h_dim])
            c = a[:, h_dim:2 * h_dim] * c + a[:, :h_dim] * a[:, 2 * h_dim:3 * h_dim]
            tc = np.tanh(c)
            h = a[:, 3 * h_dim:] * tc
            gates[t], cs[t + 1], tcs[t], hs[t + 1] = a, c, tc, h
        caches.append((seq, hs, gates, cs, tcs))
        seq = hs[1:].transpose(1, 0, 2)
    h_last = seq[:, -1]
    y = h_last @ model.head_w + model.head_b[0]
    return y, (caches, h_last)


def backward(model: LSTMModel, cache, dy: np.ndarray) -> list[np.ndarray]:
    """Gradients of ``sum(dy * y)`` for every array in :meth:`LSTMModel.params` order."""
    caches, h_last = cache
    h_dim = model.hidden
    grads_w, grads_b = [None] * model.layers, [None] * model.layers
    g_head_w = h_last.T @ dy
    g_head_b = np.array([dy.sum()])

    batch = dy.shape[0]
    # gradient arriving at each timestep's hidden output, shape (T, B, H)
    d_out = None
    for l in reversed(range(model.layers)):
        w = model.weights[l]
        seq, hs, gates, cs, tcs = caches[l]
        steps = gates.shape[0]
        d_in = w.shape[0] - h_dim
        w_h_t = w[d_in:].T
        dzs = np.empty((steps, batch, 4 * h_dim))
        dh_next = np.zeros((batch, h_dim))
        dc_next = np.zeros((batch, h_dim))
        for t in reversed(range(steps)):
            a, tc = gates[t], tcs[t]
            i, f, g, o = a[:, :h_dim], a[:, h_dim:2 * h_dim], a[:, 2 * h_dim:3 * h_dim], a[:, 3 * h_dim:]
            dh = dh_next
            if d_out is not None:
                dh = dh + d_out[t]
            elif t == steps - 1:
                dh = dh + np.outer(dy, model.head_w)
            dc = dh * o * (1.0 - tc * tc) + dc_next
            dz = dzs[t]
            dz[:, :h_dim] = dc * g * i * (1.0 - i)
            dz[:, h_dim:2 * h_dim] = dc * cs[t] * f * (1.0 - f)
            dz[:, 2 * h_dim:3 * h_dim] = dc * i * (1.0 - g * g)
            dz[:, 3 * h_dim:] = dh * tc * o * (1.0 - o)
            dc_next = dc * f
            dh_next = dz @ w_h_t
        flat_dz = dzs.reshape(steps * batch, 4 * h_dim)
        x_flat = seq.transpose(1, 0, 2).reshape(steps * batch, d_in)
        h_flat = hs[:-1].reshape(steps * batch, h_dim)
        grads_w[l] = np.vstack([x_flat.T @ flat_dz, h_flat.T @ flat_dz])
        grads_b[l] = flat_dz.sum(axis=0)
        if l > 0:
            d_out = dzs @ w[:d_in].T
    return [*grads_w, *grads_b, g_head_w, g_head_b]


def loss_and_grads(model: LSTMModel, x: np.ndarray, y: np.ndarray):
    """Mean squared error on normalized data and its gradients."""
    pred, cache = forward(model, x)
    err = pred - y
    loss = float(np.mean(err * err))
    return loss, backward(model, cache, 2.0 * err / err.size)


class Adam:
    def __init__(self, params: list[np.ndarray], lr: float, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = params
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, grads: list[np.ndarray]):
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def train(sequences, targets, hyper: HyperParams, seed: int, side: float):
    """Fit a fresh model on raw sequences ``(n, T, 2)`` and targets in watts.

    Returns ``(model, losses)`` where ``losses[e]`` is the mean minibatch MSE
    of epoch ``e`` in standardized units.
    """
    x_raw = np.asarray(sequences, dtype=float)
    y_raw = np.asarray(targets, dtype=float)
    if x_raw.ndim != 3 or x_raw.shape[0] == 0 or x_raw.shape[0] != y_raw.shape[0]:
        raise InvalidArgument("need a nonempty (n, T, 2) sequence array with one target each")
    std = float(np.std(y_raw))
    norm = Normalization(side, float(np.mean(y_raw)), std if std > 0 else 1.0)
    x, y = norm.inputs(x_raw), norm.targets(y_raw)

    rng = np.random.default_rng(seed)
    model = init_model(hyper.layers, hyper.hidden, norm, rng)
    opt = Adam(model.params(), hyper.learning_rate)
    n = x.shape[0]
    mb = min(hyper.minibatch, n)
    losses = []
    for epoch in range(hyper.epochs):
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, mb):
            idx = order[start:start + mb]
            loss, grads = loss_and_grads(model, x[idx], y[idx])
            if not math.isfinite(loss):
                raise TrainingFailure(epoch, f"non-finite loss {loss}")
            opt.step(grads)
            total += loss * idx.size
        losses.append(total / n)
    model.hyper = hyper
    return model, losses


def save_model(model: LSTMModel, path) -> Path:
    doc = {
        "format": MODEL_FORMAT,
        "shape": model.shape_header(),
        "weights": [w.tolist() for w in model.weights],
        "biases": [b.tolist() for b in model.biases],
        "head_w": model.head_w.tolist(),
        "head_b": float(model.head_b[0]),
        "norm": {"side": model.norm.side, "target_mean": model.norm.target_mean, "target_std": model.norm.target_std},
        "validation_r": None if math.isnan(model.validation_r) else model.validation_r,
        "hyper": None if model.hyper is None else {k: getattr(model.hyper, k) for k in HyperParams.BOUNDS},
    }
    path = Path(path)
    path.write_text(json.dumps(doc))
    return path


def load_model(path, expect_shape: dict | None = None) -> LSTMModel:
    """Load a saved model, refusing files whose arrays disagree with their shape header."""
    doc = json.loads(Path(path).read_text())
    if doc.get("format") != MODEL_FORMAT:
        raise InvalidArgument(f"unknown model format {doc.get('format')!r}")
    shape = doc["shape"]
    if expect_shape is not None and shape != expect_shape:
        raise InvalidArgument(f"model shape {shape} does not match expected {expect_shape}")
    h, layers = int(shape["hidden"]), int(shape["layers"])
    weights = [np.array(w, dtype=float) for w in doc["weights"]]
    biases = [np.array(b, dtype=float) for b in doc["biases"]]
    head_w = np.array(doc["head_w"], dtype=float)
    if shape.get("input") != INPUT_DIM or len(weights) != layers or len(biases) != layers or head_w.shape != (h,):
        raise InvalidArgument(f"weight arrays do not match shape header {shape}")
    for l, (w, b) in enumerate(zip(weights, biases)):
        d = INPUT_DIM if l == 0 else h
        if w.shape != (d + h, 4 * h) or b.shape != (4 * h,):
            raise InvalidArgument(f"layer {l} arrays do not match shape header {shape}")
    r = doc.get("validation_r")
    hyper = doc.get("hyper")
    return LSTMModel(
        weights, biases, head_w, np.array([float(doc["head_b"])]), Normalization(**doc["norm"]),
        math.nan if r is None else float(r), None if hyper is None else HyperParams(**hyper),
    )


def with_validation(model: LSTMModel, r: float) -> LSTMModel:
    return replace(model, validation_r=float(r))
