"""Feed-forward networks in plain numpy, SGD on squared error, and a replay pool.

Hidden layers use ReLU, the output layer is linear.  The same network class
serves as the cardinality regressor (one output, log-cardinality target) and
as the action-value network (one output per action, TD target on the taken
action only).
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass
from typing import Any, Sequence

import numpy as np


@dataclass
class Model:
    dims: tuple[int, ...]
    weights: list[np.ndarray]  # weights[i] has shape (dims[i], dims[i + 1])
    biases: list[np.ndarray]

    @property
    def n_params(self) -> int:
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases))

    def params(self) -> list[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    def copy(self) -> "Model":
        return Model(self.dims, [w.copy() for w in self.weights], [b.copy() for b in self.biases])

    def flat(self) -> np.ndarray:
        return np.concatenate([p.ravel() for p in self.params()])


def init_model(dims: Sequence[int], seed: int) -> Model:
    """Uniform init in +-sqrt(6 / (fan_in + fan_out)), zero biases."""
    dims = tuple(int(d) for d in dims)
    if len(dims) < 2 or any(d < 1 for d in dims):
        raise ValueError(f"need at least two positive layer sizes, got {dims}")
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        limit = math.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return Model(dims, weights, biases)


def _forward(model: Model, x: np.ndarray) -> tuple[np.ndarray, list[np.ndarray]]:
    acts = [x]
    h = x
    last = len(model.weights) - 1
    for i, (w, b) in enumerate(zip(model.weights, model.biases)):
        z = h @ w + b
        h = z if i == last else np.maximum(z, 0.0)
        acts.append(h)
    return h, acts


def _as_batch(model: Model, features) -> tuple[np.ndarray, bool]:
    x = np.asarray(features, dtype=np.float64)
    single = x.ndim == 1
    if single:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != model.dims[0]:
        raise ValueError(f"expected features of width {model.dims[0]}, got shape {np.shape(features)}")
    return x, single


def predict(model: Model, features) -> np.ndarray:
    """Forward pass; a single feature vector gives a 1-D output, a batch gives 2-D."""
    x, single = _as_batch(model, features)
    y, _ = _forward(model, x)
    return y[0] if single else y


def _residual(y: np.ndarray, targets, actions) -> tuple[np.ndarray, np.ndarray]:
    """Per-element error and a mask of the outputs that enter the loss."""
    t = np.asarray(targets, dtype=np.float64)
    if actions is None:
        t = t.reshape(y.shape)
        return y - t, np.ones_like(y)
    a = np.asarray(actions, dtype=np.int64)
    mask = np.zeros_like(y)
    mask[np.arange(len(a)), a] = 1.0
    full = np.zeros_like(y)
    full[np.arange(len(a)), a] = t.reshape(-1)
    return (y - full) * mask, mask


def loss_and_grads(model: Model, features, targets, actions=None):
    """Mean squared error and its gradients.

    Without ``actions`` the mean runs over every output; with ``actions`` only
    the chosen output of each row counts and the mean runs over rows.
    """
    x, _ = _as_batch(model, features)
    y, acts = _forward(model, x)
    r, mask = _residual(y, targets, actions)
    denom = mask.sum()
    loss = float((r**2).sum() / denom)
    delta = 2.0 * r / denom
    gw = [None] * len(model.weights)
    gb = [None] * len(model.biases)
    for i in range(len(model.weights) - 1, -1, -1):
        gw[i] = acts[i].T @ delta
        gb[i] = delta.sum(axis=0)
        if i:
            delta = (delta @ model.weights[i].T) * (acts[i] > 0)
    return loss, gw, gb


def train_batch(model: Model, features, targets, learning_rate: float, actions=None) -> float:
    """One SGD step on the batch; returns the loss before the step.

    Raises ``FloatingPointError`` on a nonfinite loss or gradient and leaves
    the parameters untouched.
    """
    x = np.asarray(features, dtype=np.float64)
    if x.size == 0 or (x.ndim == 2 and x.shape[0] == 0):
        raise ValueError("empty batch")
    loss, gw, gb = loss_and_grads(model, x, targets, actions)
    if not math.isfinite(loss) or not all(np.isfinite(g).all() for g in gw + gb):
        raise FloatingPointError(f"nonfinite loss {loss}")
    if learning_rate:
        for w, g in zip(model.weights, gw):
            w -= learning_rate * g
        for b, g in zip(model.biases, gb):
            b -= learning_rate * g
    return loss


def gradient_check(model: Model, features, targets, h: float = 1e-5, actions=None) -> float:
    """Worst relative error between backprop and central differences.

    Relative error is ``|a - n| / max(|a| + |n|, 1e-6)``; the floor keeps
    parameters with vanishing gradient from reporting pure roundoff.
    """
    if not h > 0:
        raise ValueError("h must be positive")
    _, gw, gb = loss_and_grads(model, features, targets, actions)
    analytic = []
    for g_w, g_b in zip(gw, gb):
        analytic += [g_w, g_b]
    probe = model.copy()
    worst = 0.0
    for p, g in zip(probe.params(), analytic):
        flat = p.reshape(-1)
        gflat = g.reshape(-1)
        for j in range(flat.size):
            orig = flat[j]
            flat[j] = orig + h
            up = loss_and_grads(probe, features, targets, actions)[0]
            flat[j] = orig - h
            down = loss_and_grads(probe, features, targets, actions)[0]
            flat[j] = orig
            num = (up - down) / (2.0 * h)
            err = abs(gflat[j] - num) / max(abs(gflat[j]) + abs(num), 1e-6)
            worst = max(worst, err)
    return worst


# ---------------------------------------------------------------------------
# checkpoints: first line ``dims a b c``, then one float.hex per parameter


def save_model(model: Model, path) -> None:
    with open(path, "w") as fh:
        fh.write("dims " + " ".join(str(d) for d in model.dims) + "\n")
        for v in model.flat().tolist():
            fh.write(float(v).hex() + "\n")


def load_model(path) -> Model:
    with open(path) as fh:
        header = fh.readline().split()
        if not header or header[0] != "dims":
            raise ValueError("checkpoint missing dims header")
        dims = tuple(int(d) for d in header[1:])
        values = np.array([float.fromhex(line.strip()) for line in fh if line.strip()])
    model = init_model(dims, 0)
    if values.size != model.n_params:
        raise ValueError(f"checkpoint has {values.size} values, dims need {model.n_params}")
    pos = 0
    for p in model.params():
        p.reshape(-1)[:] = values[pos : pos + p.size]
        pos += p.size
    return model


# ---------------------------------------------------------------------------
# replay


@dataclass(frozen=True)
class Experience:
    s: np.ndarray
    a: int
    r: float
    s_next: np.ndarray


class ExperiencePool:
    """Fixed-capacity FIFO buffer with uniform sampling with replacement."""

    def __init__(self, capacity: int = 10_000):
        if capacity < 1:
            raise ValueError("capacity must be positive")
        self.capacity = capacity
        self._items: deque = deque(maxlen=capacity)

    def __len__(self):
        return len(self._items)

    def __iter__(self):
        return iter(self._items)

    def push(self, entry: Any) -> None:
        self._items.append(entry)

    def sample(self, k: int, rng) -> list:
        if not self._items:
            raise IndexError("cannot sample from an empty pool")
        rng = np.random.default_rng(rng)
        picks = rng.integers(len(self._items), size=k)
        return [self._items[int(i)] for i in picks]


def pool_push(pool: ExperiencePool, entry: Any) -> None:
    pool.push(entry)


def pool_sample(pool: ExperiencePool, k: int, seed) -> list:
    return pool.sample(k, seed)
