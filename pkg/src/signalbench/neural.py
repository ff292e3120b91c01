"""Small dense networks in float64 numpy: forward, backprop, Adam, losses, checkpoints.

Checkpoint layout (plain text, one token group per line)::

    signalbench-dense 1
    meta <key> <value>            (zero or more)
    layers <n>
    dense <in> <out> <relu|identity>
    <out rows of <in> weights each, row-major>
    <one row of <out> biases>
    ... repeated for every layer

Floats are written with ``repr`` so a save/load round trip is exact.
"""

from __future__ import annotations

import math
import os
import tempfile
from dataclasses import dataclass, field

import numpy as np

CHECKPOINT_MAGIC = "signalbench-dense"
CHECKPOINT_VERSION = 1
AGENT_ARCHITECTURE = (8, 32, 16, 2)
ACTIVATIONS = ("relu", "identity")


class CheckpointError(ValueError):
    pass


@dataclass
class Layer:
    weight: np.ndarray  # (out, in)
    bias: np.ndarray  # (out,)
    activation: str = "relu"

    def __post_init__(self):
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        self.weight = np.asarray(self.weight, dtype=np.float64)
        self.bias = np.asarray(self.bias, dtype=np.float64)
        if self.weight.ndim != 2 or self.bias.shape != (self.weight.shape[0],):
            raise ValueError("weight must be (out, in) and bias (out,)")


@dataclass
class DenseNet:
    layers: list[Layer] = field(default_factory=list)
    meta: dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        for a, b in zip(self.layers, self.layers[1:]):
            if a.weight.shape[0] != b.weight.shape[1]:
                raise ValueError("adjacent layer dimensions do not chain")

    @classmethod
    def init(cls, sizes=AGENT_ARCHITECTURE, rng: np.random.Generator | None = None,
             output_activation: str = "identity") -> "DenseNet":
        """Glorot-uniform weights, zero biases, ReLU on hidden layers."""
        rng = rng if rng is not None else np.random.default_rng()
        layers = []
        for i, (n_in, n_out) in enumerate(zip(sizes[:-1], sizes[1:])):
            limit = math.sqrt(6.0 / (n_in + n_out))
            act = output_activation if i == len(sizes) - 2 else "relu"
            layers.append(Layer(rng.uniform(-limit, limit, size=(n_out, n_in)),
                                np.zeros(n_out), act))
        return cls(layers)

    @property
    def sizes(self) -> tuple[int, ...]:
        return (self.layers[0].weight.shape[1],) + tuple(l.weight.shape[0] for l in self.layers)

    @property
    def n_params(self) -> int:
        return sum(l.weight.size + l.bias.size for l in self.layers)

    def params(self) -> list[np.ndarray]:
        out = []
        for layer in self.layers:
            out.extend((layer.weight, layer.bias))
        return out

    def copy(self) -> "DenseNet":
        return DenseNet([Layer(l.weight.copy(), l.bias.copy(), l.activation) for l in self.layers],
                        dict(self.meta))

    def load_params(self, other: "DenseNet") -> None:
        """Copy ``other``'s parameter values into this network in place."""
        for dst, src in zip(self.params(), other.params()):
            dst[...] = src

    def all_finite(self) -> bool:
        return all(np.all(np.isfinite(p)) for p in self.params())


def forward(net: DenseNet, x, return_cache: bool = False):
    """Evaluate ``net`` on one input vector or a batch of rows."""
    a = np.asarray(x, dtype=np.float64)
    single = a.ndim == 1
    if single:
        a = a[None, :]
    if a.shape[1] != net.layers[0].weight.shape[1]:
        raise ValueError(f"input dimension {a.shape[1]} does not match network input "
                         f"{net.layers[0].weight.shape[1]}")
    cache = [a]
    for layer in net.layers:
        z = a @ layer.weight.T + layer.bias
        a = np.maximum(z, 0.0) if layer.activation == "relu" else z
        cache.append(a)
    out = a[0] if single else a
    return (out, cache) if return_cache else out


def backward(net: DenseNet, x, grad_out, cache=None) -> list[np.ndarray]:
    """Gradients of a loss w.r.t. every parameter, in ``net.params()`` order.

    ``grad_out`` is dloss/doutput with the same shape as ``forward(net, x)``;
    for a batch the per-row contributions are summed.
    """
    if cache is None:
        _, cache = forward(net, x, return_cache=True)
    g = np.asarray(grad_out, dtype=np.float64)
    if g.ndim == 1:
        g = g[None, :]
    grads: list[np.ndarray] = [None] * (2 * len(net.layers))  # type: ignore[list-item]
    for i in range(len(net.layers) - 1, -1, -1):
        layer = net.layers[i]
        if layer.activation == "relu":
            g = g * (cache[i + 1] > 0.0)
        grads[2 * i] = g.T @ cache[i]
        grads[2 * i + 1] = g.sum(axis=0)
        if i:
            g = g @ layer.weight
    return grads


@dataclass
class AdamState:
    params_like: list[np.ndarray] | None = None
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step_count: int = 0
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)

    def __post_init__(self):
        if self.params_like is not None and not self.m:
            self.m = [np.zeros_like(p) for p in self.params_like]
            self.v = [np.zeros_like(p) for p in self.params_like]
        self.params_like = None


def adam_update(params: list[np.ndarray], grads: list[np.ndarray], state: AdamState) -> None:
    """One bias-corrected Adam step, updating ``params`` and ``state`` in place."""
    if not state.m:
        state.m = [np.zeros_like(p) for p in params]
        state.v = [np.zeros_like(p) for p in params]
    if len(params) != len(grads) or len(params) != len(state.m):
        raise ValueError("params, grads and optimizer state must align")
    state.step_count += 1
    t = state.step_count
    b1, b2 = state.beta1, state.beta2
    step = state.learning_rate * math.sqrt(1.0 - b2 ** t) / (1.0 - b1 ** t)
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if p.shape != g.shape:
            raise ValueError(f"gradient shape {g.shape} does not match parameter {p.shape}")
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        # eps is scaled so the update equals lr * m_hat / (sqrt(v_hat) + eps)
        p -= step * m / (np.sqrt(v) + state.eps * math.sqrt(1.0 - b2 ** t))


def huber(error: np.ndarray, delta: float = 1.0) -> tuple[np.ndarray, np.ndarray]:
    """Per-element Huber loss and its derivative w.r.t. ``error``."""
    abs_err = np.abs(error)
    quad = abs_err <= delta
    loss = np.where(quad, 0.5 * error * error, delta * (abs_err - 0.5 * delta))
    grad = np.where(quad, error, delta * np.sign(error))
    return loss, grad


def squared(error: np.ndarray, delta: float = 1.0) -> tuple[np.ndarray, np.ndarray]:
    return 0.5 * error * error, error


LOSSES = {"huber": huber, "squared": squared}


def save_checkpoint(net: DenseNet, path) -> None:
    """Write ``net`` atomically (temp file + rename)."""
    lines = [f"{CHECKPOINT_MAGIC} {CHECKPOINT_VERSION}"]
    for key, value in sorted(net.meta.items()):
        if not key or any(c.isspace() for c in key):
            raise ValueError(f"bad meta key {key!r}")
        lines.append(f"meta {key} {value}")
    lines.append(f"layers {len(net.layers)}")
    for layer in net.layers:
        n_out, n_in = layer.weight.shape
        lines.append(f"dense {n_in} {n_out} {layer.activation}")
        lines.extend(" ".join(repr(float(w)) for w in row) for row in layer.weight)
        lines.append(" ".join(repr(float(b)) for b in layer.bias))
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".ckpt-")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write("\n".join(lines) + "\n")
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def load_checkpoint(path) -> DenseNet:
    try:
        with open(path) as fh:
            lines = [ln.rstrip("\n") for ln in fh]
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    try:
        it = iter(lines)
        head = next(it).split()
        if head != [CHECKPOINT_MAGIC, str(CHECKPOINT_VERSION)]:
            raise CheckpointError(f"{path}: not a version-{CHECKPOINT_VERSION} checkpoint")
        meta = {}
        line = next(it)
        while line.startswith("meta "):
            _, key, value = line.split(" ", 2)
            meta[key] = value
            line = next(it)
        tag, n = line.split()
        if tag != "layers":
            raise CheckpointError(f"{path}: expected 'layers' line")
        layers = []
        for _ in range(int(n)):
            tag, n_in, n_out, act = next(it).split()
            if tag != "dense":
                raise CheckpointError(f"{path}: expected 'dense' line")
            n_in, n_out = int(n_in), int(n_out)
            w = np.array([[float(x) for x in next(it).split()] for _ in range(n_out)])
            b = np.array([float(x) for x in next(it).split()])
            if w.shape != (n_out, n_in) or b.shape != (n_out,):
                raise CheckpointError(f"{path}: layer shape does not match header")
            layers.append(Layer(w, b, act))
        if any(ln.strip() for ln in it):
            raise CheckpointError(f"{path}: trailing data")
        net = DenseNet(layers, meta)
    except CheckpointError:
        raise
    except (StopIteration, ValueError) as exc:
        raise CheckpointError(f"{path}: corrupt checkpoint ({exc})") from exc
    if not net.all_finite():
        raise CheckpointError(f"{path}: non-finite parameters")
    return net
