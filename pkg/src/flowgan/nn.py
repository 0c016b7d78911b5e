"""Dense feed-forward networks with hand-written reverse mode, Adam, and the
input-gradient-norm penalty (which needs one extra level of differentiation).

Everything is float64. Weight matrices are stored ``(fan_in, fan_out)`` and
batches are row-major, so a layer computes ``x @ W + b``.
"""

from __future__ import annotations

import json
import os
import struct
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

ACTIVATIONS = ("relu", "sigmoid", "linear", "tanh")


class StaleTapeError(RuntimeError):
    """The network changed after the forward pass that a backward pass refers to."""


class NonFiniteError(FloatingPointError):
    pass


# ----------------------------------------------------------------- activations
# Each returns (f(a), f'(a), f''(a)); second derivatives are only needed by the
# gradient penalty.

def _relu(a, order):
    y = np.maximum(a, 0.0)
    if order == 0:
        return y, None, None
    d1 = (a > 0).astype(np.float64)
    return y, d1, (np.zeros_like(a) if order > 1 else None)


def _sigmoid(a, order):
    y = 0.5 * (1.0 + np.tanh(0.5 * a))
    if order == 0:
        return y, None, None
    d1 = y * (1.0 - y)
    return y, d1, (d1 * (1.0 - 2.0 * y) if order > 1 else None)


def _tanh(a, order):
    y = np.tanh(a)
    if order == 0:
        return y, None, None
    d1 = 1.0 - y * y
    return y, d1, (-2.0 * y * d1 if order > 1 else None)


def _linear(a, order):
    if order == 0:
        return a, None, None
    return a, np.ones_like(a), (np.zeros_like(a) if order > 1 else None)


_FUNCS = {"relu": _relu, "sigmoid": _sigmoid, "tanh": _tanh, "linear": _linear}


def activate(a: np.ndarray, activation: str | tuple[str, ...], order: int = 0):
    """Apply an activation, or a per-column tuple of activation names."""
    if isinstance(activation, str):
        return _FUNCS[activation](a, order)
    y = np.empty_like(a)
    d1 = np.empty_like(a) if order > 0 else None
    d2 = np.empty_like(a) if order > 1 else None
    names = np.asarray(activation)
    for name in dict.fromkeys(activation):
        cols = np.flatnonzero(names == name)
        r = _FUNCS[name](a[:, cols], order)
        y[:, cols] = r[0]
        if d1 is not None:
            d1[:, cols] = r[1]
        if d2 is not None:
            d2[:, cols] = r[2]
    return y, d1, d2


# ----------------------------------------------------------------- networks

@dataclass
class Layer:
    weight: np.ndarray
    bias: np.ndarray
    activation: str | tuple[str, ...] = "linear"

    def __post_init__(self):
        self.weight = np.asarray(self.weight, dtype=np.float64)
        self.bias = np.asarray(self.bias, dtype=np.float64).reshape(-1)
        if self.weight.ndim != 2 or self.bias.shape[0] != self.weight.shape[1]:
            raise ValueError("layer weight/bias shapes disagree")
        if isinstance(self.activation, (list, tuple)):
            self.activation = tuple(self.activation)
            if len(self.activation) != self.weight.shape[1]:
                raise ValueError("per-column activation list must match layer width")
            bad = set(self.activation) - set(ACTIVATIONS)
        else:
            bad = {self.activation} - set(ACTIVATIONS)
        if bad:
            raise ValueError(f"unknown activation(s) {sorted(bad)}")


@dataclass
class Tape:
    """Recorded forward pass: layer inputs and pre-activations."""

    inputs: list[np.ndarray]
    pre: list[np.ndarray]
    output: np.ndarray
    version: int


class Mlp:
    def __init__(self, layers: Sequence[Layer]):
        if not layers:
            raise ValueError("an Mlp needs at least one layer")
        for a, b in zip(layers, layers[1:]):
            if a.weight.shape[1] != b.weight.shape[0]:
                raise ValueError("adjacent layer widths disagree")
        self.layers = list(layers)
        self.version = 0

    @classmethod
    def create(cls, widths: Sequence[int], hidden_activation: str = "relu",
               output_activation: str | tuple[str, ...] = "linear",
               rng: np.random.Generator | None = None) -> "Mlp":
        """Glorot-uniform initialised network with ``widths = [in, h1, ..., out]``."""
        rng = rng or np.random.default_rng()
        layers = []
        for i, (fan_in, fan_out) in enumerate(zip(widths, widths[1:])):
            limit = np.sqrt(6.0 / (fan_in + fan_out))
            act = output_activation if i == len(widths) - 2 else hidden_activation
            layers.append(Layer(rng.uniform(-limit, limit, (fan_in, fan_out)), np.zeros(fan_out), act))
        return cls(layers)

    @property
    def input_width(self) -> int:
        return self.layers[0].weight.shape[0]

    @property
    def output_width(self) -> int:
        return self.layers[-1].weight.shape[1]

    @property
    def widths(self) -> list[int]:
        return [self.input_width] + [l.weight.shape[1] for l in self.layers]

    def parameters(self) -> list[np.ndarray]:
        out = []
        for layer in self.layers:
            out.extend((layer.weight, layer.bias))
        return out

    def mark_updated(self) -> None:
        self.version += 1

    def copy(self) -> "Mlp":
        return Mlp([Layer(l.weight.copy(), l.bias.copy(), l.activation) for l in self.layers])

    def _check(self, batch: np.ndarray) -> np.ndarray:
        batch = np.asarray(batch, dtype=np.float64)
        if batch.ndim != 2 or batch.shape[1] != self.input_width:
            raise ValueError(f"batch width {batch.shape[-1]} != network input width {self.input_width}")
        return batch

    def forward(self, batch: np.ndarray) -> np.ndarray:
        h = self._check(batch)
        for layer in self.layers:
            h = activate(h @ layer.weight + layer.bias, layer.activation)[0]
        return h

    __call__ = forward

    def trace(self, batch: np.ndarray) -> Tape:
        """Forward pass that records what ``backward`` needs."""
        h = self._check(batch)
        inputs, pre = [], []
        for layer in self.layers:
            inputs.append(h)
            a = h @ layer.weight + layer.bias
            pre.append(a)
            h = activate(a, layer.activation)[0]
        return Tape(inputs, pre, h, self.version)

    def backward(self, tape: Tape, upstream: np.ndarray) -> tuple[list[np.ndarray], np.ndarray]:
        """Gradients of ``sum(upstream * output)`` w.r.t. parameters and input.

        Parameter gradients come back in ``parameters()`` order.
        """
        if tape.version != self.version:
            raise StaleTapeError("network parameters changed since this forward pass")
        delta = np.asarray(upstream, dtype=np.float64)
        if delta.shape != tape.output.shape:
            raise ValueError("upstream gradient shape does not match network output")
        grads: list[np.ndarray] = [None] * (2 * len(self.layers))  # type: ignore[list-item]
        for i in range(len(self.layers) - 1, -1, -1):
            layer = self.layers[i]
            _, d1, _ = activate(tape.pre[i], layer.activation, order=1)
            delta = delta * d1
            grads[2 * i] = tape.inputs[i].T @ delta
            grads[2 * i + 1] = delta.sum(axis=0)
            delta = delta @ layer.weight.T
        return grads, delta

    def input_gradient(self, batch: np.ndarray) -> np.ndarray:
        """d output / d input for a scalar-output network, one row per sample."""
        if self.output_width != 1:
            raise ValueError("input_gradient needs a scalar-output network")
        tape = self.trace(batch)
        return self.backward(tape, np.ones_like(tape.output))[1]

    # ------------------------------------------------------------- io
    def save(self, path: str | os.PathLike, metadata: dict | None = None) -> None:
        save_networks(path, {"net": self}, metadata)

    @classmethod
    def load(cls, path: str | os.PathLike) -> "Mlp":
        return load_networks(path)[0]["net"]


def forward(net: Mlp, batch: np.ndarray) -> np.ndarray:
    return net.forward(batch)


def backward(net: Mlp, tape: Tape, upstream: np.ndarray):
    return net.backward(tape, upstream)


def input_gradient_norm_penalty(critic: Mlp, interpolates: np.ndarray, coefficient: float):
    """Mean over rows of ``coefficient * (||d critic / d x|| - 1)^2``.

    Returns ``(penalty, parameter_gradients, gradient_norms)``. The parameter
    gradients differentiate through the input-gradient computation (double
    backpropagation). Relu's second derivative is taken as zero.
    """
    if critic.output_width != 1:
        raise ValueError("gradient penalty needs a scalar critic output")
    layers = critic.layers
    L = len(layers)
    tape = critic.trace(interpolates)
    n = tape.output.shape[0]
    d1s, d2s = [], []
    for i, layer in enumerate(layers):
        _, d1, d2 = activate(tape.pre[i], layer.activation, order=2)
        d1s.append(d1)
        d2s.append(d2)

    # Inner backward pass: e[i] is d output / d pre[i], gh[i] is d output / d inputs[i].
    e: list[np.ndarray] = [None] * L  # type: ignore[list-item]
    gh: list[np.ndarray] = [None] * L  # type: ignore[list-item]
    e[L - 1] = d1s[L - 1]
    for i in range(L - 1, -1, -1):
        gh[i] = e[i] @ layers[i].weight.T
        if i > 0:
            e[i - 1] = gh[i] * d1s[i - 1]
    g = gh[0]
    norms = np.sqrt((g * g).sum(axis=1))
    penalty = coefficient * float(np.mean((norms - 1.0) ** 2))

    grads = [np.zeros_like(p) for p in critic.parameters()]
    if coefficient == 0:
        return 0.0, grads, norms
    safe = np.where(norms > 0, norms, 1.0)
    bar_gh = (2.0 * coefficient / n) * ((norms - 1.0) / safe)[:, None] * g

    # Reverse through the inner pass, collecting adjoints of the pre-activations.
    bar_pre = [np.zeros_like(p) for p in tape.pre]
    for i in range(L):
        # gh[i] = e[i] @ W_i^T
        grads[2 * i] += bar_gh.T @ e[i]
        bar_e = bar_gh @ layers[i].weight
        # e[i] = gh[i+1] * f_i'(pre_i)   (e[L-1] = f'(pre_{L-1}))
        upstream_gh = gh[i + 1] if i + 1 < L else np.ones_like(e[i])
        bar_pre[i] += bar_e * upstream_gh * d2s[i]
        if i + 1 < L:
            bar_gh = bar_e * d1s[i]

    # Reverse through the forward pass with the injected pre-activation adjoints.
    delta = np.zeros_like(tape.pre[L - 1])
    for i in range(L - 1, -1, -1):
        delta = delta + bar_pre[i]
        grads[2 * i] += tape.inputs[i].T @ delta
        grads[2 * i + 1] += delta.sum(axis=0)
        if i > 0:
            delta = (delta @ layers[i].weight.T) * d1s[i - 1]
    return penalty, grads, norms


# ----------------------------------------------------------------- optimizer

@dataclass
class AdamState:
    lr: float = 1e-4
    beta1: float = 0.0
    beta2: float = 0.9
    eps: float = 1e-8
    step: int = 0
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)


def adam_step(params: Sequence[np.ndarray], grads: Sequence[np.ndarray], state: AdamState) -> None:
    """Bias-corrected Adam update, in place on ``params`` and ``state``."""
    if len(params) != len(grads):
        raise ValueError("parameter and gradient lists differ in length")
    for i, (p, g) in enumerate(zip(params, grads)):
        if p.shape != np.shape(g):
            raise ValueError(f"gradient {i} has shape {np.shape(g)}, parameter {p.shape}")
        if not np.all(np.isfinite(g)):
            raise NonFiniteError(f"non-finite gradient for parameter {i} at Adam step {state.step + 1}")
    if not state.m:
        state.m = [np.zeros_like(p) for p in params]
        state.v = [np.zeros_like(p) for p in params]
    state.step += 1
    t = state.step
    c1 = 1.0 - state.beta1 ** t
    c2 = 1.0 - state.beta2 ** t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        p -= state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
        if not np.all(np.isfinite(p)):
            raise NonFiniteError(f"parameters became non-finite at Adam step {t}")


class Adam:
    """Adam bound to one network; bumps the network version after each step."""

    def __init__(self, net: Mlp, lr: float, beta1: float = 0.0, beta2: float = 0.9, eps: float = 1e-8):
        self.net = net
        self.state = AdamState(lr=lr, beta1=beta1, beta2=beta2, eps=eps)

    def step(self, grads: Sequence[np.ndarray]) -> None:
        adam_step(self.net.parameters(), grads, self.state)
        self.net.mark_updated()


# ----------------------------------------------------------------- persistence
# Container: magic b"FGNN", uint16 version, uint32 header length, UTF-8 JSON
# header (networks, layer shapes, activations, metadata), then float64
# little-endian values: per network, per layer, weight (row-major) then bias.

NN_MAGIC = b"FGNN"
NN_VERSION = 1


def save_networks(path: str | os.PathLike, nets: dict[str, Mlp], metadata: dict | None = None) -> None:
    header = {
        "byte_order": "little",
        "dtype": "float64",
        "networks": {
            name: [{"shape": list(l.weight.shape),
                    "activation": l.activation if isinstance(l.activation, str) else list(l.activation)}
                   for l in net.layers]
            for name, net in sorted(nets.items())
        },
        "metadata": metadata or {},
    }
    raw = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(NN_MAGIC + struct.pack("<HI", NN_VERSION, len(raw)) + raw)
        for name in sorted(nets):
            for layer in nets[name].layers:
                fh.write(layer.weight.astype("<f8").tobytes())
                fh.write(layer.bias.astype("<f8").tobytes())


def load_networks(path: str | os.PathLike) -> tuple[dict[str, Mlp], dict]:
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != NN_MAGIC:
        raise ValueError(f"{path}: not a network container")
    version, hlen = struct.unpack_from("<HI", data, 4)
    if version != NN_VERSION:
        raise ValueError(f"{path}: unsupported container version {version}")
    pos = 4 + struct.calcsize("<HI")
    header = json.loads(data[pos:pos + hlen])
    pos += hlen
    nets = {}
    for name, entries in header["networks"].items():
        layers = []
        for entry in entries:
            fi, fo = entry["shape"]
            w = np.frombuffer(data, "<f8", fi * fo, pos).reshape(fi, fo).astype(np.float64)
            pos += 8 * fi * fo
            b = np.frombuffer(data, "<f8", fo, pos).astype(np.float64)
            pos += 8 * fo
            act = entry["activation"]
            layers.append(Layer(w, b, act if isinstance(act, str) else tuple(act)))
        nets[name] = Mlp(layers)
    return nets, header.get("metadata", {})
