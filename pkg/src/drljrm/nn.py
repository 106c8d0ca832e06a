"""A small dense neural-network engine with exact reverse-mode gradients.

Networks are built from a declarative :class:`NetworkSpec` (a tuple of
layer specs) and hold their parameters as :class:`Param` objects, each a
float64 array with a same-shaped gradient buffer. Every forward pass caches
what its backward pass needs, so ``backward`` must follow the matching
``forward``.

Supported layers: fully connected, grouped (block-diagonal) fully connected
for per-user input routing, residual blocks of two fully connected layers,
valid-padding 2-D convolution, non-overlapping max pooling and flatten.
"""

from __future__ import annotations

import contextlib
import copy
import hashlib
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence, Union

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

__all__ = [
    "NonFiniteError",
    "Param",
    "FC",
    "Grouped",
    "ResBlock",
    "Conv",
    "MaxPool",
    "Flatten",
    "NetworkSpec",
    "Network",
    "RMSProp",
    "soft_update",
    "count_macs",
    "mac_counter",
    "save_checkpoint",
    "load_checkpoint",
    "checkpoint_extras",
    "CheckpointMismatch",
]

ACTIVATIONS = ("identity", "relu", "sigmoid", "tanh")


class NonFiniteError(FloatingPointError):
    """A NaN or infinity appeared in an activation or gradient."""


class CheckpointMismatch(ValueError):
    pass


def _check(x: np.ndarray, what: str) -> np.ndarray:
    if not np.all(np.isfinite(x)):
        raise NonFiniteError(f"non-finite values in {what}")
    return x


# --- MAC instrumentation ------------------------------------------------------------

class _MacCounter:
    def __init__(self):
        self.enabled = False
        self.forward = 0
        self.backward = 0

    def add(self, kind: str, n: int) -> None:
        if self.enabled:
            setattr(self, kind, getattr(self, kind) + int(n))


_COUNTER = _MacCounter()


@contextlib.contextmanager
def mac_counter():
    """Count multiply-accumulates executed inside the block.

    Yields the counter; read ``.forward`` and ``.backward`` afterwards.
    Backward passes count both the weight-gradient and the input-gradient
    products.
    """
    prev = (_COUNTER.enabled, _COUNTER.forward, _COUNTER.backward)
    _COUNTER.enabled, _COUNTER.forward, _COUNTER.backward = True, 0, 0
    result = _MacCounter()
    try:
        yield result
    finally:
        result.forward, result.backward = _COUNTER.forward, _COUNTER.backward
        _COUNTER.enabled, _COUNTER.forward, _COUNTER.backward = prev
        if prev[0]:
            _COUNTER.forward += result.forward
            _COUNTER.backward += result.backward


# --- activations ---------------------------------------------------------------------

def _act(name: str, z: np.ndarray) -> np.ndarray:
    if name == "identity":
        return z
    if name == "relu":
        return np.maximum(z, 0.0)
    if name == "sigmoid":
        # split form avoids overflow in exp for large |z|
        out = np.empty_like(z)
        pos = z >= 0
        out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
        ez = np.exp(z[~pos])
        out[~pos] = ez / (1.0 + ez)
        return out
    if name == "tanh":
        return np.tanh(z)
    raise ValueError(f"unknown activation {name!r}")


def _act_grad(name: str, z: np.ndarray, y: np.ndarray, dy: np.ndarray) -> np.ndarray:
    if name == "identity":
        return dy
    if name == "relu":
        return dy * (z > 0)
    if name == "sigmoid":
        return dy * y * (1.0 - y)
    if name == "tanh":
        return dy * (1.0 - y * y)
    raise ValueError(f"unknown activation {name!r}")


# --- parameters and layer specs ------------------------------------------------------

class Param:
    __slots__ = ("data", "grad")

    def __init__(self, data: np.ndarray):
        self.data = np.ascontiguousarray(data, dtype=np.float64)
        self.grad = np.zeros_like(self.data)

    @property
    def shape(self):
        return self.data.shape


@dataclass(frozen=True)
class FC:
    n_in: int
    n_out: int
    activation: str = "relu"


@dataclass(frozen=True)
class Grouped:
    """Block-diagonal layer: each index group gets its own small dense map.

    Outputs are concatenated group by group, ``units`` per group.
    """

    n_in: int
    groups: tuple
    units: int
    activation: str = "relu"


@dataclass(frozen=True)
class ResBlock:
    """``relu(x + fc2(relu(fc1(x))))`` with both sublayers ``width x width``."""

    width: int


@dataclass(frozen=True)
class Conv:
    c_in: int
    c_out: int
    kernel: int
    activation: str = "relu"


@dataclass(frozen=True)
class MaxPool:
    window: int = 2


@dataclass(frozen=True)
class Flatten:
    pass


LayerSpec = Union[FC, Grouped, ResBlock, Conv, MaxPool, Flatten]


@dataclass(frozen=True)
class NetworkSpec:
    """Input shape (excluding batch) plus an ordered tuple of layer specs."""

    input_shape: tuple
    layers: tuple

    def __post_init__(self):
        self.output_shapes()  # validates composition

    def output_shapes(self) -> list[tuple]:
        shapes = []
        shape = tuple(self.input_shape)
        for layer in self.layers:
            shape = _out_shape(layer, shape)
            shapes.append(shape)
        return shapes

    @property
    def output_shape(self) -> tuple:
        return self.output_shapes()[-1] if self.layers else tuple(self.input_shape)

    def digest(self) -> str:
        return hashlib.sha256(repr(self).encode()).hexdigest()[:16]


def _out_shape(layer: LayerSpec, shape: tuple) -> tuple:
    def need(cond, msg):
        if not cond:
            raise ValueError(f"{layer}: {msg} (input shape {shape})")

    if isinstance(layer, FC):
        need(shape == (layer.n_in,), "input width mismatch")
        need(layer.activation in ACTIVATIONS, "unknown activation")
        return (layer.n_out,)
    if isinstance(layer, Grouped):
        need(shape == (layer.n_in,), "input width mismatch")
        flat = [i for g in layer.groups for i in g]
        need(all(0 <= i < layer.n_in for i in flat), "group index out of range")
        need(all(len(g) > 0 for g in layer.groups), "empty group")
        return (layer.units * len(layer.groups),)
    if isinstance(layer, ResBlock):
        need(shape == (layer.width,), "residual width must equal input width")
        return shape
    if isinstance(layer, Conv):
        need(len(shape) == 3 and shape[0] == layer.c_in, "channel mismatch")
        h, w = shape[1] - layer.kernel + 1, shape[2] - layer.kernel + 1
        need(h >= 1 and w >= 1, "kernel larger than input")
        return (layer.c_out, h, w)
    if isinstance(layer, MaxPool):
        need(len(shape) == 3, "pooling needs (C, H, W) input")
        need(shape[1] % layer.window == 0 and shape[2] % layer.window == 0,
             "spatial dims must be multiples of the pooling window")
        return (shape[0], shape[1] // layer.window, shape[2] // layer.window)
    if isinstance(layer, Flatten):
        return (int(np.prod(shape)),)
    raise TypeError(f"unknown layer spec {layer!r}")


def count_macs(spec: NetworkSpec) -> int:
    """Multiply-accumulates of one single-sample forward pass.

    Dense layers cost ``n_in * n_out``; a convolution costs
    ``H_out * W_out * K^2 * C_in * C_out``. Activations, residual additions and
    pooling are not counted.
    """
    total = 0
    shape = tuple(spec.input_shape)
    for layer in spec.layers:
        out = _out_shape(layer, shape)
        total += _layer_macs(layer, out)
        shape = out
    return total


def _layer_macs(layer: LayerSpec, out_shape: tuple) -> int:
    if isinstance(layer, FC):
        return layer.n_in * layer.n_out
    if isinstance(layer, Grouped):
        return sum(len(g) for g in layer.groups) * layer.units
    if isinstance(layer, ResBlock):
        return 2 * layer.width * layer.width
    if isinstance(layer, Conv):
        return out_shape[1] * out_shape[2] * layer.kernel**2 * layer.c_in * layer.c_out
    return 0


# --- layer implementations -----------------------------------------------------------

def _glorot(rng: np.random.Generator, shape, fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


class _Dense:
    def __init__(self, spec: FC, rng):
        self.spec = spec
        self.W = Param(_glorot(rng, (spec.n_in, spec.n_out), spec.n_in, spec.n_out))
        self.b = Param(np.zeros(spec.n_out))
        self.params = [self.W, self.b]

    def forward(self, x):
        self.x = x
        self.z = x @ self.W.data + self.b.data
        self.y = _act(self.spec.activation, self.z)
        _COUNTER.add("forward", x.shape[0] * self.spec.n_in * self.spec.n_out)
        return self.y

    def backward(self, dy):
        dz = _act_grad(self.spec.activation, self.z, self.y, dy)
        self.W.grad += self.x.T @ dz
        self.b.grad += dz.sum(axis=0)
        _COUNTER.add("backward", 2 * self.x.shape[0] * self.spec.n_in * self.spec.n_out)
        return dz @ self.W.data.T


class _Grouped:
    def __init__(self, spec: Grouped, rng):
        self.spec = spec
        self.index = [np.asarray(g, dtype=np.int64) for g in spec.groups]
        self.Ws = [Param(_glorot(rng, (len(g), spec.units), len(g), spec.units)) for g in spec.groups]
        self.bs = [Param(np.zeros(spec.units)) for _ in spec.groups]
        self.params = [p for pair in zip(self.Ws, self.bs) for p in pair]

    def forward(self, x):
        self.x = x
        self.z = np.concatenate(
            [x[:, idx] @ W.data + b.data for idx, W, b in zip(self.index, self.Ws, self.bs)], axis=1)
        self.y = _act(self.spec.activation, self.z)
        _COUNTER.add("forward", x.shape[0] * _layer_macs(self.spec, ()))
        return self.y

    def backward(self, dy):
        dz = _act_grad(self.spec.activation, self.z, self.y, dy)
        dx = np.zeros_like(self.x)
        u = self.spec.units
        for k, (idx, W, b) in enumerate(zip(self.index, self.Ws, self.bs)):
            dzk = dz[:, k * u:(k + 1) * u]
            W.grad += self.x[:, idx].T @ dzk
            b.grad += dzk.sum(axis=0)
            # np.add.at handles indices that appear in several groups
            np.add.at(dx, (slice(None), idx), dzk @ W.data.T)
        _COUNTER.add("backward", 2 * self.x.shape[0] * _layer_macs(self.spec, ()))
        return dx


class _Residual:
    def __init__(self, spec: ResBlock, rng):
        self.spec = spec
        self.fc1 = _Dense(FC(spec.width, spec.width, "relu"), rng)
        self.fc2 = _Dense(FC(spec.width, spec.width, "identity"), rng)
        self.params = self.fc1.params + self.fc2.params

    def forward(self, x):
        self.z = x + self.fc2.forward(self.fc1.forward(x))
        self.y = np.maximum(self.z, 0.0)
        return self.y

    def backward(self, dy):
        dz = dy * (self.z > 0)
        return dz + self.fc1.backward(self.fc2.backward(dz))


def _im2col(x, k):
    """``(B, C, H, W)`` -> ``(B, H-k+1, W-k+1, C*k*k)`` patches, channel-major."""
    win = sliding_window_view(x, (k, k), axis=(2, 3))  # (B, C, H', W', k, k)
    b, c, h, w = win.shape[:4]
    return np.ascontiguousarray(win.transpose(0, 2, 3, 1, 4, 5)).reshape(b, h, w, c * k * k)


class _Conv:
    def __init__(self, spec: Conv, rng):
        self.spec = spec
        k = spec.kernel
        fan_in, fan_out = spec.c_in * k * k, spec.c_out * k * k
        self.W = Param(_glorot(rng, (spec.c_out, spec.c_in, k, k), fan_in, fan_out))
        self.b = Param(np.zeros(spec.c_out))
        self.params = [self.W, self.b]

    def forward(self, x):
        k = self.spec.kernel
        self.x = x
        self.cols = _im2col(x, k)  # (B, H', W', C*k*k)
        w_mat = self.W.data.reshape(self.spec.c_out, -1)
        self.z = (self.cols @ w_mat.T + self.b.data).transpose(0, 3, 1, 2)
        self.y = _act(self.spec.activation, self.z)
        _COUNTER.add("forward", x.shape[0] * self._macs())
        return self.y

    def _macs(self):
        return _layer_macs(self.spec, self.z.shape[1:])

    def backward(self, dy):
        k = self.spec.kernel
        dz = _act_grad(self.spec.activation, self.z, self.y, dy)
        dz_rows = dz.transpose(0, 2, 3, 1).reshape(-1, self.spec.c_out)
        self.W.grad += (dz_rows.T @ self.cols.reshape(dz_rows.shape[0], -1)).reshape(self.W.data.shape)
        self.b.grad += dz_rows.sum(axis=0)
        padded = np.pad(dz, ((0, 0), (0, 0), (k - 1, k - 1), (k - 1, k - 1)))
        flipped = self.W.data[:, :, ::-1, ::-1].transpose(1, 0, 2, 3).reshape(self.spec.c_in, -1)
        dx = (_im2col(padded, k) @ flipped.T).transpose(0, 3, 1, 2)
        _COUNTER.add("backward", 2 * dy.shape[0] * self._macs())
        return dx


class _MaxPool:
    params: list = []

    def __init__(self, spec: MaxPool, rng=None):
        self.spec = spec

    def forward(self, x):
        w = self.spec.window
        b, c, h, wd = x.shape
        blocks = x.reshape(b, c, h // w, w, wd // w, w).transpose(0, 1, 2, 4, 3, 5)
        blocks = blocks.reshape(b, c, h // w, wd // w, w * w)
        self.arg = blocks.argmax(axis=-1)  # first maximum wins ties
        self.in_shape = x.shape
        return np.take_along_axis(blocks, self.arg[..., None], axis=-1)[..., 0]

    def backward(self, dy):
        w = self.spec.window
        b, c, h, wd = self.in_shape
        grad = np.zeros((b, c, h // w, wd // w, w * w))
        np.put_along_axis(grad, self.arg[..., None], dy[..., None], axis=-1)
        grad = grad.reshape(b, c, h // w, wd // w, w, w).transpose(0, 1, 2, 4, 3, 5)
        return grad.reshape(self.in_shape)


class _Flatten:
    params: list = []

    def __init__(self, spec=None, rng=None):
        pass

    def forward(self, x):
        self.in_shape = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, dy):
        return dy.reshape(self.in_shape)


_BUILDERS = {FC: _Dense, Grouped: _Grouped, ResBlock: _Residual, Conv: _Conv,
             MaxPool: _MaxPool, Flatten: _Flatten}


class Network:
    """A feed-forward stack built from a :class:`NetworkSpec`."""

    def __init__(self, spec: NetworkSpec, rng: np.random.Generator | int | None = None):
        rng = np.random.default_rng(rng)
        self.spec = spec
        self.layers = [_BUILDERS[type(s)](s, rng) for s in spec.layers]
        self.params: list[Param] = [p for layer in self.layers for p in layer.params]

    def forward(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.shape[1:] != tuple(self.spec.input_shape):
            raise ValueError(f"input shape {x.shape[1:]} != {tuple(self.spec.input_shape)}")
        for layer in self.layers:
            x = layer.forward(x)
        return _check(x, "forward activations")

    __call__ = forward

    def backward(self, upstream) -> np.ndarray:
        """Accumulate parameter gradients for ``upstream = dL/d(output)``; return dL/d(input)."""
        g = np.asarray(upstream, dtype=np.float64)
        for layer in reversed(self.layers):
            g = layer.backward(g)
        _check(g, "input gradient")
        for p in self.params:
            _check(p.grad, "parameter gradient")
        return g

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad.fill(0.0)

    def get_flat(self) -> np.ndarray:
        return np.concatenate([p.data.ravel() for p in self.params]) if self.params else np.zeros(0)

    def set_flat(self, flat: np.ndarray) -> None:
        flat = np.asarray(flat, dtype=np.float64)
        if flat.size != self.num_params:
            raise ValueError(f"expected {self.num_params} values, got {flat.size}")
        k = 0
        for p in self.params:
            n = p.data.size
            p.data[...] = flat[k:k + n].reshape(p.shape)
            k += n

    def grad_flat(self) -> np.ndarray:
        return np.concatenate([p.grad.ravel() for p in self.params]) if self.params else np.zeros(0)

    @property
    def num_params(self) -> int:
        return sum(p.data.size for p in self.params)

    def copy(self) -> "Network":
        clone = copy.deepcopy(self)
        for layer in clone.layers:
            for attr in ("x", "z", "y", "win", "arg", "in_shape"):
                layer.__dict__.pop(attr, None)
        return clone


class RMSProp:
    """``acc = rho*acc + (1-rho)*g^2``; ``p -= lr * g / sqrt(acc + eps)``."""

    def __init__(self, params: Sequence[Param], lr: float, rho: float = 0.9, eps: float = 1e-8):
        if lr <= 0:
            raise ValueError("learning rate must be positive")
        self.params = list(params)
        self.lr, self.rho, self.eps = lr, rho, eps
        self.acc = [np.zeros_like(p.data) for p in self.params]

    def step(self, grads: Sequence[np.ndarray] | None = None) -> None:
        grads = [p.grad for p in self.params] if grads is None else grads
        for p, a, g in zip(self.params, self.acc, grads):
            a *= self.rho
            a += (1.0 - self.rho) * g * g
            p.data -= self.lr * g / np.sqrt(a + self.eps)


def soft_update(target: Network, online: Network, tau: float) -> None:
    """``target <- tau * online + (1 - tau) * target``, in place."""
    if not 0.0 <= tau <= 1.0:
        raise ValueError("tau must lie in [0, 1]")
    for t, o in zip(target.params, online.params):
        t.data *= 1.0 - tau
        t.data += tau * o.data


# --- checkpoints ---------------------------------------------------------------------

def save_checkpoint(path: str | Path, networks: dict[str, Network],
                    optimizers: dict[str, RMSProp] | None = None,
                    extras: dict[str, np.ndarray] | None = None,
                    metadata: dict | None = None) -> None:
    """Write named networks (spec digest + flat parameters) and optimizer state to ``.npz``.

    ``extras`` are stored as plain arrays and ``metadata`` as a JSON string;
    read them back with :func:`checkpoint_extras`.
    """
    arrays = {"__version__": np.array(1)}
    for name, net in networks.items():
        arrays[f"{name}/digest"] = np.array(net.spec.digest())
        arrays[f"{name}/params"] = net.get_flat()
    for name, opt in (optimizers or {}).items():
        arrays[f"{name}/acc"] = np.concatenate([a.ravel() for a in opt.acc]) if opt.acc else np.zeros(0)
    for name, arr in (extras or {}).items():
        arrays[f"__extra__/{name}"] = np.asarray(arr)
    if metadata is not None:
        arrays["__metadata__"] = np.array(json.dumps(metadata, sort_keys=True))
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)


def checkpoint_extras(path: str | Path) -> tuple[dict, dict[str, np.ndarray]]:
    """``(metadata, extras)`` stored alongside the networks (empty if absent)."""
    with np.load(path) as data:
        meta = json.loads(str(data["__metadata__"])) if "__metadata__" in data else {}
        prefix = "__extra__/"
        extras = {k[len(prefix):]: data[k] for k in data.files if k.startswith(prefix)}
    return meta, extras


def load_checkpoint(path: str | Path, networks: dict[str, Network],
                    optimizers: dict[str, RMSProp] | None = None) -> None:
    """Restore into existing networks; refuses a checkpoint built from a different spec."""
    with np.load(path) as data:
        for name, net in networks.items():
            key = f"{name}/digest"
            if key not in data:
                raise CheckpointMismatch(f"checkpoint has no network {name!r}")
            if str(data[key]) != net.spec.digest():
                raise CheckpointMismatch(f"spec digest mismatch for {name!r}")
            net.set_flat(data[f"{name}/params"])
        for name, opt in (optimizers or {}).items():
            flat = data[f"{name}/acc"]
            k = 0
            for a in opt.acc:
                a[...] = flat[k:k + a.size].reshape(a.shape)
                k += a.size
