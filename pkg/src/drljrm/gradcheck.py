"""Central finite-difference check of the analytic gradients in :mod:`drljrm.nn`."""

from __future__ import annotations

from typing import NamedTuple

import numpy as np

from .nn import Network, NetworkSpec

__all__ = ["GradCheck", "check_gradients", "relative_error"]


class GradCheck(NamedTuple):
    param_error: float
    input_error: float

    @property
    def max_error(self) -> float:
        return max(self.param_error, self.input_error)


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-8) -> float:
    """Max elementwise ``|a - n| / max(|a| + |n|, floor)``."""
    denom = np.maximum(np.abs(analytic) + np.abs(numeric), floor)
    return float(np.max(np.abs(analytic - numeric) / denom)) if analytic.size else 0.0


def check_gradients(spec: NetworkSpec, batch: int = 3, seed: int = 0, eps: float = 1e-6,
                    max_params: int | None = 400) -> GradCheck:
    """Compare backprop against central differences of ``L = sum(y * R)``.

    ``R`` is a fixed random projection so every output unit contributes.
    At most ``max_params`` parameter coordinates (chosen at random) are
    probed; every input coordinate is probed.
    """
    rng = np.random.default_rng(seed)
    net = Network(spec, rng)
    # small random biases keep ReLU units away from their kink at zero
    flat = net.get_flat()
    net.set_flat(flat + 0.05 * rng.standard_normal(flat.size))
    x = rng.standard_normal((batch,) + tuple(spec.input_shape))
    proj = rng.standard_normal((batch,) + tuple(spec.output_shape))

    def loss(inp):
        return float(np.sum(net.forward(inp) * proj))

    net.zero_grad()
    net.forward(x)
    dx = net.backward(proj)
    grads = net.grad_flat()

    theta = net.get_flat()
    idx = np.arange(theta.size)
    if max_params is not None and theta.size > max_params:
        idx = rng.choice(theta.size, size=max_params, replace=False)
    num = np.empty(idx.size)
    for n, i in enumerate(idx):
        orig = theta[i]
        theta[i] = orig + eps
        net.set_flat(theta)
        up = loss(x)
        theta[i] = orig - eps
        net.set_flat(theta)
        down = loss(x)
        theta[i] = orig
        num[n] = (up - down) / (2 * eps)
    net.set_flat(theta)
    p_err = relative_error(grads[idx], num)

    num_x = np.empty(x.size)
    xf = x.ravel()
    for i in range(x.size):
        orig = xf[i]
        xf[i] = orig + eps
        up = loss(x)
        xf[i] = orig - eps
        down = loss(x)
        xf[i] = orig
        num_x[i] = (up - down) / (2 * eps)
    x_err = relative_error(dx.ravel(), num_x)
    return GradCheck(p_err, x_err)
