"""Layers built on the autodiff primitives: linear, MLP, LSTM cell."""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .autodiff import ShapeError, Tensor


def xavier_uniform(rng: np.random.Generator, fan_in: int, fan_out: int,
                   shape: tuple[int, ...]) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


class Module:
    """Minimal parameter container; submodules are discovered by attribute."""

    def params(self, prefix: str = "") -> dict[str, Tensor]:
        out: dict[str, Tensor] = {}
        for key, val in vars(self).items():
            name = f"{prefix}{key}" if not prefix else f"{prefix}.{key}"
            if isinstance(val, Tensor) and val.requires_grad:
                out[name] = val
            elif isinstance(val, Module):
                out.update(val.params(name))
            elif isinstance(val, (list, tuple)):
                for i, item in enumerate(val):
                    if isinstance(item, Module):
                        out.update(item.params(f"{name}.{i}"))
        return out


class Linear(Module):
    def __init__(self, rng: np.random.Generator, in_dim: int, out_dim: int):
        self.w = Tensor(xavier_uniform(rng, in_dim, out_dim, (in_dim, out_dim)),
                        requires_grad=True)
        self.b = Tensor(np.zeros(out_dim), requires_grad=True)

    def __call__(self, x: Tensor) -> Tensor:
        return ad.add(ad.matmul(x, self.w), self.b)


class MLP(Module):
    """Stack of linear layers with ReLU between them (none after the last)."""

    def __init__(self, rng: np.random.Generator, in_dim: int, widths: list[int]):
        dims = [in_dim] + list(widths)
        self.layers = [Linear(rng, dims[i], dims[i + 1]) for i in range(len(dims) - 1)]

    def __call__(self, x: Tensor) -> Tensor:
        for i, layer in enumerate(self.layers):
            x = layer(x)
            if i < len(self.layers) - 1:
                x = ad.relu(x)
        return x


class LSTMCell(Module):
    """Single LSTM cell; gate order along the packed axis is i, f, g, o.

    The forget-gate bias is initialized to 1.0.
    """

    def __init__(self, rng: np.random.Generator, in_dim: int, hidden_dim: int):
        self.hidden_dim = hidden_dim
        self.wx = Tensor(xavier_uniform(rng, in_dim, 4 * hidden_dim, (in_dim, 4 * hidden_dim)),
                         requires_grad=True)
        self.wh = Tensor(xavier_uniform(rng, hidden_dim, 4 * hidden_dim,
                                        (hidden_dim, 4 * hidden_dim)),
                         requires_grad=True)
        bias = np.zeros(4 * hidden_dim)
        bias[hidden_dim:2 * hidden_dim] = 1.0
        self.b = Tensor(bias, requires_grad=True)

    def step(self, x: Tensor, h: Tensor, c: Tensor) -> tuple[Tensor, Tensor]:
        hd = self.hidden_dim
        if x.shape[0] != h.shape[0] or h.shape[1] != hd or c.shape != h.shape:
            raise ShapeError(f"lstm step: x {x.shape}, h {h.shape}, c {c.shape}, hidden {hd}")
        gates = ad.add(ad.add(ad.matmul(x, self.wx), ad.matmul(h, self.wh)), self.b)
        i = ad.sigmoid(ad.narrow(gates, -1, 0, hd))
        f = ad.sigmoid(ad.narrow(gates, -1, hd, hd))
        g = ad.tanh(ad.narrow(gates, -1, 2 * hd, hd))
        o = ad.sigmoid(ad.narrow(gates, -1, 3 * hd, hd))
        c_new = ad.add(ad.mul(f, c), ad.mul(i, g))
        h_new = ad.mul(o, ad.tanh(c_new))
        return h_new, c_new

    def initial_state(self, batch: int) -> tuple[Tensor, Tensor]:
        return (Tensor(np.zeros((batch, self.hidden_dim))),
                Tensor(np.zeros((batch, self.hidden_dim))))
