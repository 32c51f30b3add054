"""Parameter containers shared by the visual and semantic networks."""
from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor


def glorot(rng: np.random.Generator, fan_in: int, fan_out: int, shape=None) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape or (fan_in, fan_out))


class Block:
    """Anything holding parameters, buffers or child blocks as attributes.

    Names follow attribute paths (``"mapper_h.fc.weight"``). Parameters are
    ``Tensor`` attributes with ``requires_grad``; buffers are numpy arrays
    listed in ``_buffers``.
    """

    _buffers: tuple[str, ...] = ()
    training: bool = True

    def named_parameters(self, prefix: str = "") -> dict[str, Tensor]:
        out = {}
        for name, val in vars(self).items():
            if isinstance(val, Tensor) and val.requires_grad:
                out[prefix + name] = val
            elif isinstance(val, Block):
                out.update(val.named_parameters(f"{prefix}{name}."))
            elif isinstance(val, (list, tuple)):
                for i, item in enumerate(val):
                    if isinstance(item, Block):
                        out.update(item.named_parameters(f"{prefix}{name}.{i}."))
                    elif isinstance(item, Tensor) and item.requires_grad:
                        out[f"{prefix}{name}.{i}"] = item
        return out

    def named_buffers(self, prefix: str = "") -> dict[str, np.ndarray]:
        out = {prefix + b: getattr(self, b) for b in self._buffers}
        for name, val in vars(self).items():
            if isinstance(val, Block):
                out.update(val.named_buffers(f"{prefix}{name}."))
            elif isinstance(val, (list, tuple)):
                for i, item in enumerate(val):
                    if isinstance(item, Block):
                        out.update(item.named_buffers(f"{prefix}{name}.{i}."))
        return out

    def parameters(self) -> list[Tensor]:
        return list(self.named_parameters().values())

    def train(self, mode: bool = True) -> "Block":
        self.training = mode
        for val in vars(self).values():
            children = val if isinstance(val, (list, tuple)) else [val]
            for c in children:
                if isinstance(c, Block):
                    c.train(mode)
        return self

    def eval(self) -> "Block":
        return self.train(False)


class Linear(Block):
    def __init__(self, rng, d_in: int, d_out: int, bias: bool = True):
        self.weight = Tensor(glorot(rng, d_in, d_out), requires_grad=True)
        self.bias = Tensor(np.zeros((1, d_out)), requires_grad=True) if bias else None

    def __call__(self, x: Tensor) -> Tensor:
        y = ad.matmul(x, self.weight)
        return ad.add(y, self.bias) if self.bias is not None else y


class BatchNorm(Block):
    _buffers = ("running_mean", "running_var")

    def __init__(self, dim: int):
        self.gamma = Tensor(np.ones((1, dim)), requires_grad=True)
        self.beta = Tensor(np.zeros((1, dim)), requires_grad=True)
        self.running_mean = np.zeros((1, dim), dtype=ad.get_default_dtype())
        self.running_var = np.ones((1, dim), dtype=ad.get_default_dtype())

    def __call__(self, x: Tensor) -> Tensor:
        return ad.batch_norm(x, self.gamma, self.beta, self.running_mean, self.running_var,
                             training=self.training)


class HiddenLayer(Block):
    """Linear -> batch norm -> ReLU. The linear map has no bias (batch norm absorbs it)."""

    def __init__(self, rng, d_in: int, d_out: int, norm: bool = True):
        self.fc = Linear(rng, d_in, d_out, bias=not norm)
        self.norm = BatchNorm(d_out) if norm else None

    def __call__(self, x: Tensor) -> Tensor:
        h = self.fc(x)
        if self.norm is not None:
            h = self.norm(h)
        return ad.relu(h)
