"""Visual embedding network: spatial configuration, mapper and fusion blocks."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .layers import Block, HiddenLayer, Linear


def spatial_config(b_h, b_o) -> np.ndarray:
    """Both boxes relative to the union box's min corner, divided by its area.

    Returns ``(x1, x2, y1, y2)`` for the human then the object.
    """
    b_h = np.asarray(b_h, dtype=np.float64)
    b_o = np.asarray(b_o, dtype=np.float64)
    for b in (b_h, b_o):
        if not (b[0] < b[2] and b[1] < b[3]):
            raise ValueError(f"invalid box {b.tolist()}")
    dx, dy = min(b_h[0], b_o[0]), min(b_h[1], b_o[1])
    area = (max(b_h[2], b_o[2]) - dx) * (max(b_h[3], b_o[3]) - dy)
    if area <= 0:
        raise ValueError("degenerate union box")
    out = []
    for b in (b_h, b_o):
        out += [(b[0] - dx) / area, (b[2] - dx) / area, (b[1] - dy) / area, (b[3] - dy) / area]
    return np.array(out)


def spatial_configs(B_h: np.ndarray, B_o: np.ndarray) -> np.ndarray:
    return np.stack([spatial_config(h, o) for h, o in zip(B_h, B_o)]) if len(B_h) else np.zeros((0, 8))


class MapperBlock(Block):
    """Single-entity features -> (interactiveness logit, embedding)."""

    def __init__(self, rng, d_in: int, hidden: int = 1024, d_v: int = 1024):
        self.hidden = HiddenLayer(rng, d_in, hidden)
        self.logit = Linear(rng, hidden, 1)
        self.embed = Linear(rng, hidden, d_v)

    def __call__(self, a: Tensor) -> tuple[Tensor, Tensor]:
        h = self.hidden(a)
        return self.logit(h), self.embed(h)


class FusionBlock(Block):
    """(human features, object features, spatial config) -> (logit, embedding)."""

    def __init__(self, rng, d_in: int, d_h: int = 512, d_o: int = 512, d_s: int = 256,
                 hidden: int = 1024, d_v: int = 1024):
        self.in_h = HiddenLayer(rng, d_in, d_h)
        self.in_o = HiddenLayer(rng, d_in, d_o)
        self.in_s = HiddenLayer(rng, 8, d_s)
        self.trunk = HiddenLayer(rng, d_h + d_o + d_s, hidden)
        self.logit = Linear(rng, hidden, 1)
        self.embed = Linear(rng, hidden, d_v)

    def joint(self, a_h: Tensor, a_o: Tensor, s: Tensor) -> Tensor:
        return ad.concat([self.in_h(a_h), self.in_o(a_o), self.in_s(s)], axis=1)

    def __call__(self, a_h: Tensor, a_o: Tensor, s: Tensor) -> tuple[Tensor, Tensor]:
        h = self.trunk(self.joint(a_h, a_o, s))
        return self.logit(h), self.embed(h)


@dataclass
class VisualEmbeddings:
    v: dict      # k in "hoat" -> (B, d_v) Tensor
    phi: dict    # k in "hoat" -> (B, 1) Tensor of logits

    def interactiveness_logit(self) -> Tensor:
        """Summed level logits, shape (B, 1)."""
        return ad.add(ad.add(self.phi["h"], self.phi["o"]), ad.add(self.phi["a"], self.phi["t"]))

    def interactiveness(self) -> Tensor:
        """sigmoid of the summed level logits, shape (B, 1)."""
        return ad.sigmoid(self.interactiveness_logit())


def interactiveness_tensor(phi: dict) -> Tensor:
    return VisualEmbeddings({}, phi).interactiveness()


def interactiveness(phi_h: float, phi_o: float, phi_a: float, phi_t: float) -> float:
    x = phi_h + phi_o + phi_a + phi_t
    return float(ad._sigmoid(np.array([x]))[0])


class VisualNet(Block):
    def __init__(self, rng, d_a: int, d_v: int = 1024, hidden: int = 1024,
                 fusion_widths: tuple[int, int, int] = (512, 512, 256)):
        self.mapper_h = MapperBlock(rng, d_a, hidden, d_v)
        self.mapper_o = MapperBlock(rng, d_a, hidden, d_v)
        self.fusion_a = FusionBlock(rng, d_a, *fusion_widths, hidden=hidden, d_v=d_v)
        self.fusion_t = FusionBlock(rng, d_a, *fusion_widths, hidden=hidden, d_v=d_v)
        self.d_v = d_v

    def __call__(self, a_h, a_o, s) -> VisualEmbeddings:
        a_h, a_o, s = (x if isinstance(x, Tensor) else Tensor(x) for x in (a_h, a_o, s))
        phi_h, v_h = self.mapper_h(a_h)
        phi_o, v_o = self.mapper_o(a_o)
        phi_a, v_a = self.fusion_a(a_h, a_o, s)
        phi_t, v_t = self.fusion_t(a_h, a_o, s)
        return VisualEmbeddings(v={"h": v_h, "o": v_o, "a": v_a, "t": v_t},
                                phi={"h": phi_h, "o": phi_o, "a": phi_a, "t": phi_t})


def mapper_forward(a_k, block: MapperBlock) -> tuple[Tensor, Tensor]:
    return block(a_k if isinstance(a_k, Tensor) else Tensor(a_k))


def fusion_forward(a_h, a_o, s, block: FusionBlock) -> tuple[Tensor, Tensor]:
    a_h, a_o, s = (x if isinstance(x, Tensor) else Tensor(x) for x in (a_h, a_o, s))
    return block(a_h, a_o, s)
