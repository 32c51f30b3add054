"""Multi-head graph attention over the consistency graph.

Each layer projects node states per head, scores every edge with a
LeakyReLU-activated linear map of the concatenated endpoint projections,
normalizes the scores with a softmax restricted to the node's neighbourhood
(self included), and aggregates. Hidden layers concatenate heads; the last
layer averages them.
"""
from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .layers import BatchNorm, Block, glorot

LEAKY_SLOPE = 0.2


class GatLayer(Block):
    def __init__(self, rng, d_in: int, d_head: int, heads: int, merge: str = "concat",
                 activation: bool = True, norm: bool = False):
        if merge not in ("concat", "average"):
            raise ValueError(f"merge must be 'concat' or 'average', got {merge!r}")
        self.merge = merge
        self.activation = activation
        self.d_head = d_head
        self.W = [Tensor(glorot(rng, d_in, d_head), requires_grad=True) for _ in range(heads)]
        # attention scorer per head, split into source and target halves
        self.att_src = [Tensor(glorot(rng, d_head, 1), requires_grad=True) for _ in range(heads)]
        self.att_dst = [Tensor(glorot(rng, d_head, 1), requires_grad=True) for _ in range(heads)]
        width = d_head * heads if merge == "concat" else d_head
        self.norm = BatchNorm(width) if norm else None

    @property
    def heads(self) -> int:
        return len(self.W)

    @property
    def out_dim(self) -> int:
        return self.d_head * (self.heads if self.merge == "concat" else 1)

    def _project(self, H: Tensor) -> list[Tensor]:
        return [ad.matmul(H, W) for W in self.W]

    def _attention(self, WH: Tensor, d: int, mask: np.ndarray) -> Tensor:
        src = ad.matmul(WH, self.att_src[d])                            # (N, 1)
        dst = ad.transpose(ad.matmul(WH, self.att_dst[d]))              # (1, N)
        logits = ad.leaky_relu(ad.outer_add(src, dst), LEAKY_SLOPE)
        return ad.masked_row_softmax(logits, mask)

    def attention(self, H: Tensor, mask: np.ndarray) -> list[Tensor]:
        return [self._attention(WH, d, mask) for d, WH in enumerate(self._project(H))]

    def __call__(self, H: Tensor, mask: np.ndarray) -> Tensor:
        outs = []
        for d, WH in enumerate(self._project(H)):
            mu = self._attention(WH, d, mask)
            outs.append(ad.matmul(mu, WH))
        if self.merge == "concat":
            out = ad.concat(outs, axis=1) if len(outs) > 1 else outs[0]
            if self.norm is not None:
                out = self.norm(out)
            return ad.relu(out) if self.activation else out
        if self.norm is not None:
            outs = [self.norm(o) for o in outs]
        if self.activation:
            outs = [ad.relu(o) for o in outs]
        total = outs[0]
        for o in outs[1:]:
            total = ad.add(total, o)
        return ad.scale(total, 1.0 / len(outs))


def attention_coefficients(H, adjacency: np.ndarray, layer: GatLayer) -> list[np.ndarray]:
    """Per-head attention matrices for one layer (rows sum to 1 over each neighbourhood)."""
    H = H if isinstance(H, Tensor) else Tensor(H)
    if H.shape[0] != adjacency.shape[0]:
        raise ValueError("feature rows do not match node count")
    return [mu.data for mu in layer.attention(H, adjacency)]


def gat_layer_forward(H, adjacency: np.ndarray, layer: GatLayer) -> Tensor:
    H = H if isinstance(H, Tensor) else Tensor(H)
    return layer(H, adjacency)


class GatStack(Block):
    """Stack of GAT layers mapping node word vectors to semantic embeddings."""

    def __init__(self, rng, d_in: int, d_out: int = 1024, depth: int = 3, heads: int = 8,
                 d_head: int | None = None, final_activation: bool = False, norm: bool = True):
        if depth < 1:
            raise ValueError("depth must be at least 1")
        d_head = d_head or d_out // heads
        hidden = d_head * heads
        self.layers = []
        width = d_in
        for i in range(depth):
            last = i == depth - 1
            if last:
                layer = GatLayer(rng, width, d_out, heads, merge="average", activation=final_activation)
            else:
                layer = GatLayer(rng, width, d_head, heads, merge="concat", norm=norm)
            self.layers.append(layer)
            width = hidden
        self.d_out = d_out

    def __call__(self, Z: Tensor, adjacency: np.ndarray) -> Tensor:
        if self.layers[-1].merge != "average":
            raise ValueError("final GAT layer must average its heads")
        H = Z
        for layer in self.layers:
            H = layer(H, adjacency)
        return H


class MlpEmbedder(Block):
    """Per-node MLP of the same depth and widths as a GatStack; ignores the graph."""

    def __init__(self, rng, d_in: int, d_out: int = 1024, depth: int = 3, hidden: int = 1024,
                 final_activation: bool = False, norm: bool = True):
        self.weights = []
        self.biases = []
        self.norms = []
        width = d_in
        for i in range(depth):
            last = i == depth - 1
            out = d_out if last else hidden
            self.weights.append(Tensor(glorot(rng, width, out), requires_grad=True))
            self.biases.append(Tensor(np.zeros((1, out)), requires_grad=True))
            if norm and not last:
                self.norms.append(BatchNorm(out))
            width = out
        self.final_activation = final_activation
        self.d_out = d_out

    def __call__(self, Z: Tensor, adjacency: np.ndarray | None = None) -> Tensor:
        H = Z
        last = len(self.weights) - 1
        for i, (W, b) in enumerate(zip(self.weights, self.biases)):
            H = ad.add(ad.matmul(H, W), b)
            if i < len(self.norms):
                H = self.norms[i](H)
            if i < last or self.final_activation:
                H = ad.relu(H)
        return H


def semantic_embed(graph, Z, stack) -> Tensor:
    """Semantic embedding per node (rows in node order)."""
    Z = Z if isinstance(Z, Tensor) else Tensor(Z)
    return stack(Z, graph.adjacency)
