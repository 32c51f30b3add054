"""Full scorer: visual network + semantic embedder + cosine classifier."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .gat import GatStack, MlpEmbedder
from .graph import ConsistencyGraph
from .layers import Block, Linear
from .visual import VisualEmbeddings, VisualNet

EMBEDDERS = ("gat", "mlp", "none")
LEVELS = ("h", "o", "a", "t")
NORM_EPS = 1e-8


@dataclass
class ModelConfig:
    d_a: int
    d_e: int
    d_v: int = 1024
    hidden: int = 1024
    fusion_widths: tuple = (512, 512, 256)
    embedder: str = "gat"
    depth: int = 3
    heads: int = 8
    d_head: int | None = None
    gamma: float = 8.0
    semantic_norm: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.embedder not in EMBEDDERS:
            raise ValueError(f"embedder must be one of {EMBEDDERS}")
        self.fusion_widths = tuple(self.fusion_widths)


class ConsNet(Block):
    """Scores candidate pairs against every HOI class.

    The graph and node word vectors are fixed inputs; everything else is
    learned.
    """

    def __init__(self, config: ModelConfig, graph: ConsistencyGraph, Z: np.ndarray):
        rng = np.random.default_rng(config.seed)
        self.config = config
        self.graph = graph
        self.Z = Tensor(Z)
        self.space = graph.space
        self.rows = self.space.class_node_rows()
        self.visual = VisualNet(rng, config.d_a, config.d_v, config.hidden, config.fusion_widths)
        if config.embedder == "gat":
            self.semantic = GatStack(rng, Z.shape[1], config.d_v, config.depth, config.heads, config.d_head,
                                     norm=config.semantic_norm)
        elif config.embedder == "mlp":
            hidden = (config.d_head or config.d_v // config.heads) * config.heads
            self.semantic = MlpEmbedder(rng, Z.shape[1], config.d_v, config.depth, hidden,
                                        norm=config.semantic_norm)
        else:
            self.semantic = None
            self.head = Linear(rng, 4 * config.d_v, self.space.C)

    @property
    def C(self) -> int:
        return self.space.C

    def semantic_embeddings(self) -> Tensor | None:
        """(N, d_v) node embeddings; recomputed from the current parameters."""
        if self.semantic is None:
            return None
        return self.semantic(self.Z, self.graph.adjacency)

    def visual_embeddings(self, a_h, a_o, s) -> VisualEmbeddings:
        return self.visual(a_h, a_o, s)

    def class_logits(self, vis: VisualEmbeddings, S: Tensor | None, classes=None) -> Tensor:
        """(B, C') pre-sigmoid classification scores."""
        classes = np.arange(self.C) if classes is None else np.asarray(classes, dtype=int)
        if self.semantic is None:
            z = self.head(ad.concat([vis.v[k] for k in LEVELS], axis=1))
            if len(classes) == self.C and np.array_equal(classes, np.arange(self.C)):
                return z
            return ad.transpose(ad.take_rows(ad.transpose(z), classes))
        S_hat = ad.row_l2_normalize(S, NORM_EPS)
        total = None
        for k in LEVELS:
            V_hat = ad.row_l2_normalize(vis.v[k], NORM_EPS)
            S_k = ad.take_rows(S_hat, self.rows[k][classes])
            cos = ad.matmul(V_hat, ad.transpose(S_k))
            total = cos if total is None else ad.add(total, cos)
        return ad.scale(total, self.config.gamma)

    def forward(self, a_h, a_o, s, S: Tensor | None = None, classes=None):
        """Returns (interactiveness (B,1), class scores r (B,C'))."""
        if S is None and self.semantic is not None:
            S = self.semantic_embeddings()
        vis = self.visual_embeddings(a_h, a_o, s)
        logits = self.class_logits(vis, S, classes)
        return vis.interactiveness(), ad.sigmoid(logits)

    def no_decay(self, name: str) -> bool:
        return any(part in ("gamma", "beta") for part in name.split("."))

    def state_dict(self) -> dict[str, np.ndarray]:
        out = {k: v.data for k, v in self.named_parameters().items()}
        out.update({f"buffer:{k}": v for k, v in self.named_buffers().items()})
        return out

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        params = self.named_parameters()
        buffers = self.named_buffers()
        expected = set(params) | {f"buffer:{k}" for k in buffers}
        if set(state) != expected:
            missing = sorted(expected - set(state))[:5]
            extra = sorted(set(state) - expected)[:5]
            raise ValueError(f"state mismatch: missing {missing}, unexpected {extra}")
        for k, p in params.items():
            if state[k].shape != p.data.shape:
                raise ValueError(f"shape mismatch for {k}")
            p.data[...] = state[k]
        for k, b in buffers.items():
            b[...] = state[f"buffer:{k}"]
