"""Consistency graph: compositional edges plus top-k same-kind similarity edges."""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping

import numpy as np

from .embeddings import WordVectorTable, node_word_embedding
from .labels import LabelSpace, NodeId

# edge tag for same-kind similarity edges, per node kind
CONSISTENCY_TAGS = {"object": "functional", "action": "behavioral", "interaction": "interactional"}
COMPOSITIONAL = "compositional"


def consistency(z_i, z_j) -> float:
    """Cosine similarity of two joint features."""
    z_i = np.asarray(z_i, dtype=np.float64)
    z_j = np.asarray(z_j, dtype=np.float64)
    if z_i.shape != z_j.shape:
        raise ValueError("dimension mismatch")
    ni, nj = np.linalg.norm(z_i), np.linalg.norm(z_j)
    if ni == 0 or nj == 0:
        raise ValueError("zero vector")
    return float(z_i @ z_j / (ni * nj))


def top_k_peers(Z: np.ndarray, k: int) -> list[list[int]]:
    """For each row, the ``k`` most cosine-similar other rows.

    Ties go to the lower row index.
    """
    n = Z.shape[0]
    if k == 0:
        return [[] for _ in range(n)]
    if k >= n:
        raise ValueError(f"cannot pick top-{k} among {n - 1} peers")
    norms = np.linalg.norm(Z, axis=1, keepdims=True)
    if np.any(norms == 0):
        raise ValueError("zero joint feature")
    U = Z / norms
    sim = U @ U.T
    out = []
    for i in range(n):
        peers = [j for j in range(n) if j != i]
        # stable sort on -sim keeps the lower index first on ties
        order = sorted(peers, key=lambda j: -sim[i, j])
        out.append(sorted(order[:k]))
    return out


@dataclass(frozen=True)
class ConsistencyGraph:
    space: LabelSpace
    adjacency: np.ndarray          # (N, N) bool, symmetric, with self-loops
    edge_tags: dict                # (i, j) with i < j -> tag

    @property
    def num_nodes(self) -> int:
        return self.adjacency.shape[0]

    def neighbors(self, i: int) -> list[int]:
        return [int(j) for j in np.flatnonzero(self.adjacency[i])]

    def edges(self) -> list[tuple[int, int, str]]:
        return [(i, j, tag) for (i, j), tag in sorted(self.edge_tags.items())]

    def to_json(self) -> dict:
        nodes = [{"kind": n.kind, "label": self.space.node_label(n)} for n in self.space.nodes()]
        return {"nodes": nodes, "edges": [[i, j, t] for i, j, t in self.edges()]}

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json()))

    @classmethod
    def from_json(cls, space: LabelSpace, doc: dict) -> "ConsistencyGraph":
        n = space.num_nodes
        if len(doc["nodes"]) != n:
            raise ValueError("graph node count does not match label space")
        adj = np.eye(n, dtype=bool)
        tags = {}
        for i, j, t in doc["edges"]:
            adj[i, j] = adj[j, i] = True
            tags[(min(i, j), max(i, j))] = t
        return cls(space, adj, tags)

    @classmethod
    def load(cls, space: LabelSpace, path) -> "ConsistencyGraph":
        return cls.from_json(space, json.loads(Path(path).read_text()))


def build_graph(space: LabelSpace, joint_features: Mapping[str, np.ndarray],
                eps_a: int = 5, eps_o: int = 5, eps_t: int = 10) -> ConsistencyGraph:
    """Assemble the undirected consistency graph.

    ``joint_features`` maps ``"action"``, ``"object"`` and ``"interaction"``
    to matrices with one row per node of that kind. Directed top-k choices
    are symmetrized by union.
    """
    n = space.num_nodes
    adj = np.eye(n, dtype=bool)
    tags: dict[tuple[int, int], str] = {}

    def link(i, j, tag):
        key = (min(i, j), max(i, j))
        adj[i, j] = adj[j, i] = True
        # compositional wins if an edge has both origins
        if tags.get(key) != COMPOSITIONAL:
            tags[key] = tag

    rows = space.class_node_rows()
    for c in range(space.C):
        t = int(rows["t"][c])
        for key in ("h", "a", "o"):
            link(t, int(rows[key][c]), COMPOSITIONAL)

    for kind, eps in (("action", eps_a), ("object", eps_o), ("interaction", eps_t)):
        Z = np.asarray(joint_features[kind], dtype=np.float64)
        sl = space.kind_slice(kind)
        if Z.shape[0] != sl.stop - sl.start:
            raise ValueError(f"expected {sl.stop - sl.start} {kind} features, got {Z.shape[0]}")
        for i, peers in enumerate(top_k_peers(Z, eps)):
            for j in peers:
                link(sl.start + i, sl.start + j, CONSISTENCY_TAGS[kind])
    return ConsistencyGraph(space, adj, tags)


def node_feature_matrix(space: LabelSpace, table: WordVectorTable,
                        token_weights: Mapping[str, float] | None = None) -> np.ndarray:
    """Fused word vector per node, rows in node order."""
    return np.stack([node_word_embedding(space, node, table, token_weights) for node in space.nodes()])


def neighborhood_mask(graph: ConsistencyGraph) -> np.ndarray:
    return graph.adjacency.copy()


def node_of(space: LabelSpace, kind: str, index: int) -> int:
    return space.node_index(NodeId(kind, index))
