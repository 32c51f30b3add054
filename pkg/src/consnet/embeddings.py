"""Word vectors, visual feature records and visual-semantic joint features."""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .labels import HUMAN_LABEL, LabelSpace, NodeId, tokenize_label


class WordVectorTable:
    """Token -> vector lookup with a uniform dimension."""

    def __init__(self, vectors: Mapping[str, Sequence[float]]):
        if not vectors:
            raise ValueError("empty word vector table")
        self._vecs = {}
        dim = None
        for tok, v in vectors.items():
            v = np.asarray(v, dtype=np.float64)
            if v.ndim != 1:
                raise ValueError(f"vector for {tok!r} is not 1-D")
            if dim is None:
                dim = v.shape[0]
            elif v.shape[0] != dim:
                raise ValueError(f"vector for {tok!r} has dim {v.shape[0]}, expected {dim}")
            if not np.any(v):
                raise ValueError(f"zero vector for {tok!r}")
            self._vecs[tok.lower()] = v
        self.dim = dim

    def __contains__(self, token: str) -> bool:
        return token.lower() in self._vecs

    def __getitem__(self, token: str) -> np.ndarray:
        try:
            return self._vecs[token.lower()]
        except KeyError:
            raise KeyError(f"token {token!r} not in word vector table") from None

    def __len__(self) -> int:
        return len(self._vecs)

    def tokens(self) -> list[str]:
        return list(self._vecs)

    def save(self, path) -> None:
        with open(path, "w") as fh:
            for tok, v in self._vecs.items():
                fh.write(json.dumps({"token": tok, "vector": v.tolist()}) + "\n")

    @classmethod
    def load(cls, path) -> "WordVectorTable":
        vecs = {}
        for rec in read_jsonl(path):
            vecs[rec["token"]] = rec["vector"]
        return cls(vecs)


@dataclass
class FeatureRecord:
    image_id: str
    box: tuple[float, float, float, float]
    label: str
    kind: str
    score: float
    feature: np.ndarray

    def __post_init__(self):
        x1, y1, x2, y2 = self.box
        if not (x1 < x2 and y1 < y2):
            raise ValueError(f"degenerate box {self.box}")
        if not 0.0 <= self.score <= 1.0:
            raise ValueError(f"score {self.score} outside [0, 1]")
        if self.kind not in ("human", "object"):
            raise ValueError(f"kind must be 'human' or 'object', got {self.kind!r}")
        self.feature = np.asarray(self.feature, dtype=np.float64)

    def to_json(self) -> dict:
        return {"image_id": self.image_id, "box": list(map(float, self.box)), "label": self.label,
                "kind": self.kind, "score": float(self.score), "feature": self.feature.tolist()}

    @classmethod
    def from_json(cls, doc: dict) -> "FeatureRecord":
        return cls(str(doc["image_id"]), tuple(doc["box"]), doc["label"], doc["kind"],
                   float(doc["score"]), np.asarray(doc["feature"], dtype=np.float64))


def read_jsonl(path) -> Iterable[dict]:
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if line:
                yield json.loads(line)


def write_jsonl(path, docs: Iterable[dict]) -> None:
    with open(path, "w") as fh:
        for d in docs:
            fh.write(json.dumps(d) + "\n")


def load_records(path) -> list[FeatureRecord]:
    return [FeatureRecord.from_json(d) for d in read_jsonl(path)]


def save_records(path, records: Iterable[FeatureRecord]) -> None:
    write_jsonl(path, (r.to_json() for r in records))


def universal_visual_rep(groups: Mapping[str, Sequence[np.ndarray]]) -> dict[str, np.ndarray]:
    """Mean feature per label."""
    out = {}
    for label, feats in groups.items():
        if len(feats) == 0:
            raise ValueError(f"label {label!r} has no records")
        out[label] = np.mean(np.stack([np.asarray(f, dtype=np.float64) for f in feats]), axis=0)
    return out


def group_records(records: Iterable[FeatureRecord], kind: str) -> dict[str, list[np.ndarray]]:
    groups: dict[str, list[np.ndarray]] = {}
    for r in records:
        if r.kind == kind:
            groups.setdefault(r.label, []).append(r.feature)
    return groups


def fuse_word_embedding(table: WordVectorTable, tokens: Sequence[str],
                        weights: Sequence[float] | None = None) -> np.ndarray:
    """Weighted sum of token vectors; uniform mean when ``weights`` is None."""
    if not tokens:
        raise ValueError("no tokens to fuse")
    vecs = np.stack([table[t] for t in tokens])
    if weights is None:
        return vecs.mean(axis=0)
    w = np.asarray(weights, dtype=np.float64)
    if w.shape != (len(tokens),):
        raise ValueError("one weight per token required")
    return w @ vecs


def label_embedding(table: WordVectorTable, label: str,
                    token_weights: Mapping[str, float] | None = None) -> np.ndarray:
    toks = tokenize_label(label)
    weights = None
    if token_weights:
        w = np.array([token_weights.get(t, 1.0) for t in toks])
        weights = w / w.sum()
    return fuse_word_embedding(table, toks, weights)


def node_word_embedding(space: LabelSpace, node: NodeId, table: WordVectorTable,
                        token_weights: Mapping[str, float] | None = None) -> np.ndarray:
    """Fused word vector for a node; interactions average their three constituents."""
    if node.kind == "interaction":
        a, o = space.hois[node.index]
        parts = [label_embedding(table, HUMAN_LABEL, token_weights),
                 label_embedding(table, space.actions[a], token_weights),
                 label_embedding(table, space.objects[o], token_weights)]
        return np.mean(parts, axis=0)
    return label_embedding(table, space.node_label(node), token_weights)


def joint_feature(q: np.ndarray | None, e: np.ndarray, rho_v: float = 1.0, rho_s: float = 1.0,
                  visual_dim: int | None = None) -> np.ndarray:
    """``(rho_v * q/|q|) || (rho_s * e/|e|)``.

    ``q=None`` stands for a category without visual records: the visual half
    is zero-filled (``visual_dim`` wide).
    """
    if rho_v < 0 or rho_s < 0:
        raise ValueError("weights must be non-negative")
    e = np.asarray(e, dtype=np.float64)
    ne = np.linalg.norm(e)
    if ne == 0:
        raise ValueError("zero-norm semantic vector")
    if q is None:
        if visual_dim is None:
            raise ValueError("visual_dim required when q is missing")
        vis = np.zeros(visual_dim)
    else:
        q = np.asarray(q, dtype=np.float64)
        nq = np.linalg.norm(q)
        if nq == 0:
            raise ValueError("zero-norm visual vector")
        vis = rho_v * q / nq
    return np.concatenate([vis, rho_s * e / ne])


def node_joint_features(space: LabelSpace, records: Sequence[FeatureRecord], table: WordVectorTable,
                        rho_v: float = 1.0, rho_s: float = 1.0,
                        token_weights: Mapping[str, float] | None = None) -> dict[str, np.ndarray]:
    """Joint features for every action, object and interaction node.

    Returns one matrix per kind (``"action"``, ``"object"``, ``"interaction"``)
    with rows in node order. Human crops are grouped by the action they
    perform, object crops by object name; an interaction's visual part is its
    action's mean next to its object's mean.
    """
    q_act = universal_visual_rep(group_records(records, "human"))
    q_obj = universal_visual_rep(group_records(records, "object"))
    dims = {len(v) for v in list(q_act.values()) + list(q_obj.values())}
    if len(dims) > 1:
        raise ValueError("visual features have inconsistent dimensions")
    d_a = dims.pop() if dims else 1
    # missing visual means are zero-filled before normalization (see joint_feature)
    qa = [q_act.get(a) for a in space.actions]
    qo = [q_obj.get(o) for o in space.objects]

    acts = np.stack([joint_feature(q, node_word_embedding(space, NodeId("action", i), table, token_weights),
                                   rho_v, rho_s, d_a) for i, q in enumerate(qa)])
    objs = np.stack([joint_feature(q, node_word_embedding(space, NodeId("object", i), table, token_weights),
                                   rho_v, rho_s, d_a) for i, q in enumerate(qo)])
    inter = []
    for t, (a, o) in enumerate(space.hois):
        e = node_word_embedding(space, NodeId("interaction", t), table, token_weights)
        qa_t = qa[a] if qa[a] is not None else np.zeros(d_a)
        qo_t = qo[o] if qo[o] is not None else np.zeros(d_a)
        q = np.concatenate([qa_t, qo_t])
        inter.append(joint_feature(q if np.any(q) else None, e, rho_v, rho_s, 2 * d_a))
    return {"action": acts, "object": objs, "interaction": np.stack(inter)}
