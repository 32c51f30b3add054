"""Candidate generation, non-interactive suppression and HOI scoring."""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .autodiff import Tensor, _sigmoid
from .embeddings import FeatureRecord, read_jsonl, write_jsonl
from .visual import spatial_configs


@dataclass
class Candidate:
    image_id: str
    b_h: tuple
    b_o: tuple
    c_h: float
    c_o: float
    a_h: np.ndarray
    a_o: np.ndarray
    u: int | None = None
    hoi_ids: tuple = ()

    def __post_init__(self):
        for c in (self.c_h, self.c_o):
            if not 0.0 <= c <= 1.0:
                raise ValueError(f"confidence {c} outside [0, 1]")
        if self.hoi_ids and self.u == 0:
            raise ValueError("negative candidates carry no HOI labels")

    def label_vector(self, C: int) -> np.ndarray:
        y = np.zeros(C)
        y[list(self.hoi_ids)] = 1.0
        return y


@dataclass
class Detection:
    image_id: str
    b_h: tuple
    b_o: tuple
    hoi_class: int
    score: float

    def to_json(self) -> dict:
        return {"image_id": self.image_id, "b_h": list(map(float, self.b_h)),
                "b_o": list(map(float, self.b_o)), "hoi": int(self.hoi_class), "score": float(self.score)}

    @classmethod
    def from_json(cls, d: dict) -> "Detection":
        return cls(str(d["image_id"]), tuple(d["b_h"]), tuple(d["b_o"]), int(d["hoi"]), float(d["score"]))


def save_detections(path, dets: Iterable[Detection]) -> None:
    write_jsonl(path, (d.to_json() for d in dets))


def load_detections(path) -> list[Detection]:
    return [Detection.from_json(d) for d in read_jsonl(path)]


@dataclass
class DetectConfig:
    theta_h: float = 0.5
    theta_o: float = 0.1
    n_h: int | None = 10
    n_o: int | None = 20
    theta_ho: float = 0.1
    classes: Sequence[int] | None = None


def _keep_top(dets: Sequence[FeatureRecord], theta: float, n: int | None) -> list[FeatureRecord]:
    kept = [d for d in dets if d.score > theta]
    kept.sort(key=lambda d: -d.score)   # stable: equal scores keep input order
    return kept if n is None else kept[:n]


def generate_candidates(humans: Sequence[FeatureRecord], objects: Sequence[FeatureRecord],
                        theta_h: float = 0.5, theta_o: float = 0.1,
                        n_h: int | None = 10, n_o: int | None = 20) -> list[Candidate]:
    """Threshold, cap and pair every surviving human with every surviving object."""
    hs = _keep_top(humans, theta_h, n_h)
    os_ = _keep_top(objects, theta_o, n_o)
    return [Candidate(h.image_id, tuple(h.box), tuple(o.box), h.score, o.score, h.feature, o.feature)
            for h in hs for o in os_]


def nis_filter(candidates: Sequence, phi: Sequence[float], theta_ho: float) -> list:
    """Keep candidates whose interactiveness is at least ``theta_ho``."""
    return [c for c, p in zip(candidates, phi) if p >= theta_ho]


def cosine(a, b) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        raise ValueError("zero-norm vector")
    return float(a @ b / (na * nb))


def classification_score(v: dict, s: dict, gamma: float = 8.0) -> float:
    """sigmoid(gamma * sum of cosines between visual and semantic embeddings per level)."""
    total = sum(cosine(v[k], s[k]) for k in ("h", "o", "a", "t"))
    return float(_sigmoid(np.array([gamma * total]))[0])


def detection_confidence(r: float, phi: float, c_h: float, c_o: float) -> float:
    return r * phi * c_h * c_o


def stack_candidates(cands: Sequence[Candidate]) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    a_h = np.stack([c.a_h for c in cands])
    a_o = np.stack([c.a_o for c in cands])
    s = spatial_configs(np.array([c.b_h for c in cands]), np.array([c.b_o for c in cands]))
    return a_h, a_o, s


def score_candidates(model, cands: Sequence[Candidate], S: Tensor | None, classes=None):
    """Interactiveness (B,) and class scores (B, C') on frozen parameters."""
    if not cands:
        n = model.C if classes is None else len(classes)
        return np.zeros(0), np.zeros((0, n))
    a_h, a_o, s = stack_candidates(cands)
    phi, r = model.forward(Tensor(a_h), Tensor(a_o), Tensor(s), S=S, classes=classes)
    return phi.data[:, 0], r.data


def detect(records: Sequence[FeatureRecord], model, S: Tensor | None, config: DetectConfig) -> list[Detection]:
    """Three-stage detection on one image's detector output."""
    humans = [r for r in records if r.kind == "human"]
    objects = [r for r in records if r.kind == "object"]
    cands = generate_candidates(humans, objects, config.theta_h, config.theta_o, config.n_h, config.n_o)
    if not cands:
        return []
    classes = np.arange(model.C) if config.classes is None else np.asarray(config.classes, dtype=int)
    phi, r = score_candidates(model, cands, S, classes)
    keep = [i for i, p in enumerate(phi) if p >= config.theta_ho]
    out = []
    for i in keep:
        c = cands[i]
        for j, cls in enumerate(classes):
            out.append(Detection(c.image_id, c.b_h, c.b_o, int(cls),
                                 detection_confidence(r[i, j], phi[i], c.c_h, c.c_o)))
    return out


def worker_count() -> int:
    try:
        return max(1, int(os.environ.get("CONSNET_THREADS", "1")))
    except ValueError:
        return 1


def detect_all(records: Sequence[FeatureRecord], model, config: DetectConfig,
               threads: int | None = None) -> list[Detection]:
    """Run :func:`detect` per image, optionally across worker threads.

    Output order follows first appearance of each image id.
    """
    model.eval()
    S = model.semantic_embeddings()
    by_image: dict[str, list[FeatureRecord]] = {}
    for r in records:
        by_image.setdefault(r.image_id, []).append(r)
    threads = threads or worker_count()
    groups = list(by_image.values())
    if threads == 1:
        results = [detect(g, model, S, config) for g in groups]
    else:
        with ThreadPoolExecutor(threads) as pool:
            results = list(pool.map(lambda g: detect(g, model, S, config), groups))
    return [d for res in results for d in res]
