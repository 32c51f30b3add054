"""Pair-IoU average precision and subset mAP reporting."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .embeddings import read_jsonl, write_jsonl
from .pipeline import Detection

IOU_THRESHOLD = 0.5
RARE_THRESHOLD = 10


@dataclass
class GroundTruthPair:
    image_id: str
    b_h: tuple
    b_o: tuple
    hoi_ids: frozenset

    def __post_init__(self):
        self.hoi_ids = frozenset(int(i) for i in self.hoi_ids)
        if not self.hoi_ids:
            raise ValueError("ground-truth pair without HOI labels")


def load_ground_truth(path) -> list[GroundTruthPair]:
    out = []
    for doc in read_jsonl(path):
        for p in doc["pairs"]:
            out.append(GroundTruthPair(str(doc["image_id"]), tuple(p["b_h"]), tuple(p["b_o"]), p["hoi_ids"]))
    return out


def save_ground_truth(path, pairs: Sequence[GroundTruthPair]) -> None:
    by_image: dict[str, list] = {}
    for p in pairs:
        by_image.setdefault(p.image_id, []).append(
            {"b_h": list(map(float, p.b_h)), "b_o": list(map(float, p.b_o)), "hoi_ids": sorted(p.hoi_ids)})
    write_jsonl(path, ({"image_id": k, "pairs": v} for k, v in by_image.items()))


def box_iou(a, b) -> float:
    ax1, ay1, ax2, ay2 = map(float, a)
    bx1, by1, bx2, by2 = map(float, b)
    if not (ax1 < ax2 and ay1 < ay2 and bx1 < bx2 and by1 < by2):
        raise ValueError("degenerate box")
    iw = min(ax2, bx2) - max(ax1, bx1)
    ih = min(ay2, by2) - max(ay1, by1)
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    union = (ax2 - ax1) * (ay2 - ay1) + (bx2 - bx1) * (by2 - by1) - inter
    return inter / union


def pair_overlap(det_h, det_o, gt_h, gt_o) -> float:
    return min(box_iou(det_h, gt_h), box_iou(det_o, gt_o))


def match_detections(dets: Sequence[Detection], gts: Sequence[GroundTruthPair]) -> np.ndarray:
    """TP flags for one class's detections, already sorted by descending score.

    Each detection greedily claims the unmatched ground truth in its image
    with the highest pair overlap, provided that overlap exceeds 0.5.
    """
    by_image: dict[str, list[int]] = {}
    for g_idx, g in enumerate(gts):
        by_image.setdefault(g.image_id, []).append(g_idx)
    used = np.zeros(len(gts), dtype=bool)
    flags = np.zeros(len(dets), dtype=bool)
    for d_idx, d in enumerate(dets):
        best, best_ov = -1, IOU_THRESHOLD
        for g_idx in by_image.get(d.image_id, ()):
            if used[g_idx]:
                continue
            ov = pair_overlap(d.b_h, d.b_o, gts[g_idx].b_h, gts[g_idx].b_o)
            if ov > best_ov:
                best, best_ov = g_idx, ov
        if best >= 0:
            used[best] = True
            flags[d_idx] = True
    return flags


def average_precision(flags: Sequence[bool], num_gt: int) -> float:
    """All-point interpolated AP of a ranked TP/FP list."""
    if num_gt <= 0:
        return 0.0
    flags = np.asarray(flags, dtype=bool)
    if flags.size == 0:
        return 0.0
    tp = np.cumsum(flags)
    fp = np.cumsum(~flags)
    recall = tp / num_gt
    precision = tp / (tp + fp)
    mrec = np.concatenate([[0.0], recall, [1.0]])
    mpre = np.concatenate([[0.0], precision, [0.0]])
    mpre = np.maximum.accumulate(mpre[::-1])[::-1]
    idx = np.flatnonzero(mrec[1:] != mrec[:-1])
    return float(np.sum((mrec[idx + 1] - mrec[idx]) * mpre[idx + 1]))


def sort_by_score(dets: Sequence[Detection]) -> list[Detection]:
    """Descending score; equal scores keep input order."""
    return sorted(dets, key=lambda d: -d.score)


def per_class_ap(detections: Sequence[Detection], ground_truth: Sequence[GroundTruthPair],
                 num_classes: int) -> tuple[np.ndarray, np.ndarray]:
    """(AP per class, GT count per class)."""
    dets_by_class: dict[int, list[Detection]] = {}
    for d in detections:
        if not 0 <= d.hoi_class < num_classes:
            raise ValueError(f"detection class {d.hoi_class} out of range")
        dets_by_class.setdefault(d.hoi_class, []).append(d)
    gts_by_class: dict[int, list[GroundTruthPair]] = {}
    for g in ground_truth:
        for c in g.hoi_ids:
            gts_by_class.setdefault(c, []).append(g)
    ap = np.zeros(num_classes)
    counts = np.zeros(num_classes, dtype=int)
    for c in range(num_classes):
        gts = gts_by_class.get(c, [])
        counts[c] = len(gts)
        if not gts:
            continue
        dets = sort_by_score(dets_by_class.get(c, []))
        ap[c] = average_precision(match_detections(dets, gts), len(gts))
    return ap, counts


@dataclass
class EvalReport:
    ap: np.ndarray
    num_gt: np.ndarray
    mode: str
    subsets: dict = field(default_factory=dict)     # name -> class ids

    def _mean(self, ids: Iterable[int]) -> float:
        ids = [i for i in ids if self.num_gt[i] > 0]
        return float(np.mean(self.ap[ids])) if ids else 0.0

    @property
    def mAP_full(self) -> float:
        return self._mean(range(len(self.ap)))

    def subset_map(self, name: str) -> float:
        return self._mean(self.subsets[name])

    def to_json(self) -> dict:
        doc = {"mode": self.mode, "mAP_full": self.mAP_full,
               "per_class": [{"hoi": i, "ap": float(a), "num_gt": int(n)}
                             for i, (a, n) in enumerate(zip(self.ap, self.num_gt))]}
        for name in self.subsets:
            doc[f"mAP_{name}"] = self.subset_map(name)
        return doc

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=1))


def evaluate(detections: Sequence[Detection], ground_truth: Sequence[GroundTruthPair], space,
             split_mode: str = "full", unseen: Iterable[int] = (),
             train_counts: Mapping[int, int] | Sequence[int] | None = None,
             rare_threshold: int = RARE_THRESHOLD) -> EvalReport:
    """Per-class AP plus subset means.

    ``split_mode="zero_shot"`` reports seen/unseen; ``"supervised"`` reports
    rare/non_rare using ``train_counts``; ``"full"`` reports only the full mean.
    """
    ap, counts = per_class_ap(detections, ground_truth, space.C)
    subsets = {}
    if split_mode == "zero_shot":
        unseen = set(int(i) for i in unseen)
        subsets["seen"] = [i for i in range(space.C) if i not in unseen]
        subsets["unseen"] = sorted(unseen)
    elif split_mode == "supervised":
        if train_counts is None:
            raise ValueError("supervised mode needs training counts")
        tc = [train_counts[i] if not isinstance(train_counts, Mapping) else train_counts.get(i, 0)
              for i in range(space.C)]
        subsets["rare"] = [i for i in range(space.C) if tc[i] < rare_threshold]
        subsets["non_rare"] = [i for i in range(space.C) if tc[i] >= rare_threshold]
    elif split_mode != "full":
        raise ValueError(f"unknown split mode {split_mode!r}")
    return EvalReport(ap, counts, split_mode, subsets)
