"""Losses, learning-rate schedule, momentum SGD and the training loop."""
from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import NonFiniteError, Tape, Tensor, backward
from .embeddings import FeatureRecord
from .evaluate import GroundTruthPair, box_iou
from .pipeline import Candidate, generate_candidates, stack_candidates
from .visual import VisualEmbeddings

log = logging.getLogger(__name__)

PROB_CLAMP = 1e-12
LOG_CLAMP_LO = math.log(PROB_CLAMP)
LOG_CLAMP_HI = math.log1p(-PROB_CLAMP)


class TrainingError(RuntimeError):
    pass


@dataclass
class TrainConfig:
    lr0: float = 0.01
    momentum: float = 0.9
    weight_decay: float = 1e-4
    warmup_start_lr: float = 0.001
    warmup_iters: int = 500
    epochs: int = 5
    batch_size: int = 64
    pos_neg_ratio: tuple = (1, 3)
    eta: float = 1.0
    sample_weighting: str = "uniform"       # or "inverse_frequency"
    seed: int = 0

    def __post_init__(self):
        self.pos_neg_ratio = tuple(self.pos_neg_ratio)
        if self.sample_weighting not in ("uniform", "inverse_frequency"):
            raise ValueError(f"unknown sample weighting {self.sample_weighting!r}")

    @property
    def positives_per_batch(self) -> int:
        p, n = self.pos_neg_ratio
        return max(1, round(self.batch_size * p / (p + n)))

    @property
    def negatives_per_batch(self) -> int:
        return self.batch_size - self.positives_per_batch


@dataclass
class LossRecord:
    step: int
    lr: float
    L_i: float
    L_c: float
    L: float


# ------------------------------------------------------------------ losses


def _bce(p: Tensor, y: np.ndarray) -> Tensor:
    """Elementwise binary cross-entropy on clamped probabilities."""
    p = ad.clip(p, PROB_CLAMP, 1.0 - PROB_CLAMP)
    y = np.asarray(y, dtype=p.data.dtype).reshape(p.shape)
    pos = ad.mul_const(ad.log(p), y)
    neg = ad.mul_const(ad.log(ad.add_scalar(ad.scale(p, -1.0), 1.0)), 1.0 - y)
    return ad.scale(ad.add(pos, neg), -1.0)


def _bce_logits(z: Tensor, y: np.ndarray) -> Tensor:
    """Same loss as ``_bce(sigmoid(z), y)``, evaluated in log space.

    1 - sigmoid(z) loses all precision once sigmoid(z) is close to 1;
    log sigmoid(-z) does not. The clamp becomes a clip on log-probabilities.
    """
    y = np.asarray(y, dtype=z.data.dtype).reshape(z.shape)
    log_p = ad.clip(ad.log_sigmoid(z), LOG_CLAMP_LO, LOG_CLAMP_HI)
    log_q = ad.clip(ad.log_sigmoid(ad.scale(z, -1.0)), LOG_CLAMP_LO, LOG_CLAMP_HI)
    return ad.scale(ad.add(ad.mul_const(log_p, y), ad.mul_const(log_q, 1.0 - y)), -1.0)


def interactiveness_loss(phi, u, logits: bool = False) -> Tensor:
    """Mean binary cross-entropy of interactiveness over the batch.

    With ``logits=True``, ``phi`` holds pre-sigmoid values.
    """
    phi = phi if isinstance(phi, Tensor) else Tensor(np.reshape(phi, (-1, 1)))
    bce = _bce_logits if logits else _bce
    return ad.mean_all(bce(phi, np.reshape(u, phi.shape)))


def classification_loss(r, y, weights=None, logits: bool = False) -> Tensor:
    """Per-sample mean over classes of BCE, then a (weighted) mean over samples."""
    r = r if isinstance(r, Tensor) else Tensor(np.atleast_2d(r))
    y = np.reshape(y, r.shape)
    bce = _bce_logits if logits else _bce
    per_sample = ad.scale(ad.row_sum(bce(r, y)), 1.0 / r.shape[1])   # (P, 1)
    if weights is None:
        return ad.mean_all(per_sample)
    w = np.asarray(weights, dtype=np.float64).reshape(-1, 1)
    return ad.scale(ad.sum_all(ad.mul_const(per_sample, w)), 1.0 / w.sum())


def total_loss(L_i: Tensor, L_c: Tensor | None, eta: float) -> Tensor:
    if eta < 0:
        raise ValueError("eta must be non-negative")
    if L_c is None or eta == 0:
        return L_i
    return ad.add(L_i, ad.scale(L_c, eta))


# -------------------------------------------------------------- schedule/SGD


def lr_at(step: int, config: TrainConfig, total_steps: int | None = None) -> float:
    """Linear warm-up to ``lr0`` then cosine annealing to zero at ``total_steps``."""
    if step < 0:
        raise ValueError("step must be non-negative")
    w = config.warmup_iters
    if step < w:
        return config.warmup_start_lr + (config.lr0 - config.warmup_start_lr) * step / w
    if total_steps is None or total_steps <= w:
        return config.lr0
    progress = min(1.0, (step - w) / (total_steps - w))
    return config.lr0 * 0.5 * (1.0 + math.cos(math.pi * progress))


class SGD:
    """Momentum SGD with L2 weight decay (torch update convention)."""

    def __init__(self, named_params: dict, momentum: float, weight_decay: float, no_decay=lambda n: False):
        self.params = named_params
        self.momentum = momentum
        self.decay = {n: (0.0 if no_decay(n) else weight_decay) for n in named_params}
        self.buffers: dict[str, np.ndarray] = {}

    def step(self, grads: dict, lr: float) -> None:
        for name, p in self.params.items():
            g = grads[p]
            decay = self.decay[name]
            buf = self.buffers.get(name)
            if buf is None:
                buf = self.buffers[name] = g.copy()
            else:
                buf *= self.momentum
                buf += g
            if decay:
                buf += decay * p.data
            p.data -= lr * buf


# ------------------------------------------------------------ training data


@dataclass
class TrainingSet:
    """Stacked arrays for labeled candidates."""

    a_h: np.ndarray
    a_o: np.ndarray
    s: np.ndarray
    u: np.ndarray            # (n,)
    y: np.ndarray            # (n, C)
    image_ids: list = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.u)

    @classmethod
    def from_candidates(cls, cands: Sequence[Candidate], C: int) -> "TrainingSet":
        if not cands:
            raise ValueError("empty training set")
        a_h, a_o, s = stack_candidates(cands)
        u = np.array([1.0 if c.u else 0.0 for c in cands])
        y = np.stack([c.label_vector(C) for c in cands])
        return cls(a_h, a_o, s, u, y, [c.image_id for c in cands])


def label_candidates(cands: Sequence[Candidate], gts: Sequence[GroundTruthPair],
                     iou: float = 0.5) -> list[Candidate]:
    """Positive iff both boxes overlap some annotated pair with IoU >= ``iou``."""
    by_image: dict[str, list[GroundTruthPair]] = {}
    for g in gts:
        by_image.setdefault(g.image_id, []).append(g)
    out = []
    for c in cands:
        labels = set()
        for g in by_image.get(c.image_id, ()):
            if box_iou(c.b_h, g.b_h) >= iou and box_iou(c.b_o, g.b_o) >= iou:
                labels |= g.hoi_ids
        out.append(Candidate(c.image_id, c.b_h, c.b_o, c.c_h, c.c_o, c.a_h, c.a_o,
                             u=1 if labels else 0, hoi_ids=tuple(sorted(labels))))
    return out


def build_training_candidates(detections: Sequence[FeatureRecord], gts: Sequence[GroundTruthPair],
                              crops: Sequence[FeatureRecord] = (), theta: float = 0.1) -> list[Candidate]:
    """Detected pairs above ``theta`` (no cap), labeled, plus annotated pairs.

    Annotated pairs take their features from ``crops`` (records whose boxes
    equal the annotated boxes); pairs without a matching crop are skipped.
    """
    by_image: dict[str, list[FeatureRecord]] = {}
    for r in detections:
        by_image.setdefault(r.image_id, []).append(r)
    cands = []
    for img, recs in by_image.items():
        humans = [r for r in recs if r.kind == "human"]
        objects = [r for r in recs if r.kind == "object"]
        cands += generate_candidates(humans, objects, theta, theta, None, None)
    out = label_candidates(cands, gts)
    crop_index = {(r.image_id, r.kind, tuple(map(float, r.box))): r.feature for r in crops}
    for g in gts:
        fh = crop_index.get((g.image_id, "human", tuple(map(float, g.b_h))))
        fo = crop_index.get((g.image_id, "object", tuple(map(float, g.b_o))))
        if fh is None or fo is None:
            continue
        out.append(Candidate(g.image_id, tuple(g.b_h), tuple(g.b_o), 1.0, 1.0, fh, fo,
                             u=1, hoi_ids=tuple(sorted(g.hoi_ids))))
    return out


def sample_weights(y: np.ndarray, mode: str) -> np.ndarray | None:
    if mode == "uniform":
        return None
    counts = y.sum(axis=0)
    inv = np.where(counts > 0, counts.sum() / np.maximum(counts, 1) / max(1, (counts > 0).sum()), 0.0)
    w = (y * inv).sum(axis=1) / np.maximum(y.sum(axis=1), 1)
    return w


def batch_schedule(data: TrainingSet, config: TrainConfig, rng: np.random.Generator) -> list[np.ndarray]:
    """Index arrays for one epoch: each batch mixes positives and negatives at the configured ratio."""
    pos = np.flatnonzero(data.u > 0)
    neg = np.flatnonzero(data.u == 0)
    if len(pos) == 0:
        raise TrainingError("no positive samples")
    pos = rng.permutation(pos)
    neg = rng.permutation(neg)
    n_pos, n_neg = config.positives_per_batch, config.negatives_per_batch
    batches = []
    cursor = 0
    for start in range(0, len(pos), n_pos):
        chunk = pos[start:start + n_pos]
        take = []
        if len(neg):
            want = n_neg * len(chunk) // n_pos
            idx = (cursor + np.arange(want)) % len(neg)
            cursor = (cursor + want) % len(neg)
            take = neg[idx]
        batch = np.concatenate([chunk, take]).astype(int)
        if len(batch) >= 2:
            batches.append(batch)
    return batches


def steps_per_epoch(data: TrainingSet, config: TrainConfig) -> int:
    n_pos = int((data.u > 0).sum())
    return math.ceil(n_pos / config.positives_per_batch)


def batch_loss(model, data: TrainingSet, idx: np.ndarray, config: TrainConfig,
               weights: np.ndarray | None = None):
    """(total loss Tensor, L_i Tensor, L_c Tensor or None) for one batch."""
    S = model.semantic_embeddings()
    vis = model.visual_embeddings(Tensor(data.a_h[idx]), Tensor(data.a_o[idx]), Tensor(data.s[idx]))
    L_i = interactiveness_loss(vis.interactiveness_logit(), data.u[idx], logits=True)
    pos = np.flatnonzero(data.u[idx] > 0)
    L_c = None
    if len(pos):
        pos_vis = VisualEmbeddings({k: ad.take_rows(v, pos) for k, v in vis.v.items()}, {})
        z = model.class_logits(pos_vis, S)
        w = None if weights is None else weights[idx[pos]]
        L_c = classification_loss(z, data.y[idx[pos]], w, logits=True)
    return total_loss(L_i, L_c, config.eta), L_i, L_c


def fit(model, data: TrainingSet, config: TrainConfig, log_every: int = 0) -> list[LossRecord]:
    """Train ``model`` in place; returns the per-step loss history."""
    rng = np.random.default_rng(config.seed)
    named = model.named_parameters()
    opt = SGD(named, config.momentum, config.weight_decay, model.no_decay)
    params = list(named.values())
    weights = sample_weights(data.y, config.sample_weighting)
    total = steps_per_epoch(data, config) * config.epochs
    history: list[LossRecord] = []
    step = 0
    model.train()
    for epoch in range(config.epochs):
        for idx in batch_schedule(data, config, rng):
            lr = lr_at(step, config, total)
            try:
                with Tape() as tape:
                    L, L_i, L_c = batch_loss(model, data, idx, config, weights)
                grads = backward(tape, L, params)
            except NonFiniteError as exc:
                raise TrainingError(f"non-finite value at epoch {epoch} step {step} (lr={lr:.3g}): {exc}") from exc
            opt.step(grads, lr)
            rec = LossRecord(step, lr, L_i.item(), 0.0 if L_c is None else L_c.item(), L.item())
            history.append(rec)
            if log_every and step % log_every == 0:
                log.info("step %d lr %.4g L %.4f (L_i %.4f L_c %.4f)", step, lr, rec.L, rec.L_i, rec.L_c)
            step += 1
    model.eval()
    return history


def train(samples: Sequence[Candidate], graph, Z: np.ndarray, config: TrainConfig, model_config):
    """Build a fresh model on ``graph``/``Z`` and fit it to ``samples``."""
    from .model import ConsNet

    model = ConsNet(model_config, graph, Z)
    data = TrainingSet.from_candidates(samples, graph.space.C)
    history = fit(model, data, config)
    return model, history


def evaluate_loss(model, data: TrainingSet, config: TrainConfig, idx=None) -> float:
    """Total loss on frozen parameters (eval-mode normalization)."""
    idx = np.arange(len(data)) if idx is None else idx
    was_training = model.training
    model.eval()
    L, _, _ = batch_loss(model, data, idx, config)
    model.train(was_training)
    return L.item()


def config_dict(config: TrainConfig) -> dict:
    return asdict(config)
