"""Synthetic compositional HOI corpus.

Actions and objects get latent prototypes. Word vectors are noisy linear
images of the prototypes, and so are crop features (human crops carry the
action being performed, object crops the object category). Interacting
objects sit at an action-specific offset from the human; bystander objects
are placed uniformly. Each interaction also has a small private residual
that shows up in the human crop, so interactions are mostly, but not
entirely, predictable from their constituents.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from .embeddings import FeatureRecord, WordVectorTable
from .evaluate import GroundTruthPair
from .labels import HUMAN_LABEL, LabelSpace, build_label_space

IMAGE_W, IMAGE_H = 640.0, 480.0


@dataclass
class SynthConfig:
    n_actions: int = 8
    n_objects: int = 10
    combo_density: float = 0.5
    d_a: int = 64
    d_e: int = 64
    latent_dim: int = 16
    images: int = 400
    test_images: int = 100
    candidates_per_image: int = 10
    humans_per_image: int = 2
    interact_prob: float = 0.9
    noise_sigma: float = 0.3
    word_noise: float = 0.3
    alpha: float = 1.0
    beta: float = 1.0
    residual: float = 0.3
    seed: int = 0

    def __post_init__(self):
        if not 0 < self.combo_density <= 1:
            raise ValueError("combo_density must be in (0, 1]")
        if self.candidates_per_image < self.humans_per_image:
            raise ValueError("candidates_per_image must allow one object per human")


@dataclass
class SynthCorpus:
    space: LabelSpace
    words: WordVectorTable
    crops: list                     # labeled GT crop records (train images)
    train_detections: list
    train_gt: list
    test_detections: list
    test_gt: list
    latents: dict = field(default_factory=dict)


def _pick_combos(rng, n_a: int, n_o: int, density: float) -> list[tuple[int, int]]:
    target = int(round(density * n_a * n_o))
    if target < max(n_a, n_o):
        raise ValueError(f"density {density} gives {target} combos; need at least {max(n_a, n_o)} "
                         "to cover every action and object")
    chosen = set()
    # cover every action and object first
    perm_a = rng.permutation(n_a)
    perm_o = rng.permutation(n_o)
    for i in range(max(n_a, n_o)):
        chosen.add((int(perm_a[i % n_a]), int(perm_o[i % n_o])))
    rest = [(a, o) for a in range(n_a) for o in range(n_o) if (a, o) not in chosen]
    rng.shuffle(rest)
    for pair in rest[: target - len(chosen)]:
        chosen.add(pair)
    return sorted(chosen)


def _clip_box(cx, cy, w, h) -> tuple:
    w = min(w, IMAGE_W - 2)
    h = min(h, IMAGE_H - 2)
    x1 = float(np.clip(cx - w / 2, 0, IMAGE_W - w))
    y1 = float(np.clip(cy - h / 2, 0, IMAGE_H - h))
    return (round(x1, 2), round(y1, 2), round(x1 + w, 2), round(y1 + h, 2))


def _jitter_box(rng, box, frac=0.05) -> tuple:
    x1, y1, x2, y2 = box
    w, h = x2 - x1, y2 - y1
    d = rng.normal(0, frac, size=4) * np.array([w, h, w, h])
    nb = np.array([x1, y1, x2, y2]) + d
    nb[0], nb[2] = min(nb[0], nb[2] - 2), max(nb[2], nb[0] + 2)
    nb[1], nb[3] = min(nb[1], nb[3] - 2), max(nb[3], nb[1] + 2)
    return tuple(round(float(v), 2) for v in nb)


def generate_corpus(cfg: SynthConfig) -> SynthCorpus:
    rng = np.random.default_rng(cfg.seed)
    actions = [f"act{i}" for i in range(cfg.n_actions)]
    objects = [f"obj{j}" for j in range(cfg.n_objects)]
    combos = _pick_combos(rng, cfg.n_actions, cfg.n_objects, cfg.combo_density)
    space = build_label_space(actions, objects, [(actions[a], objects[o]) for a, o in combos])

    k = cfg.latent_dim
    P_a = rng.normal(size=(cfg.n_actions, k))
    P_o = rng.normal(size=(cfg.n_objects, k))
    p_h = rng.normal(size=k)
    R = rng.normal(size=(space.C, k))
    T = cfg.alpha * P_a[[a for a, _ in combos]] + cfg.beta * P_o[[o for _, o in combos]] + cfg.residual * R

    E = rng.normal(size=(k, cfg.d_e)) / np.sqrt(k)
    words = {HUMAN_LABEL: p_h @ E + cfg.word_noise * rng.normal(size=cfg.d_e)}
    for i, name in enumerate(actions):
        words[name] = P_a[i] @ E + cfg.word_noise * rng.normal(size=cfg.d_e)
    for j, name in enumerate(objects):
        words[name] = P_o[j] @ E + cfg.word_noise * rng.normal(size=cfg.d_e)
    table = WordVectorTable(words)

    G_h = rng.normal(size=(2 * k, cfg.d_a)) / np.sqrt(2 * k)
    G_o = rng.normal(size=(k, cfg.d_a)) / np.sqrt(k)
    offsets = np.column_stack([rng.uniform(-0.9, 0.9, cfg.n_actions), rng.uniform(-0.4, 0.4, cfg.n_actions)])
    obj_size = rng.uniform(40, 110, size=(cfg.n_objects, 2))
    by_action = {}
    for c, (a, o) in enumerate(combos):
        by_action.setdefault(a, []).append(c)

    def human_feat(latent_a, resid):
        x = np.concatenate([latent_a + 0.5 * resid, p_h])
        return x @ G_h + cfg.noise_sigma * rng.normal(size=cfg.d_a)

    def obj_feat(o):
        return P_o[o] @ G_o + cfg.noise_sigma * rng.normal(size=cfg.d_a)

    n_obj = max(1, cfg.candidates_per_image // cfg.humans_per_image)

    def make_image(image_id, crops, dets, gts):
        humans = []
        for _ in range(cfg.humans_per_image):
            w, h = rng.uniform(60, 120), rng.uniform(150, 250)
            cx, cy = rng.uniform(w / 2, IMAGE_W - w / 2), rng.uniform(h / 2, IMAGE_H - h / 2)
            humans.append(_clip_box(cx, cy, w, h))
        objs = []      # (box, category)
        pairs = []     # (human index, object index, hoi)
        for hi, hb in enumerate(humans):
            if rng.random() >= cfg.interact_prob:
                continue
            c = int(rng.integers(space.C))
            a, o = combos[c]
            hw, hh = hb[2] - hb[0], hb[3] - hb[1]
            hcx, hcy = (hb[0] + hb[2]) / 2, (hb[1] + hb[3]) / 2
            dx, dy = offsets[a] + rng.normal(0, 0.05, 2)
            size = obj_size[o] * rng.uniform(0.9, 1.1, 2)
            objs.append((_clip_box(hcx + dx * hw, hcy + dy * hh, *size), o))
            pairs.append((hi, len(objs) - 1, c))
        while len(objs) < n_obj:
            o = int(rng.integers(cfg.n_objects))
            size = obj_size[o] * rng.uniform(0.9, 1.1, 2)
            objs.append((_clip_box(rng.uniform(0, IMAGE_W), rng.uniform(0, IMAGE_H), *size), o))

        interacting = {hi: c for hi, _, c in pairs}
        h_feats = []
        for hi, hb in enumerate(humans):
            if hi in interacting:
                c = interacting[hi]
                f = human_feat(P_a[combos[c][0]], R[c])
                if crops is not None:
                    crops.append(FeatureRecord(image_id, hb, actions[combos[c][0]], "human", 1.0, f))
            else:
                f = human_feat(0.5 * rng.normal(size=k), np.zeros(k))
                if crops is not None:
                    crops.append(FeatureRecord(image_id, hb, HUMAN_LABEL, "human", 1.0, f))
            h_feats.append(f)
        o_feats = []
        for box, o in objs:
            f = obj_feat(o)
            if crops is not None:
                crops.append(FeatureRecord(image_id, box, objects[o], "object", 1.0, f))
            o_feats.append(f)

        for hb, f in zip(humans, h_feats):
            dets.append(FeatureRecord(image_id, _jitter_box(rng, hb), HUMAN_LABEL, "human",
                                      float(rng.uniform(0.7, 1.0)), f + 0.05 * rng.normal(size=cfg.d_a)))
        for (box, o), f in zip(objs, o_feats):
            dets.append(FeatureRecord(image_id, _jitter_box(rng, box), objects[o], "object",
                                      float(rng.uniform(0.4, 1.0)), f + 0.05 * rng.normal(size=cfg.d_a)))
        for hi, oi, c in pairs:
            gts.append(GroundTruthPair(image_id, humans[hi], objs[oi][0], frozenset([c])))

    crops, train_dets, train_gt = [], [], []
    for i in range(cfg.images):
        make_image(f"train{i:05d}", crops, train_dets, train_gt)
    test_dets, test_gt = [], []
    for i in range(cfg.test_images):
        make_image(f"test{i:05d}", None, test_dets, test_gt)

    latents = {"P_a": P_a, "P_o": P_o, "p_h": p_h, "R": R, "T": T}
    return SynthCorpus(space, table, crops, train_dets, train_gt, test_dets, test_gt, latents)


def synth_config_dict(cfg: SynthConfig) -> dict:
    return asdict(cfg)
