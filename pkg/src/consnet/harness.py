"""Run configuration, corpus files and end-to-end experiment wiring.

A run is fully determined by a :class:`RunConfig` plus the corpus files in
``paths.data_dir``::

    labelspace.json          actions, objects, interaction pairs
    words.jsonl              {"token", "vector"}
    crops.jsonl              labeled crops of annotated boxes (training images)
    train_detections.jsonl   detector output on training images
    train_gt.jsonl           annotated pairs on training images
    test_detections.jsonl
    test_gt.jsonl

Outputs go to ``paths.out_dir`` (``split.json``, ``graph.json``,
``model.ckpt``, ``history.jsonl``, ``detections.jsonl``, ``report.json``).
"""
from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .embeddings import WordVectorTable, load_records, node_joint_features, save_records, write_jsonl
from .evaluate import EvalReport, evaluate, load_ground_truth, save_ground_truth
from .graph import ConsistencyGraph, build_graph, node_feature_matrix
from .labels import (HUMAN_LABEL, LabelSpace, ZeroShotSplit, build_label_space, filter_training_corpus,
                     held_out_categories, make_zero_shot_split)
from .model import ConsNet, ModelConfig
from .pipeline import Candidate, DetectConfig, Detection, detect_all
from .synth import SynthConfig, generate_corpus
from .train import TrainConfig, TrainingSet, batch_loss, build_training_candidates, fit

log = logging.getLogger(__name__)

SCENARIOS = ("full", "UC", "UO", "UA")


class ConfigError(ValueError):
    """Schema violation in a run configuration."""


@dataclass
class GraphSection:
    eps_a: int = 5
    eps_o: int = 5
    eps_t: int = 10
    rho_v: float = 1.0
    rho_s: float = 1.0


@dataclass
class ModelSection:
    d_v: int = 1024
    hidden: int = 1024
    fusion_widths: tuple = (512, 512, 256)
    embedder: str = "gat"
    depth: int = 3
    heads: int = 8
    d_head: int | None = None
    gamma: float = 8.0
    semantic_norm: bool = True

    def __post_init__(self):
        self.fusion_widths = tuple(self.fusion_widths)
        if self.embedder not in ("gat", "mlp", "none"):
            raise ValueError(f"embedder must be gat, mlp or none, got {self.embedder!r}")
        if self.depth < 1:
            raise ValueError("depth must be at least 1")


@dataclass
class TrainSection:
    lr0: float = 0.01
    momentum: float = 0.9
    weight_decay: float = 1e-4
    warmup_start_lr: float = 0.001
    warmup_iters: int = 500
    epochs: int = 5
    batch_size: int = 64
    pos_neg_ratio: tuple = (1, 3)
    eta: float = 1.0
    sample_weighting: str = "uniform"
    candidate_theta: float = 0.1

    def __post_init__(self):
        self.pos_neg_ratio = tuple(self.pos_neg_ratio)


@dataclass
class DetectSection:
    theta_h: float = 0.5
    theta_o: float = 0.1
    n_h: int | None = 10
    n_o: int | None = 20
    theta_ho: float = 0.1


@dataclass
class SplitSection:
    scenario: str = "full"
    k: int = 0
    rare_threshold: int = 10


@dataclass
class PathsSection:
    data_dir: str = "data"
    out_dir: str = "out"


@dataclass
class RunConfig:
    graph: GraphSection = field(default_factory=GraphSection)
    model: ModelSection = field(default_factory=ModelSection)
    train: TrainSection = field(default_factory=TrainSection)
    detect: DetectSection = field(default_factory=DetectSection)
    split: SplitSection = field(default_factory=SplitSection)
    synth: SynthConfig = field(default_factory=SynthConfig)
    paths: PathsSection = field(default_factory=PathsSection)
    seed: int = 0
    dtype: str = "float64"

    def __post_init__(self):
        if self.split.scenario not in SCENARIOS:
            raise ConfigError(f"split.scenario must be one of {SCENARIOS}, got {self.split.scenario!r}")
        if self.dtype not in ("float32", "float64"):
            raise ConfigError(f"dtype must be float32 or float64, got {self.dtype!r}")

    def to_json(self) -> dict:
        return asdict(self)

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=2))

    @classmethod
    def from_json(cls, doc: dict) -> "RunConfig":
        if not isinstance(doc, dict):
            raise ConfigError("run config must be a JSON object")
        unknown = sorted(set(doc) - {f.name for f in fields(cls)})
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        kwargs = {name: _section(SECTIONS[name], val, name) if name in SECTIONS else val
                  for name, val in doc.items()}
        try:
            return cls(**kwargs)
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc

    @classmethod
    def load(cls, path) -> "RunConfig":
        try:
            doc = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
        cfg = cls.from_json(doc)
        base = Path(path).resolve().parent
        cfg.paths = PathsSection(str(base / cfg.paths.data_dir), str(base / cfg.paths.out_dir))
        return cfg

    def model_config(self, d_a: int, d_e: int) -> ModelConfig:
        return ModelConfig(d_a=d_a, d_e=d_e, seed=self.seed, **asdict(self.model))

    def train_config(self) -> TrainConfig:
        kw = asdict(self.train)
        kw.pop("candidate_theta")
        return TrainConfig(seed=self.seed, **kw)

    def detect_config(self, classes=None) -> DetectConfig:
        return DetectConfig(classes=classes, **asdict(self.detect))


SECTIONS = {"graph": GraphSection, "model": ModelSection, "train": TrainSection,
            "detect": DetectSection, "split": SplitSection, "synth": SynthConfig, "paths": PathsSection}


def _section(cls, doc, name):
    if not isinstance(doc, dict):
        raise ConfigError(f"section {name!r} must be an object")
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(doc) - known)
    if unknown:
        raise ConfigError(f"unknown keys in {name!r}: {', '.join(unknown)}")
    try:
        return cls(**doc)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"section {name!r}: {exc}") from exc


# -- corpus files -------------------------------------------------------------

@dataclass
class Corpus:
    space: LabelSpace
    words: WordVectorTable
    crops: list
    train_detections: list
    train_gt: list
    test_detections: list
    test_gt: list


def write_corpus(corpus, data_dir) -> None:
    d = Path(data_dir)
    d.mkdir(parents=True, exist_ok=True)
    corpus.space.save(d / "labelspace.json")
    corpus.words.save(d / "words.jsonl")
    save_records(d / "crops.jsonl", corpus.crops)
    save_records(d / "train_detections.jsonl", corpus.train_detections)
    save_ground_truth(d / "train_gt.jsonl", corpus.train_gt)
    save_records(d / "test_detections.jsonl", corpus.test_detections)
    save_ground_truth(d / "test_gt.jsonl", corpus.test_gt)


def read_corpus(data_dir) -> Corpus:
    d = Path(data_dir)
    missing = [n for n in ("labelspace.json", "words.jsonl", "crops.jsonl", "train_detections.jsonl",
                           "train_gt.jsonl", "test_detections.jsonl", "test_gt.jsonl")
               if not (d / n).is_file()]
    if missing:
        raise FileNotFoundError(f"{d}: missing corpus files {', '.join(missing)}")
    return Corpus(LabelSpace.load(d / "labelspace.json"), WordVectorTable.load(d / "words.jsonl"),
                  load_records(d / "crops.jsonl"), load_records(d / "train_detections.jsonl"),
                  load_ground_truth(d / "train_gt.jsonl"), load_records(d / "test_detections.jsonl"),
                  load_ground_truth(d / "test_gt.jsonl"))


def synth_corpus(cfg: SynthConfig) -> Corpus:
    c = generate_corpus(cfg)
    return Corpus(c.space, c.words, c.crops, c.train_detections, c.train_gt, c.test_detections, c.test_gt)


# -- experiment ---------------------------------------------------------------

@dataclass
class Prepared:
    space: LabelSpace
    split: ZeroShotSplit
    graph: ConsistencyGraph
    Z: np.ndarray
    training: list          # labeled Candidates with unseen classes removed


def make_split(cfg: RunConfig, space: LabelSpace) -> ZeroShotSplit:
    if cfg.split.scenario == "full":
        return ZeroShotSplit("full", frozenset(), cfg.seed)
    return make_zero_shot_split(space, cfg.split.scenario, cfg.split.k, cfg.seed)


def prepare(cfg: RunConfig, corpus: Corpus, split: ZeroShotSplit | None = None) -> Prepared:
    """Split, consistency graph, node word vectors and training candidates.

    Crops of held-out action or object categories are withheld when
    building the graph, so their nodes fall back to word vectors alone.
    """
    space = corpus.space
    split = split or make_split(cfg, space)
    held_a, held_o = held_out_categories(space, split)
    hidden = ({("human", space.actions[a]) for a in held_a}
              | {("object", space.objects[o]) for o in held_o})
    crops = [r for r in corpus.crops if (r.kind, r.label) not in hidden]
    g = cfg.graph
    jf = node_joint_features(space, crops, corpus.words, g.rho_v, g.rho_s)
    graph = build_graph(space, jf, g.eps_a, g.eps_o, g.eps_t)
    Z = node_feature_matrix(space, corpus.words)
    cands = build_training_candidates(corpus.train_detections, corpus.train_gt, crops,
                                      cfg.train.candidate_theta)
    return Prepared(space, split, graph, Z, filter_training_corpus(cands, split))


def _dtype_scope(cfg: RunConfig):
    class _Scope:
        def __enter__(self):
            self.prev = ad.get_default_dtype()
            ad.set_default_dtype(cfg.dtype)

        def __exit__(self, *exc):
            ad.set_default_dtype(self.prev)
    return _Scope()


def build_model(cfg: RunConfig, prep: Prepared) -> ConsNet:
    d_a = len(prep.training[0].a_h) if prep.training else prep.Z.shape[1]
    with _dtype_scope(cfg):
        return ConsNet(cfg.model_config(d_a, prep.Z.shape[1]), prep.graph, prep.Z)


def train_model(cfg: RunConfig, prep: Prepared, log_every: int = 0):
    """(model, loss history)."""
    if not prep.training:
        raise ValueError("no training candidates")
    model = build_model(cfg, prep)
    with _dtype_scope(cfg):
        data = TrainingSet.from_candidates(prep.training, prep.space.C)
        history = fit(model, data, cfg.train_config(), log_every)
    return model, history


def train_counts(cands) -> dict[int, int]:
    counts = {}
    for c in cands:
        for h in c.hoi_ids:
            counts[h] = counts.get(h, 0) + 1
    return counts


def evaluate_run(cfg: RunConfig, detections, ground_truth, space: LabelSpace, split: ZeroShotSplit,
                 training=()) -> EvalReport:
    if split.scenario == "full":
        return evaluate(detections, ground_truth, space, "supervised",
                        train_counts=train_counts(training), rare_threshold=cfg.split.rare_threshold)
    return evaluate(detections, ground_truth, space, "zero_shot", split.unseen_hoi_ids)


def shuffled_control(detections, seed: int) -> list[Detection]:
    """Same detections with scores randomly permuted: the chance-level reference."""
    rng = np.random.default_rng(seed)
    scores = rng.permutation([d.score for d in detections])
    return [replace(d, score=float(s)) for d, s in zip(detections, scores)]


@dataclass
class RunResult:
    model: ConsNet
    history: list
    detections: list
    report: EvalReport
    control: EvalReport
    prepared: Prepared


def run_experiment(cfg: RunConfig, corpus: Corpus, split: ZeroShotSplit | None = None) -> RunResult:
    """Prepare, train, detect on the test images and evaluate."""
    prep = prepare(cfg, corpus, split)
    model, history = train_model(cfg, prep)
    with _dtype_scope(cfg):
        dets = detect_all(corpus.test_detections, model, cfg.detect_config())
    report = evaluate_run(cfg, dets, corpus.test_gt, prep.space, prep.split, prep.training)
    control = evaluate_run(cfg, shuffled_control(dets, cfg.seed), corpus.test_gt, prep.space,
                           prep.split, prep.training)
    return RunResult(model, history, dets, report, control, prep)


def ablate(cfg: RunConfig, corpus: Corpus, embedder: str | None = None, depth: int | None = None) -> RunResult:
    """Rerun with a different semantic embedder or depth; corpus, split and seeds unchanged."""
    model = replace(cfg.model, embedder=embedder or cfg.model.embedder, depth=depth or cfg.model.depth)
    return run_experiment(replace(cfg, model=model), corpus)


def history_docs(history) -> list[dict]:
    return [asdict(h) for h in history]


def save_history(path, history) -> None:
    write_jsonl(path, history_docs(history))


def compact_config(scenario: str = "UC", k: int = 8, seed: int = 0, embedder: str = "gat") -> RunConfig:
    """Preset for repeated zero-shot runs on the default synthetic corpus.

    Widths are a quarter of the defaults and warm-up is shortened to fit
    the roughly 400 steps of a five-epoch run; the classification term is
    weighted up so the semantic branch trains within that budget. The
    corpus seed follows the run seed.
    """
    base = RunConfig()
    return replace(
        base,
        graph=GraphSection(eps_a=2, eps_o=2, eps_t=3),
        model=ModelSection(d_v=256, hidden=256, fusion_widths=(128, 128, 64), embedder=embedder),
        train=TrainSection(warmup_iters=50, eta=10.0),
        split=SplitSection(scenario, k),
        synth=replace(base.synth, seed=seed),
        seed=seed,
    )


# -- gradient check -------------------------------------------------------------

def toy_problem(seed: int = 0, batch: int = 4):
    """A tiny label space, graph and model plus a 4-sample labeled batch."""
    rng = np.random.default_rng(seed)
    space = build_label_space(["ride", "hold"], ["horse", "cup", "bike"],
                              [("ride", "horse"), ("ride", "bike"), ("hold", "cup"), ("hold", "horse")])
    d_e, d_a = 6, 5
    tokens = {HUMAN_LABEL, "ride", "hold", "horse", "cup", "bike"}
    words = WordVectorTable({t: rng.normal(size=d_e) for t in sorted(tokens)})
    jf = node_joint_features(space, [], words)
    graph = build_graph(space, jf, 1, 1, 2)
    Z = node_feature_matrix(space, words)
    cfg = ModelConfig(d_a=d_a, d_e=d_e, d_v=6, hidden=16, fusion_widths=(8, 8, 6), embedder="gat",
                      depth=2, heads=2, seed=seed)
    model = ConsNet(cfg, graph, Z)
    cands = []
    for i in range(batch):
        u = int(i % 2 == 0)
        x1, y1 = rng.uniform(0, 50, 2)
        w, h, dx, dy = rng.uniform(20, 80, 4)
        cands.append(Candidate(f"toy{i}", (x1, y1, x1 + w, y1 + h), (x1 + dx, y1 + dy, x1 + dx + h, y1 + dy + w),
                               0.9, 0.8, rng.normal(size=d_a), rng.normal(size=d_a),
                               u=u, hoi_ids=(i % space.C,) if u else ()))
    return model, TrainingSet.from_candidates(cands, space.C)


def gradcheck_toy(seed: int = 0, eps: float = 1e-5) -> float:
    """Max relative error of the full training loss against central differences."""
    prev = ad.get_default_dtype()
    ad.set_default_dtype(np.float64)
    try:
        model, data = toy_problem(seed)
        model.train()
        idx = np.arange(len(data))
        config = TrainConfig(eta=1.0)

        def loss() -> Tensor:
            return batch_loss(model, data, idx, config)[0]

        return ad.grad_check(loss, model.parameters(), eps)
    finally:
        ad.set_default_dtype(prev)


def write_synth(cfg: SynthConfig, data_dir) -> Corpus:
    corpus = synth_corpus(cfg)
    write_corpus(corpus, data_dir)
    return corpus


__all__ = [
    "ConfigError", "RunConfig", "GraphSection", "ModelSection", "TrainSection", "DetectSection",
    "SplitSection", "PathsSection", "Corpus", "write_corpus", "read_corpus", "synth_corpus", "write_synth",
    "Prepared", "make_split", "prepare", "build_model", "train_model", "evaluate_run", "shuffled_control",
    "RunResult", "run_experiment", "ablate", "compact_config", "save_history", "toy_problem", "gradcheck_toy",
]
