"""Zero-shot human-object interaction scoring with a consistency graph.

Submodules: ``labels`` (label space and splits), ``autodiff`` (tape-based
reverse mode on numpy), ``embeddings``, ``graph``, ``gat``, ``visual``,
``model``, ``pipeline`` (detection), ``train``, ``evaluate``, ``checkpoint``,
``synth`` and ``harness`` (configs and end-to-end runs).
"""
from .checkpoint import load_checkpoint, save_checkpoint
from .evaluate import EvalReport, GroundTruthPair, evaluate, per_class_ap
from .graph import ConsistencyGraph, build_graph
from .harness import (RunConfig, ablate, compact_config, gradcheck_toy, read_corpus, run_experiment,
                      synth_corpus, write_corpus)
from .labels import LabelSpace, ZeroShotSplit, build_label_space
from .pipeline import Detection, detect_all

__version__ = "0.1.0"

__all__ = [
    "ConsistencyGraph", "Detection", "EvalReport", "GroundTruthPair", "LabelSpace", "RunConfig",
    "ZeroShotSplit", "ablate", "build_graph", "build_label_space", "compact_config", "detect_all",
    "evaluate", "gradcheck_toy", "load_checkpoint", "per_class_ap", "read_corpus", "run_experiment",
    "save_checkpoint", "synth_corpus", "write_corpus",
]
