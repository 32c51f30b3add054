"""``consnet`` command line.

Every command reads a RunConfig (``--config``; defaults apply without one)
and the corpus in ``paths.data_dir``, and writes into ``paths.out_dir``.
Failures print one JSON line ``{"error": kind, "message": ...}`` to stderr
and exit nonzero.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .evaluate import load_ground_truth
from .harness import (ConfigError, RunConfig, ablate, evaluate_run, gradcheck_toy, prepare,
                      read_corpus, save_history, train_model, write_synth)
from .labels import SplitError, ZeroShotSplit
from .pipeline import detect_all, load_detections, save_detections
from .train import TrainingError

GRADCHECK_TOL = 1e-4

EXIT_CODES = {"usage": 2, "config": 2, "missing_file": 3, "infeasible_split": 4, "training": 5,
              "checkpoint": 6, "invalid_input": 7}


class CliError(Exception):
    def __init__(self, kind: str, message: str):
        super().__init__(message)
        self.kind = kind


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CliError("usage", f"{self.prog}: {message}")


def _config(args) -> RunConfig:
    cfg = RunConfig.load(args.config) if args.config else RunConfig()
    if getattr(args, "seed", None) is not None:
        cfg = replace(cfg, seed=args.seed)
    return cfg


def _out_dir(cfg: RunConfig) -> Path:
    out = Path(cfg.paths.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _emit(doc: dict) -> None:
    print(json.dumps(doc, sort_keys=True))


def cmd_synth(args) -> int:
    cfg = _config(args)
    synth = cfg.synth if args.seed is None else replace(cfg.synth, seed=args.seed)
    out = Path(args.out or cfg.paths.data_dir)
    corpus = write_synth(synth, out)
    _emit({"command": "synth", "data_dir": str(out), "classes": corpus.space.C,
           "train_images": synth.images, "test_images": synth.test_images})
    return 0


def cmd_build_graph(args) -> int:
    cfg = _config(args)
    prep = prepare(cfg, read_corpus(cfg.paths.data_dir))
    out = _out_dir(cfg)
    prep.graph.save(out / "graph.json")
    (out / "split.json").write_text(json.dumps(prep.split.to_json()))
    _emit({"command": "build-graph", "nodes": prep.graph.num_nodes, "edges": len(prep.graph.edges()),
           "graph": str(out / "graph.json")})
    return 0


def cmd_train(args) -> int:
    cfg = _config(args)
    prep = prepare(cfg, read_corpus(cfg.paths.data_dir))
    model, history = train_model(cfg, prep, log_every=args.log_every)
    out = _out_dir(cfg)
    prep.graph.save(out / "graph.json")
    (out / "split.json").write_text(json.dumps(prep.split.to_json()))
    save_history(out / "history.jsonl", history)
    save_checkpoint(out / "model.ckpt", model, {"run_config": cfg.to_json(), "split": prep.split.to_json()})
    _emit({"command": "train", "steps": len(history), "initial_loss": history[0].L,
           "final_loss": history[-1].L, "checkpoint": str(out / "model.ckpt")})
    return 0


def cmd_detect(args) -> int:
    cfg = _config(args)
    out = _out_dir(cfg)
    model, _ = load_checkpoint(args.checkpoint or out / "model.ckpt")
    corpus = read_corpus(cfg.paths.data_dir)
    dets = detect_all(corpus.test_detections, model, cfg.detect_config(), threads=args.threads)
    path = Path(args.output or out / "detections.jsonl")
    save_detections(path, dets)
    _emit({"command": "detect", "detections": len(dets), "output": str(path)})
    return 0


def cmd_eval(args) -> int:
    cfg = _config(args)
    out = _out_dir(cfg)
    corpus = read_corpus(cfg.paths.data_dir)
    dets = load_detections(args.detections or out / "detections.jsonl")
    split_path = out / "split.json"
    split = ZeroShotSplit.from_json(json.loads(split_path.read_text())) if split_path.is_file() else None
    prep = prepare(cfg, corpus, split)
    gt = load_ground_truth(args.ground_truth) if args.ground_truth else corpus.test_gt
    report = evaluate_run(cfg, dets, gt, prep.space, prep.split, prep.training)
    report.save(out / "report.json")
    doc = {k: v for k, v in report.to_json().items() if k != "per_class"}
    _emit({"command": "eval", **doc})
    return 0


def cmd_gradcheck(args) -> int:
    cfg = _config(args)
    err = gradcheck_toy(cfg.seed)
    _emit({"command": "gradcheck", "max_relative_error": err, "tolerance": GRADCHECK_TOL,
           "passed": err < GRADCHECK_TOL})
    return 0 if err < GRADCHECK_TOL else 1


def cmd_ablate(args) -> int:
    cfg = _config(args)
    corpus = read_corpus(cfg.paths.data_dir)
    res = ablate(cfg, corpus, args.embedder, args.depth)
    embedder = args.embedder or cfg.model.embedder
    depth = args.depth or cfg.model.depth
    out = _out_dir(cfg) / f"ablate-{embedder}-d{depth}"
    out.mkdir(parents=True, exist_ok=True)
    res.report.save(out / "report.json")
    res.control.save(out / "control.json")
    save_history(out / "history.jsonl", res.history)
    doc = {k: v for k, v in res.report.to_json().items() if k != "per_class"}
    _emit({"command": "ablate", "embedder": embedder, "depth": depth, **doc,
           "control_mAP_full": res.control.mAP_full, "report": str(out / "report.json")})
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="consnet", description="Zero-shot human-object interaction scoring.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def command(name, fn, help_):
        sp = sub.add_parser(name, help=help_)
        sp.add_argument("--config", help="RunConfig JSON file")
        sp.add_argument("--seed", type=int, help="override the run seed")
        sp.set_defaults(fn=fn)
        return sp

    sp = command("synth", cmd_synth, "write a synthetic corpus")
    sp.add_argument("--out", help="output directory (default: paths.data_dir)")
    command("build-graph", cmd_build_graph, "build the consistency graph and split")
    sp = command("train", cmd_train, "train a model and write a checkpoint")
    sp.add_argument("--log-every", type=int, default=0)
    sp = command("detect", cmd_detect, "score the test images with a checkpoint")
    sp.add_argument("--checkpoint")
    sp.add_argument("--output")
    sp.add_argument("--threads", type=int, help="worker threads (default: CONSNET_THREADS or 1)")
    sp = command("eval", cmd_eval, "evaluate detections against ground truth")
    sp.add_argument("--detections")
    sp.add_argument("--ground-truth")
    command("gradcheck", cmd_gradcheck, "finite-difference check of the full loss on a toy batch")
    sp = command("ablate", cmd_ablate, "train and evaluate with a different semantic embedder or depth")
    sp.add_argument("--embedder", choices=("none", "mlp", "gat"))
    sp.add_argument("--depth", type=int, choices=(2, 3, 4))
    return p


def _classify(exc: Exception) -> str:
    if isinstance(exc, CliError):
        return exc.kind
    if isinstance(exc, ConfigError):
        return "config"
    if isinstance(exc, FileNotFoundError):
        return "missing_file"
    if isinstance(exc, SplitError):
        return "infeasible_split"
    if isinstance(exc, TrainingError):
        return "training"
    if isinstance(exc, CheckpointError):
        return "checkpoint"
    return "invalid_input"


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        return args.fn(args)
    except (CliError, ConfigError, OSError, ValueError, KeyError, TrainingError) as exc:
        kind = _classify(exc)
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else str(exc)
        print(json.dumps({"error": kind, "message": str(msg)}), file=sys.stderr)
        return EXIT_CODES.get(kind, 1)
    except Exception as exc:   # anything unforeseen still yields one JSON line
        print(json.dumps({"error": "internal", "message": f"{type(exc).__name__}: {exc}"}), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
