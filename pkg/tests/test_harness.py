from dataclasses import replace

import numpy as np
import pytest

from conftest import tiny_config
from consnet.harness import (ConfigError, RunConfig, SplitSection, ablate, prepare, read_corpus, run_experiment,
                             shuffled_control, synth_corpus, write_corpus)


def test_config_json_round_trip(tmp_path, tiny):
    tiny.save(tmp_path / "run.json")
    back = RunConfig.load(tmp_path / "run.json")
    assert {k: v for k, v in back.to_json().items() if k != "paths"} == \
        {k: v for k, v in tiny.to_json().items() if k != "paths"}
    assert back.paths.data_dir == str(tmp_path / "data")


@pytest.mark.parametrize("doc", [
    {"bogus": 1},
    {"model": {"widht": 3}},
    {"model": {"embedder": "transformer"}},
    {"split": {"scenario": "UX"}},
    {"dtype": "float16"},
    {"train": []},
    [],
])
def test_schema_violations_rejected(doc):
    with pytest.raises(ConfigError):
        RunConfig.from_json(doc)


def test_invalid_json_rejected(tmp_path):
    (tmp_path / "bad.json").write_text("{nope")
    with pytest.raises(ConfigError):
        RunConfig.load(tmp_path / "bad.json")


def test_corpus_files_round_trip(tmp_path, tiny):
    corpus = synth_corpus(tiny.synth)
    write_corpus(corpus, tmp_path)
    back = read_corpus(tmp_path)
    assert back.space == corpus.space
    assert len(back.train_detections) == len(corpus.train_detections)
    np.testing.assert_array_equal(back.crops[3].feature, corpus.crops[3].feature)
    (tmp_path / "words.jsonl").unlink()
    with pytest.raises(FileNotFoundError, match="words.jsonl"):
        read_corpus(tmp_path)


def test_held_out_crops_do_not_reach_the_graph(tiny):
    cfg = replace(tiny, split=SplitSection("UA", 1))
    corpus = synth_corpus(cfg.synth)
    prep = prepare(cfg, corpus)
    assert prep.split.unseen_hoi_ids
    assert not any(set(c.hoi_ids) & prep.split.unseen_hoi_ids for c in prep.training)


def test_same_config_same_report(tiny):
    corpus = synth_corpus(tiny.synth)
    a = run_experiment(tiny, corpus).report.to_json()
    b = run_experiment(tiny, synth_corpus(tiny.synth)).report.to_json()
    assert a == b


def test_ablation_parity(tiny):
    cfg = replace(tiny, split=SplitSection("UC", 2))
    corpus = synth_corpus(cfg.synth)
    gat, mlp = ablate(cfg, corpus, "gat"), ablate(cfg, corpus, "mlp")
    assert gat.prepared.split == mlp.prepared.split
    assert np.array_equal(gat.prepared.Z, mlp.prepared.Z)
    assert [c.image_id for c in gat.prepared.training] == [c.image_id for c in mlp.prepared.training]
    assert mlp.model.config.embedder == "mlp" and gat.model.config.embedder == "gat"
    none = ablate(cfg, corpus, "none", 2)
    assert none.model.semantic is None and np.isfinite(none.report.mAP_full)


def test_shuffled_control_permutes_scores(tiny):
    res = run_experiment(tiny, synth_corpus(tiny.synth))
    ctrl = shuffled_control(res.detections, 0)
    assert sorted(d.score for d in ctrl) == sorted(d.score for d in res.detections)
    assert [d.b_h for d in ctrl] == [d.b_h for d in res.detections]


def test_float32_run(tiny):
    res = run_experiment(replace(tiny, dtype="float32"), synth_corpus(tiny.synth))
    assert res.model.visual.mapper_h.embed.weight.data.dtype == np.float32
    assert np.isfinite(res.report.mAP_full)
