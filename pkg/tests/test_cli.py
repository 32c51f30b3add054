import json
import subprocess
import sys

import pytest

from conftest import tiny_config
from consnet.cli import main


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, [json.loads(line) for line in out.splitlines()], err


@pytest.fixture
def workspace(tmp_path):
    tiny_config().save(tmp_path / "run.json")
    return tmp_path


def test_synth_is_deterministic(capsys, tmp_path):
    for name in ("a", "b"):
        code, _, _ = run(capsys, "synth", "--seed", "7", "--out", str(tmp_path / name))
        assert code == 0
    files = sorted(p.name for p in (tmp_path / "a").iterdir())
    assert "labelspace.json" in files
    for f in files:
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()


def test_end_to_end(capsys, workspace):
    cfg = ["--config", str(workspace / "run.json")]
    assert run(capsys, "synth", *cfg)[0] == 0
    code, out, _ = run(capsys, "build-graph", *cfg)
    assert code == 0 and out[0]["nodes"] > 0 and (workspace / "out" / "graph.json").is_file()
    code, out, _ = run(capsys, "train", *cfg)
    assert code == 0 and out[0]["steps"] > 0
    history = (workspace / "out" / "history.jsonl").read_text().splitlines()
    assert len(history) == out[0]["steps"]
    code, out, _ = run(capsys, "detect", *cfg, "--threads", "2")
    assert code == 0 and out[0]["detections"] > 0
    code, out, _ = run(capsys, "eval", *cfg)
    assert code == 0 and 0.0 <= out[0]["mAP_full"] <= 1.0
    report = json.loads((workspace / "out" / "report.json").read_text())
    assert report["mAP_full"] == out[0]["mAP_full"]
    code, out, _ = run(capsys, "ablate", *cfg, "--embedder", "mlp", "--depth", "2")
    assert code == 0 and out[0]["embedder"] == "mlp" and out[0]["depth"] == 2
    assert (workspace / "out" / "ablate-mlp-d2" / "report.json").is_file()


def test_missing_corpus_is_a_machine_readable_error(capsys, workspace):
    code, _, err = run(capsys, "train", "--config", str(workspace / "run.json"))
    assert code == 3
    assert json.loads(err.strip().splitlines()[-1])["error"] == "missing_file"


def test_schema_violation(capsys, tmp_path):
    (tmp_path / "bad.json").write_text(json.dumps({"model": {"depht": 3}}))
    code, _, err = run(capsys, "build-graph", "--config", str(tmp_path / "bad.json"))
    assert code == 2 and json.loads(err)["error"] == "config"


def test_infeasible_split(capsys, workspace):
    cfg = tiny_config().to_json()
    cfg["split"] = {"scenario": "UA", "k": 50, "rare_threshold": 10}
    (workspace / "run.json").write_text(json.dumps(cfg))
    run(capsys, "synth", "--config", str(workspace / "run.json"))
    code, _, err = run(capsys, "build-graph", "--config", str(workspace / "run.json"))
    assert code == 4 and json.loads(err)["error"] == "infeasible_split"


def test_bad_checkpoint(capsys, workspace):
    cfg = ["--config", str(workspace / "run.json")]
    run(capsys, "synth", *cfg)
    (workspace / "junk.ckpt").write_bytes(b"not a checkpoint")
    code, _, err = run(capsys, "detect", *cfg, "--checkpoint", str(workspace / "junk.ckpt"))
    assert code == 6 and json.loads(err)["error"] == "checkpoint"


def test_usage_error(capsys):
    code, _, err = run(capsys, "ablate", "--embedder", "cnn")
    assert code == 2 and json.loads(err)["error"] == "usage"


def test_gradcheck_command_through_the_entry_point():
    proc = subprocess.run([sys.executable, "-m", "consnet.cli", "gradcheck"], capture_output=True, text=True,
                          timeout=120)
    doc = json.loads(proc.stdout)
    assert proc.returncode == 0 and doc["passed"] and doc["max_relative_error"] < 1e-4
