import json

import pytest

from tooluse.cli import main


def run_cli(*argv):
    return main(list(argv))


def test_gen_writes_scenes(tmp_path):
    out = tmp_path / "scenes"
    assert run_cli("gen", "--domain", "mini-home", "--scenes", "3",
                   "--seed", "5", "--out", str(out)) == 0
    files = sorted(out.glob("scene_*.json"))
    assert len(files) == 3
    doc = json.loads(files[0].read_text())
    assert "objects" in doc and "edges" in doc


def test_gen_unknown_domain_is_config_error(tmp_path):
    assert run_cli("gen", "--domain", "atlantis", "--out", str(tmp_path)) == 2


@pytest.fixture(scope="module")
def demo_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("corpus")
    code = run_cli("demo", "--domain", "mini-home", "--scenes", "3", "--seed", "0",
                   "--variants", "1", "--out", str(out))
    assert code == 0
    return out


def test_demo_emits_manifest_and_traces(demo_dir):
    manifest = json.loads((demo_dir / "manifest.json").read_text())
    assert manifest["trace_count"] > 0
    assert manifest["splits"]
    lines = (demo_dir / "traces.ndjson").read_text().splitlines()
    assert len(lines) == manifest["trace_count"]


def test_demo_byte_reproducible(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for out in (a, b):
        assert run_cli("demo", "--domain", "mini-home", "--scenes", "2", "--seed", "3",
                       "--variants", "1", "--no-augment", "--out", str(out)) == 0
    assert (a / "traces.ndjson").read_bytes() == (b / "traces.ndjson").read_bytes()
    assert (a / "manifest.json").read_bytes() == (b / "manifest.json").read_bytes()


def test_replay_accepts_corpus_traces(demo_dir):
    assert run_cli("replay", "--domain", "mini-home",
                   "--trace", str(demo_dir / "traces.ndjson")) == 0


def test_replay_rejects_tampered_trace(demo_dir, tmp_path):
    lines = (demo_dir / "traces.ndjson").read_text().splitlines()
    record = json.loads(lines[0])
    if record["actions"]:
        record["actions"] = record["actions"][:-1]  # chop the final action
    else:
        record["success"] = False
    bad = tmp_path / "bad.ndjson"
    bad.write_text(json.dumps(record) + "\n")
    assert run_cli("replay", "--domain", "mini-home", "--trace", str(bad)) == 3


def test_replay_missing_file_is_config_error(tmp_path):
    assert run_cli("replay", "--domain", "mini-home",
                   "--trace", str(tmp_path / "nope.ndjson")) == 2


def test_train_then_eval_round_trip(demo_dir, tmp_path):
    run_dir = tmp_path / "run"
    config = tmp_path / "config.json"
    config.write_text(json.dumps({
        "hidden_size": 12, "ggcn_layers": 1, "conv_steps": 1, "embed_dim": 16,
        "head_layers": 1, "max_epochs": 1, "patience": 1, "lr": 1e-3,
    }))
    assert run_cli("train", "--domain", "mini-home", "--corpus", str(demo_dir),
                   "--config", str(config), "--out", str(run_dir)) == 0
    ckpt = run_dir / "checkpoint.json"
    assert ckpt.exists()
    assert (run_dir / "metrics.ndjson").exists()
    report_dir = tmp_path / "report"
    assert run_cli("eval", "--domain", "mini-home", "--corpus", str(demo_dir),
                   "--checkpoint", str(ckpt), "--pairs", "2",
                   "--suites", "Position", "--out", str(report_dir)) == 0
    report = json.loads((report_dir / "report.json").read_text())
    assert 0.0 <= report["plan_execution"] <= 1.0
    assert (report_dir / "summary.txt").exists()


def test_eval_without_checkpoint_is_config_error(tmp_path):
    assert run_cli("eval", "--domain", "mini-home", "--out", str(tmp_path)) == 2
