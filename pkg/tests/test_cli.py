import json
import subprocess
import sys

import numpy as np
import pytest

from devforge.cli import run_command
from devforge.corpus import RoleLabel
from devforge.jsonl import write_jsonl


def _prepared_run(root):
    """A model dir with a split and hand-made vectors, no corpus documents."""
    rng = np.random.default_rng(0)
    roles = list(RoleLabel)
    devs = [(f"{r.value.lower()}-{i}", r) for r in roles for i in range(6)]
    write_jsonl(root / "corpus" / "developers.jsonl", [{"developer_id": d, "role": r.value} for d, r in devs])
    centers = rng.normal(size=(5, 4)) * 4
    rows = [{"developer_id": d, "source": "Repos", "dim": 4,
             "values": (centers[roles.index(r)] + rng.normal(size=4)).tolist()} for d, r in devs]
    write_jsonl(root / "models" / "vectors.jsonl", rows)
    ids = [d for d, _ in devs]
    split = {"train": [d for d in ids if not d.endswith(("-4", "-5"))], "val": [], "test": [d for d in ids if d.endswith(("-4", "-5"))]}
    (root / "models" / "split.json").write_text(json.dumps(split))
    config = root / "c.json"
    config.write_text(json.dumps({"paths": {"out_dir": str(root)}}))
    return config


def test_classify_then_evaluate_on_prepared_vectors(tmp_path, capsys):
    config = _prepared_run(tmp_path)
    assert run_command(["classify", "--config", str(config)]) == 0
    assert run_command(["evaluate", "--config", str(config)]) == 0
    report = json.loads((tmp_path / "reports" / "report.json").read_text())
    names = [r["name"] for r in report["runs"]]
    assert names == ["Baseline", "dev2vec:Repos"]
    assert (tmp_path / "reports" / "config.resolved.json").exists()
    out = capsys.readouterr().out.strip().splitlines()
    assert out[0].startswith("classify:") and out[1].startswith("evaluate:")


def test_missing_vector_size_exits_2(tmp_path, capsys):
    config = tmp_path / "c.json"
    config.write_text(json.dumps({"repos": {"vector_size": None}}))
    assert run_command(["evaluate", "--config", str(config)]) == 2
    assert "vector_size" in capsys.readouterr().err


def test_malformed_json_exits_2(tmp_path, capsys):
    config = tmp_path / "c.json"
    config.write_text("{")
    assert run_command(["train", "--config", str(config)]) == 2
    assert "line 1" in capsys.readouterr().err


def test_strict_unknown_key_exits_2(tmp_path, capsys):
    config = tmp_path / "c.json"
    config.write_text(json.dumps({"reports": {}}))
    assert run_command(["evaluate", "--config", str(config), "--strict"]) == 2
    assert "reports" in capsys.readouterr().err


def test_stage_failure_exits_1(tmp_path, capsys):
    assert run_command(["evaluate", "--out", str(tmp_path / "empty")]) == 1
    assert "classify" in capsys.readouterr().err


def test_negative_seed_is_config_error(tmp_path):
    assert run_command(["evaluate", "--seed", "-3", "--out", str(tmp_path)]) == 2


def test_unknown_subcommand():
    with pytest.raises(SystemExit) as err:
        run_command(["frobnicate"])
    assert err.value.code == 2


def test_imports_subcommand(import_fixtures, capsys):
    assert run_command(["imports", "--file", str(import_fixtures / "sample.go")]) == 0
    assert capsys.readouterr().out.split() == ["fmt", "net/http", "github.com/sirupsen/logrus", "github.com/lib/pq"]
    assert run_command(["imports", "--lang", "Ruby", "--file", str(import_fixtures / "sample.rb")]) == 0
    assert capsys.readouterr().out.split()[0] == "json"


def test_imports_unknown_language(tmp_path, capsys):
    f = tmp_path / "notes.txt"
    f.write_text("import os")
    assert run_command(["imports", "--file", str(f)]) == 2
    assert run_command(["imports", "--lang", "Cobol", "--file", str(f)]) == 2


@pytest.mark.slow
def test_all_on_mini_fixtures(tmp_path, mini_fixtures):
    out = tmp_path / "run"
    proc = subprocess.run(
        [sys.executable, "-m", "devforge", "all", "--fixtures", str(mini_fixtures), "--deterministic",
         "--seed", "3", "--out", str(out)],
        capture_output=True, text=True, timeout=300,
    )
    assert proc.returncode == 0, proc.stderr
    lines = proc.stdout.strip().splitlines()
    assert [line.split(":")[0] for line in lines] == [
        "mine", "ingest", "train", "embed", "concat", "pca", "classify", "evaluate", "analyze"]
    report = json.loads((out / "reports" / "report.json").read_text())
    names = {r["name"] for r in report["runs"]}
    assert {"Baseline", "SOA:bow", "dev2vec:Repos", "dev2vec:Issues", "dev2vec:APIs", "dev2vec:RIAs"} <= names
    assert {f"dev2vec:RIAs-PCA{k}" for k in (50, 100, 200, 250, 300)} <= names
    resolved = json.loads((out / "reports" / "config.resolved.json").read_text())
    assert resolved["seed"] == 3 and resolved["repos"]["workers"] == 1
