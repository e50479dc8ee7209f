from __future__ import annotations

import json
import subprocess
import sys

import pytest

from formula_checks import tiny_config
from skillbank.bank import load_bank
from skillbank.cli import main


@pytest.fixture(scope="module")
def trained(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    cfg = root / "config.json"
    cfg.write_text(json.dumps(tiny_config().to_dict()))
    for seed in (0, 1):
        assert main(["train", "--config", str(cfg), "--seed", str(seed), "--steps", "10", "--out", str(root / f"run{seed}")]) == 0
    assert main(["train", "--config", str(cfg), "--steps", "10", "--ablation", "no_skills", "--out", str(root / "plain")]) == 0
    return root


def test_train_outputs(trained, capsys):
    run0 = trained / "run0"
    for name in ("config.json", "metrics.jsonl", "bank.jsonl", "policy.json", "summary.json", "val_tasks.jsonl"):
        assert (run0 / name).exists()
    assert json.loads((trained / "plain" / "config.json").read_text())["ablations"] == ["no_skills"]


def test_eval_with_and_without_skills(trained, capsys):
    run0 = trained / "run0"
    args = ["eval", "--policy", str(run0 / "policy.json"), "--tasks", str(run0 / "val_tasks.jsonl")]
    assert main(args + ["--bank", str(run0 / "bank.jsonl")]) == 0
    with_skills = json.loads(capsys.readouterr().out)
    summary = json.loads((run0 / "summary.json").read_text())
    assert with_skills["use_skills"] and with_skills["success"] == summary["final_validation"]
    assert main(args + ["--no-skills"]) == 0
    plain = json.loads(capsys.readouterr().out)
    assert not plain["use_skills"] and plain["tasks"] == with_skills["tasks"]
    assert main(args) == 1
    assert "error" in capsys.readouterr().err


def test_inspect_and_prune(trained, tmp_path, capsys):
    bank_path = trained / "run0" / "bank.jsonl"
    assert main(["inspect-bank", "--bank", str(bank_path), "--kind", "step", "--limit", "3"]) == 0
    assert "step" in capsys.readouterr().out
    out = tmp_path / "small.jsonl"
    assert main(["prune", "--bank", str(bank_path), "--capacity", "1", "--out", str(out)]) == 0
    capsys.readouterr()
    small = load_bank(out.read_bytes())
    assert len(small.task_pool) <= 1 and len(small.step_pool) <= 1
    assert len(load_bank(bank_path.read_bytes())) >= len(small)


def test_analyze(trained, tmp_path, capsys):
    assert main(["analyze", "--runs", str(trained), "--out", str(tmp_path)]) == 0
    text = capsys.readouterr().out
    assert "best_validation" in text and "no_skills" in text
    data = json.loads((tmp_path / "comparison.json").read_text())
    assert data["counts"] == {"full": 2, "no_skills": 1}
    assert (tmp_path / "series.json").exists() and (tmp_path / "comparison.txt").exists()


@pytest.mark.parametrize(
    "argv",
    [
        ["eval", "--policy", "/nonexistent/p.json", "--tasks", "/nonexistent/t.jsonl", "--no-skills"],
        ["inspect-bank", "--bank", "/nonexistent/bank.jsonl"],
        ["analyze", "--runs", "/nonexistent"],
    ],
)
def test_errors_exit_nonzero(argv, capsys):
    assert main(argv) == 1
    assert capsys.readouterr().err.startswith(f"skillbank {argv[0]}: error:")


def test_bad_config_exits_nonzero(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"group_size": 3}))
    assert main(["train", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 1
    assert "group_size" in capsys.readouterr().err


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "skillbank", "--help"], capture_output=True, text=True)
    assert proc.returncode == 0 and "inspect-bank" in proc.stdout
