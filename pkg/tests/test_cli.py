import subprocess
import sys

import pytest

from adamemento.cli import EXIT_CONFIG, EXIT_FAILED, EXIT_OK, EXIT_RUNTIME, run

TRAIN = ["--set", "NumEnv=4", "--set", "OriPolicyEnvNum=2", "--set", "NumStep=16", "--set", "total_updates=2"]


def test_train_and_tools(tmp_path, capsys):
    out = tmp_path / "run"
    assert run(["train", *TRAIN, "--seed", "1", "--out", str(out)]) == EXIT_OK
    ck = str(out / "checkpoint.amck")
    assert run(["novelty-map", ck, "--out", str(tmp_path / "n.csv")]) == EXIT_OK
    assert run(["novelty-map", ck, "--out", str(tmp_path / "n.pgm")]) == EXIT_OK
    assert run(["inspect-confidence", ck, "--out", str(tmp_path / "c.csv")]) == EXIT_OK
    assert run(["dump-memory", ck, "--out", str(tmp_path / "m.csv")]) == EXIT_OK
    assert run(["replay", ck, "--out", str(tmp_path / "rp")]) == EXIT_OK
    assert run(["plot", str(out / "metrics.csv"), "--out", str(tmp_path / "p.svg")]) == EXIT_OK
    for name in ("n.csv", "n.pgm", "c.csv", "m.csv", "rp/replay.txt", "rp/replay.csv", "p.svg"):
        assert (tmp_path / name).stat().st_size > 0


def test_exit_codes(tmp_path, capsys):
    assert run(["train", "--set", "Confidence=1.5"]) == EXIT_CONFIG
    assert "Confidence" in capsys.readouterr().err
    out = tmp_path / "run"
    run(["train", *TRAIN, "--out", str(out)])
    assert run(["replay", str(out / "checkpoint.amck"), "--env", "four_rooms", "--out", str(tmp_path)]) == EXIT_RUNTIME
    assert run(["verify", "--seeds", "3", "--out", str(tmp_path / "v.csv")]) == EXIT_OK


def test_verify_failure_exit(tmp_path, monkeypatch):
    from adamemento import harness
    real = harness.verify
    monkeypatch.setattr(harness, "verify", lambda *a, **k: harness.VerifyReport([], 1, 1))
    assert run(["verify", "--seeds", "1", "--out", str(tmp_path / "v.csv")]) == EXIT_FAILED
    monkeypatch.setattr(harness, "verify", real)


def test_ablation_flags_reach_config(tmp_path):
    out = tmp_path / "r"
    assert run(["train", *TRAIN, "--no-memory", "--no-curiosity", "--out", str(out)]) == EXIT_OK
    assert "disable_memory = true" in (out / "manifest.json").read_text().replace("\\n", "\n")


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "adamemento.cli", "--help"], capture_output=True, text=True)
    assert res.returncode == 0 and "verify" in res.stdout
