import json

import numpy as np
import pytest

from adamemento import harness
from adamemento.agent import ppo
from adamemento.agent.metrics import read_metrics
from adamemento.config import parse_config
from adamemento.env import make_env
from adamemento.errors import CompatibilityError, TrainingAbort


def small_cfg(*extra):
    return parse_config(None, ["NumEnv=4", "OriPolicyEnvNum=2", "NumStep=16", "total_updates=4",
                               "ExploitUpdate=2", "exploit_steps=5", *extra])


def test_heatmap_formats():
    z = np.zeros((3, 4))
    pgm = harness.heatmap_bytes(z, "pgm")
    assert pgm.startswith(b"P5\n4 3\n255\n") and set(pgm.split(b"255\n", 1)[1]) == {0}
    one = np.zeros((3, 4), dtype=np.int64)
    one[1, 2] = 7
    body = harness.heatmap_bytes(one, "pgm").split(b"255\n", 1)[1]
    assert len(body) == 12 and body.count(255) == 1 and body[1 * 4 + 2] == 255
    assert harness.heatmap_bytes(one, "csv").decode().splitlines()[1] == "0,0,7,0"
    svg = harness.heatmap_bytes(one, "svg").decode()
    assert svg.count("<rect") == 12
    with pytest.raises(ValueError):
        harness.heatmap_bytes(z, "png")


def test_heatmap_export_is_byte_stable(tmp_path):
    grid = np.random.default_rng(0).integers(0, 50, (50, 50))
    a = harness.export_heatmap(grid, tmp_path / "a.pgm").read_bytes()
    b = harness.export_heatmap(grid, tmp_path / "b.pgm").read_bytes()
    assert a == b


def test_verify_small_grid():
    report = harness.verify(range(10), theorems=(1,))
    assert report.instances == 10 and report.failures == 0
    text = report.to_csv()
    assert len(text.splitlines()) == 12 and text.splitlines()[-1].startswith("#")
    both = harness.verify(range(5))
    assert both.instances == 10 and both.failures == 0


def test_run_experiment_outputs(tmp_path):
    cfg = small_cfg("env.name=dark_chamber", "total_updates=2", "env.width=10", "env.height=10")
    metrics, ckpt = harness.run_experiment(cfg, tmp_path / "a")
    lines = metrics.read_text().splitlines()
    assert len(lines) == 4 and lines[0].startswith("#")
    manifest = json.loads((tmp_path / "a" / harness.MANIFEST_FILE).read_text())
    assert manifest["status"] == "ok" and manifest["seed"] == 0
    metrics2, _ = harness.run_experiment(cfg, tmp_path / "b")
    assert metrics.read_bytes() == metrics2.read_bytes()
    assert ckpt.exists() and (tmp_path / "a" / "visits.csv").exists()


def test_abort_keeps_prefix(tmp_path, monkeypatch):
    real = ppo.ppo_update

    def flaky(*args, **kw):
        if args[-1] == 3:
            raise TrainingAbort("non-finite PPO loss", update=3, minibatch=0)
        return real(*args, **kw)

    monkeypatch.setattr("adamemento.agent.trainer.ppo_update", flaky)
    with pytest.raises(TrainingAbort):
        harness.run_experiment(small_cfg(), tmp_path)
    rows = read_metrics(tmp_path / harness.METRICS_FILE)
    assert [r["update"] for r in rows] == [1.0, 2.0]
    manifest = json.loads((tmp_path / harness.MANIFEST_FILE).read_text())
    assert manifest["status"] == "failed" and manifest["update"] == 3


@pytest.fixture(scope="module")
def cliff_ckpt(tmp_path_factory):
    out = tmp_path_factory.mktemp("run")
    return harness.run_experiment(small_cfg("total_updates=6"), out)[1]


def test_replay(cliff_ckpt):
    text, table = harness.replay(cliff_ckpt, 0)
    assert text == "" and table == ",".join(harness.REPLAY_COLUMNS) + "\n"
    a = harness.replay(cliff_ckpt, 2)
    assert a == harness.replay(cliff_ckpt, 2)
    assert "A" in a[0] and len(a[1].splitlines()) > 1
    with pytest.raises(CompatibilityError):
        harness.replay(cliff_ckpt, 1, make_env("four_rooms"))


def test_maps_and_memory_dump(cliff_ckpt):
    r, recon, sp = harness.novelty_map(cliff_ckpt)
    assert r.shape == (4, 12) and np.all(r >= 0)
    np.testing.assert_allclose(r, recon + 0.01 * sp)
    assert len(harness.novelty_csv(r, recon, sp).splitlines()) == 49
    conf = harness.confidence_map(cliff_ckpt)
    assert conf.shape == (4, 12) and np.all((conf > 0) & (conf < 1))
    dump = harness.dump_memory(cliff_ckpt).splitlines()
    assert dump[0] == "episode_id,step,state_index,action,reward"


def test_render_ascii():
    spec = make_env("cliff_walking")
    art = harness.render_ascii(spec, spec.start).splitlines()
    assert len(art) == 4 and art[3] == "ACCCCCCCCCCG"


def test_plot(tmp_path, cliff_ckpt):
    svg = harness.plot_metrics(cliff_ckpt.parent / harness.METRICS_FILE)
    assert svg.startswith("<svg") and "polyline" in svg
