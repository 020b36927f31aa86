import json
import os
import shutil
import subprocess

import numpy as np
import pytest

from handsynth.cli import draw_overlay, main
from handsynth.dataset import read_manifest
from handsynth.metrics import write_predictions
from handsynth.render import Annotation


@pytest.fixture(scope="module")
def gen12(tmp_path_factory):
    out = tmp_path_factory.mktemp("cli") / "d12"
    assert main(["generate", "-n", "12", "--seed", "7", "--out", str(out), "--threads", "1"]) == 0
    return out


def test_generate_partition(gen12):
    m = read_manifest(str(gen12))
    assert m.n == 12 and m.preset is None
    cells = {(r.spec.gender, r.spec.tone_index) for r in m.records}
    assert len(cells) == 12
    run = json.loads((gen12 / "run_config.json").read_text())
    assert run["subcommand"] == "generate" and run["seed"] == 7 and run["n"] == 12


def test_replay_run_config(gen12, tmp_path):
    out = tmp_path / "again"
    assert main(["generate", "--replay", str(gen12 / "run_config.json"), "--out", str(out)]) == 0
    assert (gen12 / "manifest.jsonl").read_bytes() == (out / "manifest.jsonl").read_bytes()
    for i in range(12):
        name = f"images/{i:06d}.png"
        assert (gen12 / name).read_bytes() == (out / name).read_bytes()


def test_overrides_and_env_config(tmp_path, monkeypatch):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"jitter_deg": 0.0}))
    monkeypatch.setenv("HANDSYNTH_CONFIG", str(cfg))
    out = tmp_path / "o"
    assert main(["generate", "-n", "1", "--out", str(out), "--set", "augment=false"]) == 0
    m = read_manifest(str(out))
    assert m.header["config"]["jitter_deg"] == 0.0 and m.header["config"]["augment"] is False
    assert m.records[0].augmentation == []


def test_usage_errors(tmp_path, capsys):
    assert main([]) == 1
    assert main(["generate"]) == 1
    assert main(["generate", "-n", "3", "--preset", "small", "--out", str(tmp_path)]) == 1
    assert main(["bogus"]) == 1
    assert main(["evaluate", str(tmp_path)]) == 1


def test_schema_and_io_errors(gen12, tmp_path):
    assert main(["generate", "-n", "2", "--out", str(tmp_path / "x"),
                 "--set", "nope=1"]) == 2
    assert main(["audit", str(tmp_path / "missing")]) == 3
    bad = tmp_path / "bad"
    bad.mkdir()
    (bad / "manifest.jsonl").write_text('{"kind": "header", "schema_version": 9}\n')
    assert main(["audit", str(bad)]) == 2
    blocked = tmp_path / "file"
    blocked.write_text("")
    assert main(["generate", "-n", "1", "--out", str(blocked / "sub")]) == 3


def test_audit(gen12, tmp_path, capsys):
    assert main(["audit", str(gen12), "--out", str(tmp_path)]) == 0
    rep = json.loads((tmp_path / "balance.json").read_text())
    assert rep["flags"] == [] and sum(rep["cells"].values()) == 12
    assert "flags 0" in capsys.readouterr().out


def test_evaluate_with_ground_truth(gen12, tmp_path, capsys):
    m = read_manifest(str(gen12))
    preds = tmp_path / "p.jsonl"
    write_predictions(str(preds), {r.id: r.annotation.keypoints_2d for r in m.records}, "gt")
    out = tmp_path / "rep"
    assert main(["evaluate", str(gen12), "--predictions", str(preds), "--group-by", "tone",
                 "--out", str(out)]) == 0
    reports = json.loads((out / "report.json").read_text())
    assert len(reports) == 1 + 6
    for r in reports:
        assert r["pck_at"]["0.2"] == 1.0 and r["auc"] == 1.0 and r["epe"] == 0.0
    assert "tone=5" in (out / "report.txt").read_text()
    assert main(["evaluate", str(gen12), "--predictions", str(preds), "--grid", "0.05:0.2:4"]) == 0


def test_evaluate_errors(gen12, tmp_path, capsys):
    m = read_manifest(str(gen12))
    preds = tmp_path / "p.jsonl"
    write_predictions(str(preds), {r.id: r.annotation.keypoints_2d for r in m.records[:-2]})
    assert main(["evaluate", str(gen12), "--predictions", str(preds)]) == 2
    err = capsys.readouterr().err
    assert "missing" in err and "10, 11" in err
    preds.write_text('{"id": 0, "keypoints": [[1, 2]]}\n')
    assert main(["evaluate", str(gen12), "--predictions", str(preds)]) == 2
    assert "line 1" in capsys.readouterr().err


def test_perturb(gen12, tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["perturb", str(gen12), "--out", str(a), "--seed", "3"]) == 0
    assert main(["perturb", str(gen12), "--out", str(b), "--seed", "3"]) == 0
    assert (a / "manifest.jsonl").read_bytes() == (gen12 / "manifest.jsonl").read_bytes()
    assert len(os.listdir(a / "images")) == 12
    for name in os.listdir(a / "images"):
        assert (a / "images" / name).read_bytes() == (b / "images" / name).read_bytes()
    assert main(["perturb", str(gen12), "--out", str(gen12)]) == 1


def test_augment(gen12, tmp_path):
    d = tmp_path / "d"
    shutil.copytree(gen12, d)
    assert main(["augment", str(d), "--seed", "5"]) == 0
    m = read_manifest(str(d))
    assert all(len(r.augmentation) == 2 for r in m.records)


def test_preview(gen12, tmp_path):
    out = tmp_path / "pv"
    assert main(["preview", str(gen12), "-k", "0", "--out", str(out)]) == 0
    assert not out.exists() or os.listdir(out) == []
    assert main(["preview", str(gen12), "-k", "3", "--out", str(out)]) == 0
    assert sorted(os.listdir(out)) == ["000000.png", "000001.png", "000002.png"]
    assert main(["preview", str(gen12), "-k", "13"]) == 1


def test_overlay_marks_keypoints():
    k = np.array([[40.4 + 27 * i, 100.6 + 20 * (i % 3)] for i in range(21)])
    vis = np.arange(21) % 2 == 0
    ann = Annotation(k, vis, np.zeros((21, 3)), (0, 0, 1, 1), {})
    img = draw_overlay(np.zeros((640, 640, 3), np.uint8), ann)
    for (x, y), v in zip(k, vis):
        cx, cy = int(round(x)), int(round(y))
        assert abs(cx - x) <= 0.5 and abs(cy - y) <= 0.5
        if v:
            assert tuple(img[cy, cx]) == (0, 255, 0)
        else:
            # occluded keypoints are red rings around an unfilled centre
            assert tuple(img[cy, cx + 4]) == (255, 0, 0)
            assert tuple(img[cy, cx]) != (255, 0, 0)


def test_console_script(tmp_path):
    exe = shutil.which("handsynth")
    assert exe is not None
    r = subprocess.run([exe, "preview"], capture_output=True, text=True)
    assert r.returncode == 1
