import json
import os
import shutil

import numpy as np
import pytest
from hypothesis import given, strategies as st

from handsynth import dataset
from handsynth.dataset import (PRESETS, Record, audit_balance, cell_schedule, derive_seed,
                               generate, half_mask_region, hand_box_pixels, perturb_dataset,
                               perturb_half, read_image, read_manifest, read_records,
                               replay_sample, sample_seeds, write_records)
from handsynth.errors import DatasetIOError, InvalidArgument, SchemaError
from handsynth.render import Annotation
from handsynth.scene import GenerationConfig, N_CELLS


def test_presets():
    assert PRESETS == {"small": 10000, "medium": 100000, "large": 538643, "desk": 1000}


def test_schedule_exact_partition():
    counts = np.bincount(cell_schedule(3, 1200), minlength=12)
    assert np.all(counts == 100)


@given(st.integers(1, 500), st.integers(0, 2**32))
def test_schedule_pigeonhole(n, seed):
    counts = np.bincount(cell_schedule(seed, n), minlength=N_CELLS)
    assert counts.sum() == n and counts.max() - counts.min() <= 1


def test_schedule_ten():
    counts = np.bincount(cell_schedule(0, 10), minlength=12)
    assert counts.max() - counts.min() <= 1 and counts.sum() == 10


def test_seeds_unique_and_stable():
    s = sample_seeds(9, 20000)
    assert len(set(s)) == 20000
    assert s[:5] == sample_seeds(9, 5)
    assert derive_seed(9, 3) == s[3] and 0 <= s[3] < 2**63


def test_generated_manifest(small_dataset):
    root, m = small_dataset
    assert m.n == 24 == len(m.records)
    assert [r.id for r in m.records] == list(range(24))
    assert len({r.seed for r in m.records}) == 24
    for r in m.records:
        assert os.path.exists(m.image_path(r))
        img = read_image(m.image_path(r))
        assert img.shape == (640, 640, 3) and img.dtype == np.uint8
        assert (r.spec.gender, r.spec.tone_index) == (("Male", "Female")[r.cell // 6], r.cell % 6)


def test_generation_is_deterministic(small_dataset, tmp_path):
    root, _ = small_dataset
    generate(GenerationConfig(), 11, 24, str(tmp_path), threads=1)
    for name in ["manifest.jsonl"] + [f"images/{i:06d}.png" for i in range(24)]:
        with open(os.path.join(root, name), "rb") as a, open(tmp_path / name, "rb") as b:
            assert a.read() == b.read(), name


def test_records_replay(small_dataset):
    root, m = small_dataset
    cfg = GenerationConfig.from_dict(m.header["config"])
    for r in m.records[:6]:
        img, ann = replay_sample(r, cfg)
        assert np.array_equal(img, read_image(m.image_path(r)))
        assert ann.equals(r.annotation)


def test_audit_balanced(small_dataset):
    _, m = small_dataset
    rep = audit_balance(m)
    assert rep.flags == [] and rep.n == 24
    assert set(rep.cells.values()) == {2}
    assert sum(rep.handedness.values()) == 24
    assert sum(rep.poses.values()) == 48


def test_audit_flags_one_missing_record(small_dataset):
    _, m = small_dataset
    short = dataset.DatasetManifest(m.header, m.records[1:], m.root)
    rep = audit_balance(short)
    r0 = m.records[0]
    assert rep.flags == [f"{r0.spec.gender}/{r0.spec.tone_index}"]


def test_record_round_trip(small_dataset, tmp_path):
    _, m = small_dataset
    recs = [m.records[0], m.records[1]]
    k = recs[0].annotation.keypoints_2d.copy()
    k[0, 0] = -12.5
    k[1, 1] = 700.25
    recs[0] = Record(recs[0].id, recs[0].image, recs[0].seed, recs[0].cell, recs[0].spec,
                     recs[0].annotation.replace(keypoints_2d=k), recs[0].augmentation)
    path = tmp_path / "r.jsonl"
    write_records(str(path), recs)
    back = read_records(str(path))
    assert back[0].annotation.keypoints_2d[0, 0] == -12.5
    for a, b in zip(recs, back):
        assert a.annotation.equals(b.annotation)
        assert a.spec == b.spec and a.augmentation == b.augmentation and a.seed == b.seed


def test_unknown_schema_rejected(small_dataset, tmp_path):
    root, _ = small_dataset
    lines = open(os.path.join(root, "manifest.jsonl")).read().splitlines()
    head = json.loads(lines[0])
    head["schema_version"] = 2
    bad = tmp_path / "m.jsonl"
    bad.write_text("\n".join([json.dumps(head)] + lines[1:]) + "\n")
    with pytest.raises(SchemaError, match="schema_version"):
        read_manifest(str(bad))
    bad.write_text(lines[0] + "\n" + lines[1][:40] + "\n")
    with pytest.raises(SchemaError, match=":2:"):
        read_manifest(str(bad))
    bad.write_text(lines[0] + "\n" + json.dumps({"kind": "mystery"}) + "\n")
    with pytest.raises(SchemaError):
        read_manifest(str(bad))


def _ann(points):
    k = np.asarray(points, float)
    n = len(k)
    return Annotation(k, np.ones(n, bool), np.zeros((n, 3)), (0.0, 0.0, 1.0, 1.0), {})


def test_perturb_half_area_and_annotation(small_dataset):
    root, m = small_dataset
    for r in m.records:
        img = read_image(m.image_path(r))
        before = json.dumps(r.annotation.to_dict())
        for seed in range(4):
            x0, y0, x1, y1, axis, side = half_mask_region(r.annotation, seed)
            bx0, by0, bx1, by1 = hand_box_pixels(r.annotation, (640, 640))
            bw, bh = bx1 - bx0 + 1, by1 - by0 + 1
            area = (x1 - x0) * (y1 - y0)
            # half of the box, off by at most one row or column
            slack = bh if axis == 0 else bw
            assert abs(area - bw * bh / 2) <= slack / 2 + 1e-9
            out = perturb_half(img, r.annotation, seed)
            assert np.all(out[y0:y1, x0:x1] == 128)
            outside = np.ones((640, 640), bool)
            outside[y0:y1, x0:x1] = False
            assert np.array_equal(out[outside], img[outside])
        assert json.dumps(r.annotation.to_dict()) == before


def test_perturb_same_seed_same_side():
    ann = _ann([[100, 100], [300, 200]])
    assert half_mask_region(ann, 5) == half_mask_region(ann, 5)
    sides = {half_mask_region(ann, s)[4:] for s in range(64)}
    assert sides == {(0, 0), (0, 1), (1, 0), (1, 1)}


def test_perturb_empty_box():
    with pytest.raises(InvalidArgument):
        hand_box_pixels(_ann([[-10, 5], [700, 700]]), (640, 640))
    with pytest.raises(InvalidArgument):
        perturb_half(np.zeros((640, 640, 3), np.uint8), _ann([[-1, -1]]), 0)


def test_perturb_dataset_keeps_annotations(small_dataset, tmp_path):
    root, m = small_dataset
    out = tmp_path / "pert"
    pm = perturb_dataset(str(root), str(out), 3)
    assert open(os.path.join(root, "manifest.jsonl"), "rb").read() == \
        open(out / "manifest.jsonl", "rb").read()
    log = [json.loads(x) for x in open(out / "perturbation.jsonl").read().splitlines()[1:]]
    assert len(log) == m.n
    for r, entry in zip(pm.records, log):
        x0, y0, x1, y1 = entry["region"]
        img = read_image(pm.image_path(r))
        assert np.all(img[y0:y1, x0:x1] == 128)


def test_resume_after_io_failure(tmp_path, monkeypatch):
    cfg = GenerationConfig()
    ref = tmp_path / "ref"
    generate(cfg, 4, 8, str(ref), threads=1)
    out = tmp_path / "out"
    real = dataset._atomic_write
    calls = {"n": 0}

    def flaky(path, data):
        calls["n"] += 1
        if calls["n"] == 6:
            raise OSError("No space left on device")
        real(path, data)

    monkeypatch.setattr(dataset, "_atomic_write", flaky)
    with pytest.raises(DatasetIOError) as err:
        generate(cfg, 4, 8, str(out), threads=1)
    assert err.value.checkpoint == 5
    assert len(read_manifest(str(out)).records) == 5
    monkeypatch.setattr(dataset, "_atomic_write", real)
    generate(cfg, 4, 8, str(out), threads=1, resume=True)
    assert open(ref / "manifest.jsonl", "rb").read() == open(out / "manifest.jsonl", "rb").read()
    for i in range(8):
        name = f"images/{i:06d}.png"
        assert open(ref / name, "rb").read() == open(out / name, "rb").read()


def test_resume_trims_torn_line(tmp_path):
    cfg = GenerationConfig()
    generate(cfg, 4, 3, str(tmp_path), threads=1)
    ref = open(tmp_path / "manifest.jsonl", "rb").read()
    lines = ref.split(b"\n")
    (tmp_path / "manifest.jsonl").write_bytes(b"\n".join(lines[:3]) + b"\n" + lines[3][:25])
    generate(cfg, 4, 3, str(tmp_path), threads=1, resume=True)
    assert open(tmp_path / "manifest.jsonl", "rb").read() == ref


def test_resume_refuses_other_run(tmp_path):
    generate(GenerationConfig(), 4, 2, str(tmp_path), threads=1)
    with pytest.raises(SchemaError):
        generate(GenerationConfig(), 5, 2, str(tmp_path), threads=1, resume=True)


def test_generate_rejects_empty(tmp_path):
    with pytest.raises(InvalidArgument):
        generate(GenerationConfig(), 0, 0, str(tmp_path))


def test_latest_augmentation_wins(small_dataset, tmp_path):
    root, m = small_dataset
    dst = tmp_path / "d"
    shutil.copytree(root, dst)
    dataset.augment_dataset_in_place(str(dst), 8)
    after = read_manifest(str(dst))
    assert all(len(r.augmentation) == len(m.records[0].augmentation) + 1 for r in after.records)
