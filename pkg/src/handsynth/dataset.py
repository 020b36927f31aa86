"""Dataset generation, manifest I/O, balance audits and the half-hand perturbation set.

On-disk layout of a dataset directory::

    manifest.jsonl     line 1: header {kind: "header", schema_version, preset, split, n,
                                       master_seed, config}
                       then one {kind: "record", id, image, seed, cell, spec, augmentation,
                                 annotation} per sample, in id order
                       then any {kind: "augmentation", id, pass_seed, plan, annotation} lines
                       appended by in-place augmentation passes (latest annotation wins)
    images/000000.png  8-bit RGB PNG per record
    run_config.json    written by the command line front end
"""

from __future__ import annotations

import collections
import json
import math
import os
import shutil
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import cv2
import numpy as np

from .augment import AugmentationPlan, apply, sample_plan
from .errors import DatasetIOError, InvalidArgument, LoadError, SchemaError
from .render import Annotation, render
from .scene import GENDERS, N_CELLS, N_TONES, GenerationConfig, SampleSpec, sample_spec

MANIFEST_VERSION = 1
MANIFEST_NAME = "manifest.jsonl"
IMAGE_DIR = "images"
PRESETS = {"small": 10000, "medium": 100000, "large": 538643, "desk": 1000}

_CELL_STREAM = 0xCE11
_PERTURB_STREAM = 0xBA1F


# ---------------------------------------------------------------- seeds and scheduling

def derive_seed(master_seed, index):
    """63-bit per-item seed; wide enough that a 538k-sample set has no collisions in practice."""
    hi, lo = np.random.SeedSequence([int(master_seed), int(index)]).generate_state(2)
    return (int(hi) << 31) | (int(lo) >> 1)


def sample_seeds(master_seed, n):
    seeds = [derive_seed(master_seed, i) for i in range(n)]
    if len(set(seeds)) != n:
        raise InvalidArgument(f"seed collision for master seed {master_seed}")
    return seeds


def cell_schedule(master_seed, n):
    """(gender, tone) cell per sample: a seeded permutation of all 12 cells per block of 12.

    Every cell therefore receives floor(n/12) or ceil(n/12) samples.
    """
    out = np.empty(n, dtype=np.int64)
    for block in range(math.ceil(n / N_CELLS)):
        rng = np.random.default_rng([int(master_seed), _CELL_STREAM, block])
        perm = rng.permutation(N_CELLS)
        lo = block * N_CELLS
        out[lo:lo + N_CELLS] = perm[:n - lo]
    return out


# ---------------------------------------------------------------- records and manifests

@dataclass
class Record:
    id: int
    image: str
    seed: int
    cell: int
    spec: SampleSpec
    annotation: Annotation
    augmentation: list = field(default_factory=list)  # plan dicts, oldest first

    def to_dict(self):
        return {"kind": "record", "id": self.id, "image": self.image, "seed": self.seed,
                "cell": self.cell, "spec": self.spec.to_dict(),
                "augmentation": self.augmentation[0] if self.augmentation else None,
                "annotation": self.annotation.to_dict()}

    @classmethod
    def from_dict(cls, d):
        aug = d.get("augmentation")
        return cls(int(d["id"]), d["image"], int(d["seed"]), int(d["cell"]),
                   SampleSpec.from_dict(d["spec"]), Annotation.from_dict(d["annotation"]),
                   [aug] if aug is not None else [])


@dataclass
class DatasetManifest:
    header: dict
    records: list
    root: str | None = None

    @property
    def n(self):
        return int(self.header["n"])

    @property
    def preset(self):
        return self.header.get("preset")

    @property
    def split(self):
        return self.header.get("split", "train")

    @property
    def schema_version(self):
        return self.header["schema_version"]

    def image_path(self, record):
        return os.path.join(self.root or ".", record.image)

    def by_id(self):
        return {r.id: r for r in self.records}


def make_header(config: GenerationConfig, master_seed, n, preset=None, split="train"):
    return {"kind": "header", "schema_version": MANIFEST_VERSION, "preset": preset,
            "split": split, "n": int(n), "master_seed": int(master_seed),
            "config": config.to_dict()}


def _dumps(obj):
    return json.dumps(obj, separators=(",", ":"), allow_nan=False)


def _check_header(header, where):
    if not isinstance(header, dict) or header.get("kind") != "header":
        raise SchemaError(f"{where}: first line is not a manifest header")
    if header.get("schema_version") != MANIFEST_VERSION:
        raise SchemaError(f"{where}: manifest schema_version {header.get('schema_version')!r} "
                          f"is not supported (expected {MANIFEST_VERSION})")


def read_manifest(path, strict=True) -> DatasetManifest:
    """Load a manifest file (or the manifest of a dataset directory).

    With ``strict=False`` a torn final line is ignored, which is how resume finds its checkpoint.
    """
    if os.path.isdir(path):
        path = os.path.join(path, MANIFEST_NAME)
    if not os.path.exists(path):
        raise LoadError(f"manifest not found: {path}")
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines:
        raise SchemaError(f"{path}: empty manifest")
    header = None
    records = []
    index = {}
    for no, line in enumerate(lines, 1):
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            if not strict and no == len(lines):
                break
            raise SchemaError(f"{path}:{no}: malformed manifest line ({exc})") from None
        if no == 1:
            _check_header(obj, path)
            header = obj
            continue
        kind = obj.get("kind")
        try:
            if kind == "record":
                rec = Record.from_dict(obj)
                index[rec.id] = rec
                records.append(rec)
            elif kind == "augmentation":
                rec = index[int(obj["id"])]
                rec.augmentation.append(obj["plan"])
                rec.annotation = Annotation.from_dict(obj["annotation"])
            else:
                raise SchemaError(f"{path}:{no}: unknown line kind {kind!r}")
        except (KeyError, TypeError, ValueError) as exc:
            raise SchemaError(f"{path}:{no}: bad {kind} line ({exc!r})") from None
    return DatasetManifest(header, records, os.path.dirname(os.path.abspath(path)))


def write_records(path, records, header=None):
    """Write annotation records (Record objects) as a standalone manifest file."""
    header = header or {"kind": "header", "schema_version": MANIFEST_VERSION, "preset": None,
                        "split": "train", "n": len(records), "master_seed": 0, "config": {}}
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(_dumps(header) + "\n")
        for r in records:
            fh.write(_dumps(r.to_dict()) + "\n")


def read_records(path):
    return read_manifest(path).records


# ---------------------------------------------------------------- images

def encode_png(image, compression=1):
    ok, buf = cv2.imencode(".png", np.ascontiguousarray(image[..., ::-1]),
                           [cv2.IMWRITE_PNG_COMPRESSION, int(compression)])
    if not ok:
        raise DatasetIOError("PNG encoding failed")
    return buf.tobytes()


def read_image(path):
    data = cv2.imread(path, cv2.IMREAD_COLOR)
    if data is None:
        raise LoadError(f"cannot read image {path}")
    return np.ascontiguousarray(data[..., ::-1])


def _atomic_write(path, data):
    tmp = path + ".tmp"
    with open(tmp, "wb") as fh:
        fh.write(data)
    os.replace(tmp, path)


def image_name(index):
    return f"{IMAGE_DIR}/{index:06d}.png"


# ---------------------------------------------------------------- generation

def make_sample(index, seed, cell, config: GenerationConfig, library=None):
    """Render, annotate and (optionally) augment one sample. Returns (record, png bytes)."""
    spec = sample_spec(seed, config, cell=cell, library=library)
    image, ann = render(spec, library=library, config=config)
    plans = []
    if config.augment:
        plan = sample_plan(seed)
        image, ann = apply(image, ann, plan)
        plans.append(plan.to_dict())
    rec = Record(index, image_name(index), seed, int(cell), spec, ann, plans)
    return rec, encode_png(image, config.png_compression)


def replay_sample(record: Record, config: GenerationConfig, library=None):
    """Re-create a record's image and annotation from its spec and plan log."""
    image, ann = render(record.spec, library=library, config=config)
    for plan in record.augmentation:
        image, ann = apply(image, ann, AugmentationPlan.from_dict(plan))
    return image, ann


def _resume_point(manifest_path, header):
    """Number of complete records already on disk; trims a torn trailing line."""
    existing = read_manifest(manifest_path, strict=False)
    for key in ("schema_version", "n", "master_seed", "config"):
        if existing.header.get(key) != header.get(key):
            raise SchemaError(f"cannot resume: manifest {key} differs from this run")
    done = 0
    for rec in existing.records:
        if rec.id != done or rec.augmentation and len(rec.augmentation) > 1:
            raise SchemaError("cannot resume: manifest is not a plain generation log")
        if not os.path.exists(existing.image_path(rec)):
            break
        done += 1
    # rewrite exactly the header and the first `done` record lines
    with open(manifest_path, "rb") as fh:
        lines = fh.read().split(b"\n")
    keep = b"\n".join(lines[:done + 1]) + b"\n"
    with open(manifest_path, "wb") as fh:
        fh.write(keep)
    return done


def generate(config: GenerationConfig, master_seed, n, out_dir, threads=None, preset=None,
             split="train", resume=False, progress=None, library=None) -> DatasetManifest:
    """Render a balanced dataset of ``n`` samples into ``out_dir``.

    Samples are produced by a thread pool and written in id order by a single writer, so the
    output is independent of ``threads``. On an I/O failure a DatasetIOError is raised whose
    ``checkpoint`` is the number of records safely on disk; ``resume=True`` continues from it.
    """
    from .poses import default_library
    n = int(n)
    if n < 1:
        raise InvalidArgument("N must be at least 1")
    library = library or default_library()
    threads = threads or os.cpu_count() or 1
    header = make_header(config, master_seed, n, preset, split)
    seeds = sample_seeds(master_seed, n)
    cells = cell_schedule(master_seed, n)
    manifest_path = os.path.join(out_dir, MANIFEST_NAME)

    done = 0
    try:
        os.makedirs(os.path.join(out_dir, IMAGE_DIR), exist_ok=True)
        if resume and os.path.exists(manifest_path):
            done = _resume_point(manifest_path, header)
            fh = open(manifest_path, "a", encoding="utf-8")
        else:
            fh = open(manifest_path, "w", encoding="utf-8")
            fh.write(_dumps(header) + "\n")
            fh.flush()
    except OSError as exc:
        raise DatasetIOError(f"cannot prepare {out_dir}: {exc}", checkpoint=0) from exc

    start = time.perf_counter()
    todo = range(done, n)
    window = max(2, 4 * threads)
    with fh, ThreadPoolExecutor(max_workers=threads) as pool:
        pending = collections.deque()
        it = iter(todo)
        for i in it:
            pending.append(pool.submit(make_sample, i, seeds[i], int(cells[i]), config, library))
            if len(pending) >= window:
                break
        while pending:
            rec, png = pending.popleft().result()
            nxt = next(it, None)
            if nxt is not None:
                pending.append(pool.submit(make_sample, nxt, seeds[nxt], int(cells[nxt]),
                                           config, library))
            try:
                _atomic_write(os.path.join(out_dir, rec.image), png)
                fh.write(_dumps(rec.to_dict()) + "\n")
                fh.flush()
            except OSError as exc:
                for f in pending:
                    f.cancel()
                raise DatasetIOError(f"write failed at record {rec.id}: {exc}",
                                     checkpoint=rec.id) from exc
            done = rec.id + 1
            if progress is not None:
                progress(done, n, time.perf_counter() - start)
    return read_manifest(manifest_path)


# ---------------------------------------------------------------- balance audit

@dataclass
class BalanceReport:
    n: int
    expected_n: int
    cells: dict  # "Gender/tone" -> count
    handedness: dict
    poses: dict  # pose name -> appearances as either blend end
    flags: list  # cells outside {floor, ceil} of expected_n / 12
    max_deviation: float
    chi_square: float

    def to_dict(self):
        return dict(self.__dict__)


def cell_key(gender, tone):
    return f"{gender}/{tone}"


def audit_balance(manifest: DatasetManifest) -> BalanceReport:
    cells = {cell_key(g, t): 0 for g in GENDERS for t in range(N_TONES)}
    hands = collections.Counter()
    poses = collections.Counter()
    for rec in manifest.records:
        key = cell_key(rec.spec.gender, rec.spec.tone_index)
        if key not in cells:
            raise SchemaError(f"record {rec.id}: unknown cell {key!r}")
        cells[key] += 1
        hands[rec.annotation.meta.get("handedness", rec.spec.handedness)] += 1
        poses[rec.spec.pose_a] += 1
        poses[rec.spec.pose_b] += 1
    expected = int(manifest.header.get("n", len(manifest.records)))
    lo, hi = expected // N_CELLS, -(-expected // N_CELLS)
    flags = [k for k, v in cells.items() if v < lo or v > hi]
    mean = expected / N_CELLS
    counts = np.array(list(cells.values()), dtype=float)
    chi2 = float(((counts - mean) ** 2 / mean).sum()) if mean > 0 else 0.0
    return BalanceReport(len(manifest.records), expected, cells, dict(hands), dict(poses), flags,
                         float(np.abs(counts - mean).max()), chi2)


# ---------------------------------------------------------------- half-hand perturbation

def hand_box_pixels(annotation: Annotation, resolution):
    """Inclusive integer pixel box (x0, y0, x1, y1) covering the in-frame keypoints."""
    w, h = resolution
    k = np.asarray(annotation.keypoints_2d, dtype=float)
    inside = (k[:, 0] >= 0) & (k[:, 0] <= w - 1) & (k[:, 1] >= 0) & (k[:, 1] <= h - 1)
    if not inside.any():
        raise InvalidArgument("hand bounding box is empty: no keypoint inside the frame")
    x0, y0 = np.floor(k[inside].min(axis=0)).astype(int)
    x1, y1 = np.ceil(k[inside].max(axis=0)).astype(int)
    return int(x0), int(y0), int(x1), int(y1)


def half_mask_region(annotation: Annotation, rng_seed, resolution=(640, 640)):
    """Half of the hand box, split through its centre on a seeded axis and side.

    Returns ``(x0, y0, x1, y1, axis, side)`` with an exclusive end; ``axis`` 0 splits columns
    (left/right halves), 1 splits rows.
    """
    bx0, by0, bx1, by1 = hand_box_pixels(annotation, resolution)
    rng = np.random.default_rng([int(rng_seed), _PERTURB_STREAM])
    axis, side = (int(v) for v in rng.integers(2, size=2))
    x0, y0, x1, y1 = bx0, by0, bx1 + 1, by1 + 1
    if axis == 0:
        half = (x1 - x0) // 2 if side == 0 else (x1 - x0 + 1) // 2
        x0, x1 = (x0, x0 + half) if side == 0 else (x1 - half, x1)
    else:
        half = (y1 - y0) // 2 if side == 0 else (y1 - y0 + 1) // 2
        y0, y1 = (y0, y0 + half) if side == 0 else (y1 - half, y1)
    return x0, y0, x1, y1, axis, side


def perturb_half(image, annotation: Annotation, rng_seed, fill=128):
    """Copy of ``image`` with half of the hand box painted ``fill``. The annotation is not used
    beyond locating the box and is never changed."""
    h, w = image.shape[:2]
    x0, y0, x1, y1, _, _ = half_mask_region(annotation, rng_seed, (w, h))
    out = image.copy()
    out[y0:y1, x0:x1] = fill
    return out


def perturb_dataset(dataset_dir, out_dir, rng_seed, fill=128, progress=None):
    """Write a perturbed copy of a dataset. The manifest is copied byte for byte."""
    src = read_manifest(dataset_dir)
    try:
        os.makedirs(os.path.join(out_dir, IMAGE_DIR), exist_ok=True)
        shutil.copyfile(os.path.join(src.root, MANIFEST_NAME), os.path.join(out_dir, MANIFEST_NAME))
        with open(os.path.join(out_dir, "perturbation.jsonl"), "w", encoding="utf-8") as log:
            log.write(_dumps({"kind": "header", "schema_version": MANIFEST_VERSION,
                              "seed": int(rng_seed), "fill": fill}) + "\n")
            for i, rec in enumerate(src.records):
                seed = derive_seed(rng_seed, rec.id)
                image = read_image(src.image_path(rec))
                region = half_mask_region(rec.annotation, seed, image.shape[1::-1])
                out = perturb_half(image, rec.annotation, seed, fill)
                _atomic_write(os.path.join(out_dir, rec.image), encode_png(out))
                log.write(_dumps({"id": rec.id, "seed": seed, "region": list(region[:4]),
                                  "axis": region[4], "side": region[5]}) + "\n")
                if progress is not None:
                    progress(i + 1, len(src.records), None)
    except OSError as exc:
        raise DatasetIOError(f"perturbation write failed: {exc}") from exc
    return read_manifest(out_dir)


# ---------------------------------------------------------------- in-place augmentation

def augment_dataset_in_place(dataset_dir, rng_seed, threads=1, progress=None):
    """Apply a freshly sampled plan to every image, replacing it, and log each plan."""
    manifest = read_manifest(dataset_dir)
    path = os.path.join(manifest.root, MANIFEST_NAME)

    def work(rec):
        plan = sample_plan(derive_seed(rng_seed, rec.id))
        image, ann = apply(read_image(manifest.image_path(rec)), rec.annotation, plan)
        return rec, plan, ann, encode_png(image, manifest.header.get("config", {})
                                           .get("png_compression", 1))

    with open(path, "a", encoding="utf-8") as fh, \
            ThreadPoolExecutor(max_workers=max(1, threads or 1)) as pool:
        for i, (rec, plan, ann, png) in enumerate(pool.map(work, manifest.records)):
            target = manifest.image_path(rec)
            backup = target + ".bak"
            mark = fh.tell()
            try:
                os.replace(target, backup)
                _atomic_write(target, png)
                fh.write(_dumps({"kind": "augmentation", "id": rec.id, "pass_seed": int(rng_seed),
                                 "plan": plan.to_dict(), "annotation": ann.to_dict()}) + "\n")
                fh.flush()
            except OSError as exc:
                if os.path.exists(backup):
                    os.replace(backup, target)
                try:
                    fh.truncate(mark)
                except OSError:
                    pass
                raise DatasetIOError(f"augmentation of record {rec.id} failed: {exc}",
                                     checkpoint=i) from exc
            os.remove(backup)
            rec.augmentation.append(plan.to_dict())
            rec.annotation = ann
            if progress is not None:
                progress(i + 1, len(manifest.records), None)
    return manifest
