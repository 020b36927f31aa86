"""Keypoint metrics (PCK, AUC, EPE), prediction files and stratified reports.

A keypoint is correct at threshold t when its error is at most t * max(bbox_w, bbox_h) of the
ground-truth box. AUC is the mean PCK over a fixed threshold grid, recorded in every report.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidArgument, SchemaError

N_KEYPOINTS = 21
AUC_THRESHOLDS = tuple(float(t) for t in np.linspace(0.01, 0.2, 20))
PCK_THRESHOLD = 0.2
GROUPINGS = ("all", "tone", "gender")


def _arrays(preds, gts, bboxes=None):
    p = np.asarray(preds, dtype=float)
    g = np.asarray(gts, dtype=float)
    if p.ndim == 2:
        p, g = p[None], g[None]
    if p.shape != g.shape or p.shape[-1] != 2:
        raise InvalidArgument(f"predictions {p.shape} and ground truth {g.shape} do not align")
    if bboxes is None:
        return p, g, None
    b = np.asarray(bboxes, dtype=float).reshape(-1, 4)
    if len(b) != len(p):
        raise InvalidArgument(f"{len(b)} boxes for {len(p)} images")
    return p, g, b


def _mask(visible, shape):
    if visible is None:
        return np.ones(shape, dtype=bool)
    v = np.asarray(visible, dtype=bool).reshape(shape)
    return v


def box_scale(bboxes):
    """max(w, h) per box; degenerate boxes are rejected."""
    b = np.asarray(bboxes, dtype=float).reshape(-1, 4)
    s = np.maximum(b[:, 2], b[:, 3])
    if np.any(s <= 0):
        raise InvalidArgument("degenerate bounding box (w = h = 0)")
    return s


def errors(preds, gts):
    p, g, _ = _arrays(preds, gts)
    return np.linalg.norm(p - g, axis=-1)


def pck(preds, gts, bboxes, threshold=PCK_THRESHOLD, visible=None):
    p, g, b = _arrays(preds, gts, bboxes)
    d = np.linalg.norm(p - g, axis=-1)
    ok = d <= threshold * box_scale(b)[:, None]
    m = _mask(visible, d.shape)
    if not m.any():
        raise InvalidArgument("no keypoints to evaluate")
    return float(ok[m].mean())


def epe(preds, gts, visible=None):
    p, g, _ = _arrays(preds, gts)
    d = np.linalg.norm(p - g, axis=-1)
    m = _mask(visible, d.shape)
    if not m.any():
        raise InvalidArgument("no keypoints to evaluate")
    return float(d[m].mean())


def pck_curve(preds, gts, bboxes, thresholds=AUC_THRESHOLDS, visible=None):
    p, g, b = _arrays(preds, gts, bboxes)
    d = np.linalg.norm(p - g, axis=-1)
    s = np.broadcast_to(box_scale(b)[:, None], d.shape)
    m = _mask(visible, d.shape)
    if not m.any():
        raise InvalidArgument("no keypoints to evaluate")
    d, s = d[m], s[m]
    # same comparison as pck(), so the curve and single-threshold values agree at ties
    return np.array([(d <= t * s).mean() for t in thresholds])


def auc(preds, gts, bboxes, thresholds=AUC_THRESHOLDS, visible=None):
    return float(pck_curve(preds, gts, bboxes, thresholds, visible).mean())


# ---------------------------------------------------------------- prediction files

@dataclass
class PredictionSet:
    points: dict  # record id -> (21, 2) array
    source: str = "unknown"

    def __len__(self):
        return len(self.points)


def write_predictions(path, points, source="unknown"):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps({"kind": "header", "source": source}) + "\n")
        for rid in sorted(points):
            fh.write(json.dumps({"id": int(rid),
                                 "keypoints": np.asarray(points[rid], float).tolist()}) + "\n")


def read_predictions(path) -> PredictionSet:
    """One JSON object per line: {"id": int, "keypoints": [[x, y] x 21]}; an optional first
    line {"kind": "header", "source": name} labels the model."""
    points, source = {}, "unknown"
    with open(path, encoding="utf-8") as fh:
        for no, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                if no == 1 and isinstance(obj, dict) and obj.get("kind") == "header":
                    source = str(obj.get("source", source))
                    continue
                rid = int(obj["id"])
                kp = np.asarray(obj["keypoints"], dtype=float)
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise SchemaError(f"{path}: line {no}: malformed prediction ({exc})") from None
            if kp.shape != (N_KEYPOINTS, 2) or not np.all(np.isfinite(kp)):
                raise SchemaError(f"{path}: line {no}: expected {N_KEYPOINTS} finite (x, y) pairs")
            if rid in points:
                raise SchemaError(f"{path}: line {no}: duplicate id {rid}")
            points[rid] = kp
    return PredictionSet(points, source)


def check_coverage(predictions: PredictionSet, records):
    ids = {r.id for r in records}
    missing = sorted(ids - set(predictions.points))
    unknown = sorted(set(predictions.points) - ids)
    if missing:
        shown = ", ".join(map(str, missing[:50])) + (" ..." if len(missing) > 50 else "")
        raise SchemaError(f"predictions missing for {len(missing)} record ids: {shown}")
    if unknown:
        raise SchemaError(f"predictions for unknown record ids: {unknown[:50]}")


# ---------------------------------------------------------------- reports

@dataclass
class EvalReport:
    group: str
    n_images: int
    pck_at: dict  # threshold -> PCK
    auc: float
    epe: float
    epe_sum: float  # sum of per-keypoint errors, for pooling across groups
    n_keypoints: int
    thresholds: list = field(default_factory=lambda: list(AUC_THRESHOLDS))
    source: str = "unknown"

    def to_dict(self):
        d = dict(self.__dict__)
        d["pck_at"] = {f"{k:g}": v for k, v in self.pck_at.items()}
        return d


def evaluate(pred, gt, bboxes, group="all", thresholds=AUC_THRESHOLDS, visible=None,
             source="unknown") -> EvalReport:
    p, g, b = _arrays(pred, gt, bboxes)
    m = _mask(visible, p.shape[:2])
    d = np.linalg.norm(p - g, axis=-1)[m]
    curve = pck_curve(p, g, b, thresholds, m)
    pck_at = {float(t): float(v) for t, v in zip(thresholds, curve)}
    pck_at[PCK_THRESHOLD] = pck(p, g, b, PCK_THRESHOLD, m)
    return EvalReport(group, len(p), dict(sorted(pck_at.items())), float(curve.mean()),
                      float(d.mean()), float(d.sum()), int(d.size), [float(t) for t in thresholds],
                      source)


def _group_key(record, group_by):
    meta = record.annotation.meta
    key = {"tone": "tone_index", "gender": "gender"}[group_by]
    if key not in meta:
        raise SchemaError(f"record {record.id}: annotation metadata lacks {key!r}")
    return meta[key]


def stratified_report(predictions: PredictionSet, records, group_by="all",
                      thresholds=AUC_THRESHOLDS, visible_only=False):
    """One EvalReport per group; groups partition the records."""
    if group_by not in GROUPINGS:
        raise InvalidArgument(f"group_by must be one of {GROUPINGS}")
    records = list(records)
    check_coverage(predictions, records)
    if group_by == "all":
        groups = {"all": records}
    else:
        groups = {}
        for r in records:
            groups.setdefault(_group_key(r, group_by), []).append(r)
    out = []
    for key in sorted(groups, key=str):
        rs = groups[key]
        pred = np.stack([predictions.points[r.id] for r in rs])
        gt = np.stack([r.annotation.keypoints_2d for r in rs])
        box = np.array([r.annotation.bbox for r in rs])
        vis = np.stack([r.annotation.visible for r in rs]) if visible_only else None
        label = "all" if group_by == "all" else f"{group_by}={key}"
        out.append(evaluate(pred, gt, box, label, thresholds, vis, predictions.source))
    return out


def pooled_epe(reports):
    return sum(r.epe_sum for r in reports) / sum(r.n_keypoints for r in reports)


def format_table(reports):
    rows = [f"{'group':<12} {'n':>7} {'PCK@0.2':>8} {'AUC':>7} {'EPE(px)':>9}"]
    for r in reports:
        rows.append(f"{r.group:<12} {r.n_images:>7d} {r.pck_at[PCK_THRESHOLD]:>8.4f} "
                    f"{r.auc:>7.4f} {r.epe:>9.2f}")
    return "\n".join(rows)
