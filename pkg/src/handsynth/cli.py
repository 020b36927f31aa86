"""Command line front end: generate, augment, perturb, audit, evaluate, preview.

Exit status: 0 success, 1 usage, 2 schema or validation error, 3 I/O error, 4 internal error.
The default generation config can be set with the HANDSYNTH_CONFIG environment variable.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
import traceback

import numpy as np

from .errors import (BehindCamera, DatasetIOError, InvalidArgument, LoadError, NotFound,
                     OutOfGamut, SamplingFailure, SchemaError)

EXIT_OK, EXIT_USAGE, EXIT_SCHEMA, EXIT_IO, EXIT_INTERNAL = 0, 1, 2, 3, 4
CONFIG_ENV = "HANDSYNTH_CONFIG"
RUN_CONFIG_NAME = "run_config.json"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _progress(label):
    last = [0.0]

    def report(done, total, elapsed):
        now = time.perf_counter()
        if done == total or now - last[0] > 2.0:
            last[0] = now
            rate = f", {done / elapsed:.2f} images/s" if elapsed else ""
            print(f"\r{label}: {done}/{total}{rate}", end="\n" if done == total else "",
                  file=sys.stderr, flush=True)
    return report


def _config(args):
    from .scene import load_config
    path = args.config or os.environ.get(CONFIG_ENV) or None
    return load_config(path).with_overrides(args.set), path


def _write_run_config(out, payload):
    os.makedirs(out, exist_ok=True)
    with open(os.path.join(out, RUN_CONFIG_NAME), "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


# ---------------------------------------------------------------- subcommands

def cmd_generate(args):
    from .dataset import PRESETS, generate
    from .scene import GenerationConfig
    if args.replay:
        with open(args.replay, encoding="utf-8") as fh:
            run = json.load(fh)
        if run.get("subcommand") != "generate":
            raise SchemaError(f"{args.replay} is not a generate run config")
        config = GenerationConfig.from_dict(run["config"])
        seed, n, preset, split = run["seed"], run["n"], run["preset"], run["split"]
        config_path = run.get("config_path")
        overrides = run.get("overrides", [])
    else:
        config, config_path = _config(args)
        if args.n is not None and args.preset is not None:
            raise UsageError("give either -n or --preset, not both")
        preset = args.preset or (None if args.n is not None else "desk")
        n = args.n if args.n is not None else PRESETS[preset]
        seed, split, overrides = args.seed, args.split, args.set
    if args.out is None:
        raise UsageError("generate needs --out")
    threads = args.threads or os.cpu_count() or 1
    _write_run_config(args.out, {
        "subcommand": "generate", "config_path": config_path, "seed": seed, "n": n,
        "preset": preset, "split": split, "out": args.out, "threads": threads,
        "overrides": list(overrides or []), "config": config.to_dict()})
    start = time.perf_counter()
    manifest = generate(config, seed, n, args.out, threads=threads, preset=preset, split=split,
                        resume=args.resume, progress=_progress("generate"))
    elapsed = time.perf_counter() - start
    print(f"wrote {len(manifest.records)} records to {args.out} in {elapsed:.1f} s "
          f"({len(manifest.records) / max(elapsed, 1e-9):.2f} images/s)")


def cmd_augment(args):
    from .dataset import augment_dataset_in_place
    manifest = augment_dataset_in_place(args.dataset, args.seed, args.threads or 1,
                                        progress=_progress("augment"))
    print(f"augmented {len(manifest.records)} images in {args.dataset}")


def cmd_perturb(args):
    from .dataset import perturb_dataset
    if args.out is None:
        raise UsageError("perturb needs --out")
    if os.path.abspath(args.out) == os.path.abspath(args.dataset):
        raise UsageError("--out must differ from the input dataset")
    fill = args.fill
    if fill is None:
        config, _ = _config(args)
        fill = config.perturb_fill
    _write_run_config(args.out, {"subcommand": "perturb", "dataset": args.dataset,
                                 "seed": args.seed, "fill": fill, "out": args.out})
    manifest = perturb_dataset(args.dataset, args.out, args.seed, fill,
                               progress=_progress("perturb"))
    print(f"wrote {len(manifest.records)} perturbed images to {args.out}")


def cmd_audit(args):
    from .dataset import audit_balance, read_manifest
    report = audit_balance(read_manifest(args.dataset))
    print(f"records {report.n} (expected {report.expected_n})")
    print(f"{'cell':<10} {'count':>7}")
    for k, v in report.cells.items():
        print(f"{k:<10} {v:>7d}{'  FLAG' if k in report.flags else ''}")
    print("handedness " + ", ".join(f"{k}={v}" for k, v in sorted(report.handedness.items())))
    print(f"max deviation {report.max_deviation:.2f}, chi-square {report.chi_square:.3f}, "
          f"flags {len(report.flags)}")
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        with open(os.path.join(args.out, "balance.json"), "w", encoding="utf-8") as fh:
            json.dump(report.to_dict(), fh, indent=2)
    if args.strict and report.flags:
        return EXIT_SCHEMA
    return EXIT_OK


def _parse_grid(text):
    try:
        lo, hi, k = text.split(":")
        grid = np.linspace(float(lo), float(hi), int(k))
    except ValueError:
        raise UsageError(f"--grid expects lo:hi:count, got {text!r}") from None
    if len(grid) < 1 or grid[0] <= 0:
        raise UsageError("--grid thresholds must be positive")
    return tuple(float(t) for t in grid)


def cmd_evaluate(args):
    from .dataset import read_manifest
    from .metrics import (AUC_THRESHOLDS, format_table, read_predictions, stratified_report)
    if args.predictions is None:
        raise UsageError("evaluate needs --predictions")
    grid = _parse_grid(args.grid) if args.grid else AUC_THRESHOLDS
    manifest = read_manifest(args.dataset)
    preds = read_predictions(args.predictions)
    reports = stratified_report(preds, manifest.records, "all", grid, args.visible_only)
    if args.group_by != "all":
        reports += stratified_report(preds, manifest.records, args.group_by, grid,
                                     args.visible_only)
    table = format_table(reports)
    print(table)
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        with open(os.path.join(args.out, "report.txt"), "w", encoding="utf-8") as fh:
            fh.write(table + "\n")
        with open(os.path.join(args.out, "report.json"), "w", encoding="utf-8") as fh:
            json.dump([r.to_dict() for r in reports], fh, indent=2)


def draw_overlay(image, annotation, radius=4):
    """Skeleton overlay: bones as lines, visible keypoints as filled discs, occluded keypoints
    as rings, each centred on the rounded annotation coordinate."""
    import cv2
    from .render import BONES
    out = np.ascontiguousarray(image[..., ::-1]).copy()
    pts = [(int(round(x)), int(round(y))) for x, y in annotation.keypoints_2d]
    for a, b in BONES:
        cv2.line(out, pts[a], pts[b], (255, 255, 255), 1, cv2.LINE_AA)
    for (x, y), vis in zip(pts, annotation.visible):
        if vis:
            cv2.circle(out, (x, y), radius, (0, 255, 0), -1)
        else:
            cv2.circle(out, (x, y), radius, (0, 0, 255), 1)
    return np.ascontiguousarray(out[..., ::-1])


def cmd_preview(args):
    from .dataset import encode_png, read_image, read_manifest
    manifest = read_manifest(args.dataset)
    if args.k < 0 or args.k > len(manifest.records):
        raise UsageError(f"-k must be between 0 and {len(manifest.records)}")
    out = args.out or os.path.join(args.dataset, "preview")
    if args.k:
        os.makedirs(out, exist_ok=True)
    for rec in manifest.records[:args.k]:
        img = draw_overlay(read_image(manifest.image_path(rec)), rec.annotation)
        with open(os.path.join(out, f"{rec.id:06d}.png"), "wb") as fh:
            fh.write(encode_png(img))
    print(f"wrote {args.k} preview images to {out}")


# ---------------------------------------------------------------- parser

def build_parser():
    from .dataset import PRESETS
    p = _Parser(prog="handsynth", description="Synthetic hand keypoint dataset tools.")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    def common(sp, seed=0):
        sp.add_argument("--config", help=f"generation config JSON (default: ${CONFIG_ENV} or "
                                         "the packaged default)")
        sp.add_argument("--seed", type=int, default=seed)
        sp.add_argument("--threads", type=int, default=None)
        sp.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override a config field; repeatable")

    g = sub.add_parser("generate", help="render a balanced dataset")
    common(g)
    g.add_argument("--preset", choices=sorted(PRESETS))
    g.add_argument("-n", type=int)
    g.add_argument("--out")
    g.add_argument("--split", choices=("train", "test"), default="train")
    g.add_argument("--resume", action="store_true", help="continue an interrupted run")
    g.add_argument("--replay", metavar="RUN_CONFIG", help="re-run a persisted run_config.json")
    g.set_defaults(func=cmd_generate)

    a = sub.add_parser("augment", help="in-place augmentation pass over a dataset")
    common(a)
    a.add_argument("dataset")
    a.set_defaults(func=cmd_augment)

    t = sub.add_parser("perturb", help="half-hand occlusion copy of a dataset")
    common(t)
    t.add_argument("dataset")
    t.add_argument("--out")
    t.add_argument("--fill", type=int, default=None)
    t.set_defaults(func=cmd_perturb)

    u = sub.add_parser("audit", help="balance report for a dataset")
    u.add_argument("dataset")
    u.add_argument("--out")
    u.add_argument("--strict", action="store_true", help="exit 2 when any cell is flagged")
    u.set_defaults(func=cmd_audit)

    e = sub.add_parser("evaluate", help="PCK / AUC / EPE of a prediction file")
    e.add_argument("dataset")
    e.add_argument("--predictions")
    e.add_argument("--group-by", choices=("all", "tone", "gender"), default="all")
    e.add_argument("--grid", help="AUC thresholds as lo:hi:count (default 0.01:0.2:20)")
    e.add_argument("--visible-only", action="store_true")
    e.add_argument("--out")
    e.set_defaults(func=cmd_evaluate)

    v = sub.add_parser("preview", help="skeleton overlays for the first k records")
    v.add_argument("dataset")
    v.add_argument("-k", type=int, default=8)
    v.add_argument("--out")
    v.set_defaults(func=cmd_preview)
    return p


def main(argv=None):
    try:
        args = build_parser().parse_args(argv)
        if args.command is None:
            raise UsageError("a subcommand is required (generate, augment, perturb, audit, "
                             "evaluate, preview)")
        code = args.func(args)
        return EXIT_OK if code is None else code
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (SchemaError, InvalidArgument, NotFound, OutOfGamut, BehindCamera,
            SamplingFailure) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SCHEMA
    except (DatasetIOError, LoadError, OSError) as exc:
        extra = f" (checkpoint {exc.checkpoint})" if isinstance(exc, DatasetIOError) else ""
        print(f"I/O error: {exc}{extra}", file=sys.stderr)
        return EXIT_IO
    except Exception:
        traceback.print_exc()
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
