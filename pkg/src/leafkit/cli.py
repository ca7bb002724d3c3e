"""Command-line front end: extract -> score -> eval -> verify.

Exit codes: 0 success, 1 verification/property failure, 2 input error.
All outputs are computed in memory before any file is written, so a
validation failure never leaves partial reports behind.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from PIL import Image

from . import verify as verify_mod
from .colorstats import color_indicators
from .errors import LeafkitError, ValidationError
from .evalsuite import coco_map, match_instances_by_iou, regression_metrics
from .ingest import (Dataset, load_coco, load_labelme, read_report,
                     write_report)
from .maskgeom import shape_indicators
from .phenotype import (INDICATOR_NAMES, IndicatorWeights, LeafRecord,
                        OptimalValueTable, entropy_weights, filter_instances,
                        lgci_score, minmax_normalize, positive_matrix,
                        record_from_report_row)


@dataclass
class RunConfig:
    images: Optional[str] = None
    annotations: Optional[str] = None
    pred: Optional[str] = None
    records: Optional[str] = None
    format: str = "coco"
    iou_threshold: float = 0.5
    min_area: float = 1000.0
    weights: str = "fixture"
    optimal: Optional[str] = None
    out: str = "."
    workers: int = 1
    score_maps: bool = False

    def __post_init__(self):
        if not (0.0 < self.iou_threshold <= 1.0):
            raise ValidationError(f"iou_threshold {self.iou_threshold} "
                                  "outside (0, 1]")
        if self.min_area < 0:
            raise ValidationError("min_area must be nonnegative")
        if self.workers < 1:
            raise ValidationError("workers must be >= 1")
        if self.format not in ("coco", "labelme"):
            raise ValidationError(f"unknown format '{self.format}'")
        if self.weights not in ("fixture", "refit"):
            raise ValidationError(f"unknown weight source '{self.weights}'")


def _load_dataset(path, format: str) -> Dataset:
    if path is None:
        raise ValidationError("no annotation path given")
    if not os.path.exists(path):
        raise FileNotFoundError(f"annotation file not found: {path}")
    return load_coco(path) if format == "coco" else load_labelme(path)


def _load_image(image_dir, ref) -> np.ndarray:
    path = os.path.join(image_dir, ref.path) if image_dir else ref.path
    if not path or not os.path.exists(path):
        raise FileNotFoundError(f"image file not found: {path or ref.path}")
    arr = np.asarray(Image.open(path).convert("RGB"))
    if arr.shape[:2] != (ref.height, ref.width):
        raise ValidationError(f"{path}: image is {arr.shape[1]}x"
                              f"{arr.shape[0]}, annotations say "
                              f"{ref.width}x{ref.height}")
    return arr


def _extract_one(args) -> list[LeafRecord]:
    image_dir, ref, instances = args
    rgb = _load_image(image_dir, ref)
    records = []
    for inst in sorted(instances, key=lambda i: i.id):
        records.append(LeafRecord(inst.id, shape_indicators(inst),
                                  color_indicators(rgb, inst)))
    return records


def cmd_extract(cfg: RunConfig) -> int:
    dataset = _load_dataset(cfg.annotations, cfg.format)
    kept = filter_instances(dataset.instances, cfg.min_area, 0.0)
    jobs = [(cfg.images, ref, [i for i in kept if i.image_id == ref.id])
            for ref in sorted(dataset.images, key=lambda r: r.id)]
    jobs = [j for j in jobs if j[2]]
    if cfg.workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            chunks = list(pool.map(_extract_one, jobs))
    else:
        chunks = [_extract_one(j) for j in jobs]
    records = [rec for chunk in chunks for rec in chunk]
    os.makedirs(cfg.out, exist_ok=True)
    write_report(records, os.path.join(cfg.out, "records.csv"), "csv")
    print(f"extract: {len(records)} records from {len(jobs)} images")
    return 0


def _render_score_map(rgb_shape, instances, scores) -> Image.Image:
    canvas = np.full(rgb_shape[:2], 255, dtype=np.uint8)
    for inst in instances:
        s = scores.get(inst.id)
        if s is None:
            continue
        canvas[inst.grid] = np.uint8(230 - 180 * s)  # darker = better
    return Image.fromarray(canvas, mode="L")


def cmd_score(cfg: RunConfig) -> int:
    if cfg.records is None:
        raise ValidationError("score needs --records (CSV from extract)")
    rows = read_report(cfg.records)
    if len(rows) < 2:
        raise ValidationError(f"degenerate batch: {len(rows)} record(s), "
                              "need at least 2 to score")
    records = [record_from_report_row(r) for r in rows]
    table = (OptimalValueTable.load(cfg.optimal) if cfg.optimal
             else OptimalValueTable.reference())
    if cfg.weights == "refit":
        matrix = minmax_normalize(positive_matrix(records, table))
        weights = entropy_weights(matrix)
    else:
        weights = IndicatorWeights.reference()
    scores = lgci_score(records, weights, table)

    score_map_images = []
    if cfg.score_maps:
        dataset = _load_dataset(cfg.annotations, cfg.format)
        by_id = {s.instance_id: s.score for s in scores}
        for ref in sorted(dataset.images, key=lambda r: r.id):
            instances = dataset.instances_of(ref.id)
            if not instances:
                continue
            img = _render_score_map((ref.height, ref.width), instances,
                                    by_id)
            score_map_images.append((f"lgci_{ref.id:04d}.png", img))

    os.makedirs(cfg.out, exist_ok=True)
    with open(os.path.join(cfg.out, "lgci.csv"), "w", encoding="utf-8",
              newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["ID", "score"])
        for s in scores:
            writer.writerow([s.instance_id, f"{s.score:.6f}"])
    weights.save(os.path.join(cfg.out, "weights.json"))
    for name, img in score_map_images:
        img.save(os.path.join(cfg.out, name))
    print(f"score: {len(scores)} instances scored "
          f"({cfg.weights} weights)")
    return 0


def cmd_eval(cfg: RunConfig) -> int:
    gt = _load_dataset(cfg.annotations, cfg.format)
    if cfg.pred is None:
        raise ValidationError("eval needs --pred")
    pred = _load_dataset(cfg.pred, cfg.format)
    if not gt.instances:
        raise ValidationError("ground truth contains no instances")
    preds = filter_instances(pred.instances, cfg.min_area, 0.0)
    metrics = coco_map(preds, gt.instances, pr_threshold=cfg.iou_threshold)

    # indicator regression over IoU-matched pairs
    pred_vals: dict[str, list[float]] = {}
    gt_vals: dict[str, list[float]] = {}
    with_color = cfg.images is not None
    for ref in sorted(gt.images, key=lambda r: r.id):
        image_gts = gt.instances_of(ref.id)
        image_preds = [p for p in preds if p.image_id == ref.id]
        match = match_instances_by_iou(image_preds, image_gts,
                                       cfg.iou_threshold)
        if not match.pairs:
            continue
        rgb = _load_image(cfg.images, ref) if with_color else None
        pred_by_id = {p.id: p for p in image_preds}
        gt_by_id = {g.id: g for g in image_gts}
        for pid, gid, _ in match.pairs:
            for inst, store in ((pred_by_id[pid], pred_vals),
                                (gt_by_id[gid], gt_vals)):
                row = list(shape_indicators(inst).as_tuple())
                names = INDICATOR_NAMES[:6]
                if with_color:
                    row += list(color_indicators(rgb, inst).as_tuple())
                    names = INDICATOR_NAMES
                for name, v in zip(names, row):
                    store.setdefault(name, []).append(v)

    regression_rows = []
    for name in INDICATOR_NAMES:
        if name not in pred_vals:
            continue
        m = regression_metrics(pred_vals[name], gt_vals[name])
        regression_rows.append([name, f"{m.r2:.6f}", f"{m.rmse:.6f}",
                                f"{m.mae:.6f}"])

    os.makedirs(cfg.out, exist_ok=True)
    with open(os.path.join(cfg.out, "metrics.json"), "w",
              encoding="utf-8") as fh:
        json.dump({k: round(v, 10) for k, v in metrics.as_dict().items()},
                  fh, indent=2, sort_keys=True)
        fh.write("\n")
    with open(os.path.join(cfg.out, "regression.csv"), "w",
              encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["indicator", "R2", "RMSE", "MAE"])
        writer.writerows(regression_rows)
    print(f"eval: seg/mAP={metrics.seg_map:.4f} box/mAP="
          f"{metrics.box_map:.4f}")
    return 0


def cmd_verify(metric_trials: int = 200, gradient_points: int = 100,
               kernel_trials: int = 100, dice_grad_fn=None) -> int:
    results = verify_mod.run_checks(metric_trials=metric_trials,
                                    gradient_points=gradient_points,
                                    kernel_trials=kernel_trials,
                                    dice_grad_fn=dice_grad_fn)
    failures = []
    for r in results:
        status = "PASS" if r.passed else "FAIL"
        print(f"{status}  {r.name:32s} {r.detail}")
        if not r.passed:
            failures.append(r.name)
    if failures:
        print(f"verify: FAILED ({', '.join(failures)})", file=sys.stderr)
        return 1
    print(f"verify: all {len(results)} checks passed")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="leafkit",
        description="Leaf phenotype extraction, LGCI scoring, and "
                    "instance-segmentation evaluation")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--config", help="JSON config file; flags override")
        p.add_argument("--out", help="output directory")

    p = sub.add_parser("extract", help="compute indicator records")
    add_common(p)
    p.add_argument("--images", help="image directory")
    p.add_argument("--annotations", help="annotation file")
    p.add_argument("--format", choices=["coco", "labelme"])
    p.add_argument("--min-area", type=float, dest="min_area")
    p.add_argument("--workers", type=int)

    p = sub.add_parser("score", help="fit/apply weights and score LGCI")
    add_common(p)
    p.add_argument("--records", help="records CSV from extract")
    p.add_argument("--weights", choices=["fixture", "refit"])
    p.add_argument("--optimal", help="optimal-value table JSON")
    p.add_argument("--score-maps", action="store_true", dest="score_maps",
                   default=None)
    p.add_argument("--images", help="image directory (for score maps)")
    p.add_argument("--annotations", help="annotation file (for score maps)")
    p.add_argument("--format", choices=["coco", "labelme"])

    p = sub.add_parser("eval", help="detection/segmentation/regression "
                                    "metrics")
    add_common(p)
    p.add_argument("--annotations", help="ground-truth annotation file")
    p.add_argument("--pred", help="prediction annotation file")
    p.add_argument("--format", choices=["coco", "labelme"])
    p.add_argument("--images", help="image directory (adds color "
                                    "regression)")
    p.add_argument("--iou-threshold", type=float, dest="iou_threshold")
    p.add_argument("--min-area", type=float, dest="min_area")

    p = sub.add_parser("verify", help="run the oracle/property suite")
    p.add_argument("--metric-trials", type=int, default=200)
    p.add_argument("--gradient-points", type=int, default=100)
    p.add_argument("--kernel-trials", type=int, default=100)
    return parser


_CONFIG_KEYS = ("images", "annotations", "pred", "records", "format",
                "iou_threshold", "min_area", "weights", "optimal", "out",
                "workers", "score_maps")


def _merge_config(args: argparse.Namespace) -> RunConfig:
    file_values = {}
    if getattr(args, "config", None):
        with open(args.config, "r", encoding="utf-8") as fh:
            file_values = json.load(fh)
        unknown = set(file_values) - set(_CONFIG_KEYS)
        if unknown:
            raise ValidationError(f"unknown config keys: {sorted(unknown)}")
    kwargs = {}
    for key in _CONFIG_KEYS:
        flag = getattr(args, key, None)
        if flag is not None:
            kwargs[key] = flag
        elif key in file_values:
            kwargs[key] = file_values[key]
    return RunConfig(**kwargs)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "verify":
            return cmd_verify(metric_trials=args.metric_trials,
                              gradient_points=args.gradient_points,
                              kernel_trials=args.kernel_trials)
        cfg = _merge_config(args)
        if args.command == "extract":
            return cmd_extract(cfg)
        if args.command == "score":
            return cmd_score(cfg)
        if args.command == "eval":
            return cmd_eval(cfg)
        raise ValidationError(f"unknown command {args.command}")
    except (LeafkitError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def entrypoint() -> None:
    raise SystemExit(main())


if __name__ == "__main__":
    entrypoint()
