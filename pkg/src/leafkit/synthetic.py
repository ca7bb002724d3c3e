"""Deterministic synthetic leaf corpus: elliptical "leaves" painted onto
RGB images, with COCO-style ground-truth and perturbed predictions.

Used by the demo scripts and the end-to-end determinism checks.
"""

from __future__ import annotations

import json
import os

import numpy as np
from PIL import Image

from .ingest import encode_rle


def _ellipse_mask(size: int, cy: float, cx: float, ry: float,
                  rx: float) -> np.ndarray:
    yy, xx = np.mgrid[0:size, 0:size]
    return ((yy - cy) / ry) ** 2 + ((xx - cx) / rx) ** 2 <= 1.0


def make_corpus(out_dir, n_images: int = 50, size: int = 64,
                seed: int = 7) -> dict[str, str]:
    """Write images/, gt.json, and pred.json; returns the three paths."""
    rng = np.random.default_rng(seed)
    image_dir = os.path.join(out_dir, "images")
    os.makedirs(image_dir, exist_ok=True)

    images, gt_anns, pred_anns = [], [], []
    next_id = 1
    for image_id in range(1, n_images + 1):
        canvas = np.full((size, size, 3), 30, dtype=np.uint8)
        canvas[:, :, 1] = 40
        n_leaves = int(rng.integers(1, 5))
        for _ in range(n_leaves):
            cy = float(rng.uniform(10, size - 10))
            cx = float(rng.uniform(10, size - 10))
            ry = float(rng.uniform(4, 11))
            rx = float(rng.uniform(3, 9))
            mask = _ellipse_mask(size, cy, cx, ry, rx)
            if mask.sum() < 12:
                continue
            color = (int(rng.integers(20, 90)), int(rng.integers(90, 200)),
                     int(rng.integers(5, 60)))
            canvas[mask] = color
            gt_anns.append({
                "id": next_id, "image_id": image_id, "category_id": 1,
                "segmentation": {"size": [size, size],
                                 "counts": encode_rle(mask)},
            })
            # prediction: the same leaf with a nibbled boundary
            pred = mask.copy()
            rows, cols = np.nonzero(pred)
            drop = rng.random(rows.size) < 0.08
            pred[rows[drop], cols[drop]] = False
            if pred.sum() >= 8:
                pred_anns.append({
                    "id": next_id, "image_id": image_id, "category_id": 1,
                    "score": float(np.round(rng.uniform(0.5, 0.99), 4)),
                    "segmentation": {"size": [size, size],
                                     "counts": encode_rle(pred)},
                })
            next_id += 1
        file_name = f"img_{image_id:04d}.png"
        Image.fromarray(canvas).save(os.path.join(image_dir, file_name))
        images.append({"id": image_id, "width": size, "height": size,
                       "file_name": file_name})

    categories = [{"id": 1, "name": "leaf"}]
    gt_path = os.path.join(out_dir, "gt.json")
    pred_path = os.path.join(out_dir, "pred.json")
    with open(gt_path, "w", encoding="utf-8") as fh:
        json.dump({"images": images, "annotations": gt_anns,
                   "categories": categories}, fh)
    with open(pred_path, "w", encoding="utf-8") as fh:
        json.dump({"images": images, "annotations": pred_anns,
                   "categories": categories}, fh)
    return {"images": image_dir, "gt": gt_path, "pred": pred_path}
