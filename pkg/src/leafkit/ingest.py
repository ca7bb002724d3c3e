"""Annotation ingestion: COCO-style and LabelMe-style loaders, rasterization,
run-length codecs, and the indicator report writer.

Rasterization convention: a pixel belongs to a polygon iff its center lies
inside under the even-odd rule; centers exactly on an edge count as inside.
RLE is column-major with a leading background run.
"""

from __future__ import annotations

import csv
import io
import json
import os
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from .errors import ParseError, ValidationError

# 13 reporting columns (size, contour, shape ratios, channel medians and
# means) plus the six tertile columns; shared by writer and reader.
REPORT_COLUMNS = [
    "ID", "width", "height", "perimeter", "area", "round", "rect",
    "R_m", "G_m", "B_m", "R_mean", "G_mean", "B_mean",
    "R_1/3", "G_1/3", "B_1/3", "R_2/3", "G_2/3", "B_2/3",
]


@dataclass(frozen=True)
class BoundingBox:
    x_min: int
    y_min: int
    x_max: int
    y_max: int

    def __post_init__(self):
        if self.x_min > self.x_max or self.y_min > self.y_max:
            raise ValidationError(f"inverted bounding box {self}")

    @property
    def width(self) -> int:
        # inclusive pixel extent: a single pixel has width 1
        return self.x_max - self.x_min + 1

    @property
    def height(self) -> int:
        return self.y_max - self.y_min + 1

    @property
    def area(self) -> int:
        return self.width * self.height


@dataclass(frozen=True)
class ImageRef:
    id: int
    width: int
    height: int
    path: str = ""

    def __post_init__(self):
        if self.width <= 0 or self.height <= 0:
            raise ValidationError(f"image {self.id}: non-positive size "
                                  f"{self.width}x{self.height}")


def bbox_of(grid: np.ndarray) -> BoundingBox:
    """Tight axis-aligned box of the set pixels."""
    rows, cols = np.nonzero(grid)
    if rows.size == 0:
        raise ValidationError("empty mask has no bounding box")
    return BoundingBox(int(cols.min()), int(rows.min()),
                       int(cols.max()), int(rows.max()))


@dataclass
class InstanceMask:
    id: int
    image_id: int
    grid: np.ndarray  # bool, (height, width), row-major
    score: Optional[float] = None
    bbox: BoundingBox = field(init=False)

    def __post_init__(self):
        self.grid = np.asarray(self.grid, dtype=bool)
        if self.grid.ndim != 2:
            raise ValidationError(f"instance {self.id}: grid must be 2-D")
        if not self.grid.any():
            raise ValidationError(f"instance {self.id}: mask has no set pixels")
        if self.score is not None and not (0.0 <= self.score <= 1.0):
            raise ValidationError(f"instance {self.id}: score {self.score} "
                                  "outside [0, 1]")
        self.bbox = bbox_of(self.grid)

    @property
    def area(self) -> int:
        return int(self.grid.sum())

    @property
    def effective_score(self) -> float:
        # absence of a score (ground truth) counts as full confidence
        return 1.0 if self.score is None else self.score


@dataclass
class Dataset:
    images: list[ImageRef]
    instances: list[InstanceMask]
    category_names: list[str]

    def __post_init__(self):
        image_ids = {im.id for im in self.images}
        if len(image_ids) != len(self.images):
            raise ValidationError("duplicate image ids")
        seen = set()
        sizes = {im.id: (im.height, im.width) for im in self.images}
        for inst in self.instances:
            if inst.id in seen:
                raise ValidationError(f"duplicate instance id {inst.id}")
            seen.add(inst.id)
            if inst.image_id not in image_ids:
                raise ValidationError(f"instance {inst.id} references missing "
                                      f"image {inst.image_id}")
            if inst.grid.shape != sizes[inst.image_id]:
                raise ValidationError(
                    f"instance {inst.id}: grid {inst.grid.shape} does not "
                    f"match image {inst.image_id} size {sizes[inst.image_id]}")

    def instances_of(self, image_id: int) -> list[InstanceMask]:
        return [i for i in self.instances if i.image_id == image_id]


# ---------------------------------------------------------------------------
# rasterization


def rasterize_polygon(points: Sequence[Sequence[float]],
                      height: int, width: int) -> np.ndarray:
    """Even-odd rasterization on pixel centers; edge-touching centers are in.

    ``points`` is a closed ring given without the repeated endpoint.
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2 or pts.shape[0] < 3:
        raise ValidationError("polygon needs at least 3 (x, y) points")
    cx = np.arange(width) + 0.5
    cy = np.arange(height) + 0.5
    px, py = np.meshgrid(cx, cy)  # (H, W)

    inside = np.zeros((height, width), dtype=bool)
    on_edge = np.zeros((height, width), dtype=bool)
    n = pts.shape[0]
    eps = 1e-9
    for k in range(n):
        x1, y1 = pts[k]
        x2, y2 = pts[(k + 1) % n]
        # exact-on-segment test (within eps)
        dx, dy = x2 - x1, y2 - y1
        seg_len2 = dx * dx + dy * dy
        if seg_len2 > 0:
            cross = (px - x1) * dy - (py - y1) * dx
            dot = (px - x1) * dx + (py - y1) * dy
            on_edge |= (np.abs(cross) <= eps * np.sqrt(seg_len2)) & \
                       (dot >= -eps) & (dot <= seg_len2 + eps)
        # even-odd horizontal-ray crossing (half-open in y to avoid vertex
        # double counting)
        cond = (y1 <= py) != (y2 <= py)
        if np.any(cond):
            with np.errstate(divide="ignore", invalid="ignore"):
                x_at = x1 + (py - y1) * dx / (dy if dy != 0 else np.inf)
            inside ^= cond & (px < x_at)
    return inside | on_edge


# ---------------------------------------------------------------------------
# run-length encoding (column-major, leading background run)


def decode_rle(counts: Sequence[int], height: int, width: int) -> np.ndarray:
    counts = [int(c) for c in counts]
    if any(c < 0 for c in counts):
        raise ValidationError("negative run length")
    if sum(counts) != height * width:
        raise ValidationError(f"run lengths sum to {sum(counts)}, expected "
                              f"{height * width}")
    flat = np.zeros(height * width, dtype=bool)
    pos, value = 0, False
    for c in counts:
        if value:
            flat[pos:pos + c] = True
        pos += c
        value = not value
    return flat.reshape((width, height)).T  # column-major


def encode_rle(grid: np.ndarray) -> list[int]:
    flat = np.asarray(grid, dtype=bool).T.reshape(-1)
    counts = []
    value, run = False, 0
    for v in flat:
        if v == value:
            run += 1
        else:
            counts.append(run)
            value, run = v, 1
    counts.append(run)
    return counts


# ---------------------------------------------------------------------------
# loaders


def _read_json(path) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: line {exc.lineno} column {exc.colno}: "
                         f"{exc.msg}") from exc


def _segmentation_to_grid(seg, height: int, width: int) -> np.ndarray:
    if isinstance(seg, dict):
        counts = seg.get("counts")
        if not isinstance(counts, list):
            raise ValidationError("only uncompressed RLE counts are supported")
        size = seg.get("size", [height, width])
        return decode_rle(counts, int(size[0]), int(size[1]))
    if isinstance(seg, list):
        grid = np.zeros((height, width), dtype=bool)
        for ring in seg:
            pts = np.asarray(ring, dtype=float).reshape(-1, 2)
            grid |= rasterize_polygon(pts, height, width)
        return grid
    raise ValidationError(f"unsupported segmentation payload: {type(seg)}")


def load_coco(path) -> Dataset:
    """Load a COCO-style annotation file, rasterizing every segmentation."""
    doc = _read_json(path)
    for key in ("images", "annotations"):
        if key not in doc:
            raise ValidationError(f"{path}: missing '{key}' array")
    images = [ImageRef(int(im["id"]), int(im["width"]), int(im["height"]),
                       str(im.get("file_name", "")))
              for im in doc["images"]]
    instances = []
    for ann in doc["annotations"]:
        image_id = int(ann["image_id"])
        ref = next((im for im in images if im.id == image_id), None)
        if ref is None:
            raise ValidationError(f"annotation {ann.get('id')} references "
                                  f"missing image id {image_id}")
        grid = _segmentation_to_grid(ann["segmentation"], ref.height, ref.width)
        if not grid.any():
            raise ValidationError(f"annotation {ann.get('id')}: segmentation "
                                  "rasterizes to an empty mask")
        score = ann.get("score")
        instances.append(InstanceMask(int(ann["id"]), image_id, grid,
                                      None if score is None else float(score)))
    categories = [str(c.get("name", c.get("id", "")))
                  for c in doc.get("categories", [])]
    return Dataset(images, instances, categories)


def load_labelme(path) -> Dataset:
    """Load a LabelMe-style per-image polygon document."""
    doc = _read_json(path)
    height = int(doc.get("imageHeight", 0))
    width = int(doc.get("imageWidth", 0))
    image = ImageRef(0, width, height, str(doc.get("imagePath", "")))
    instances = []
    for idx, shape in enumerate(doc.get("shapes", []), start=1):
        kind = shape.get("shape_type", "polygon")
        if kind != "polygon":
            raise ValidationError(f"unsupported shape type '{kind}'")
        pts = shape.get("points", [])
        if len(pts) < 3:
            raise ValidationError(f"shape {idx}: polygon has {len(pts)} "
                                  "points, need at least 3")
        grid = rasterize_polygon(pts, height, width)
        if not grid.any():
            raise ValidationError(f"shape {idx}: polygon rasterizes to an "
                                  "empty mask")
        instances.append(InstanceMask(idx, 0, grid))
    categories = sorted({str(s.get("label", "leaf"))
                         for s in doc.get("shapes", [])}) or ["leaf"]
    return Dataset([image], instances, categories)


# ---------------------------------------------------------------------------
# report writing


def _fmt(value: float) -> str:
    # fixed two decimals, IEEE round-half-even via the float formatter
    return f"{float(value):.2f}"


def report_rows(records) -> list[list[str]]:
    rows = []
    for rec in records:
        values = rec.as_row()
        rows.append([str(rec.instance_id)] + [_fmt(v) for v in values])
    return rows


def write_report(records, path, format: str = "csv") -> None:
    """Write LeafRecords in the fixed report column layout, two decimals."""
    if format not in ("csv", "json"):
        raise ValidationError(f"unknown report format '{format}'")
    rows = report_rows(records)
    buf = io.StringIO()
    if format == "csv":
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(REPORT_COLUMNS)
        writer.writerows(rows)
    else:
        payload = [dict(zip(REPORT_COLUMNS, row)) for row in rows]
        json.dump(payload, buf, indent=2)
        buf.write("\n")
    try:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(buf.getvalue())
    except OSError as exc:
        raise IOError(f"cannot write report to {path}: {exc}") from exc


def read_report(path) -> list[dict[str, float]]:
    """Read back a CSV report into per-row {column: value} dicts."""
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != REPORT_COLUMNS:
            raise ParseError(f"{path}: unexpected header {header}")
        out = []
        for row in reader:
            out.append({col: float(v) for col, v in zip(header, row)})
    return out
