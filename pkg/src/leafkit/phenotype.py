"""LGCI scoring: optimal-value transforms, min-max normalization,
entropy-weight fitting, weighted aggregation, and instance filtering.

The 18 indicators are ordered shape-first, then color medians, means, lower
tertiles, upper tertiles (the order the weight table is printed in).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .colorstats import ColorIndicators
from .errors import DegenerateInputError, ValidationError
from .maskgeom import ShapeIndicators

SHAPE_NAMES = ["width", "height", "perimeter", "area", "roundness",
               "rectangularity"]
COLOR_NAMES = ["R_m", "G_m", "B_m", "R_mean", "G_mean", "B_mean",
               "R_1/3", "G_1/3", "B_1/3", "R_2/3", "G_2/3", "B_2/3"]
INDICATOR_NAMES = SHAPE_NAMES + COLOR_NAMES

# Reference optimal intensities for the color indicators, elicited from
# expert-selected high-quality leaves.
REFERENCE_OPTIMAL_VALUES = {
    "R_m": 80.02, "R_mean": 82.50, "R_1/3": 73.71, "R_2/3": 87.15,
    "G_m": 111.68, "G_mean": 113.10, "G_1/3": 105.49, "G_2/3": 118.38,
    "B_m": 41.39, "B_mean": 44.45, "B_1/3": 34.40, "B_2/3": 49.36,
}

# Reference LGCI weights as published (two decimals; sums to ~1.01, kept
# as printed -- refitting normalizes exactly).
REFERENCE_WEIGHTS = {
    "width": 0.15, "height": 0.11, "perimeter": 0.13, "area": 0.30,
    "roundness": 0.06, "rectangularity": 0.03,
    "R_m": 0.02, "G_m": 0.03, "B_m": 0.01,
    "R_mean": 0.02, "G_mean": 0.03, "B_mean": 0.01,
    "R_1/3": 0.01, "G_1/3": 0.02, "B_1/3": 0.01,
    "R_2/3": 0.02, "G_2/3": 0.03, "B_2/3": 0.02,
}


@dataclass
class LeafRecord:
    instance_id: int
    shape: ShapeIndicators
    color: ColorIndicators

    def __post_init__(self):
        for v in self.as_row():
            if not math.isfinite(v):
                raise ValidationError(f"record {self.instance_id}: "
                                      "non-finite indicator value")

    def as_row(self) -> list[float]:
        return list(self.shape.as_tuple()) + list(self.color.as_tuple())


@dataclass
class OptimalValueTable:
    values: dict[str, float]

    def __post_init__(self):
        missing = [k for k in COLOR_NAMES if k not in self.values]
        if missing:
            raise ValidationError(f"optimal-value table missing {missing}")
        for k in COLOR_NAMES:
            v = float(self.values[k])
            if not (0.0 <= v <= 255.0):
                raise ValidationError(f"optimal value {k}={v} outside "
                                      "[0, 255]")

    @classmethod
    def reference(cls) -> "OptimalValueTable":
        return cls(dict(REFERENCE_OPTIMAL_VALUES))

    @classmethod
    def load(cls, path) -> "OptimalValueTable":
        with open(path, "r", encoding="utf-8") as fh:
            return cls(json.load(fh))

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump({k: self.values[k] for k in COLOR_NAMES}, fh, indent=2)
            fh.write("\n")


@dataclass
class IndicatorWeights:
    values: dict[str, float]
    normalized: bool = True

    def __post_init__(self):
        if not self.values:
            raise ValidationError("empty weight table")
        if any(float(v) < 0 for v in self.values.values()):
            raise ValidationError("negative indicator weight")
        if self.normalized:
            total = sum(float(v) for v in self.values.values())
            if abs(total - 1.0) > 1e-9:
                raise ValidationError(f"weights sum to {total}, expected 1")

    def as_vector(self) -> np.ndarray:
        """Weights in canonical indicator order; requires all 18 entries."""
        missing = [k for k in INDICATOR_NAMES if k not in self.values]
        if missing:
            raise ValidationError(f"weights missing indicators {missing}")
        return np.array([float(self.values[k]) for k in INDICATOR_NAMES])

    @classmethod
    def reference(cls) -> "IndicatorWeights":
        # published rounding does not sum exactly to 1
        return cls(dict(REFERENCE_WEIGHTS), normalized=False)

    @classmethod
    def load(cls, path) -> "IndicatorWeights":
        with open(path, "r", encoding="utf-8") as fh:
            return cls(json.load(fh), normalized=False)

    def save(self, path) -> None:
        order = [k for k in INDICATOR_NAMES if k in self.values] + \
            sorted(k for k in self.values if k not in INDICATOR_NAMES)
        with open(path, "w", encoding="utf-8") as fh:
            json.dump({k: self.values[k] for k in order}, fh, indent=2)
            fh.write("\n")


@dataclass(frozen=True)
class LgciScore:
    instance_id: int
    score: float


def record_from_report_row(row: dict[str, float]) -> LeafRecord:
    """Rebuild a LeafRecord from a parsed report row (see ingest.read_report)."""
    shape = ShapeIndicators(row["width"], row["height"], row["perimeter"],
                            row["area"], row["round"], row["rect"])
    color = ColorIndicators(
        row["R_m"], row["G_m"], row["B_m"],
        row["R_mean"], row["G_mean"], row["B_mean"],
        row["R_1/3"], row["G_1/3"], row["B_1/3"],
        row["R_2/3"], row["G_2/3"], row["B_2/3"],
    )
    return LeafRecord(int(row["ID"]), shape, color)


def to_positive(value: float, optimal: float, scale: float) -> float:
    """Linear deviation penalty: 1 at the optimum, 0 at |dev| >= scale."""
    if scale <= 0:
        raise ValidationError(f"non-positive scale {scale}")
    return max(0.0, 1.0 - abs(value - optimal) / scale)


def positive_matrix(records: list[LeafRecord],
                    table: OptimalValueTable) -> np.ndarray:
    """Raw 18-column matrix with color columns converted to positive
    indicators; the per-column scale is the max absolute deviation from the
    optimum observed in the batch (constant-at-optimum columns stay at 1)."""
    raw = np.array([rec.as_row() for rec in records], dtype=float)
    out = raw.copy()
    for j, name in enumerate(INDICATOR_NAMES):
        if name in SHAPE_NAMES:
            continue
        opt = float(table.values[name])
        dev = np.abs(raw[:, j] - opt)
        scale = float(dev.max())
        if scale == 0.0:
            out[:, j] = 1.0
        else:
            out[:, j] = np.maximum(0.0, 1.0 - dev / scale)
    return out


def minmax_normalize(matrix: np.ndarray) -> np.ndarray:
    """Per-column (x - min) / (max - min); constant columns map to 0.5."""
    matrix = np.asarray(matrix, dtype=float)
    if matrix.ndim != 2 or matrix.shape[0] < 2:
        raise ValidationError("normalization needs at least 2 rows")
    mn = matrix.min(axis=0)
    mx = matrix.max(axis=0)
    span = mx - mn
    out = np.empty_like(matrix)
    for j in range(matrix.shape[1]):
        if span[j] == 0.0:
            out[:, j] = 0.5
        else:
            out[:, j] = (matrix[:, j] - mn[j]) / span[j]
    return out


def entropy_weights(matrix: np.ndarray,
                    names: list[str] = None) -> IndicatorWeights:
    """Entropy-weight method on a normalized matrix (entries in [0, 1])."""
    matrix = np.asarray(matrix, dtype=float)
    if matrix.ndim != 2 or matrix.shape[0] < 2:
        raise ValidationError("entropy weighting needs at least 2 rows")
    if matrix.min() < -1e-12 or matrix.max() > 1.0 + 1e-12:
        raise ValidationError("entropy weighting expects entries in [0, 1]")
    n, m = matrix.shape
    names = names if names is not None else INDICATOR_NAMES
    if len(names) != m:
        raise ValidationError(f"{m} columns but {len(names)} names")

    degrees = np.empty(m)
    for j in range(m):
        col = matrix[:, j]
        total = col.sum()
        p = np.full(n, 1.0 / n) if total == 0.0 else col / total
        with np.errstate(divide="ignore", invalid="ignore"):
            terms = np.where(p > 0.0, p * np.log(p), 0.0)
        entropy = -terms.sum() / math.log(n)
        degree = 1.0 - entropy
        # a constant column has entropy 1 up to log round-off; snap it so
        # its weight is exactly zero
        if abs(degree) < 1e-12:
            degree = 0.0
        degrees[j] = max(degree, 0.0)
    total_degree = degrees.sum()
    if total_degree <= 0.0:
        raise DegenerateInputError(
            "all indicator columns are constant; entropy weights are "
            "undefined -- fall back to uniform weights")
    w = degrees / total_degree
    # clip the tiny negatives that log round-off can produce
    w = np.clip(w, 0.0, None)
    w = w / w.sum()
    return IndicatorWeights(dict(zip(names, w.tolist())))


def lgci_score(records: list[LeafRecord], weights: IndicatorWeights,
               table: OptimalValueTable) -> list[LgciScore]:
    """Weighted sum of normalized positive indicators, min-max mapped to
    [0, 1] over the batch."""
    if len(records) < 2:
        raise ValidationError("LGCI scoring needs at least 2 records")
    pos = positive_matrix(records, table)
    norm = minmax_normalize(pos)
    raw = norm @ weights.as_vector()
    mapped = minmax_normalize(raw.reshape(-1, 1))[:, 0]
    return [LgciScore(rec.instance_id, float(s))
            for rec, s in zip(records, mapped)]


def filter_instances(instances, min_area: float = 1000.0,
                     min_score: float = 0.0):
    """Drop small or low-confidence instances, preserving order."""
    if min_area < 0:
        raise ValidationError(f"negative min_area {min_area}")
    return [inst for inst in instances
            if inst.area >= min_area and inst.effective_score >= min_score]
