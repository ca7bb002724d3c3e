"""Shape indicators from binary instance masks.

Conventions (fixed so the numbers are reproducible):
  * area counts every set pixel, over all components;
  * the contour is the outer boundary of the largest 8-connected component,
    traced clockwise from the topmost-leftmost boundary pixel;
  * perimeter sums unit steps as 1 and diagonal steps as sqrt(2) along the
    closed contour loop; a single-pixel component gets perimeter 1;
  * width/height use the inclusive pixel extent (single pixel -> 1 x 1).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import ValidationError
from .ingest import InstanceMask, bbox_of

_EIGHT = np.ones((3, 3), dtype=int)

# Moore neighborhood in clockwise order starting from west: (drow, dcol)
_CLOCKWISE = [(0, -1), (-1, -1), (-1, 0), (-1, 1),
              (0, 1), (1, 1), (1, 0), (1, -1)]


@dataclass(frozen=True)
class ShapeIndicators:
    width: float
    height: float
    perimeter: float
    area: float
    roundness: float
    rectangularity: float

    def as_tuple(self):
        return (self.width, self.height, self.perimeter, self.area,
                self.roundness, self.rectangularity)


def _as_grid(mask) -> np.ndarray:
    grid = mask.grid if isinstance(mask, InstanceMask) else np.asarray(mask)
    grid = grid.astype(bool)
    if not grid.any():
        raise ValidationError("empty mask")
    return grid


def largest_component(grid: np.ndarray) -> np.ndarray:
    labels, n = ndimage.label(grid, structure=_EIGHT)
    if n <= 1:
        return grid
    sizes = ndimage.sum_labels(grid, labels, index=np.arange(1, n + 1))
    return labels == (int(np.argmax(sizes)) + 1)


def trace_contour(mask) -> list[tuple[int, int]]:
    """Clockwise Moore-neighbor boundary trace of the largest component.

    Returns (row, col) points starting at the topmost-leftmost boundary
    pixel; consecutive points are 8-adjacent and the loop closes implicitly
    (last point connects back to the first).
    """
    grid = largest_component(_as_grid(mask))
    rows, cols = np.nonzero(grid)
    start = (int(rows.min()), int(cols[rows == rows.min()].min()))
    if rows.size == 1:
        return [start]

    padded = np.zeros((grid.shape[0] + 2, grid.shape[1] + 2), dtype=bool)
    padded[1:-1, 1:-1] = grid
    current = (start[0] + 1, start[1] + 1)
    backtrack = 0  # west of the start pixel is always background
    contour = []
    seen_states = set()
    while True:
        move = None
        for k in range(8):
            idx = (backtrack + k) % 8
            dr, dc = _CLOCKWISE[idx]
            if padded[current[0] + dr, current[1] + dc]:
                move = idx
                break
        if move is None:  # cannot happen for a component of size >= 2
            contour.append(current)
            break
        state = (current, move)
        if state in seen_states:
            break
        seen_states.add(state)
        contour.append(current)
        dr, dc = _CLOCKWISE[move]
        current = (current[0] + dr, current[1] + dc)
        backtrack = (move + 5) % 8

    return [(r - 1, c - 1) for r, c in contour]


def contour_perimeter(contour: list[tuple[int, int]]) -> float:
    if len(contour) == 1:
        return 1.0
    total = 0.0
    n = len(contour)
    for k in range(n):
        r1, c1 = contour[k]
        r2, c2 = contour[(k + 1) % n]
        total += math.sqrt((r1 - r2) ** 2 + (c1 - c2) ** 2)
    return total


def shape_indicators(mask) -> ShapeIndicators:
    grid = _as_grid(mask)
    area = float(grid.sum())
    box = bbox_of(grid)
    width, height = float(box.width), float(box.height)
    perimeter = contour_perimeter(trace_contour(grid))
    roundness = 4.0 * math.pi * area / (perimeter ** 2)
    rectangularity = area / (width * height)
    return ShapeIndicators(width, height, perimeter, area, roundness,
                           rectangularity)
