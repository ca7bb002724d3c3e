import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

import oracles
from leafkit.errors import ValidationError
from leafkit.maskgeom import (contour_perimeter, largest_component,
                              shape_indicators, trace_contour)


def _random_blob(seed, h=10, w=10, density=0.45):
    rng = np.random.default_rng(seed)
    grid = rng.random((h, w)) < density
    if not grid.any():
        grid[h // 2, w // 2] = True
    return grid


class TestContour:
    def test_single_pixel(self):
        grid = np.zeros((3, 3), dtype=bool)
        grid[1, 1] = True
        contour = trace_contour(grid)
        assert contour == [(1, 1)]
        assert contour_perimeter(contour) == 1.0

    def test_filled_3x3_square_is_8_point_loop(self):
        grid = np.zeros((5, 5), dtype=bool)
        grid[1:4, 1:4] = True
        contour = trace_contour(grid)
        assert len(contour) == 8
        assert set(contour) == oracles.boundary_pixels(grid)
        assert contour_perimeter(contour) == pytest.approx(8.0)

    def test_trace_ignores_smaller_component(self):
        grid = np.zeros((8, 8), dtype=bool)
        grid[1:2, 1:6] = True  # 5 pixels
        grid[5:6, 5:7] = True  # 2 pixels
        comps = sorted(oracles.connected_components(grid), key=len)
        assert [len(c) for c in comps] == [2, 5]
        assert set(trace_contour(grid)) <= comps[-1]

    def test_largest_component_matches_bfs_oracle(self):
        grid = _random_blob(11)
        comps = oracles.connected_components(grid)
        biggest = max(comps, key=len)
        picked = largest_component(grid)
        assert {(r, c) for r, c in zip(*np.nonzero(picked))} == biggest

    @given(st.integers(0, 500))
    def test_contour_points_are_boundary_pixels_of_largest_component(
            self, seed):
        grid = _random_blob(seed)
        biggest = max(oracles.connected_components(grid), key=len)
        only = np.zeros_like(grid)
        for r, c in biggest:
            only[r, c] = True
        contour = trace_contour(grid)
        assert set(contour) == oracles.boundary_pixels(only)

    @given(st.integers(0, 200))
    def test_contour_steps_are_8_adjacent(self, seed):
        contour = trace_contour(_random_blob(seed))
        n = len(contour)
        for k in range(n if n > 1 else 0):
            r1, c1 = contour[k]
            r2, c2 = contour[(k + 1) % n]
            assert max(abs(r1 - r2), abs(c1 - c2)) == 1


class TestShapeIndicators:
    def test_filled_square_perimeter_convention(self):
        # a filled k x k square traces to perimeter 4 (k - 1)
        grid = np.ones((10, 10), dtype=bool)
        ind = shape_indicators(grid)
        assert ind.perimeter == pytest.approx(36.0)
        assert ind.roundness == pytest.approx(4 * math.pi * 100 / 36 ** 2)
        assert ind.rectangularity == 1.0

    def test_filled_rectangle_rectangularity_exact(self):
        grid = np.zeros((12, 20), dtype=bool)
        grid[2:9, 3:18] = True
        assert shape_indicators(grid).rectangularity == 1.0
        assert shape_indicators(grid).width == 15.0
        assert shape_indicators(grid).height == 7.0

    def test_disk_roundness_near_one(self):
        ind = shape_indicators(oracles.rasterized_disk(50))
        assert abs(ind.roundness - 1.0) < 0.1

    def test_area_counts_all_components(self):
        grid = np.zeros((8, 8), dtype=bool)
        grid[1:3, 1:3] = True
        grid[5:7, 5:7] = True
        assert shape_indicators(grid).area == 8.0

    def test_empty_mask_rejected(self):
        with pytest.raises(ValidationError):
            shape_indicators(np.zeros((4, 4), dtype=bool))

    @given(st.integers(0, 300), st.integers(0, 6), st.integers(0, 6))
    def test_translation_invariance(self, seed, dr, dc):
        blob = _random_blob(seed, h=8, w=8)
        base = np.zeros((20, 20), dtype=bool)
        base[2:10, 2:10] = blob
        moved = np.zeros((20, 20), dtype=bool)
        moved[2 + dr:10 + dr, 2 + dc:10 + dc] = blob
        assert shape_indicators(base) == shape_indicators(moved)
