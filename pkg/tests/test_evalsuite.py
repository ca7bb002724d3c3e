import itertools
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from leafkit.errors import ValidationError
from leafkit.evalsuite import (acc_vis, average_precision, coco_map, iou,
                               match_instances, match_instances_by_iou,
                               precision_recall, regression_metrics,
                               MatchResult)
from leafkit.ingest import BoundingBox, InstanceMask
from leafkit.verify import brute_force_metrics, metric_equivalence, \
    random_scene


def _mask(instance_id, pixels, shape=(6, 6), image_id=0, score=None):
    grid = np.zeros(shape, dtype=bool)
    for r, c in pixels:
        grid[r, c] = True
    return InstanceMask(instance_id, image_id, grid, score)


def _rect(instance_id, r0, c0, r1, c1, shape=(8, 8), image_id=0, score=None):
    grid = np.zeros(shape, dtype=bool)
    grid[r0:r1, c0:c1] = True
    return InstanceMask(instance_id, image_id, grid, score)


class TestIou:
    def test_identical_masks(self):
        a = _rect(1, 0, 0, 3, 3)
        b = _rect(2, 0, 0, 3, 3)
        assert iou(a, b) == 1.0

    def test_disjoint_masks(self):
        assert iou(_rect(1, 0, 0, 2, 2), _rect(2, 4, 4, 6, 6)) == 0.0

    def test_two_2x1_masks_overlapping_one_pixel(self):
        a = _mask(1, [(0, 0), (0, 1)])
        b = _mask(2, [(0, 1), (0, 2)])
        assert iou(a, b) == pytest.approx(1.0 / 3.0)

    def test_box_iou_uses_inclusive_area(self):
        # single-pixel boxes at the same spot
        assert iou(BoundingBox(2, 2, 2, 2), BoundingBox(2, 2, 2, 2)) == 1.0
        assert iou(BoundingBox(0, 0, 1, 1), BoundingBox(1, 1, 2, 2)) == \
            pytest.approx(1.0 / 7.0)

    def test_mixed_kinds_rejected(self):
        with pytest.raises(ValidationError):
            iou(_rect(1, 0, 0, 2, 2), BoundingBox(0, 0, 1, 1))


def _exhaustive_best_matching(preds, gts, threshold):
    """Maximum-cardinality matching by trying every one-to-one assignment."""
    best = 0
    indices = range(len(gts))
    for k in range(min(len(preds), len(gts)), 0, -1):
        for pred_subset in itertools.permutations(range(len(preds)), k):
            for gt_subset in itertools.permutations(indices, k):
                if all(iou(preds[i], gts[j]) >= threshold
                       for i, j in zip(pred_subset, gt_subset)):
                    best = max(best, k)
        if best == k:
            break
    return best


class TestMatching:
    def test_perfect_single_pair(self):
        pred = _rect(10, 1, 1, 4, 4, score=0.9)
        gt = _rect(20, 1, 1, 4, 4)
        m = match_instances([pred], [gt], 0.5)
        assert m.pairs == [(10, 20, 1.0)]
        assert m.unmatched_preds == [] and m.unmatched_gts == []

    def test_higher_score_wins_iou_tie(self):
        gt = _rect(20, 1, 1, 4, 4)
        low = _rect(10, 1, 1, 4, 4, score=0.3)
        high = _rect(11, 1, 1, 4, 4, score=0.8)
        m = match_instances([low, high], [gt], 0.5)
        assert m.pairs == [(11, 20, 1.0)]
        assert m.unmatched_preds == [10]

    def test_greedy_matches_exhaustive_on_small_scenes(self):
        rng = np.random.default_rng(3)
        for _ in range(30):
            preds, gts = random_scene(rng, height=8, width=8,
                                      max_instances=4)
            m = match_instances(preds, gts, 0.5)
            # greedy never beats the optimum and matches it on these
            # small separable scenes
            assert len(m.pairs) <= _exhaustive_best_matching(preds, gts, 0.5)

    def test_invalid_threshold_rejected(self):
        with pytest.raises(ValidationError):
            match_instances([], [], 0.0)

    def test_score_free_matching_prefers_highest_iou(self):
        gt = _rect(20, 1, 1, 5, 5)
        close = _rect(10, 1, 1, 5, 4)
        exact = _rect(11, 1, 1, 5, 5)
        m = match_instances_by_iou([close, exact], [gt], 0.5)
        assert m.pairs[0][:2] == (11, 20)


class TestPrecisionRecall:
    def test_perfect(self):
        m = MatchResult(pairs=[(1, 2, 1.0)], unmatched_preds=[],
                        unmatched_gts=[])
        assert precision_recall(m) == (1.0, 1.0)

    def test_no_predictions(self):
        m = MatchResult(pairs=[], unmatched_preds=[], unmatched_gts=[1, 2])
        assert precision_recall(m) == (0.0, 0.0)

    def test_counting_fixture(self):
        m = MatchResult(pairs=[(1, 1, 1.0), (2, 2, 1.0), (3, 3, 1.0)],
                        unmatched_preds=[4], unmatched_gts=[5, 6])
        assert precision_recall(m) == (0.75, 0.6)


class TestAveragePrecision:
    def test_single_perfect_prediction(self):
        pred = _rect(10, 1, 1, 4, 4, score=0.9)
        gt = _rect(20, 1, 1, 4, 4)
        assert average_precision([pred], [gt], 0.5) == 1.0

    def test_all_below_threshold(self):
        pred = _rect(10, 0, 0, 2, 2, score=0.9)
        gt = _rect(20, 5, 5, 8, 8)
        assert average_precision([pred], [gt], 0.5) == 0.0

    def test_explicit_staircase(self):
        # 2 GT; predictions at scores 0.9 (hit), 0.8 (miss), 0.7 (hit):
        # PR points (0.5, 1), (0.5, 0.5), (1, 2/3), so the interpolated
        # precision is 1 for recall <= 0.5 and 2/3 above
        gts = [_rect(1, 0, 0, 3, 3), _rect(2, 5, 5, 8, 8)]
        preds = [_rect(10, 0, 0, 3, 3, score=0.9),
                 _rect(11, 0, 4, 2, 8, score=0.8),
                 _rect(12, 5, 5, 8, 8, score=0.7)]
        want = (51 * 1.0 + 50 * (2.0 / 3.0)) / 101.0
        assert average_precision(preds, gts, 0.5) == pytest.approx(
            want, abs=1e-12)


class TestCocoMap:
    def test_perfect_predictions(self):
        gts = [_rect(1, 0, 0, 3, 3), _rect(2, 5, 5, 8, 8)]
        preds = [_rect(10, 0, 0, 3, 3, score=0.9),
                 _rect(11, 5, 5, 8, 8, score=0.8)]
        metrics = coco_map(preds, gts)
        assert all(v == 1.0 for v in metrics.as_dict().values())

    def test_empty_predictions(self):
        gts = [_rect(1, 0, 0, 3, 3)]
        metrics = coco_map([], gts)
        assert all(v == 0.0 for v in metrics.as_dict().values())

    def test_tiny_fixture_matches_brute_force_oracle(self):
        rng = np.random.default_rng(17)
        preds, gts = random_scene(rng, max_instances=6)
        fast = coco_map(preds, gts).as_dict()
        for key, want in brute_force_metrics(preds, gts).items():
            assert fast[key] == pytest.approx(want, abs=1e-12)

    def test_randomized_oracle_equivalence(self):
        assert metric_equivalence(trials=25, seed=42) <= 1e-9


class TestAccVis:
    def test_extremes(self):
        assert acc_vis(0, 5) == 0.0
        assert acc_vis(5, 5) == 100.0

    def test_reference_f1_accuracy_fixture(self):
        assert acc_vis(20, 22) == pytest.approx(90.9, abs=0.05)

    def test_counts_validated(self):
        with pytest.raises(ValidationError):
            acc_vis(3, 0)
        with pytest.raises(ValidationError):
            acc_vis(7, 5)


class TestRegressionMetrics:
    def test_exact_prediction(self):
        m = regression_metrics([1.0, 2.0, 3.0], [1.0, 2.0, 3.0])
        assert (m.r2, m.rmse, m.mae) == (1.0, 0.0, 0.0)

    def test_direct_formula_fixture(self):
        m = regression_metrics([0.0, 3.0, 3.0], [0.0, 2.0, 4.0])
        assert m.r2 == pytest.approx(0.75)
        assert m.mae == pytest.approx(2.0 / 3.0)
        assert m.rmse == pytest.approx(math.sqrt(2.0 / 3.0))

    def test_constant_ground_truth_is_degenerate(self):
        m = regression_metrics([1.0, 2.0], [3.0, 3.0])
        assert m.degenerate and m.r2 == 0.0

    def test_shape_mismatch_rejected(self):
        with pytest.raises(ValidationError):
            regression_metrics([1.0], [1.0, 2.0])

    @given(st.integers(0, 50))
    def test_r2_at_most_one(self, seed):
        rng = np.random.default_rng(seed)
        gt = rng.normal(size=6)
        pred = gt + rng.normal(scale=0.3, size=6)
        assert regression_metrics(pred, gt).r2 <= 1.0
