import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

import oracles
from leafkit.colorstats import ColorIndicators
from leafkit.errors import ParseError, ValidationError
from leafkit.ingest import (REPORT_COLUMNS, BoundingBox, InstanceMask,
                            decode_rle, encode_rle, load_coco, load_labelme,
                            rasterize_polygon, read_report, report_rows,
                            write_report)
from leafkit.maskgeom import ShapeIndicators
from leafkit.phenotype import LeafRecord


def _coco_doc(width, height, annotations):
    return {
        "images": [{"id": 1, "width": width, "height": height,
                    "file_name": "img.png"}],
        "annotations": annotations,
        "categories": [{"id": 1, "name": "leaf"}],
    }


class TestRasterize:
    def test_left_half_rectangle_on_4x4(self):
        grid = rasterize_polygon([(0, 0), (2, 0), (2, 4), (0, 4)], 4, 4)
        assert grid.sum() == 8
        assert grid[:, :2].all() and not grid[:, 2:].any()

    def test_triangle_matches_even_odd_oracle(self):
        pts = [(0, 0), (4, 0), (0, 4)]
        grid = rasterize_polygon(pts, 8, 8)
        assert np.array_equal(grid, oracles.rasterize(pts, 8, 8))

    def test_too_few_points_rejected(self):
        with pytest.raises(ValidationError):
            rasterize_polygon([(0, 0), (1, 1)], 4, 4)

    @given(st.lists(st.tuples(st.integers(0, 7), st.integers(0, 7)),
                    min_size=3, max_size=6))
    def test_matches_oracle_on_integer_polygons(self, pts):
        grid = rasterize_polygon(pts, 8, 8)
        assert np.array_equal(grid, oracles.rasterize(pts, 8, 8))


class TestRle:
    def test_leading_zero_run_gives_all_ones(self):
        assert decode_rle([0, 4], 2, 2).all()

    def test_single_background_run_gives_all_zeros(self):
        assert not decode_rle([4], 2, 2).any()

    def test_column_major_order(self):
        # flat column-major [0, 1, 1, 0] -> pixels (1, 0) and (0, 1)
        grid = decode_rle([1, 2, 1], 2, 2)
        assert grid[1, 0] and grid[0, 1]
        assert not grid[0, 0] and not grid[1, 1]

    def test_wrong_total_rejected(self):
        with pytest.raises(ValidationError):
            decode_rle([3], 2, 2)

    @given(st.integers(1, 12), st.integers(1, 12), st.integers(0, 2 ** 32))
    def test_roundtrip_against_oracle(self, h, w, seed):
        grid = np.random.default_rng(seed).random((h, w)) < 0.5
        counts = encode_rle(grid)
        assert np.array_equal(decode_rle(counts, h, w), grid)
        assert np.array_equal(oracles.rle_decode(counts, h, w), grid)


class TestLoaders:
    def test_coco_left_half_polygon(self, tmp_path):
        doc = _coco_doc(4, 4, [{
            "id": 1, "image_id": 1, "category_id": 1,
            "segmentation": [[0, 0, 2, 0, 2, 4, 0, 4]],
        }])
        path = tmp_path / "ann.json"
        path.write_text(json.dumps(doc))
        ds = load_coco(path)
        assert len(ds.instances) == 1
        assert ds.instances[0].area == 8

    def test_coco_rle_segmentation(self, tmp_path):
        grid = np.zeros((3, 3), dtype=bool)
        grid[1, 1] = True
        doc = _coco_doc(3, 3, [{
            "id": 1, "image_id": 1, "category_id": 1,
            "segmentation": {"size": [3, 3], "counts": encode_rle(grid)},
        }])
        path = tmp_path / "ann.json"
        path.write_text(json.dumps(doc))
        ds = load_coco(path)
        assert np.array_equal(ds.instances[0].grid, grid)

    def test_malformed_json_reports_position(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text('{"images": [,]}')
        with pytest.raises(ParseError, match=r"line 1 column"):
            load_coco(path)

    def test_labelme_two_disjoint_polygons(self, tmp_path):
        doc = {
            "imageHeight": 8, "imageWidth": 8, "imagePath": "img.png",
            "shapes": [
                {"label": "leaf", "shape_type": "polygon",
                 "points": [[0, 0], [3, 0], [3, 3], [0, 3]]},
                {"label": "leaf", "shape_type": "polygon",
                 "points": [[5, 5], [8, 5], [8, 8], [5, 8]]},
            ],
        }
        path = tmp_path / "ann.json"
        path.write_text(json.dumps(doc))
        ds = load_labelme(path)
        assert len(ds.instances) == 2

    def test_labelme_degenerate_polygon_rejected(self, tmp_path):
        doc = {"imageHeight": 4, "imageWidth": 4,
               "shapes": [{"label": "leaf", "shape_type": "polygon",
                           "points": [[0, 0], [1, 1]]}]}
        path = tmp_path / "ann.json"
        path.write_text(json.dumps(doc))
        with pytest.raises(ValidationError):
            load_labelme(path)


class TestDataclasses:
    def test_bbox_inclusive_extent(self):
        box = BoundingBox(2, 3, 2, 3)
        assert box.width == 1 and box.height == 1 and box.area == 1

    def test_empty_mask_rejected(self):
        with pytest.raises(ValidationError):
            InstanceMask(1, 0, np.zeros((3, 3), dtype=bool))

    def test_score_out_of_range_rejected(self):
        grid = np.ones((2, 2), dtype=bool)
        with pytest.raises(ValidationError):
            InstanceMask(1, 0, grid, score=1.5)

    def test_unscored_instance_counts_as_full_confidence(self):
        inst = InstanceMask(1, 0, np.ones((2, 2), dtype=bool))
        assert inst.effective_score == 1.0


def _record(instance_id, values):
    shape = ShapeIndicators(*values[:6])
    color = ColorIndicators(*values[6:])
    return LeafRecord(instance_id, shape, color)


# printed indicator row for one large leaf instance, used as a fixed
# serialization target (first 13 report fields)
ROW_306_ID1 = [294.00, 386.00, 1135.99, 78915.50, 0.77, 0.74,
               43.00, 71.00, 12.00, 44.18, 71.65, 13.99]


class TestReport:
    def test_empty_record_list_writes_header_only(self, tmp_path):
        path = tmp_path / "records.csv"
        write_report([], path)
        assert path.read_text() == ",".join(REPORT_COLUMNS) + "\n"

    def test_round_half_even_formatting(self):
        values = [0.774999, 0.125, 0.135, 2.675] + [1.0] * 14
        row = report_rows([_record(1, values)])[0]
        assert row[1] == "0.77"
        # 0.125 is exact in binary and rounds to even
        assert row[2] == "0.12"

    def test_reference_row_serialization(self):
        row = report_rows([_record(1, ROW_306_ID1 + [40.0, 69.0, 10.0,
                                                     46.0, 74.0, 15.0])])[0]
        assert row[:13] == ["1", "294.00", "386.00", "1135.99", "78915.50",
                            "0.77", "0.74", "43.00", "71.00", "12.00",
                            "44.18", "71.65", "13.99"]

    def test_csv_roundtrip_is_byte_identical(self, tmp_path):
        records = [
            _record(1, [10, 12, 38, 95.5, 0.83, 0.79] + [50.0 + k
                                                         for k in range(12)]),
            _record(2, [5, 7, 20, 30.25, 0.94, 0.86] + [90.0 - k
                                                        for k in range(12)]),
        ]
        first = tmp_path / "a.csv"
        second = tmp_path / "b.csv"
        write_report(records, first)
        reread = read_report(first)
        rebuilt = [_record(int(r["ID"]), [r[c] for c in REPORT_COLUMNS[1:]])
                   for r in reread]
        write_report(rebuilt, second)
        assert first.read_bytes() == second.read_bytes()

    def test_json_report_matches_csv_values(self, tmp_path):
        rec = _record(3, [4, 4, 12, 16, 1.4, 1.0] + [10.0] * 12)
        path = tmp_path / "records.json"
        write_report([rec], path, format="json")
        payload = json.loads(path.read_text())
        assert payload[0]["ID"] == "3"
        assert payload[0]["area"] == "16.00"

    def test_unknown_format_rejected(self, tmp_path):
        with pytest.raises(ValidationError):
            write_report([], tmp_path / "x.bin", format="bin")
