import random

import pytest

from rdd_bench.annotations import BoundingBox, DamageClass
from rdd_bench.errors import EncodingError, InvariantError, ParseError, SchemaError
from rdd_bench.io import (
    CODE_ENCODING,
    NUMERIC_ENCODING,
    SubmissionRow,
    _round_half_away,
    decode_label,
    detections_jsonl,
    read_detections,
    read_submission,
    submission_rows,
    submission_text,
    write_detections,
    write_submission,
)
from rdd_bench.metrics import Detection


def det(image, code, box, score):
    return Detection(image, DamageClass(code), BoundingBox(*box), score)


class TestInterchange:
    def test_read_single_line(self, tmp_path):
        path = tmp_path / "dets.jsonl"
        path.write_text(
            '{"image": "Japan_000001.jpg", "class": "D20",'
            ' "bbox": [100, 200, 300, 400], "score": 0.87}\n'
        )
        (got,) = read_detections(path)
        assert got.image_id == "Japan_000001.jpg"
        assert got.damage_class == DamageClass("D20")
        assert got.box.as_tuple() == (100, 200, 300, 400)
        assert got.score == 0.87

    def test_read_empty_file(self, tmp_path):
        path = tmp_path / "dets.jsonl"
        path.write_text("")
        assert read_detections(path) == []

    def test_blank_lines_skipped(self, tmp_path):
        path = tmp_path / "dets.jsonl"
        path.write_text(
            '\n{"image": "a.jpg", "class": "D00", "bbox": [0, 0, 1, 1], "score": 0.5}\n'
            '\n   \n'
            '{"image": "b.jpg", "class": "D10", "bbox": [0, 0, 2, 2], "score": 0.6}\n'
        )
        assert [d.image_id for d in read_detections(path)] == ["a.jpg", "b.jpg"]

    def test_invalid_json_names_line(self, tmp_path):
        path = tmp_path / "dets.jsonl"
        path.write_text(
            '{"image": "a.jpg", "class": "D00", "bbox": [0, 0, 1, 1], "score": 0.5}\n'
            "{not json}\n"
        )
        with pytest.raises(ParseError, match="line 2"):
            read_detections(path)

    def test_missing_field_names_field_and_line(self, tmp_path):
        path = tmp_path / "dets.jsonl"
        path.write_text('{"image": "a.jpg", "class": "D00", "score": 0.5}\n')
        with pytest.raises(SchemaError, match="line 1.*'bbox'"):
            read_detections(path)

    def test_non_object_line_rejected(self, tmp_path):
        path = tmp_path / "dets.jsonl"
        path.write_text("[1, 2, 3]\n")
        with pytest.raises(SchemaError, match="object"):
            read_detections(path)

    @pytest.mark.parametrize(
        "bbox",
        ['[0, 0, 1]', '[0, 0, 1, 1, 1]', '["0", 0, 1, 1]', '[true, 0, 1, 1]', '"box"'],
    )
    def test_bad_bbox_rejected(self, tmp_path, bbox):
        path = tmp_path / "dets.jsonl"
        path.write_text(f'{{"image": "a.jpg", "class": "D00", "bbox": {bbox}, "score": 0.5}}\n')
        with pytest.raises(SchemaError, match="bbox"):
            read_detections(path)

    def test_bad_score_type_rejected(self, tmp_path):
        path = tmp_path / "dets.jsonl"
        path.write_text('{"image": "a.jpg", "class": "D00", "bbox": [0, 0, 1, 1], "score": "hi"}\n')
        with pytest.raises(SchemaError, match="score"):
            read_detections(path)

    def test_out_of_range_score_names_line(self, tmp_path):
        path = tmp_path / "dets.jsonl"
        path.write_text(
            '{"image": "a.jpg", "class": "D00", "bbox": [0, 0, 1, 1], "score": 0.5}\n'
            '{"image": "a.jpg", "class": "D00", "bbox": [0, 0, 1, 1], "score": 1.3}\n'
        )
        with pytest.raises(InvariantError, match="line 2"):
            read_detections(path)

    def test_inverted_box_names_line(self, tmp_path):
        path = tmp_path / "dets.jsonl"
        path.write_text('{"image": "a.jpg", "class": "D00", "bbox": [5, 0, 1, 1], "score": 0.5}\n')
        with pytest.raises(InvariantError, match="line 1"):
            read_detections(path)

    def test_round_trip_preserves_values(self, tmp_path):
        rng = random.Random(7)
        dets = []
        for i in range(50):
            x1, y1 = rng.uniform(0, 500), rng.uniform(0, 500)
            dets.append(
                det(
                    f"Japan_{i:06d}.jpg",
                    rng.choice(("D00", "D10", "D20", "D40", "D43")),
                    (x1, y1, x1 + rng.uniform(1, 90), y1 + rng.uniform(1, 90)),
                    rng.random(),
                )
            )
        path = tmp_path / "dets.jsonl"
        assert write_detections(dets, path) == 50
        assert read_detections(path) == dets

    def test_write_is_byte_deterministic(self, tmp_path):
        dets = [det("a.jpg", "D20", (1.25, 2.5, 3.75, 4.125), 0.3333333333333333)]
        first, second = tmp_path / "one.jsonl", tmp_path / "two.jsonl"
        write_detections(dets, first)
        write_detections(dets, second)
        assert first.read_bytes() == second.read_bytes()
        assert first.read_bytes().endswith(b"\n")
        assert b"\r" not in first.read_bytes()

    def test_jsonl_text_matches_written_file(self, tmp_path):
        dets = [det("a.jpg", "D00", (0, 0, 10, 10), 0.5)]
        path = tmp_path / "dets.jsonl"
        write_detections(dets, path)
        assert path.read_text() == detections_jsonl(dets)


class TestRounding:
    @pytest.mark.parametrize(
        ("value", "expected"),
        [
            (0.0, 0),
            (0.4, 0),
            (0.5, 1),
            (1.5, 2),
            (2.4, 2),
            (2.5, 3),
            (2.6, 3),
            (-0.4, 0),
            (-0.5, -1),
            (-1.5, -2),
            (-2.5, -3),
            (100.0, 100),
        ],
    )
    def test_half_away_from_zero(self, value, expected):
        assert _round_half_away(value) == expected


class TestSubmission:
    def test_single_detection_row(self):
        rows = submission_rows([det("img.jpg", "D20", (100, 200, 300, 400), 0.9)])
        assert rows == [SubmissionRow("img.jpg", (("D20", 100, 200, 300, 400),))]
        assert submission_text(rows) == "img.jpg,D20 100 200 300 400\n"

    def test_quintuples_sorted_by_descending_score(self):
        dets = [
            det("img.jpg", "D00", (0, 0, 10, 10), 0.5),
            det("img.jpg", "D10", (20, 0, 30, 10), 0.9),
            det("img.jpg", "D20", (40, 0, 50, 10), 0.7),
        ]
        (row,) = submission_rows(dets)
        assert [p[0] for p in row.predictions] == ["D10", "D20", "D00"]

    def test_score_ties_keep_input_order(self):
        dets = [
            det("img.jpg", "D40", (0, 0, 10, 10), 0.5),
            det("img.jpg", "D00", (20, 0, 30, 10), 0.5),
        ]
        (row,) = submission_rows(dets)
        assert [p[0] for p in row.predictions] == ["D40", "D00"]

    def test_rows_sorted_by_image_name(self):
        dets = [
            det("b.jpg", "D00", (0, 0, 10, 10), 0.5),
            det("a.jpg", "D00", (0, 0, 10, 10), 0.5),
            det("c.jpg", "D00", (0, 0, 10, 10), 0.5),
        ]
        assert [r.image_name for r in submission_rows(dets)] == ["a.jpg", "b.jpg", "c.jpg"]

    def test_coordinates_rounded_half_away(self):
        (row,) = submission_rows([det("img.jpg", "D00", (0.4, 0.5, 10.5, 10.4), 0.5)])
        assert row.predictions == (("D00", 0, 1, 11, 10),)

    def test_numeric_encoding_tokens(self):
        dets = [
            det("img.jpg", code, (i * 20, 0, i * 20 + 10, 10), 1.0 - i / 10)
            for i, code in enumerate(("D00", "D10", "D20", "D40"))
        ]
        (row,) = submission_rows(dets, label_encoding=NUMERIC_ENCODING)
        assert [p[0] for p in row.predictions] == ["1", "2", "3", "4"]

    def test_unmapped_class_raises_encoding_error(self):
        # Non-standard classes are normalized away upstream; both encodings
        # refuse them rather than inventing a token.
        dets = [det("img.jpg", "D43", (0, 0, 10, 10), 0.5)]
        with pytest.raises(EncodingError, match="D43"):
            submission_rows(dets, label_encoding=NUMERIC_ENCODING)
        with pytest.raises(EncodingError, match="D43"):
            submission_rows(dets)

    def test_image_names_adds_empty_rows(self):
        dets = [det("b.jpg", "D00", (0, 0, 10, 10), 0.5)]
        rows = submission_rows(dets, image_names=["a.jpg", "b.jpg", "c.jpg"])
        assert [(r.image_name, len(r.predictions)) for r in rows] == [
            ("a.jpg", 0),
            ("b.jpg", 1),
            ("c.jpg", 0),
        ]
        assert submission_text(rows).splitlines()[0] == "a.jpg,"

    def test_write_read_round_trip(self, tmp_path):
        dets = [
            det("b.jpg", "D10", (5.6, 0, 20.2, 10), 0.8),
            det("a.jpg", "D00", (0, 0, 10, 10), 0.5),
            det("a.jpg", "D40", (30, 30, 40, 40), 0.9),
        ]
        path = tmp_path / "sub.txt"
        assert write_submission(dets, path) == 2
        assert read_submission(path) == submission_rows(dets)

    def test_write_is_byte_deterministic(self, tmp_path):
        dets = [det("a.jpg", "D20", (1.5, 2.5, 30.5, 40.5), 0.5)]
        first, second = tmp_path / "one.txt", tmp_path / "two.txt"
        write_submission(dets, first)
        write_submission(dets, second)
        assert first.read_bytes() == second.read_bytes() == b"a.jpg,D20 2 3 31 41\n"

    def test_read_rejects_missing_comma(self, tmp_path):
        path = tmp_path / "sub.txt"
        path.write_text("imagejpg D20 0 0 10 10\n")
        with pytest.raises(SchemaError, match="line 1"):
            read_submission(path)

    def test_read_rejects_partial_quintuple(self, tmp_path):
        path = tmp_path / "sub.txt"
        path.write_text("a.jpg,D20 0 0 10\n")
        with pytest.raises(SchemaError, match="quintuple"):
            read_submission(path)

    def test_read_rejects_non_integer_coordinate(self, tmp_path):
        path = tmp_path / "sub.txt"
        path.write_text("a.jpg,D20 0 0 10.5 10\n")
        with pytest.raises(SchemaError, match="non-integer"):
            read_submission(path)

    def test_read_keeps_unknown_tokens_verbatim(self, tmp_path):
        path = tmp_path / "sub.txt"
        path.write_text("a.jpg,7 0 0 10 10\n")
        (row,) = read_submission(path)
        assert row.predictions == (("7", 0, 0, 10, 10),)


class TestDecodeLabel:
    def test_code_tokens(self):
        assert decode_label("D20") == DamageClass("D20")

    def test_numeric_tokens(self):
        assert decode_label("3", NUMERIC_ENCODING) == DamageClass("D20")
        assert decode_label("1", NUMERIC_ENCODING) == DamageClass("D00")

    def test_unknown_token(self):
        with pytest.raises(EncodingError, match="'9'"):
            decode_label("9", NUMERIC_ENCODING)

    def test_encodings_cover_default_classes(self):
        assert set(CODE_ENCODING.values()) == {"D00", "D10", "D20", "D40"}
        assert set(NUMERIC_ENCODING.values()) == {"1", "2", "3", "4"}
