"""Detection interchange and submission file formats.

Two formats live here:

* **Interchange** — one JSON object per line (UTF-8, LF), fields
  ``image``, ``class``, ``bbox`` ([xmin, ymin, xmax, ymax], full precision)
  and ``score``.  Lossless carrier between pipeline stages.
* **Submission** — one text row per image:
  ``image_name,LABEL xmin ymin xmax ymax LABEL xmin ...`` with integer
  coordinates and quintuples in descending score order.  Label tokens are
  pluggable; the default writes the class code (``D20``), the alternate
  numbers the standard classes 1-4.

Both writers are byte-deterministic: fixed key order, LF newlines, no
timestamps, locale-independent number formatting.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .annotations import DEFAULT_CLASSES, BoundingBox, DamageClass
from .errors import EncodingError, InvariantError, ParseError, SchemaError
from .metrics import Detection

#: Default submission label encoding: the class code itself.
CODE_ENCODING: Mapping[DamageClass, str] = {cls: cls.code for cls in DEFAULT_CLASSES}

#: Alternate encoding: standard classes numbered 1..4 in D00, D10, D20, D40 order.
NUMERIC_ENCODING: Mapping[DamageClass, str] = {
    cls: str(i) for i, cls in enumerate(DEFAULT_CLASSES, start=1)
}


@dataclass(frozen=True)
class SubmissionRow:
    """One image's serialized predictions: (label token, integer box) quintuples."""

    image_name: str
    predictions: tuple[tuple[str, int, int, int, int], ...]


def read_detections(path: str | Path) -> list[Detection]:
    """Parse an interchange file into detections, preserving file order.

    Raises ParseError (bad JSON), SchemaError (missing/mistyped fields) or
    InvariantError (impossible box or score), each naming the offending line.
    """
    detections: list[Detection] = []
    text = Path(path).read_text(encoding="utf-8")
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ParseError(f"{path}: line {lineno}: invalid JSON: {exc.msg}") from exc
        if not isinstance(obj, dict):
            raise SchemaError(f"{path}: line {lineno}: expected a JSON object")
        try:
            image = obj["image"]
            code = obj["class"]
            bbox = obj["bbox"]
            score = obj["score"]
        except KeyError as exc:
            raise SchemaError(f"{path}: line {lineno}: missing field {exc.args[0]!r}") from exc
        if not isinstance(image, str) or not isinstance(code, str):
            raise SchemaError(f"{path}: line {lineno}: 'image' and 'class' must be strings")
        if not isinstance(bbox, list) or len(bbox) != 4 or not all(
            isinstance(v, (int, float)) and not isinstance(v, bool) for v in bbox
        ):
            raise SchemaError(f"{path}: line {lineno}: 'bbox' must be [xmin, ymin, xmax, ymax]")
        if not isinstance(score, (int, float)) or isinstance(score, bool):
            raise SchemaError(f"{path}: line {lineno}: 'score' must be a number")
        try:
            detections.append(
                Detection(image, DamageClass(code), BoundingBox(*bbox), float(score))
            )
        except InvariantError as exc:
            raise InvariantError(f"{path}: line {lineno}: {exc}") from exc
    return detections


def detections_jsonl(detections: Iterable[Detection]) -> str:
    """Serialize detections to interchange text (one JSON object per line)."""
    lines = []
    for det in detections:
        box = det.box
        lines.append(
            json.dumps(
                {
                    "image": det.image_id,
                    "class": det.damage_class.code,
                    "bbox": [box.xmin, box.ymin, box.xmax, box.ymax],
                    "score": det.score,
                }
            )
        )
    return "".join(line + "\n" for line in lines)


def write_detections(detections: Iterable[Detection], path: str | Path) -> int:
    """Write detections in interchange format; returns the line count."""
    payload = detections_jsonl(detections)
    Path(path).write_text(payload, encoding="utf-8", newline="\n")
    return payload.count("\n")


def _round_half_away(value: float) -> int:
    """Round to the nearest integer, halves away from zero."""
    if value >= 0:
        return int(math.floor(value + 0.5))
    return -int(math.floor(-value + 0.5))


def _encode_label(damage_class: DamageClass, encoding: Mapping[DamageClass, str]) -> str:
    try:
        return encoding[damage_class]
    except KeyError:
        raise EncodingError(
            f"label encoding has no token for class {damage_class.code!r}"
        ) from None


def submission_rows(
    detections: Iterable[Detection],
    label_encoding: Mapping[DamageClass, str] = CODE_ENCODING,
    image_names: Iterable[str] | None = None,
) -> list[SubmissionRow]:
    """Assemble rows: one per image, quintuples in descending score order.

    By default only images with detections appear; pass image_names to emit
    a (possibly empty) row for every listed image as well.  Rows are ordered
    by image name; score ties keep input order.
    """
    by_image: dict[str, list[Detection]] = {}
    for det in detections:
        by_image.setdefault(det.image_id, []).append(det)
    names = set(by_image)
    if image_names is not None:
        names.update(image_names)
    rows = []
    for name in sorted(names):
        ranked = sorted(
            enumerate(by_image.get(name, [])), key=lambda pair: (-pair[1].score, pair[0])
        )
        rows.append(
            SubmissionRow(
                name,
                tuple(
                    (
                        _encode_label(det.damage_class, label_encoding),
                        _round_half_away(det.box.xmin),
                        _round_half_away(det.box.ymin),
                        _round_half_away(det.box.xmax),
                        _round_half_away(det.box.ymax),
                    )
                    for _, det in ranked
                ),
            )
        )
    return rows


def submission_text(rows: Sequence[SubmissionRow]) -> str:
    """Serialize submission rows to their wire form (LF-terminated lines)."""
    lines = []
    for row in rows:
        fields = " ".join(
            " ".join((label, str(x1), str(y1), str(x2), str(y2)))
            for label, x1, y1, x2, y2 in row.predictions
        )
        lines.append(f"{row.image_name},{fields}")
    return "".join(line + "\n" for line in lines)


def write_submission(
    detections: Iterable[Detection],
    path: str | Path,
    label_encoding: Mapping[DamageClass, str] = CODE_ENCODING,
    image_names: Iterable[str] | None = None,
) -> int:
    """Write a submission file; returns the row count.

    Row format: ``image_name,LABEL xmin ymin xmax ymax ...`` with integer
    coordinates (rounded half away from zero) and LF newlines.
    """
    rows = submission_rows(detections, label_encoding, image_names)
    Path(path).write_text(submission_text(rows), encoding="utf-8", newline="\n")
    return len(rows)


def read_submission(path: str | Path) -> list[SubmissionRow]:
    """Parse a submission file back into rows (label tokens kept verbatim)."""
    rows = []
    text = Path(path).read_text(encoding="utf-8")
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line:
            continue
        name, sep, rest = line.partition(",")
        if not sep or not name:
            raise SchemaError(f"{path}: line {lineno}: expected 'image_name,predictions'")
        tokens = rest.split()
        if len(tokens) % 5 != 0:
            raise SchemaError(
                f"{path}: line {lineno}: prediction fields not a whole number of "
                f"'LABEL xmin ymin xmax ymax' quintuples ({len(tokens)} tokens)"
            )
        predictions = []
        for i in range(0, len(tokens), 5):
            label = tokens[i]
            try:
                coords = [int(t) for t in tokens[i + 1 : i + 5]]
            except ValueError as exc:
                raise SchemaError(
                    f"{path}: line {lineno}: non-integer coordinate in quintuple {i // 5 + 1}"
                ) from exc
            predictions.append((label, *coords))
        rows.append(SubmissionRow(name, tuple(predictions)))
    return rows


def decode_label(token: str, label_encoding: Mapping[DamageClass, str] = CODE_ENCODING) -> DamageClass:
    """Invert a label encoding for one token."""
    for damage_class, candidate in label_encoding.items():
        if candidate == token:
            return damage_class
    raise EncodingError(f"token {token!r} not produced by this label encoding")
