"""Domain types and VOC-style XML parsing for road damage annotations."""

from __future__ import annotations

import xml.etree.ElementTree as ET
from dataclasses import dataclass, replace
from enum import Enum
from typing import Iterable

from .errors import InvariantError, ParseError, SchemaError

# The four damage codes scored by the benchmark.  Any other code (D01, D11,
# D43, D44, ...) is carried verbatim and only removed by normalize_labels.
CLASS_NAMES: dict[str, str] = {
    "D00": "Longitudinal Crack",
    "D10": "Transverse Crack",
    "D20": "Alligator Crack",
    "D40": "Pothole",
}


@dataclass(frozen=True)
class DamageClass:
    """A damage label identified by its code string."""

    code: str

    @property
    def human_name(self) -> str | None:
        """Human-readable name for the four standard codes, else None."""
        return CLASS_NAMES.get(self.code)

    @property
    def is_standard(self) -> bool:
        return self.code in CLASS_NAMES

    def __str__(self) -> str:
        return self.code


DEFAULT_CLASSES: tuple[DamageClass, ...] = tuple(DamageClass(c) for c in CLASS_NAMES)


class Country(Enum):
    CZ = "CZ"
    IN = "IN"
    JP = "JP"

    @classmethod
    def from_filename(cls, filename: str) -> "Country":
        """Derive the country from the image filename prefix."""
        for prefix, country in _COUNTRY_PREFIXES.items():
            if filename.startswith(prefix):
                return country
        raise SchemaError(
            f"cannot derive country from filename {filename!r}; "
            "expected a Czech_/India_/Japan_ prefix"
        )


_COUNTRY_PREFIXES = {"Czech_": Country.CZ, "India_": Country.IN, "Japan_": Country.JP}


@dataclass(frozen=True)
class BoundingBox:
    """Axis-aligned box in pixel coordinates with strictly positive area."""

    xmin: float
    ymin: float
    xmax: float
    ymax: float

    def __post_init__(self) -> None:
        if self.xmin < 0 or self.ymin < 0:
            raise InvariantError(f"box coordinates must be non-negative: {self.as_tuple()}")
        if self.xmax <= self.xmin or self.ymax <= self.ymin:
            raise InvariantError(f"box must have positive area: {self.as_tuple()}")

    @property
    def area(self) -> float:
        return (self.xmax - self.xmin) * (self.ymax - self.ymin)

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.xmin, self.ymin, self.xmax, self.ymax)


@dataclass(frozen=True)
class ImageRecord:
    """One annotated image: id, country, dimensions, and ground-truth boxes."""

    image_id: str
    country: Country
    width: int
    height: int
    ground_truth: tuple[tuple[DamageClass, BoundingBox], ...] = ()

    def __post_init__(self) -> None:
        if self.width <= 0 or self.height <= 0:
            raise InvariantError(
                f"{self.image_id}: image dimensions must be positive, "
                f"got {self.width}x{self.height}"
            )
        for _, box in self.ground_truth:
            # Boxes touching the border (coordinate == width/height) are legal.
            if box.xmax > self.width or box.ymax > self.height:
                raise InvariantError(
                    f"{self.image_id}: box {box.as_tuple()} exceeds image bounds "
                    f"{self.width}x{self.height}"
                )


def parse_voc_annotation(xml_text: str, country: Country | None = None) -> ImageRecord:
    """Parse one VOC-style annotation document into an ImageRecord.

    Object order is preserved and raw labels are kept untranslated; use
    normalize_labels to reduce to a class whitelist.  Unknown elements are
    ignored.

    Args:
        xml_text: UTF-8 XML text with filename, size, and object elements.
        country: optional override; by default the country is derived from
            the filename prefix.

    Raises:
        ParseError: the XML itself is malformed (message carries line/column).
        SchemaError: a required element is missing or not a number.
        InvariantError: a box is inverted, empty, or outside the image.
    """
    try:
        root = ET.fromstring(xml_text)
    except ET.ParseError as exc:
        line, column = exc.position
        raise ParseError(
            f"malformed annotation XML at line {line}, column {column}: {exc}"
        ) from exc

    filename = _required_text(root, "filename")
    size = root.find("size")
    if size is None:
        raise SchemaError("annotation is missing required element: size")
    width = _required_int(size, "width", "size")
    height = _required_int(size, "height", "size")

    entries: list[tuple[DamageClass, BoundingBox]] = []
    for obj in root.findall("object"):
        name = _required_text(obj, "name", "object")
        bndbox = obj.find("bndbox")
        if bndbox is None:
            raise SchemaError(f"object {name!r} in {filename!r} is missing required element: bndbox")
        coords = [_required_float(bndbox, tag, "bndbox") for tag in ("xmin", "ymin", "xmax", "ymax")]
        try:
            box = BoundingBox(*coords)
        except InvariantError as exc:
            raise InvariantError(f"{filename}: {exc}") from exc
        entries.append((DamageClass(name), box))

    if country is None:
        country = Country.from_filename(filename)
    return ImageRecord(filename, country, width, height, tuple(entries))


def normalize_labels(
    record: ImageRecord, whitelist: Iterable[DamageClass] = DEFAULT_CLASSES
) -> tuple[ImageRecord, int]:
    """Drop ground-truth entries whose class is not in the whitelist.

    Returns the filtered record and the number of dropped annotations.
    Idempotent; unknown labels are never fatal.
    """
    allowed = frozenset(whitelist)
    if not allowed:
        raise ValueError("whitelist must not be empty")
    kept = tuple(entry for entry in record.ground_truth if entry[0] in allowed)
    dropped = len(record.ground_truth) - len(kept)
    if dropped == 0:
        return record, 0
    return replace(record, ground_truth=kept), dropped


def to_voc_xml(record: ImageRecord) -> str:
    """Serialize a record back to the VOC layout; re-parsing yields an equal record."""
    root = ET.Element("annotation")
    ET.SubElement(root, "filename").text = record.image_id
    size = ET.SubElement(root, "size")
    ET.SubElement(size, "width").text = str(record.width)
    ET.SubElement(size, "height").text = str(record.height)
    ET.SubElement(size, "depth").text = "3"
    for damage_class, box in record.ground_truth:
        obj = ET.SubElement(root, "object")
        ET.SubElement(obj, "name").text = damage_class.code
        bndbox = ET.SubElement(obj, "bndbox")
        for tag, value in zip(("xmin", "ymin", "xmax", "ymax"), box.as_tuple()):
            ET.SubElement(bndbox, tag).text = _format_coord(value)
    ET.indent(root)
    return ET.tostring(root, encoding="unicode") + "\n"


def _format_coord(value: float) -> str:
    # Integral coordinates serialize without a decimal point so that stub
    # fixtures look like ordinary VOC files; repr() round-trips the rest.
    return str(int(value)) if value == int(value) else repr(value)


def _required_text(element: ET.Element, tag: str, context: str | None = None) -> str:
    value = element.findtext(tag)
    if value is None or not value.strip():
        where = f"{context}/{tag}" if context else tag
        raise SchemaError(f"annotation is missing required element: {where}")
    return value.strip()


def _required_int(element: ET.Element, tag: str, context: str) -> int:
    text = _required_text(element, tag, context)
    try:
        return int(float(text))
    except ValueError as exc:
        raise SchemaError(f"element {context}/{tag} is not a number: {text!r}") from exc


def _required_float(element: ET.Element, tag: str, context: str) -> float:
    text = _required_text(element, tag, context)
    try:
        return float(text)
    except ValueError as exc:
        raise SchemaError(f"element {context}/{tag} is not a number: {text!r}") from exc
