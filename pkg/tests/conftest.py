"""Shared fixtures: annotation XML builders and fixture trees."""

from __future__ import annotations

import random
from pathlib import Path

import pytest

from rdd_bench.annotations import BoundingBox, Country, DamageClass, ImageRecord
from rdd_bench.dataset import DatasetIndex
from rdd_bench.metrics import Detection


def make_voc_xml(
    filename: str,
    width: int = 600,
    height: int = 600,
    objects: tuple = (),
) -> str:
    """Build a VOC-style annotation document from literal values.

    The XML is assembled by string formatting on purpose, so fixture content
    never depends on the serializer under test.
    """
    parts = [
        "<annotation>\n"
        "  <folder>damage</folder>\n"
        f"  <filename>{filename}</filename>\n"
        "  <size>\n"
        f"    <width>{width}</width>\n"
        f"    <height>{height}</height>\n"
        "    <depth>3</depth>\n"
        "  </size>\n"
        "  <segmented>0</segmented>\n"
    ]
    for code, x1, y1, x2, y2 in objects:
        parts.append(
            "  <object>\n"
            f"    <name>{code}</name>\n"
            "    <pose>Unspecified</pose>\n"
            "    <truncated>0</truncated>\n"
            "    <difficult>0</difficult>\n"
            "    <bndbox>\n"
            f"      <xmin>{x1}</xmin>\n"
            f"      <ymin>{y1}</ymin>\n"
            f"      <xmax>{x2}</xmax>\n"
            f"      <ymax>{y2}</ymax>\n"
            "    </bndbox>\n"
            "  </object>\n"
        )
    parts.append("</annotation>\n")
    return "".join(parts)


# Six images with hand-countable annotations, used by dataset and CLI tests.
MINI_TREE = {
    "Czech": [
        ("Czech_000001.jpg", (("D00", 10, 10, 110, 90),)),
        ("Czech_000002.jpg", (("D20", 50, 60, 200, 210), ("D40", 300, 310, 420, 430))),
    ],
    "India": [
        ("India_000001.jpg", (("D40", 30, 40, 150, 160),)),
        ("India_000002.jpg", ()),
    ],
    "Japan": [
        ("Japan_000001.jpg", (("D10", 5, 5, 95, 95), ("D43", 200, 200, 300, 300))),
        ("Japan_000002.jpg", (("D00", 0, 0, 600, 600),)),
    ],
}

# Hand counts for MINI_TREE, kept next to it so drift is obvious.
MINI_IMAGES = {"CZ": 2, "IN": 2, "JP": 2}
MINI_ANNOTATIONS = {
    ("CZ", "D00"): 1,
    ("CZ", "D20"): 1,
    ("CZ", "D40"): 1,
    ("IN", "D40"): 1,
    ("JP", "D10"): 1,
    ("JP", "D43"): 1,
    ("JP", "D00"): 1,
}


def write_mini_tree(root: Path) -> None:
    for country_dir, files in MINI_TREE.items():
        sub = root / country_dir
        sub.mkdir(parents=True)
        for name, objects in files:
            xml = make_voc_xml(name, objects=objects)
            (sub / name.replace(".jpg", ".xml")).write_text(xml, encoding="utf-8")


@pytest.fixture
def mini_root(tmp_path: Path) -> Path:
    write_mini_tree(tmp_path)
    return tmp_path


@pytest.fixture(scope="session")
def full_scale_root(tmp_path_factory: pytest.TempPathFactory) -> Path:
    """Annotation tree at the benchmark's full size: 21041 files across three countries."""
    root = tmp_path_factory.mktemp("full-scale")
    for country_dir, count in (("Czech", 2829), ("India", 7706), ("Japan", 10506)):
        sub = root / country_dir
        sub.mkdir()
        for i in range(1, count + 1):
            name = f"{country_dir}_{i:06d}"
            (sub / f"{name}.xml").write_text(
                make_voc_xml(f"{name}.jpg"), encoding="utf-8"
            )
    return root


@pytest.fixture(scope="session")
def czech_index() -> DatasetIndex:
    """2829 Czech image records, the benchmark's full CZ image count."""
    records = [
        ImageRecord(f"Czech_{i:06d}.jpg", Country.CZ, 600, 600, ())
        for i in range(1, 2830)
    ]
    return DatasetIndex.from_records(records)


def random_record(
    rng: random.Random,
    image_id: str,
    max_boxes: int = 5,
    size: int = 600,
    codes: tuple[str, ...] = ("D00", "D10", "D20", "D40"),
) -> ImageRecord:
    """A record with random boxes anywhere in the image."""
    boxes = []
    for _ in range(rng.randint(0, max_boxes)):
        x1 = rng.randint(0, size - 20)
        y1 = rng.randint(0, size - 20)
        x2 = rng.randint(x1 + 10, size)
        y2 = rng.randint(y1 + 10, size)
        boxes.append((DamageClass(rng.choice(codes)), BoundingBox(x1, y1, x2, y2)))
    return ImageRecord(image_id, Country.from_filename(image_id), size, size, tuple(boxes))


def separated_records(
    rng: random.Random, n_images: int, min_boxes: int = 1, max_boxes: int = 6
) -> list[ImageRecord]:
    """Records whose boxes sit on a coarse grid, far apart and 40px or larger.

    With at most one box per 120px cell and 40-60px sides, any two boxes are
    at least 50px apart, so moderate coordinate jitter can never make distinct
    boxes overlap.
    """
    cells = [(cx, cy) for cx in range(5) for cy in range(5)]
    records = []
    for i in range(n_images):
        ground_truth = []
        for cx, cy in rng.sample(cells, rng.randint(min_boxes, max_boxes)):
            w = rng.randint(40, 60)
            h = rng.randint(40, 60)
            x1 = cx * 120 + rng.randint(10, 20)
            y1 = cy * 120 + rng.randint(10, 20)
            ground_truth.append(
                (DamageClass(rng.choice(("D00", "D10", "D20", "D40"))),
                 BoundingBox(x1, y1, x1 + w, y1 + h))
            )
        records.append(
            ImageRecord(f"Japan_{i:06d}.jpg", Country.JP, 600, 600, tuple(ground_truth))
        )
    return records


def echo_detections(records, score: float = 1.0) -> list[Detection]:
    """Ground truth replayed verbatim as detections."""
    return [
        Detection(record.image_id, damage_class, box, score)
        for record in records
        for damage_class, box in record.ground_truth
    ]
