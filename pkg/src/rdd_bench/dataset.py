"""Dataset scanning, deterministic stratified splits, and compositions."""

from __future__ import annotations

import hashlib
import json
import logging
from collections import Counter, defaultdict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from fractions import Fraction
from functools import cached_property
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .annotations import Country, ImageRecord, parse_voc_annotation
from .errors import (
    DatasetError,
    EmptyDatasetError,
    InvariantError,
    ParseError,
    SchemaError,
    ToolkitError,
)

log = logging.getLogger(__name__)

SPLIT_NAMES = ("train", "val", "test")
DEFAULT_RATIOS = (0.80, 0.15, 0.05)


@dataclass(frozen=True)
class ScanSkip:
    """One annotation file that could not be indexed, with the reason."""

    path: str
    reason: str


@dataclass(frozen=True)
class DatasetIndex:
    """Immutable index of image records with per-country totals."""

    records: tuple[ImageRecord, ...]
    counts: Mapping[Country, int]
    skips: tuple[ScanSkip, ...] = ()

    def __post_init__(self) -> None:
        tally = Counter(record.country for record in self.records)
        if dict(tally) != dict(self.counts):
            raise InvariantError(
                f"per-country counts {dict(self.counts)} do not match records {dict(tally)}"
            )
        seen: set[str] = set()
        for record in self.records:
            if record.image_id in seen:
                raise DatasetError(f"duplicate image id in dataset: {record.image_id!r}")
            seen.add(record.image_id)

    @classmethod
    def from_records(
        cls, records: Iterable[ImageRecord], skips: Iterable[ScanSkip] = ()
    ) -> "DatasetIndex":
        """Build an index with records sorted by image id (the canonical order)."""
        ordered = tuple(sorted(records, key=lambda record: record.image_id))
        counts = dict(Counter(record.country for record in ordered))
        return cls(ordered, counts, tuple(skips))

    @cached_property
    def by_id(self) -> dict[str, ImageRecord]:
        return {record.image_id: record for record in self.records}

    def image_ids(self) -> list[str]:
        return [record.image_id for record in self.records]

    def __len__(self) -> int:
        return len(self.records)


def scan_dataset(root: str | Path, jobs: int = 1) -> DatasetIndex:
    """Index every VOC XML file found under ``root`` (searched recursively).

    Unreadable or invalid files are recorded as skips on the returned index
    rather than aborting the scan.  Files are merged in sorted image-id order,
    so the result is independent of filesystem enumeration order and of
    ``jobs``.

    Raises:
        DatasetError: ``root`` is not a directory, or ids collide.
        EmptyDatasetError: no XML files found, or every file was skipped.
    """
    root = Path(root)
    if not root.is_dir():
        raise DatasetError(f"annotation root is not a directory: {root}")
    paths = sorted(root.rglob("*.xml"))
    if not paths:
        raise EmptyDatasetError(f"no annotation XML files found under {root}")

    def load(path: Path) -> tuple[ImageRecord | None, ScanSkip | None]:
        try:
            return parse_voc_annotation(path.read_text(encoding="utf-8")), None
        except (ToolkitError, OSError, UnicodeDecodeError) as exc:
            return None, ScanSkip(str(path), str(exc))

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            outcomes = list(pool.map(load, paths))
    else:
        outcomes = [load(path) for path in paths]

    records = [record for record, _ in outcomes if record is not None]
    skips = [skip for _, skip in outcomes if skip is not None]
    if not records:
        raise EmptyDatasetError(f"all {len(paths)} annotation files under {root} were skipped")
    return DatasetIndex.from_records(records, skips)


@dataclass(frozen=True)
class SplitSpec:
    """Split ratios (train, val, test) plus the shuffle seed."""

    ratios: tuple[float, float, float] = DEFAULT_RATIOS
    seed: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "ratios", tuple(self.ratios))
        if len(self.ratios) != 3 or any(r < 0 for r in self.ratios):
            raise InvariantError(f"ratios must be three non-negative numbers: {self.ratios}")
        if abs(sum(self.ratios) - 1.0) > 1e-9:
            raise InvariantError(f"ratios must sum to 1: {self.ratios} (sum {sum(self.ratios)!r})")


@dataclass(frozen=True)
class SplitAssignment:
    """Disjoint train/val/test image-id lists plus the spec that produced them."""

    train: tuple[str, ...]
    val: tuple[str, ...]
    test: tuple[str, ...]
    provenance: SplitSpec

    def __post_init__(self) -> None:
        everything = self.train + self.val + self.test
        if len(set(everything)) != len(everything):
            raise InvariantError("split parts must be disjoint lists of unique image ids")

    def part(self, name: str) -> tuple[str, ...]:
        if name not in SPLIT_NAMES:
            raise ValueError(f"unknown split part {name!r}; expected one of {SPLIT_NAMES}")
        return getattr(self, name)

    def all_ids(self) -> set[str]:
        return set(self.train) | set(self.val) | set(self.test)


def largest_remainder_sizes(total: int, ratios: Sequence[float]) -> list[int]:
    """Apportion ``total`` into integer bins closest to the given ratios.

    Floors first, then hands the remainder to the largest fractional parts
    (ties broken by bin order), so the bins always sum to ``total`` exactly.
    Shares are compared in exact rational arithmetic so float rounding can
    neither reorder fractional parts nor manufacture ties.
    """
    shares = [Fraction(r) * total for r in ratios]
    floors = [int(share) for share in shares]
    remainder = total - sum(floors)
    by_fraction = sorted(
        range(len(ratios)), key=lambda i: (floors[i] - shares[i], i)
    )
    for i in by_fraction[:remainder]:
        floors[i] += 1
    return floors


def _shuffle_key(seed: int, image_id: str) -> bytes:
    return hashlib.sha256(f"{seed}:{image_id}".encode("utf-8")).digest()


def stratified_split(index: DatasetIndex, spec: SplitSpec) -> SplitAssignment:
    """Partition the index into train/val/test, stratified by country.

    Within each country the image ids are ordered by a keyed hash
    (SHA-256 over ``seed:image_id``) and cut at largest-remainder sizes.
    The hash ordering is the shuffle: it is platform-independent, free of
    hidden generator state, and a pure function of (sorted ids, spec), so
    identical inputs always yield identical assignments.
    """
    if not index.records:
        raise EmptyDatasetError("cannot split an empty dataset index")
    by_country: dict[Country, list[str]] = defaultdict(list)
    for record in index.records:
        by_country[record.country].append(record.image_id)

    parts: dict[str, list[str]] = {name: [] for name in SPLIT_NAMES}
    for country in sorted(by_country, key=lambda c: c.value):
        ids = sorted(by_country[country])
        order = sorted(ids, key=lambda i: (_shuffle_key(spec.seed, i), i))
        sizes = largest_remainder_sizes(len(order), spec.ratios)
        if any(size == 0 and ratio > 0 for size, ratio in zip(sizes, spec.ratios)):
            log.warning(
                "country %s has only %d images; split sizes %s leave some parts empty",
                country.value,
                len(order),
                sizes,
            )
        offset = 0
        for name, size in zip(SPLIT_NAMES, sizes):
            parts[name].extend(order[offset : offset + size])
            offset += size

    return SplitAssignment(
        train=tuple(sorted(parts["train"])),
        val=tuple(sorted(parts["val"])),
        test=tuple(sorted(parts["test"])),
        provenance=spec,
    )


def compose(assignment: SplitAssignment, parts: Iterable[str]) -> list[str]:
    """Concatenate the named split parts (in train, val, test order), de-duplicated."""
    requested = set(parts)
    if not requested:
        raise ValueError("parts must name at least one split")
    unknown = requested - set(SPLIT_NAMES)
    if unknown:
        raise ValueError(f"unknown split parts: {sorted(unknown)}; expected from {SPLIT_NAMES}")
    out: list[str] = []
    seen: set[str] = set()
    for name in SPLIT_NAMES:
        if name not in requested:
            continue
        for image_id in assignment.part(name):
            if image_id not in seen:
                seen.add(image_id)
                out.append(image_id)
    return out


def class_histogram(
    index: DatasetIndex, subset: Iterable[str]
) -> Counter[tuple[Country, str]]:
    """Count ground-truth annotations per (country, class code) over a subset.

    Every label present is counted, so totals always equal the summed
    ground-truth lengths; normalize records first for a whitelist-only view.
    Missing keys read as zero (the result is a Counter).
    """
    counts: Counter[tuple[Country, str]] = Counter()
    for image_id in subset:
        record = index.by_id.get(image_id)
        if record is None:
            raise DatasetError(f"unknown image id in subset: {image_id!r}")
        for damage_class, _ in record.ground_truth:
            counts[(record.country, damage_class.code)] += 1
    return counts


def split_document(assignment: SplitAssignment) -> dict:
    """The JSON-ready form of an assignment: ratios, seed, sorted id lists."""
    return {
        "ratios": list(assignment.provenance.ratios),
        "seed": assignment.provenance.seed,
        "train": sorted(assignment.train),
        "val": sorted(assignment.val),
        "test": sorted(assignment.test),
    }


def save_split(assignment: SplitAssignment, path: str | Path) -> None:
    """Write a split file: JSON with ratios, seed, and sorted id lists."""
    doc = split_document(assignment)
    Path(path).write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8", newline="\n")


def load_split(path: str | Path) -> SplitAssignment:
    """Read a split file written by save_split."""
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ParseError(f"malformed split file {path}: {exc}") from exc
    missing = [key for key in ("ratios", "seed", "train", "val", "test") if key not in doc]
    if missing:
        raise SchemaError(f"split file {path} is missing fields: {missing}")
    spec = SplitSpec(tuple(doc["ratios"]), int(doc["seed"]))
    return SplitAssignment(
        train=tuple(doc["train"]),
        val=tuple(doc["val"]),
        test=tuple(doc["test"]),
        provenance=spec,
    )
