"""IoU computation, greedy matching, F1 aggregation, and average precision."""

from __future__ import annotations

from bisect import bisect_left
from collections import defaultdict
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

from .annotations import DEFAULT_CLASSES, BoundingBox, DamageClass, ImageRecord, normalize_labels
from .errors import DatasetError, InvariantError

# IoU sweep used for the .50:.95 average-precision metric.
COCO_IOU_THRESHOLDS: tuple[float, ...] = tuple(t / 100 for t in range(50, 100, 5))

MICRO = "micro"
MACRO = "macro"
_RECALL_POINTS = 101


@dataclass(frozen=True)
class Detection:
    """A predicted box with class label and confidence score."""

    image_id: str
    damage_class: DamageClass
    box: BoundingBox
    score: float

    def __post_init__(self) -> None:
        if not 0.0 <= self.score <= 1.0:
            raise InvariantError(
                f"{self.image_id}: detection score must be in [0, 1], got {self.score}"
            )


@dataclass(frozen=True)
class EvalConfig:
    """Evaluation knobs: IoU threshold, averaging mode, class whitelist.

    ``averaging`` is ``"micro"`` (pool tp/fp/fn over all images, the default)
    or ``"macro"`` (average per-image F1; images with neither ground truth nor
    detections carry no signal and are left out of the mean, so a perfect
    detector scores 1.0 in both modes).  ``classes=None`` evaluates every
    class present instead of the standard four.
    """

    iou_threshold: float = 0.5
    averaging: str = MICRO
    classes: tuple[DamageClass, ...] | None = DEFAULT_CLASSES

    def __post_init__(self) -> None:
        if not 0.0 < self.iou_threshold <= 1.0:
            raise InvariantError(f"iou_threshold must be in (0, 1], got {self.iou_threshold}")
        if self.averaging not in (MICRO, MACRO):
            raise InvariantError(f"averaging must be {MICRO!r} or {MACRO!r}, got {self.averaging!r}")
        if self.classes is not None:
            object.__setattr__(self, "classes", tuple(self.classes))
            if not self.classes:
                raise InvariantError("class whitelist must be non-empty (use None for all classes)")


@dataclass(frozen=True)
class MatchOutcome:
    """Result of matching one image: matched pairs and the leftovers."""

    matches: tuple[tuple[int, int, float], ...]  # (detection idx, gt idx, iou)
    unmatched_detections: tuple[int, ...]
    unmatched_ground_truth: tuple[int, ...]

    @property
    def tp(self) -> int:
        return len(self.matches)

    @property
    def fp(self) -> int:
        return len(self.unmatched_detections)

    @property
    def fn(self) -> int:
        return len(self.unmatched_ground_truth)


def iou(a: BoundingBox, b: BoundingBox) -> float:
    """Continuous-area intersection over union; 0 for disjoint boxes."""
    inter_w = min(a.xmax, b.xmax) - max(a.xmin, b.xmin)
    inter_h = min(a.ymax, b.ymax) - max(a.ymin, b.ymin)
    if inter_w <= 0 or inter_h <= 0:
        return 0.0
    inter = inter_w * inter_h
    return inter / (a.area + b.area - inter)


def match_detections(
    dets: Sequence[Detection], record: ImageRecord, config: EvalConfig | None = None
) -> MatchOutcome:
    """Greedily match one image's detections against its ground truth.

    Detections are processed in descending score order (ties by input order).
    Each claims the unclaimed same-class ground-truth box of maximal IoU,
    provided that IoU reaches the threshold; IoU ties go to the lower
    ground-truth index.  Unmatched detections are false positives, unclaimed
    ground-truth boxes are false negatives.

    Raises:
        DatasetError: a detection carries a different image id than ``record``.
    """
    config = config or EvalConfig()
    for det in dets:
        if det.image_id != record.image_id:
            raise DatasetError(
                f"detection for {det.image_id!r} evaluated against "
                f"ground truth of {record.image_id!r}"
            )

    order = sorted(range(len(dets)), key=lambda i: (-dets[i].score, i))
    claimed: set[int] = set()
    matches: list[tuple[int, int, float]] = []
    for det_idx in order:
        det = dets[det_idx]
        best_gt = -1
        best_iou = 0.0
        for gt_idx, (damage_class, gt_box) in enumerate(record.ground_truth):
            if gt_idx in claimed or damage_class != det.damage_class:
                continue
            overlap = iou(det.box, gt_box)
            if overlap > best_iou:  # strict: IoU ties keep the lower gt index
                best_gt, best_iou = gt_idx, overlap
        if best_gt >= 0 and best_iou >= config.iou_threshold:
            claimed.add(best_gt)
            matches.append((det_idx, best_gt, best_iou))

    matched_dets = {m[0] for m in matches}
    return MatchOutcome(
        matches=tuple(matches),
        unmatched_detections=tuple(i for i in range(len(dets)) if i not in matched_dets),
        unmatched_ground_truth=tuple(
            i for i in range(len(record.ground_truth)) if i not in claimed
        ),
    )


def f1_from_counts(tp: int, fp: int, fn: int) -> tuple[float, float, float]:
    """Precision, recall, and F1 from counts, with the 0/0 -> 0 convention.

    F1 is computed by the closed form 2*tp / (2*tp + fp + fn), which is
    exactly the harmonic mean of precision and recall whenever the latter is
    defined.
    """
    if tp < 0 or fp < 0 or fn < 0:
        raise ValueError(f"counts must be non-negative: tp={tp} fp={fp} fn={fn}")
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * tp / (2 * tp + fp + fn) if tp + fp + fn else 0.0
    return precision, recall, f1


@dataclass(frozen=True)
class ClassReport:
    """Pooled counts and scores for a single damage class."""

    tp: int
    fp: int
    fn: int
    precision: float
    recall: float
    f1: float

    @classmethod
    def from_counts(cls, tp: int, fp: int, fn: int) -> "ClassReport":
        precision, recall, f1 = f1_from_counts(tp, fp, fn)
        return cls(tp, fp, fn, precision, recall, f1)

    def to_dict(self) -> dict:
        return {
            "tp": self.tp,
            "fp": self.fp,
            "fn": self.fn,
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
        }


@dataclass(frozen=True)
class EvalReport:
    """Dataset-level tallies plus per-class sub-reports.

    ``tp``/``fp``/``fn`` are always the pooled totals.  Under micro averaging
    the scores derive from those totals; under macro averaging they are the
    per-image means.  ``ap_table`` maps class code to AP(.50:.95) when
    requested; classes without ground truth are absent from it.
    """

    tp: int
    fp: int
    fn: int
    precision: float
    recall: float
    f1: float
    averaging: str
    per_class: Mapping[str, ClassReport]
    ap_table: Mapping[str, float] | None = None

    def to_dict(self) -> dict:
        return {
            "tp": self.tp,
            "fp": self.fp,
            "fn": self.fn,
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "averaging": self.averaging,
            "per_class": {code: report.to_dict() for code, report in self.per_class.items()},
            "ap_table": dict(self.ap_table) if self.ap_table is not None else None,
        }


def evaluate(
    dets: Sequence[Detection],
    records: Sequence[ImageRecord],
    config: EvalConfig | None = None,
    with_ap: bool = False,
) -> EvalReport:
    """Score detections against ground truth and build the full report.

    Both sides are first restricted to ``config.classes`` (when set).  Images
    are matched independently; the per-class sub-reports re-run the matching
    restricted to one class, which decomposes the same totals because matching
    never crosses classes.

    Raises:
        DatasetError: some detection references an image id absent from
            ``records``.
    """
    config = config or EvalConfig()
    records = list(records)
    by_image = _group_by_image(dets, records)

    allowed = frozenset(config.classes) if config.classes is not None else None
    total_tp = total_fp = total_fn = 0
    image_scores: list[tuple[float, float, float]] = []
    for record in records:
        target = record if allowed is None else normalize_labels(record, allowed)[0]
        image_dets = [
            det
            for det in by_image.get(record.image_id, [])
            if allowed is None or det.damage_class in allowed
        ]
        outcome = match_detections(image_dets, target, config)
        total_tp += outcome.tp
        total_fp += outcome.fp
        total_fn += outcome.fn
        if outcome.tp or outcome.fp or outcome.fn:
            image_scores.append(f1_from_counts(outcome.tp, outcome.fp, outcome.fn))

    if config.averaging == MICRO:
        precision, recall, f1 = f1_from_counts(total_tp, total_fp, total_fn)
    else:
        n = len(image_scores)
        precision = sum(s[0] for s in image_scores) / n if n else 0.0
        recall = sum(s[1] for s in image_scores) / n if n else 0.0
        f1 = sum(s[2] for s in image_scores) / n if n else 0.0

    codes = _report_codes(config, dets, records)
    per_class: dict[str, ClassReport] = {}
    for code in codes:
        per_class[code] = _class_report(by_image, records, DamageClass(code), config)

    ap_table: dict[str, float] | None = None
    if with_ap:
        ap_table = {}
        for code in codes:
            ap = average_precision(dets, records, DamageClass(code))
            if ap is not None:
                ap_table[code] = ap

    return EvalReport(
        tp=total_tp,
        fp=total_fp,
        fn=total_fn,
        precision=precision,
        recall=recall,
        f1=f1,
        averaging=config.averaging,
        per_class=per_class,
        ap_table=ap_table,
    )


def average_precision(
    dets: Sequence[Detection],
    records: Sequence[ImageRecord],
    damage_class: DamageClass,
    thresholds: Sequence[float] = COCO_IOU_THRESHOLDS,
) -> float | None:
    """AP for one class, averaged over the given IoU thresholds.

    Detections of the class are ranked by descending score (ties by input
    order); at each threshold the ranked greedy matching yields a
    precision-recall curve, scored by 101-point interpolation.  Returns None
    when the class has no ground-truth instances (AP undefined).

    Raises:
        ValueError: empty thresholds, or a threshold outside (0, 1].
        DatasetError: detections reference unknown image ids.
    """
    thresholds = list(thresholds)
    if not thresholds:
        raise ValueError("thresholds must be non-empty")
    if any(not 0.0 < t <= 1.0 for t in thresholds):
        raise ValueError(f"thresholds must lie in (0, 1]: {thresholds}")
    records = list(records)
    _group_by_image(dets, records)  # unknown-id check

    gt_boxes = {
        record.image_id: [box for cls, box in record.ground_truth if cls == damage_class]
        for record in records
    }
    npos = sum(len(boxes) for boxes in gt_boxes.values())
    if npos == 0:
        return None

    ranked = sorted(
        (det for det in dets if det.damage_class == damage_class),
        key=lambda det: -det.score,
    )
    total = sum(_ap_at_threshold(ranked, gt_boxes, npos, t) for t in thresholds)
    return total / len(thresholds)


def _ap_at_threshold(
    ranked: Sequence[Detection],
    gt_boxes: Mapping[str, list[BoundingBox]],
    npos: int,
    threshold: float,
) -> float:
    claimed: dict[str, set[int]] = defaultdict(set)
    recalls: list[float] = []
    precisions: list[float] = []
    tp_cum = 0
    for rank, det in enumerate(ranked, start=1):
        boxes = gt_boxes.get(det.image_id, [])
        taken = claimed[det.image_id]
        best_idx = -1
        best_iou = 0.0
        for idx, box in enumerate(boxes):
            if idx in taken:
                continue
            overlap = iou(det.box, box)
            if overlap > best_iou:
                best_idx, best_iou = idx, overlap
        if best_idx >= 0 and best_iou >= threshold:
            taken.add(best_idx)
            tp_cum += 1
        recalls.append(tp_cum / npos)
        precisions.append(tp_cum / rank)

    # Interpolated precision: best precision at any recall >= r.
    suffix_max = precisions[:]
    for i in range(len(suffix_max) - 2, -1, -1):
        suffix_max[i] = max(suffix_max[i], suffix_max[i + 1])
    total = 0.0
    for i in range(_RECALL_POINTS):
        r = i / (_RECALL_POINTS - 1)
        j = bisect_left(recalls, r)
        total += suffix_max[j] if j < len(suffix_max) else 0.0
    return total / _RECALL_POINTS


def format_report(report: EvalReport) -> str:
    """Render a report as a fixed-width human-readable table."""
    header = f"{'class':<10}{'tp':>7}{'fp':>7}{'fn':>7}{'precision':>11}{'recall':>9}{'f1':>9}"
    lines = [header, "-" * len(header)]

    def row(label: str, tp: int, fp: int, fn: int, p: float, r: float, f1: float) -> str:
        return f"{label:<10}{tp:>7}{fp:>7}{fn:>7}{p:>11.4f}{r:>9.4f}{f1:>9.4f}"

    lines.append(
        row("overall", report.tp, report.fp, report.fn, report.precision, report.recall, report.f1)
    )
    for code, sub in report.per_class.items():
        lines.append(row(code, sub.tp, sub.fp, sub.fn, sub.precision, sub.recall, sub.f1))
    lines.append(f"averaging: {report.averaging}")
    if report.ap_table is not None:
        pairs = "  ".join(f"{code}={ap:.4f}" for code, ap in report.ap_table.items())
        lines.append(f"AP(.50:.95): {pairs if pairs else 'n/a'}")
    return "\n".join(lines)


def _group_by_image(
    dets: Iterable[Detection], records: Sequence[ImageRecord]
) -> dict[str, list[Detection]]:
    known = {record.image_id for record in records}
    groups: dict[str, list[Detection]] = defaultdict(list)
    unknown: set[str] = set()
    for det in dets:
        if det.image_id not in known:
            unknown.add(det.image_id)
        groups[det.image_id].append(det)
    if unknown:
        listing = ", ".join(sorted(unknown))
        raise DatasetError(f"detections reference unknown image ids: {listing}")
    return groups


def _report_codes(
    config: EvalConfig, dets: Sequence[Detection], records: Sequence[ImageRecord]
) -> list[str]:
    if config.classes is not None:
        return [cls.code for cls in config.classes]
    present = {det.damage_class.code for det in dets}
    for record in records:
        present.update(cls.code for cls, _ in record.ground_truth)
    return sorted(present)


def _class_report(
    by_image: Mapping[str, list[Detection]],
    records: Sequence[ImageRecord],
    damage_class: DamageClass,
    config: EvalConfig,
) -> ClassReport:
    tp = fp = fn = 0
    for record in records:
        target, _ = normalize_labels(record, frozenset([damage_class]))
        image_dets = [
            det for det in by_image.get(record.image_id, []) if det.damage_class == damage_class
        ]
        outcome = match_detections(image_dets, target, config)
        tp += outcome.tp
        fp += outcome.fp
        fn += outcome.fn
    return ClassReport.from_counts(tp, fp, fn)
