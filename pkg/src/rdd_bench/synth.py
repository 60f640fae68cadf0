"""Synthetic detections derived from ground truth, with exact count accounting.

The generator applies three controlled corruptions to ground truth: coordinate
jitter, deterministic every-k-th box dropping, and far-field false positives.
Inside an analytically safe regime the resulting tp/fp/fn of an evaluation run
are a closed form of the parameters, which makes the pair
``perturb`` / ``expected_counts`` usable as an end-to-end oracle.
"""

from __future__ import annotations

import hashlib
import math
import random
from dataclasses import dataclass
from typing import Sequence

from .annotations import DEFAULT_CLASSES, BoundingBox, DamageClass, ImageRecord
from .errors import InvariantError
from .metrics import Detection, iou

_FP_ATTEMPTS = 100


@dataclass(frozen=True)
class PerturbParams:
    """Corruption settings.

    jitter: maximum absolute per-coordinate displacement, in pixels.
    drop_every_k: drop every k-th ground-truth box of each image (1-based);
        None keeps all boxes.
    fp_per_image: false boxes added per image, placed with zero overlap
        against all same-class ground truth.
    score_model: a constant score in [0, 1], or a (low, high) pair drawn
        uniformly per detection.
    seed: base seed; each image derives its own generator from it, so
        per-image output is independent of processing order.
    """

    jitter: float = 0.0
    drop_every_k: int | None = None
    fp_per_image: int = 0
    score_model: float | tuple[float, float] = 1.0
    seed: int = 0

    def __post_init__(self) -> None:
        if self.jitter < 0:
            raise InvariantError(f"jitter must be non-negative, got {self.jitter}")
        if self.drop_every_k is not None and self.drop_every_k < 1:
            raise InvariantError(f"drop_every_k must be a positive integer, got {self.drop_every_k}")
        if self.fp_per_image < 0:
            raise InvariantError(f"fp_per_image must be non-negative, got {self.fp_per_image}")
        model = self.score_model
        if isinstance(model, tuple):
            object.__setattr__(self, "score_model", (float(model[0]), float(model[1])))
            low, high = self.score_model
            if not 0.0 <= low <= high <= 1.0:
                raise InvariantError(f"score range must satisfy 0 <= low <= high <= 1: {model}")
        elif not 0.0 <= model <= 1.0:
            raise InvariantError(f"constant score must be in [0, 1], got {model}")


@dataclass(frozen=True)
class PerturbResult:
    """Generated detections plus the number of jitter fallbacks.

    A fallback happens when a jittered box would be inverted or empty after
    clamping to the image; the unjittered box is emitted instead.
    """

    detections: tuple[Detection, ...]
    jitter_fallbacks: int


def _image_rng(seed: int, image_id: str) -> random.Random:
    digest = hashlib.sha256(f"{seed}:{image_id}".encode("utf-8")).digest()
    return random.Random(int.from_bytes(digest[:8], "big"))


def _is_dropped(position: int, drop_every_k: int | None) -> bool:
    return drop_every_k is not None and position % drop_every_k == 0


def _draw_score(params: PerturbParams, rng: random.Random) -> float:
    model = params.score_model
    if isinstance(model, tuple):
        return rng.uniform(model[0], model[1])
    return float(model)


def _jitter_box(
    box: BoundingBox, jitter: float, width: int, height: int, rng: random.Random
) -> tuple[BoundingBox, int]:
    if jitter == 0:
        return box, 0
    # Fixed draw order (xmin, ymin, xmax, ymax) keeps the stream reproducible.
    xmin = min(max(box.xmin + rng.uniform(-jitter, jitter), 0.0), float(width))
    ymin = min(max(box.ymin + rng.uniform(-jitter, jitter), 0.0), float(height))
    xmax = min(max(box.xmax + rng.uniform(-jitter, jitter), 0.0), float(width))
    ymax = min(max(box.ymax + rng.uniform(-jitter, jitter), 0.0), float(height))
    if xmax <= xmin or ymax <= ymin:
        return box, 1
    return BoundingBox(xmin, ymin, xmax, ymax), 0


def _place_false_positive(
    record: ImageRecord, rng: random.Random, fp_index: int
) -> tuple[DamageClass, BoundingBox]:
    classes = DEFAULT_CLASSES
    damage_class = classes[min(int(rng.random() * len(classes)), len(classes) - 1)]
    same_class = [box for cls, box in record.ground_truth if cls == damage_class]
    for _ in range(_FP_ATTEMPTS):
        bw = rng.uniform(0.05, 0.25) * record.width
        bh = rng.uniform(0.05, 0.25) * record.height
        x1 = rng.uniform(0.0, record.width - bw)
        y1 = rng.uniform(0.0, record.height - bh)
        candidate = BoundingBox(x1, y1, x1 + bw, y1 + bh)
        if all(iou(candidate, gt) == 0.0 for gt in same_class):
            return damage_class, candidate
    # Ground truth never extends past the image, so a strip beyond the right
    # edge is guaranteed overlap-free.
    offset = record.width + 1.0 + 12.0 * fp_index
    return damage_class, BoundingBox(offset, 0.0, offset + 10.0, 10.0)


def perturb(records: Sequence[ImageRecord], params: PerturbParams) -> PerturbResult:
    """Generate a detection set from ground truth under the given corruption.

    Per image: every surviving ground-truth box is re-emitted with jittered
    coordinates (clamped to the image; fallback to the original box when
    clamping would invert it), followed by the configured number of
    zero-overlap false positives.  Fully deterministic for a given
    (records, params): each image uses a generator seeded from
    SHA-256(seed, image_id), and dropped boxes consume no draws.
    """
    detections: list[Detection] = []
    fallbacks = 0
    for record in records:
        rng = _image_rng(params.seed, record.image_id)
        for position, (damage_class, box) in enumerate(record.ground_truth, start=1):
            if _is_dropped(position, params.drop_every_k):
                continue
            jittered, fell_back = _jitter_box(
                box, params.jitter, record.width, record.height, rng
            )
            fallbacks += fell_back
            detections.append(
                Detection(record.image_id, damage_class, jittered, _draw_score(params, rng))
            )
        for fp_index in range(params.fp_per_image):
            damage_class, fp_box = _place_false_positive(record, rng, fp_index)
            detections.append(
                Detection(record.image_id, damage_class, fp_box, _draw_score(params, rng))
            )
    return PerturbResult(tuple(detections), fallbacks)


def max_safe_jitter(box: BoundingBox, iou_threshold: float = 0.5) -> float:
    """Largest displacement keeping a jittered copy of ``box`` at or above the IoU threshold.

    The worst case over independent per-coordinate displacements of at most j
    is the symmetric shrink, whose IoU is (w-2j)(h-2j) / (w*h); solving that
    for the threshold gives the bound.
    """
    w = box.xmax - box.xmin
    h = box.ymax - box.ymin
    # Lower root of 4j^2 - 2(w+h)j + wh(1 - t) = 0.
    disc = (w + h) ** 2 - 4.0 * w * h * (1.0 - iou_threshold)
    return ((w + h) - math.sqrt(disc)) / 4.0


def _worst_case_iou(box: BoundingBox, jitter: float) -> float:
    w = box.xmax - box.xmin
    h = box.ymax - box.ymin
    if 2 * jitter >= min(w, h):
        return 0.0
    return ((w - 2 * jitter) * (h - 2 * jitter)) / (w * h)


def _cross_iou_bound(source: BoundingBox, other: BoundingBox, jitter: float) -> float:
    """Upper bound on the IoU between any jittered copy of ``source`` and ``other``."""
    inter_w = min(source.xmax + jitter, other.xmax) - max(source.xmin - jitter, other.xmin)
    inter_h = min(source.ymax + jitter, other.ymax) - max(source.ymin - jitter, other.ymin)
    if inter_w <= 0 or inter_h <= 0:
        return 0.0
    inter_max = inter_w * inter_h
    w = source.xmax - source.xmin
    h = source.ymax - source.ymin
    det_area_min = max((w - 2 * jitter) * (h - 2 * jitter), 0.0)
    denom = det_area_min + other.area - inter_max
    if denom <= 0:
        return 1.0
    return min(inter_max / denom, 1.0)


def check_safe_regime(
    records: Sequence[ImageRecord], params: PerturbParams, iou_threshold: float = 0.5
) -> None:
    """Verify that (records, params) admit exact closed-form counts.

    Two conditions must hold for every image:
      * each surviving box tolerates the jitter: its worst-case IoU with its
        source stays at or above the matching threshold;
      * no jittered copy of a surviving box can reach the threshold against a
        different same-class box, so greedy matching cannot cross-claim.

    With zero jitter every echo overlaps its own source at IoU exactly 1.0,
    which no distinct box can beat, so the cross-claim condition is waived.

    Raises ValueError with an explanation when a condition fails; no
    probabilistic guarantees are offered outside this regime.
    """
    jitter = params.jitter
    for record in records:
        entries = record.ground_truth
        for position, (damage_class, box) in enumerate(entries, start=1):
            if _is_dropped(position, params.drop_every_k):
                continue
            worst = _worst_case_iou(box, jitter)
            if worst < iou_threshold:
                safe = max_safe_jitter(box, iou_threshold)
                raise ValueError(
                    f"unsafe jitter for {record.image_id}: a "
                    f"{box.xmax - box.xmin:g}x{box.ymax - box.ymin:g} box can fall to "
                    f"IoU {worst:.3f} < {iou_threshold} against its source; "
                    f"reduce jitter to at most {safe:.3f}"
                )
            if jitter == 0:
                continue
            for other_idx, (other_class, other_box) in enumerate(entries):
                if other_idx == position - 1 or other_class != damage_class:
                    continue
                bound = _cross_iou_bound(box, other_box, jitter)
                if bound >= iou_threshold:
                    raise ValueError(
                        f"ambiguous geometry in {record.image_id}: a jittered copy of "
                        f"box {position - 1} could reach IoU {bound:.3f} >= {iou_threshold} "
                        f"against same-class box {other_idx}; counts would not be exact"
                    )


def expected_counts(
    records: Sequence[ImageRecord], params: PerturbParams, iou_threshold: float = 0.5
) -> tuple[int, int, int]:
    """Closed-form (tp, fp, fn) for evaluating ``perturb(records, params)``.

    Valid only in the safe regime established by ``check_safe_regime`` (which
    this calls first): there, every surviving box matches exactly its own
    source, every dropped box is a false negative, and every injected box is a
    false positive.
    """
    check_safe_regime(records, params, iou_threshold)
    tp = fn = 0
    for record in records:
        n = len(record.ground_truth)
        dropped = n // params.drop_every_k if params.drop_every_k else 0
        tp += n - dropped
        fn += dropped
    fp = params.fp_per_image * len(records)
    return tp, fp, fn
