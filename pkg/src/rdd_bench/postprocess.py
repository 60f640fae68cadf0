"""Detection post-processing: confidence filtering, top-k, threshold sweeps."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from .annotations import ImageRecord
from .errors import InvariantError
from .metrics import Detection, EvalConfig, evaluate


@dataclass(frozen=True)
class PostprocessConfig:
    """Pipeline settings: minimum confidence and per-image cap (None = unlimited)."""

    min_score: float = 0.7
    top_k: int | None = 5

    def __post_init__(self) -> None:
        if not 0.0 <= self.min_score <= 1.0:
            raise InvariantError(f"min_score must be in [0, 1], got {self.min_score}")
        if self.top_k is not None and self.top_k < 1:
            raise InvariantError(f"top_k must be >= 1 or None, got {self.top_k}")


def filter_by_confidence(dets: Sequence[Detection], min_score: float) -> list[Detection]:
    """Keep detections with score >= min_score (inclusive), order preserved."""
    if not 0.0 <= min_score <= 1.0:
        raise ValueError(f"min_score must be in [0, 1], got {min_score}")
    return [det for det in dets if det.score >= min_score]


def top_k_per_image(dets: Sequence[Detection], k: int | None) -> list[Detection]:
    """Keep each image's k highest-scoring detections (score ties by input order).

    Output groups detections by image in order of first appearance, each group
    in descending score order; images are capped independently.
    """
    if k is None:
        return list(dets)
    if k < 1:
        raise ValueError(f"k must be >= 1 or None, got {k}")
    grouped: dict[str, list[tuple[int, Detection]]] = {}
    for idx, det in enumerate(dets):
        grouped.setdefault(det.image_id, []).append((idx, det))
    out: list[Detection] = []
    for items in grouped.values():
        ranked = sorted(items, key=lambda pair: (-pair[1].score, pair[0]))
        out.extend(det for _, det in ranked[:k])
    return out


def postprocess_detections(
    dets: Sequence[Detection], config: PostprocessConfig | None = None
) -> list[Detection]:
    """Run the standard pipeline: confidence filter, then per-image top-k."""
    config = config or PostprocessConfig()
    return top_k_per_image(filter_by_confidence(dets, config.min_score), config.top_k)


def sweep_threshold(
    dets: Sequence[Detection],
    records: Sequence[ImageRecord],
    grid: Sequence[float],
    eval_config: EvalConfig | None = None,
    top_k: int | None = None,
) -> tuple[float, list[tuple[float, float]]]:
    """Evaluate F1 at every confidence cutoff in an ascending grid.

    Returns the F1-maximizing threshold (ties keep the lowest) and the full
    (threshold, f1) curve.  When ``top_k`` is set, the per-image cap is applied
    after each filter, mirroring the standard pipeline order.
    """
    grid = list(grid)
    if not grid:
        raise ValueError("threshold grid must be non-empty")
    if grid != sorted(grid):
        raise ValueError("threshold grid must be sorted ascending")
    curve: list[tuple[float, float]] = []
    best_threshold = grid[0]
    best_f1 = -1.0
    for threshold in grid:
        kept = filter_by_confidence(dets, threshold)
        if top_k is not None:
            kept = top_k_per_image(kept, top_k)
        f1 = evaluate(kept, records, eval_config).f1
        curve.append((threshold, f1))
        if f1 > best_f1:
            best_threshold, best_f1 = threshold, f1
    return best_threshold, curve
