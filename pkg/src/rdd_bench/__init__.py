"""Dataset management and evaluation toolkit for road damage detection.

The package covers the full benchmark workflow around (externally trained)
detection models: parsing VOC-style annotations, deterministic stratified
splits, IoU-matched F1 and AP scoring, confidence/top-k post-processing,
synthetic detection generation for end-to-end validation, and the detection
interchange and submission file formats.  See the ``rdd-bench`` command for
the CLI surface.
"""

from .annotations import (
    CLASS_NAMES,
    DEFAULT_CLASSES,
    BoundingBox,
    Country,
    DamageClass,
    ImageRecord,
    normalize_labels,
    parse_voc_annotation,
    to_voc_xml,
)
from .dataset import (
    DEFAULT_RATIOS,
    SPLIT_NAMES,
    DatasetIndex,
    ScanSkip,
    SplitAssignment,
    SplitSpec,
    class_histogram,
    compose,
    largest_remainder_sizes,
    load_split,
    save_split,
    scan_dataset,
    split_document,
    stratified_split,
)
from .errors import (
    DatasetError,
    EmptyDatasetError,
    EncodingError,
    InvariantError,
    ParseError,
    SchemaError,
    ToolkitError,
)
from .io import (
    CODE_ENCODING,
    NUMERIC_ENCODING,
    SubmissionRow,
    decode_label,
    detections_jsonl,
    read_detections,
    read_submission,
    submission_rows,
    submission_text,
    write_detections,
    write_submission,
)
from .metrics import (
    COCO_IOU_THRESHOLDS,
    ClassReport,
    Detection,
    EvalConfig,
    EvalReport,
    MatchOutcome,
    average_precision,
    evaluate,
    f1_from_counts,
    format_report,
    iou,
    match_detections,
)
from .postprocess import (
    PostprocessConfig,
    filter_by_confidence,
    postprocess_detections,
    sweep_threshold,
    top_k_per_image,
)
from .synth import (
    PerturbParams,
    PerturbResult,
    check_safe_regime,
    expected_counts,
    max_safe_jitter,
    perturb,
)

__version__ = "0.1.0"

__all__ = [
    "CLASS_NAMES",
    "CODE_ENCODING",
    "COCO_IOU_THRESHOLDS",
    "DEFAULT_CLASSES",
    "DEFAULT_RATIOS",
    "NUMERIC_ENCODING",
    "SPLIT_NAMES",
    "BoundingBox",
    "ClassReport",
    "Country",
    "DamageClass",
    "DatasetError",
    "DatasetIndex",
    "Detection",
    "EmptyDatasetError",
    "EncodingError",
    "EvalConfig",
    "EvalReport",
    "ImageRecord",
    "InvariantError",
    "MatchOutcome",
    "ParseError",
    "PerturbParams",
    "PerturbResult",
    "PostprocessConfig",
    "ScanSkip",
    "SchemaError",
    "SplitAssignment",
    "SplitSpec",
    "SubmissionRow",
    "ToolkitError",
    "average_precision",
    "check_safe_regime",
    "class_histogram",
    "compose",
    "decode_label",
    "detections_jsonl",
    "evaluate",
    "expected_counts",
    "f1_from_counts",
    "filter_by_confidence",
    "format_report",
    "iou",
    "largest_remainder_sizes",
    "load_split",
    "match_detections",
    "max_safe_jitter",
    "normalize_labels",
    "parse_voc_annotation",
    "perturb",
    "postprocess_detections",
    "read_detections",
    "read_submission",
    "save_split",
    "scan_dataset",
    "split_document",
    "stratified_split",
    "submission_rows",
    "submission_text",
    "sweep_threshold",
    "to_voc_xml",
    "top_k_per_image",
    "write_detections",
    "write_submission",
]
