"""Command-line front end: inspect, split, post-process, evaluate, submit.

Output convention: the machine-readable result of every subcommand (JSON, a
detection interchange file, or a submission file) goes to ``--out`` when given
and to standard output otherwise; human-readable summaries always go to
standard error.  Identical inputs and flags produce byte-identical
machine-readable output.

Exit status: 0 on success, 1 for a categorized toolkit error, 2 for a usage
error.  ``RDD_BENCH_ROOT`` supplies the default for every ``--root`` flag.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from collections import Counter
from importlib import metadata
from pathlib import Path
from typing import Sequence

from .annotations import CLASS_NAMES
from .dataset import (
    DEFAULT_RATIOS,
    SPLIT_NAMES,
    DatasetIndex,
    SplitSpec,
    class_histogram,
    compose,
    load_split,
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
    detections_jsonl,
    read_detections,
    submission_rows,
    submission_text,
)
from .metrics import EvalConfig, EvalReport, evaluate, format_report
from .postprocess import PostprocessConfig, postprocess_detections
from .synth import PerturbParams, perturb

_ERROR_CATEGORIES = {
    ParseError: "parse error",
    SchemaError: "schema error",
    InvariantError: "invariant violation",
    EmptyDatasetError: "empty dataset",
    DatasetError: "dataset error",
    EncodingError: "encoding error",
}


def _category(exc: ToolkitError) -> str:
    for klass, label in _ERROR_CATEGORIES.items():
        if isinstance(exc, klass):
            return label
    return "error"


def _version() -> str:
    try:
        return metadata.version("rdd-bench")
    except metadata.PackageNotFoundError:
        return "0+unknown"


# ---------------------------------------------------------------------------
# Flag value parsers (reject bad values at the argparse layer, exit code 2).


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be a positive integer, got {text}")
    return value


def _non_negative_int(text: str) -> int:
    value = int(text)
    if value < 0:
        raise argparse.ArgumentTypeError(f"must be non-negative, got {text}")
    return value


def _non_negative_float(text: str) -> float:
    value = float(text)
    if value < 0:
        raise argparse.ArgumentTypeError(f"must be non-negative, got {text}")
    return value


def _unit_interval(text: str) -> float:
    value = float(text)
    if not 0.0 <= value <= 1.0:
        raise argparse.ArgumentTypeError(f"must be in [0, 1], got {text}")
    return value


def _iou_threshold(text: str) -> float:
    value = float(text)
    if not 0.0 < value <= 1.0:
        raise argparse.ArgumentTypeError(f"must be in (0, 1], got {text}")
    return value


def _score_model(text: str) -> float | tuple[float, float]:
    """A constant score ("0.9") or a uniform range ("0.6:0.95")."""
    low, sep, high = text.partition(":")
    try:
        if sep:
            return (float(low), float(high))
        return float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(
            f"expected SCORE or LOW:HIGH, got {text!r}"
        ) from None


# ---------------------------------------------------------------------------
# Parser assembly.


def _add_root(parser: argparse.ArgumentParser, help_suffix: str = "") -> None:
    parser.add_argument(
        "--root",
        default=os.environ.get("RDD_BENCH_ROOT"),
        metavar="DIR",
        help="annotation root scanned recursively for VOC XML files"
        + help_suffix
        + " (default: $RDD_BENCH_ROOT)",
    )


def _add_jobs(parser: argparse.ArgumentParser) -> None:
    parser.add_argument(
        "--jobs",
        type=_positive_int,
        default=1,
        metavar="N",
        help="parallel workers for scanning; never changes output (default: 1)",
    )


def _add_out(parser: argparse.ArgumentParser, what: str) -> None:
    parser.add_argument(
        "--out",
        metavar="FILE",
        help=f"write {what} to FILE instead of standard output",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rdd-bench",
        description="Dataset management and evaluation for road damage detection.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {_version()}")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", required=True)

    p = sub.add_parser(
        "stats",
        help="scan a dataset and report image/annotation counts",
        description="Scan the annotation tree and tabulate images and labels "
        "per country and class.",
    )
    _add_root(p)
    _add_jobs(p)
    _add_out(p, "the JSON statistics")
    p.set_defaults(func=_cmd_stats)

    p = sub.add_parser(
        "split",
        help="produce a deterministic stratified train/val/test split",
        description="Assign every image to train/val/test, stratified by "
        "country, using a seeded keyed-hash shuffle; identical inputs and "
        "flags always produce the identical split file.",
    )
    _add_root(p)
    _add_jobs(p)
    p.add_argument("--seed", type=int, default=0, help="shuffle seed (default: 0)")
    p.add_argument(
        "--ratios",
        type=_unit_interval,
        nargs=3,
        default=list(DEFAULT_RATIOS),
        metavar=("TRAIN", "VAL", "TEST"),
        help="three fractions summing to 1 (default: 0.80 0.15 0.05)",
    )
    _add_out(p, "the JSON split file")
    p.set_defaults(func=_cmd_split)

    p = sub.add_parser(
        "post",
        help="apply confidence filtering and per-image top-k capping",
        description="Keep detections with score >= --min-score, then keep at "
        "most --top-k per image (highest scores first).",
    )
    p.add_argument("--dets", required=True, metavar="FILE", help="input detection file")
    p.add_argument(
        "--min-score",
        type=_unit_interval,
        default=0.7,
        metavar="X",
        help="confidence threshold, inclusive (default: 0.7)",
    )
    p.add_argument(
        "--top-k",
        type=_non_negative_int,
        default=5,
        metavar="K",
        help="max detections kept per image; 0 disables the cap (default: 5)",
    )
    _add_out(p, "the filtered detection file")
    p.set_defaults(func=_cmd_post)

    p = sub.add_parser(
        "eval",
        help="score a detection file against ground truth",
        description="Match detections to ground truth per image (greedy, "
        "same-class, best IoU first) and report precision/recall/F1, "
        "optionally with per-class AP averaged over IoU 0.50:0.95.",
    )
    p.add_argument("--dets", required=True, metavar="FILE", help="detection file to score")
    _add_root(p, " providing the ground truth")
    _add_jobs(p)
    p.add_argument(
        "--split",
        metavar="FILE",
        help="restrict scoring to part(s) of this split file (see --part)",
    )
    p.add_argument(
        "--part",
        action="append",
        choices=SPLIT_NAMES,
        help="split part(s) to score when --split is given; repeatable "
        "(default: test)",
    )
    p.add_argument(
        "--iou",
        type=_iou_threshold,
        default=0.5,
        metavar="X",
        help="IoU match threshold (default: 0.5)",
    )
    p.add_argument(
        "--averaging",
        choices=("micro", "macro"),
        default="micro",
        help="pool counts over the dataset (micro) or average per-image "
        "scores (macro) (default: micro)",
    )
    p.add_argument(
        "--ap",
        action="store_true",
        help="also compute per-class AP over IoU thresholds 0.50:0.95",
    )
    p.add_argument(
        "--summary-plot",
        metavar="FILE",
        help="write a per-class F1 (and AP, with --ap) bar chart to FILE",
    )
    _add_out(p, "the JSON report")
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser(
        "submit",
        help="render detections as a challenge submission file",
        description="Write one row per image: image_name, then 'LABEL xmin "
        "ymin xmax ymax' quintuples in descending score order with integer "
        "coordinates.",
    )
    p.add_argument("--dets", required=True, metavar="FILE", help="input detection file")
    p.add_argument(
        "--encoding",
        choices=("code", "numeric"),
        default="code",
        help="label tokens: class codes (D00..D40) or numbers 1-4 in that "
        "order (default: code)",
    )
    p.add_argument(
        "--include-empty",
        action="store_true",
        help="also emit an empty row for every detection-free image under "
        "--root (requires --root)",
    )
    _add_root(p, " used to enumerate images for --include-empty")
    _add_jobs(p)
    _add_out(p, "the submission")
    p.set_defaults(func=_cmd_submit)

    p = sub.add_parser(
        "synth",
        help="generate synthetic detections from ground truth",
        description="Emit a detection file derived from the annotations with "
        "controlled corruption: coordinate jitter, deterministic every-k-th "
        "box dropping, and zero-overlap false positives.",
    )
    _add_root(p)
    _add_jobs(p)
    p.add_argument(
        "--jitter",
        type=_non_negative_float,
        default=0.0,
        metavar="PX",
        help="max per-coordinate displacement in pixels (default: 0)",
    )
    p.add_argument(
        "--drop-every-k",
        type=_positive_int,
        default=None,
        metavar="K",
        help="drop every K-th ground-truth box per image (default: keep all)",
    )
    p.add_argument(
        "--fp-per-image",
        type=_non_negative_int,
        default=0,
        metavar="N",
        help="false boxes added per image (default: 0)",
    )
    p.add_argument(
        "--score",
        type=_score_model,
        default=1.0,
        metavar="S|LO:HI",
        help="detection score: a constant or a uniform LOW:HIGH range "
        "(default: 1.0)",
    )
    p.add_argument("--seed", type=int, default=0, help="generation seed (default: 0)")
    _add_out(p, "the synthetic detection file")
    p.set_defaults(func=_cmd_synth)

    return parser


def _require_root(parser: argparse.ArgumentParser, args: argparse.Namespace) -> str:
    if args.root is None:
        parser.error(f"{args.command}: --root is required (or set RDD_BENCH_ROOT)")
    return args.root


def _validate(parser: argparse.ArgumentParser, args: argparse.Namespace) -> None:
    if args.command in ("stats", "split", "eval", "synth"):
        _require_root(parser, args)
    if args.command == "submit" and args.include_empty:
        _require_root(parser, args)
    if args.command == "eval" and args.part and not args.split:
        parser.error("eval: --part requires --split")
    if args.command == "split" and abs(sum(args.ratios) - 1.0) > 1e-9:
        parser.error(f"split: --ratios must sum to 1, got {args.ratios}")


# ---------------------------------------------------------------------------
# Output helpers.


def _emit(text: str, out: str | None) -> None:
    if out is None:
        sys.stdout.write(text)
    else:
        Path(out).write_text(text, encoding="utf-8", newline="\n")


def _emit_json(doc: dict, out: str | None) -> None:
    _emit(json.dumps(doc, indent=2, sort_keys=True) + "\n", out)


def _say(text: str) -> None:
    print(text, file=sys.stderr)


# ---------------------------------------------------------------------------
# Subcommands.


def _cmd_stats(args: argparse.Namespace) -> int:
    index = scan_dataset(args.root, jobs=args.jobs)
    hist = class_histogram(index, index.image_ids())
    country_codes = sorted(index.counts, key=lambda c: c.value)
    all_codes = sorted({code for _, code in hist})
    doc = {
        "images": len(index),
        "countries": {c.value: index.counts[c] for c in country_codes},
        "annotations": {
            c.value: {
                code: hist[(c, code)] for code in all_codes if hist[(c, code)]
            }
            for c in country_codes
        },
        "skipped": sorted(
            ({"path": s.path, "reason": s.reason} for s in index.skips),
            key=lambda item: item["path"],
        ),
    }
    _emit_json(doc, args.out)

    shown = [code for code in CLASS_NAMES if code in all_codes]
    extra = [code for code in all_codes if code not in CLASS_NAMES]
    header = ["country", "images"] + shown + (["other"] if extra else [])
    _say("  ".join(f"{h:>8}" for h in header))
    for c in country_codes:
        cells = [c.value, index.counts[c]]
        cells += [hist[(c, code)] for code in shown]
        if extra:
            cells.append(sum(hist[(c, code)] for code in extra))
        _say("  ".join(f"{v:>8}" for v in cells))
    totals: list[object] = ["total", len(index)]
    totals += [sum(hist[(c, code)] for c in country_codes) for code in shown]
    if extra:
        totals.append(sum(hist[(c, code)] for c in country_codes for code in extra))
    _say("  ".join(f"{v:>8}" for v in totals))
    if index.skips:
        _say(f"skipped {len(index.skips)} unreadable annotation file(s)")
    return 0


def _cmd_split(args: argparse.Namespace) -> int:
    index = scan_dataset(args.root, jobs=args.jobs)
    spec = SplitSpec(tuple(args.ratios), args.seed)
    assignment = stratified_split(index, spec)
    _emit_json(split_document(assignment), args.out)

    for name in SPLIT_NAMES:
        ids = assignment.part(name)
        by_country = Counter(index.by_id[i].country.value for i in ids)
        detail = ", ".join(f"{c} {n}" for c, n in sorted(by_country.items()))
        _say(f"{name:>5}: {len(ids):>6} images ({detail})")
    return 0


def _cmd_post(args: argparse.Namespace) -> int:
    detections = read_detections(args.dets)
    config = PostprocessConfig(
        min_score=args.min_score, top_k=args.top_k if args.top_k else None
    )
    kept = postprocess_detections(detections, config)
    _emit(detections_jsonl(kept), args.out)

    cap = "unlimited" if config.top_k is None else str(config.top_k)
    _say(
        f"kept {len(kept)} of {len(detections)} detections "
        f"(min score {config.min_score}, top-k {cap})"
    )
    return 0


def _load_eval_records(args: argparse.Namespace) -> tuple[DatasetIndex, list]:
    index = scan_dataset(args.root, jobs=args.jobs)
    if not args.split:
        return index, list(index.records)
    assignment = load_split(args.split)
    parts = args.part or ["test"]
    subset = compose(assignment, parts)
    missing = [i for i in subset if i not in index.by_id]
    if missing:
        raise DatasetError(
            f"split file lists {len(missing)} image id(s) not present under "
            f"--root (first: {missing[0]!r})"
        )
    return index, [index.by_id[i] for i in subset]


def _cmd_eval(args: argparse.Namespace) -> int:
    detections = read_detections(args.dets)
    _, records = _load_eval_records(args)
    wanted = {record.image_id for record in records}
    scored = [det for det in detections if det.image_id in wanted]
    config = EvalConfig(iou_threshold=args.iou, averaging=args.averaging)
    report = evaluate(scored, records, config, with_ap=args.ap)
    _emit_json(report.to_dict(), args.out)

    if len(scored) != len(detections):
        _say(
            f"note: {len(detections) - len(scored)} detection(s) referenced "
            "images outside the evaluated subset and were ignored"
        )
    _say(format_report(report))
    if args.summary_plot:
        _write_summary_plot(report, args.summary_plot)
        _say(f"wrote summary plot to {args.summary_plot}")
    return 0


def _write_summary_plot(report: EvalReport, path: str) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    codes = list(report.per_class)
    f1s = [report.per_class[c].f1 for c in codes]
    fig, ax = plt.subplots(figsize=(6, 3.5))
    positions = range(len(codes))
    if report.ap_table is not None:
        width = 0.4
        ax.bar([p - width / 2 for p in positions], f1s, width, label="F1")
        aps = [report.ap_table.get(c, 0.0) for c in codes]
        ax.bar([p + width / 2 for p in positions], aps, width, label="AP .50:.95")
        ax.legend()
    else:
        ax.bar(list(positions), f1s, 0.6, label="F1")
    ax.set_xticks(list(positions), codes)
    ax.set_ylim(0.0, 1.0)
    ax.set_ylabel("score")
    ax.set_title(f"per-class results ({report.averaging} F1 {report.f1:.3f})")
    fig.tight_layout()
    fig.savefig(path, metadata={"Software": None})
    plt.close(fig)


def _cmd_submit(args: argparse.Namespace) -> int:
    detections = read_detections(args.dets)
    encoding = CODE_ENCODING if args.encoding == "code" else NUMERIC_ENCODING
    image_names = None
    if args.include_empty:
        index = scan_dataset(args.root, jobs=args.jobs)
        image_names = index.image_ids()
    rows = submission_rows(detections, encoding, image_names)
    _emit(submission_text(rows), args.out)

    empty = sum(1 for row in rows if not row.predictions)
    _say(
        f"wrote {len(rows)} submission row(s) covering "
        f"{len(rows) - empty} image(s) with detections"
        + (f" and {empty} empty" if empty else "")
    )
    return 0


def _cmd_synth(args: argparse.Namespace) -> int:
    index = scan_dataset(args.root, jobs=args.jobs)
    params = PerturbParams(
        jitter=args.jitter,
        drop_every_k=args.drop_every_k,
        fp_per_image=args.fp_per_image,
        score_model=args.score,
        seed=args.seed,
    )
    result = perturb(index.records, params)
    _emit(detections_jsonl(result.detections), args.out)

    _say(
        f"generated {len(result.detections)} detection(s) from "
        f"{len(index)} image(s); {result.jitter_fallbacks} jitter fallback(s)"
    )
    return 0


# ---------------------------------------------------------------------------
# Entry points.


def run(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    _validate(parser, args)
    try:
        return args.func(args)
    except ToolkitError as exc:
        _say(f"rdd-bench {args.command}: {_category(exc)}: {exc}")
        return 1
    except OSError as exc:
        _say(f"rdd-bench {args.command}: i/o error: {exc}")
        return 1


def main() -> None:
    logging.basicConfig(
        stream=sys.stderr, level=logging.WARNING, format="rdd-bench: %(message)s"
    )
    raise SystemExit(run(sys.argv[1:]))
