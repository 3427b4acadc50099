"""Command-line surface for batch workflows.

Subcommands: validate, split, stats, augment, anchors, run, eval, report.
Data goes to stdout or ``--out`` (written atomically); logs go to stderr.
Stochastic commands require an explicit ``--seed``.  Exit codes: 0 success,
1 violations or processing failure, 2 usage or I/O errors.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import tempfile
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from . import augment as aug
from . import dataset as ds
from . import metrics as mt
from .config import PipelineConfig, config_to_dict, load_config, with_overrides
from .detect import kmeans_anchors, save_anchors
from .errors import AmrError
from .oracle import OracleNoise, OracleProvider
from .raster import extract_patch, image_size, load_image
from .recognize import (
    CTC_CLASSES,
    STATUS_NEGATIVE_NO_COUNTER,
    PipelineImage,
    ReadingResult,
    run_pipeline,
)
from .tensorio import ROLE_CRNET, ROLE_CRNN, ROLE_DETECTOR, ROLE_MULTITASK, DirectoryProvider


def _log(msg: str) -> None:
    print(msg, file=sys.stderr)


def _atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _emit(text: str, out: str | None) -> None:
    if out:
        _atomic_write(Path(out), text)
    else:
        sys.stdout.write(text)


def _workers(args) -> int:
    if args.workers is not None:
        return max(1, args.workers)
    env = os.environ.get("AMR_WORKERS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def _parse_pair(text: str) -> tuple[float, float]:
    parts = [float(p) for p in text.split(",")]
    if len(parts) != 2:
        raise argparse.ArgumentTypeError(f"expected lo,hi values, got {text!r}")
    return (parts[0], parts[1])


def _parse_ratios(text: str) -> tuple[float, float, float]:
    parts = [float(p) for p in text.split(",")]
    if len(parts) != 3 or any(r <= 0 for r in parts) or abs(sum(parts) - 1.0) > 1e-9:
        raise argparse.ArgumentTypeError(f"ratios must be three positives summing to 1, got {text!r}")
    return (parts[0], parts[1], parts[2])


def _subset_ids(args, root: Path) -> list[str] | None:
    if not args.split:
        return None
    split = ds.load_split(args.split)
    return list(split.subset(args.subset))


# --- subcommands ---------------------------------------------------------------

def cmd_validate(args) -> int:
    violations = ds.validate_dataset(args.root, workers=_workers(args))
    payload = [
        {"image_id": image_id, "kind": v.kind, "detail": v.detail} for image_id, v in violations
    ]
    _emit(json.dumps(payload, indent=2) + "\n", args.out)
    for image_id, v in violations:
        _log(f"{image_id}: {v.kind}: {v.detail}")
    _log(f"{len(violations)} violation(s)")
    return 1 if violations else 0


def cmd_split(args) -> int:
    ids = sorted(p.stem for p in Path(args.root).iterdir() if p.suffix.lower() == ".txt")
    split = ds.split_dataset(ids, args.ratios, args.seed)
    payload = {
        "train": list(split.train),
        "validation": list(split.validation),
        "test": list(split.test),
        "seed": split.seed,
    }
    _emit(json.dumps(payload, indent=2) + "\n", args.out)
    _log(f"split sizes: {len(split.train)}/{len(split.validation)}/{len(split.test)}")
    return 0


def cmd_stats(args) -> int:
    annotations = ds.load_annotations(args.root, _subset_ids(args, Path(args.root)))
    stats = ds.compute_stats(annotations)
    _emit(json.dumps(stats.to_dict(), indent=2) + "\n", args.out)
    return 0


def cmd_augment(args) -> int:
    root = Path(args.root)
    annotations = ds.load_annotations(root, _subset_ids(args, root))
    ranges = aug.JitterRanges(
        brightness=args.brightness, rotation_deg=args.rotation, crop=args.crop
    )
    images = {}
    for ann in annotations:
        path = ds.find_image(root, ann.image_id)
        if path is None:
            raise FileNotFoundError(f"no image file for {ann.image_id!r}")
        images[ann.image_id] = extract_patch(load_image(path), ann.counter)
    samples = aug.generate_set(annotations, images, args.total, ranges, args.seed)
    manifest = aug.write_augmented_set(samples, args.out, ranges, args.seed)
    _log(f"wrote {len(samples)} samples to {args.out} (manifest {manifest})")
    return 0


def cmd_anchors(args) -> int:
    root = Path(args.root)
    annotations = ds.load_annotations(root, _subset_ids(args, root))
    boxes = []
    for ann in annotations:
        dims = _image_dims(root, ann)
        boxes.append(
            (ann.counter.w / dims[0] * args.grid_w, ann.counter.h / dims[1] * args.grid_h)
        )
    anchors = kmeans_anchors(boxes, args.k, args.seed)
    if args.out:
        save_anchors(anchors, args.out)
    else:
        sys.stdout.write(json.dumps([[a.pw, a.ph] for a in anchors]) + "\n")
    _log(f"{args.k} anchors from {len(boxes)} boxes on a {args.grid_w}x{args.grid_h} grid")
    return 0


def _image_dims(root: Path, ann: ds.MeterAnnotation) -> tuple[int, int]:
    path = ds.find_image(root, ann.image_id)
    if path is not None:
        return image_size(path)
    # annotation-only datasets: use the tightest frame holding all boxes
    w = max(ann.counter.x2, max(d.x2 for d in ann.digits))
    h = max(ann.counter.y2, max(d.y2 for d in ann.digits))
    return (int(w) + 1, int(h) + 1)


def _build_config(args) -> PipelineConfig:
    config = load_config(args.config) if args.config else PipelineConfig()
    overrides = {}
    if args.recognizer:
        overrides["recognizer"] = args.recognizer
    if args.mode:
        overrides["recognizer_mode"] = args.mode
    if args.margin is not None:
        overrides["margin"] = args.margin
    if args.threshold is not None:
        overrides["recognizer_threshold"] = args.threshold
    if args.seed is not None:
        overrides["seed"] = args.seed
    return with_overrides(config, **overrides) if overrides else config


def _build_provider(args, config: PipelineConfig, annotations) -> object:
    if args.provider == "oracle":
        noise = OracleNoise(
            box_jitter=args.jitter, confidence_floor=args.confidence_floor, seed=config.seed
        )
        return OracleProvider(annotations, noise, config)
    shapes = {
        ROLE_DETECTOR: config.detector_spec.tensor_dims,
        ROLE_CRNET: config.crnet_spec.tensor_dims,
        ROLE_MULTITASK: (5, 10),
        ROLE_CRNN: (config.crnn_frames, CTC_CLASSES),
    }
    return DirectoryProvider(args.provider, shapes)


def cmd_run(args) -> int:
    root = Path(args.root)
    config = _build_config(args)
    annotations = ds.load_annotations(root, _subset_ids(args, root))
    provider = _build_provider(args, config, annotations)

    def run_one(ann: ds.MeterAnnotation) -> dict:
        try:
            dims = _image_dims(root, ann)
            path = ds.find_image(root, ann.image_id)
            pixels = load_image(path) if path and args.load_pixels else None
            image = PipelineImage(ann.image_id, dims[0], dims[1], pixels)
            trace = run_pipeline(image, provider, config.recognizer, config)
            return trace.to_record()
        except Exception as exc:  # per-image failures never abort the batch
            return {"image_id": ann.image_id, "error": f"{type(exc).__name__}: {exc}"}

    workers = _workers(args)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            records = list(pool.map(run_one, annotations))
    else:
        records = [run_one(a) for a in annotations]

    _emit("".join(json.dumps(r) + "\n" for r in records), args.out)
    errors = sum(1 for r in records if "error" in r)
    _log(f"ran {len(records)} image(s), {errors} error(s)")
    return 0


def _load_trace(path: str) -> list[dict]:
    records = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        line = line.strip()
        if line:
            records.append(json.loads(line))
    return records


def _trace_results(records: list[dict]) -> list[tuple[str, ReadingResult]]:
    out = []
    for r in records:
        if "error" in r:
            out.append((r["image_id"], ReadingResult("", (), STATUS_NEGATIVE_NO_COUNTER)))
        else:
            out.append(
                (
                    r["image_id"],
                    ReadingResult(r["reading"], tuple(r.get("confidences", ())), r["status"]),
                )
            )
    return out


def cmd_eval(args) -> int:
    annotations = ds.load_annotations(args.dataset)
    rows: list[dict] = []
    runs: list[tuple[float, float]] = []
    if args.mode == "detect":
        gts = [(a.image_id, a.counter) for a in annotations]
        for path in args.traces:
            preds = []
            for r in _load_trace(path):
                if r.get("counter_box"):
                    x, y, w, h = r["counter_box"]
                    preds.append((r["image_id"], ds.Box(x, y, w, h), r.get("counter_confidence") or 0.0))
            e = mt.eval_detection(preds, gts, args.iou_threshold)
            rows.append({"label": Path(path).stem, "kind": "detection", **vars(e)})
    else:
        gts = [(a.image_id, a.reading) for a in annotations]
        for path in args.traces:
            e = mt.eval_recognition(_trace_results(_load_trace(path)), gts)
            runs.append((e.digit_accuracy, e.counter_accuracy))
            rows.append(
                {
                    "label": Path(path).stem,
                    "kind": "recognition",
                    "digit_accuracy": e.digit_accuracy,
                    "counter_accuracy": e.counter_accuracy,
                    "images": len(e.outcomes),
                }
            )

    payload: dict = {"mode": args.mode, "rows": rows}
    if args.mode == "read" and len(runs) >= 1:
        baseline_runs = None
        if args.baseline_traces:
            baseline_runs = []
            for path in args.baseline_traces:
                e = mt.eval_recognition(_trace_results(_load_trace(path)), gts)
                baseline_runs.append((e.digit_accuracy, e.counter_accuracy))
        summary = mt.summarize_runs(runs, alpha=args.alpha, baseline=baseline_runs)
        payload["summary"] = _summary_to_dict(summary)
    _emit(json.dumps(payload, indent=2) + "\n", args.out)
    return 0


def _summary_to_dict(s: mt.RunSummary) -> dict:
    d = {
        "runs": [list(r) for r in s.runs],
        "mean": list(s.mean),
        "stddev": list(s.stddev) if s.stddev else None,
    }
    if s.t_test:
        d["t_test"] = {
            metric: {
                "t": res.t,
                "dof": res.dof,
                "p_value": res.p_value,
                "alpha": res.alpha,
                "significant": res.significant,
                "degenerate": res.degenerate,
            }
            for metric, res in sorted(s.t_test.items())
        }
    return d


def _summary_from_dict(d: dict) -> mt.RunSummary:
    t_test = None
    if d.get("t_test"):
        t_test = {
            metric: mt.TTestResult(
                t=v["t"], dof=v["dof"], p_value=v["p_value"], alpha=v["alpha"],
                significant=v["significant"], degenerate=v["degenerate"],
            )
            for metric, v in d["t_test"].items()
        }
    return mt.RunSummary(
        runs=tuple((a, b) for a, b in d["runs"]),
        mean=tuple(d["mean"]),
        stddev=tuple(d["stddev"]) if d.get("stddev") else None,
        t_test=t_test,
    )


def cmd_report(args) -> int:
    rows: list[dict] = []
    summary_rows: list[dict] = []
    for path in args.evals:
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
        for row in payload.get("rows", []):
            if row["kind"] == "detection":
                rows.append(
                    mt.detection_row(
                        row["label"],
                        mt.DetectionEval(
                            tp=row["tp"], fp=row["fp"], fn=row["fn"],
                            precision=row["precision"], recall=row["recall"],
                            f_measure=row["f_measure"], mean_iou=row["mean_iou"],
                            iou_threshold=row["iou_threshold"],
                        ),
                    )
                )
            else:
                rows.append(
                    mt.recognition_row(
                        row["label"],
                        row["digit_accuracy"],
                        row["counter_accuracy"],
                        row.get("images", 0),
                    )
                )
        if payload.get("summary"):
            summary_rows.append(
                mt.summary_row(Path(path).stem, _summary_from_dict(payload["summary"]))
            )
    rows.sort(key=lambda r: r["label"])
    summary_rows.sort(key=lambda r: r["label"])
    _emit(mt.render_rows(rows + summary_rows, fmt=args.format), args.out)
    return 0


def cmd_config(args) -> int:
    config = load_config(args.config) if args.config else PipelineConfig()
    _emit(json.dumps(config_to_dict(config), indent=2) + "\n", args.out)
    return 0


# --- parser ---------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="amrkit", description=__doc__)
    parser.add_argument("--workers", type=int, default=None, help="worker threads (default: AMR_WORKERS or cores)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="check a dataset directory for violations")
    p.add_argument("root")
    p.add_argument("--out")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("split", help="deterministic train/validation/test split")
    p.add_argument("root")
    p.add_argument("--ratios", type=_parse_ratios, default=(0.4, 0.2, 0.4))
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("stats", help="dataset statistics as JSON")
    p.add_argument("root")
    p.add_argument("--split")
    p.add_argument("--subset", default="train")
    p.add_argument("--out")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("augment", help="generate a balanced augmented set")
    p.add_argument("root")
    p.add_argument("--total", type=int, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--split")
    p.add_argument("--subset", default="train")
    p.add_argument("--brightness", type=_parse_pair, default=(0.5, 2.0))
    p.add_argument("--rotation", type=_parse_pair, default=(-5.0, 5.0))
    p.add_argument("--crop", type=_parse_pair, default=(-0.02, 0.08))
    p.set_defaults(func=cmd_augment)

    p = sub.add_parser("anchors", help="k-means anchors from counter boxes")
    p.add_argument("root")
    p.add_argument("--k", type=int, default=5)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--grid-w", type=int, default=13)
    p.add_argument("--grid-h", type=int, default=13)
    p.add_argument("--split")
    p.add_argument("--subset", default="train")
    p.add_argument("--out")
    p.set_defaults(func=cmd_anchors)

    p = sub.add_parser("run", help="run the detection+recognition pipeline")
    p.add_argument("root")
    p.add_argument("--provider", default="oracle", help="'oracle' or a directory of .amrt dumps")
    p.add_argument("--config", help="pipeline config JSON")
    p.add_argument("--recognizer", choices=("crnet", "multitask", "crnn"))
    p.add_argument("--mode", choices=("fixed5", "variable"))
    p.add_argument("--margin", type=float)
    p.add_argument("--threshold", type=float)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--jitter", type=float, default=0.0, help="oracle box jitter fraction")
    p.add_argument("--confidence-floor", type=float, default=0.9)
    p.add_argument("--load-pixels", action="store_true", help="read image pixels (real providers)")
    p.add_argument("--split")
    p.add_argument("--subset", default="test")
    p.add_argument("--out")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("eval", help="evaluate trace files against ground truth")
    p.add_argument("--mode", choices=("detect", "read"), required=True)
    p.add_argument("--traces", nargs="+", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--iou-threshold", type=float, default=0.5)
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--baseline-traces", nargs="*")
    p.add_argument("--out")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("report", help="render eval JSON files as text/json/csv")
    p.add_argument("evals", nargs="+")
    p.add_argument("--format", choices=("text", "json", "csv"), default="text")
    p.add_argument("--out")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("config", help="print the effective configuration")
    p.add_argument("--config")
    p.add_argument("--out")
    p.set_defaults(func=cmd_config)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except OSError as exc:
        _log(f"io error: {exc}")
        return 2
    except (AmrError, ValueError) as exc:
        _log(f"error: {type(exc).__name__}: {exc}")
        return 1


if __name__ == "__main__":
    sys.exit(main())
