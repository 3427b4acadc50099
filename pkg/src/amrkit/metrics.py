"""Detection and recognition evaluation, run aggregation, significance testing.

Detection follows the single-object PASCAL criterion: per image the
highest-confidence prediction counts as correct iff its IoU with the ground
truth exceeds the threshold (0.5 by default, 0.7 as the strict variant).
Recognition reports digit accuracy (correct digits / ground-truth digits) and
counter accuracy (exactly-correct readings / evaluated images).  Runs are
compared with a two-tailed paired t-test whose p-values come from a local
incomplete-beta implementation, not a table.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass
from typing import Mapping, Sequence

from .dataset import Box
from .detect import iou
from .errors import DuplicateGt, MissingGroundTruth
from .recognize import STATUS_ACCEPTED, ReadingResult


@dataclass(frozen=True)
class DetectionEval:
    """Counts and derived rates for one detection run."""

    tp: int
    fp: int
    fn: int
    precision: float
    recall: float
    f_measure: float
    mean_iou: float
    iou_threshold: float


@dataclass(frozen=True)
class ImageOutcome:
    """Per-image recognition outcome kept for error analysis."""

    image_id: str
    ground_truth: str
    reading: str
    status: str
    digits_correct: int
    digits_total: int
    counter_correct: bool


@dataclass(frozen=True)
class RecognitionEval:
    digit_accuracy: float
    counter_accuracy: float
    outcomes: tuple[ImageOutcome, ...]


@dataclass(frozen=True)
class TTestResult:
    """Paired t-test outcome; ``degenerate`` marks the zero-variance case,
    which is never significant by fiat."""

    t: float | None
    dof: int
    p_value: float | None
    alpha: float
    significant: bool
    degenerate: bool = False


@dataclass(frozen=True)
class RunSummary:
    """Mean and sample stddev over (digit, counter) accuracy runs, with an
    optional paired t-test per metric against a baseline."""

    runs: tuple[tuple[float, float], ...]
    mean: tuple[float, float]
    stddev: tuple[float, float] | None
    t_test: Mapping[str, TTestResult] | None = None


def _rate(num: int, den: int) -> float:
    return num / den if den else 0.0


def eval_detection(
    preds: Sequence[tuple[str, Box, float]],
    gts: Sequence[tuple[str, Box]],
    iou_threshold: float = 0.5,
) -> DetectionEval:
    """Match each image's best prediction against its single ground truth.

    A matched prediction with IoU strictly above the threshold is a true
    positive; otherwise it is a false positive and the ground truth counts as
    missed.  Images with no prediction count one false negative.  ``mean_iou``
    averages over matched predictions.
    """
    if not 0.0 < iou_threshold < 1.0:
        raise ValueError("iou_threshold must be in (0, 1)")
    gt_map: dict[str, Box] = {}
    for image_id, box in gts:
        if image_id in gt_map:
            raise DuplicateGt(f"image {image_id!r} has more than one ground-truth box")
        gt_map[image_id] = box

    best: dict[str, tuple[float, Box]] = {}
    for image_id, box, confidence in preds:
        if image_id not in gt_map:
            raise MissingGroundTruth(f"prediction for unknown image {image_id!r}")
        cur = best.get(image_id)
        if cur is None or confidence > cur[0]:
            best[image_id] = (confidence, box)

    tp = fp = fn = 0
    ious = []
    for image_id in sorted(gt_map):
        if image_id not in best:
            fn += 1
            continue
        overlap = iou(best[image_id][1], gt_map[image_id])
        ious.append(overlap)
        if overlap > iou_threshold:
            tp += 1
        else:
            fp += 1
            fn += 1

    precision = _rate(tp, tp + fp)
    recall = _rate(tp, tp + fn)
    f = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return DetectionEval(
        tp=tp, fp=fp, fn=fn,
        precision=precision, recall=recall, f_measure=f,
        mean_iou=sum(ious) / len(ious) if ious else 0.0,
        iou_threshold=iou_threshold,
    )


def eval_recognition(
    results: Sequence[tuple[str, ReadingResult]],
    gts: Sequence[tuple[str, str]],
) -> RecognitionEval:
    """Digit and counter accuracy against ground-truth readings.

    A counter is correct iff the result was accepted and the reading matches
    exactly.  Digits compare positionally; rejected or negative results score
    zero digits, and a length-mismatched accepted reading is compared over
    the common prefix with the ground-truth remainder counted wrong.
    """
    gt_map: dict[str, str] = {}
    for image_id, reading in gts:
        if image_id in gt_map:
            raise DuplicateGt(f"image {image_id!r} has more than one ground-truth reading")
        gt_map[image_id] = reading

    outcomes = []
    digit_correct = digit_total = counters_correct = 0
    for image_id, result in results:
        try:
            gt = gt_map[image_id]
        except KeyError:
            raise MissingGroundTruth(f"no ground truth for image {image_id!r}") from None
        if result.status == STATUS_ACCEPTED:
            matches = sum(a == b for a, b in zip(result.reading, gt))
            counter_ok = result.reading == gt
        else:
            matches = 0
            counter_ok = False
        digit_correct += matches
        digit_total += len(gt)
        counters_correct += counter_ok
        outcomes.append(
            ImageOutcome(
                image_id=image_id,
                ground_truth=gt,
                reading=result.reading,
                status=result.status,
                digits_correct=matches,
                digits_total=len(gt),
                counter_correct=counter_ok,
            )
        )
    return RecognitionEval(
        digit_accuracy=_rate(digit_correct, digit_total),
        counter_accuracy=_rate(counters_correct, len(results)),
        outcomes=tuple(sorted(outcomes, key=lambda o: o.image_id)),
    )


# --- Student's t machinery ---------------------------------------------------

def _beta_cf(a: float, b: float, x: float) -> float:
    # continued fraction for the incomplete beta (modified Lentz)
    tiny = 1e-300
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < tiny:
        d = tiny
    d = 1.0 / d
    h = d
    for m in range(1, 400):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + aa / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + aa / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < 1e-15:
            break
    return h


def incomplete_beta(a: float, b: float, x: float) -> float:
    """Regularized incomplete beta I_x(a, b), absolute error below 1e-8."""
    if not 0.0 <= x <= 1.0:
        raise ValueError("x must be in [0, 1]")
    if x == 0.0 or x == 1.0:
        return x
    ln_front = (
        math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
        + a * math.log(x) + b * math.log(1.0 - x)
    )
    front = math.exp(ln_front)
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _beta_cf(a, b, x) / a
    return 1.0 - front * _beta_cf(b, a, 1.0 - x) / b


def t_two_tailed_p(t: float, dof: int) -> float:
    """Two-tailed p-value of a t statistic."""
    if dof < 1:
        raise ValueError("dof must be >= 1")
    x = dof / (dof + t * t)
    return incomplete_beta(dof / 2.0, 0.5, x)


def t_critical(alpha: float, dof: int) -> float:
    """Two-tailed critical value: |t| above it is significant at alpha."""
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must be in (0, 1)")
    lo, hi = 0.0, 1e6
    for _ in range(200):
        mid = (lo + hi) / 2
        if t_two_tailed_p(mid, dof) > alpha:
            lo = mid
        else:
            hi = mid
    return (lo + hi) / 2


def paired_t_test(baseline: Sequence[float], runs: Sequence[float], alpha: float = 0.05) -> TTestResult:
    """Paired two-tailed t-test of ``runs`` against ``baseline``.

    t = mean(d) / (sd(d) / sqrt(n)) on the per-run differences
    d = runs - baseline.  Equal differences everywhere make t undefined;
    that zero-variance case comes back degenerate and not significant.
    """
    if len(baseline) != len(runs):
        raise ValueError("paired test needs equal-length runs")
    n = len(runs)
    if n < 2:
        raise ValueError("paired test needs at least 2 runs")
    d = [r - b for b, r in zip(baseline, runs)]
    mean_d = sum(d) / n
    var = sum((v - mean_d) ** 2 for v in d) / (n - 1)
    dof = n - 1
    if var == 0.0:
        return TTestResult(t=None, dof=dof, p_value=None, alpha=alpha, significant=False, degenerate=True)
    t = mean_d / math.sqrt(var / n)
    p = t_two_tailed_p(t, dof)
    return TTestResult(t=t, dof=dof, p_value=p, alpha=alpha, significant=p < alpha)


def _column(runs: Sequence[tuple[float, float]], i: int) -> list[float]:
    return [r[i] for r in runs]


def _mean_std(values: Sequence[float]) -> tuple[float, float | None]:
    n = len(values)
    mean = sum(values) / n
    if n < 2:
        return mean, None
    var = sum((v - mean) ** 2 for v in values) / (n - 1)
    return mean, math.sqrt(var)


def summarize_runs(
    runs: Sequence[tuple[float, float]],
    alpha: float = 0.05,
    baseline: Sequence[tuple[float, float]] | None = None,
) -> RunSummary:
    """Mean and sample stddev of (digit, counter) accuracies over runs.

    With a same-length ``baseline``, a paired t-test per metric is attached;
    the difference direction is runs minus baseline.
    """
    if not runs:
        raise ValueError("need at least one run")
    runs = tuple((float(a), float(b)) for a, b in runs)
    digit_mean, digit_std = _mean_std(_column(runs, 0))
    counter_mean, counter_std = _mean_std(_column(runs, 1))
    t_test = None
    if baseline is not None:
        baseline = tuple((float(a), float(b)) for a, b in baseline)
        t_test = {
            "digits": paired_t_test(_column(baseline, 0), _column(runs, 0), alpha),
            "counters": paired_t_test(_column(baseline, 1), _column(runs, 1), alpha),
        }
    stddev = None if digit_std is None else (digit_std, counter_std)
    return RunSummary(runs=runs, mean=(digit_mean, counter_mean), stddev=stddev, t_test=t_test)


# --- report rendering ---------------------------------------------------------

def _pct(v: float) -> float:
    return round(v * 100.0, 2)


def detection_row(label: str, e: DetectionEval) -> dict:
    return {
        "label": label,
        "kind": "detection",
        "iou_threshold": e.iou_threshold,
        "tp": e.tp,
        "fp": e.fp,
        "fn": e.fn,
        "precision_pct": _pct(e.precision),
        "recall_pct": _pct(e.recall),
        "f_measure_pct": _pct(e.f_measure),
        "mean_iou_pct": _pct(e.mean_iou),
    }


def recognition_row(
    label: str, digit_accuracy: float, counter_accuracy: float, images: int
) -> dict:
    return {
        "label": label,
        "kind": "recognition",
        "images": images,
        "digit_accuracy_pct": _pct(digit_accuracy),
        "counter_accuracy_pct": _pct(counter_accuracy),
    }


def summary_row(label: str, s: RunSummary) -> dict:
    row = {
        "label": label,
        "kind": "summary",
        "runs": len(s.runs),
        "digit_mean_pct": _pct(s.mean[0]),
        "counter_mean_pct": _pct(s.mean[1]),
        "digit_std_pct": _pct(s.stddev[0]) if s.stddev else None,
        "counter_std_pct": _pct(s.stddev[1]) if s.stddev else None,
    }
    if s.t_test:
        for metric, res in sorted(s.t_test.items()):
            row[f"{metric}_t"] = None if res.t is None else round(res.t, 6)
            row[f"{metric}_significant"] = res.significant
            row[f"{metric}_degenerate"] = res.degenerate
    return row


def render_report(
    evals: Sequence[tuple[str, DetectionEval | RecognitionEval]],
    summaries: Sequence[tuple[str, RunSummary]] = (),
    fmt: str = "text",
) -> str:
    """Render evaluations as text, json, or csv; numbers agree across formats."""
    rows: list[dict] = []
    for label, e in sorted(evals, key=lambda le: le[0]):
        if isinstance(e, DetectionEval):
            rows.append(detection_row(label, e))
        elif isinstance(e, RecognitionEval):
            rows.append(recognition_row(label, e.digit_accuracy, e.counter_accuracy, len(e.outcomes)))
        else:
            raise TypeError(f"cannot report {type(e).__name__}")
    for label, s in sorted(summaries, key=lambda ls: ls[0]):
        rows.append(summary_row(label, s))
    return render_rows(rows, fmt)


def render_rows(rows: Sequence[dict], fmt: str = "text") -> str:
    """Render prepared report rows; the backend shared by all formats."""
    rows = list(rows)
    if fmt == "json":
        return json.dumps({"rows": rows}, indent=2, sort_keys=True) + "\n"
    if fmt == "csv":
        fields: list[str] = []
        for row in rows:
            for key in row:
                if key not in fields:
                    fields.append(key)
        buf = io.StringIO()
        writer = csv.DictWriter(buf, fieldnames=fields)
        writer.writeheader()
        writer.writerows(rows)
        return buf.getvalue()
    if fmt == "text":
        if not rows:
            return "(no evaluations)\n"
        lines = []
        for row in rows:
            parts = [f"{row['label']} [{row['kind']}]"]
            for key, value in row.items():
                if key in ("label", "kind") or value is None:
                    continue
                parts.append(f"{key}={value}")
            lines.append("  ".join(parts))
        return "\n".join(lines) + "\n"
    raise ValueError(f"unknown format {fmt!r}")
