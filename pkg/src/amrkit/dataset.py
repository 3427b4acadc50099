"""Annotated meter dataset handling: parsing, splits, statistics, validation.

Annotation files are line-oriented ``key: values`` text, one file per image
with the same stem::

    camera: iPhone 6s
    counter: 100 200 600 160
    reading: 04063
    digit: 120 210 80 140     (exactly 5 such lines, left-to-right)
"""

from __future__ import annotations

import json
import math
import random
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    CountMismatch,
    EmptyDataset,
    GeometryError,
    InvalidPair,
    InvalidReading,
    MalformedLine,
)

NUM_DIGITS = 5
NUM_CLASSES = 10
IMAGE_SUFFIXES = (".jpg", ".png")


class UnsortedDigitsWarning(UserWarning):
    """Digit lines in an annotation file were not left-to-right."""


@dataclass(frozen=True)
class Box:
    """Axis-aligned rectangle in pixel units; (x, y) is the top-left corner."""

    x: float
    y: float
    w: float
    h: float

    def __post_init__(self):
        if not all(math.isfinite(v) for v in (self.x, self.y, self.w, self.h)):
            raise GeometryError(f"box has non-finite coordinates: {self!r}")
        if self.w <= 0 or self.h <= 0:
            raise GeometryError(f"box sides must be positive, got w={self.w}, h={self.h}")

    @property
    def x2(self) -> float:
        return self.x + self.w

    @property
    def y2(self) -> float:
        return self.y + self.h

    @property
    def cx(self) -> float:
        return self.x + self.w / 2

    @property
    def cy(self) -> float:
        return self.y + self.h / 2

    @property
    def area(self) -> float:
        return self.w * self.h

    def contains_point(self, px: float, py: float) -> bool:
        return self.x <= px <= self.x2 and self.y <= py <= self.y2

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.x, self.y, self.w, self.h)


@dataclass(frozen=True)
class MeterAnnotation:
    """One image's ground truth: camera tag, counter box, 5 digit boxes, reading."""

    image_id: str
    camera: str
    counter: Box
    digits: tuple[Box, ...]
    reading: str

    def __post_init__(self):
        if len(self.digits) != NUM_DIGITS:
            raise CountMismatch(f"expected {NUM_DIGITS} digit boxes, got {len(self.digits)}")
        if len(self.reading) != NUM_DIGITS or any(c not in "0123456789" for c in self.reading):
            raise InvalidReading(f"reading must be {NUM_DIGITS} decimal digits, got {self.reading!r}")
        for box in (self.counter, *self.digits):
            if box.x < 0 or box.y < 0:
                raise GeometryError(f"annotation box has negative origin: {box!r}")
        centers = [d.cx for d in self.digits]
        if any(b <= a for a, b in zip(centers, centers[1:])):
            raise GeometryError("digit boxes must be strictly left-to-right by x-center")
        for i, d in enumerate(self.digits):
            if not self.counter.contains_point(d.cx, d.cy):
                raise GeometryError(f"digit {i} center ({d.cx}, {d.cy}) lies outside the counter box")


@dataclass(frozen=True)
class DatasetSplit:
    """Disjoint train/validation/test id lists plus the seed that produced them."""

    train: tuple[str, ...]
    validation: tuple[str, ...]
    test: tuple[str, ...]
    seed: int

    def all_ids(self) -> tuple[str, ...]:
        return self.train + self.validation + self.test

    def subset(self, name: str) -> tuple[str, ...]:
        try:
            return {"train": self.train, "validation": self.validation, "test": self.test}[name]
        except KeyError:
            raise ValueError(f"unknown subset {name!r}") from None


@dataclass(frozen=True)
class SizeStats:
    """Dimension-wise min/max/mean of box widths and heights, in pixels."""

    min_w: float
    min_h: float
    max_w: float
    max_h: float
    mean_w: float
    mean_h: float


@dataclass(frozen=True, eq=False)
class DatasetStats:
    """Aggregate statistics over a list of annotations.

    ``digit_frequency`` is a 10x5 count matrix: row = digit class, column =
    reading position; its total equals 5x the number of images.
    """

    image_count: int
    camera_counts: dict[str, int]
    counter_sizes: SizeStats
    digit_sizes: SizeStats
    counter_aspect_ratio: float
    digit_aspect_ratio: float
    digit_frequency: np.ndarray

    def to_dict(self) -> dict:
        return {
            "image_count": self.image_count,
            "camera_counts": dict(sorted(self.camera_counts.items())),
            "counter_sizes": vars(self.counter_sizes).copy(),
            "digit_sizes": vars(self.digit_sizes).copy(),
            "counter_aspect_ratio": round(self.counter_aspect_ratio, 2),
            "digit_aspect_ratio": round(self.digit_aspect_ratio, 2),
            "digit_frequency": self.digit_frequency.tolist(),
        }


@dataclass(frozen=True)
class Violation:
    """One dataset-validation finding; data, not an exception."""

    kind: str
    detail: str


def _format_number(v: float) -> str:
    v = float(v)
    return str(int(v)) if v.is_integer() else repr(v)


def _parse_box(value: str, lineno: int) -> Box:
    parts = value.split()
    if len(parts) != 4:
        raise MalformedLine(f"line {lineno}: expected 4 values, got {len(parts)}")
    try:
        x, y, w, h = (float(p) for p in parts)
    except ValueError:
        raise MalformedLine(f"line {lineno}: values must be numeric: {value!r}") from None
    return Box(x, y, w, h)


def parse_annotation(text: str, image_id: str = "") -> MeterAnnotation:
    """Parse one annotation file's text into a :class:`MeterAnnotation`.

    Digit lines are re-sorted left-to-right if necessary; originally unsorted
    input raises an :class:`UnsortedDigitsWarning`, not an error.
    """
    camera = None
    counter = None
    reading = None
    digits: list[Box] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        key, sep, value = line.partition(":")
        if not sep:
            raise MalformedLine(f"line {lineno}: missing ':' separator")
        key = key.strip()
        value = value.strip()
        if key == "camera":
            if camera is not None:
                raise MalformedLine(f"line {lineno}: duplicate 'camera'")
            camera = value
        elif key == "counter":
            if counter is not None:
                raise MalformedLine(f"line {lineno}: duplicate 'counter'")
            counter = _parse_box(value, lineno)
        elif key == "reading":
            if reading is not None:
                raise MalformedLine(f"line {lineno}: duplicate 'reading'")
            reading = value
        elif key == "digit":
            digits.append(_parse_box(value, lineno))
        else:
            raise MalformedLine(f"line {lineno}: unknown key {key!r}")
    for name, field in (("camera", camera), ("counter", counter), ("reading", reading)):
        if field is None:
            raise MalformedLine(f"missing required key {name!r}")
    if len(digits) != NUM_DIGITS:
        raise CountMismatch(f"expected {NUM_DIGITS} digit lines, got {len(digits)}")

    order = sorted(range(len(digits)), key=lambda i: digits[i].cx)
    if order != list(range(len(digits))):
        warnings.warn("digit lines were not left-to-right; re-sorted", UnsortedDigitsWarning)
        digits = [digits[i] for i in order]
    return MeterAnnotation(image_id, camera, counter, tuple(digits), reading)


def serialize_annotation(ann: MeterAnnotation) -> str:
    """Render an annotation in canonical file form (LF endings, shortest numbers)."""
    lines = [
        f"camera: {ann.camera}",
        "counter: " + " ".join(_format_number(v) for v in ann.counter.as_tuple()),
        f"reading: {ann.reading}",
    ]
    for d in ann.digits:
        lines.append("digit: " + " ".join(_format_number(v) for v in d.as_tuple()))
    return "\n".join(lines) + "\n"


def resolve_transition_digit(lower: int, upper: int) -> int:
    """Ground-truth label for a rotating digit caught between two drum positions.

    The label is the digit the drum is leaving: (4, 5) -> 4.  On the 9 -> 0
    wrap the carry has not completed, so the label stays 9.
    """
    if not (0 <= lower <= 9 and 0 <= upper <= 9) or upper != (lower + 1) % 10:
        raise InvalidPair(f"({lower}, {upper}) is not an adjacent dial pair")
    return lower


def _apportion(n: int, ratios: Sequence[float]) -> list[int]:
    # floor each share, then hand out the remainder by descending fractional part
    shares = [r * n for r in ratios]
    sizes = [int(math.floor(s)) for s in shares]
    remainder = n - sum(sizes)
    by_frac = sorted(range(len(ratios)), key=lambda i: (-(shares[i] - sizes[i]), i))
    for i in by_frac[:remainder]:
        sizes[i] += 1
    return sizes


def split_dataset(ids: Iterable[str], ratios: tuple[float, float, float], seed: int) -> DatasetSplit:
    """Deterministically split image ids into train/validation/test.

    Ids are sorted lexicographically and shuffled with ``seed``; subset sizes
    are floor(ratio * N) with the remainder distributed by largest fractional
    part, so 2000 ids at (0.4, 0.2, 0.4) give exactly (800, 400, 800).
    """
    ids = sorted(ids)
    if len(ids) < 3:
        raise EmptyDataset(f"need at least 3 ids to split, got {len(ids)}")
    if len(set(ids)) != len(ids):
        raise ValueError("duplicate image ids")
    if len(ratios) != 3 or any(r <= 0 for r in ratios):
        raise ValueError(f"ratios must be 3 positive numbers, got {ratios!r}")
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise ValueError(f"ratios must sum to 1, got {sum(ratios)!r}")

    sizes = _apportion(len(ids), ratios)
    shuffled = list(ids)
    random.Random(seed).shuffle(shuffled)
    n_train, n_val, _ = sizes
    return DatasetSplit(
        train=tuple(shuffled[:n_train]),
        validation=tuple(shuffled[n_train:n_train + n_val]),
        test=tuple(shuffled[n_train + n_val:]),
        seed=seed,
    )


def save_split(split: DatasetSplit, path: str | Path) -> None:
    payload = {
        "train": list(split.train),
        "validation": list(split.validation),
        "test": list(split.test),
        "seed": split.seed,
    }
    Path(path).write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")


def load_split(path: str | Path) -> DatasetSplit:
    payload = json.loads(Path(path).read_text(encoding="utf-8"))
    return DatasetSplit(
        train=tuple(payload["train"]),
        validation=tuple(payload["validation"]),
        test=tuple(payload["test"]),
        seed=int(payload["seed"]),
    )


def _size_stats(ws: np.ndarray, hs: np.ndarray) -> SizeStats:
    return SizeStats(
        min_w=float(ws.min()), min_h=float(hs.min()),
        max_w=float(ws.max()), max_h=float(hs.max()),
        mean_w=float(ws.mean()), mean_h=float(hs.mean()),
    )


def compute_stats(annotations: Sequence[MeterAnnotation]) -> DatasetStats:
    """Camera counts, counter/digit size ranges, and the 10x5 digit-frequency matrix."""
    if not annotations:
        raise EmptyDataset("no annotations")
    camera_counts: dict[str, int] = {}
    for ann in annotations:
        camera_counts[ann.camera] = camera_counts.get(ann.camera, 0) + 1

    counter_w = np.array([a.counter.w for a in annotations], dtype=float)
    counter_h = np.array([a.counter.h for a in annotations], dtype=float)
    digit_w = np.array([d.w for a in annotations for d in a.digits], dtype=float)
    digit_h = np.array([d.h for a in annotations for d in a.digits], dtype=float)

    freq = np.zeros((NUM_CLASSES, NUM_DIGITS), dtype=np.int64)
    for ann in annotations:
        for pos, ch in enumerate(ann.reading):
            freq[int(ch), pos] += 1

    return DatasetStats(
        image_count=len(annotations),
        camera_counts=camera_counts,
        counter_sizes=_size_stats(counter_w, counter_h),
        digit_sizes=_size_stats(digit_w, digit_h),
        counter_aspect_ratio=float(counter_w.mean() / counter_h.mean()),
        digit_aspect_ratio=float(digit_w.mean() / digit_h.mean()),
        digit_frequency=freq,
    )


def _check_pair(root: Path, image_id: str, has_image: bool) -> Violation | None:
    if not has_image:
        return Violation("MissingImage", "annotation file has no image")
    txt = root / f"{image_id}.txt"
    if not txt.exists():
        return Violation("MissingAnnotation", "image has no annotation file")
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", UnsortedDigitsWarning)
            parse_annotation(txt.read_text(encoding="utf-8"), image_id)
    except (MalformedLine, CountMismatch, InvalidReading, GeometryError) as exc:
        return Violation(type(exc).__name__, str(exc))
    return None


def validate_dataset(root: str | Path, workers: int | None = None) -> list[tuple[str, Violation]]:
    """Check every image/annotation pair under ``root``.

    Returns all violations sorted by image id; an empty list means the dataset
    is valid.  Only filesystem problems raise (OSError).
    """
    root = Path(root)
    if not root.is_dir():
        raise FileNotFoundError(f"dataset root {root} is not a directory")

    image_ids = {p.stem for p in root.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES}
    ann_ids = {p.stem for p in root.iterdir() if p.suffix.lower() == ".txt"}
    all_ids = sorted(image_ids | ann_ids)

    def check(image_id: str) -> Violation | None:
        return _check_pair(root, image_id, image_id in image_ids)

    if workers and workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            found = list(pool.map(check, all_ids))
    else:
        found = [check(i) for i in all_ids]
    return [(i, v) for i, v in zip(all_ids, found) if v is not None]


def load_annotations(root: str | Path, ids: Iterable[str] | None = None) -> list[MeterAnnotation]:
    """Load annotations from a dataset directory, sorted by image id."""
    root = Path(root)
    if not root.is_dir():
        raise FileNotFoundError(f"dataset root {root} is not a directory")
    if ids is None:
        ids = sorted(p.stem for p in root.iterdir() if p.suffix.lower() == ".txt")
    else:
        ids = sorted(ids)
    out = []
    for image_id in ids:
        text = (root / f"{image_id}.txt").read_text(encoding="utf-8")
        out.append(parse_annotation(text, image_id))
    return out


def find_image(root: str | Path, image_id: str) -> Path | None:
    """Path of the image file for ``image_id``, or None when absent."""
    root = Path(root)
    for suffix in IMAGE_SUFFIXES:
        p = root / f"{image_id}{suffix}"
        if p.exists():
            return p
    return None
