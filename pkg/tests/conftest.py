import numpy as np
import pytest

from amrkit.dataset import Box, MeterAnnotation, serialize_annotation
from amrkit.raster import save_png


def synth_annotation(image_id, reading, seed=0, image_w=1280, image_h=960):
    """Random but valid annotation: wide counter, 5 digit boxes with margins."""
    rng = np.random.default_rng(seed)
    cw = rng.uniform(0.3, 0.6) * image_w
    ch = cw / rng.uniform(3.2, 4.2)
    cx = rng.uniform(0, image_w - cw)
    cy = rng.uniform(0, image_h - ch)
    slot = cw / 5
    digits = tuple(
        Box(cx + i * slot + slot * 0.2, cy + ch * 0.15, slot * 0.6, ch * 0.7) for i in range(5)
    )
    return MeterAnnotation(image_id, "cam-a", Box(cx, cy, cw, ch), digits, reading)


def synth_pool(count, seed=0, image_w=1280, image_h=960):
    """Pool of annotations with random readings."""
    rng = np.random.default_rng(seed)
    return [
        synth_annotation(
            f"m{i:04d}",
            "".join(str(d) for d in rng.integers(0, 10, 5)),
            seed=seed * 10_000 + i,
            image_w=image_w,
            image_h=image_h,
        )
        for i in range(count)
    ]


def balanced_pool(count=20, seed=11, image_w=320, image_h=240):
    """Pool whose 5*count digits contain every class equally often."""
    assert (count * 5) % 10 == 0
    deck = [d for d in range(10) for _ in range(count * 5 // 10)]
    rng = np.random.default_rng(seed)
    rng.shuffle(deck)
    readings = ["".join(str(deck[i * 5 + j]) for j in range(5)) for i in range(count)]
    return [
        synth_annotation(f"m{i:04d}", r, seed=seed * 1000 + i, image_w=image_w, image_h=image_h)
        for i, r in enumerate(readings)
    ]


def counter_raster(ann, seed=0):
    """Counter-crop raster whose digit regions carry distinct flat colors."""
    w = int(round(ann.counter.w))
    h = int(round(ann.counter.h))
    rng = np.random.default_rng(seed)
    img = np.full((h, w, 3), 40, dtype=np.uint8)
    img += rng.integers(0, 20, img.shape, dtype=np.uint8)
    for i, d in enumerate(ann.digits):
        x0 = int(round(d.x - ann.counter.x))
        y0 = int(round(d.y - ann.counter.y))
        x1 = x0 + int(round(d.w))
        y1 = y0 + int(round(d.h))
        img[y0:y1, x0:x1] = (60 + 20 * i, 200 - 25 * i, 90 + 13 * int(ann.reading[i]))
    return img


def write_toy_dataset(root, annotations, with_images=True, image_w=1280, image_h=960):
    """Materialize annotations (and flat PNG images) under a directory."""
    root.mkdir(parents=True, exist_ok=True)
    for ann in annotations:
        (root / f"{ann.image_id}.txt").write_text(serialize_annotation(ann), encoding="utf-8")
        if with_images:
            w = max(image_w, int(ann.counter.x2) + 1)
            h = max(image_h, int(ann.counter.y2) + 1)
            img = np.full((h, w, 3), 120, dtype=np.uint8)
            x0, y0 = int(ann.counter.x), int(ann.counter.y)
            patch = counter_raster(ann)
            img[y0:y0 + patch.shape[0], x0:x0 + patch.shape[1]] = patch
            save_png(img, root / f"{ann.image_id}.png")
    return root


@pytest.fixture
def toy_root(tmp_path):
    anns = [synth_annotation(f"m{i:03d}", r, seed=i) for i, r in enumerate(["04063", "12345", "90210"])]
    return write_toy_dataset(tmp_path / "data", anns)
