"""Small numpy raster toolbox: bilinear resize/rotate, brightness, crops, PNG io.

Rasters are uint8 arrays, (H, W) grayscale or (H, W, 3) RGB.  All resampling
is bilinear with half-pixel centers, so a same-size resize and a zero-degree
rotation are exact identities.
"""

from __future__ import annotations

import math
from pathlib import Path

import numpy as np
from PIL import Image

from .dataset import Box


def _sample_bilinear(img: np.ndarray, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    # sample img at float coords with edge replication
    h, w = img.shape[:2]
    x0 = np.clip(np.floor(xs).astype(np.int64), 0, w - 1)
    y0 = np.clip(np.floor(ys).astype(np.int64), 0, h - 1)
    x1 = np.clip(x0 + 1, 0, w - 1)
    y1 = np.clip(y0 + 1, 0, h - 1)
    fx = np.clip(xs - x0, 0.0, 1.0)
    fy = np.clip(ys - y0, 0.0, 1.0)
    if img.ndim == 3:
        fx = fx[..., None]
        fy = fy[..., None]
    p = img.astype(np.float64)
    top = p[y0, x0] * (1 - fx) + p[y0, x1] * fx
    bottom = p[y1, x0] * (1 - fx) + p[y1, x1] * fx
    return top * (1 - fy) + bottom * fy


def _to_uint8(values: np.ndarray) -> np.ndarray:
    return np.clip(np.rint(values), 0, 255).astype(np.uint8)


def resize_bilinear(img: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Resize to (out_h, out_w); a same-size call returns an exact copy."""
    h, w = img.shape[:2]
    if (h, w) == (out_h, out_w):
        return img.copy()
    sx = w / out_w
    sy = h / out_h
    xs = (np.arange(out_w, dtype=np.float64) + 0.5) * sx - 0.5
    ys = (np.arange(out_h, dtype=np.float64) + 0.5) * sy - 0.5
    grid_x, grid_y = np.meshgrid(xs, ys)
    return _to_uint8(_sample_bilinear(img, grid_x, grid_y))


def rotate_bilinear(img: np.ndarray, degrees: float) -> np.ndarray:
    """Rotate about the raster center, same output size, edge-replicate fill."""
    if degrees == 0.0:
        return img.copy()
    h, w = img.shape[:2]
    cx = (w - 1) / 2.0
    cy = (h - 1) / 2.0
    theta = math.radians(degrees)
    cos_t, sin_t = math.cos(theta), math.sin(theta)
    ox, oy = np.meshgrid(np.arange(w, dtype=np.float64), np.arange(h, dtype=np.float64))
    dx = ox - cx
    dy = oy - cy
    # inverse mapping: where did each output pixel come from
    xs = cos_t * dx + sin_t * dy + cx
    ys = -sin_t * dx + cos_t * dy + cy
    return _to_uint8(_sample_bilinear(img, xs, ys))


def rotate_box(box: Box, degrees: float, center: tuple[float, float]) -> Box:
    """Axis-aligned bounding box of a box's corners rotated about ``center``."""
    if degrees == 0.0:
        return box
    cx, cy = center
    theta = math.radians(degrees)
    cos_t, sin_t = math.cos(theta), math.sin(theta)
    corners = [(box.x, box.y), (box.x2, box.y), (box.x, box.y2), (box.x2, box.y2)]
    rx, ry = [], []
    for px, py in corners:
        dx, dy = px - cx, py - cy
        rx.append(cos_t * dx - sin_t * dy + cx)
        ry.append(sin_t * dx + cos_t * dy + cy)
    return Box(min(rx), min(ry), max(rx) - min(rx), max(ry) - min(ry))


def adjust_brightness(img: np.ndarray, factor: float) -> np.ndarray:
    """Multiply all channels by ``factor``, clamped to the uint8 range."""
    if factor < 0:
        raise ValueError("brightness factor must be >= 0")
    return _to_uint8(img.astype(np.float64) * factor)


def clamp_box(box: Box, width: float, height: float) -> Box:
    """Clamp a box to raster bounds; degenerate results raise from Box."""
    x0 = min(max(box.x, 0.0), width)
    y0 = min(max(box.y, 0.0), height)
    x1 = min(max(box.x2, 0.0), width)
    y1 = min(max(box.y2, 0.0), height)
    return Box(x0, y0, x1 - x0, y1 - y0)


def pixel_rect(box: Box, width: int, height: int) -> tuple[int, int, int, int]:
    """Integer (x0, y0, x1, y1) covering a float box, at least 1px each side."""
    x0 = min(max(int(round(box.x)), 0), width - 1)
    y0 = min(max(int(round(box.y)), 0), height - 1)
    x1 = min(max(int(round(box.x2)), x0 + 1), width)
    y1 = min(max(int(round(box.y2)), y0 + 1), height)
    return x0, y0, x1, y1


def extract_patch(img: np.ndarray, box: Box) -> np.ndarray:
    h, w = img.shape[:2]
    x0, y0, x1, y1 = pixel_rect(box, w, h)
    return img[y0:y1, x0:x1].copy()


def crop_resize(img: np.ndarray, box: Box, out_h: int, out_w: int) -> np.ndarray:
    """Crop a region and resize it to (out_h, out_w) bilinearly."""
    return resize_bilinear(extract_patch(img, box), out_h, out_w)


def load_image(path: str | Path) -> np.ndarray:
    """Read an image file as a uint8 array (RGB, or grayscale if stored so)."""
    with Image.open(path) as im:
        if im.mode not in ("L", "RGB"):
            im = im.convert("RGB")
        return np.asarray(im, dtype=np.uint8).copy()


def save_png(img: np.ndarray, path: str | Path) -> None:
    Image.fromarray(img).save(Path(path), format="PNG")


def image_size(path: str | Path) -> tuple[int, int]:
    """(width, height) from the file header without decoding pixels."""
    with Image.open(path) as im:
        return im.size
