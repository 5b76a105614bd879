"""Pixel-level primitives used by the native labeling functions.

Gray images are 2-D ``uint8`` arrays (0 = black, 255 = white) and binary
maps are 2-D ``bool`` arrays (True = foreground).  All functions are pure.
Borders are handled by edge replication unless noted otherwise.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import ndimage

from .errors import ConfigError, DataError

EIGHT_CONNECTED = np.ones((3, 3), dtype=bool)

SOBEL_X = np.array([[-1, 0, 1], [-2, 0, 2], [-1, 0, 1]], dtype=np.float64)
SOBEL_Y = SOBEL_X.T.copy()


@dataclass(frozen=True, order=True)
class WordBox:
    """Axis-aligned pixel rectangle; ``x, y`` is the top-left corner."""

    x: int
    y: int
    w: int
    h: int

    def __post_init__(self):
        if self.x < 0 or self.y < 0 or self.w < 1 or self.h < 1:
            raise ValueError(f"invalid box {self.x} {self.y} {self.w} {self.h}")

    @property
    def x1(self) -> int:
        return self.x + self.w

    @property
    def y1(self) -> int:
        return self.y + self.h

    @property
    def area(self) -> int:
        return self.w * self.h

    @classmethod
    def from_corners(cls, x0: int, y0: int, x1: int, y1: int) -> "WordBox":
        return cls(int(x0), int(y0), int(x1 - x0), int(y1 - y0))

    def fits(self, width: int, height: int) -> bool:
        return self.x1 <= width and self.y1 <= height


def clip_box(x0: int, y0: int, x1: int, y1: int, width: int, height: int) -> WordBox | None:
    """Clamp corner coordinates to the image; ``None`` if nothing is left."""
    x0, y0 = max(0, x0), max(0, y0)
    x1, y1 = min(width, x1), min(height, y1)
    if x1 <= x0 or y1 <= y0:
        return None
    return WordBox.from_corners(x0, y0, x1, y1)


@dataclass(frozen=True)
class ComponentLabeling:
    labels: np.ndarray  # int32, 0 = background
    count: int

    @property
    def shape(self):
        return self.labels.shape


def as_gray(img) -> np.ndarray:
    arr = np.asarray(img)
    if arr.ndim != 2 or arr.size == 0:
        raise ValueError(f"expected a non-empty 2-D image, got shape {arr.shape}")
    if arr.dtype != np.uint8:
        if arr.min() < 0 or arr.max() > 255:
            raise ValueError("gray intensities must lie in [0, 255]")
        arr = arr.astype(np.uint8)
    return arr


def otsu_threshold(img) -> int | None:
    """Otsu threshold ``t`` splitting pixels into ``< t`` and ``>= t``.

    The first maximizer of the between-class variance over t = 1..255 is
    returned; ``None`` for a constant image.
    """
    img = as_gray(img)
    hist = np.bincount(img.ravel(), minlength=256).astype(np.float64)
    total = hist.sum()
    levels = np.arange(256, dtype=np.float64)
    # class "low" holds values < t, for t = 1..255
    w0 = np.cumsum(hist)[:-1]
    s0 = np.cumsum(hist * levels)[:-1]
    w1 = total - w0
    s1 = s0[-1] + hist[-1] * 255.0 - s0
    valid = (w0 > 0) & (w1 > 0)
    if not valid.any():
        return None
    with np.errstate(divide="ignore", invalid="ignore"):
        between = w0 * w1 * (s0 / w0 - s1 / w1) ** 2
    between[~valid] = -1.0
    return int(np.argmax(between)) + 1


def otsu_binarize(img, ink_is_dark: bool = True) -> np.ndarray:
    img = as_gray(img)
    t = otsu_threshold(img)
    if t is None:
        return np.zeros(img.shape, dtype=bool)
    return img < t if ink_is_dark else img >= t


def _correlate(img: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    return ndimage.correlate(img.astype(np.float64), kernel, mode="nearest")


def sobel_gradients(img) -> tuple[np.ndarray, np.ndarray]:
    arr = np.asarray(img, dtype=np.float64)
    return _correlate(arr, SOBEL_X), _correlate(arr, SOBEL_Y)


def sobel_magnitude(img) -> np.ndarray:
    gx, gy = sobel_gradients(img)
    return np.hypot(gx, gy)


def gaussian_kernel(size: int = 5, sigma: float = 1.4) -> np.ndarray:
    half = size // 2
    ax = np.arange(-half, half + 1, dtype=np.float64)
    g = np.exp(-(ax**2) / (2.0 * sigma**2))
    k = np.outer(g, g)
    return k / k.sum()


# (before, after) neighbour offsets for each quantized gradient direction
_NMS_OFFSETS = (
    ((0, -1), (0, 1)),  # ~0 deg: horizontal gradient
    ((-1, -1), (1, 1)),  # ~45 deg
    ((-1, 0), (1, 0)),  # ~90 deg: vertical gradient
    ((-1, 1), (1, -1)),  # ~135 deg
)


def quantize_direction(gx: np.ndarray, gy: np.ndarray) -> np.ndarray:
    angle = np.degrees(np.arctan2(gy, gx)) % 180.0
    sector = np.zeros(angle.shape, dtype=np.int8)
    sector[(angle >= 22.5) & (angle < 67.5)] = 1
    sector[(angle >= 67.5) & (angle < 112.5)] = 2
    sector[(angle >= 112.5) & (angle < 157.5)] = 3
    return sector


def non_maximum_suppression(mag: np.ndarray, sector: np.ndarray) -> np.ndarray:
    """Keep pixels that dominate their two neighbours across the edge.

    Ties are broken towards the "after" neighbour (``>=`` before, ``>``
    after) so a symmetric step yields a one-pixel-wide line.
    """
    h, w = mag.shape
    padded = np.pad(mag, 1, mode="edge")
    keep = np.zeros(mag.shape, dtype=bool)
    for s, ((bi, bj), (ai, aj)) in enumerate(_NMS_OFFSETS):
        before = padded[1 + bi : 1 + bi + h, 1 + bj : 1 + bj + w]
        after = padded[1 + ai : 1 + ai + h, 1 + aj : 1 + aj + w]
        keep |= (sector == s) & (mag >= before) & (mag > after)
    return np.where(keep & (mag > 0), mag, 0.0)


def hysteresis(nms: np.ndarray, low: float, high: float) -> np.ndarray:
    weak = (nms > 0) & (nms >= low)
    strong = weak & (nms >= high)
    labels, count = ndimage.label(weak, structure=EIGHT_CONNECTED)
    if count == 0:
        return np.zeros(nms.shape, dtype=bool)
    seeded = np.zeros(count + 1, dtype=bool)
    seeded[np.unique(labels[strong])] = True
    seeded[0] = False
    return seeded[labels]


def canny(img, low: float, high: float, ksize: int = 5, sigma: float = 1.4) -> np.ndarray:
    """Canny edge map (True = edge pixel).

    Thresholds are absolute Sobel magnitudes of the smoothed image.
    """
    if low < 0 or low > high:
        raise ConfigError(f"canny thresholds need 0 <= low <= high, got {low}, {high}")
    img = as_gray(img)
    smoothed = _correlate(img, gaussian_kernel(ksize, sigma))
    gx, gy = sobel_gradients(smoothed)
    mag = np.hypot(gx, gy)
    nms = non_maximum_suppression(mag, quantize_direction(gx, gy))
    return hysteresis(nms, low, high)


def connected_components(bmap) -> ComponentLabeling:
    """8-connected labeling; ids follow first encounter in raster order."""
    labels, count = ndimage.label(np.asarray(bmap, dtype=bool), structure=EIGHT_CONNECTED)
    return ComponentLabeling(labels.astype(np.int32, copy=False), int(count))


def component_boxes(cl: ComponentLabeling) -> list[WordBox]:
    boxes = []
    for sl in ndimage.find_objects(cl.labels, max_label=cl.count):
        if sl is None:
            continue
        rows, cols = sl
        boxes.append(WordBox.from_corners(cols.start, rows.start, cols.stop, rows.stop))
    return boxes


def boundary_pixels(bmap) -> np.ndarray:
    """Foreground pixels with a background 8-neighbour.

    Pixels outside the image count as background here, so foreground on
    the frame edge is boundary (otherwise a full-page blob has no contour).
    """
    bmap = np.asarray(bmap, dtype=bool)
    interior = ndimage.binary_erosion(bmap, structure=EIGHT_CONNECTED, border_value=0)
    return bmap & ~interior


def thicken_boundaries(bmap, thickness: int) -> np.ndarray:
    """Stamp a Chebyshev ball of radius ceil(thickness/2) on every boundary pixel."""
    if thickness < 1:
        raise ConfigError(f"thickness must be >= 1, got {thickness}")
    bmap = np.asarray(bmap, dtype=bool)
    radius = math.ceil(thickness / 2)
    ring = ndimage.maximum_filter(
        boundary_pixels(bmap), size=2 * radius + 1, mode="constant", cval=0
    )
    return bmap | ring


# --- image files -----------------------------------------------------------


def _pgm_tokens(data: bytes, count: int) -> tuple[list[bytes], int]:
    tokens, pos = [], 0
    while len(tokens) < count:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if data[pos : pos + 1] == b"#":
            while pos < len(data) and data[pos : pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise DataError("truncated PGM header")
        tokens.append(data[start:pos])
    return tokens, pos + 1  # exactly one whitespace byte precedes the raster


def read_pgm(path) -> np.ndarray:
    data = Path(path).read_bytes()
    try:
        (magic, w, h, maxval), offset = _pgm_tokens(data, 4)
        width, height, maxval = int(w), int(h), int(maxval)
    except (ValueError, IndexError) as exc:
        raise DataError(f"{path}: malformed PGM header") from exc
    if magic != b"P5":
        raise DataError(f"{path}: only binary PGM (P5) is supported")
    if maxval != 255:
        raise DataError(f"{path}: PGM maxval must be 255, got {maxval}")
    if width < 1 or height < 1:
        raise DataError(f"{path}: empty image")
    raster = data[offset : offset + width * height]
    if len(raster) != width * height:
        raise DataError(f"{path}: truncated PGM raster")
    return np.frombuffer(raster, dtype=np.uint8).reshape(height, width).copy()


def luma(rgb: np.ndarray) -> np.ndarray:
    rgb = rgb.astype(np.float64)
    y = 0.299 * rgb[..., 0] + 0.587 * rgb[..., 1] + 0.114 * rgb[..., 2]
    return np.clip(np.floor(y + 0.5), 0, 255).astype(np.uint8)


def read_png(path) -> np.ndarray:
    from PIL import Image

    with Image.open(path) as im:
        if im.mode == "L":
            return np.asarray(im, dtype=np.uint8).copy()
        if im.mode not in ("RGB", "RGBA"):
            im = im.convert("RGB")
        return luma(np.asarray(im)[..., :3])


def read_image(path) -> np.ndarray:
    path = Path(path)
    try:
        if path.suffix.lower() == ".png":
            return read_png(path)
        return read_pgm(path)
    except DataError:
        raise
    except Exception as exc:  # unreadable file, bad PNG, ...
        raise DataError(f"{path}: cannot read image ({exc})") from exc


def atomic_write_bytes(path, data: bytes) -> None:
    path = Path(path)
    tmp = path.with_name(f".{path.name}.tmp{os.getpid()}")
    tmp.write_bytes(data)
    os.replace(tmp, path)


def write_pgm(path, img) -> None:
    img = as_gray(img)
    h, w = img.shape
    atomic_write_bytes(path, b"P5\n%d %d\n255\n" % (w, h) + img.tobytes())


def write_binary_map(path, bmap) -> None:
    write_pgm(path, np.where(np.asarray(bmap, dtype=bool), 255, 0).astype(np.uint8))
