"""Labeling functions and the per-pixel firing matrix.

Every LF produces word boxes.  Boxes are shrunk, rasterized and, for a
complementary LF, complemented, giving one binary firing map per LF.
Stacking the maps gives the firing matrix used by the label model.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import imgproc
from .errors import ConfigError, DataError
from .imgproc import ComponentLabeling, WordBox


class LFClass(enum.IntEnum):
    TEXT = 0
    NONTEXT = 1


KINDS = ("contour", "canny", "sobel_edges", "external")
POLARITIES = ("fundamental", "complementary")

DEFAULT_PARAMS = {
    "contour": {"contour_thickness": 4},
    "canny": {"canny_low": 50.0, "canny_high": 150.0, "edge_thickness": 2},
    "sobel_edges": {"edge_thickness": 2},
    "external": {"suffix": ".boxes.txt", "on_missing": "error"},
}


@dataclass
class LFSpec:
    id: str
    kind: str
    polarity: str = "fundamental"
    q: float = 0.85
    params: dict = field(default_factory=dict)
    shrink_w: float = 0.0
    shrink_h: float = 0.0
    pair: str | None = None  # fundamental partner of a complementary LF

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"LF {self.id!r}: unknown kind {self.kind!r}")
        if self.polarity not in POLARITIES:
            raise ConfigError(f"LF {self.id!r}: unknown polarity {self.polarity!r}")
        if not 0.0 < self.q < 1.0:
            raise ConfigError(f"LF {self.id!r}: quality guide must lie in (0, 1), got {self.q}")
        for name, s in (("shrink_w", self.shrink_w), ("shrink_h", self.shrink_h)):
            if not 0.0 <= s < 1.0:
                raise ConfigError(f"LF {self.id!r}: {name} must lie in [0, 1), got {s}")
        self.params = {**DEFAULT_PARAMS[self.kind], **self.params}

    @property
    def lf_class(self) -> LFClass:
        return LFClass.TEXT if self.polarity == "fundamental" else LFClass.NONTEXT

    def source_key(self) -> tuple:
        """LFs with equal keys produce identical box lists."""
        return (self.kind, tuple(sorted(self.params.items())))


# --- native LFs --------------------------------------------------------------


def run_contour_lf(img, contour_thickness: int = 4) -> list[WordBox]:
    """Binarize, thicken component contours and box the merged groups.

    Each box is tight on the ink pixels of its merged group, so thickening
    decides grouping but does not inflate the box.
    """
    ink = imgproc.otsu_binarize(img, ink_is_dark=True)
    if not ink.any():
        return []
    merged = imgproc.connected_components(imgproc.thicken_boundaries(ink, contour_thickness))
    on_ink = ComponentLabeling(np.where(ink, merged.labels, 0), merged.count)
    return imgproc.component_boxes(on_ink)


def _edges_to_boxes(edges: np.ndarray, thickness: int) -> list[WordBox]:
    if not edges.any():
        return []
    thick = imgproc.thicken_boundaries(edges, thickness)
    return imgproc.component_boxes(imgproc.connected_components(thick))


def run_canny_lf(img, low: float = 50.0, high: float = 150.0, edge_thickness: int = 2) -> list[WordBox]:
    return _edges_to_boxes(imgproc.canny(img, low, high), edge_thickness)


def run_sobel_lf(img, edge_thickness: int = 2) -> list[WordBox]:
    ink = imgproc.otsu_binarize(img, ink_is_dark=True)
    mag = imgproc.sobel_magnitude(np.where(ink, 255.0, 0.0))
    return _edges_to_boxes(mag > 0, edge_thickness)


# --- sidecar files -------------------------------------------------------------


def parse_boxes(text: str, source: str = "<string>") -> list[tuple[int, int, int, int]]:
    rows = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        try:
            vals = tuple(int(p) for p in parts)
        except ValueError:
            vals = ()
        if len(vals) != 4 or min(vals) < 0:
            raise DataError(f"{source}:{lineno}: expected 'x y w h' non-negative integers, got {line!r}")
        rows.append(vals)
    return rows


def read_boxes(path) -> list[WordBox]:
    """Read a sidecar as-is (ground truth, predictions); zero-area rows are dropped."""
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    return [WordBox(*r) for r in parse_boxes(text, str(path)) if r[2] > 0 and r[3] > 0]


def format_boxes(boxes) -> str:
    return "".join(f"{b.x} {b.y} {b.w} {b.h}\n" for b in boxes)


def write_boxes(path, boxes) -> None:
    imgproc.atomic_write_bytes(path, format_boxes(boxes).encode("utf-8"))


def load_external_boxes(path, image_w: int, image_h: int, on_missing: str = "error") -> list[WordBox] | None:
    """Boxes from an external detector's sidecar, clamped to the image.

    Returns ``None`` when the file is missing and ``on_missing="abstain"``;
    the LF then fires nowhere.
    """
    path = Path(path)
    if not path.exists():
        if on_missing == "abstain":
            return None
        if on_missing != "error":
            raise ConfigError(f"on_missing must be 'error' or 'abstain', got {on_missing!r}")
        raise DataError(f"{path}: external LF sidecar not found")
    boxes = []
    for x, y, w, h in parse_boxes(path.read_text(encoding="utf-8"), str(path)):
        b = imgproc.clip_box(x, y, x + w, y + h, image_w, image_h)
        if b is not None:
            boxes.append(b)
    return boxes


def external_path(image_path, suffix: str) -> Path:
    image_path = Path(image_path)
    return image_path.with_name(image_path.stem + suffix)


def run_lf(spec: LFSpec, img, image_path=None) -> list[WordBox] | None:
    p = spec.params
    if spec.kind == "contour":
        return run_contour_lf(img, int(p["contour_thickness"]))
    if spec.kind == "canny":
        return run_canny_lf(img, float(p["canny_low"]), float(p["canny_high"]), int(p["edge_thickness"]))
    if spec.kind == "sobel_edges":
        return run_sobel_lf(img, int(p["edge_thickness"]))
    if image_path is None:
        raise DataError(f"LF {spec.id!r}: external LF needs the image path to locate its sidecar")
    h, w = np.shape(img)
    return load_external_boxes(external_path(image_path, p["suffix"]), w, h, p["on_missing"])


# --- shrink / rasterize --------------------------------------------------------


def round_half_up(v: float) -> int:
    return math.floor(v + 0.5)


def shrink_box(b: WordBox, shrink_w: float, shrink_h: float) -> WordBox:
    w2 = max(1, round_half_up(b.w * (1.0 - shrink_w)))
    h2 = max(1, round_half_up(b.h * (1.0 - shrink_h)))
    return WordBox(b.x + (b.w - w2) // 2, b.y + (b.h - h2) // 2, w2, h2)


def rasterize(boxes, polarity: str, width: int, height: int) -> np.ndarray:
    fmap = np.zeros((height, width), dtype=bool)
    for b in boxes:
        if not b.fits(width, height):
            raise DataError(f"box {b} exceeds image bounds {width}x{height}")
        fmap[b.y : b.y1, b.x : b.x1] = True
    if polarity == "complementary":
        return ~fmap
    if polarity != "fundamental":
        raise ConfigError(f"unknown polarity {polarity!r}")
    return fmap


def lf_map(spec: LFSpec, boxes: list[WordBox] | None, width: int, height: int) -> np.ndarray:
    """Firing map of one LF from its (unshrunk) boxes; ``None`` abstains everywhere."""
    if boxes is None:
        return np.zeros((height, width), dtype=bool)
    shrunk = [shrink_box(b, spec.shrink_w, spec.shrink_h) for b in boxes]
    return rasterize(shrunk, spec.polarity, width, height)


# --- firing matrix ---------------------------------------------------------------


@dataclass(frozen=True)
class TauMatrix:
    fired: np.ndarray  # (height, width, n) bool
    lf_classes: tuple[LFClass, ...]
    lf_ids: tuple[str, ...]

    @property
    def n(self) -> int:
        return self.fired.shape[2]

    @property
    def height(self) -> int:
        return self.fired.shape[0]

    @property
    def width(self) -> int:
        return self.fired.shape[1]

    @property
    def m(self) -> int:
        return self.width * self.height

    def flat(self) -> np.ndarray:
        return self.fired.reshape(-1, self.n)

    def labels(self) -> np.ndarray:
        """Per-pixel labels: 0 = abstain, 1 = TEXT (c1), 2 = NONTEXT (c2)."""
        codes = np.array([int(c) + 1 for c in self.lf_classes], dtype=np.uint8)
        return np.where(self.fired, codes, 0).astype(np.uint8)


def build_tau(lf_maps) -> TauMatrix:
    lf_maps = list(lf_maps)
    if not lf_maps:
        raise ConfigError("at least one LF is required")
    shape = np.shape(lf_maps[0][1])
    for spec, bmap in lf_maps:
        if np.shape(bmap) != shape:
            raise DataError(f"LF {spec.id!r}: map shape {np.shape(bmap)} differs from {shape}")
    fired = np.stack([np.asarray(bmap, dtype=bool) for _, bmap in lf_maps], axis=-1)
    return TauMatrix(
        fired,
        tuple(spec.lf_class for spec, _ in lf_maps),
        tuple(spec.id for spec, _ in lf_maps),
    )


@dataclass(frozen=True)
class PatternHistogram:
    """Distinct firing vectors with their pixel counts.

    ``patterns`` is (k, n) bool, sorted by the packed integer code with
    LF 0 as the least significant bit; ``counts`` is (k,) int64.
    """

    patterns: np.ndarray
    counts: np.ndarray

    @property
    def n(self) -> int:
        return self.patterns.shape[1]

    @property
    def m(self) -> int:
        return int(self.counts.sum())

    @classmethod
    def empty(cls, n: int) -> "PatternHistogram":
        return cls(np.zeros((0, n), dtype=bool), np.zeros(0, dtype=np.int64))

    @classmethod
    def from_rows(cls, rows) -> "PatternHistogram":
        rows = np.asarray(rows, dtype=bool)
        n = rows.shape[1]
        if n > 63:
            raise ConfigError("at most 63 LFs are supported")
        codes = rows.astype(np.int64) @ (np.int64(1) << np.arange(n, dtype=np.int64))
        uniq, counts = np.unique(codes, return_counts=True)
        return cls(_unpack(uniq, n), counts.astype(np.int64))

    def as_dict(self) -> dict[tuple[bool, ...], int]:
        return {tuple(bool(v) for v in p): int(c) for p, c in zip(self.patterns, self.counts)}

    def merge(self, other: "PatternHistogram") -> "PatternHistogram":
        if other.n != self.n:
            raise DataError("cannot merge histograms over different LF counts")
        n = self.n
        weights = np.int64(1) << np.arange(n, dtype=np.int64)
        codes = np.concatenate([self.patterns.astype(np.int64) @ weights, other.patterns.astype(np.int64) @ weights])
        counts = np.concatenate([self.counts, other.counts])
        uniq, inv = np.unique(codes, return_inverse=True)
        return PatternHistogram(_unpack(uniq, n), np.bincount(inv, weights=counts, minlength=len(uniq)).astype(np.int64))


def _unpack(codes: np.ndarray, n: int) -> np.ndarray:
    return ((codes[:, None] >> np.arange(n, dtype=np.int64)) & 1).astype(bool)


def histogram(tau: TauMatrix) -> PatternHistogram:
    return PatternHistogram.from_rows(tau.flat())
