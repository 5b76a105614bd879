"""Turn an aggregated text map back into word boxes.

LF boxes were shrunk before rasterization, so boxes recovered from the
map are enlarged by the inverse factor around their centre.
"""

from __future__ import annotations

from dataclasses import dataclass

from . import imgproc
from .errors import ConfigError
from .imgproc import WordBox
from .labeling import round_half_up


@dataclass(frozen=True)
class LabelGenConfig:
    shrink_w: float = 0.10
    shrink_h: float = 0.20
    min_box_area: int = 4

    def __post_init__(self):
        for name in ("shrink_w", "shrink_h"):
            if not 0.0 <= getattr(self, name) < 1.0:
                raise ConfigError(f"{name} must lie in [0, 1)")
        if self.min_box_area < 1:
            raise ConfigError("min_box_area must be >= 1")


def map_to_boxes(bmap, cfg: LabelGenConfig = LabelGenConfig()) -> list[WordBox]:
    boxes = imgproc.component_boxes(imgproc.connected_components(bmap))
    return [b for b in boxes if b.area >= cfg.min_box_area]


def enlarge_box(b: WordBox, cfg: LabelGenConfig, width: int, height: int) -> WordBox | None:
    w2 = round_half_up(b.w / (1.0 - cfg.shrink_w))
    h2 = round_half_up(b.h / (1.0 - cfg.shrink_h))
    x0 = b.x - (w2 - b.w) // 2
    y0 = b.y - (h2 - b.h) // 2
    return imgproc.clip_box(x0, y0, x0 + w2, y0 + h2, width, height)


def enlarge_boxes(boxes, cfg: LabelGenConfig, width: int, height: int) -> list[WordBox]:
    out = (enlarge_box(b, cfg, width, height) for b in boxes)
    return [b for b in out if b is not None]


def generate(bmap, cfg: LabelGenConfig = LabelGenConfig()) -> list[WordBox]:
    height, width = bmap.shape
    boxes = enlarge_boxes(map_to_boxes(bmap, cfg), cfg, width, height)
    return sorted(boxes, key=lambda b: (b.y, b.x, b.h, b.w))
