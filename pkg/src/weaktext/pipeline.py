"""Per-image orchestration shared by the CLI commands."""

from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, TypeVar

import numpy as np

from . import aggregator, evalkit, imgproc, labelgen, labeling
from .config import PipelineConfig
from .errors import DataError
from .imgproc import WordBox
from .labeling import TauMatrix

log = logging.getLogger(__name__)

IMAGE_SUFFIXES = (".pgm", ".png")

T = TypeVar("T")


def list_images(image_dir) -> list[Path]:
    """Images in ``image_dir`` in lexicographic filename order."""
    image_dir = Path(image_dir)
    if not image_dir.is_dir():
        raise DataError(f"{image_dir}: not a directory")
    return sorted(p for p in image_dir.iterdir() if p.is_file() and p.suffix.lower() in IMAGE_SUFFIXES)


@dataclass
class LFOutputs:
    path: Path
    image: np.ndarray
    boxes: dict[str, list[WordBox] | None]

    @property
    def stem(self) -> str:
        return self.path.stem


def run_lfs(cfg: PipelineConfig, image_path) -> LFOutputs:
    """Run every configured LF once; paired LFs reuse their partner's boxes."""
    image_path = Path(image_path)
    img = imgproc.read_image(image_path)
    cache: dict[tuple, list[WordBox] | None] = {}
    boxes = {}
    for spec in cfg.lfs:
        key = spec.source_key()
        if key not in cache:
            cache[key] = labeling.run_lf(spec, img, image_path)
        boxes[spec.id] = cache[key]
    return LFOutputs(image_path, img, boxes)


def build_tau(cfg: PipelineConfig, out: LFOutputs) -> TauMatrix:
    h, w = out.image.shape
    return labeling.build_tau((spec, labeling.lf_map(spec, out.boxes[spec.id], w, h)) for spec in cfg.lfs)


def image_tau(cfg: PipelineConfig, image_path) -> tuple[LFOutputs, TauMatrix]:
    out = run_lfs(cfg, image_path)
    return out, build_tau(cfg, out)


def image_histogram(cfg: PipelineConfig, image_path) -> labeling.PatternHistogram:
    return labeling.histogram(image_tau(cfg, image_path)[1])


def parallel_map(fn: Callable[..., T], items: Iterable, jobs: int = 1, *args) -> list[T]:
    """Order-preserving map; ``jobs > 1`` fans out to worker processes."""
    items = list(items)
    if jobs <= 1 or len(items) <= 1:
        return [fn(*args, it) for it in items]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, *([a] * len(items) for a in args), items))


def train_model(cfg: PipelineConfig, images, jobs: int = 1) -> aggregator.ThetaParams:
    hists = parallel_map(image_histogram, images, jobs, cfg)
    theta0 = aggregator.init_theta(len(cfg.lfs), cfg.train)
    theta = aggregator.train(hists, theta0, cfg.train, cfg.lf_classes, cfg.guides)
    return aggregator.ThetaParams.from_specs(theta, cfg.lfs)


def predict(cfg: PipelineConfig, params: aggregator.ThetaParams, image_path) -> tuple[list[WordBox], np.ndarray]:
    _, tau = image_tau(cfg, image_path)
    bmap = aggregator.infer_map(tau, params)
    return labelgen.generate(bmap, cfg.labelgen), bmap


def predict_mbv(cfg: PipelineConfig, image_path) -> tuple[list[WordBox], np.ndarray]:
    _, tau = image_tau(cfg, image_path)
    bmap = evalkit.mbv(tau)
    return labelgen.generate(bmap, cfg.labelgen), bmap


def image_stats(cfg: PipelineConfig, image_path) -> evalkit.StatCounts:
    return evalkit.stat_counts(image_tau(cfg, image_path)[1])
