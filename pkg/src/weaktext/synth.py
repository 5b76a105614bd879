"""Seeded synthetic document pages and corrupted pseudo-LF outputs.

Randomness comes from xoshiro256** seeded through splitmix64, with integer
draws by rejection sampling, so a seed pins every page bit for bit.  The
order of draws documented in ``gen_page`` and ``corrupt`` is part of the
format.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import imgproc
from .errors import ConfigError
from .imgproc import WordBox
from .labeling import write_boxes

MASK64 = (1 << 64) - 1


class SplitMix64:
    def __init__(self, seed: int):
        self.state = seed & MASK64

    def next(self) -> int:
        self.state = (self.state + 0x9E3779B97F4A7C15) & MASK64
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
        return z ^ (z >> 31)


def _rotl(x: int, k: int) -> int:
    return ((x << k) | (x >> (64 - k))) & MASK64


class Xoshiro256:
    """xoshiro256** with the uniform/integer helpers used by the generator."""

    def __init__(self, seed: int | None = None, state: tuple[int, int, int, int] | None = None):
        if state is None:
            sm = SplitMix64(seed or 0)
            state = tuple(sm.next() for _ in range(4))
        if not any(state):
            raise ValueError("xoshiro256** state must not be all zero")
        self.s = [v & MASK64 for v in state]

    def next_u64(self) -> int:
        s = self.s
        result = (_rotl((s[1] * 5) & MASK64, 7) * 9) & MASK64
        t = (s[1] << 17) & MASK64
        s[2] ^= s[0]
        s[3] ^= s[1]
        s[1] ^= s[2]
        s[0] ^= s[3]
        s[2] ^= t
        s[3] = _rotl(s[3], 45)
        return result

    def random(self) -> float:
        """Uniform double in [0, 1) from the top 53 bits."""
        return (self.next_u64() >> 11) * (1.0 / (1 << 53))

    def integer(self, lo: int, hi: int) -> int:
        """Uniform integer in [lo, hi], unbiased by rejection."""
        if hi < lo:
            raise ValueError(f"empty range [{lo}, {hi}]")
        span = hi - lo + 1
        limit = (1 << 64) - ((1 << 64) % span)
        while True:
            v = self.next_u64()
            if v < limit:
                return lo + v % span

    def bernoulli(self, p: float) -> bool:
        return self.random() < p

    def poisson(self, lam: float) -> int:
        # Knuth's product-of-uniforms method; fine for the small rates used here
        if lam <= 0:
            return 0
        limit, k, prod = math.exp(-lam), 0, self.random()
        while prod > limit:
            k += 1
            prod *= self.random()
        return k


def derive_seed(seed: int, index: int) -> int:
    return SplitMix64((seed ^ index) & MASK64).next()


def _check_range(name: str, rng: tuple[int, int], minimum: int = 0) -> None:
    lo, hi = rng
    if lo > hi or lo < minimum:
        raise ConfigError(f"{name}: invalid range {rng}")


@dataclass(frozen=True)
class SynthConfig:
    seed: int = 1
    page_w: int = 320
    page_h: int = 240
    margin: int = 8
    rows: tuple[int, int] = (6, 10)
    words_per_row: tuple[int, int] = (3, 7)
    word_w: tuple[int, int] = (16, 48)
    word_h: tuple[int, int] = (8, 14)
    word_gap: tuple[int, int] = (6, 14)
    line_gap: tuple[int, int] = (8, 16)
    ink: tuple[int, int] = (0, 60)
    background: int = 235
    noise: float = 0.0

    def __post_init__(self):
        _check_range("rows", self.rows)
        _check_range("words_per_row", self.words_per_row)
        _check_range("word_w", self.word_w, 1)
        _check_range("word_h", self.word_h, 1)
        _check_range("word_gap", self.word_gap, 2)
        _check_range("line_gap", self.line_gap, 2)
        _check_range("ink", self.ink)
        if self.ink[1] > 255 or not 0 <= self.background <= 255:
            raise ConfigError("intensities must lie in [0, 255]")
        if self.ink[1] >= self.background:
            raise ConfigError("ink must be darker than the background")
        if not 0.0 <= self.noise <= 1.0:
            raise ConfigError("noise rate must lie in [0, 1]")
        if self.page_w < 1 or self.page_h < 1 or self.margin < 0:
            raise ConfigError("page size must be positive")


@dataclass(frozen=True)
class CorruptionSpec:
    drop_rate: float = 0.0
    spurious_rate: float = 0.0
    jitter: int = 0
    merge_rate: float = 0.0
    seed: int = 0
    spurious_w: tuple[int, int] = (12, 40)
    spurious_h: tuple[int, int] = (6, 14)

    def __post_init__(self):
        for name in ("drop_rate", "merge_rate"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ConfigError(f"{name} must lie in [0, 1]")
        if self.spurious_rate < 0 or self.jitter < 0:
            raise ConfigError("spurious_rate and jitter must be non-negative")
        _check_range("spurious_w", self.spurious_w, 1)
        _check_range("spurious_h", self.spurious_h, 1)


def gen_page(cfg: SynthConfig) -> tuple[np.ndarray, list[WordBox]]:
    """Render dark rectangular "words" in rows on a light page.

    Draw order: row count; per row the word count; per word width, height
    and ink level followed by the gap after it; per row the line gap.  A
    word or row that would cross the margin ends its row or the page.
    Then, if ``noise > 0``, one uniform per pixel in raster order and a
    second uniform choosing black/white for each flipped pixel.
    """
    rng = Xoshiro256(cfg.seed)
    img = np.full((cfg.page_h, cfg.page_w), cfg.background, dtype=np.uint8)
    boxes: list[WordBox] = []
    n_rows = rng.integer(*cfg.rows)
    if n_rows and (
        2 * cfg.margin + cfg.word_w[0] > cfg.page_w or 2 * cfg.margin + cfg.word_h[0] > cfg.page_h
    ):
        raise ConfigError("infeasible layout: the smallest word does not fit inside the margins")
    right, bottom = cfg.page_w - cfg.margin, cfg.page_h - cfg.margin
    y = cfg.margin
    for _ in range(n_rows):
        n_words = rng.integer(*cfg.words_per_row)
        x, row_h = cfg.margin, 0
        for _ in range(n_words):
            w = rng.integer(*cfg.word_w)
            h = rng.integer(*cfg.word_h)
            level = rng.integer(*cfg.ink)
            gap = rng.integer(*cfg.word_gap)
            if x + w > right or y + h > bottom:
                break
            img[y : y + h, x : x + w] = level
            boxes.append(WordBox(x, y, w, h))
            row_h = max(row_h, h)
            x += w + gap
        line_gap = rng.integer(*cfg.line_gap)
        if row_h == 0:
            break
        y += row_h + line_gap
        if y + cfg.word_h[0] > bottom:
            break
    if cfg.noise > 0:
        flat = img.ravel()
        for i in range(flat.size):
            if rng.random() < cfg.noise:
                flat[i] = 0 if rng.random() < 0.5 else 255
    return img, boxes


def _union(a: WordBox, b: WordBox) -> WordBox:
    return WordBox.from_corners(min(a.x, b.x), min(a.y, b.y), max(a.x1, b.x1), max(a.y1, b.y1))


def _same_row(a: WordBox, b: WordBox) -> bool:
    return a.y < b.y1 and b.y < a.y1


def corrupt(gt, spec: CorruptionSpec, width: int, height: int) -> list[WordBox]:
    """Simulate a weak detector from ground truth.

    Per box in order: a merge coin (only when the next box shares its row;
    a merged pair is consumed together), a drop coin, then four jitter
    offsets (x0, y0, x1, y1) when ``jitter > 0``.  Afterwards a Poisson
    count of spurious boxes, each drawn as (w, h, x, y).
    """
    rng = Xoshiro256(spec.seed)
    out: list[WordBox] = []
    gt = list(gt)
    i = 0
    while i < len(gt):
        b = gt[i]
        if i + 1 < len(gt) and _same_row(b, gt[i + 1]) and rng.bernoulli(spec.merge_rate):
            b = _union(b, gt[i + 1])
            i += 1
        i += 1
        if rng.bernoulli(spec.drop_rate):
            continue
        x0, y0, x1, y1 = b.x, b.y, b.x1, b.y1
        if spec.jitter > 0:
            j = spec.jitter
            x0 += rng.integer(-j, j)
            y0 += rng.integer(-j, j)
            x1 += rng.integer(-j, j)
            y1 += rng.integer(-j, j)
            x1, y1 = max(x1, x0 + 1), max(y1, y0 + 1)
        clipped = imgproc.clip_box(x0, y0, x1, y1, width, height)
        if clipped is not None:
            out.append(clipped)
    for _ in range(rng.poisson(spec.spurious_rate)):
        w = min(rng.integer(*spec.spurious_w), width)
        h = min(rng.integer(*spec.spurious_h), height)
        x = rng.integer(0, width - w)
        y = rng.integer(0, height - h)
        out.append(WordBox(x, y, w, h))
    return out


@dataclass(frozen=True)
class PseudoLF:
    id: str
    corruption: CorruptionSpec = field(default_factory=CorruptionSpec)


def page_name(index: int) -> str:
    return f"page{index:03d}"


def write_corpus(out_dir, cfg: SynthConfig, pages: int, pseudo_lfs=()) -> list[Path]:
    """Write ``pages`` pages as PGM + ground truth + pseudo-LF sidecars.

    Page k uses seed ``derive_seed(cfg.seed, k)``; pseudo-LF corruption of
    page k uses ``derive_seed(corruption.seed, k)``.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for k in range(pages):
        stem = page_name(k)
        img, gt = gen_page(replace(cfg, seed=derive_seed(cfg.seed, k)))
        h, w = img.shape
        imgproc.write_pgm(out_dir / f"{stem}.pgm", img)
        write_boxes(out_dir / f"{stem}.boxes.txt", gt)
        for lf in pseudo_lfs:
            spec = replace(lf.corruption, seed=derive_seed(lf.corruption.seed, k))
            write_boxes(out_dir / f"{stem}.lf-{lf.id}.boxes.txt", corrupt(gt, spec, w, h))
        written.append(out_dir / f"{stem}.pgm")
    return written
