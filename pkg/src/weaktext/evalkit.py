"""LF diagnostics, the majority-vote baseline and IoU-based detection scores."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import ConfigError
from .imgproc import WordBox
from .labeling import LFClass, TauMatrix


@dataclass(frozen=True)
class LFStats:
    lf_id: str
    coverage: float
    overlap: float
    conflict: float


@dataclass(frozen=True)
class StatCounts:
    """Raw per-LF pixel counts; additive across images."""

    lf_ids: tuple[str, ...]
    pixels: int
    covered: np.ndarray
    overlapped: np.ndarray
    conflicted: np.ndarray
    conflicted_in_overlap: np.ndarray

    def __add__(self, other: "StatCounts") -> "StatCounts":
        if self.lf_ids != other.lf_ids:
            raise ValueError("cannot add stats over different LF sets")
        return StatCounts(
            self.lf_ids,
            self.pixels + other.pixels,
            self.covered + other.covered,
            self.overlapped + other.overlapped,
            self.conflicted + other.conflicted,
            self.conflicted_in_overlap + other.conflicted_in_overlap,
        )


def _ratio(num, den) -> np.ndarray:
    num = np.asarray(num, dtype=np.float64)
    den = np.asarray(den, dtype=np.float64)
    return np.divide(num, den, out=np.zeros_like(num), where=den > 0)


def stat_counts(tau: TauMatrix) -> StatCounts:
    fired = tau.flat()
    cls = np.asarray([int(c) for c in tau.lf_classes])
    per_class = np.stack([fired[:, cls == c].sum(axis=1) for c in (0, 1)], axis=1)
    same_others = per_class[:, cls] - 1  # (m, n); meaningful only where LF j fired
    diff_others = per_class[:, 1 - cls]
    overlapped = fired & (same_others > 0)
    conflicted = fired & (diff_others > 0)
    return StatCounts(
        tau.lf_ids,
        tau.m,
        fired.sum(axis=0),
        overlapped.sum(axis=0),
        conflicted.sum(axis=0),
        (overlapped & conflicted).sum(axis=0),
    )


def stats_from_counts(counts: StatCounts, conflict_denominator: str = "covered") -> list[LFStats]:
    coverage = _ratio(counts.covered, np.full(len(counts.covered), counts.pixels))
    overlap = _ratio(counts.overlapped, counts.covered)
    if conflict_denominator == "covered":
        conflict = _ratio(counts.conflicted, counts.covered)
    elif conflict_denominator == "overlapped":
        conflict = _ratio(counts.conflicted_in_overlap, counts.overlapped)
    else:
        raise ConfigError(f"conflict_denominator must be 'covered' or 'overlapped', got {conflict_denominator!r}")
    return [
        LFStats(lf_id, float(c), float(o), float(k))
        for lf_id, c, o, k in zip(counts.lf_ids, coverage, overlap, conflict)
    ]


def lf_stats(tau: TauMatrix, conflict_denominator: str = "covered") -> list[LFStats]:
    return stats_from_counts(stat_counts(tau), conflict_denominator)


def pairwise_conflict(tau: TauMatrix) -> np.ndarray:
    """``out[j, k]``: share of LF j's covered pixels where LF k fires the other class."""
    fired = tau.flat().astype(np.int64)
    cls = np.asarray([int(c) for c in tau.lf_classes])
    cofire = fired.T @ fired
    differ = cls[:, None] != cls[None, :]
    return _ratio(np.where(differ, cofire, 0), np.repeat(fired.sum(axis=0)[:, None], tau.n, axis=1))


def mbv(tau: TauMatrix) -> np.ndarray:
    """Pixel is TEXT iff TEXT firings strictly outnumber NONTEXT firings."""
    cls = np.asarray([int(c) for c in tau.lf_classes])
    text = tau.fired[..., cls == LFClass.TEXT].sum(axis=-1)
    nontext = tau.fired[..., cls == LFClass.NONTEXT].sum(axis=-1)
    return text > nontext


# --- detection scores ------------------------------------------------------------


def iou(a: WordBox, b: WordBox) -> float:
    iw = min(a.x1, b.x1) - max(a.x, b.x)
    ih = min(a.y1, b.y1) - max(a.y, b.y)
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    return inter / (a.area + b.area - inter)


def iou_matrix(pred: Sequence[WordBox], gt: Sequence[WordBox]) -> np.ndarray:
    if not pred or not gt:
        return np.zeros((len(pred), len(gt)))
    p = np.array([(b.x, b.y, b.x1, b.y1) for b in pred], dtype=np.int64)
    g = np.array([(b.x, b.y, b.x1, b.y1) for b in gt], dtype=np.int64)
    iw = np.minimum(p[:, None, 2], g[None, :, 2]) - np.maximum(p[:, None, 0], g[None, :, 0])
    ih = np.minimum(p[:, None, 3], g[None, :, 3]) - np.maximum(p[:, None, 1], g[None, :, 1])
    inter = np.clip(iw, 0, None) * np.clip(ih, 0, None)
    area_p = (p[:, 2] - p[:, 0]) * (p[:, 3] - p[:, 1])
    area_g = (g[:, 2] - g[:, 0]) * (g[:, 3] - g[:, 1])
    return inter / (area_p[:, None] + area_g[None, :] - inter)


def greedy_match(pred, gt, threshold: float) -> list[tuple[int, int]]:
    """One-to-one matching by descending IoU; ties by (pred index, gt index)."""
    ious = iou_matrix(pred, gt)
    pi, gi = np.nonzero(ious >= threshold)
    order = np.lexsort((gi, pi, -ious[pi, gi]))
    used_p, used_g, matches = set(), set(), []
    for k in order:
        a, b = int(pi[k]), int(gi[k])
        if a in used_p or b in used_g:
            continue
        used_p.add(a)
        used_g.add(b)
        matches.append((a, b))
    return matches


@dataclass(frozen=True)
class DetectionReport:
    iou_threshold: float
    true_positives: int
    false_positives: int
    false_negatives: int
    precision: float
    recall: float
    f1: float

    @classmethod
    def from_counts(cls, threshold: float, tp: int, fp: int, fn: int) -> "DetectionReport":
        p = tp / (tp + fp) if tp + fp else 0.0
        r = tp / (tp + fn) if tp + fn else 0.0
        return cls(threshold, tp, fp, fn, p, r, f1_score(p, r))


def f1_score(p: float, r: float) -> float:
    return 2 * p * r / (p + r) if p + r > 0 else 0.0


def _check_threshold(threshold: float) -> None:
    if not 0.0 < threshold <= 1.0:
        raise ConfigError(f"IoU threshold must lie in (0, 1], got {threshold}")


def evaluate(pred, gt, threshold: float = 0.5) -> DetectionReport:
    _check_threshold(threshold)
    tp = len(greedy_match(pred, gt, threshold))
    return DetectionReport.from_counts(threshold, tp, len(pred) - tp, len(gt) - tp)


def sweep(pred, gt, thresholds: Iterable[float]) -> list[DetectionReport]:
    thresholds = list(thresholds)
    if thresholds != sorted(thresholds):
        raise ConfigError("thresholds must be sorted ascending")
    return [evaluate(pred, gt, t) for t in thresholds]


def evaluate_corpus(pairs, thresholds, averaging: str = "micro") -> list[DetectionReport]:
    """Corpus report per threshold over ``(pred, gt)`` pairs.

    Micro-averaging sums TP/FP/FN first; macro averages per-image P/R/F1
    (the counts are reported summed either way).
    """
    if averaging not in ("micro", "macro"):
        raise ConfigError(f"averaging must be 'micro' or 'macro', got {averaging!r}")
    pairs = list(pairs)
    per_image = [sweep(pred, gt, thresholds) for pred, gt in pairs]
    out = []
    for k, t in enumerate(thresholds):
        reps = [r[k] for r in per_image]
        tp = sum(r.true_positives for r in reps)
        fp = sum(r.false_positives for r in reps)
        fn = sum(r.false_negatives for r in reps)
        if averaging == "micro" or not reps:
            out.append(DetectionReport.from_counts(t, tp, fp, fn))
        else:
            out.append(
                DetectionReport(
                    t, tp, fp, fn,
                    float(np.mean([r.precision for r in reps])),
                    float(np.mean([r.recall for r in reps])),
                    float(np.mean([r.f1 for r in reps])),
                )
            )
    return out


# --- report files -------------------------------------------------------------------

REPORT_HEADER = "threshold,tp,fp,fn,precision,recall,f1"
STATS_HEADER = "lf_id,coverage,overlap,conflict"


def _num(v: float) -> str:
    return f"{v:.6f}"


def report_csv(reports: Sequence[DetectionReport]) -> str:
    rows = [REPORT_HEADER]
    for r in reports:
        rows.append(
            ",".join(
                [f"{r.iou_threshold:g}", str(r.true_positives), str(r.false_positives), str(r.false_negatives),
                 _num(r.precision), _num(r.recall), _num(r.f1)]
            )
        )
    return "\n".join(rows) + "\n"


def report_table(reports: Sequence[DetectionReport]) -> str:
    lines = [f"{'IoU':>5} {'TP':>7} {'FP':>7} {'FN':>7} {'P':>8} {'R':>8} {'F1':>8}"]
    for r in reports:
        lines.append(
            f"{r.iou_threshold:>5.2f} {r.true_positives:>7d} {r.false_positives:>7d} {r.false_negatives:>7d} "
            f"{100 * r.precision:>8.2f} {100 * r.recall:>8.2f} {100 * r.f1:>8.2f}"
        )
    return "\n".join(lines) + "\n"


def stats_csv(stats: Sequence[LFStats], image: str | None = None) -> str:
    header = STATS_HEADER if image is None else "image," + STATS_HEADER
    rows = [header]
    for s in stats:
        cells = [s.lf_id, _num(s.coverage), _num(s.overlap), _num(s.conflict)]
        rows.append(",".join(cells if image is None else [image, *cells]))
    return "\n".join(rows) + "\n"
