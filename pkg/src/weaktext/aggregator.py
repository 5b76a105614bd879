"""Generative label model over LF firings.

For pixel firing vector ``t`` and class ``y`` the joint is

    P(y, t) = exp(sum_j t_j * theta[j, y]) / Z,
    Z = sum_y prod_j (1 + exp(theta[j, y]))

``theta`` is an (n, 2) array; column 0 is TEXT, column 1 NONTEXT.  Training
maximizes the marginal log-likelihood of the observed firings plus a
cross-entropy pull of each LF's model precision towards its quality guide.
All sums over classes are done in log space.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
from scipy.special import expit, logsumexp

from .errors import ConfigError, DataError, NumericalError, RegistryMismatch
from .imgproc import atomic_write_bytes
from .labeling import LFClass, PatternHistogram, TauMatrix

log = logging.getLogger(__name__)

MODEL_HEADER = "weaktext-model v1"


def softplus(x):
    return np.logaddexp(0.0, x)


def _classes(lf_classes) -> np.ndarray:
    return np.asarray([int(c) for c in lf_classes], dtype=np.intp)


def potential(fired: bool, j: int, y: int, theta: np.ndarray) -> float:
    return float(np.exp(theta[j, int(y)])) if fired else 1.0


def class_log_partials(theta: np.ndarray) -> np.ndarray:
    """log prod_j (1 + exp(theta[j, y])) for each class y."""
    return softplus(np.asarray(theta, dtype=np.float64)).sum(axis=0)


def log_partition(theta: np.ndarray) -> float:
    return float(logsumexp(class_log_partials(theta)))


def pattern_scores(patterns: np.ndarray, theta: np.ndarray) -> np.ndarray:
    """Unnormalized log potential per (pattern, class)."""
    return np.asarray(patterns, dtype=np.float64) @ np.asarray(theta, dtype=np.float64)


def pattern_loglik(pattern, theta: np.ndarray) -> float:
    return float(logsumexp(pattern_scores(np.atleast_2d(pattern), theta)[0]))


def _as_hist(data) -> PatternHistogram:
    if isinstance(data, TauMatrix):
        rows = data.flat()
        return PatternHistogram(rows, np.ones(len(rows), dtype=np.int64))
    return data


def loglik(hist, theta: np.ndarray) -> float:
    hist = _as_hist(hist)
    if hist.m == 0:
        return 0.0
    per_pattern = logsumexp(pattern_scores(hist.patterns, theta), axis=1)
    return float(hist.counts @ per_pattern - hist.m * log_partition(theta))


def _precision_logits(theta: np.ndarray) -> np.ndarray:
    """log P(y, t_j fired) up to log Z, marginalized over the other LFs."""
    theta = np.asarray(theta, dtype=np.float64)
    sp = softplus(theta)
    return theta + sp.sum(axis=0) - sp


def lf_precisions(theta: np.ndarray, lf_classes) -> np.ndarray:
    """P(y = k_j | LF j fired) for every LF j."""
    a = _precision_logits(theta)
    k = _classes(lf_classes)
    rows = np.arange(len(k))
    return expit(a[rows, k] - a[rows, 1 - k])


def lf_precision(j: int, theta: np.ndarray, lf_classes) -> float:
    return float(lf_precisions(theta, lf_classes)[j])


def _check_guides(guides, n: int) -> np.ndarray:
    q = np.asarray(guides, dtype=np.float64)
    if q.shape != (n,):
        raise ConfigError(f"expected {n} quality guides, got shape {q.shape}")
    if np.any(q <= 0.0) or np.any(q >= 1.0):
        raise ConfigError("quality guides must lie strictly inside (0, 1)")
    return q


def regularizer(theta: np.ndarray, lf_classes, guides) -> float:
    k = _classes(lf_classes)
    q = _check_guides(guides, len(k))
    a = _precision_logits(theta)
    rows = np.arange(len(k))
    margin = a[rows, k] - a[rows, 1 - k]
    # log p = -softplus(-margin), log(1 - p) = -softplus(margin)
    return float(np.sum(-q * softplus(-margin) - (1.0 - q) * softplus(margin)))


def objective(hist, theta, lf_classes, guides, reg_weight: float = 1.0) -> float:
    return loglik(hist, theta) + reg_weight * regularizer(theta, lf_classes, guides)


def loglik_gradient(hist, theta: np.ndarray) -> np.ndarray:
    hist = _as_hist(hist)
    theta = np.asarray(theta, dtype=np.float64)
    if hist.m == 0:
        return np.zeros_like(theta)
    scores = pattern_scores(hist.patterns, theta)
    post = np.exp(scores - logsumexp(scores, axis=1, keepdims=True))
    observed = hist.patterns.astype(np.float64).T @ (hist.counts[:, None] * post)
    s = class_log_partials(theta)
    class_weight = np.exp(s - logsumexp(s))
    return observed - hist.m * expit(theta) * class_weight


def regularizer_gradient(theta: np.ndarray, lf_classes, guides) -> np.ndarray:
    theta = np.asarray(theta, dtype=np.float64)
    k = _classes(lf_classes)
    q = _check_guides(guides, len(k))
    rows = np.arange(len(k))
    resid = q - lf_precisions(theta, k)
    # dR / d logit_j[y]: +resid on the LF's own class, -resid on the other
    g = np.empty_like(theta)
    g[rows, k] = resid
    g[rows, 1 - k] = -resid
    # logit_j[y] has slope 1 in theta[j, y] and sigmoid(theta[i, y]) in theta[i, y], i != j
    return g + expit(theta) * (g.sum(axis=0) - g)


def gradient(hist, theta, lf_classes, guides, reg_weight: float = 1.0) -> np.ndarray:
    return loglik_gradient(hist, theta) + reg_weight * regularizer_gradient(theta, lf_classes, guides)


# --- training ----------------------------------------------------------------


@dataclass
class TrainConfig:
    learning_rate: float = 0.01
    epochs_per_image: int = 50
    init: str = "zeros"
    reg_weight: float = 1.0
    # "sum" ascends the raw objective; "mean" divides the likelihood term by
    # the image's pixel count so the step size does not scale with image area
    likelihood_scale: str = "mean"

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ConfigError("learning_rate must be positive")
        if self.epochs_per_image < 1:
            raise ConfigError("epochs_per_image must be >= 1")
        if self.init != "zeros":
            raise ConfigError(f"unknown init rule {self.init!r}")
        if self.likelihood_scale not in ("sum", "mean"):
            raise ConfigError("likelihood_scale must be 'sum' or 'mean'")


def init_theta(n: int, cfg: TrainConfig) -> np.ndarray:
    return np.zeros((n, 2), dtype=np.float64)


def _image_step(hist: PatternHistogram, theta, lf_classes, guides, cfg: TrainConfig):
    scale = 1.0 if cfg.likelihood_scale == "sum" or hist.m == 0 else 1.0 / hist.m
    grad = scale * loglik_gradient(hist, theta) + cfg.reg_weight * regularizer_gradient(theta, lf_classes, guides)
    return grad, scale


def scaled_objective(hist, theta, lf_classes, guides, cfg: TrainConfig) -> float:
    """The objective actually ascended by ``train`` for one image."""
    hist = _as_hist(hist)
    scale = 1.0 if cfg.likelihood_scale == "sum" or hist.m == 0 else 1.0 / hist.m
    return scale * loglik(hist, theta) + cfg.reg_weight * regularizer(theta, lf_classes, guides)


def train(
    images: Sequence,
    theta0: np.ndarray,
    cfg: TrainConfig,
    lf_classes,
    guides,
    on_step: Callable[[int, int, np.ndarray], None] | None = None,
) -> np.ndarray:
    """Gradient ascent, ``epochs_per_image`` steps per image, theta carried over.

    ``images`` holds one PatternHistogram (or TauMatrix) per image, visited
    in the given order.  ``on_step(image_index, epoch, theta)`` is called
    after every step.
    """
    theta = np.array(theta0, dtype=np.float64, copy=True)
    for idx, data in enumerate(images):
        hist = _as_hist(data)
        if hist.n != theta.shape[0]:
            raise DataError(f"image {idx}: histogram has {hist.n} LFs, model has {theta.shape[0]}")
        for epoch in range(cfg.epochs_per_image):
            # overflow is caught by the finiteness checks below
            with np.errstate(over="ignore", invalid="ignore"):
                grad, _ = _image_step(hist, theta, lf_classes, guides, cfg)
                if not np.all(np.isfinite(grad)):
                    raise NumericalError(f"non-finite gradient at image {idx}, epoch {epoch}; theta={theta.tolist()}")
                theta = theta + cfg.learning_rate * grad
            if not np.all(np.isfinite(theta)):
                raise NumericalError(f"non-finite theta at image {idx}, epoch {epoch}; theta={theta.tolist()}")
            if on_step is not None:
                on_step(idx, epoch, theta)
        log.debug("image %d: objective %.6f", idx, scaled_objective(hist, theta, lf_classes, guides, cfg))
    return theta


# --- inference -----------------------------------------------------------------


@dataclass(frozen=True)
class Posterior:
    p_text: float
    p_nontext: float


def posterior(pattern, theta: np.ndarray) -> Posterior:
    s = pattern_scores(np.atleast_2d(pattern), theta)[0]
    d = s[LFClass.TEXT] - s[LFClass.NONTEXT]
    return Posterior(float(expit(d)), float(expit(-d)))


def text_decisions(patterns: np.ndarray, theta: np.ndarray) -> np.ndarray:
    """TEXT iff p_text > 0.5, i.e. the TEXT score strictly wins; ties go to NONTEXT."""
    s = pattern_scores(patterns, theta)
    return s[:, LFClass.TEXT] > s[:, LFClass.NONTEXT]


@dataclass(frozen=True)
class RegistryEntry:
    id: str
    lf_class: LFClass
    q: float


@dataclass
class ThetaParams:
    theta: np.ndarray
    registry: tuple[RegistryEntry, ...]
    version: str = MODEL_HEADER

    def __post_init__(self):
        self.theta = np.asarray(self.theta, dtype=np.float64)
        if self.theta.shape != (len(self.registry), 2) or len(self.registry) < 1:
            raise ConfigError(f"theta shape {self.theta.shape} does not match {len(self.registry)} LFs")
        if not np.all(np.isfinite(self.theta)):
            raise NumericalError("theta has non-finite entries")

    @property
    def lf_classes(self) -> tuple[LFClass, ...]:
        return tuple(e.lf_class for e in self.registry)

    @property
    def guides(self) -> np.ndarray:
        return np.array([e.q for e in self.registry])

    def check_registry(self, lf_ids, lf_classes) -> None:
        mine = [(e.id, e.lf_class) for e in self.registry]
        theirs = [(i, LFClass(c)) for i, c in zip(lf_ids, lf_classes)]
        if mine != theirs:
            raise RegistryMismatch(f"model LFs {mine} do not match {theirs}")

    @classmethod
    def from_specs(cls, theta, specs) -> "ThetaParams":
        return cls(theta, tuple(RegistryEntry(s.id, s.lf_class, float(s.q)) for s in specs))


def infer_map(tau: TauMatrix, params: ThetaParams) -> np.ndarray:
    params.check_registry(tau.lf_ids, tau.lf_classes)
    hist = PatternHistogram.from_rows(tau.flat())
    n = tau.n
    weights = np.int64(1) << np.arange(n, dtype=np.int64)
    codes = tau.flat().astype(np.int64) @ weights
    pattern_codes = hist.patterns.astype(np.int64) @ weights
    decision = text_decisions(hist.patterns, params.theta)
    idx = np.searchsorted(pattern_codes, codes)
    return decision[idx].reshape(tau.height, tau.width)


# --- persistence ---------------------------------------------------------------


def format_model(params: ThetaParams) -> str:
    lines = [MODEL_HEADER]
    lines += [f"{e.id} {e.lf_class.name} {e.q!r}" for e in params.registry]
    lines += [f"{float(a).hex()} {float(b).hex()}" for a, b in params.theta]
    return "\n".join(lines) + "\n"


def parse_model(text: str, source: str = "<string>") -> ThetaParams:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines or lines[0].strip() != MODEL_HEADER:
        got = lines[0].strip() if lines else ""
        raise DataError(f"{source}: expected header {MODEL_HEADER!r}, got {got!r}")
    body = lines[1:]
    if not body or len(body) % 2:
        raise DataError(f"{source}: expected n registry lines followed by n theta lines")
    n = len(body) // 2
    registry, rows = [], []
    try:
        for line in body[:n]:
            lf_id, cls_name, q = line.split()
            registry.append(RegistryEntry(lf_id, LFClass[cls_name], float(q)))
        for line in body[n:]:
            a, b = line.split()
            rows.append((float.fromhex(a), float.fromhex(b)))
    except (ValueError, KeyError) as exc:
        raise DataError(f"{source}: corrupt model file ({exc})") from exc
    return ThetaParams(np.array(rows), tuple(registry))


def save_model(params: ThetaParams, path) -> None:
    atomic_write_bytes(path, format_model(params).encode("utf-8"))


def load_model(path, lf_ids=None, lf_classes=None) -> ThetaParams:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as exc:
        raise DataError(f"{path}: cannot read model ({exc})") from exc
    params = parse_model(text, str(path))
    if lf_ids is not None:
        params.check_registry(lf_ids, lf_classes)
    return params
