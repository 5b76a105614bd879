"""Line-oriented configuration files.

Format (UTF-8)::

    # comment
    shrink.w = 0.10
    train.lr = 0.01

    [lf.contour]
    kind = contour
    q = 0.85

Top-level keys are ``section.key``; ``[lf.<id>]`` and ``[pseudo.<id>]``
open per-LF sections whose keys are bare names.  Order of ``lf`` sections
is the LF order of the model.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from .aggregator import TrainConfig
from .errors import ConfigError
from .labeling import DEFAULT_PARAMS, LFSpec
from .labelgen import LabelGenConfig
from .synth import CorruptionSpec, PseudoLF, SynthConfig


def parse_sections(text: str, source: str = "<config>") -> tuple[dict[str, str], list[tuple[str, dict[str, str]]]]:
    """Split config text into top-level keys and ordered named sections."""
    top: dict[str, str] = {}
    sections: list[tuple[str, dict[str, str]]] = []
    current: dict[str, str] | None = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith("["):
            if not line.endswith("]") or len(line) < 3:
                raise ConfigError(f"{source}:{lineno}: malformed section header {line!r}")
            name = line[1:-1].strip()
            if any(name == n for n, _ in sections):
                raise ConfigError(f"{source}:{lineno}: duplicate section [{name}]")
            current = {}
            sections.append((name, current))
            continue
        key, sep, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not sep or not key:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {line!r}")
        target = top if current is None else current
        if current is None and "." not in key:
            raise ConfigError(f"{source}:{lineno}: top-level keys need a section prefix, got {key!r}")
        if key in target:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        target[key] = value
    return top, sections


def _float(v: str, key: str) -> float:
    try:
        return float(v)
    except ValueError as exc:
        raise ConfigError(f"{key}: expected a number, got {v!r}") from exc


def _int(v: str, key: str) -> int:
    try:
        return int(v)
    except ValueError as exc:
        raise ConfigError(f"{key}: expected an integer, got {v!r}") from exc


def _floats(v: str, key: str) -> tuple[float, ...]:
    return tuple(_float(p.strip(), key) for p in v.split(",") if p.strip())


def _int_range(v: str, key: str) -> tuple[int, int]:
    parts = [p.strip() for p in v.split(",")]
    if len(parts) != 2:
        raise ConfigError(f"{key}: expected 'lo,hi', got {v!r}")
    return _int(parts[0], key), _int(parts[1], key)


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, tuple):
        return ",".join(_fmt(x) for x in v)
    return str(v)


def _coerce_param(kind: str, key: str, value: str):
    default = DEFAULT_PARAMS[kind].get(key)
    if default is None:
        raise ConfigError(f"unknown parameter {key!r} for LF kind {kind!r}")
    if isinstance(default, int):
        return _int(value, key)
    if isinstance(default, float):
        return _float(value, key)
    return value


@dataclass
class PipelineConfig:
    lfs: list[LFSpec]
    shrink_w: float = 0.10
    shrink_h: float = 0.20
    train: TrainConfig = field(default_factory=TrainConfig)
    min_box_area: int = 4
    thresholds: tuple[float, ...] = (0.5,)
    averaging: str = "micro"
    conflict_denominator: str = "covered"
    pred_suffix: str = ".pred.boxes.txt"
    gt_suffix: str = ".boxes.txt"

    def __post_init__(self):
        if not self.lfs:
            raise ConfigError("at least one LF is required")
        ids = [s.id for s in self.lfs]
        if len(set(ids)) != len(ids):
            raise ConfigError("LF ids must be unique")
        by_id = {s.id: s for s in self.lfs}
        for s in self.lfs:
            if s.polarity == "complementary" and s.pair is not None:
                partner = by_id.get(s.pair)
                if partner is None or partner.polarity != "fundamental":
                    raise ConfigError(f"LF {s.id!r}: pair {s.pair!r} is not a fundamental LF")
                if partner.source_key() != s.source_key():
                    raise ConfigError(f"LF {s.id!r}: complementary LF must share kind and params with {s.pair!r}")
        self.lfs = [replace(s, shrink_w=self.shrink_w, shrink_h=self.shrink_h) for s in self.lfs]
        self.labelgen  # validates shrink and min area

    @property
    def labelgen(self) -> LabelGenConfig:
        return LabelGenConfig(self.shrink_w, self.shrink_h, self.min_box_area)

    @property
    def lf_ids(self) -> list[str]:
        return [s.id for s in self.lfs]

    @property
    def lf_classes(self):
        return [s.lf_class for s in self.lfs]

    @property
    def guides(self) -> list[float]:
        return [s.q for s in self.lfs]


_TOP_KEYS = {
    "shrink.w": ("shrink_w", _float),
    "shrink.h": ("shrink_h", _float),
    "labelgen.min_box_area": ("min_box_area", _int),
    "eval.thresholds": ("thresholds", _floats),
    "eval.averaging": ("averaging", lambda v, k: v),
    "eval.conflict_denominator": ("conflict_denominator", lambda v, k: v),
    "io.pred_suffix": ("pred_suffix", lambda v, k: v),
    "io.gt_suffix": ("gt_suffix", lambda v, k: v),
}
_TRAIN_KEYS = {
    "train.lr": ("learning_rate", _float),
    "train.epochs": ("epochs_per_image", _int),
    "train.init": ("init", lambda v, k: v),
    "train.reg_weight": ("reg_weight", _float),
    "train.likelihood_scale": ("likelihood_scale", lambda v, k: v),
}


def _parse_lf(lf_id: str, body: dict[str, str], known: dict[str, LFSpec]) -> LFSpec:
    body = dict(body)
    polarity = body.pop("polarity", "fundamental")
    pair = body.pop("pair", None)
    q = _float(body.pop("q", "0.85"), f"lf.{lf_id}.q")
    kind = body.pop("kind", None)
    params = {}
    if pair is not None:
        partner = known.get(pair)
        if partner is None:
            raise ConfigError(f"LF {lf_id!r}: pair {pair!r} must be declared before it")
        kind = kind or partner.kind
        params = dict(partner.params)
    if kind is None:
        raise ConfigError(f"LF {lf_id!r}: missing 'kind'")
    if kind not in DEFAULT_PARAMS:
        raise ConfigError(f"LF {lf_id!r}: unknown kind {kind!r}")
    for key, value in body.items():
        params[key] = _coerce_param(kind, key, value)
    return LFSpec(lf_id, kind, polarity, q, params, pair=pair)


def parse_config(text: str, source: str = "<config>") -> PipelineConfig:
    top, sections = parse_sections(text, source)
    kwargs, train_kwargs = {}, {}
    for key, value in top.items():
        if key in _TOP_KEYS:
            name, conv = _TOP_KEYS[key]
            kwargs[name] = conv(value, key)
        elif key in _TRAIN_KEYS:
            name, conv = _TRAIN_KEYS[key]
            train_kwargs[name] = conv(value, key)
        else:
            raise ConfigError(f"{source}: unknown key {key!r}")
    lfs: dict[str, LFSpec] = {}
    for name, body in sections:
        prefix, _, lf_id = name.partition(".")
        if prefix != "lf" or not lf_id:
            raise ConfigError(f"{source}: unexpected section [{name}]")
        lfs[lf_id] = _parse_lf(lf_id, body, lfs)
    return PipelineConfig(list(lfs.values()), train=TrainConfig(**train_kwargs), **kwargs)


def emit_config(cfg: PipelineConfig) -> str:
    t = cfg.train
    lines = [
        f"shrink.w = {_fmt(cfg.shrink_w)}",
        f"shrink.h = {_fmt(cfg.shrink_h)}",
        f"train.lr = {_fmt(t.learning_rate)}",
        f"train.epochs = {t.epochs_per_image}",
        f"train.init = {t.init}",
        f"train.reg_weight = {_fmt(t.reg_weight)}",
        f"train.likelihood_scale = {t.likelihood_scale}",
        f"labelgen.min_box_area = {cfg.min_box_area}",
        f"eval.thresholds = {_fmt(tuple(cfg.thresholds))}",
        f"eval.averaging = {cfg.averaging}",
        f"eval.conflict_denominator = {cfg.conflict_denominator}",
        f"io.pred_suffix = {cfg.pred_suffix}",
        f"io.gt_suffix = {cfg.gt_suffix}",
    ]
    for s in cfg.lfs:
        lines += ["", f"[lf.{s.id}]", f"kind = {s.kind}", f"polarity = {s.polarity}"]
        if s.pair is not None:
            lines.append(f"pair = {s.pair}")
        lines.append(f"q = {_fmt(s.q)}")
        lines += [f"{k} = {_fmt(v)}" for k, v in sorted(s.params.items())]
    return "\n".join(lines) + "\n"


def load_config(path) -> PipelineConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read config ({exc})") from exc
    return parse_config(text, str(path))


def _pair(base: LFSpec) -> LFSpec:
    return LFSpec(f"{base.id}_c", base.kind, "complementary", 0.95, dict(base.params), pair=base.id)


def default8_config() -> PipelineConfig:
    """Contour, Canny and two detector-file LFs, each with its complement."""
    fundamentals = [
        LFSpec("contour", "contour", q=0.85, params={"contour_thickness": 4}),
        LFSpec("canny", "canny", q=0.85, params={"edge_thickness": 2}),
        LFSpec("dbnet", "external", q=0.9, params={"suffix": ".lf-dbnet.boxes.txt"}),
        LFSpec("tesseract", "external", q=0.75, params={"suffix": ".lf-tesseract.boxes.txt"}),
    ]
    return PipelineConfig(fundamentals + [_pair(s) for s in fundamentals])


PSEUDO_GUIDES = {"p1": 0.85, "p2": 0.9, "p3": 0.75, "p4": 0.85}


def pseudo8_config() -> PipelineConfig:
    """Four file-ingested synthetic LFs (``synth_pseudo_lfs``) and their complements."""
    fundamentals = [
        LFSpec(lf_id, "external", q=q, params={"suffix": f".lf-{lf_id}.boxes.txt"})
        for lf_id, q in PSEUDO_GUIDES.items()
    ]
    return PipelineConfig(fundamentals + [_pair(s) for s in fundamentals], thresholds=(0.5, 0.6, 0.7, 0.8, 0.9))


# --- synthetic corpus config ----------------------------------------------------------


def synth_pseudo_lfs(seed: int = 100) -> list[PseudoLF]:
    drops = {"p1": 0.15, "p2": 0.10, "p3": 0.20, "p4": 0.05}
    return [
        PseudoLF(lf_id, CorruptionSpec(drop_rate=d, spurious_rate=2.0, jitter=2, seed=seed + i))
        for i, (lf_id, d) in enumerate(drops.items())
    ]


@dataclass
class CorpusConfig:
    synth: SynthConfig = field(default_factory=lambda: SynthConfig(seed=2024))
    pseudo_lfs: list[PseudoLF] = field(default_factory=synth_pseudo_lfs)


_RANGE_FIELDS = {f.name for f in fields(SynthConfig) if f.name in {
    "rows", "words_per_row", "word_w", "word_h", "word_gap", "line_gap", "ink"}}


def parse_corpus_config(text: str, source: str = "<synth config>") -> CorpusConfig:
    top, sections = parse_sections(text, source)
    synth_kwargs = {}
    names = {f.name: f for f in fields(SynthConfig)}
    for key, value in top.items():
        prefix, _, name = key.partition(".")
        if prefix != "synth" or name not in names:
            raise ConfigError(f"{source}: unknown key {key!r}")
        if name in _RANGE_FIELDS:
            synth_kwargs[name] = _int_range(value, key)
        elif name == "noise":
            synth_kwargs[name] = _float(value, key)
        else:
            synth_kwargs[name] = _int(value, key)
    pseudo = []
    spec_fields = {f.name for f in fields(CorruptionSpec)}
    for name, body in sections:
        prefix, _, lf_id = name.partition(".")
        if prefix != "pseudo" or not lf_id:
            raise ConfigError(f"{source}: unexpected section [{name}]")
        kw = {}
        for key, value in body.items():
            if key not in spec_fields:
                raise ConfigError(f"{source}: [pseudo.{lf_id}] unknown key {key!r}")
            if key in ("jitter", "seed"):
                kw[key] = _int(value, key)
            elif key in ("spurious_w", "spurious_h"):
                kw[key] = _int_range(value, key)
            else:
                kw[key] = _float(value, key)
        pseudo.append(PseudoLF(lf_id, CorruptionSpec(**kw)))
    base = CorpusConfig()
    return CorpusConfig(replace(base.synth, **synth_kwargs), pseudo if sections else base.pseudo_lfs)


def emit_corpus_config(cfg: CorpusConfig) -> str:
    lines = [f"synth.{f.name} = {_fmt(getattr(cfg.synth, f.name))}" for f in fields(SynthConfig)]
    for lf in cfg.pseudo_lfs:
        lines += ["", f"[pseudo.{lf.id}]"]
        lines += [f"{f.name} = {_fmt(getattr(lf.corruption, f.name))}" for f in fields(CorruptionSpec)]
    return "\n".join(lines) + "\n"


def load_corpus_config(path) -> CorpusConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read synth config ({exc})") from exc
    return parse_corpus_config(text, str(path))


PRESETS = {"default8": default8_config, "pseudo8": pseudo8_config}
