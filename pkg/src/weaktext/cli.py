"""``weaktext`` command line.

Exit codes: 0 success, 1 usage or configuration error, 2 data error,
3 numerical failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import aggregator, evalkit, imgproc, labeling, pipeline, synth
from .config import (
    PRESETS,
    CorpusConfig,
    default8_config,
    emit_config,
    emit_corpus_config,
    load_config,
    load_corpus_config,
)
from .errors import ConfigError, DataError, WeakTextError

log = logging.getLogger("weaktext")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _thresholds(text: str) -> tuple[float, ...]:
    try:
        vals = tuple(float(t) for t in text.split(",") if t.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad threshold list {text!r}")
    if not vals:
        raise argparse.ArgumentTypeError("empty threshold list")
    return vals


def _config(args):
    if args.config is None:
        return default8_config()
    if args.config.startswith("preset:"):
        name = args.config.split(":", 1)[1]
        if name not in PRESETS:
            raise ConfigError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
        return PRESETS[name]()
    return load_config(args.config)


def _images(args) -> list[Path]:
    images = pipeline.list_images(args.images)
    if not images:
        log.warning("no images found in %s", args.images)
    return images


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_text(path: Path, text: str) -> None:
    imgproc.atomic_write_bytes(path, text.encode("utf-8"))


def _lf_run_one(cfg, path):
    out = pipeline.run_lfs(cfg, path)
    h, w = out.image.shape
    maps = {s.id: labeling.lf_map(s, out.boxes[s.id], w, h) for s in cfg.lfs}
    return out.boxes, maps


def cmd_lf_run(args) -> int:
    cfg = _config(args)
    images = _images(args)
    out_dir = _out_dir(args)
    results = pipeline.parallel_map(_lf_run_one, images, args.jobs, cfg)
    for path, (boxes, maps) in zip(images, results):
        for spec in cfg.lfs:
            labeling.write_boxes(out_dir / f"{path.stem}.lf-{spec.id}.boxes.txt", boxes[spec.id] or [])
            if args.maps:
                imgproc.write_binary_map(out_dir / f"{path.stem}.lf-{spec.id}.pgm", maps[spec.id])
    log.info("ran %d LFs on %d images", len(cfg.lfs), len(images))
    return 0


def cmd_train(args) -> int:
    cfg = _config(args)
    images = _images(args)
    params = pipeline.train_model(cfg, images, args.jobs)
    Path(args.model).parent.mkdir(parents=True, exist_ok=True)
    aggregator.save_model(params, args.model)
    log.info("trained on %d images, model written to %s", len(images), args.model)
    return 0


def _predict_one(cfg, params, path):
    return pipeline.predict(cfg, params, path)


def _write_predictions(args, cfg, images, results) -> None:
    out_dir = _out_dir(args)
    for path, (boxes, bmap) in zip(images, results):
        labeling.write_boxes(out_dir / f"{path.stem}{cfg.pred_suffix}", boxes)
        if args.maps:
            imgproc.write_binary_map(out_dir / f"{path.stem}.pred.pgm", bmap)


def cmd_infer(args) -> int:
    cfg = _config(args)
    params = aggregator.load_model(args.model, cfg.lf_ids, cfg.lf_classes)
    images = _images(args)
    results = pipeline.parallel_map(_predict_one, images, args.jobs, cfg, params)
    _write_predictions(args, cfg, images, results)
    return 0


def cmd_mbv(args) -> int:
    cfg = _config(args)
    images = _images(args)
    results = pipeline.parallel_map(pipeline.predict_mbv, images, args.jobs, cfg)
    _write_predictions(args, cfg, images, results)
    return 0


def _stem(name: str, suffix: str) -> str:
    return name[: -len(suffix)]


def pair_prediction_files(pred_dir, gt_dir, pred_suffix=".pred.boxes.txt", gt_suffix=".boxes.txt"):
    """Pair ``<stem><pred_suffix>`` with ``<stem><gt_suffix>`` by stem.

    Files in the ground-truth directory that are themselves predictions or
    LF sidecars (``<stem>.pred.*``, ``<stem>.lf-*``) are not ground truth.
    """
    pred_dir, gt_dir = Path(pred_dir), Path(gt_dir)
    preds = {_stem(p.name, pred_suffix): p for p in pred_dir.iterdir() if p.name.endswith(pred_suffix)}
    gts = {}
    for p in gt_dir.iterdir():
        if not p.name.endswith(gt_suffix) or p.name.endswith(pred_suffix):
            continue
        stem = _stem(p.name, gt_suffix)
        if ".lf-" in stem:
            continue
        gts[stem] = p
    orphans = sorted(set(preds) ^ set(gts))
    if orphans:
        raise DataError("unmatched files: " + ", ".join(
            str(preds.get(s) or gts.get(s)) for s in orphans))
    return [(stem, preds[stem], gts[stem]) for stem in sorted(preds)]


def cmd_eval(args) -> int:
    thresholds = args.thresholds or (0.5,)
    if list(thresholds) != sorted(thresholds):
        raise ConfigError("thresholds must be sorted ascending")
    pairs = pair_prediction_files(args.pred, args.gt, args.pred_suffix, args.gt_suffix)
    data = [(labeling.read_boxes(p), labeling.read_boxes(g)) for _, p, g in pairs]
    reports = evalkit.evaluate_corpus(data, thresholds, args.averaging)
    out_dir = _out_dir(args) if args.out else Path(args.pred)
    _write_text(out_dir / "report.csv", evalkit.report_csv(reports))
    sys.stdout.write(evalkit.report_table(reports))
    return 0


def cmd_diagnose(args) -> int:
    cfg = _config(args)
    images = _images(args)
    out_dir = _out_dir(args)
    counts = pipeline.parallel_map(pipeline.image_stats, images, args.jobs, cfg)
    rows = [evalkit.STATS_HEADER.replace("lf_id", "image,lf_id")]
    for path, c in zip(images, counts):
        body = evalkit.stats_csv(evalkit.stats_from_counts(c, cfg.conflict_denominator), image=path.stem)
        rows += body.splitlines()[1:]
    _write_text(out_dir / "lfstats_per_image.csv", "\n".join(rows) + "\n")
    if counts:
        total = counts[0]
        for c in counts[1:]:
            total = total + c
        stats = evalkit.stats_from_counts(total, cfg.conflict_denominator)
        _write_text(out_dir / "lfstats.csv", evalkit.stats_csv(stats))
        sys.stdout.write(evalkit.stats_csv(stats))
    return 0


def cmd_synth(args) -> int:
    corpus = load_corpus_config(args.config) if args.config else CorpusConfig()
    synth.write_corpus(args.out, corpus.synth, args.pages, corpus.pseudo_lfs)
    log.info("wrote %d pages to %s", args.pages, args.out)
    return 0


def cmd_show_config(args) -> int:
    if args.preset == "synth":
        sys.stdout.write(emit_corpus_config(CorpusConfig()))
    else:
        sys.stdout.write(emit_config(PRESETS[args.preset]()))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="weaktext", description="Weakly supervised text detection from labeling functions.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def add(name, fn, help_text, *flags):
        p = sub.add_parser(name, help=help_text)
        p.set_defaults(func=fn)
        if "config" in flags:
            p.add_argument("--config", help="config file or preset:<name> (default: preset:default8)")
        if "images" in flags:
            p.add_argument("--images", required=True, help="directory of .pgm/.png pages")
        if "jobs" in flags:
            p.add_argument("--jobs", type=int, default=1, help="worker processes for per-image work")
        if "thresholds" in flags:
            p.add_argument("--thresholds", type=_thresholds, help="comma-separated IoU thresholds")
        return p

    p = add("lf-run", cmd_lf_run, "run LFs, write per-LF box sidecars", "config", "images", "jobs")
    p.add_argument("--out", required=True)
    p.add_argument("--maps", action="store_true", help="also write LF firing maps as PGM")

    p = add("train", cmd_train, "train the label model", "config", "images", "jobs")
    p.add_argument("--model", required=True)

    p = add("infer", cmd_infer, "predict word boxes with a trained model", "config", "images", "jobs")
    p.add_argument("--model", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--maps", action="store_true")

    p = add("mbv", cmd_mbv, "predict word boxes by majority vote", "config", "images", "jobs")
    p.add_argument("--out", required=True)
    p.add_argument("--maps", action="store_true")

    p = add("eval", cmd_eval, "score predictions against ground truth", "thresholds")
    p.add_argument("--pred", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--out")
    p.add_argument("--averaging", choices=("micro", "macro"), default="micro")
    p.add_argument("--pred-suffix", default=".pred.boxes.txt")
    p.add_argument("--gt-suffix", default=".boxes.txt")

    p = add("diagnose", cmd_diagnose, "coverage/overlap/conflict per LF", "config", "images", "jobs")
    p.add_argument("--out", required=True)

    p = sub.add_parser("synth", help="generate a synthetic corpus")
    p.set_defaults(func=cmd_synth)
    p.add_argument("--config", help="synth config file (default: built-in corpus)")
    p.add_argument("--out", required=True)
    p.add_argument("--pages", type=int, default=50)

    p = sub.add_parser("show-config", help="print a built-in config")
    p.set_defaults(func=cmd_show_config)
    p.add_argument("--preset", choices=sorted(PRESETS) + ["synth"], default="default8")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 1
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO, format="%(levelname)s: %(message)s")
    try:
        return args.func(args)
    except WeakTextError as exc:
        log.error("%s", exc)
        return exc.exit_code
    except OSError as exc:
        log.error("%s", exc)
        return DataError.exit_code


if __name__ == "__main__":
    sys.exit(main())
