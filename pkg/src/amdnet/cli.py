"""``amdnet`` command line: assess, enhance, train, eval, predict."""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path

import numpy as np

from . import model as M
from .config import CONFIG_ENV, describe_keys, parse_config
from .data import (CLASSES, IMAGE_SUFFIXES, ImageBatches, Manifest, read_split, scan_dataset,
                   stratified_split, write_split)
from .exceptions import AMDNetError
from .metrics import compute_metrics, confusion_matrix, emit_report
from .preprocess import (channel_extract, enhance_pipeline, read_image, resize, rgb_to_lab,
                         save_enhanced, to_network_input)
from .quality import assess_quality, fidelity, format_psnr

logger = logging.getLogger("amdnet")

EXIT_OK, EXIT_ERROR, EXIT_USAGE, EXIT_BELOW_FLOOR = 0, 1, 2, 3

HISTORY_COLUMNS = ("epoch", "lr", "train_loss", "train_acc", "val_loss", "val_acc")
CHECKPOINT_NAME = "model.ckpt"


def _images_under(root: Path) -> list[Path]:
    if not root.is_dir():
        raise AMDNetError(f"{root} is not a directory")
    return sorted(p for p in root.rglob("*") if p.is_file() and p.suffix.lower() in IMAGE_SUFFIXES)


def _fmt(v) -> str:
    return "" if v is None else repr(v)


def write_history_csv(history: list[dict], path: Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(HISTORY_COLUMNS)
        for rec in history:
            w.writerow([_fmt(rec[c]) for c in HISTORY_COLUMNS])


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_assess(args, cfg) -> int:
    root = Path(args.directory)
    out = Path(cfg["output.dir"])
    out.mkdir(parents=True, exist_ok=True)
    thresholds = cfg.thresholds()
    with open(out / "quality.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["filename", "sharpness", "illumination", "contrast", "decision", "reason"])
        for path in _images_under(root):
            r = assess_quality(read_image(path), thresholds)
            w.writerow([path.relative_to(root).as_posix(), f"{r.sharpness:.4f}",
                        f"{r.illumination:.4f}", f"{r.contrast:.4f}", r.decision, r.reason])
    print(out / "quality.csv")
    return EXIT_OK


def cmd_enhance(args, cfg) -> int:
    root = Path(args.directory)
    out = Path(cfg["output.dir"])
    params = cfg.enhance_params()
    logger.info("enhance stages: rgb_to_lab -> extract(L) -> clahe(clip=%s, grid=%s)%s -> resize(%d)",
                params.clip_limit, tuple(params.grid),
                "" if params.gamma is None else f" -> gamma({params.gamma})", params.size)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "fidelity.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["filename", "mse", "psnr", "ssim"])
        for path in _images_under(root):
            rel = path.relative_to(root)
            img = read_image(path)
            enhanced = enhance_pipeline(img, params)
            reference = resize(channel_extract(rgb_to_lab(img), 0), (params.size, params.size))
            save_enhanced(enhanced, (out / "enhanced" / rel).with_suffix(".png"))
            s = fidelity(enhanced, reference)
            w.writerow([rel.as_posix(), f"{s.mse:.2f}", format_psnr(s.psnr), f"{s.ssim:.4f}"])
    print(out / "fidelity.csv")
    return EXIT_OK


def _dataset(cfg, args) -> tuple[Manifest, Manifest, Manifest]:
    root = getattr(args, "data", None) or cfg["dataset.root"]
    if not root:
        raise AMDNetError("no dataset root: pass --data or set dataset.root in the config")
    manifest = scan_dataset(root, cfg.thresholds(), assess=cfg["dataset.assess"],
                            include_rejected=cfg["dataset.include_rejected"])
    train, test = stratified_split(manifest, cfg["dataset.test_fraction"], cfg["dataset.seed"])
    return manifest, train, test


def cmd_train(args, cfg) -> int:
    out = Path(cfg["output.dir"])
    out.mkdir(parents=True, exist_ok=True)
    manifest, train, test = _dataset(cfg, args)
    manifest.to_csv(out / "manifest.csv")
    write_split(out / "split.json", test, cfg["dataset.seed"], cfg["dataset.test_fraction"])

    tc = cfg.train_config()
    enhance = cfg.enhance_params()
    train_batches = ImageBatches(train, tc.batch_size, tc.seed, train=True,
                                 augment_config=cfg.augment_config(), enhance=enhance)
    val_batches = None
    if len(test):
        val_batches = ImageBatches(test, tc.batch_size, tc.seed, train=False, enhance=enhance)
    state, trace = M.build_model(cfg.model_spec(), tc.seed)
    for row in trace:
        logger.debug("%2d %-14s in=%s params=%d", row.index, row.kind, row.input_shape, row.n_params)
    history = M.fit(state, train_batches, tc, val_batches)
    M.save_checkpoint(state, out / CHECKPOINT_NAME)
    write_history_csv(history, out / "history.csv")
    print(out / CHECKPOINT_NAME)
    return EXIT_OK


def _load_state(cfg, args) -> M.ModelState:
    ckpt = Path(getattr(args, "checkpoint", None) or Path(cfg["output.dir"]) / CHECKPOINT_NAME)
    if not ckpt.is_file():
        raise AMDNetError(f"checkpoint {ckpt} not found; run `amdnet train` first")
    return M.load_checkpoint(ckpt, cfg.model_spec())


def cmd_eval(args, cfg) -> int:
    out = Path(cfg["output.dir"])
    state = _load_state(cfg, args)
    if not (out / "manifest.csv").is_file() or not (out / "split.json").is_file():
        raise AMDNetError(f"{out} has no manifest.csv/split.json; run `amdnet train` first")
    _, test = read_split(out / "split.json", Manifest.from_csv(out / "manifest.csv"))
    if len(test) == 0:
        raise AMDNetError("the recorded test split is empty")
    batches = ImageBatches(test, cfg["train.batch_size"], train=False, enhance=cfg.enhance_params())
    actual, predicted = [], []
    for xb, yb in batches.batches(0):
        _, labels = M.predict(state, xb)
        actual.extend(yb.argmax(axis=1).tolist())
        predicted.extend(labels.tolist())
    report = compute_metrics(confusion_matrix(actual, predicted))
    text = emit_report(report, "text")
    (out / "metrics.txt").write_text(text)
    (out / "metrics.csv").write_text(emit_report(report, "csv"))
    print(text, end="")
    if report.accuracy < cfg["train.accuracy_floor"]:
        logger.error("accuracy %.4f below floor %.4f", report.accuracy, cfg["train.accuracy_floor"])
        return EXIT_BELOW_FLOOR
    return EXIT_OK


def cmd_predict(args, cfg) -> int:
    state = _load_state(cfg, args)
    img = enhance_pipeline(read_image(args.image), cfg.enhance_params())
    probs, labels = M.predict(state, to_network_input(img)[None])
    for name, p in zip(CLASSES, probs[0]):
        print(f"{name},{p:.6f}")
    print(f"label,{CLASSES[int(labels[0])]}")
    return EXIT_OK


def cmd_show_config(args, cfg) -> int:
    for key in sorted(cfg.values):
        print(f"{key} = {cfg.values[key]!r}  ({cfg.provenance[key]})")
    return EXIT_OK


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="amdnet",
        description="Fundus quality gating, CLAHE enhancement and CNN-LSTM classification.",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog=(f"config keys (INI sections; default path from ${CONFIG_ENV}):\n"
                + describe_keys()
                + "\n\n[published] defaults follow the published setup; [chosen] ones are ours."),
    )
    parser.add_argument("--config", help="INI run configuration")
    parser.add_argument("--seed", type=int, help="override dataset.seed and train.seed")
    parser.add_argument("--out-dir", help="override output.dir")
    parser.add_argument("--threads", type=int, help="limit BLAS threads")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("assess", help="quality-gate every image under a directory")
    p.add_argument("directory")
    p.set_defaults(func=cmd_assess)
    p = sub.add_parser("enhance", help="write enhanced PNGs and a fidelity CSV")
    p.add_argument("directory")
    p.set_defaults(func=cmd_enhance)
    p = sub.add_parser("train", help="scan, split, train, write checkpoint and history")
    p.add_argument("--data", help="dataset root (overrides dataset.root)")
    p.set_defaults(func=cmd_train)
    p = sub.add_parser("eval", help="evaluate the checkpoint on the recorded test split")
    p.add_argument("--checkpoint")
    p.set_defaults(func=cmd_eval)
    p = sub.add_parser("predict", help="print class probabilities for one image")
    p.add_argument("image")
    p.add_argument("--checkpoint")
    p.set_defaults(func=cmd_predict)
    p = sub.add_parser("show-config", help="print the effective configuration and provenance")
    p.set_defaults(func=cmd_show_config)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = parse_config(args.config)
        if args.seed is not None:
            cfg.set("dataset.seed", args.seed)
            cfg.set("train.seed", args.seed)
        if args.out_dir is not None:
            cfg.set("output.dir", args.out_dir)
    except AMDNetError as exc:
        print(f"amdnet: config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        if args.threads:
            from threadpoolctl import threadpool_limits

            with threadpool_limits(args.threads):
                return args.func(args, cfg)
        return args.func(args, cfg)
    except (AMDNetError, OSError) as exc:
        print(f"amdnet: error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
