"""Command-line entry point: ``lightffd {split,train,eval,predict,bench}``.

Exit codes: 0 success, 1 bad flags, 2 dataset errors, 3 I/O, decode or
checkpoint errors, 4 training divergence.
"""
from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path
from typing import List, Optional

import numpy as np

from . import kernels
from .data import (ImageLoader, SplitSpec, decode_and_resize, normalize_pixels, read_manifest,
                   scan_dataset, stratified_split, write_manifest)
from .errors import (CheckpointCorruptError, DatasetLayoutError, DecodeError,
                     DivergedTrainingError, SplitInfeasibleError, UnknownArchitectureError)
from .metrics import format_report, format_table, write_report
from .models import load_checkpoint, model_forward, parse_arch_id, save_checkpoint
from .optim import Hyperparams
from .trainer import TrainConfig, benchmark, evaluate, run_trials

EXIT_OK, EXIT_FLAGS, EXIT_DATASET, EXIT_IO, EXIT_DIVERGED = 0, 1, 2, 3, 4

log = logging.getLogger("lightffd")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _positive_int(text):
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {v}")
    return v


def _positive_float(text):
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a number, got {text!r}") from None
    if not v > 0:
        raise argparse.ArgumentTypeError(f"must be > 0, got {v}")
    return v


def _int_list(text):
    try:
        vals = [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None
    if not vals or min(vals) < 1:
        raise argparse.ArgumentTypeError(f"epoch values must be >= 1, got {text!r}")
    return vals


def _version(text):
    try:
        return parse_arch_id(text)[0]
    except UnknownArchitectureError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _add_training_flags(p):
    p.add_argument("--root", type=Path, required=True, help="dataset root (two class folders)")
    p.add_argument("--manifest", type=Path, required=True, help="manifest written by 'split'")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--trials", type=_positive_int, default=3)
    p.add_argument("--batch-size", type=_positive_int, default=16)
    p.add_argument("--lr", type=_positive_float, default=1e-4, help="Adam learning rate")
    p.add_argument("--val-frequency", type=_positive_int, default=3,
                   help="validate every N training iterations")
    p.add_argument("--deterministic", action=argparse.BooleanOptionalAction, default=True)
    p.add_argument("--input-size", type=_positive_int, default=224,
                   help="input side in pixels; anything but 224 builds a reduced test variant")
    p.add_argument("--workers", type=_positive_int, default=1, help="image decode threads")
    p.add_argument("--out", type=Path, default=Path("runs"))


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="lightffd", description="LightFFDNet facial forgery detection")
    parser.add_argument("--config", type=Path, help="'key = value' file; flags override it")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("split", help="stratified 70/10/20 split of a dataset tree")
    p.add_argument("--root", type=Path, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=Path, required=True, help="manifest file to write")
    p.add_argument("--per-class-limit", type=_positive_int,
                   help="keep only the first N files (lexicographic) of each class")

    p = sub.add_parser("train", help="train a model over several trials")
    _add_training_flags(p)
    p.add_argument("--version", type=_version, default="v1")
    p.add_argument("--epochs", type=_positive_int, default=10)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a split")
    p.add_argument("--root", type=Path, required=True)
    p.add_argument("--manifest", type=Path, required=True)
    p.add_argument("--checkpoint", type=Path, required=True)
    p.add_argument("--split", choices=("val", "test"), default="test")
    p.add_argument("--version", type=_version, help="fail unless the checkpoint is this version")
    p.add_argument("--batch-size", type=_positive_int, default=16)
    p.add_argument("--out", type=Path, help="directory for the report file")

    p = sub.add_parser("predict", help="classify one image")
    p.add_argument("--checkpoint", type=Path, required=True)
    p.add_argument("image", type=Path)

    p = sub.add_parser("bench", help="accuracy/time table for v1 and v2")
    _add_training_flags(p)
    p.add_argument("--epochs-list", type=_int_list, default=[3, 5, 10])
    return parser


def _read_config(path: Path) -> dict:
    out = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, value = line.partition("=")
            if not sep:
                raise UsageError(f"{path}:{lineno}: expected 'key = value'")
            out[key.strip().replace("-", "_")] = value.strip()
    return out


def parse_args(argv: Optional[List[str]]) -> argparse.Namespace:
    argv = list(sys.argv[1:] if argv is None else argv)
    pre = _Parser(add_help=False)
    pre.add_argument("--config", type=Path)
    pre_args, _ = pre.parse_known_args(argv)
    parser = build_parser()
    command = next((a for a in argv if a in COMMANDS), None)
    if pre_args.config is not None and command is not None:
        # the file's values become defaults, so explicit flags still win
        config = _read_config(pre_args.config)
        sub = parser._subparsers._group_actions[0].choices[command]
        known = {a.dest: a for a in sub._actions}
        for key, raw in config.items():
            action = known.get(key)
            if action is None or key == "help":
                raise UsageError(f"unknown config key {key!r} for '{command}'")
            if isinstance(action, argparse.BooleanOptionalAction):
                value = raw.lower() in ("1", "true", "yes", "on")
            elif action.type is not None:
                try:
                    value = action.type(raw)
                except (argparse.ArgumentTypeError, ValueError) as exc:
                    raise UsageError(f"config key {key!r}: {exc}") from None
            else:
                value = raw
            sub.set_defaults(**{key: value})
            action.required = False
    return parser.parse_args(argv)


def _config_from(args, version: str, epochs: int) -> TrainConfig:
    return TrainConfig(
        model_version=version,
        hyper=Hyperparams(learning_rate=args.lr, batch_size=args.batch_size, epochs=epochs),
        val_frequency=args.val_frequency,
        seed=args.seed,
        trials=args.trials,
        deterministic=args.deterministic,
        input_size=args.input_size,
        workers=args.workers,
    )


def _load_manifest(args):
    manifest = read_manifest(args.manifest, root=args.root)
    if not args.root.is_dir():
        raise DatasetLayoutError(f"dataset root {args.root} does not exist")
    return manifest


def cmd_split(args) -> int:
    manifest = scan_dataset(args.root, per_class_limit=args.per_class_limit)
    split = stratified_split(manifest, SplitSpec(seed=args.seed))
    write_manifest(split, args.out)
    counts = split.counts()
    rows = [(name,) + tuple(counts.get((name, s), 0) for s in ("train", "val", "test"))
            for name in split.class_names]
    print(format_table(rows, ("class", "train", "val", "test")))
    return EXIT_OK


def cmd_train(args) -> int:
    manifest = _load_manifest(args)
    config = _config_from(args, args.version, args.epochs)
    out: Path = args.out
    out.mkdir(parents=True, exist_ok=True)
    v = config.model_version
    runlog_lines: List[str] = []
    timing_lines: List[str] = []
    best = {}
    done = [0]

    def on_epoch(k, rec):
        runlog_lines.append(
            f"trial={k + 1} epoch={rec.epoch} train_loss={rec.train_loss!r} "
            f"train_accuracy={rec.train_accuracy!r} val_accuracy={rec.val_accuracy!r}\n")
        timing_lines.append(f"trial={k + 1} epoch={rec.epoch} wall_time_s={rec.wall_time_s:.6f}\n")
        print(f"[trial {k + 1}] epoch {rec.epoch}/{config.epochs}  loss {rec.train_loss:.5f}  "
              f"train-acc {rec.train_accuracy:.4f}  val-acc {rec.val_accuracy:.4f}  "
              f"{rec.wall_time_s:.1f}s")

    def on_trial(k, model, report):
        done[0] = k + 1
        write_report(report, out / f"report-{v}-trial{k + 1}.txt")
        if not best or report.accuracy > best["acc"]:
            best.update(acc=report.accuracy, model=model, trial=k + 1)

    try:
        agg = run_trials(config, manifest, on_trial=on_trial, on_epoch=on_epoch)
    except DivergedTrainingError as exc:
        print(f"error: trial {done[0] + 1} diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    save_checkpoint(best["model"], out / f"checkpoint-{v}.lffd",
                    {"best_trial": best["trial"], "trials": config.trials})
    write_report(agg, out / f"report-{v}-mean.txt")
    with open(out / f"runlog-{v}.txt", "w", encoding="utf-8", newline="\n") as fh:
        fh.writelines(runlog_lines)
    timing_lines += [f"trial={i + 1} total_wall_time_s={r.wall_time_s:.6f}\n"
                     for i, r in enumerate(agg.trials)]
    with open(out / f"timing-{v}.txt", "w", encoding="utf-8", newline="\n") as fh:
        fh.writelines(timing_lines)
    print(format_report(agg, manifest.class_names))
    if agg.test is not None:
        print(f"  test-acc   {agg.test.accuracy:.4f} (mean of {config.trials} trials)")
    print(f"  time-s     {agg.wall_time_s:.2f} (mean training wall time)")
    return EXIT_OK


def cmd_eval(args) -> int:
    model = load_checkpoint(args.checkpoint)
    if args.version and parse_arch_id(model.spec.arch_id)[0] != args.version:
        print(f"error: checkpoint holds {model.spec.arch_id}, --version asked for {args.version}",
              file=sys.stderr)
        return EXIT_FLAGS
    manifest = _load_manifest(args)
    if not manifest.split(args.split):
        raise DatasetLayoutError(f"split {args.split!r} is empty in {args.manifest}")
    loader = ImageLoader(args.root, size=model.spec.input_size)
    report = evaluate(model, manifest, args.split, loader, args.batch_size)
    report = replace(report, epochs=int(model.metadata.get("epochs", 0)), seeds=[model.seed])
    print(format_report(report, manifest.class_names))
    out = args.out or args.checkpoint.parent
    out.mkdir(parents=True, exist_ok=True)
    write_report(report, out / f"eval-{model.spec.arch_id}-{args.split}.txt")
    return EXIT_OK


def cmd_predict(args) -> int:
    model = load_checkpoint(args.checkpoint)
    names = list(model.metadata.get("class_names", ["fake", "real"]))
    x = normalize_pixels(decode_and_resize(args.image, model.spec.input_size))[None]
    probs = model_forward(model, x, "infer")[0][0].astype(np.float64)
    cls = names[int(np.argmax(probs))]
    order = [names.index(n) for n in ("real", "fake")] if set(names) == {"real", "fake"} \
        else range(len(names))
    print(cls + " " + " ".join(f"{names[i]}={probs[i]:.8f}" for i in order))
    return EXIT_OK


def cmd_bench(args) -> int:
    manifest = _load_manifest(args)
    config = _config_from(args, "v1", args.epochs_list[0])
    rows = benchmark(config, manifest, ("v1", "v2"), args.epochs_list)
    table = format_table(rows)
    print(table)
    args.out.mkdir(parents=True, exist_ok=True)
    (args.out / "bench.txt").write_text(table + "\n", encoding="utf-8")
    return EXIT_OK


COMMANDS = {
    "split": cmd_split,
    "train": cmd_train,
    "eval": cmd_eval,
    "predict": cmd_predict,
    "bench": cmd_bench,
}


def main(argv: Optional[List[str]] = None) -> int:
    try:
        args = parse_args(argv)
    except UsageError as exc:
        print(f"lightffd: error: {exc}", file=sys.stderr)
        return EXIT_FLAGS
    except OSError as exc:
        print(f"lightffd: error: {exc}", file=sys.stderr)
        return EXIT_IO
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    log.debug("kernel backend: %s", kernels.BACKEND)
    try:
        return COMMANDS[args.command](args)
    except (DatasetLayoutError, SplitInfeasibleError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATASET
    except DivergedTrainingError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except (DecodeError, CheckpointCorruptError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATASET


if __name__ == "__main__":
    sys.exit(main())
