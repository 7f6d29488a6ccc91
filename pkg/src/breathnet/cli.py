"""Command-line entry point: ``breathnet <synth|train|infer|eval|stft-dump>``.

Exit codes: 0 success, 2 input error, 3 numerical divergence, 4 model-format error.
"""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path

from .config import RunConfig, load_run_config
from .data import AudioPair, load_pair, read_manifest, split_corpus, write_synthetic_corpus
from .dsp import log_compress, split, stft
from .errors import (BreathnetError, DivergenceError, FormatError, UnsupportedAudioFormatError)
from .evaluation import evaluate
from .inference import enhance
from .modelio import load_model, save_model
from .training import train
from .wavio import read_wav, write_wav

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_DIVERGED = 3
EXIT_FORMAT = 4

log = logging.getLogger("breathnet")


def _pairs(manifest, indices) -> list[AudioPair]:
    return [load_pair(manifest, i) for i in indices]


def cmd_synth(cfg: RunConfig, out_dir, count: int) -> Path:
    """Write ``count`` synthetic pairs plus manifest.csv and labels.csv."""
    path = write_synthetic_corpus(out_dir, count, cfg.synth, cfg.stft)
    print(f"wrote {count} pairs to {path}")
    return path


def cmd_train(cfg: RunConfig, manifest_path, model_out, history_out=None) -> int:
    manifest = read_manifest(manifest_path, cfg.stft.hop)
    parts = split_corpus(manifest, cfg.split.fractions, cfg.seed)
    params, history = train(_pairs(manifest, parts.train), _pairs(manifest, parts.validation),
                            cfg.model, cfg.train, cfg.stft)
    save_model(params, model_out)
    history_out = history_out or Path(model_out).with_suffix(".history.csv")
    history.write_csv(history_out)
    print(f"best_epoch={history.best_epoch} stopped_epoch={history.stopped_epoch} "
          f"model={model_out} history={history_out}")
    return EXIT_OK


def cmd_infer(cfg: RunConfig, model_path, in_wav, out_wav) -> int:
    params = load_model(model_path)
    clip = read_wav(in_wav)
    result = enhance(clip, params, cfg.stft, mask_floor=cfg.infer.mask_floor)
    write_wav(out_wav, result.output)
    return EXIT_OK


SPLIT_NAMES = ("test", "validation", "train", "all")


def cmd_eval(cfg: RunConfig, model_path, manifest_path, report_out, which: str = "test",
             identity_mask: bool = False) -> int:
    params = load_model(model_path)
    manifest = read_manifest(manifest_path, cfg.stft.hop)
    if which == "all":
        indices = list(range(len(manifest)))
    else:
        indices = getattr(split_corpus(manifest, cfg.split.fractions, cfg.seed), which)
    report = evaluate(params, _pairs(manifest, indices), cfg.stft, cfg.mfcc, cfg.eval.theta,
                      cfg.eval.floor_db, mask_override=1.0 if identity_mask else None,
                      mask_floor=cfg.infer.mask_floor)
    report.write_csv(report_out)
    print(report.summary())
    return EXIT_OK


def cmd_stft_dump(cfg: RunConfig, in_wav, out_csv, log_scale: bool = False) -> int:
    """Write the magnitude spectrogram as CSV: one row per frame, one column per bin."""
    mag, _ = split(stft(read_wav(in_wav), cfg.stft))
    data = log_compress(mag.data) if log_scale else mag.data
    with open(out_csv, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(["frame"] + [f"bin_{k}" for k in range(data.shape[1])])
        for i, row in enumerate(data):
            writer.writerow([i] + [repr(float(v)) for v in row])
    return EXIT_OK


def _global_flags(parser: argparse.ArgumentParser, prefix: str = "") -> None:
    parser.add_argument("--config", dest=prefix + "config", metavar="PATH",
                        help="key = value configuration file")
    parser.add_argument("--seed", dest=prefix + "seed", type=int, metavar="N", help="run seed")
    parser.add_argument("--set", dest=prefix + "set", action="append", default=[],
                        metavar="KEY=VALUE", help="override one configuration key (repeatable)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="breathnet", description="Breath-sound removal with a masking U-Net.")
    _global_flags(parser, "g_")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="write a seeded synthetic corpus")
    p.add_argument("out_dir")
    p.add_argument("--count", type=int, default=8)

    p = sub.add_parser("train", help="train a model from a manifest")
    p.add_argument("manifest")
    p.add_argument("model_out")
    p.add_argument("--history", help="history CSV path (default: <model_out>.history.csv)")

    p = sub.add_parser("infer", help="remove breaths from one WAV file")
    p.add_argument("model")
    p.add_argument("in_wav")
    p.add_argument("out_wav")

    p = sub.add_parser("eval", help="score a model on one split of a manifest")
    p.add_argument("model")
    p.add_argument("manifest")
    p.add_argument("--report", default="report.csv", help="report CSV path (default: report.csv)")
    p.add_argument("--split", choices=SPLIT_NAMES, default="test")
    p.add_argument("--identity-mask", action="store_true",
                   help="bypass the network with an all-ones mask (input-vs-target baseline)")

    p = sub.add_parser("stft-dump", help="write a magnitude spectrogram as CSV")
    p.add_argument("in_wav")
    p.add_argument("out_csv")
    p.add_argument("--log", action="store_true", help="dump log1p magnitudes")

    for p in sub.choices.values():
        _global_flags(p)
    return parser


def run(args: argparse.Namespace) -> int:
    cfg = load_run_config(args.config or args.g_config,
                          args.seed if args.seed is not None else args.g_seed,
                          list(args.g_set) + list(args.set))
    if args.command == "synth":
        if args.count < 0:
            print("error: --count must be >= 0", file=sys.stderr)
            return EXIT_INPUT
        cmd_synth(cfg, args.out_dir, args.count)
        return EXIT_OK
    if args.command == "train":
        return cmd_train(cfg, args.manifest, args.model_out, args.history)
    if args.command == "infer":
        return cmd_infer(cfg, args.model, args.in_wav, args.out_wav)
    if args.command == "eval":
        return cmd_eval(cfg, args.model, args.manifest, args.report, args.split, args.identity_mask)
    return cmd_stft_dump(cfg, args.in_wav, args.out_csv, args.log)


def exit_code(exc: BaseException) -> int:
    """Map an exception to the documented exit code."""
    if isinstance(exc, DivergenceError):
        return EXIT_DIVERGED
    if isinstance(exc, FormatError) and not isinstance(exc, UnsupportedAudioFormatError):
        return EXIT_FORMAT
    return EXIT_INPUT


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    # epoch lines and progress go to stdout; bound per call so captured streams work
    handler = logging.StreamHandler(sys.stdout)
    handler.setFormatter(logging.Formatter("%(message)s"))
    log.addHandler(handler)
    log.setLevel(logging.DEBUG if args.verbose else logging.INFO)
    try:
        return run(args)
    except DivergenceError as exc:
        print(f"diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except (BreathnetError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exit_code(exc)
    finally:
        log.removeHandler(handler)


if __name__ == "__main__":
    sys.exit(main())
