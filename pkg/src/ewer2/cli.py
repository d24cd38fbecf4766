"""Command-line surface for the WER estimation pipeline.

Subcommands: synth, score, mfcc, train, predict, evaluate, ablate,
curve. Machine-readable output goes to stdout (or --out FILE); progress
and diagnostics go to stderr. Exit codes: 0 success, 1 usage error,
2 data error (unreadable or invalid inputs).

Option values resolve as: explicit flag > config file (--config,
key=value lines, '#' comments) > built-in default.
"""

from __future__ import annotations

import argparse
import dataclasses
import sys
from pathlib import Path

import numpy as np

from . import dsp, evaluation, scorer, workflow
from .corpus import (Corpus, ManifestError, SynthConfig, generate_synthetic_corpus,
                     load_manifest, save_manifest)
from .evaluation import WerEstimate, cumulative_curve, curve_to_csv, curve_to_svg, reports_to_csv
from .model import ModelDims
from .trainer import TrainConfig

PREDICTIONS_CSV_HEADER = "id,predicted_wer,duration_s"

_DIM_KEYS = ("decoder_hidden", "decoder_out", "conv_filters", "embed_dim",
             "text_filters", "fusion_hidden")


class UsageError(Exception):
    """Bad flags or option values; maps to exit code 1."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        sys.stderr.write(self.format_usage())
        raise UsageError(message)


def _load_config(path) -> dict[str, str]:
    pairs: dict[str, str] = {}
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise UsageError(f"cannot read config file {path}: {exc}")
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        if not sep or not key.strip():
            raise UsageError(f"{path}:{lineno}: expected key=value, got {raw!r}")
        pairs[key.strip().replace("-", "_")] = value.strip()
    return pairs


def _pick(flag_value, conf: dict[str, str], key: str, cast, default):
    """flags > config file > default."""
    if flag_value is not None:
        return flag_value
    if key in conf:
        raw = conf[key]
        try:
            return cast(raw)
        except (TypeError, ValueError):
            raise UsageError(f"config value {key}={raw!r} is not a valid {cast.__name__}")
    return default


def _conf(args) -> dict[str, str]:
    return _load_config(args.config) if getattr(args, "config", None) else {}


def _emit(text: str, out_path) -> None:
    if out_path:
        Path(out_path).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _log(message: str) -> None:
    print(message, file=sys.stderr)


def _train_config(args, conf) -> TrainConfig:
    return TrainConfig(
        batch_size=_pick(args.batch_size, conf, "batch_size", int, 32),
        max_epochs=_pick(args.epochs, conf, "epochs", int, 50),
        lr=_pick(args.lr, conf, "lr", float, 1e-3),
        dropout=_pick(args.dropout, conf, "dropout", float, 0.2),
        patience=_pick(args.patience, conf, "patience", int, 5),
        seed=_pick(args.seed, conf, "seed", int, 0),
    )


def _model_dims(args, conf) -> ModelDims:
    preset = _pick(args.preset, conf, "preset", str, "full")
    if preset == "full":
        base = ModelDims()
    elif preset == "tiny":
        base = ModelDims.tiny()
    else:
        raise UsageError(f"unknown preset {preset!r}; choose full or tiny")
    overrides = {}
    for key in _DIM_KEYS:
        value = _pick(getattr(args, key), conf, key, int, None)
        if value is not None:
            overrides[key] = value
    return dataclasses.replace(base, **overrides) if overrides else base


def _add_train_knobs(sub) -> None:
    sub.add_argument("--seed", type=int, default=None, help="training seed (default 0)")
    sub.add_argument("--epochs", type=int, default=None, help="max epochs (default 50)")
    sub.add_argument("--batch-size", type=int, default=None, help="minibatch size (default 32)")
    sub.add_argument("--lr", type=float, default=None, help="Adam learning rate (default 1e-3)")
    sub.add_argument("--patience", type=int, default=None,
                     help="early-stopping patience on dev MSE (default 5)")
    sub.add_argument("--dropout", type=float, default=None, help="dropout rate (default 0.2)")
    sub.add_argument("--preset", choices=("full", "tiny"), default=None,
                     help="layer-width preset (default full)")
    for key in _DIM_KEYS:
        sub.add_argument("--" + key.replace("_", "-"), type=int, default=None,
                         help=f"override {key}")


def _read_lines(path) -> list[str]:
    return Path(path).read_text(encoding="utf-8").splitlines()


# ---------------------------------------------------------------- commands


def cmd_synth(args) -> int:
    conf = _conf(args)
    out_dir = Path(args.out_dir)
    name = _pick(args.name, conf, "name", str, "synthetic")
    cfg = SynthConfig(
        n_utterances=args.n,
        audio_dir=out_dir / f"{name}-wav",
        vocab_size=_pick(args.vocab_size, conf, "vocab_size", int, 50),
        min_words=_pick(args.min_words, conf, "min_words", int, 2),
        max_words=_pick(args.max_words, conf, "max_words", int, 20),
        error_low=_pick(args.error_low, conf, "error_low", float, 0.0),
        error_high=_pick(args.error_high, conf, "error_high", float, 0.8),
        name=name,
    )
    seed = _pick(args.seed, conf, "seed", int, 0)
    corpus = generate_synthetic_corpus(cfg, seed=seed)
    manifest = out_dir / f"{name}.jsonl"
    save_manifest(corpus, manifest)
    _log(f"wrote {len(corpus)} utterances, audio under {cfg.audio_dir}")
    print(manifest)
    return 0


SCORE_CSV_HEADER = "id,I,D,S,N,ERR,WER"


def cmd_score(args) -> int:
    ref_lines = _read_lines(args.ref)
    hyp_lines = _read_lines(args.hyp)
    if len(ref_lines) != len(hyp_lines):
        raise ValueError(
            f"line count mismatch: {args.ref} has {len(ref_lines)}, "
            f"{args.hyp} has {len(hyp_lines)}")
    pairs = [(r.split(), h.split()) for r, h in zip(ref_lines, hyp_lines)]
    per_utt = [scorer.align(ref, hyp) for ref, hyp in pairs]
    lines = [SCORE_CSV_HEADER]
    for i, counts in enumerate(per_utt, start=1):
        if counts.n_ref == 0:
            raise ValueError(f"{args.ref}: line {i} has an empty reference")
        lines.append(f"utt-{i:06d},{counts.insertions},{counts.deletions},"
                     f"{counts.substitutions},{counts.n_ref},{counts.errors},"
                     f"{counts.errors / counts.n_ref:.6f}")
    ins = sum(c.insertions for c in per_utt)
    dels = sum(c.deletions for c in per_utt)
    subs = sum(c.substitutions for c in per_utt)
    n_ref = sum(c.n_ref for c in per_utt)
    errors = sum(c.errors for c in per_utt)
    corpus = scorer.corpus_wer(pairs)
    lines.append(f"corpus,{ins},{dels},{subs},{n_ref},{errors},{corpus:.6f}")
    _emit("\n".join(lines) + "\n", args.out)
    _log(f"corpus WER {corpus:.6f}, SER {scorer.sentence_error_rate(pairs):.6f} "
         f"over {len(pairs)} utterances")
    return 0


def cmd_mfcc(args) -> int:
    from . import nn

    feats = dsp.compute_mfcc(dsp.load_wav(args.wav))
    if args.format == "csv":
        rows = "\n".join(",".join(f"{v:.8e}" for v in frame) for frame in feats)
        _emit(rows + "\n", args.out)
    else:
        if not args.out:
            raise UsageError("--format binary requires --out FILE")
        nn.save_checkpoint(args.out, [("mfcc", feats)])
    _log(f"{args.wav}: {feats.shape[0]} frames x {feats.shape[1]} coefficients")
    return 0


def cmd_train(args) -> int:
    conf = _conf(args)
    cfg = _train_config(args, conf)
    dims = _model_dims(args, conf)
    train_corpus = load_manifest(args.train)
    dev_corpus = load_manifest(args.dev)
    ts = workflow.train_system(args.system, train_corpus, dev_corpus, cfg,
                               dims=dims, verbose=args.verbose)
    workflow.save_bundle(ts, args.out)
    best_dev = min(h.dev_mse for h in ts.history)
    _log(f"trained system {ts.system} for {len(ts.history)} epochs")
    print(f"system={ts.system} epochs={len(ts.history)} "
          f"best_dev_mse={best_dev:.8f} bundle={args.out}")
    return 0


def cmd_predict(args) -> int:
    ts = workflow.load_bundle(args.bundle)
    corpus = load_manifest(args.data)
    estimates = workflow.predict_corpus(ts, corpus, batch_size=args.batch_size)
    lines = [PREDICTIONS_CSV_HEADER]
    lines += [f"{e.utt_id},{e.predicted:.6f},{e.duration_s:.9g}" for e in estimates]
    _emit("\n".join(lines) + "\n", args.out)
    _log(f"predicted {len(estimates)} utterances with system {ts.system}")
    return 0


def cmd_evaluate(args) -> int:
    ts = workflow.load_bundle(args.bundle)
    corpus = load_manifest(args.data)
    report, _ = workflow.evaluate_trained(ts, corpus, batch_size=args.batch_size)
    _log(report.to_text())
    _emit(reports_to_csv([report]), args.out)
    return 0


def cmd_ablate(args) -> int:
    conf = _conf(args)
    cfg = _train_config(args, conf)
    dims = _model_dims(args, conf)
    train_corpus = load_manifest(args.train)
    dev_corpus = load_manifest(args.dev)
    test_corpus = load_manifest(args.test)
    results = workflow.run_ablation(train_corpus, dev_corpus, test_corpus,
                                    cfg, dims=dims, verbose=args.verbose)
    for ts, report in results:
        _log(report.to_text())
    _emit(reports_to_csv([report for _, report in results]), args.out)
    return 0


def _read_predictions(path) -> list[WerEstimate]:
    lines = _read_lines(path)
    if not lines or lines[0] != PREDICTIONS_CSV_HEADER:
        raise ValueError(f"{path}: expected header {PREDICTIONS_CSV_HEADER!r}")
    estimates = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split(",")
        if len(parts) != 3:
            raise ValueError(f"{path}:{lineno}: expected 3 comma-separated fields")
        estimates.append(WerEstimate(parts[0], float(parts[1]), float(parts[2])))
    return estimates


def cmd_curve(args) -> int:
    estimates = _read_predictions(args.pred)
    points = cumulative_curve(estimates)
    _emit(curve_to_csv(points), args.out)
    if args.svg:
        Path(args.svg).write_text(curve_to_svg(points, title=args.title), encoding="utf-8")
        _log(f"wrote {args.svg}")
    return 0


# ------------------------------------------------------------------ parser


def build_parser() -> _Parser:
    parser = _Parser(prog="ewer2", description=__doc__,
                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    def add(name, func, help_text, generic_out=True):
        p = sub.add_parser(name, help=help_text)
        p.set_defaults(func=func)
        p.add_argument("--config", default=None, help="key=value config file")
        if generic_out:
            p.add_argument("--out", default=None,
                           help="write machine output here instead of stdout")
        p.add_argument("--verbose", action="store_true", help="progress logs on stderr")
        return p

    p = add("synth", cmd_synth, "generate a seeded synthetic corpus with audio", generic_out=False)
    p.add_argument("--n", type=int, required=True, help="number of utterances")
    p.add_argument("--out-dir", required=True, help="directory for manifest and WAVs")
    p.add_argument("--name", default=None, help="corpus name / manifest stem")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--vocab-size", type=int, default=None)
    p.add_argument("--min-words", type=int, default=None)
    p.add_argument("--max-words", type=int, default=None)
    p.add_argument("--error-low", type=float, default=None)
    p.add_argument("--error-high", type=float, default=None)

    p = add("score", cmd_score, "reference-based corpus WER of line-aligned text files")
    p.add_argument("--ref", required=True, help="reference transcripts, one utterance per line")
    p.add_argument("--hyp", required=True, help="hypothesis transcripts, line-aligned with --ref")

    p = add("mfcc", cmd_mfcc, "extract MFCC features from one WAV file")
    p.add_argument("--wav", required=True, help="16 kHz mono 16-bit PCM WAV file")
    p.add_argument("--format", choices=("csv", "binary"), default="csv",
                   help="csv rows or the binary tensor container (needs --out)")

    p = add("train", cmd_train, "train one system and save a model bundle",
            generic_out=False)
    p.add_argument("--train", required=True, help="training manifest (needs wer_target)")
    p.add_argument("--dev", required=True, help="dev manifest (needs wer_target)")
    p.add_argument("--system", type=lambda s: s.upper(), choices=list("ABCDEF"),
                   required=True, help="ablation system name")
    p.add_argument("--out", required=True, help="bundle output directory")
    _add_train_knobs(p)

    p = add("predict", cmd_predict, "per-utterance WER estimates as CSV")
    p.add_argument("--bundle", required=True, help="trained model bundle directory")
    p.add_argument("--data", required=True, help="manifest to predict on")
    p.add_argument("--batch-size", type=int, default=32)

    p = add("evaluate", cmd_evaluate, "score a trained system against references")
    p.add_argument("--bundle", required=True, help="trained model bundle directory")
    p.add_argument("--data", required=True, help="manifest with reference transcripts")
    p.add_argument("--batch-size", type=int, default=32)

    p = add("ablate", cmd_ablate, "train and evaluate all six systems; CSV report")
    p.add_argument("--train", required=True)
    p.add_argument("--dev", required=True)
    p.add_argument("--test", required=True)
    _add_train_knobs(p)

    p = add("curve", cmd_curve, "cumulative-WER curve from a predictions CSV")
    p.add_argument("--pred", required=True, help="CSV produced by the predict command")
    p.add_argument("--svg", default=None, help="also write an SVG line plot here")
    p.add_argument("--title", default="Cumulative WER", help="SVG plot title")

    return parser


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except SystemExit as exc:  # --help
        return 0 if exc.code in (0, None) else 1
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (ManifestError, ValueError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
