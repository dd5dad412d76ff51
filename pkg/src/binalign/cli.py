"""Command-line interface: synth, vocab, train, align, eval, analyze.

Corpora are addressed by prefix: ``PREFIX.src``, ``PREFIX.tgt`` and, where
gold is needed, ``PREFIX.align`` (Pharaoh format).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import fields

from . import __version__
from .aligner import (
    AggregationKind,
    Direction,
    SymmetrizationKind,
    TokenizedPair,
    align_corpus,
    format_hypothesis,
    format_scores,
    score_matrix,
)
from .corpus import (
    SubwordVocabulary,
    atomic_write_text,
    parse_parallel_corpus,
    parse_pharaoh,
    read_lines,
    train_subword_vocab,
    write_parallel_corpus,
)
from .encoder import Checkpoint, ModelConfig, init_params, read_checkpoint, write_checkpoint
from .metrics import evaluate_corpus, stratify
from .synth import generate, load_spec_file
from .training import TrainConfig, train

log = logging.getLogger("binalign")

SYM_CHOICES = [k.value for k in SymmetrizationKind]
AGG_CHOICES = [k.value for k in AggregationKind]


def threshold_type(text: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if not 0.0 < value < 1.0:
        raise argparse.ArgumentTypeError(f"threshold must lie in (0, 1), got {value}")
    return value


def positive_int(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if value <= 0:
        raise argparse.ArgumentTypeError(f"must be positive, got {value}")
    return value


def non_negative_int(text: str) -> int:
    value = int(text)
    if value < 0:
        raise argparse.ArgumentTypeError(f"must be non-negative, got {value}")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="binalign",
        description="Word alignment as per-token binary classification over span-marked sentence pairs.",
        allow_abbrev=False,
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")
    sub.required = True

    p = sub.add_parser("synth", help="generate synthetic corpora with exact gold", allow_abbrev=False)
    p.add_argument("--spec", required=True, help="JSON generator spec")
    p.add_argument("--out-dir", required=True)

    p = sub.add_parser("vocab", help="train a subword vocabulary", allow_abbrev=False)
    p.add_argument("--corpus", required=True, action="append", help="corpus prefix (repeatable)")
    p.add_argument("--size", required=True, type=positive_int, help="target vocabulary size")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)

    p = sub.add_parser("train", help="train or fine-tune a checkpoint", allow_abbrev=False)
    p.add_argument("--corpus", required=True, help="training corpus prefix (needs .align)")
    p.add_argument("--val", help="validation corpus prefix (needs .align)")
    p.add_argument("--config", help="JSON with optional 'model' and 'train' sections")
    init = p.add_mutually_exclusive_group(required=True)
    init.add_argument("--vocab", help="vocabulary for a freshly initialized model")
    init.add_argument("--init", help="checkpoint to continue from (pre-trained model)")
    p.add_argument("--out", required=True, help="output checkpoint")
    p.add_argument("--log", help="per-epoch JSON lines log")
    p.add_argument("--select", choices=["best", "final"],
                   help="checkpoint to write (default: best by validation AER when --val is given)")
    p.add_argument("--epochs", type=non_negative_int,
                   help="default 5, the published setting; 25 is published for few-shot training from scratch")
    p.add_argument("--lr", type=float, help="default 2e-3, sized for the toy encoder (the published 2e-5 targets large pre-trained encoders)")
    p.add_argument("--batch-size", type=positive_int, help="default 8, the published setting")
    p.add_argument("--threshold", type=threshold_type, help="validation decoding threshold, default 0.5 (published)")
    p.add_argument("--seed", type=int, help="shuffling / few-shot sampling seed, default 0")
    p.add_argument("--model-seed", type=int, help="initialization seed for --vocab, default 0")
    p.add_argument("--few-shot", type=positive_int, metavar="K",
                   help="train on a seeded sample of K pairs (the published few-shot setting uses 32)")
    p.add_argument("--figures", help="directory for the training-curve figure")

    p = sub.add_parser("align", help="align a corpus with a checkpoint", allow_abbrev=False)
    p.add_argument("--corpus", required=True, help="corpus prefix (.src/.tgt)")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--agg", choices=AGG_CHOICES, default="max",
                   help="subword-to-word aggregation (default: max)")
    p.add_argument("--sym", choices=SYM_CHOICES, default="avg",
                   help="symmetrization (default: avg, the published probability average)")
    p.add_argument("--threshold", type=threshold_type, default=0.5,
                   help="decision threshold, ties align (default: 0.5, published)")
    p.add_argument("--jobs", type=positive_int, default=1, help="parallel sentence workers")
    p.add_argument("--out", help="Pharaoh output (default: stdout)")
    p.add_argument("--scores", help="sidecar file of i-j:score per pair")
    p.add_argument("--figures", help="directory for score-matrix heatmaps")
    p.add_argument("--plot-pairs", type=non_negative_int, default=3,
                   help="number of leading pairs to plot with --figures (default: 3)")

    p = sub.add_parser("eval", help="AER / precision / recall / F1", allow_abbrev=False)
    p.add_argument("--hyp", required=True)
    p.add_argument("--gold", required=True)
    p.add_argument("--out", help="JSON report (default: stdout)")

    p = sub.add_parser("analyze", help="untranslated / one-to-many error stratification", allow_abbrev=False)
    p.add_argument("--hyp", required=True)
    p.add_argument("--gold", required=True)
    p.add_argument("--corpus", required=True, help="corpus prefix (.src/.tgt) for sentence lengths")
    p.add_argument("--out", help="JSON report (default: stdout)")
    p.add_argument("--table", help="plain-text table output")
    p.add_argument("--figures", help="directory for the stratification bar chart")
    return parser


def parse_args(argv=None) -> argparse.Namespace:
    args = build_parser().parse_args(argv)
    if args.command == "align":
        args.agg = AggregationKind(args.agg)
        args.sym = SymmetrizationKind(args.sym)
    return args


class CLIError(RuntimeError):
    pass


def _require(*paths):
    for path in paths:
        if path is not None and not os.path.isfile(path):
            raise CLIError(f"no such file: {path}")


def _corpus_files(prefix, need_align=False):
    files = [prefix + ".src", prefix + ".tgt"] + ([prefix + ".align"] if need_align else [])
    _require(*files)
    return files


def _emit(text: str, out):
    if out:
        atomic_write_text(out, text)
    else:
        sys.stdout.write(text)


def _ensure_dir(path):
    if path:
        os.makedirs(path, exist_ok=True)


def cmd_synth(args):
    _require(args.spec)
    specs = load_spec_file(args.spec)
    _ensure_dir(args.out_dir)
    manifest = {}
    for name, spec in specs.items():
        pairs, stats = generate(spec, with_stats=True)
        write_parallel_corpus(pairs, os.path.join(args.out_dir, name))
        manifest[name] = {"spec": spec.to_dict(), "counts": dict(sorted(stats.items())), "n_pairs": len(pairs)}
    atomic_write_text(
        os.path.join(args.out_dir, "manifest.json"), json.dumps(manifest, indent=2, sort_keys=True) + "\n"
    )


def cmd_vocab(args):
    files = [_corpus_files(prefix) for prefix in args.corpus]
    pairs = [p for src, tgt in files for p in parse_parallel_corpus(src, tgt)]
    vocab = train_subword_vocab(pairs, args.size, args.seed)
    vocab.save(args.out)
    log.info("vocabulary of %d entries written to %s", len(vocab), args.out)


def _load_config(path):
    if path is None:
        return {}, {}, {}
    _require(path)
    with open(path, encoding="utf-8") as f:
        raw = json.load(f)
    unknown = set(raw) - {"model", "train", "model_seed"}
    if unknown:
        raise CLIError(f"unknown config sections: {sorted(unknown)}")
    return raw.get("model", {}), raw.get("train", {}), {"model_seed": raw.get("model_seed", 0)}


def cmd_train(args):
    train_files = _corpus_files(args.corpus, need_align=True)
    val_files = _corpus_files(args.val, need_align=True) if args.val else None
    _require(args.vocab, args.init)
    model_cfg, train_cfg, extra = _load_config(args.config)
    overrides = {
        "epochs": args.epochs,
        "lr": args.lr,
        "batch_size": args.batch_size,
        "threshold": args.threshold,
        "seed": args.seed,
        "few_shot_k": args.few_shot,
    }
    known = {f.name for f in fields(TrainConfig)}
    if set(train_cfg) - known:
        raise CLIError(f"unknown train config keys: {sorted(set(train_cfg) - known)}")
    tc = TrainConfig(**{**train_cfg, **{k: v for k, v in overrides.items() if v is not None}})

    corpus = parse_parallel_corpus(*train_files)
    val = parse_parallel_corpus(*val_files) if val_files else None
    if args.init:
        if model_cfg:
            raise CLIError("model config cannot change when continuing from --init")
        start = read_checkpoint(args.init)
    else:
        vocab = SubwordVocabulary.load(args.vocab)
        cfg = ModelConfig(vocab_size=len(vocab), **model_cfg)
        seed = args.model_seed if args.model_seed is not None else extra["model_seed"]
        start = Checkpoint(cfg, init_params(cfg, seed), vocab, {"epochs_seen": 0, "init_seed": seed})

    result = train(corpus, tc, start, val=val)
    select = args.select or ("best" if val else "final")
    write_checkpoint(result.best if select == "best" else result.final, args.out)
    if args.log:
        atomic_write_text(args.log, "".join(json.dumps(r, sort_keys=True) + "\n" for r in result.history))
    if args.figures and result.history:
        from .plotting import plot_training_curve

        _ensure_dir(args.figures)
        plot_training_curve(result.history, os.path.join(args.figures, "training_curve.png"))


def cmd_align(args):
    src, tgt = _corpus_files(args.corpus)
    _require(args.checkpoint)
    model = read_checkpoint(args.checkpoint)
    corpus = parse_parallel_corpus(src, tgt)
    errors: list = []
    hyps = align_corpus(corpus, model, args.agg, args.sym, args.threshold, jobs=args.jobs, errors=errors)
    _emit("".join(format_hypothesis(h) + "\n" for h in hyps), args.out)
    if args.scores:
        atomic_write_text(args.scores, "".join(format_scores(h) + "\n" for h in hyps))
    if args.figures:
        from .plotting import plot_score_matrix

        _ensure_dir(args.figures)
        for idx, pair in enumerate(corpus[: args.plot_pairs]):
            if any(i == idx for i, _ in errors):
                continue
            tp = TokenizedPair.of(pair, model.vocab)
            fwd = score_matrix(tp, model, Direction.FORWARD, args.agg).probs
            rev = score_matrix(tp, model, Direction.REVERSE, args.agg).probs
            plot_score_matrix(
                (fwd + rev) / 2,
                pair.source.words,
                pair.target.words,
                os.path.join(args.figures, f"scores_{idx:04d}.png"),
                links=hyps[idx].pairs,
                title=f"pair {idx}",
            )
    if errors:
        for idx, msg in errors:
            log.error("pair %d: %s", idx, msg)
        raise CLIError(f"{len(errors)} of {len(corpus)} pairs failed to align")


def _read_alignments(path):
    _require(path)
    out = []
    for n, line in enumerate(read_lines(path), start=1):
        try:
            out.append(parse_pharaoh(line))
        except ValueError as e:
            raise CLIError(f"{path}: line {n}: {e}") from None
    return out


def cmd_eval(args):
    hyps = [set(g.possible) for g in _read_alignments(args.hyp)]
    golds = _read_alignments(args.gold)
    if len(hyps) != len(golds):
        raise CLIError(f"line count mismatch: {len(hyps)} hypotheses, {len(golds)} gold lines")
    rep = evaluate_corpus(hyps, golds)
    _emit(json.dumps(rep.to_dict(), indent=2, sort_keys=True) + "\n", args.out)


def cmd_analyze(args):
    hyps = [set(g.possible) for g in _read_alignments(args.hyp)]
    golds = _read_alignments(args.gold)
    src, tgt = _corpus_files(args.corpus)
    pairs = parse_parallel_corpus(src, tgt)
    if not len(hyps) == len(golds) == len(pairs):
        raise CLIError(
            f"line count mismatch: {len(hyps)} hypotheses, {len(golds)} gold, {len(pairs)} pairs"
        )
    for n, (g, p) in enumerate(zip(golds, pairs), start=1):
        try:
            g.check_bounds(len(p.source), len(p.target))
        except ValueError as e:
            raise CLIError(f"{args.gold}: line {n}: {e}") from None
    rep = stratify(hyps, golds, pairs)
    _emit(json.dumps(rep.to_dict(), indent=2, sort_keys=True) + "\n", args.out)
    if args.table:
        atomic_write_text(args.table, rep.table())
    if args.figures:
        from .plotting import plot_stratification

        _ensure_dir(args.figures)
        plot_stratification(rep, os.path.join(args.figures, "stratification.png"))


COMMANDS = {
    "synth": cmd_synth,
    "vocab": cmd_vocab,
    "train": cmd_train,
    "align": cmd_align,
    "eval": cmd_eval,
    "analyze": cmd_analyze,
}


def execute(args: argparse.Namespace) -> int:
    try:
        COMMANDS[args.command](args)
    except (CLIError, ValueError, OSError, RuntimeError) as e:
        msg = " ".join(str(e).split())
        print(f"binalign: error: {msg}", file=sys.stderr)
        return 1
    return 0


def main(argv=None) -> int:
    args = parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    return execute(args)


if __name__ == "__main__":
    sys.exit(main())
