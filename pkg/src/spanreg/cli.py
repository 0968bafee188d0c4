"""Command line entry points.

Exit codes: 0 success, 1 usage or configuration error, 2 runtime or numeric
error.  Every command that writes artifacts also writes the fully resolved
configuration next to them, and every command is deterministic given its
configuration and seed.
"""

from __future__ import annotations

import argparse
import json
import statistics
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import tensor as T
from .checkpoint import load_checkpoint
from .config import (
    ConfigError,
    ModelConfig,
    RunConfig,
    load_run_config,
    write_config_echo,
)
from .corpus import (
    CorpusError,
    Sentence,
    SynthConfig,
    Vocab,
    generate_synthetic,
    read_column_corpus,
    write_column_corpus,
)
from .decode import inspect_regularity, predict
from .encoder import load_pretrained_embeddings
from .model import Model
from .tensor import ContractError, NumericError, ShapeError, gradient_check
from .train import TrainingDiverged, evaluate_on, rng_streams, train

USAGE_ERRORS = (ConfigError, CorpusError, FileNotFoundError, NotADirectoryError)
RUNTIME_ERRORS = (NumericError, ContractError, ShapeError, TrainingDiverged)


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exit_:   # argparse uses 2 for usage problems
        return 0 if exit_.code in (0, None) else 1
    try:
        return args.func(args)
    except USAGE_ERRORS as err:
        print(f"error: {err}", file=sys.stderr)
        return 1
    except RUNTIME_ERRORS as err:
        print(f"error: {err}", file=sys.stderr)
        return 2


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="spanreg",
        description="Two-branch span-based entity recognizer over characters.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="synthesize a regularity corpus")
    p.add_argument("--spec", required=True, help="JSON generator spec")
    p.add_argument("--out", required=True, help="output directory for the splits")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", help="train a model from a run config")
    _config_args(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="score a checkpoint on a labeled corpus")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--flat", action="store_true", help="forbid nested output")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("predict", help="write predictions as JSON lines")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--flat", action="store_true")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("inspect", help="show attention over one span")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--text", required=True, help="sentence characters")
    p.add_argument("--start", type=int, required=True)
    p.add_argument("--end", type=int, required=True, help="inclusive end index")
    p.add_argument("--json", action="store_true", help="machine-readable output")
    p.set_defaults(func=cmd_inspect)

    p = sub.add_parser("gradcheck", help="finite-difference audit of the full model")
    p.add_argument("--d", type=int, default=2, help="per-direction hidden size")
    p.add_argument("--e", type=int, default=4, help="embedding size")
    p.add_argument("--c", type=int, default=3, help="class count incl. no-entity")
    p.add_argument("--m", type=int, default=3, help="boundary projection size")
    p.add_argument("--l", type=int, default=3, help="sentence length")
    p.add_argument("--layers", type=int, default=1)
    p.add_argument("--seeds", type=int, default=5)
    p.add_argument("--eps", type=float, default=1e-5)
    p.add_argument("--tol", type=float, default=1e-4)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("ablate", help="four-configuration component sweep")
    _config_args(p)
    p.add_argument("--seeds", type=int, default=5)
    p.set_defaults(func=cmd_ablate)
    return parser


def _config_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", required=True, help="run config JSON")
    p.add_argument(
        "--set", action="append", default=[], metavar="PATH=VALUE",
        help="dotted-path config override, repeatable",
    )


def cmd_gen_data(args) -> int:
    spec = SynthConfig.from_json(args.spec)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    splits = generate_synthetic(spec, args.seed)
    for name, sentences in splits.items():
        write_column_corpus(sentences, out / f"{name}.tsv")
    echo = {"command": "gen-data", "seed": args.seed, "generator": spec.to_dict()}
    (out / "resolved_config.json").write_text(
        json.dumps(echo, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    counts = {name: len(s) for name, s in splits.items()}
    print(json.dumps({"written": str(out), "sentences": counts}))
    return 0


def _load_run(args) -> RunConfig:
    return load_run_config(args.config, args.set)


def _build_model(cfg: RunConfig, train_sentences) -> Model:
    vocab = Vocab.build(train_sentences)
    streams = rng_streams(cfg.seed)
    model = Model.init(vocab, cfg.model, streams.init)
    if cfg.data.pretrained_embeddings:
        n = load_pretrained_embeddings(
            cfg.data.pretrained_embeddings, vocab, model.params.encoder.embedding
        )
        print(f"loaded {n} pretrained embedding rows", file=sys.stderr)
    return model


def cmd_train(args) -> int:
    cfg = _load_run(args)
    T.set_precision(cfg.precision)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_config_echo(cfg, out)

    train_sentences = read_column_corpus(cfg.data.train)
    dev_sentences = read_column_corpus(cfg.data.dev) if cfg.data.dev else []
    model = _build_model(cfg, train_sentences)
    result = train(
        model, train_sentences, dev_sentences, cfg.train, cfg.seed,
        out_dir=out, flat_decode=cfg.decode.flat,
    )
    summary = {
        "out_dir": str(out),
        "epochs": cfg.train.epochs,
        "best_dev_f1": result.best_f1,
        "best_epoch": result.best_epoch,
        "final_loss_aware": result.log[-1]["loss_aware"] if result.log else None,
        "skipped_gold_spans": result.skipped_gold,
    }
    print(json.dumps(summary))
    return 0


def cmd_eval(args) -> int:
    model = load_checkpoint(args.checkpoint)
    sentences = read_column_corpus(args.data)
    preps = [model.prepare(s) for s in sentences]
    report = evaluate_on(model, preps, sentences, flat=args.flat)
    print(json.dumps(report.to_dict(), indent=2, sort_keys=True))
    return 0


def cmd_predict(args) -> int:
    model = load_checkpoint(args.checkpoint)
    sentences = read_column_corpus(args.data)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with out.open("w", encoding="utf-8") as fh:
        for sentence in sentences:
            entities = [
                {
                    "start": p.start,
                    "end": p.end,
                    "type": model.vocab.label_name(p.label_id),
                    "score": p.score,
                }
                for p in predict(model, sentence, flat=args.flat)
            ]
            fh.write(json.dumps({"chars": sentence.chars, "entities": entities}) + "\n")
    echo = {"command": "predict", "checkpoint": str(args.checkpoint),
            "data": str(args.data), "flat": args.flat}
    out.with_name(out.name + ".config.json").write_text(
        json.dumps(echo, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    print(json.dumps({"written": str(out), "sentences": len(sentences)}))
    return 0


def cmd_inspect(args) -> int:
    model = load_checkpoint(args.checkpoint)
    view = inspect_regularity(model, Sentence(list(args.text)), args.start, args.end)
    label = (
        model.vocab.label_name(view.label_id) if view.label_id > 0 else "(no entity)"
    )
    if args.json:
        print(json.dumps({
            "chars": view.chars,
            "weights": [float(w) for w in view.weights],
            "gate": view.gate,
            "label": label,
            "score": view.score,
        }))
        return 0
    width = max(len(c) for c in view.chars)
    for c, w in zip(view.chars, view.weights):
        bar = "#" * int(round(40 * float(w)))
        print(f"{c:>{width}}  {w:8.4f}  {bar}")
    gate = "n/a" if view.gate is None else f"{view.gate:.4f}"
    print(f"label: {label}  score: {view.score:.4f}  gate: {gate}")
    return 0


def cmd_gradcheck(args) -> int:
    T.set_precision("double")
    labels = [f"T{i}" for i in range(1, args.c)]   # c includes the no-entity class
    chars = [chr(ord("a") + i) for i in range(6)]
    cfg = ModelConfig(
        embed_dim=args.e, hidden_dim=args.d, layers=args.layers,
        mlp_dim=args.m, embed_dropout=0.0, lstm_dropout=0.0, mlp_dropout=0.0,
    )
    worst_overall = 0.0
    started = time.monotonic()
    for seed in range(args.seeds):
        rng = np.random.default_rng(seed)
        model = Model.init(Vocab(chars, labels), cfg, rng)
        sent_chars = [chars[i] for i in rng.integers(0, len(chars), args.l)]
        gold_end = min(1, args.l - 1)
        sentence = Sentence(sent_chars, [])
        prep = model.prepare(sentence)
        # plant one positive span so both losses see both target values
        prep.labels[prep.sset.index_of(0, gold_end)] = 1
        prep.targets[prep.sset.index_of(0, gold_end), 0] = 1.0

        def build_loss():
            parts = model.loss_parts(prep, train=False)
            return T.add(
                parts.aware, T.add(parts.agnostic, T.affine(parts.orth, 0.5))
            )

        errs = gradient_check(model.params.named(), build_loss, eps=args.eps)
        worst_name = max(errs, key=errs.get)
        worst = errs[worst_name]
        worst_overall = max(worst_overall, worst)
        print(f"seed {seed}: worst {worst:.3e} ({worst_name})")
    elapsed = time.monotonic() - started
    ok = worst_overall < args.tol
    print(json.dumps({
        "worst_relative_error": worst_overall,
        "tolerance": args.tol,
        "seeds": args.seeds,
        "seconds": round(elapsed, 2),
        "ok": ok,
    }))
    return 0 if ok else 2


ABLATION_VARIANTS = {
    "vanilla": {"use_regularity": False, "lambda_agnostic": 0.0, "lambda_orth": 0.0},
    "+agnostic": {"use_regularity": False, "lambda_agnostic": 1.0, "lambda_orth": 0.0},
    "+aware": {"use_regularity": True, "lambda_agnostic": 0.0, "lambda_orth": 0.0},
    "full": {"use_regularity": True, "lambda_agnostic": 1.0, "lambda_orth": 0.5},
}


def run_ablation(cfg: RunConfig, seeds: int) -> dict:
    """Train each component variant over several seeds; score the test split."""
    T.set_precision(cfg.precision)
    train_sentences = read_column_corpus(cfg.data.train)
    dev_sentences = read_column_corpus(cfg.data.dev) if cfg.data.dev else []
    if not cfg.data.test:
        raise ConfigError("ablation needs data.test to score against")
    test_sentences = read_column_corpus(cfg.data.test)

    results: dict[str, dict] = {}
    for name, tweaks in ABLATION_VARIANTS.items():
        variant_model_cfg = replace(cfg.model, use_regularity=tweaks["use_regularity"])
        variant_train_cfg = replace(
            cfg.train,
            lambda_agnostic=tweaks["lambda_agnostic"],
            lambda_orth=tweaks["lambda_orth"],
        )
        per_seed = []
        for seed in range(seeds):
            vocab = Vocab.build(train_sentences)
            streams = rng_streams(seed)
            model = Model.init(vocab, variant_model_cfg, streams.init)
            train(model, train_sentences, dev_sentences, variant_train_cfg,
                  seed, out_dir=None, flat_decode=cfg.decode.flat)
            preps = [model.prepare(s) for s in test_sentences]
            report = evaluate_on(model, preps, test_sentences, flat=cfg.decode.flat)
            per_seed.append({
                "seed": seed,
                "precision": report.micro.precision,
                "recall": report.micro.recall,
                "f1": report.micro.f1,
            })
        results[name] = {
            "runs": per_seed,
            "mean": {k: statistics.mean(r[k] for r in per_seed)
                     for k in ("precision", "recall", "f1")},
            "sd": {k: statistics.stdev([r[k] for r in per_seed]) if seeds > 1 else 0.0
                   for k in ("precision", "recall", "f1")},
        }
    return results


def cmd_ablate(args) -> int:
    cfg = _load_run(args)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_config_echo(cfg, out)
    results = run_ablation(cfg, args.seeds)
    (out / "ablation.json").write_text(
        json.dumps(results, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    header = f"{'configuration':<12} {'P':>14} {'R':>14} {'F1':>14}"
    print(header)
    print("-" * len(header))
    for name, row in results.items():
        cells = [
            f"{row['mean'][k]:.3f}±{row['sd'][k]:.3f}"
            for k in ("precision", "recall", "f1")
        ]
        print(f"{name:<12} {cells[0]:>14} {cells[1]:>14} {cells[2]:>14}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
