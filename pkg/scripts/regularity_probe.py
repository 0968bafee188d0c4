#!/usr/bin/env python3
"""Train on a synthetic corpus and probe where span attention concentrates.

Every synthetic entity ends with a type-indicator character, so a model
that has learned the pattern should put clearly more than uniform weight
on the final character of each correctly predicted span. This script
trains the full two-branch model, prints a few attention tables from the
test split, and reports the mean indicator weight against the uniform
baseline (1/span_length).

    python3 scripts/regularity_probe.py --train 500 --epochs 6 --seed 0
"""

import argparse
import sys

from spanreg.config import ModelConfig, TrainConfig
from spanreg.corpus import SynthConfig, Vocab, generate_synthetic
from spanreg.decode import extract_candidates, inspect_regularity, resolve_overlaps
from spanreg.model import Model
from spanreg.train import rng_streams, train

# Several indicator characters per type plus a wide filler alphabet make it
# expensive for the recurrent states to carry type information, so attending
# to the indicator character itself becomes the cheapest route; the small
# hidden size keeps that route dominant, and concentration then sharpens with
# training instead of wandering.
SPEC = {
    "types": ["LOC", "ORG", "PER"],
    "indicator_chars": {"LOC": ["R", "M", "Q", "V"], "ORG": ["C", "D", "G", "H"],
                        "PER": ["S", "T", "U", "W"]},
    "filler_alphabet": sorted(set("abcdefghijklmnopqrstuvwxyz0123456789") - set("rmcs")),
    "entity_len": [3, 5],
    "sentence_len": [9, 15],
    "ambiguity_rate": 0.3,
}


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--train", type=int, default=500)
    ap.add_argument("--epochs", type=int, default=8)
    ap.add_argument("--lr", type=float, default=0.02)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--show", type=int, default=5, help="attention tables to print")
    args = ap.parse_args()

    spec = dict(SPEC, counts={"train": args.train,
                              "dev": max(args.train // 10, 10),
                              "test": max(args.train // 5, 20)})
    data = generate_synthetic(SynthConfig.from_dict(spec), args.seed)
    vocab = Vocab.build(data["train"])
    model = Model.init(
        vocab,
        ModelConfig(embed_dim=16, hidden_dim=8, layers=1, mlp_dim=8, max_span_len=5),
        rng_streams(args.seed).init,
    )
    cfg = TrainConfig(epochs=args.epochs, batch_size=16, lr=args.lr, eval_every=2)
    train(model, data["train"], data["dev"], cfg, args.seed)

    shown = 0
    weight_sum = uniform_sum = count = 0.0
    for sentence in data["test"]:
        grid = model.type_grid(model.prepare(sentence))
        gold = {(e.start, e.end, vocab.label_id(e.label)) for e in sentence.entities}
        for pred in resolve_overlaps(extract_candidates(grid)):
            if (pred.start, pred.end, pred.label_id) not in gold or pred.end == pred.start:
                continue
            view = inspect_regularity(model, sentence, pred.start, pred.end)
            weight_sum += view.weights[-1]
            uniform_sum += 1.0 / len(view.chars)
            count += 1
            if shown < args.show:
                shown += 1
                print(f"\nspan {pred.start}..{pred.end} "
                      f"type {vocab.labels[pred.label_id]} gate {view.gate:.3f}")
                for ch, w in zip(view.chars, view.weights):
                    print(f"  {ch}  {w:.3f}  {'#' * int(round(w * 40))}")
    if count == 0:
        print("no correct predictions to probe; train longer")
        return 1
    mean_w, mean_u = weight_sum / count, uniform_sum / count
    print(f"\ncorrect spans probed: {int(count)}")
    print(f"mean weight on indicator (last) char: {mean_w:.4f}")
    print(f"mean uniform baseline 1/span_length:  {mean_u:.4f}")
    print(f"concentration factor: {mean_w / mean_u:.2f}x")
    return 0


if __name__ == "__main__":
    sys.exit(main())
