"""Acceptance battery: one test per shipped guarantee, one printed line each.

Run with `python3 -m pytest tests/test_acceptance.py -v -s` to see every
CRITERION line as it completes. Each criterion states its own tolerance; a
failed assertion carries the same text as the printed line.
"""

import itertools
import json
import statistics
import time
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest

import spanreg.tensor as T
from spanreg.agnostic import boundary_scores, init_agnostic
from spanreg.aware import init_aware, span_biaffine
from spanreg.checkpoint import load_checkpoint, save_checkpoint
from spanreg.cli import main as cli
from spanreg.config import ModelConfig, TrainConfig
from spanreg.corpus import (
    GoldEntity,
    Sentence,
    SynthConfig,
    Vocab,
    generate_synthetic,
    read_column_corpus,
    write_column_corpus,
)
from spanreg.decode import (
    EntityPrediction,
    extract_candidates,
    overlapping,
    resolve_overlaps,
    sort_key,
)
from spanreg.model import Model
from spanreg.spans import span_set
from spanreg.tensor import Tape, gradient_check
from spanreg.train import evaluate_on, rng_streams, train


@pytest.fixture(autouse=True)
def restore_precision():
    before = T.precision()
    yield
    T.set_precision(before)


def report(n: int, ok: bool, detail: str) -> None:
    print(f"\nCRITERION {n} {'PASS' if ok else 'FAIL'}: {detail}", flush=True)
    assert ok, f"criterion {n}: {detail}"


# --------------------------------------------------------------------------
# 1. Full-model gradient audit: double precision, tiny dims, all three loss
#    components active; worst relative finite-difference error < 1e-4 over
#    5 seeds, under 2 minutes.
# --------------------------------------------------------------------------

def test_criterion_1_gradient_audit():
    T.set_precision("double")
    chars = list("abcdef")
    labels = ["T1", "T2"]  # three classes including no-entity
    cfg = ModelConfig(
        embed_dim=4, hidden_dim=2, layers=1, mlp_dim=3,
        embed_dropout=0.0, lstm_dropout=0.0, mlp_dropout=0.0,
    )
    started = time.monotonic()
    worst = 0.0
    for seed in range(5):
        rng = np.random.default_rng(seed)
        model = Model.init(Vocab(chars, labels), cfg, rng)
        sentence = Sentence([chars[i] for i in rng.integers(0, len(chars), 3)], [])
        prep = model.prepare(sentence)
        prep.labels[prep.sset.index_of(0, 1)] = 1
        prep.targets[prep.sset.index_of(0, 1), 0] = 1.0

        def build_loss():
            parts = model.loss_parts(prep, train=False)
            return T.add(parts.aware, T.add(parts.agnostic, T.affine(parts.orth, 0.5)))

        errs = gradient_check(model.params.named(), build_loss, eps=1e-5)
        worst = max(worst, max(errs.values()))
    elapsed = time.monotonic() - started
    report(1, worst < 1e-4 and elapsed < 120.0,
           f"worst relative error {worst:.3e} (< 1e-4) over 5 seeds "
           f"in {elapsed:.1f}s (< 120s)")


# --------------------------------------------------------------------------
# 2a. The two biaffine contractions match naive loop oracles within 1e-6 on
#     100 random instances (50 span-representation, 50 boundary-score).
# --------------------------------------------------------------------------

def _loop_bilinear(hi: np.ndarray, u: np.ndarray, hj: np.ndarray) -> np.ndarray:
    s, p = hi.shape
    _, k, q = u.shape
    out = np.zeros((s, k))
    for n in range(s):
        for a in range(k):
            for b in range(p):
                for c in range(q):
                    out[n, a] += hi[n, b] * u[b, a, c] * hj[n, c]
    return out


def test_criterion_2a_contraction_oracles():
    T.set_precision("double")
    rng = np.random.default_rng(2026)
    worst = 0.0
    for trial in range(50):
        d = int(rng.integers(1, 4))
        length = int(rng.integers(2, 6))
        h = rng.standard_normal((length, 2 * d))
        sset = span_set(length, max_len=None)
        params = init_aware(rng, hidden_dim=d, n_classes=3)
        with Tape():
            got = span_biaffine(T.const(h), sset, params).data
        heads, tails = h[sset.starts], h[sset.ends]
        want = (
            _loop_bilinear(heads, params.u_span.data, tails)
            + np.concatenate([heads, tails], axis=1) @ params.u_pair.data
            + params.b_span.data
        )
        worst = max(worst, float(np.max(np.abs(got - want))))
    for trial in range(50):
        d = int(rng.integers(1, 4))
        m = int(rng.integers(1, 5))
        length = int(rng.integers(2, 6))
        sset = span_set(length, max_len=None)
        params = init_agnostic(rng, hidden_dim=d, mlp_dim=m)
        head = rng.standard_normal((length, m))
        tail = rng.standard_normal((length, m))
        with Tape():
            got = boundary_scores(T.const(head), T.const(tail), params, sset).probs.data
        hi = np.concatenate([head[sset.starts], np.ones((sset.n_spans, 1))], axis=1)
        hj = np.concatenate([tail[sset.ends], np.ones((sset.n_spans, 1))], axis=1)
        logits = _loop_bilinear(hi, params.u_bnd.data, hj)
        want = np.clip(1.0 / (1.0 + np.exp(-logits)), 1e-7, 1.0 - 1e-7)
        worst = max(worst, float(np.max(np.abs(got - want))))
    report(2, worst < 1e-6,
           f"(a) both contractions match loop oracles on 100 instances, "
           f"worst abs diff {worst:.2e} (< 1e-6)")


# --------------------------------------------------------------------------
# 2b. resolve_overlaps equals the exhaustive pair-deletion oracle on 1,000
#     random candidate sets of size <= 8.
# --------------------------------------------------------------------------

def _crossing(a: EntityPrediction, b: EntityPrediction) -> bool:
    return (a.start < b.start <= a.end < b.end) or (b.start < a.start <= b.end < a.end)


def _oracle_resolve(cands, flat=False):
    conflict = overlapping if flat else _crossing
    alive = sorted(cands, key=sort_key)
    while True:
        pairs = [(i, j) for i, j in itertools.combinations(range(len(alive)), 2)
                 if conflict(alive[i], alive[j])]
        if not pairs:
            return sorted(alive, key=lambda e: (e.start, e.end, e.label_id))
        i, j = min(pairs)
        del alive[j]


def test_criterion_2b_overlap_oracle():
    rng = np.random.default_rng(404)
    scores = [0.1, 0.2, 0.3, 0.5, 0.7, 0.9]
    checked = 0
    for trial in range(1000):
        n = int(rng.integers(0, 9))
        seen = set()
        cands = []
        for _ in range(n):
            start = int(rng.integers(0, 7))
            end = start + int(rng.integers(0, 5))
            label = int(rng.integers(1, 4))
            if (start, end, label) in seen:
                continue
            seen.add((start, end, label))
            cands.append(EntityPrediction(start, end, label, scores[rng.integers(0, len(scores))]))
        flat = bool(rng.integers(0, 2))
        got = resolve_overlaps(list(cands), flat=flat)
        want = _oracle_resolve(cands, flat=flat)
        assert [(e.start, e.end, e.label_id, e.score) for e in got] == \
               [(e.start, e.end, e.label_id, e.score) for e in want], \
               f"criterion 2b: divergence on trial {trial}: {cands} flat={flat}"
        checked += 1
    report(2, checked == 1000,
           f"(b) greedy resolution equals the exhaustive oracle on {checked}/1000 "
           f"random candidate sets (size <= 8, nested and flat modes)")


# --------------------------------------------------------------------------
# 3. Overfit sanity: 20 synthetic sentences, hidden size 8, training F1
#    reaches exactly 1.0 within the pinned budget of 100 epochs, < 5 min.
#    (Measured first-perfect epoch across 5 seeds: 41-51.)
# --------------------------------------------------------------------------

OVERFIT_SPEC = {
    "types": ["LOC", "PER"],
    "indicator_chars": {"LOC": ["R"], "PER": ["S"]},
    "filler_alphabet": list("abcdef"),
    "entity_len": [2, 3],
    "sentence_len": [6, 10],
    "ambiguity_rate": 0.2,
    "counts": {"train": 20, "dev": 0, "test": 0},
}


def test_criterion_3_overfit():
    started = time.monotonic()
    sentences = generate_synthetic(SynthConfig.from_dict(OVERFIT_SPEC), 0)["train"]
    vocab = Vocab.build(sentences)
    model = Model.init(
        vocab,
        ModelConfig(embed_dim=8, hidden_dim=8, layers=1, mlp_dim=8, max_span_len=4),
        rng_streams(0).init,
    )
    cfg = TrainConfig(epochs=100, batch_size=4, lr=0.02, eval_every=1)
    result = train(model, sentences, sentences, cfg, seed=0)
    elapsed = time.monotonic() - started
    first = next((e["epoch"] for e in result.log if e["dev_f1"] == 1.0), None)
    report(3, first is not None and elapsed < 300.0,
           f"training F1 reached 1.0 at epoch {first} (budget 100) "
           f"in {elapsed:.0f}s (< 300s)")


# --------------------------------------------------------------------------
# 4. Regularity learning: on a 2,000-sentence corpus with 3 indicator types
#    and ambiguity 0.3, mean attention weight on the indicator character of
#    correctly predicted test entities >= 2x the uniform baseline
#    1/span_length. The indicator is always the final character of a
#    generated entity.
# --------------------------------------------------------------------------

# A diverse filler alphabet plus several indicator characters per type makes
# carrying type information through the recurrent states expensive, so the
# cheapest classification route is attending to the indicator character
# itself; a small hidden size keeps that route dominant. (Measured factor at
# this frozen configuration: 2.69, mean indicator attention 0.754.)
REGULARITY_SPEC = {
    "types": ["LOC", "ORG", "PER"],
    "indicator_chars": {"LOC": ["R", "M", "Q", "V"], "ORG": ["C", "D", "G", "H"],
                        "PER": ["S", "T", "U", "W"]},
    "filler_alphabet": sorted(set("abcdefghijklmnopqrstuvwxyz0123456789") - set("rmcs")),
    "entity_len": [3, 5],
    "sentence_len": [9, 15],
    "ambiguity_rate": 0.3,
    "counts": {"train": 2000, "dev": 200, "test": 300},
}
REGULARITY_EPOCHS = 16
REGULARITY_LR = 0.02


def test_criterion_4_regularity_learning():
    data = generate_synthetic(SynthConfig.from_dict(REGULARITY_SPEC), 404)
    vocab = Vocab.build(data["train"])
    model = Model.init(
        vocab,
        ModelConfig(embed_dim=16, hidden_dim=8, layers=1, mlp_dim=8, max_span_len=5),
        rng_streams(0).init,
    )
    cfg = TrainConfig(epochs=REGULARITY_EPOCHS, batch_size=16, lr=REGULARITY_LR,
                      eval_every=REGULARITY_EPOCHS)
    train(model, data["train"], data["dev"], cfg, seed=0)

    weight_sum = uniform_sum = 0.0
    n = 0
    for sentence in data["test"]:
        grid = model.type_grid(model.prepare(sentence))
        gold = {(e.start, e.end, vocab.label_id(e.label)) for e in sentence.entities}
        for pred in resolve_overlaps(extract_candidates(grid)):
            if (pred.start, pred.end, pred.label_id) in gold and pred.end > pred.start:
                row = grid.sset.index_of(pred.start, pred.end)
                weight_sum += grid.alpha.data[row, pred.end]
                uniform_sum += 1.0 / (pred.end - pred.start + 1)
                n += 1
    assert n > 0, "criterion 4: no correct test predictions to probe"
    mean_w, mean_u = weight_sum / n, uniform_sum / n
    factor = mean_w / mean_u
    report(4, factor >= 2.0,
           f"mean indicator-char attention {mean_w:.3f} vs uniform {mean_u:.3f} "
           f"over {n} correct test entities: factor {factor:.2f}x (>= 2x)")


# --------------------------------------------------------------------------
# 5. Ablation direction over 5 seeds: mean F1(full) > mean F1(vanilla) and
#    mean precision(+aware) > mean precision(vanilla). The intermediate
#    orderings are reported but not asserted (stochastic at this scale).
# --------------------------------------------------------------------------

ABLATION_SPEC = {
    "types": ["LOC", "PER"],
    "indicator_chars": {"LOC": ["R"], "PER": ["S"]},
    "filler_alphabet": list("abcdef"),
    "entity_len": [2, 3],
    "sentence_len": [6, 10],
    "ambiguity_rate": 0.3,
    "counts": {"train": 240, "dev": 60, "test": 200},
}
ABLATION_EPOCHS = 8
ABLATION_LR = 0.02
ABLATION_SEEDS = 5
ABLATION_VARIANTS = {
    "vanilla": (False, 0.0, 0.0),
    "+agnostic": (False, 1.0, 0.0),
    "+aware": (True, 0.0, 0.0),
    "full": (True, 1.0, 0.5),
}


@pytest.fixture(scope="module")
def ablation_data():
    return generate_synthetic(SynthConfig.from_dict(ABLATION_SPEC), 77)


def _train_variant(data, use_regularity, lam_agnostic, lam_orth, seed,
                   epochs=ABLATION_EPOCHS):
    vocab = Vocab.build(data["train"])
    mcfg = ModelConfig(embed_dim=16, hidden_dim=16, layers=1, mlp_dim=12,
                       max_span_len=4, use_regularity=use_regularity)
    tcfg = TrainConfig(epochs=epochs, batch_size=8, lr=ABLATION_LR,
                       eval_every=epochs, lambda_agnostic=lam_agnostic,
                       lambda_orth=lam_orth)
    model = Model.init(vocab, mcfg, rng_streams(seed).init)
    result = train(model, data["train"], data["dev"], tcfg, seed)
    preps = [model.prepare(s) for s in data["test"]]
    rep = evaluate_on(model, preps, data["test"], flat=False)
    return rep.micro, result.log[-1]


def test_criterion_5_ablation_direction(ablation_data):
    means = {}
    for name, (use_reg, l2, l3) in ABLATION_VARIANTS.items():
        rows = [_train_variant(ablation_data, use_reg, l2, l3, seed)[0]
                for seed in range(ABLATION_SEEDS)]
        means[name] = {
            "P": statistics.mean(r.precision for r in rows),
            "R": statistics.mean(r.recall for r in rows),
            "F1": statistics.mean(r.f1 for r in rows),
        }
    for name, m in means.items():
        print(f"  {name:10s} P {m['P']:.4f}  R {m['R']:.4f}  F1 {m['F1']:.4f}",
              flush=True)
    f1_gain = means["full"]["F1"] - means["vanilla"]["F1"]
    p_gain = means["+aware"]["P"] - means["vanilla"]["P"]
    # reported, not asserted:
    print(f"  intermediate orderings: "
          f"F1 +agnostic-vanilla {means['+agnostic']['F1'] - means['vanilla']['F1']:+.4f}, "
          f"F1 +aware-vanilla {means['+aware']['F1'] - means['vanilla']['F1']:+.4f}",
          flush=True)
    report(5, f1_gain > 0 and p_gain > 0,
           f"over {ABLATION_SEEDS} seeds mean F1 full-vanilla {f1_gain:+.4f} (> 0) "
           f"and mean P +aware-vanilla {p_gain:+.4f} (> 0)")


# --------------------------------------------------------------------------
# 6. Orthogonality effect: paired same-seed runs with the penalty weighted
#    0.5 vs 0 show strictly lower final mean orthogonality loss for the
#    weighted run, on all 5 seeds.
# --------------------------------------------------------------------------

def test_criterion_6_orthogonality_effect(ablation_data):
    pairs = []
    for seed in range(5):
        _, last_on = _train_variant(ablation_data, True, 1.0, 0.5, seed,
                                    epochs=ABLATION_EPOCHS)
        _, last_off = _train_variant(ablation_data, True, 1.0, 0.0, seed,
                                     epochs=ABLATION_EPOCHS)
        pairs.append((last_on["loss_orth"], last_off["loss_orth"]))
        print(f"  seed {seed}: orth(0.5) {pairs[-1][0]:.6f}  "
              f"orth(0) {pairs[-1][1]:.6f}", flush=True)
    ok = all(on < off for on, off in pairs)
    report(6, ok,
           "final orthogonality loss strictly lower with the penalty on, "
           f"all 5 seeds ({['yes' if on < off else 'NO' for on, off in pairs]})")


# --------------------------------------------------------------------------
# 7. Round trips: BMES <-> spans identity on 1,000 random flat sentences;
#    checkpoint save/load reproduces a probe-batch loss to 1e-12.
# --------------------------------------------------------------------------

def _random_flat_sentence(rng) -> Sentence:
    length = int(rng.integers(1, 15))
    chars = [chr(ord("a") + int(c)) for c in rng.integers(0, 8, length)]
    entities = []
    pos = 0
    while pos < length:
        if rng.random() < 0.4:
            end = min(length - 1, pos + int(rng.integers(0, 4)))
            entities.append(GoldEntity(pos, end, ["LOC", "PER", "ORG"][rng.integers(0, 3)]))
            pos = end + 2  # gap so the corpus stays flat
        else:
            pos += 1
    return Sentence(chars, entities)


def test_criterion_7_round_trips(tmp_path):
    rng = np.random.default_rng(1234)
    sentences = [_random_flat_sentence(rng) for _ in range(1000)]
    path = tmp_path / "flat.txt"
    write_column_corpus(sentences, path)
    back = read_column_corpus(path)
    assert len(back) == len(sentences)
    for a, b in zip(sentences, back):
        assert a.chars == b.chars, "criterion 7: characters changed in round trip"
        assert {(e.start, e.end, e.label) for e in a.entities} == \
               {(e.start, e.end, e.label) for e in b.entities}, \
               "criterion 7: entities changed in round trip"

    data = generate_synthetic(SynthConfig.from_dict(OVERFIT_SPEC), 3)["train"]
    vocab = Vocab.build(data)
    model = Model.init(
        vocab,
        ModelConfig(embed_dim=8, hidden_dim=6, layers=1, mlp_dim=6, max_span_len=4),
        rng_streams(9).init,
    )
    probe = [model.prepare(s) for s in data[:4]]

    def probe_loss(m: Model) -> float:
        total = 0.0
        for prep in probe:
            with Tape():
                parts = m.loss_parts(prep, train=False)
                total += (parts.aware.data.item() + parts.agnostic.data.item()
                          + 0.5 * parts.orth.data.item())
        return total

    before = probe_loss(model)
    save_checkpoint(tmp_path / "ckpt", model)
    restored = load_checkpoint(tmp_path / "ckpt")
    for p1, p2 in zip(model.params.named(), restored.params.named()):
        assert p1[0] == p2[0]
    diff = abs(before - probe_loss(restored))
    report(7, diff <= 1e-12,
           f"BMES round trip exact on 1000 sentences; checkpoint probe-loss "
           f"drift {diff:.2e} (<= 1e-12)")


# --------------------------------------------------------------------------
# 8. Determinism: two identical seeded CLI train runs produce byte-identical
#    logs and checkpoints.
# --------------------------------------------------------------------------

def test_criterion_8_determinism(tmp_path):
    spec = dict(OVERFIT_SPEC, counts={"train": 30, "dev": 10, "test": 0})
    spec_path = tmp_path / "synth.json"
    spec_path.write_text(json.dumps(spec), encoding="utf-8")
    assert cli(["gen-data", "--spec", str(spec_path),
                "--out", str(tmp_path / "corpus"), "--seed", "5"]) == 0

    cfg = {
        "data": {"train": str(tmp_path / "corpus" / "train.tsv"),
                 "dev": str(tmp_path / "corpus" / "dev.tsv")},
        "model": {"embed_dim": 8, "hidden_dim": 6, "layers": 1,
                  "mlp_dim": 6, "max_span_len": 4},
        "train": {"epochs": 3, "batch_size": 4, "lr": 0.02},
        "seed": 11,
    }
    outs = []
    for run in ("run1", "run2"):
        run_cfg = dict(cfg, out_dir=str(tmp_path / run))
        cfg_path = tmp_path / f"{run}.json"
        cfg_path.write_text(json.dumps(run_cfg), encoding="utf-8")
        assert cli(["train", "--config", str(cfg_path)]) == 0
        outs.append(tmp_path / run)

    compared = []
    for rel in ("train_log.jsonl", "checkpoint-best/manifest.json",
                "checkpoint-best/params.bin"):
        b1 = (outs[0] / rel).read_bytes()
        b2 = (outs[1] / rel).read_bytes()
        assert b1 == b2, f"criterion 8: {rel} differs between identical runs"
        compared.append(rel)
    report(8, len(compared) == 3,
           f"two seeded runs byte-identical across {', '.join(compared)}")
