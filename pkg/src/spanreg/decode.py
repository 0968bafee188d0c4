"""Prediction extraction, overlap resolution, and exact-match scoring.

Prediction reads only the type grid.  Candidates are the spans whose argmax
class is an entity type; partially overlapping (crossing) candidates are then
pruned best-score-first.  Two spans cross when they satisfy
start1 < start2 <= end1 < end2 in either order, which includes sharing a
single boundary character; one span containing another is not a conflict
unless flat output is requested.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .aware import SpanTypeGrid
from .corpus import Sentence, Vocab
from .tensor import ContractError


@dataclass(frozen=True)
class EntityPrediction:
    start: int
    end: int        # inclusive
    label_id: int
    score: float

    @property
    def length(self) -> int:
        return self.end - self.start + 1


def sort_key(p: EntityPrediction):
    """Total processing order: best score first; ties prefer earlier starts,
    then shorter spans, then smaller class ids."""
    return (-p.score, p.start, p.length, p.label_id)


def extract_candidates(grid: SpanTypeGrid) -> list[EntityPrediction]:
    """Spans whose most probable class is an entity type.

    Probability ties across classes resolve to the smallest class index, so a
    span tied between no-entity and a type is dropped.
    """
    probs = grid.probs()
    winners = probs.argmax(axis=1)
    out = []
    for s in np.flatnonzero(winners > 0):
        cls = int(winners[s])
        out.append(
            EntityPrediction(
                int(grid.sset.starts[s]), int(grid.sset.ends[s]), cls, float(probs[s, cls])
            )
        )
    return out


def crossing(a: EntityPrediction, b: EntityPrediction) -> bool:
    return (a.start < b.start <= a.end < b.end) or (b.start < a.start <= b.end < a.end)


def overlapping(a: EntityPrediction, b: EntityPrediction) -> bool:
    return a.start <= b.end and b.start <= a.end


def resolve_overlaps(cands: list[EntityPrediction], flat: bool = False) -> list[EntityPrediction]:
    """Greedy best-first conflict removal; returns survivors in span order.

    Crossing pairs always conflict; with flat=True any overlap (including
    containment) conflicts, so the output is a disjoint span set.
    """
    conflict = overlapping if flat else crossing
    kept: list[EntityPrediction] = []
    for c in sorted(cands, key=sort_key):
        if not any(conflict(c, k) for k in kept):
            kept.append(c)
    return sorted(kept, key=lambda p: (p.start, p.end, p.label_id))


def predict(model, sentence: Sentence, flat: bool = False) -> list[EntityPrediction]:
    return resolve_overlaps(extract_candidates(model.type_grid(sentence)), flat)


@dataclass
class LabelCounts:
    tp: int = 0
    fp: int = 0
    fn: int = 0

    @property
    def precision(self) -> float:
        return self.tp / (self.tp + self.fp) if self.tp + self.fp else 0.0

    @property
    def recall(self) -> float:
        return self.tp / (self.tp + self.fn) if self.tp + self.fn else 0.0

    @property
    def f1(self) -> float:
        p, r = self.precision, self.recall
        return 2 * p * r / (p + r) if p + r else 0.0


@dataclass
class EvalReport:
    micro: LabelCounts = field(default_factory=LabelCounts)
    by_label: dict[str, LabelCounts] = field(default_factory=dict)

    def to_dict(self) -> dict:
        def flat(c: LabelCounts) -> dict:
            return {
                "tp": c.tp, "fp": c.fp, "fn": c.fn,
                "precision": c.precision, "recall": c.recall, "f1": c.f1,
            }

        return {
            "micro": flat(self.micro),
            "by_label": {k: flat(v) for k, v in sorted(self.by_label.items())},
        }


def evaluate(
    predictions: list[list[EntityPrediction]],
    gold: list[Sentence],
    vocab: Vocab,
) -> EvalReport:
    """Exact-match micro and per-type scores.

    A prediction counts only when start, end, and type all match a gold
    entity; a right span with the wrong type is a false positive for the
    predicted type and a false negative for the gold type.
    """
    if len(predictions) != len(gold):
        raise ContractError(
            f"{len(predictions)} prediction lists for {len(gold)} sentences"
        )
    report = EvalReport()

    def counts(label: str) -> LabelCounts:
        return report.by_label.setdefault(label, LabelCounts())

    for preds, sent in zip(predictions, gold):
        gold_set = {(e.start, e.end, vocab.label_id(e.label)) for e in sent.entities}
        pred_set = {(p.start, p.end, p.label_id) for p in preds}
        if len(pred_set) != len(preds):
            raise ContractError("duplicate predictions for one sentence")
        for item in pred_set:
            label = vocab.label_name(item[2])
            if item in gold_set:
                report.micro.tp += 1
                counts(label).tp += 1
            else:
                report.micro.fp += 1
                counts(label).fp += 1
        for item in gold_set - pred_set:
            report.micro.fn += 1
            counts(vocab.label_name(item[2])).fn += 1
    return report


@dataclass
class RegularityView:
    """Attention placed on each character of one span, plus the span's verdict."""

    chars: list[str]
    weights: np.ndarray
    gate: float | None
    label_id: int
    score: float


def inspect_regularity(model, sentence: Sentence, start: int, end: int) -> RegularityView:
    grid = model.type_grid(sentence)
    if grid.alpha is None:
        raise ContractError(
            "no attention weights to inspect; the model must use the regularity "
            "branch with attention pooling"
        )
    s = grid.sset.index_of(start, end)
    probs = grid.probs()[s]
    cls = int(probs.argmax())
    return RegularityView(
        chars=sentence.chars[start : end + 1],
        weights=grid.alpha.data[s, start : end + 1].copy(),
        gate=float(grid.gate.data[s, 0]) if grid.gate is not None else None,
        label_id=cls,
        score=float(probs[cls]),
    )
