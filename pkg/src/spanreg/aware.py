"""Regularity-aware span typing.

Every candidate span gets two representations from the aware encoder states:
a biaffine head-tail interaction and an internal-composition summary pooled
over the span's characters (attention by default).  A scalar gate mixes the
two, and a softmax classifier assigns an entity type or the no-entity class
(index 0).

Single-character spans bypass pooling entirely: their regularity
representation is the hidden state itself, taken bitwise.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

import numpy as np

from . import tensor as T
from .corpus import Sentence, Vocab
from .spans import SpanSet
from .tensor import ContractError, Tensor

POOLINGS = ("attention", "mean", "max")
FUSIONS = ("gate", "add", "concat")


@dataclass
class AwareParams:
    w_reg: Tensor            # (2d, 1) position salience
    b_reg: Tensor            # (1, 1)
    u_span: Tensor           # (2d, 2d, 2d) head-tail bilinear
    u_pair: Tensor           # (4d, 2d) head-tail linear
    b_span: Tensor           # (1, 2d)
    w_cls: Tensor            # (2d, c)
    b_cls: Tensor            # (1, c)
    u_gate: Tensor | None    # (4d, 1) when fusing with a gate
    b_gate: Tensor | None    # (1, 1)
    w_cat: Tensor | None     # (4d, 2d) when fusing by concat+linear
    b_cat: Tensor | None     # (1, 2d)
    w_head: Tensor | None    # (2d, 2d) optional head/tail transforms
    b_head: Tensor | None
    w_tail: Tensor | None
    b_tail: Tensor | None

    def named(self):
        for name in (
            "w_reg", "b_reg", "u_span", "u_pair", "b_span", "w_cls", "b_cls",
            "u_gate", "b_gate", "w_cat", "b_cat", "w_head", "b_head", "w_tail", "b_tail",
        ):
            t = getattr(self, name)
            if t is not None:
                yield name, t


def init_aware(
    rng: np.random.Generator,
    hidden_dim: int,
    n_classes: int,
    fusion: str = "gate",
    span_mlps: bool = False,
) -> AwareParams:
    if fusion not in FUSIONS:
        raise ContractError(f"fusion must be one of {FUSIONS}, got {fusion!r}")
    d2 = 2 * hidden_dim

    def glorot(*shape):
        fan_in, fan_out = shape[0], shape[-1]
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        return rng.uniform(-limit, limit, size=shape)

    gate = fusion == "gate"
    cat = fusion == "concat"
    return AwareParams(
        w_reg=T.param(glorot(d2, 1), "w_reg"),
        b_reg=T.param(np.zeros((1, 1)), "b_reg"),
        u_span=T.param(glorot(d2, d2, d2), "u_span"),
        u_pair=T.param(glorot(2 * d2, d2), "u_pair"),
        b_span=T.param(np.zeros((1, d2)), "b_span"),
        w_cls=T.param(glorot(d2, n_classes), "w_cls"),
        b_cls=T.param(np.zeros((1, n_classes)), "b_cls"),
        u_gate=T.param(glorot(2 * d2, 1), "u_gate") if gate else None,
        b_gate=T.param(np.zeros((1, 1)), "b_gate") if gate else None,
        w_cat=T.param(glorot(2 * d2, d2), "w_cat") if cat else None,
        b_cat=T.param(np.zeros((1, d2)), "b_cat") if cat else None,
        w_head=T.param(glorot(d2, d2), "w_head") if span_mlps else None,
        b_head=T.param(np.zeros((1, d2)), "b_head") if span_mlps else None,
        w_tail=T.param(glorot(d2, d2), "w_tail") if span_mlps else None,
        b_tail=T.param(np.zeros((1, d2)), "b_tail") if span_mlps else None,
    )


@dataclass
class SpanTypeGrid:
    """Per-span class log-probabilities plus the signals used to build them."""

    sset: SpanSet
    log_probs: Tensor            # (n_spans, c)
    alpha: Tensor | None         # (n_spans, length); zero outside each span
    gate: Tensor | None          # (n_spans, 1)

    def probs(self) -> np.ndarray:
        return np.exp(self.log_probs.data)


def span_regularity(
    h: Tensor, sset: SpanSet, params: AwareParams, pooling: str = "attention"
) -> tuple[Tensor, Tensor | None]:
    """Pool each span's hidden states into one vector; returns (pooled, alpha).

    alpha is only produced by attention pooling.  Length-1 spans yield the
    hidden state of their single character unchanged.
    """
    if pooling not in POOLINGS:
        raise ContractError(f"pooling must be one of {POOLINGS}, got {pooling!r}")
    heads = T.rows(h, sset.starts)
    alpha = None
    if pooling == "attention":
        scores = T.add_bias(T.matmul(h, params.w_reg), params.b_reg)       # (l, 1)
        tiled = T.broadcast_rows(T.transpose(scores), sset.n_spans)        # (n, l)
        alpha = T.masked_softmax(tiled, sset.member)
        pooled = T.matmul(alpha, h)
    elif pooling == "mean":
        weights = sset.member / sset.span_lengths[:, None]
        pooled = T.lmatmul_const(weights.astype(h.data.dtype), h)
    else:
        pooled = T.masked_max_pool(h, sset.member)
    return T.select_rows(sset.single, heads, pooled), alpha


def span_biaffine(h: Tensor, sset: SpanSet, params: AwareParams) -> Tensor:
    """Head-tail span representation: bilinear term plus linear term plus bias."""
    heads = T.rows(h, sset.starts)
    tails = T.rows(h, sset.ends)
    if params.w_head is not None:
        heads = T.tanh(T.add_bias(T.matmul(heads, params.w_head), params.b_head))
        tails = T.tanh(T.add_bias(T.matmul(tails, params.w_tail), params.b_tail))
    both = T.add(
        T.bilinear(heads, params.u_span, tails),
        T.matmul(T.concat([heads, tails], axis=1), params.u_pair),
    )
    return T.add_bias(both, params.b_span)


def gate_fuse(
    h_span: Tensor, h_reg: Tensor, params: AwareParams, fusion: str = "gate"
) -> tuple[Tensor, Tensor | None]:
    """Combine the two span views; returns (fused, gate)."""
    if fusion not in FUSIONS:
        raise ContractError(f"fusion must be one of {FUSIONS}, got {fusion!r}")
    if fusion == "add":
        return T.add(h_span, h_reg), None
    cat = T.concat([h_span, h_reg], axis=1)
    if fusion == "concat":
        return T.add_bias(T.matmul(cat, params.w_cat), params.b_cat), None
    g = T.sigmoid(T.add_bias(T.matmul(cat, params.u_gate), params.b_gate))
    fused = T.add(T.scale_rows(h_span, g), T.scale_rows(h_reg, T.affine(g, -1.0, 1.0)))
    return fused, g


def classify_spans(
    h: Tensor,
    sset: SpanSet,
    params: AwareParams,
    pooling: str = "attention",
    fusion: str = "gate",
    use_regularity: bool = True,
) -> SpanTypeGrid:
    h_span = span_biaffine(h, sset, params)
    alpha = gate = None
    if use_regularity:
        h_reg, alpha = span_regularity(h, sset, params, pooling)
        fused, gate = gate_fuse(h_span, h_reg, params, fusion)
    else:
        fused = h_span
    logits = T.add_bias(T.matmul(fused, params.w_cls), params.b_cls)
    return SpanTypeGrid(sset, T.log_softmax(logits), alpha, gate)


def gold_span_labels(
    sentence: Sentence, sset: SpanSet, vocab: Vocab
) -> tuple[np.ndarray, int]:
    """Class id per enumerated span; returns (labels, n_gold_beyond_cap)."""
    labels = np.zeros(sset.n_spans, dtype=np.intp)
    skipped = 0
    cap = sset.max_len if sset.max_len is not None else sset.length
    for e in sentence.entities:
        if e.end - e.start + 1 > cap:
            skipped += 1
            continue
        labels[sset.index_of(e.start, e.end)] = vocab.label_id(e.label)
    return labels, skipped


def aware_loss(
    grid: SpanTypeGrid,
    labels: np.ndarray,
    neg_keep_rate: float = 1.0,
    rng: np.random.Generator | None = None,
) -> Tensor:
    """Mean cross-entropy over spans (optionally downsampling no-entity spans).

    With downsampling, every entity span is kept and each no-entity span
    survives with probability neg_keep_rate; the mean runs over survivors.
    """
    if labels.shape != (grid.sset.n_spans,):
        raise ContractError(
            f"need {grid.sset.n_spans} labels, got shape {labels.shape}"
        )
    gold_lp = T.pick(grid.log_probs, labels)
    if neg_keep_rate < 1.0:
        if rng is None:
            raise ContractError("negative downsampling needs an rng")
        keep = (labels > 0) | (rng.random(labels.size) < neg_keep_rate)
        if not keep.any():
            keep[0] = True
        gold_lp = T.rows(gold_lp, np.flatnonzero(keep))
    return T.affine(T.mean_all(gold_lp), -1.0)
