"""Regularity-agnostic boundary detection.

A parallel branch scores every span for entityhood alone, with no access to
entity types and no pooling over span internals: head and tail states pass
through small projections and meet in a bias-augmented bilinear form under a
sigmoid.  Trained jointly, it pulls the shared gradient toward boundary
evidence that type regularity cannot explain.  Inference never reads it; the
grid stays available as a diagnostic.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .corpus import Sentence
from .spans import SpanSet
from .tensor import ContractError, Tensor

PROB_FLOOR = 1e-7


@dataclass
class AgnosticParams:
    w_head: Tensor  # (2d, m)
    b_head: Tensor  # (1, m)
    w_tail: Tensor  # (2d, m)
    b_tail: Tensor  # (1, m)
    u_bnd: Tensor   # (m+1, 1, m+1) bias-augmented bilinear

    def named(self):
        for name in ("w_head", "b_head", "w_tail", "b_tail", "u_bnd"):
            yield name, getattr(self, name)


def init_agnostic(rng: np.random.Generator, hidden_dim: int, mlp_dim: int) -> AgnosticParams:
    d2 = 2 * hidden_dim

    def glorot(*shape):
        limit = np.sqrt(6.0 / (shape[0] + shape[-1]))
        return rng.uniform(-limit, limit, size=shape)

    return AgnosticParams(
        w_head=T.param(glorot(d2, mlp_dim), "w_head"),
        b_head=T.param(np.zeros((1, mlp_dim)), "b_head"),
        w_tail=T.param(glorot(d2, mlp_dim), "w_tail"),
        b_tail=T.param(np.zeros((1, mlp_dim)), "b_tail"),
        u_bnd=T.param(glorot(mlp_dim + 1, 1, mlp_dim + 1), "u_bnd"),
    )


@dataclass
class BoundaryGrid:
    """Per-span entity probability, clamped inside (0, 1)."""

    sset: SpanSet
    probs: Tensor  # (n_spans, 1)


def project_head_tail(
    h: Tensor,
    params: AgnosticParams,
    dropout: float = 0.0,
    rng: np.random.Generator | None = None,
    train: bool = False,
) -> tuple[Tensor, Tensor]:
    """Position-wise head and tail projections (affine + tanh + dropout)."""
    head = T.tanh(T.add_bias(T.matmul(h, params.w_head), params.b_head))
    tail = T.tanh(T.add_bias(T.matmul(h, params.w_tail), params.b_tail))
    if train and dropout > 0.0:
        head = T.dropout(head, dropout, rng)
        tail = T.dropout(tail, dropout, rng)
    return head, tail


def boundary_scores(head: Tensor, tail: Tensor, params: AgnosticParams, sset: SpanSet) -> BoundaryGrid:
    """Sigmoid bilinear score of (head[i], tail[j]) for every span (i, j)."""
    hi = T.append_ones(T.rows(head, sset.starts))
    hj = T.append_ones(T.rows(tail, sset.ends))
    logits = T.bilinear(hi, params.u_bnd, hj)
    probs = T.clip(T.sigmoid(logits), PROB_FLOOR, 1.0 - PROB_FLOOR)
    return BoundaryGrid(sset, probs)


def gold_span_targets(sentence: Sentence, sset: SpanSet) -> np.ndarray:
    """Binary entityhood target per enumerated span (types erased)."""
    t = np.zeros((sset.n_spans, 1))
    cap = sset.max_len if sset.max_len is not None else sset.length
    for e in sentence.entities:
        if e.end - e.start + 1 <= cap:
            t[sset.index_of(e.start, e.end), 0] = 1.0
    return t


def agnostic_loss(grid: BoundaryGrid, targets: np.ndarray) -> Tensor:
    """Mean binary cross-entropy over spans; finite by construction."""
    if targets.shape != (grid.sset.n_spans, 1):
        raise ContractError(
            f"need targets of shape ({grid.sset.n_spans}, 1), got {targets.shape}"
        )
    y = targets.astype(grid.probs.data.dtype)
    pos = T.mul_const(T.log(grid.probs), y)
    neg = T.mul_const(T.log(T.affine(grid.probs, -1.0, 1.0)), 1.0 - y)
    return T.affine(T.mean_all(T.add(pos, neg)), -1.0)
