"""The assembled recognizer: shared embeddings, two encoders, two span heads.

`Model.loss_parts` runs whichever branches the loss weights require and
returns the three loss components for one sentence; `Model.type_grid` is the
inference path (aware branch only, no dropout, no tape).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import agnostic as AG
from . import aware as AW
from . import encoder as E
from . import ortho
from . import tensor as T
from .config import ModelConfig
from .corpus import Sentence, Vocab
from .spans import SpanSet, span_set
from .tensor import Tensor


@dataclass
class ModelParams:
    encoder: E.EncoderParams
    aware: AW.AwareParams
    agnostic: AG.AgnosticParams

    def named(self):
        for n, t in self.encoder.named():
            yield f"encoder.{n}", t
        for n, t in self.aware.named():
            yield f"aware.{n}", t
        for n, t in self.agnostic.named():
            yield f"agnostic.{n}", t

    def zero_grad(self):
        for _, t in self.named():
            t.zero_grad()


@dataclass
class Prepared:
    """A sentence readied for the model: ids plus per-span supervision."""

    sentence: Sentence
    ids: np.ndarray
    sset: SpanSet
    labels: np.ndarray    # (n_spans,) class ids, 0 = no entity
    targets: np.ndarray   # (n_spans, 1) binary entityhood
    skipped: int          # gold entities beyond the span length cap


@dataclass
class LossParts:
    aware: Tensor
    agnostic: Tensor | None
    orth: Tensor | None
    n_spans: int


class Model:
    def __init__(self, vocab: Vocab, cfg: ModelConfig, params: ModelParams):
        self.vocab = vocab
        self.cfg = cfg
        self.params = params

    @classmethod
    def init(cls, vocab: Vocab, cfg: ModelConfig, rng: np.random.Generator) -> "Model":
        enc = E.init_encoder(rng, vocab.n_chars, cfg.embed_dim, cfg.hidden_dim, cfg.layers)
        aware = AW.init_aware(rng, cfg.hidden_dim, vocab.n_classes, cfg.fusion, cfg.span_mlps)
        agn = AG.init_agnostic(rng, cfg.hidden_dim, cfg.mlp_dim)
        return cls(vocab, cfg, ModelParams(enc, aware, agn))

    def prepare(self, sentence: Sentence) -> Prepared:
        if len(sentence) == 0:
            raise T.ContractError("cannot model an empty sentence")
        sset = span_set(len(sentence), self.cfg.max_span_len)
        labels, skipped = AW.gold_span_labels(sentence, sset, self.vocab)
        targets = AG.gold_span_targets(sentence, sset)
        return Prepared(sentence, self.vocab.char_ids(sentence.chars), sset, labels, targets, skipped)

    def encode(
        self,
        ids: np.ndarray,
        need_aware: bool = True,
        need_agnostic: bool = False,
        train: bool = False,
        rng: np.random.Generator | None = None,
    ) -> tuple[Tensor | None, Tensor | None]:
        cfg = self.cfg
        x = E.embed(self.params.encoder, ids, cfg.embed_dropout, rng, train)
        h_aware = h_agnostic = None
        if need_aware:
            h_aware = E.encode_branch(
                x, self.params.encoder.aware, cfg.hidden_dim, cfg.lstm_dropout, rng, train
            )
        if need_agnostic:
            h_agnostic = E.encode_branch(
                x, self.params.encoder.agnostic, cfg.hidden_dim, cfg.lstm_dropout, rng, train
            )
        return h_aware, h_agnostic

    def loss_parts(
        self,
        prep: Prepared,
        train: bool = True,
        rng: np.random.Generator | None = None,
        need_agnostic: bool = True,
        need_orth: bool = True,
        neg_keep_rate: float = 1.0,
    ) -> LossParts:
        cfg = self.cfg
        h_aware, h_agnostic = self.encode(
            prep.ids, True, need_agnostic or need_orth, train, rng
        )
        grid = AW.classify_spans(
            h_aware, prep.sset, self.params.aware, cfg.pooling, cfg.fusion, cfg.use_regularity
        )
        loss_aware = AW.aware_loss(grid, prep.labels, neg_keep_rate if train else 1.0, rng)

        loss_agnostic = None
        if need_agnostic:
            head, tail = AG.project_head_tail(
                h_agnostic, self.params.agnostic, cfg.mlp_dropout, rng, train
            )
            bgrid = AG.boundary_scores(head, tail, self.params.agnostic, prep.sset)
            loss_agnostic = AG.agnostic_loss(bgrid, prep.targets)

        loss_orth = ortho.orth_loss(h_aware, h_agnostic) if need_orth else None
        return LossParts(loss_aware, loss_agnostic, loss_orth, prep.sset.n_spans)

    def type_grid(self, sentence_or_prep) -> AW.SpanTypeGrid:
        """Inference-path span typing: no dropout, no gradient recording."""
        if T.Tape.active() is not None:
            raise T.ContractError("type_grid is an inference path; run it outside a tape")
        prep = (
            sentence_or_prep
            if isinstance(sentence_or_prep, Prepared)
            else self.prepare(sentence_or_prep)
        )
        h_aware, _ = self.encode(prep.ids, True, False, train=False)
        return AW.classify_spans(
            h_aware, prep.sset, self.params.aware,
            self.cfg.pooling, self.cfg.fusion, self.cfg.use_regularity,
        )

    def boundary_grid(self, sentence: Sentence) -> AG.BoundaryGrid:
        """Diagnostic boundary probabilities; never used for prediction."""
        prep = self.prepare(sentence)
        _, h_agnostic = self.encode(prep.ids, False, True, train=False)
        head, tail = AG.project_head_tail(h_agnostic, self.params.agnostic)
        return AG.boundary_scores(head, tail, self.params.agnostic, prep.sset)
