"""Joint training loop for the two-branch model.

The objective per sentence is a weighted sum of the three components: type
classification, boundary detection, and the representation-space penalty.
Sentences in a batch contribute either equally (loss_average "sentence") or
in proportion to their span count ("span").  All randomness flows from one
seed through named child streams, so a repeated run writes byte-identical
logs and checkpoints.
"""

from __future__ import annotations

import json
import logging
from collections import namedtuple
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import decode
from .checkpoint import save_checkpoint
from .config import TrainConfig
from .corpus import Sentence
from .model import LossParts, Model, Prepared
from .tensor import NumericError, Tape, Tensor, add, affine

log = logging.getLogger(__name__)


class TrainingDiverged(RuntimeError):
    """Raised when a loss or gradient goes non-finite; any checkpoint already
    written stays on disk."""


RngStreams = namedtuple("RngStreams", "init shuffle train")


def rng_streams(seed: int) -> RngStreams:
    """Independent generators for init, shuffling, and in-training noise."""
    children = np.random.SeedSequence(seed).spawn(3)
    return RngStreams(*(np.random.default_rng(s) for s in children))


def total_loss(parts: LossParts, cfg: TrainConfig) -> Tensor:
    """Weighted scalar objective.  Components with zero weight are left out
    of the graph entirely, so they cost no backward work.  The result is
    always a recorded node, never a bare alias of a component."""
    total = affine(parts.aware, cfg.lambda_aware)
    if parts.agnostic is not None and cfg.lambda_agnostic > 0:
        total = add(total, _weighted(parts.agnostic, cfg.lambda_agnostic))
    if parts.orth is not None and cfg.lambda_orth > 0:
        total = add(total, _weighted(parts.orth, cfg.lambda_orth))
    return total


def _weighted(x: Tensor, w: float) -> Tensor:
    return x if w == 1.0 else affine(x, w)


class Adam:
    """Adam with bias correction and global-norm gradient clipping.

    step() consumes the gradients currently on the parameters and clears
    them.  Parameters with no gradient this step are left alone, moment
    slots included.
    """

    def __init__(self, params: list[tuple[str, Tensor]], cfg: TrainConfig):
        self.params = list(params)
        self.cfg = cfg
        self.t = 0
        self._m: dict[str, np.ndarray] = {}
        self._v: dict[str, np.ndarray] = {}

    def step(self) -> float:
        """One update; returns the pre-clip global gradient norm."""
        cfg = self.cfg
        live = [(n, p) for n, p in self.params if p.has_grad]
        sq = 0.0
        for name, p in live:
            g = p.grad
            if not np.all(np.isfinite(g)):
                raise NumericError(f"non-finite gradient in {name}")
            sq += float((g.astype(np.float64) ** 2).sum())
        norm = float(np.sqrt(sq))
        scale = cfg.clip_norm / norm if norm > cfg.clip_norm else 1.0

        self.t += 1
        bc1 = 1.0 - cfg.beta1**self.t
        bc2 = 1.0 - cfg.beta2**self.t
        for name, p in live:
            g = p.grad * scale
            m = self._m.setdefault(name, np.zeros_like(p.data))
            v = self._v.setdefault(name, np.zeros_like(p.data))
            m += (1.0 - cfg.beta1) * (g - m)
            v += (1.0 - cfg.beta2) * (g * g - v)
            p.data = p.data - cfg.lr * (m / bc1) / (np.sqrt(v / bc2) + cfg.eps)
            p.zero_grad()
        return norm


@dataclass
class TrainResult:
    model: Model
    log: list[dict] = field(default_factory=list)
    best_f1: float | None = None
    best_epoch: int | None = None
    checkpoint: Path | None = None
    skipped_gold: int = 0


def _batches(order: np.ndarray, size: int):
    for i in range(0, len(order), size):
        yield order[i : i + size]


def train(
    model: Model,
    train_sentences: list[Sentence],
    dev_sentences: list[Sentence],
    cfg: TrainConfig,
    seed: int,
    out_dir: str | Path | None = None,
    flat_decode: bool = False,
) -> TrainResult:
    """Train in place; returns the model plus the per-epoch log.

    When out_dir is given, train_log.jsonl grows one line per epoch as it
    completes, and checkpoint-best/ holds the weights of the best dev-F1
    epoch (the final weights when there is no dev set)."""
    streams = rng_streams(seed)
    need_agnostic = cfg.lambda_agnostic > 0 or cfg.lambda_orth > 0
    preps = [model.prepare(s) for s in train_sentences]
    dev_preps = [model.prepare(s) for s in dev_sentences]
    result = TrainResult(model, skipped_gold=sum(p.skipped for p in preps))
    if result.skipped_gold:
        log.warning(
            "%d gold entities exceed the span length cap and cannot be learned",
            result.skipped_gold,
        )

    out_path = Path(out_dir) if out_dir is not None else None
    log_file = None
    if out_path is not None:
        out_path.mkdir(parents=True, exist_ok=True)
        log_file = (out_path / "train_log.jsonl").open("w", encoding="utf-8")

    opt = Adam(list(model.params.named()), cfg)
    try:
        for epoch in range(1, cfg.epochs + 1):
            try:
                sums = _run_epoch(model, preps, cfg, opt, streams.train, need_agnostic)
            except NumericError as err:
                raise TrainingDiverged(f"epoch {epoch}: {err}") from err

            entry = {
                "epoch": epoch,
                "loss_aware": sums[0] / len(preps),
                "loss_agnostic": sums[1] / len(preps) if need_agnostic else None,
                "loss_orth": sums[2] / len(preps) if need_agnostic else None,
                "dev_p": None,
                "dev_r": None,
                "dev_f1": None,
            }
            if dev_preps and (epoch % cfg.eval_every == 0 or epoch == cfg.epochs):
                report = evaluate_on(model, dev_preps, dev_sentences, flat_decode)
                entry["dev_p"] = report.micro.precision
                entry["dev_r"] = report.micro.recall
                entry["dev_f1"] = report.micro.f1
                if result.best_f1 is None or report.micro.f1 > result.best_f1:
                    result.best_f1 = report.micro.f1
                    result.best_epoch = epoch
                    if out_path is not None:
                        result.checkpoint = save_checkpoint(
                            out_path / "checkpoint-best", model,
                            {"epoch": epoch, "dev_f1": report.micro.f1},
                        )
            result.log.append(entry)
            if log_file is not None:
                log_file.write(json.dumps(entry) + "\n")
                log_file.flush()

        if out_path is not None and result.checkpoint is None:
            result.checkpoint = save_checkpoint(
                out_path / "checkpoint-best", model, {"epoch": cfg.epochs}
            )
    finally:
        if log_file is not None:
            log_file.close()
    return result


def _run_epoch(
    model: Model,
    preps: list[Prepared],
    cfg: TrainConfig,
    opt: Adam,
    rng: np.random.Generator,
    need_agnostic: bool,
) -> tuple[float, float, float]:
    """One pass over the data; returns summed raw component losses."""
    sums = [0.0, 0.0, 0.0]
    order = rng.permutation(len(preps))
    for batch in _batches(order, cfg.batch_size):
        span_total = sum(preps[i].sset.n_spans for i in batch)
        for i in batch:
            prep = preps[i]
            if cfg.loss_average == "span":
                weight = prep.sset.n_spans / span_total
            else:
                weight = 1.0 / len(batch)
            with Tape() as tape:
                parts = model.loss_parts(
                    prep,
                    train=True,
                    rng=rng,
                    need_agnostic=need_agnostic,
                    need_orth=need_agnostic,
                    neg_keep_rate=cfg.neg_keep_rate,
                )
                objective = affine(total_loss(parts, cfg), weight)
                if not np.isfinite(objective.data).all():
                    raise NumericError("non-finite training loss")
                tape.backward(objective)
            sums[0] += parts.aware.data.item()
            if parts.agnostic is not None:
                sums[1] += parts.agnostic.data.item()
            if parts.orth is not None:
                sums[2] += parts.orth.data.item()
        opt.step()
    return tuple(sums)


def evaluate_on(
    model: Model,
    preps: list[Prepared],
    sentences: list[Sentence],
    flat: bool = False,
) -> decode.EvalReport:
    """Exact-match scores of the model's predictions on prepared sentences."""
    predictions = [
        decode.resolve_overlaps(decode.extract_candidates(model.type_grid(p)), flat)
        for p in preps
    ]
    return decode.evaluate(predictions, sentences, model.vocab)
