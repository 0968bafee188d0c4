"""Character embedding plus two task-specific stacked BiLSTM encoders.

Both branches read the same embedded character sequence; each owns its own
recurrent weights so the two hidden spaces can be driven apart by the
orthogonality penalty during training.  Gate blocks in the fused weight
matrices are ordered input, forget, candidate, output.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import tensor as T
from .corpus import CorpusError, Vocab
from .tensor import Tensor


@dataclass
class LstmDirection:
    w_x: Tensor  # (in_dim, 4d)
    w_h: Tensor  # (d, 4d)
    b: Tensor    # (1, 4d)


@dataclass
class LstmLayer:
    fw: LstmDirection
    bw: LstmDirection


@dataclass
class EncoderParams:
    embedding: Tensor            # (n_chars, e)
    aware: list[LstmLayer]
    agnostic: list[LstmLayer]

    def named(self):
        yield "embedding", self.embedding
        for branch_name, layers in (("aware", self.aware), ("agnostic", self.agnostic)):
            for i, layer in enumerate(layers):
                for dir_name, d in (("fw", layer.fw), ("bw", layer.bw)):
                    yield f"{branch_name}.l{i}.{dir_name}.w_x", d.w_x
                    yield f"{branch_name}.l{i}.{dir_name}.w_h", d.w_h
                    yield f"{branch_name}.l{i}.{dir_name}.b", d.b


def _glorot(rng: np.random.Generator, fan_in: int, fan_out: int, shape) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


def _init_direction(rng: np.random.Generator, in_dim: int, d: int, name: str) -> LstmDirection:
    b = np.zeros((1, 4 * d))
    b[0, d : 2 * d] = 1.0  # open forget gates at the start of training
    return LstmDirection(
        w_x=T.param(_glorot(rng, in_dim, 4 * d, (in_dim, 4 * d)), f"{name}.w_x"),
        w_h=T.param(_glorot(rng, d, 4 * d, (d, 4 * d)), f"{name}.w_h"),
        b=T.param(b, f"{name}.b"),
    )


def init_encoder(
    rng: np.random.Generator, n_chars: int, embed_dim: int, hidden_dim: int, layers: int
) -> EncoderParams:
    if layers < 1:
        raise T.ContractError(f"need at least one recurrent layer, got {layers}")
    table = rng.normal(0.0, 1.0 / np.sqrt(embed_dim), size=(n_chars, embed_dim))
    params = EncoderParams(T.param(table, "embedding"), [], [])
    for branch_name, layer_list in (("aware", params.aware), ("agnostic", params.agnostic)):
        in_dim = embed_dim
        for i in range(layers):
            layer_list.append(
                LstmLayer(
                    fw=_init_direction(rng, in_dim, hidden_dim, f"{branch_name}.l{i}.fw"),
                    bw=_init_direction(rng, in_dim, hidden_dim, f"{branch_name}.l{i}.bw"),
                )
            )
            in_dim = 2 * hidden_dim
    return params


def load_pretrained_embeddings(path: str | Path, vocab: Vocab, table: Tensor) -> int:
    """Overwrite table rows for characters found in a word2vec-text file.

    An optional `count dim` header line is skipped.  Characters absent from
    the vocabulary are ignored.  Returns the number of rows overridden.
    """
    dim = table.data.shape[1]
    loaded = 0
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    for n, line in enumerate(lines, start=1):
        parts = line.split()
        if not parts:
            continue
        if n == 1 and len(parts) == 2 and all(p.isdigit() for p in parts):
            continue  # header
        token, values = parts[0], parts[1:]
        if len(values) != dim:
            raise CorpusError(
                f"embedding row has {len(values)} values, table expects {dim}", line=n
            )
        idx = vocab.char_id(token)
        if idx == 0 and token not in vocab.chars:
            continue
        table.data[idx] = np.asarray([float(v) for v in values], dtype=table.data.dtype)
        loaded += 1
    return loaded


def embed(
    params: EncoderParams,
    ids: np.ndarray,
    dropout: float = 0.0,
    rng: np.random.Generator | None = None,
    train: bool = False,
) -> Tensor:
    x = T.rows(params.embedding, ids)
    if train and dropout > 0.0:
        x = T.dropout(x, dropout, rng)
    return x


def _run_direction(x: Tensor, p: LstmDirection, d: int, reverse: bool) -> Tensor:
    length = x.data.shape[0]
    pre = T.add_bias(T.matmul(x, p.w_x), p.b)  # (l, 4d), input contribution
    h = T.const(np.zeros((1, d)))
    c = T.const(np.zeros((1, d)))
    steps = range(length - 1, -1, -1) if reverse else range(length)
    out: list[Tensor | None] = [None] * length
    for t in steps:
        gates = T.add(T.rows(pre, [t]), T.matmul(h, p.w_h))
        i = T.sigmoid(T.slice_cols(gates, 0, d))
        f = T.sigmoid(T.slice_cols(gates, d, 2 * d))
        g = T.tanh(T.slice_cols(gates, 2 * d, 3 * d))
        o = T.sigmoid(T.slice_cols(gates, 3 * d, 4 * d))
        c = T.add(T.mul(f, c), T.mul(i, g))
        h = T.mul(o, T.tanh(c))
        out[t] = h
    return T.concat(out, axis=0)


def encode_branch(
    x: Tensor,
    layers: list[LstmLayer],
    hidden_dim: int,
    dropout: float = 0.0,
    rng: np.random.Generator | None = None,
    train: bool = False,
) -> Tensor:
    """Run a stacked BiLSTM over embedded characters; returns (l, 2d) states.

    Dropout is applied between layers only, never after the last.
    """
    h = x
    for i, layer in enumerate(layers):
        if i > 0 and train and dropout > 0.0:
            h = T.dropout(h, dropout, rng)
        fw = _run_direction(h, layer.fw, hidden_dim, reverse=False)
        bw = _run_direction(h, layer.bw, hidden_dim, reverse=True)
        h = T.concat([fw, bw], axis=1)
    return h
