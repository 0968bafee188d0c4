"""Canonical span enumeration shared by scoring, losses, and decoding.

Spans are (start, end) with inclusive ends, enumerated start-major:
(0,0), (0,1), ..., (1,1), (1,2), ...  An optional length cap drops longer
spans from the enumeration entirely.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .tensor import ContractError


@dataclass(frozen=True)
class SpanSet:
    length: int
    max_len: int | None
    starts: np.ndarray   # (n_spans,)
    ends: np.ndarray     # (n_spans,)
    member: np.ndarray   # (n_spans, length) bool, True inside the span
    _offsets: np.ndarray

    @property
    def n_spans(self) -> int:
        return self.starts.size

    @property
    def span_lengths(self) -> np.ndarray:
        return self.ends - self.starts + 1

    @property
    def single(self) -> np.ndarray:
        return self.starts == self.ends

    def index_of(self, start: int, end: int) -> int:
        cap = self.max_len if self.max_len is not None else self.length
        if not (0 <= start <= end < self.length):
            raise ContractError(
                f"span ({start}, {end}) outside a length-{self.length} sentence"
            )
        if end - start + 1 > cap:
            raise ContractError(f"span ({start}, {end}) exceeds the length cap {cap}")
        return int(self._offsets[start]) + (end - start)


@lru_cache(maxsize=512)
def span_set(length: int, max_len: int | None = None) -> SpanSet:
    if length < 1:
        raise ContractError(f"sentence length must be positive, got {length}")
    if max_len is not None and max_len < 1:
        raise ContractError(f"span length cap must be positive, got {max_len}")
    cap = min(max_len, length) if max_len is not None else length
    counts = np.minimum(cap, length - np.arange(length))
    offsets = np.concatenate([[0], np.cumsum(counts)[:-1]])
    starts = np.repeat(np.arange(length), counts)
    ends = np.concatenate([np.arange(i, i + c) for i, c in enumerate(counts)])
    pos = np.arange(length)
    member = (pos >= starts[:, None]) & (pos <= ends[:, None])
    s = SpanSet(length, max_len, starts, ends, member, offsets)
    s.starts.setflags(write=False)
    s.ends.setflags(write=False)
    s.member.setflags(write=False)
    return s
