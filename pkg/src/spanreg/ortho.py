"""Penalty keeping the two encoders' feature spaces apart.

The Gram matrix between the branch outputs measures how much of one hidden
space is expressible in the other; its mean squared entry is driven toward
zero, which is attained exactly when every aware column is orthogonal to
every agnostic column.
"""

from __future__ import annotations

from . import tensor as T
from .tensor import ShapeError, Tensor


def orth_loss(h_aware: Tensor, h_agnostic: Tensor) -> Tensor:
    """Mean squared entry of h_aware^T h_agnostic; non-negative."""
    if h_aware.data.shape[0] != h_agnostic.data.shape[0]:
        raise ShapeError(
            f"branch outputs cover different positions: "
            f"{h_aware.data.shape} vs {h_agnostic.data.shape}"
        )
    gram = T.matmul(T.transpose(h_aware), h_agnostic)
    return T.mean_all(T.mul(gram, gram))
