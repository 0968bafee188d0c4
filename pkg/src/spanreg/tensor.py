"""Reverse-mode automatic differentiation over numpy arrays.

Values live in numpy ndarrays; every differentiable operation appends a
record to the active tape (a `Tape` entered as a context manager).  Calling
`Tape.backward(loss)` walks the records in reverse, accumulating gradients
into the `.grad` buffers of the operands.  With no active tape, operations
just compute values, which is the evaluation mode used for decoding.

Gradients of leaf tensors (parameters) persist across backward calls until
`zero_grad`, so per-sentence graphs inside a batch accumulate naturally.
Gradients of tape-internal tensors are reset at the start of each backward
pass.
"""

from __future__ import annotations

import threading
from typing import Callable, Iterable, Sequence

import numpy as np


class ShapeError(ValueError):
    """Operand shapes incompatible with the requested operation."""


class NumericError(ArithmeticError):
    """A forward computation produced NaN or Inf."""


class ContractError(RuntimeError):
    """An API precondition was violated."""


_PRECISIONS = {"single": np.float32, "double": np.float64}
_dtype = np.float32
_check_finite = True


def set_precision(name: str) -> None:
    global _dtype
    if name not in _PRECISIONS:
        raise ContractError(f"unknown precision {name!r}; expected one of {sorted(_PRECISIONS)}")
    _dtype = _PRECISIONS[name]


def precision() -> str:
    return "single" if _dtype == np.float32 else "double"


def dtype() -> np.dtype:
    return np.dtype(_dtype)


def set_check_finite(enabled: bool) -> None:
    """Toggle the per-op NaN/Inf guard (on by default)."""
    global _check_finite
    _check_finite = bool(enabled)


class Tensor:
    __slots__ = ("data", "_grad", "name")

    def __init__(self, data, name: str | None = None):
        self.data = np.asarray(data, dtype=_dtype)
        self._grad: np.ndarray | None = None
        self.name = name

    @property
    def grad(self) -> np.ndarray:
        if self._grad is None:
            self._grad = np.zeros_like(self.data)
        return self._grad

    @property
    def has_grad(self) -> bool:
        """True when a gradient array is present.  Unlike .grad, checking
        this does not materialize one."""
        return self._grad is not None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def zero_grad(self) -> None:
        self._grad = None

    def __repr__(self):
        tag = f" {self.name!r}" if self.name else ""
        return f"Tensor{tag}(shape={self.data.shape}, dtype={self.data.dtype})"


def param(data, name: str) -> Tensor:
    return Tensor(np.asarray(data, dtype=_dtype), name=name)


def const(data) -> Tensor:
    return Tensor(np.asarray(data, dtype=_dtype))


def _accum(t: Tensor, g: np.ndarray) -> None:
    if t._grad is None:
        # copy: vjp outputs may alias each other (e.g. both halves of add)
        t._grad = np.array(g, dtype=t.data.dtype)
    else:
        t._grad += g


class Tape:
    """Execution-ordered record of operations for one computation graph.

    Tapes nest per thread; operations record onto the innermost active tape.
    """

    _local = threading.local()

    def __init__(self):
        # each record: (out, inputs, vjp) where vjp(grad_out) returns one
        # gradient array (or None) per input
        self.records: list[tuple[Tensor, tuple[Tensor, ...], Callable]] = []

    def __enter__(self) -> "Tape":
        stack = getattr(Tape._local, "stack", None)
        if stack is None:
            stack = Tape._local.stack = []
        stack.append(self)
        return self

    def __exit__(self, *exc):
        Tape._local.stack.pop()
        return False

    @staticmethod
    def active() -> "Tape | None":
        stack = getattr(Tape._local, "stack", None)
        return stack[-1] if stack else None

    def backward(self, loss: Tensor, seed: float = 1.0) -> None:
        if loss.data.size != 1:
            raise ContractError(f"backward needs a scalar loss, got shape {loss.data.shape}")
        outputs = {id(rec[0]) for rec in self.records}
        if id(loss) not in outputs:
            raise ContractError("loss tensor was not produced on this tape")
        # tape-internal gradients are per-pass; leaf gradients accumulate
        for out, _, _ in self.records:
            out._grad = None
        loss._grad = np.full_like(loss.data, seed)
        for out, inputs, vjp in reversed(self.records):
            g = out._grad
            if g is None:
                continue
            for inp, gi in zip(inputs, vjp(g)):
                if gi is not None:
                    _accum(inp, gi)


def _record(out: Tensor, inputs: tuple[Tensor, ...], vjp: Callable) -> Tensor:
    tape = Tape.active()
    if tape is not None:
        tape.records.append((out, inputs, vjp))
    return out


def _result(op: str, data: np.ndarray) -> Tensor:
    if _check_finite and not np.isfinite(data).all():
        raise NumericError(f"non-finite value produced by {op}")
    return Tensor(data)


def _need_2d(op: str, *ts: Tensor) -> None:
    for t in ts:
        if t.data.ndim != 2:
            raise ShapeError(f"{op}: expected 2-d operand, got shape {t.data.shape}")


def _need_same_shape(op: str, a: Tensor, b: Tensor) -> None:
    if a.data.shape != b.data.shape:
        raise ShapeError(f"{op}: shapes {a.data.shape} and {b.data.shape} differ")


# ---------------------------------------------------------------------------
# arithmetic


def add(a: Tensor, b: Tensor) -> Tensor:
    _need_same_shape("add", a, b)
    out = _result("add", a.data + b.data)
    return _record(out, (a, b), lambda g: (g, g))


def sub(a: Tensor, b: Tensor) -> Tensor:
    _need_same_shape("sub", a, b)
    out = _result("sub", a.data - b.data)
    return _record(out, (a, b), lambda g: (g, -g))


def mul(a: Tensor, b: Tensor) -> Tensor:
    _need_same_shape("mul", a, b)
    out = _result("mul", a.data * b.data)
    return _record(out, (a, b), lambda g: (g * b.data, g * a.data))


def add_bias(x: Tensor, b: Tensor) -> Tensor:
    """Row-broadcast add: (n, k) + (1, k)."""
    _need_2d("add_bias", x, b)
    if b.data.shape != (1, x.data.shape[1]):
        raise ShapeError(f"add_bias: bias {b.data.shape} does not match rows of {x.data.shape}")
    out = _result("add_bias", x.data + b.data)
    return _record(out, (x, b), lambda g: (g, g.sum(axis=0, keepdims=True)))


def scale_rows(x: Tensor, s: Tensor) -> Tensor:
    """Column-broadcast multiply: (n, k) * (n, 1)."""
    _need_2d("scale_rows", x, s)
    if s.data.shape != (x.data.shape[0], 1):
        raise ShapeError(f"scale_rows: scale {s.data.shape} does not match cols of {x.data.shape}")
    out = _result("scale_rows", x.data * s.data)
    return _record(
        out, (x, s), lambda g: (g * s.data, (g * x.data).sum(axis=1, keepdims=True))
    )


def affine(x: Tensor, scale: float = 1.0, shift: float = 0.0) -> Tensor:
    """Constant elementwise map scale*x + shift."""
    out = _result("affine", scale * x.data + shift)
    return _record(out, (x,), lambda g: (scale * g,))


def mul_const(x: Tensor, arr: np.ndarray) -> Tensor:
    """Elementwise multiply by a constant array (no gradient to the array)."""
    if arr.shape != x.data.shape:
        raise ShapeError(f"mul_const: shapes {x.data.shape} and {arr.shape} differ")
    out = _result("mul_const", x.data * arr)
    return _record(out, (x,), lambda g: (g * arr,))


def matmul(a: Tensor, b: Tensor) -> Tensor:
    _need_2d("matmul", a, b)
    if a.data.shape[1] != b.data.shape[0]:
        raise ShapeError(f"matmul: {a.data.shape} @ {b.data.shape}")
    out = _result("matmul", a.data @ b.data)
    return _record(out, (a, b), lambda g: (g @ b.data.T, a.data.T @ g))


def lmatmul_const(arr: np.ndarray, x: Tensor) -> Tensor:
    """Multiply by a constant matrix on the left: arr @ x."""
    _need_2d("lmatmul_const", x)
    if arr.ndim != 2 or arr.shape[1] != x.data.shape[0]:
        raise ShapeError(f"lmatmul_const: {arr.shape} @ {x.data.shape}")
    out = _result("lmatmul_const", arr @ x.data)
    return _record(out, (x,), lambda g: (arr.T @ g,))


def transpose(x: Tensor) -> Tensor:
    _need_2d("transpose", x)
    out = _result("transpose", x.data.T.copy())
    return _record(out, (x,), lambda g: (g.T,))


def bilinear(hi: Tensor, u: Tensor, hj: Tensor) -> Tensor:
    """Batched bilinear form out[s, k] = sum_pq hi[s, p] * u[p, k, q] * hj[s, q]."""
    _need_2d("bilinear", hi, hj)
    if u.data.ndim != 3:
        raise ShapeError(f"bilinear: weight must be 3-d, got {u.data.shape}")
    p, _, q = u.data.shape
    if hi.data.shape[1] != p or hj.data.shape[1] != q or hi.data.shape[0] != hj.data.shape[0]:
        raise ShapeError(
            f"bilinear: operands {hi.data.shape}, {u.data.shape}, {hj.data.shape} do not agree"
        )
    # contraction order (hi @ u) then hj keeps everything inside BLAS matmuls;
    # a naive three-operand einsum is orders of magnitude slower here
    k = u.data.shape[1]
    s = hi.data.shape[0]
    hi_u = (hi.data @ u.data.reshape(p, k * q)).reshape(s, k, q)
    out = _result("bilinear", (hi_u * hj.data[:, None, :]).sum(axis=2))

    def vjp(g):
        g_hj = g[:, :, None] * hj.data[:, None, :]           # (s, k, q)
        d_hi = g_hj.reshape(s, k * q) @ u.data.reshape(p, k * q).T
        d_u = (hi.data.T @ g_hj.reshape(s, k * q)).reshape(p, k, q)
        d_hj = (hi_u * g[:, :, None]).sum(axis=1)
        return d_hi, d_u, d_hj

    return _record(out, (hi, u, hj), vjp)


# ---------------------------------------------------------------------------
# structure


def concat(parts: Sequence[Tensor], axis: int) -> Tensor:
    if axis not in (0, 1):
        raise ShapeError(f"concat: axis must be 0 or 1, got {axis}")
    if not parts:
        raise ShapeError("concat: no operands")
    _need_2d("concat", *parts)
    other = 1 - axis
    width = parts[0].data.shape[other]
    for t in parts:
        if t.data.shape[other] != width:
            raise ShapeError(
                f"concat(axis={axis}): operand shape {t.data.shape} disagrees on axis {other}"
            )
    out = _result("concat", np.concatenate([t.data for t in parts], axis=axis))
    sizes = [t.data.shape[axis] for t in parts]
    bounds = np.cumsum([0] + sizes)

    def vjp(g):
        if axis == 0:
            return tuple(g[bounds[i] : bounds[i + 1], :] for i in range(len(parts)))
        return tuple(g[:, bounds[i] : bounds[i + 1]] for i in range(len(parts)))

    return _record(out, tuple(parts), vjp)


def slice_cols(x: Tensor, j0: int, j1: int) -> Tensor:
    _need_2d("slice_cols", x)
    if not (0 <= j0 < j1 <= x.data.shape[1]):
        raise ShapeError(f"slice_cols: [{j0}:{j1}] out of range for shape {x.data.shape}")
    out = _result("slice_cols", x.data[:, j0:j1].copy())

    def vjp(g):
        gx = np.zeros_like(x.data)
        gx[:, j0:j1] = g
        return (gx,)

    return _record(out, (x,), vjp)


def rows(x: Tensor, idx) -> Tensor:
    """Gather rows by integer index array (differentiable w.r.t. x)."""
    _need_2d("rows", x)
    idx = np.asarray(idx, dtype=np.intp)
    if idx.ndim != 1:
        raise ShapeError(f"rows: index must be 1-d, got shape {idx.shape}")
    if idx.size and (idx.min() < 0 or idx.max() >= x.data.shape[0]):
        raise ShapeError(f"rows: index out of range for {x.data.shape[0]} rows")
    out = _result("rows", x.data[idx])

    def vjp(g):
        gx = np.zeros_like(x.data)
        np.add.at(gx, idx, g)
        return (gx,)

    return _record(out, (x,), vjp)


def pick(x: Tensor, cols) -> Tensor:
    """Per-row entry selection: out[s, 0] = x[s, cols[s]]."""
    _need_2d("pick", x)
    cols = np.asarray(cols, dtype=np.intp)
    n = x.data.shape[0]
    if cols.shape != (n,):
        raise ShapeError(f"pick: need {n} column indices, got shape {cols.shape}")
    if cols.size and (cols.min() < 0 or cols.max() >= x.data.shape[1]):
        raise ShapeError(f"pick: column index out of range for {x.data.shape[1]} columns")
    rng = np.arange(n)
    out = _result("pick", x.data[rng, cols][:, None])

    def vjp(g):
        gx = np.zeros_like(x.data)
        np.add.at(gx, (rng, cols), g[:, 0])
        return (gx,)

    return _record(out, (x,), vjp)


def select_rows(keep: np.ndarray, a: Tensor, b: Tensor) -> Tensor:
    """Rowwise choice: out[s] = a[s] where keep[s] else b[s]."""
    _need_same_shape("select_rows", a, b)
    keep = np.asarray(keep, dtype=bool)
    if keep.shape != (a.data.shape[0],):
        raise ShapeError(f"select_rows: mask shape {keep.shape} does not match {a.data.shape}")
    m = keep[:, None]
    out = _result("select_rows", np.where(m, a.data, b.data))
    return _record(out, (a, b), lambda g: (g * m, g * ~m))


def broadcast_rows(x: Tensor, n: int) -> Tensor:
    """Tile a single row (1, k) to (n, k)."""
    _need_2d("broadcast_rows", x)
    if x.data.shape[0] != 1:
        raise ShapeError(f"broadcast_rows: expected one row, got shape {x.data.shape}")
    out = _result("broadcast_rows", np.broadcast_to(x.data, (n, x.data.shape[1])).copy())
    return _record(out, (x,), lambda g: (g.sum(axis=0, keepdims=True),))


def append_ones(x: Tensor) -> Tensor:
    """Append a constant 1 column: (n, k) -> (n, k+1)."""
    _need_2d("append_ones", x)
    n = x.data.shape[0]
    out = _result("append_ones", np.hstack([x.data, np.ones((n, 1), dtype=x.data.dtype)]))
    return _record(out, (x,), lambda g: (g[:, :-1],))


# ---------------------------------------------------------------------------
# nonlinearities and normalizers


def tanh(x: Tensor) -> Tensor:
    out = _result("tanh", np.tanh(x.data))
    return _record(out, (x,), lambda g: (g * (1.0 - out.data * out.data),))


def sigmoid(x: Tensor) -> Tensor:
    # stable two-sided formulation
    d = x.data
    y = np.where(d >= 0, 1.0 / (1.0 + np.exp(-np.abs(d))), np.exp(-np.abs(d)) / (1.0 + np.exp(-np.abs(d))))
    out = _result("sigmoid", y.astype(d.dtype, copy=False))
    return _record(out, (x,), lambda g: (g * out.data * (1.0 - out.data),))


def exp(x: Tensor) -> Tensor:
    out = _result("exp", np.exp(x.data))
    return _record(out, (x,), lambda g: (g * out.data,))


def log(x: Tensor) -> Tensor:
    with np.errstate(divide="ignore", invalid="ignore"):
        out = _result("log", np.log(x.data))
    return _record(out, (x,), lambda g: (g / x.data,))


def clip(x: Tensor, lo: float, hi: float) -> Tensor:
    """Clamp values to [lo, hi]; gradient passes only where unclamped."""
    out = _result("clip", np.clip(x.data, lo, hi))
    inside = (x.data >= lo) & (x.data <= hi)
    return _record(out, (x,), lambda g: (g * inside,))


def softmax(x: Tensor) -> Tensor:
    """Row softmax with max subtraction."""
    _need_2d("softmax", x)
    z = x.data - x.data.max(axis=1, keepdims=True)
    e = np.exp(z)
    y = e / e.sum(axis=1, keepdims=True)
    out = _result("softmax", y)

    def vjp(g):
        dot = (g * out.data).sum(axis=1, keepdims=True)
        return (out.data * (g - dot),)

    return _record(out, (x,), vjp)


def masked_softmax(x: Tensor, mask: np.ndarray) -> Tensor:
    """Row softmax restricted to positions where mask is true; zeros elsewhere.

    Every row must have at least one unmasked position.
    """
    _need_2d("masked_softmax", x)
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != x.data.shape:
        raise ShapeError(f"masked_softmax: mask {mask.shape} does not match {x.data.shape}")
    if not mask.any(axis=1).all():
        raise ContractError("masked_softmax: a row has no unmasked position")
    neg = np.where(mask, x.data, -np.inf)
    z = neg - neg.max(axis=1, keepdims=True)
    e = np.exp(z)
    y = e / e.sum(axis=1, keepdims=True)
    out = _result("masked_softmax", y)

    def vjp(g):
        dot = (g * out.data).sum(axis=1, keepdims=True)
        return (out.data * (g - dot),)

    return _record(out, (x,), vjp)


def log_softmax(x: Tensor) -> Tensor:
    """Row log-softmax via the log-sum-exp identity."""
    _need_2d("log_softmax", x)
    m = x.data.max(axis=1, keepdims=True)
    z = x.data - m
    lse = np.log(np.exp(z).sum(axis=1, keepdims=True))
    out = _result("log_softmax", z - lse)

    def vjp(g):
        return (g - np.exp(out.data) * g.sum(axis=1, keepdims=True),)

    return _record(out, (x,), vjp)


def masked_max_pool(x: Tensor, mask: np.ndarray) -> Tensor:
    """out[s, k] = max over rows t with mask[s, t] of x[t, k].

    mask has shape (n_groups, n_rows); each group must be nonempty.  Gradient
    routes to the first attaining row per (group, column).
    """
    _need_2d("masked_max_pool", x)
    mask = np.asarray(mask, dtype=bool)
    if mask.ndim != 2 or mask.shape[1] != x.data.shape[0]:
        raise ShapeError(f"masked_max_pool: mask {mask.shape} does not fit {x.data.shape}")
    if not mask.any(axis=1).all():
        raise ContractError("masked_max_pool: a group has no member")
    big = np.where(mask[:, :, None], x.data[None, :, :], -np.inf)
    arg = big.argmax(axis=1)  # (groups, k)
    out = _result("masked_max_pool", np.take_along_axis(big, arg[:, None, :], axis=1)[:, 0, :])
    k = x.data.shape[1]
    cols = np.broadcast_to(np.arange(k), arg.shape)

    def vjp(g):
        gx = np.zeros_like(x.data)
        np.add.at(gx, (arg.ravel(), cols.ravel()), g.ravel())
        return (gx,)

    return _record(out, (x,), vjp)


def dropout(x: Tensor, p: float, rng: np.random.Generator) -> Tensor:
    """Inverted dropout: keep with probability 1-p, scale kept values by 1/(1-p).

    The mask is drawn once and stored in the tape record, so forward and
    backward see the same mask.  Callers apply this only in training mode.
    """
    if not 0.0 <= p < 1.0:
        raise ContractError(f"dropout rate must be in [0, 1), got {p}")
    if p == 0.0:
        return x
    scale = (rng.random(x.data.shape) >= p).astype(x.data.dtype) / (1.0 - p)
    out = _result("dropout", x.data * scale)
    return _record(out, (x,), lambda g: (g * scale,))


# ---------------------------------------------------------------------------
# reductions


def sum_all(x: Tensor) -> Tensor:
    out = _result("sum_all", x.data.sum(dtype=x.data.dtype).reshape(1, 1))
    return _record(out, (x,), lambda g: (np.full_like(x.data, g[0, 0]),))


def mean_all(x: Tensor) -> Tensor:
    out = _result("mean_all", x.data.mean(dtype=x.data.dtype).reshape(1, 1))
    n = x.data.size
    return _record(out, (x,), lambda g: (np.full_like(x.data, g[0, 0] / n),))


# ---------------------------------------------------------------------------
# verification


def gradient_check(
    params: Iterable[tuple[str, Tensor]],
    build_loss: Callable[[], Tensor],
    eps: float = 1e-5,
) -> dict[str, float]:
    """Compare analytic gradients against central finite differences.

    `build_loss` must rebuild the forward computation from the current
    parameter values inside a fresh tape and return the scalar loss; it is
    called repeatedly with individual parameter entries perturbed in place.
    Returns the max relative error per parameter, where the relative error of
    a pair (a, n) is |a - n| / max(1, |a|, |n|).

    Raises ContractError if the closure is not deterministic.
    """
    params = list(params)

    def run() -> tuple[float, Tape, Tensor]:
        with Tape() as tape:
            loss = build_loss()
        if loss.data.size != 1:
            raise ContractError("build_loss must return a scalar")
        return float(loss.data.reshape(())), tape, loss

    base1, _, _ = run()
    base2, tape, loss = run()
    if base1 != base2:
        raise ContractError(
            "build_loss is not deterministic: repeated evaluation gave "
            f"{base1!r} then {base2!r}"
        )

    for _, p in params:
        p.zero_grad()
    tape.backward(loss)
    analytic = {name: p.grad.copy() for name, p in params}

    worst: dict[str, float] = {}
    for name, p in params:
        flat = p.data.reshape(-1)
        err = 0.0
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            up, _, _ = run()
            flat[i] = orig - eps
            down, _, _ = run()
            flat[i] = orig
            numeric = (up - down) / (2.0 * eps)
            a = float(analytic[name].reshape(-1)[i])
            err = max(err, abs(a - numeric) / max(1.0, abs(a), abs(numeric)))
        worst[name] = err
    return worst
