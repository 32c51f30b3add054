"""Dense 2-D tensors with tape-based reverse-mode differentiation.

Every learnable block in the package is built from the primitives below.
Shapes are kept 2-D throughout; the only implicit broadcast is adding a
``(1, n)`` row vector to every row of an ``(m, n)`` matrix.

Usage::

    w = Tensor(rng.normal(size=(3, 2)), requires_grad=True)
    with Tape() as tape:
        loss = mean_all(relu(matmul(x, w)))
    grads = backward(tape, loss, [w])
"""
from __future__ import annotations

import threading
from typing import Callable, Iterable, Sequence

import numpy as np

__all__ = [
    "Tensor", "Tape", "NonFiniteError", "backward", "grad_check",
    "set_default_dtype", "get_default_dtype",
    "matmul", "add", "sub", "mul", "mul_const", "scale", "add_scalar",
    "concat", "transpose", "take_rows", "slice_cols", "outer_add",
    "row_l2_normalize", "relu", "leaky_relu", "sigmoid", "log", "clip",
    "masked_row_softmax", "mean_rows", "sum_rows", "row_sum", "sum_all",
    "mean_all", "batch_norm", "log_sigmoid",
]

_DTYPE = np.float64
_state = threading.local()


class NonFiniteError(FloatingPointError):
    """Raised when an operation produces NaN or Inf."""


def set_default_dtype(dtype) -> None:
    global _DTYPE
    dtype = np.dtype(dtype)
    if dtype not in (np.float32, np.float64):
        raise ValueError(f"unsupported dtype {dtype}")
    _DTYPE = dtype.type


def get_default_dtype():
    return _DTYPE


class Tensor:
    """A 2-D array plus the bookkeeping needed to differentiate through it."""

    __slots__ = ("data", "requires_grad", "name", "_parents", "_backward", "__weakref__")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        arr = np.array(data, dtype=_DTYPE)
        if arr.ndim == 0:
            arr = arr.reshape(1, 1)
        elif arr.ndim == 1:
            arr = arr.reshape(1, -1)
        elif arr.ndim != 2:
            raise ValueError(f"tensors are 2-D, got shape {arr.shape}")
        self.data = arr
        self.requires_grad = requires_grad
        self.name = name
        self._parents: tuple = ()
        self._backward = None

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape

    def item(self) -> float:
        if self.data.size != 1:
            raise ValueError(f"item() needs a scalar tensor, got shape {self.shape}")
        return float(self.data[0, 0])

    def numpy(self) -> np.ndarray:
        return self.data

    def __repr__(self) -> str:
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}{tag}, requires_grad={self.requires_grad})"


class Tape:
    """Ordered record of the operations executed while the tape is active.

    Tapes nest per thread; only the innermost one records.
    """

    def __init__(self):
        self.nodes: list[Tensor] = []

    def __enter__(self) -> "Tape":
        stack = getattr(_state, "stack", None)
        if stack is None:
            stack = _state.stack = []
        stack.append(self)
        return self

    def __exit__(self, *exc) -> None:
        _state.stack.pop()

    def __len__(self) -> int:
        return len(self.nodes)


def _active_tape() -> Tape | None:
    stack = getattr(_state, "stack", None)
    return stack[-1] if stack else None


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(value: np.ndarray, parents: Sequence[Tensor], grad_fn: Callable, op: str) -> Tensor:
    if not np.all(np.isfinite(value)):
        raise NonFiniteError(f"{op} produced non-finite values")
    out = Tensor.__new__(Tensor)
    out.data = value if value.dtype == _DTYPE else value.astype(_DTYPE)
    out.name = None
    out._parents = ()
    out._backward = None
    out.requires_grad = False
    tape = _active_tape()
    if tape is not None and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = grad_fn
        tape.nodes.append(out)
    return out


def backward(tape: Tape, output: Tensor, params: Iterable[Tensor] | None = None) -> dict:
    """Gradients of scalar ``output`` with respect to ``params``.

    With ``params=None`` every leaf tensor reached from ``output`` that
    requires grad is returned. Parameters with no path to the output get
    zero gradients.
    """
    if output.data.size != 1:
        raise ValueError(f"backward needs a scalar output, got shape {output.shape}")
    grads: dict[int, np.ndarray] = {id(output): np.ones_like(output.data)}
    leaves: dict[int, Tensor] = {}
    for node in reversed(tape.nodes):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        parent_grads = node._backward(g)
        for parent, pg in zip(node._parents, parent_grads):
            if pg is None or not parent.requires_grad:
                continue
            key = id(parent)
            if parent._backward is None:
                leaves[key] = parent
            if key in grads:
                grads[key] = grads[key] + pg
            else:
                grads[key] = pg
    if params is None:
        params = leaves.values()
    result = {}
    for p in params:
        g = grads.get(id(p))
        result[p] = np.zeros_like(p.data) if g is None else g.astype(p.data.dtype, copy=False)
    return result


def grad_check(f: Callable[[], Tensor], params: Sequence[Tensor], eps: float = 1e-5) -> float:
    """Max relative error between tape gradients and central differences.

    ``f`` rebuilds the scalar output from the current parameter values each
    time it is called. The error for one coordinate is
    ``|analytic - numeric| / max(1e-8, |analytic| + |numeric|)``.
    """
    if not eps > 0:
        raise ValueError("eps must be positive")
    params = list(params)
    with Tape() as tape:
        out = f()
    analytic = backward(tape, out, params)
    worst = 0.0
    for p in params:
        data = p.data
        ga = analytic[p]
        it = np.nditer(data, flags=["multi_index"])
        for _ in it:
            idx = it.multi_index
            orig = data[idx]
            data[idx] = orig + eps
            fp = f().item()
            data[idx] = orig - eps
            fm = f().item()
            data[idx] = orig
            num = (fp - fm) / (2.0 * eps)
            a = ga[idx]
            if not (np.isfinite(num) and np.isfinite(a)):
                raise NonFiniteError(f"non-finite gradient at {p.name or 'param'}{idx}")
            err = abs(a - num) / max(1e-8, abs(a) + abs(num))
            worst = max(worst, float(err))
    return worst


# ---------------------------------------------------------------- primitives


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.shape[1] != b.shape[0]:
        raise ValueError(f"matmul shape mismatch {a.shape} @ {b.shape}")
    A, B = a.data, b.data
    return _make(A @ B, (a, b), lambda g: (g @ B.T, A.T @ g), "matmul")


def _is_row_bias(a: Tensor, b: Tensor) -> bool:
    return b.shape[0] == 1 and b.shape[1] == a.shape[1] and a.shape[0] != 1


def add(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise sum; ``b`` may also be a ``(1, n)`` row added to each row."""
    if a.shape == b.shape:
        return _make(a.data + b.data, (a, b), lambda g: (g, g), "add")
    if _is_row_bias(a, b):
        return _make(a.data + b.data, (a, b), lambda g: (g, g.sum(axis=0, keepdims=True)), "add")
    raise ValueError(f"add shape mismatch {a.shape} + {b.shape}")


def sub(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise ValueError(f"sub shape mismatch {a.shape} - {b.shape}")
    return _make(a.data - b.data, (a, b), lambda g: (g, -g), "sub")


def mul(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise ValueError(f"mul shape mismatch {a.shape} * {b.shape}")
    A, B = a.data, b.data
    return _make(A * B, (a, b), lambda g: (g * B, g * A), "mul")


def mul_const(a: Tensor, c) -> Tensor:
    """Multiply by a constant array of the same shape (not differentiated)."""
    c = np.asarray(c, dtype=a.data.dtype)
    if c.shape != a.shape:
        raise ValueError(f"mul_const shape mismatch {a.shape} * {c.shape}")
    return _make(a.data * c, (a,), lambda g: (g * c,), "mul_const")


def scale(a: Tensor, k: float) -> Tensor:
    k = float(k)
    return _make(a.data * k, (a,), lambda g: (g * k,), "scale")


def add_scalar(a: Tensor, k: float) -> Tensor:
    k = float(k)
    return _make(a.data + k, (a,), lambda g: (g,), "add_scalar")


def concat(tensors: Sequence[Tensor], axis: int = 1) -> Tensor:
    if axis not in (0, 1):
        raise ValueError("axis must be 0 or 1")
    other = 1 - axis
    if len({t.shape[other] for t in tensors}) != 1:
        raise ValueError(f"concat shape mismatch {[t.shape for t in tensors]}")
    sizes = [t.shape[axis] for t in tensors]
    bounds = np.cumsum([0] + sizes)

    def grad_fn(g):
        if axis == 1:
            return tuple(g[:, bounds[i]:bounds[i + 1]] for i in range(len(tensors)))
        return tuple(g[bounds[i]:bounds[i + 1]] for i in range(len(tensors)))

    return _make(np.concatenate([t.data for t in tensors], axis=axis), tuple(tensors), grad_fn, "concat")


def transpose(a: Tensor) -> Tensor:
    return _make(a.data.T.copy(), (a,), lambda g: (g.T,), "transpose")


def take_rows(a: Tensor, idx) -> Tensor:
    idx = np.asarray(idx, dtype=np.intp)
    n = a.shape[0]

    def grad_fn(g):
        out = np.zeros((n, g.shape[1]), dtype=g.dtype)
        np.add.at(out, idx, g)
        return (out,)

    return _make(a.data[idx], (a,), grad_fn, "take_rows")


def slice_cols(a: Tensor, start: int, stop: int) -> Tensor:
    shape = a.shape

    def grad_fn(g):
        out = np.zeros(shape, dtype=g.dtype)
        out[:, start:stop] = g
        return (out,)

    return _make(a.data[:, start:stop].copy(), (a,), grad_fn, "slice_cols")


def outer_add(col: Tensor, row: Tensor) -> Tensor:
    """``out[i, j] = col[i, 0] + row[0, j]``."""
    if col.shape[1] != 1 or row.shape[0] != 1:
        raise ValueError(f"outer_add expects (m,1) and (1,n), got {col.shape}, {row.shape}")
    return _make(
        col.data + row.data, (col, row),
        lambda g: (g.sum(axis=1, keepdims=True), g.sum(axis=0, keepdims=True)),
        "outer_add",
    )


def row_l2_normalize(a: Tensor, eps: float = 0.0) -> Tensor:
    """Scale each row to unit L2 norm: ``x / sqrt(|x|^2 + eps^2)``."""
    X = a.data
    norm = np.sqrt((X * X).sum(axis=1, keepdims=True) + eps * eps)
    if np.any(norm == 0):
        raise ZeroDivisionError("row_l2_normalize of a zero row")
    Y = X / norm

    def grad_fn(g):
        return ((g - Y * (g * Y).sum(axis=1, keepdims=True)) / norm,)

    return _make(Y, (a,), grad_fn, "row_l2_normalize")


def relu(a: Tensor) -> Tensor:
    mask = a.data > 0
    return _make(a.data * mask, (a,), lambda g: (g * mask,), "relu")


def leaky_relu(a: Tensor, slope: float = 0.2) -> Tensor:
    factor = np.where(a.data > 0, 1.0, slope).astype(a.data.dtype)
    return _make(a.data * factor, (a,), lambda g: (g * factor,), "leaky_relu")


def _sigmoid(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x)
    if x.dtype.kind != "f":
        x = x.astype(np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def sigmoid(a: Tensor) -> Tensor:
    S = _sigmoid(a.data)
    return _make(S, (a,), lambda g: (g * S * (1.0 - S),), "sigmoid")


def log_sigmoid(a: Tensor) -> Tensor:
    """log(sigmoid(a)) without cancellation for large |a|."""
    X = a.data
    return _make(-np.logaddexp(0.0, -X), (a,), lambda g: (g * _sigmoid(-X),), "log_sigmoid")


def log(a: Tensor) -> Tensor:
    X = a.data
    if np.any(X <= 0):
        raise NonFiniteError("log of a non-positive value")
    return _make(np.log(X), (a,), lambda g: (g / X,), "log")


def clip(a: Tensor, lo: float, hi: float) -> Tensor:
    X = a.data
    inside = (X >= lo) & (X <= hi)
    return _make(np.clip(X, lo, hi), (a,), lambda g: (g * inside,), "clip")


def masked_row_softmax(logits: Tensor, mask) -> Tensor:
    """Softmax over each row restricted to ``mask``; masked entries are exactly 0."""
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != logits.shape:
        raise ValueError(f"mask shape {mask.shape} != logits shape {logits.shape}")
    if not np.all(mask.any(axis=1)):
        raise ValueError("masked_row_softmax over an all-masked row")
    X = np.where(mask, logits.data, -np.inf)
    X = X - X.max(axis=1, keepdims=True)
    E = np.where(mask, np.exp(X), 0.0)
    P = E / E.sum(axis=1, keepdims=True)

    def grad_fn(g):
        return (P * (g - (g * P).sum(axis=1, keepdims=True)),)

    return _make(P, (logits,), grad_fn, "masked_row_softmax")


def mean_rows(a: Tensor) -> Tensor:
    """Column-wise mean over rows, shape ``(1, n)``."""
    m = a.shape[0]
    return _make(a.data.mean(axis=0, keepdims=True), (a,),
                 lambda g: (np.repeat(g, m, axis=0) / m,), "mean_rows")


def sum_rows(a: Tensor) -> Tensor:
    m = a.shape[0]
    return _make(a.data.sum(axis=0, keepdims=True), (a,),
                 lambda g: (np.repeat(g, m, axis=0),), "sum_rows")


def row_sum(a: Tensor) -> Tensor:
    """Sum across each row, shape ``(m, 1)``."""
    n = a.shape[1]
    return _make(a.data.sum(axis=1, keepdims=True), (a,),
                 lambda g: (np.repeat(g, n, axis=1),), "row_sum")


def sum_all(a: Tensor) -> Tensor:
    shape = a.shape
    return _make(np.array([[a.data.sum()]]), (a,),
                 lambda g: (np.full(shape, g[0, 0]),), "sum_all")


def mean_all(a: Tensor) -> Tensor:
    shape = a.shape
    n = a.data.size
    return _make(np.array([[a.data.mean()]]), (a,),
                 lambda g: (np.full(shape, g[0, 0] / n),), "mean_all")


def batch_norm(x: Tensor, gamma: Tensor, beta: Tensor, running_mean: np.ndarray,
               running_var: np.ndarray, training: bool, momentum: float = 0.1,
               eps: float = 1e-5) -> Tensor:
    """Per-feature standardization followed by a learned affine map.

    In training mode batch statistics are used and the running buffers are
    updated in place; otherwise the running buffers are used.
    """
    X = x.data
    m = X.shape[0]
    if training:
        if m < 2:
            raise ValueError("batch_norm in training mode needs at least 2 rows")
        mu = X.mean(axis=0, keepdims=True)
        var = X.var(axis=0, keepdims=True)
        running_mean *= 1.0 - momentum
        running_mean += momentum * mu
        running_var *= 1.0 - momentum
        running_var += momentum * var * m / (m - 1)
    else:
        mu, var = running_mean, running_var
    inv = 1.0 / np.sqrt(var + eps)
    Xhat = (X - mu) * inv
    G = gamma.data
    out = Xhat * G + beta.data

    def grad_fn(g):
        dgamma = (g * Xhat).sum(axis=0, keepdims=True)
        dbeta = g.sum(axis=0, keepdims=True)
        gx = g * G
        if training:
            dx = inv * (gx - gx.mean(axis=0, keepdims=True)
                        - Xhat * (gx * Xhat).mean(axis=0, keepdims=True))
        else:
            dx = gx * inv
        return dx, dgamma, dbeta

    return _make(out, (x, gamma, beta), grad_fn, "batch_norm")
