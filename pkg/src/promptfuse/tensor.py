"""Minimal reverse-mode autodiff over 2-D numpy arrays.

Every value on the tape is a strictly two-dimensional float tensor. Ops build
a graph of `Tensor` nodes; `backward()` on a 1x1 scalar walks it in reverse
topological order and accumulates gradients into every node that requires
them. Block ops treat a (B*m) x n matrix as B stacked m x n blocks so a whole
batch can live in one node.

Training runs in float32 by default; the finite-difference harness
(`grad_check`) expects the probed graph to be built in float64.
"""

from __future__ import annotations

import math
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import DegenerateInputError, GradCheckError, ShapeError

DEFAULT_DTYPE = np.float32


def _as_2d(data, dtype) -> np.ndarray:
    arr = np.asarray(data)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    elif arr.ndim == 1:
        arr = arr.reshape(1, -1)
    elif arr.ndim != 2:
        raise ShapeError(f"tensors are 2-D; got array of shape {arr.shape}")
    if dtype is None:
        dtype = arr.dtype if arr.dtype in (np.float32, np.float64) else DEFAULT_DTYPE
    return np.ascontiguousarray(arr, dtype=dtype)


class Tensor:
    """A rows x cols float matrix participating in reverse-mode autodiff."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False, dtype=None,
                 _parents: tuple = (), _backward=None):
        self.data = _as_2d(data, dtype)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._parents = _parents
        self._backward = _backward

    @property
    def rows(self) -> int:
        return self.data.shape[0]

    @property
    def cols(self) -> int:
        return self.data.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item() needs a 1x1 tensor, got {self.shape}")
        return float(self.data[0, 0])

    def detach(self) -> "Tensor":
        """Copy of this value cut off from the tape."""
        return Tensor(self.data.copy())

    def accumulate_grad(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.array(g, dtype=self.data.dtype, copy=True)
        else:
            self.grad += g

    def backward(self) -> None:
        """Reverse-accumulate gradients from this scalar into the graph."""
        if self.data.size != 1:
            raise ShapeError(f"backward() starts from a 1x1 scalar, got {self.shape}")
        order: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if p.requires_grad and id(p) not in seen:
                    stack.append((p, False))
        self.accumulate_grad(np.ones_like(self.data))
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    # operator sugar; ops live at module level
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(_coerce(other, self), self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(self, other)

    def __truediv__(self, other):
        return div(self, other)

    def __matmul__(self, other):
        return matmul(self, other)

    def __neg__(self):
        return mul(self, -1.0)

    def __repr__(self):
        return f"Tensor(shape={self.shape}, dtype={self.data.dtype}, requires_grad={self.requires_grad})"


class Param(Tensor):
    """A named trainable tensor; `trainable=False` freezes it for the optimizer."""

    __slots__ = ("name", "trainable")

    def __init__(self, data, name: str = "", trainable: bool = True, dtype=None):
        super().__init__(data, requires_grad=trainable, dtype=dtype)
        self.name = name
        self.trainable = trainable

    def reset_grad(self) -> None:
        self.grad = np.zeros_like(self.data)


def _coerce(x, like: Tensor) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=like.dtype))


def _unbroadcast(g: np.ndarray, shape: tuple[int, int]) -> np.ndarray:
    """Sum out axes that numpy broadcasting expanded."""
    if g.shape == shape:
        return g
    out = g
    if shape[0] == 1 and g.shape[0] != 1:
        out = out.sum(axis=0, keepdims=True)
    if shape[1] == 1 and g.shape[1] != 1:
        out = out.sum(axis=1, keepdims=True)
    return out


def _make(data, parents: Sequence[Tensor], backward) -> Tensor:
    req = any(p.requires_grad for p in parents)
    return Tensor(data, requires_grad=req, dtype=data.dtype,
                  _parents=tuple(parents) if req else (),
                  _backward=backward if req else None)


def _binary(a, b, fwd, bwd_a, bwd_b) -> Tensor:
    if not isinstance(a, Tensor) and not isinstance(b, Tensor):
        raise TypeError("at least one operand must be a Tensor")
    if not isinstance(b, Tensor) and np.isscalar(b):
        out_data = fwd(a.data, b)

        def backward(g, a=a, b=b):
            if a.requires_grad:
                a.accumulate_grad(_unbroadcast(bwd_a(g, a.data, b), a.shape))

        return _make(out_data, (a,), backward)
    a = _coerce(a, b) if not isinstance(a, Tensor) else a
    b = _coerce(b, a)
    try:
        out_data = fwd(a.data, b.data)
    except ValueError as exc:
        raise ShapeError(f"operand shapes {a.shape} and {b.shape} do not broadcast") from exc

    def backward(g, a=a, b=b):
        if a.requires_grad:
            a.accumulate_grad(_unbroadcast(bwd_a(g, a.data, b.data), a.shape))
        if b.requires_grad:
            b.accumulate_grad(_unbroadcast(bwd_b(g, a.data, b.data), b.shape))

    return _make(out_data, (a, b), backward)


def add(a, b) -> Tensor:
    return _binary(a, b, lambda x, y: x + y,
                   lambda g, x, y: g,
                   lambda g, x, y: g)


def sub(a, b) -> Tensor:
    return _binary(a, b, lambda x, y: x - y,
                   lambda g, x, y: g,
                   lambda g, x, y: -g)


def mul(a, b) -> Tensor:
    return _binary(a, b, lambda x, y: x * y,
                   lambda g, x, y: g * y,
                   lambda g, x, y: g * x)


def div(a, b) -> Tensor:
    return _binary(a, b, lambda x, y: x / y,
                   lambda g, x, y: g / y,
                   lambda g, x, y: -g * x / (y * y))


def minimum(a: Tensor, b) -> Tensor:
    """Elementwise min; gradient follows the smaller operand (ties go to `a`)."""
    return _binary(a, b, np.minimum,
                   lambda g, x, y: g * (x <= y),
                   lambda g, x, y: g * (x > y))


def maximum(a: Tensor, b) -> Tensor:
    return _binary(a, b, np.maximum,
                   lambda g, x, y: g * (x >= y),
                   lambda g, x, y: g * (x < y))


def _unary(a: Tensor, out_data, dloc) -> Tensor:
    def backward(g, a=a):
        a.accumulate_grad(g * dloc)

    return _make(out_data, (a,), backward)


def exp(a: Tensor) -> Tensor:
    out = np.exp(a.data)
    return _unary(a, out, out)


def log(a: Tensor) -> Tensor:
    return _unary(a, np.log(a.data), 1.0 / a.data)


def sqrt(a: Tensor) -> Tensor:
    out = np.sqrt(a.data)
    return _unary(a, out, 0.5 / np.maximum(out, 1e-30))


def square(a: Tensor) -> Tensor:
    return _unary(a, a.data * a.data, 2.0 * a.data)


def tanh(a: Tensor) -> Tensor:
    out = np.tanh(a.data)
    return _unary(a, out, 1.0 - out * out)


_GELU_C = math.sqrt(2.0 / math.pi)


def gelu(a: Tensor) -> Tensor:
    """Smooth gelu (tanh form); the local derivative is computed lazily."""
    x = a.data
    t = np.tanh(_GELU_C * (x + 0.044715 * x * x * x))
    out = 0.5 * x * (1.0 + t)

    def backward(g, a=a, x=x, t=t):
        dloc = 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * _GELU_C * (1.0 + 0.134145 * x * x)
        a.accumulate_grad(g * dloc)

    return _make(out, (a,), backward)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.cols != b.rows:
        raise ShapeError(f"matmul inner dims differ: {a.shape} x {b.shape}")
    out = a.data @ b.data

    def backward(g, a=a, b=b):
        if a.requires_grad:
            a.accumulate_grad(g @ b.data.T)
        if b.requires_grad:
            b.accumulate_grad(a.data.T @ g)

    return _make(out, (a, b), backward)


def transpose(a: Tensor) -> Tensor:
    def backward(g, a=a):
        a.accumulate_grad(g.T)

    return _make(np.ascontiguousarray(a.data.T), (a,), backward)


def concat_rows(parts: Sequence[Tensor]) -> Tensor:
    cols = parts[0].cols
    for p in parts:
        if p.cols != cols:
            raise ShapeError(f"concat_rows needs equal widths, got {[p.shape for p in parts]}")
    out = np.concatenate([p.data for p in parts], axis=0)
    offsets = np.cumsum([0] + [p.rows for p in parts])

    def backward(g, parts=tuple(parts), offsets=offsets):
        for p, i0, i1 in zip(parts, offsets[:-1], offsets[1:]):
            if p.requires_grad:
                p.accumulate_grad(g[i0:i1])

    return _make(out, parts, backward)


def concat_cols(parts: Sequence[Tensor]) -> Tensor:
    rows = parts[0].rows
    for p in parts:
        if p.rows != rows:
            raise ShapeError(f"concat_cols needs equal heights, got {[p.shape for p in parts]}")
    out = np.concatenate([p.data for p in parts], axis=1)
    offsets = np.cumsum([0] + [p.cols for p in parts])

    def backward(g, parts=tuple(parts), offsets=offsets):
        for p, j0, j1 in zip(parts, offsets[:-1], offsets[1:]):
            if p.requires_grad:
                p.accumulate_grad(g[:, j0:j1])

    return _make(out, parts, backward)


def gather_rows(a: Tensor, idx) -> Tensor:
    """Row lookup `out[i] = a[idx[i]]`; backward scatter-adds (embedding-style)."""
    idx = np.asarray(idx, dtype=np.int64).reshape(-1)
    if idx.size and (idx.min() < 0 or idx.max() >= a.rows):
        raise ShapeError(f"gather index out of range for {a.rows} rows")
    out = a.data[idx]

    def backward(g, a=a, idx=idx):
        acc = np.zeros_like(a.data)
        np.add.at(acc, idx, g)
        a.accumulate_grad(acc)

    return _make(out, (a,), backward)


def slice_rows(a: Tensor, i0: int, i1: int) -> Tensor:
    out = a.data[i0:i1].copy()

    def backward(g, a=a, i0=i0, i1=i1):
        acc = np.zeros_like(a.data)
        acc[i0:i1] = g
        a.accumulate_grad(acc)

    return _make(out, (a,), backward)


def slice_cols(a: Tensor, j0: int, j1: int) -> Tensor:
    out = a.data[:, j0:j1].copy()

    def backward(g, a=a, j0=j0, j1=j1):
        acc = np.zeros_like(a.data)
        acc[:, j0:j1] = g
        a.accumulate_grad(acc)

    return _make(out, (a,), backward)


def sum_all(a: Tensor) -> Tensor:
    def backward(g, a=a):
        a.accumulate_grad(np.full_like(a.data, g[0, 0]))

    return _make(a.data.sum(keepdims=True).reshape(1, 1), (a,), backward)


def mean_all(a: Tensor) -> Tensor:
    n = a.data.size

    def backward(g, a=a, n=n):
        a.accumulate_grad(np.full_like(a.data, g[0, 0] / n))

    return _make(a.data.mean(keepdims=True).reshape(1, 1), (a,), backward)


def row_sum(a: Tensor) -> Tensor:
    def backward(g, a=a):
        a.accumulate_grad(np.broadcast_to(g, a.shape).copy())

    return _make(a.data.sum(axis=1, keepdims=True), (a,), backward)


def row_norm(a: Tensor) -> Tensor:
    """Per-row L2 norm as an m x 1 column."""
    out = np.sqrt((a.data * a.data).sum(axis=1, keepdims=True))

    def backward(g, a=a, out=out):
        a.accumulate_grad(g * a.data / np.maximum(out, 1e-30))

    return _make(out, (a,), backward)


def softmax_rows(a: Tensor, mask: np.ndarray | None = None) -> Tensor:
    """Row softmax with max-subtraction; masked entries get weight exactly 0.

    `mask` is a constant 0/1 array broadcastable to `a`; rows with no valid
    entry come out all-zero.
    """
    x = a.data
    if mask is None:
        m = x.max(axis=1, keepdims=True)
        e = np.exp(x - m)
    else:
        mask = np.broadcast_to(np.asarray(mask, dtype=bool), x.shape)
        neg = np.where(mask, x, -np.inf)
        m = neg.max(axis=1, keepdims=True)
        m = np.where(np.isfinite(m), m, 0.0)
        # clip before exp: np.where evaluates the masked-out branch too
        e = np.where(mask, np.exp(np.minimum(x - m, 0.0)), 0.0)
    s = e.sum(axis=1, keepdims=True)
    y = e / np.where(s == 0.0, 1.0, s)

    def backward(g, a=a, y=y):
        dot = (g * y).sum(axis=1, keepdims=True)
        a.accumulate_grad(y * (g - dot))

    return _make(y.astype(x.dtype), (a,), backward)


def logsumexp_rows(a: Tensor, mask: np.ndarray | None = None) -> Tensor:
    """Per-row log-sum-exp (m x 1), optionally over masked-in entries only."""
    x = a.data
    if mask is None:
        mask = np.ones_like(x, dtype=bool)
    else:
        mask = np.broadcast_to(np.asarray(mask, dtype=bool), x.shape)
    if not mask.any(axis=1).all():
        raise DegenerateInputError("logsumexp row with no valid entries")
    neg = np.where(mask, x, -np.inf)
    m = neg.max(axis=1, keepdims=True)
    e = np.where(mask, np.exp(np.minimum(x - m, 0.0)), 0.0)
    s = e.sum(axis=1, keepdims=True)
    out = m + np.log(s)
    soft = e / s

    def backward(g, a=a, soft=soft):
        a.accumulate_grad(g * soft)

    return _make(out.astype(x.dtype), (a,), backward)


def layer_norm_rows(a: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-5) -> Tensor:
    """Row-wise layer norm followed by the affine `gamma * xhat + beta`."""
    if gamma.shape != (1, a.cols) or beta.shape != (1, a.cols):
        raise ShapeError(f"layer_norm affine params must be 1x{a.cols}, "
                         f"got {gamma.shape} and {beta.shape}")
    x = a.data
    mu = x.mean(axis=1, keepdims=True)
    xc = x - mu
    var = (xc * xc).mean(axis=1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    out = xhat * gamma.data + beta.data

    def backward(g, a=a, gamma=gamma, beta=beta, xhat=xhat, inv=inv):
        if beta.requires_grad:
            beta.accumulate_grad(g.sum(axis=0, keepdims=True))
        if gamma.requires_grad:
            gamma.accumulate_grad((g * xhat).sum(axis=0, keepdims=True))
        if a.requires_grad:
            gx = g * gamma.data
            m1 = gx.mean(axis=1, keepdims=True)
            m2 = (gx * xhat).mean(axis=1, keepdims=True)
            a.accumulate_grad(inv * (gx - m1 - xhat * m2))

    return _make(out.astype(x.dtype), (a, gamma, beta), backward)


def tile_rows(a: Tensor, reps: int) -> Tensor:
    """Stack `reps` copies of the whole matrix; backward sums the copies."""
    out = np.tile(a.data, (reps, 1))

    def backward(g, a=a, reps=reps):
        a.accumulate_grad(g.reshape(reps, a.rows, a.cols).sum(axis=0))

    return _make(out, (a,), backward)


def repeat_rows(a: Tensor, reps: int) -> Tensor:
    """Repeat each row `reps` times in place (row i -> rows i*reps..)."""
    out = np.repeat(a.data, reps, axis=0)

    def backward(g, a=a, reps=reps):
        a.accumulate_grad(g.reshape(a.rows, reps, a.cols).sum(axis=1))

    return _make(out, (a,), backward)


def _blocks(t: Tensor, blocks: int) -> tuple[int, int]:
    if t.rows % blocks:
        raise ShapeError(f"{t.rows} rows do not split into {blocks} equal blocks")
    return t.rows // blocks, t.cols


def block_matmul(a: Tensor, b: Tensor, blocks: int, transpose_b: bool = False) -> Tensor:
    """Per-block product of two stacked matrices.

    a is B stacked m x k blocks; b is B stacked (k x n) blocks, or (n x k)
    with `transpose_b`. Output stacks the B (m x n) products.
    """
    m, k = _blocks(a, blocks)
    rb, cb = _blocks(b, blocks)
    a3 = a.data.reshape(blocks, m, k)
    b3 = b.data.reshape(blocks, rb, cb)
    if transpose_b:
        if cb != k:
            raise ShapeError(f"block_matmul(T) inner dims differ: {a.shape} x {b.shape}")
        out3 = np.einsum("bmk,bnk->bmn", a3, b3)
    else:
        if rb != k:
            raise ShapeError(f"block_matmul inner dims differ: {a.shape} x {b.shape}")
        out3 = np.einsum("bmk,bkn->bmn", a3, b3)
    n = out3.shape[2]

    def backward(g, a=a, b=b, a3=a3, b3=b3):
        g3 = g.reshape(blocks, m, n)
        if transpose_b:
            if a.requires_grad:
                a.accumulate_grad(np.einsum("bmn,bnk->bmk", g3, b3).reshape(a.shape))
            if b.requires_grad:
                b.accumulate_grad(np.einsum("bmn,bmk->bnk", g3, a3).reshape(b.shape))
        else:
            if a.requires_grad:
                a.accumulate_grad(np.einsum("bmn,bkn->bmk", g3, b3).reshape(a.shape))
            if b.requires_grad:
                b.accumulate_grad(np.einsum("bmk,bmn->bkn", a3, g3).reshape(b.shape))

    return _make(out3.reshape(blocks * m, n), (a, b), backward)


def block_transpose(a: Tensor, blocks: int) -> Tensor:
    m, n = _blocks(a, blocks)
    out = a.data.reshape(blocks, m, n).transpose(0, 2, 1).reshape(blocks * n, m)

    def backward(g, a=a):
        a.accumulate_grad(g.reshape(blocks, n, m).transpose(0, 2, 1).reshape(a.shape))

    return _make(out, (a,), backward)


def block_sum_rows(a: Tensor, blocks: int) -> Tensor:
    """Sum rows within each block -> blocks x cols."""
    m, n = _blocks(a, blocks)

    def backward(g, a=a, m=m):
        a.accumulate_grad(np.repeat(g, m, axis=0))

    return _make(a.data.reshape(blocks, m, n).sum(axis=1), (a,), backward)


def block_max(a: Tensor, blocks: int) -> Tensor:
    """Column-wise max within each block -> blocks x cols; grad to the argmax."""
    m, n = _blocks(a, blocks)
    a3 = a.data.reshape(blocks, m, n)
    arg = a3.argmax(axis=1)
    out = np.take_along_axis(a3, arg[:, None, :], axis=1)[:, 0, :]

    def backward(g, a=a, arg=arg, m=m, n=n):
        acc3 = np.zeros((blocks, m, n), dtype=a.data.dtype)
        np.put_along_axis(acc3, arg[:, None, :], g[:, None, :], axis=1)
        a.accumulate_grad(acc3.reshape(a.shape))

    return _make(out, (a,), backward)


def grad_check(f: Callable[[], Tensor], params: Iterable[Param],
               n_coords: int = 20, h: float = 1e-5, rng=None) -> float:
    """Max relative error between analytic and central-difference gradients.

    `f` rebuilds the scalar loss from scratch on every call (the probed
    parameters are mutated in place around each evaluation). Relative error
    per coordinate is |analytic - central| / (|analytic| + |central| + 1e-12).
    """
    params = [p for p in params if p.trainable]
    if not params:
        raise ValueError("grad_check needs at least one trainable parameter")
    rng = np.random.default_rng(0) if rng is None else rng

    loss = f()
    if not np.isfinite(loss.data).all():
        raise GradCheckError(f"objective not finite at probe point: {loss.data}")
    for p in params:
        p.reset_grad()
    loss.backward()
    analytic = [p.grad.copy() for p in params]

    sizes = np.array([p.data.size for p in params])
    picks = rng.integers(0, sizes.sum(), size=n_coords)
    worst = 0.0
    for flat in picks:
        pi = int(np.searchsorted(np.cumsum(sizes), flat, side="right"))
        offset = int(flat - np.concatenate(([0], np.cumsum(sizes)))[pi])
        i, j = divmod(offset, params[pi].data.shape[1])
        p = params[pi]
        keep = p.data[i, j]
        p.data[i, j] = keep + h
        f_plus = f().item()
        p.data[i, j] = keep - h
        f_minus = f().item()
        p.data[i, j] = keep
        if not (math.isfinite(f_plus) and math.isfinite(f_minus)):
            raise GradCheckError(f"objective not finite near probe point ({f_plus}, {f_minus})")
        central = (f_plus - f_minus) / (2.0 * h)
        ana = float(analytic[pi][i, j])
        err = abs(ana - central) / (abs(ana) + abs(central) + 1e-12)
        worst = max(worst, err)
    return worst


def init_uniform(rng: np.random.Generator, rows: int, cols: int,
                 fan_in: int | None = None, dtype=DEFAULT_DTYPE) -> np.ndarray:
    """Uniform init scaled by 1/sqrt(fan_in); keeps early activations O(1)."""
    fan = fan_in if fan_in is not None else rows
    bound = 1.0 / math.sqrt(max(fan, 1))
    return rng.uniform(-bound, bound, size=(rows, cols)).astype(dtype)
