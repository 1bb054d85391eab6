"""Dense float64 tensors with a reverse-mode gradient tape, plus Adam.

Every forward quantity in the pipeline is a :class:`Tensor`. Ops record
their parents and a backward closure on the tensor they return; calling
:func:`backward` on a scalar loss walks the tape in reverse topological
order and accumulates exact gradients into the ``grad`` buffers of all
``requires_grad`` ancestors.

Arrays are float64 throughout. A tape belongs to one thread; frozen
(no-grad) tensors may be shared freely between readers.
"""

from __future__ import annotations

import math
from contextlib import contextmanager
from dataclasses import dataclass, field

import numpy as np


class NumericsError(Exception):
    """Raised on invalid numeric usage (non-scalar backward, missing grads)."""


class ShapeError(NumericsError):
    """Raised when operand shapes are incompatible; names both shapes."""


_grad_enabled = True


@contextmanager
def no_grad():
    """Disable tape construction inside the block (inference fast path)."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


def grad_enabled() -> bool:
    return _grad_enabled


class Tensor:
    """A dense float64 array plus optional gradient buffer and tape node.

    Invariants: ``grad`` is a same-shape buffer iff ``requires_grad`` is
    set; ``data.size`` equals the product of the extents.
    """

    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.grad = np.zeros_like(self.data) if requires_grad else None
        self._parents: tuple = ()
        self._backward = None

    @property
    def shape(self):
        return self.data.shape

    def item(self) -> float:
        if self.data.size != 1:
            raise NumericsError(f"item() on tensor of shape {self.data.shape}")
        return float(self.data.reshape(()))

    def zero_grad(self) -> None:
        if self.grad is not None:
            self.grad[...] = 0.0

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"


def _result(data: np.ndarray, parents, backward) -> Tensor:
    """Wrap an op output, attaching the tape node when grads are on."""
    out = Tensor(data)
    if _grad_enabled and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out.grad = np.zeros_like(out.data)
        out._parents = tuple(parents)
        out._backward = backward
    return out


def backward(loss: Tensor) -> None:
    """Reverse-mode sweep from a scalar loss.

    Gradients ACCUMULATE into existing buffers, so a caller may sum
    several losses' gradients before an optimizer step.
    """
    if loss.data.ndim != 0:
        raise NumericsError(f"backward() needs a scalar loss, got shape {loss.data.shape}")
    if not loss.requires_grad:
        return

    # Iterative topological sort; decode chains can exceed the default
    # recursion limit.
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(loss, False)]
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
            if id(p) not in seen and p.requires_grad:
                stack.append((p, False))

    loss.grad[...] = 1.0
    for node in reversed(order):
        if node._backward is None:
            continue
        grads = node._backward(node.grad)
        for parent, g in zip(node._parents, grads):
            if parent.requires_grad and g is not None:
                parent.grad += g


# ---------------------------------------------------------------------------
# core ops
# ---------------------------------------------------------------------------

def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum a broadcast gradient back down to the operand's shape."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, extent in enumerate(shape):
        if extent == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def add(a: Tensor, b: Tensor) -> Tensor:
    try:
        np.broadcast_shapes(a.data.shape, b.data.shape)
    except ValueError:
        raise ShapeError(f"add: incompatible shapes {a.data.shape} vs {b.data.shape}")
    out = a.data + b.data

    def bwd(g):
        return _unbroadcast(g, a.data.shape), _unbroadcast(g, b.data.shape)

    return _result(out, (a, b), bwd)


def sub(a: Tensor, b: Tensor) -> Tensor:
    return add(a, scale(b, -1.0))


def scale(a: Tensor, s: float) -> Tensor:
    s = float(s)
    return _result(a.data * s, (a,), lambda g: (g * s,))


def mul(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise product (same shapes or broadcastable)."""
    try:
        np.broadcast_shapes(a.data.shape, b.data.shape)
    except ValueError:
        raise ShapeError(f"mul: incompatible shapes {a.data.shape} vs {b.data.shape}")
    ad, bd = a.data, b.data

    def bwd(g):
        return _unbroadcast(g * bd, ad.shape), _unbroadcast(g * ad, bd.shape)

    return _result(ad * bd, (a, b), bwd)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2 or a.data.shape[1] != b.data.shape[0]:
        raise ShapeError(f"matmul: incompatible shapes {a.data.shape} vs {b.data.shape}")
    ad, bd = a.data, b.data

    def bwd(g):
        return g @ bd.T, ad.T @ g

    return _result(ad @ bd, (a, b), bwd)


def transpose(a: Tensor) -> Tensor:
    if a.data.ndim != 2:
        raise ShapeError(f"transpose: needs a matrix, got shape {a.data.shape}")
    return _result(a.data.T.copy(), (a,), lambda g: (g.T,))


def concat(tensors, axis: int = 0) -> Tensor:
    tensors = list(tensors)
    if not tensors:
        raise ShapeError("concat: empty input")
    sizes = [t.data.shape[axis] for t in tensors]
    try:
        out = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError:
        raise ShapeError(f"concat: incompatible shapes {[t.data.shape for t in tensors]}")

    def bwd(g):
        pieces = []
        start = 0
        for size in sizes:
            key = [slice(None)] * g.ndim
            key[axis] = slice(start, start + size)
            pieces.append(g[tuple(key)])
            start += size
        return tuple(pieces)

    return _result(out, tuple(tensors), bwd)


def rows(a: Tensor, start: int, stop: int) -> Tensor:
    """Slice rows [start:stop) of a matrix."""
    if a.data.ndim != 2:
        raise ShapeError(f"rows: needs a matrix, got shape {a.data.shape}")
    sl = slice(start, stop)

    def bwd(g):
        full = np.zeros_like(a.data)
        full[sl] = g
        return (full,)

    return _result(a.data[sl].copy(), (a,), bwd)


def cols(a: Tensor, start: int, stop: int) -> Tensor:
    """Slice columns [start:stop) of a matrix."""
    if a.data.ndim != 2:
        raise ShapeError(f"cols: needs a matrix, got shape {a.data.shape}")
    sl = slice(start, stop)

    def bwd(g):
        full = np.zeros_like(a.data)
        full[:, sl] = g
        return (full,)

    return _result(a.data[:, sl].copy(), (a,), bwd)


def embedding_lookup(table: Tensor, ids) -> Tensor:
    ids = np.asarray(ids, dtype=np.int64)
    if table.data.ndim != 2:
        raise ShapeError(f"embedding_lookup: table must be 2-d, got {table.data.shape}")
    if ids.ndim != 1:
        raise ShapeError(f"embedding_lookup: ids must be 1-d, got {ids.shape}")
    if ids.size and (ids.min() < 0 or ids.max() >= table.data.shape[0]):
        raise NumericsError(
            f"embedding_lookup: id out of range for table of {table.data.shape[0]} rows"
        )

    def bwd(g):
        gt = np.zeros_like(table.data)
        np.add.at(gt, ids, g)
        return (gt,)

    return _result(table.data[ids], (table,), bwd)


def softmax(a: Tensor) -> Tensor:
    """Row-wise softmax over the last axis of a matrix.

    Rows may contain -inf entries (from masking); the max shift is taken
    after masking so masked positions contribute exact zeros. A fully
    masked row is rejected.
    """
    if a.data.ndim != 2:
        raise ShapeError(f"softmax: needs a matrix, got shape {a.data.shape}")
    m = a.data.max(axis=1, keepdims=True)
    if not np.all(np.isfinite(m)):
        raise NumericsError("softmax: a row has no finite entry (fully masked)")
    e = np.exp(a.data - m)
    s = e / e.sum(axis=1, keepdims=True)

    def bwd(g):
        dot = (g * s).sum(axis=1, keepdims=True)
        return ((g - dot) * s,)

    return _result(s, (a,), bwd)


def sigmoid(a: Tensor) -> Tensor:
    x = a.data
    out = np.where(x >= 0, 1.0 / (1.0 + np.exp(-np.abs(x))),
                   np.exp(-np.abs(x)) / (1.0 + np.exp(-np.abs(x))))

    def bwd(g):
        return (g * out * (1.0 - out),)

    return _result(out, (a,), bwd)


def tanh(a: Tensor) -> Tensor:
    out = np.tanh(a.data)
    return _result(out, (a,), lambda g: (g * (1.0 - out * out),))


def relu(a: Tensor) -> Tensor:
    out = np.maximum(a.data, 0.0)
    mask = a.data > 0.0
    return _result(out, (a,), lambda g: (g * mask,))


def layer_norm(a: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    """Row-wise layer normalization with learned gain and bias.

    A constant row normalizes to zeros before gain/bias (epsilon keeps the
    zero-variance case finite).
    """
    if a.data.ndim != 2:
        raise ShapeError(f"layer_norm: needs a matrix, got shape {a.data.shape}")
    d = a.data.shape[1]
    if gain.data.shape != (d,) or bias.data.shape != (d,):
        raise ShapeError(
            f"layer_norm: gain/bias shapes {gain.data.shape}/{bias.data.shape} "
            f"do not match row width ({d},)"
        )
    mu = a.data.mean(axis=1, keepdims=True)
    xc = a.data - mu
    var = (xc * xc).mean(axis=1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    out = xhat * gain.data + bias.data

    def bwd(g):
        dxhat = g * gain.data
        dvar = (dxhat * xc).sum(axis=1, keepdims=True) * (-0.5) * inv ** 3
        dmu = (-dxhat * inv).sum(axis=1, keepdims=True) + dvar * (-2.0 * xc).mean(
            axis=1, keepdims=True
        )
        da = dxhat * inv + dvar * 2.0 * xc / d + dmu / d
        dgain = (g * xhat).sum(axis=0)
        dbias = g.sum(axis=0)
        return da, dgain, dbias

    return _result(out, (a, gain, bias), bwd)


def masked_fill(a: Tensor, mask: np.ndarray, value: float) -> Tensor:
    """Replace entries where ``mask`` is True with ``value`` (no gradient there)."""
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != a.data.shape:
        raise ShapeError(f"masked_fill: mask shape {mask.shape} vs data {a.data.shape}")
    out = np.where(mask, value, a.data)
    keep = ~mask
    return _result(out, (a,), lambda g: (g * keep,))


def tsum(a: Tensor) -> Tensor:
    """Sum of all entries, as a scalar tensor."""
    return _result(np.asarray(a.data.sum()), (a,), lambda g: (np.full_like(a.data, float(g)),))


def tmean(a: Tensor) -> Tensor:
    """Mean of all entries, as a scalar tensor."""
    n = a.data.size
    if n == 0:
        raise ShapeError("mean: empty tensor")
    return _result(
        np.asarray(a.data.mean()), (a,), lambda g: (np.full_like(a.data, float(g) / n),)
    )


def cross_entropy_from_logits(logits: Tensor, targets) -> Tensor:
    """Per-row negative log-likelihood of integer targets, shape (n,).

    Gradient of the mean of this vector w.r.t. logits is the classic
    (softmax - onehot) / n.
    """
    targets = np.asarray(targets, dtype=np.int64)
    if logits.data.ndim != 2:
        raise ShapeError(f"cross_entropy: logits must be 2-d, got {logits.data.shape}")
    n, v = logits.data.shape
    if targets.shape != (n,):
        raise ShapeError(f"cross_entropy: targets shape {targets.shape} vs logits {logits.data.shape}")
    if targets.size and (targets.min() < 0 or targets.max() >= v):
        raise NumericsError(f"cross_entropy: target id out of range for {v} classes")
    m = logits.data.max(axis=1, keepdims=True)
    e = np.exp(logits.data - m)
    z = e.sum(axis=1, keepdims=True)
    p = e / z
    nll = np.log(z).reshape(n) + m.reshape(n) - logits.data[np.arange(n), targets]

    def bwd(g):
        dl = p * g.reshape(n, 1)
        dl[np.arange(n), targets] -= g
        return (dl,)

    return _result(nll, (logits,), bwd)


def binary_cross_entropy(probs: Tensor, targets) -> Tensor:
    """Summed BCE of probabilities against a binary target vector.

    Log arguments are clamped at 1e-12: float64 sigmoid saturates to exact
    0/1 beyond |x| ~ 36, and the clamp keeps the loss finite there (the
    local gradient in the clamped region is zero).
    """
    targets = np.asarray(targets, dtype=np.float64)
    if targets.shape != probs.data.shape:
        raise ShapeError(f"bce: targets shape {targets.shape} vs probs {probs.data.shape}")
    lo = 1e-12
    p = np.clip(probs.data, lo, 1.0 - lo)
    loss = -(targets * np.log(p) + (1.0 - targets) * np.log1p(-p)).sum()
    interior = (probs.data > lo) & (probs.data < 1.0 - lo)

    def bwd(g):
        dp = (p - targets) / (p * (1.0 - p)) * interior
        return (dp * float(g),)

    return _result(np.asarray(loss), (probs,), bwd)


# ---------------------------------------------------------------------------
# parameters and the optimizer
# ---------------------------------------------------------------------------

@dataclass
class Parameter:
    """A named learnable tensor with its Adam state."""

    name: str
    tensor: Tensor
    m: np.ndarray = field(init=False)
    v: np.ndarray = field(init=False)
    step: int = field(init=False, default=0)

    def __post_init__(self):
        if not self.tensor.requires_grad:
            raise NumericsError(f"parameter {self.name!r} must require grad")
        self.m = np.zeros_like(self.tensor.data)
        self.v = np.zeros_like(self.tensor.data)


def adam_step(params, lr: float = 1e-3, beta1: float = 0.9, beta2: float = 0.999,
              eps: float = 1e-8) -> None:
    """One Adam update with bias correction; gradient buffers are cleared."""
    params = list(params)
    for p in params:
        if p.tensor.grad is None:
            raise NumericsError(f"adam_step: parameter {p.name!r} has no gradient buffer")
    for p in params:
        g = p.tensor.grad
        p.step += 1
        p.m = beta1 * p.m + (1.0 - beta1) * g
        p.v = beta2 * p.v + (1.0 - beta2) * (g * g)
        mhat = p.m / (1.0 - beta1 ** p.step)
        vhat = p.v / (1.0 - beta2 ** p.step)
        p.tensor.data -= lr * mhat / (np.sqrt(vhat) + eps)
        p.tensor.grad[...] = 0.0


def zero_grads(params) -> None:
    for p in params:
        p.tensor.zero_grad()


# ---------------------------------------------------------------------------
# initialization
# ---------------------------------------------------------------------------

def init_linear(rng: np.random.Generator, fan_in: int, shape) -> np.ndarray:
    """Uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)) weight initialization."""
    bound = 1.0 / math.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


def init_embedding(rng: np.random.Generator, shape) -> np.ndarray:
    return rng.normal(0.0, 0.02, size=shape)


# ---------------------------------------------------------------------------
# finite-difference gradient oracle
# ---------------------------------------------------------------------------

@dataclass
class GradCheckReport:
    """Per-parameter max relative error of analytic vs central differences."""

    h: float
    tol: float
    per_param: dict
    checked_coords: dict

    @property
    def max_rel_error(self) -> float:
        return max(self.per_param.values()) if self.per_param else 0.0

    @property
    def passed(self) -> bool:
        return self.max_rel_error <= self.tol

    def __str__(self):
        lines = [f"gradient check: h={self.h:g} tol={self.tol:g}"]
        for name in sorted(self.per_param):
            status = "ok" if self.per_param[name] <= self.tol else "FAIL"
            lines.append(
                f"  {name:<28s} max_rel_err={self.per_param[name]:.3e} "
                f"({self.checked_coords[name]} coords) {status}"
            )
        lines.append(f"  overall max_rel_err={self.max_rel_error:.3e} "
                     f"{'PASS' if self.passed else 'FAIL'}")
        return "\n".join(lines)


def check_gradients(closure, params, h: float = 1e-5, tol: float = 1e-3,
                    max_coords_per_param: int = 16,
                    rng: np.random.Generator | None = None) -> GradCheckReport:
    """Compare tape gradients of ``closure()`` against central differences.

    ``closure`` must rebuild the forward pass from the current parameter
    values and return the scalar loss tensor. Large parameters are probed
    at ``max_coords_per_param`` sampled coordinates; small ones fully.
    """
    params = list(params)
    rng = rng if rng is not None else np.random.default_rng(0)

    zero_grads(params)
    loss = closure()
    backward(loss)
    analytic = {p.name: p.tensor.grad.copy() for p in params}
    zero_grads(params)

    per_param = {}
    checked = {}
    for p in params:
        flat = p.tensor.data.reshape(-1)
        size = flat.size
        if size <= max_coords_per_param:
            coords = np.arange(size)
        else:
            coords = rng.choice(size, size=max_coords_per_param, replace=False)
        worst = 0.0
        a_flat = analytic[p.name].reshape(-1)
        for c in coords:
            keep = flat[c]
            flat[c] = keep + h
            with no_grad():
                f_plus = closure().item()
            flat[c] = keep - h
            with no_grad():
                f_minus = closure().item()
            flat[c] = keep
            fd = (f_plus - f_minus) / (2.0 * h)
            a = a_flat[c]
            rel = abs(a - fd) / max(abs(a), abs(fd), 1e-6)
            worst = max(worst, rel)
        per_param[p.name] = worst
        checked[p.name] = len(coords)
    return GradCheckReport(h=h, tol=tol, per_param=per_param, checked_coords=checked)


def sinusoidal_positions(length: int, dim: int) -> np.ndarray:
    """Fixed sin/cos position table of shape (length, dim)."""
    pos = np.arange(length, dtype=np.float64).reshape(-1, 1)
    i = np.arange(dim, dtype=np.float64).reshape(1, -1)
    angle = pos / np.power(10000.0, (2.0 * np.floor(i / 2.0)) / dim)
    table = np.empty((length, dim), dtype=np.float64)
    table[:, 0::2] = np.sin(angle[:, 0::2])
    table[:, 1::2] = np.cos(angle[:, 1::2])
    return table
