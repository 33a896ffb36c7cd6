"""Minimal dense tensor type with reverse-mode automatic differentiation.

Everything is double precision and row-major. Operations record onto the
currently active :class:`Tape`; :func:`backward` replays the tape in reverse
and accumulates gradients additively. There is no broadcasting beyond
scalar*tensor, which keeps every backward rule short enough to audit.
"""

from __future__ import annotations

import numpy as np


class ShapeError(ValueError):
    """Raised when operand shapes are incompatible."""


class Tensor:
    """Dense array with an optional gradient slot.

    ``requires_grad`` is true for trainable leaves and for any value computed
    from one; ``grad`` is populated by :func:`backward` and holds the
    accumulated partial derivative of the loss.
    """

    __slots__ = ("values", "grad", "requires_grad")

    def __init__(self, values, requires_grad=False):
        self.values = np.asarray(values, dtype=np.float64)
        self.requires_grad = requires_grad
        self.grad = None

    @property
    def shape(self):
        return self.values.shape

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        return f"Tensor(shape={self.values.shape}, requires_grad={self.requires_grad})"


class Tape:
    """Ordered record of operations for one forward computation.

    Nodes are appended in execution order, so the list is topologically
    sorted by construction; a backward pass visits each node exactly once in
    reverse. Use as a context manager around the forward pass.
    """

    _active = None

    def __init__(self):
        self.nodes = []

    def __enter__(self):
        self._outer = Tape._active
        Tape._active = self
        return self

    def __exit__(self, exc_type, exc, tb):
        Tape._active = self._outer
        return False

    @staticmethod
    def active():
        return Tape._active


def _make(values, inputs, backward_fn):
    """Build an op output, recording it when a tape is active."""
    requires = False
    for t in inputs:
        if t.requires_grad:
            requires = True
            break
    out = Tensor(values, requires_grad=requires)
    tape = Tape.active()
    if tape is not None and requires:
        tape.nodes.append((out, inputs, backward_fn))
    return out


def _accumulate(t, g):
    if t.grad is None:
        t.grad = np.array(g, copy=True)
    else:
        t.grad += g


def backward(loss, tape):
    """Populate grads of every requires_grad tensor reachable from ``loss``."""
    if loss.values.shape != ():
        raise ShapeError(f"loss must be scalar, got shape {loss.values.shape}")
    _accumulate(loss, np.ones(()))
    for out, inputs, backward_fn in reversed(tape.nodes):
        g = out.grad
        if g is None:
            continue
        for inp, gi in zip(inputs, backward_fn(g)):
            if gi is not None and inp.requires_grad:
                _accumulate(inp, gi)


# ---------------------------------------------------------------------------
# primitive operations


def matmul(a, b):
    """Matrix product; ``b`` may be a matrix or a vector."""
    av, bv = a.values, b.values
    if av.ndim != 2 or bv.ndim not in (1, 2) or av.shape[1] != bv.shape[0]:
        raise ShapeError(f"matmul shape mismatch: {av.shape} vs {bv.shape}")

    def backward_fn(g):
        if bv.ndim == 1:
            return g[:, None] * bv, av.T @ g
        return g @ bv.T, av.T @ g

    return _make(av @ bv, (a, b), backward_fn)


def add(a, b):
    if a.values.shape != b.values.shape:
        raise ShapeError(f"add shape mismatch: {a.values.shape} vs {b.values.shape}")
    return _make(a.values + b.values, (a, b), lambda g: (g, g))


def mul(a, b):
    """Elementwise (Hadamard) product."""
    if a.values.shape != b.values.shape:
        raise ShapeError(f"mul shape mismatch: {a.values.shape} vs {b.values.shape}")
    av, bv = a.values, b.values
    return _make(av * bv, (a, b), lambda g: (g * bv, g * av))


def scale_shift(a, scale=1.0, shift=0.0):
    """scale * a + shift with scalar constants."""
    return _make(scale * a.values + shift, (a,), lambda g: (scale * g,))


def sigmoid(a):
    x = a.values
    e = np.exp(-np.abs(x))
    out = np.where(x >= 0, 1.0, e) / (1.0 + e)
    return _make(out, (a,), lambda g: (g * out * (1.0 - out),))


def tanh(a):
    out = np.tanh(a.values)
    return _make(out, (a,), lambda g: (g * (1.0 - out * out),))


def concat(tensors):
    """Concatenate 1-D tensors."""
    sizes = [t.values.shape[0] for t in tensors]
    bounds = np.cumsum([0] + sizes)

    def backward_fn(g):
        return tuple(g[bounds[i]:bounds[i + 1]] for i in range(len(tensors)))

    return _make(np.concatenate([t.values for t in tensors]), tuple(tensors), backward_fn)


def slice_vec(a, start, stop):
    """Contiguous slice of a 1-D tensor."""
    n = a.values.shape[0]

    def backward_fn(g):
        full = np.zeros(n)
        full[start:stop] = g
        return (full,)

    return _make(a.values[start:stop].copy(), (a,), backward_fn)


def stack(tensors):
    """Stack K same-length vectors into a (K, D) matrix."""
    def backward_fn(g):
        return tuple(g[k] for k in range(len(tensors)))

    return _make(np.stack([t.values for t in tensors]), tuple(tensors), backward_fn)


def row(a, k):
    """Select row k of a matrix as a vector."""
    shape = a.values.shape

    def backward_fn(g):
        full = np.zeros(shape)
        full[k] = g
        return (full,)

    return _make(a.values[k].copy(), (a,), backward_fn)


def softmax(a):
    """Numerically stable softmax of a 1-D tensor."""
    x = a.values
    e = np.exp(x - x.max())
    p = e / e.sum()

    def backward_fn(g):
        return (p * (g - np.dot(g, p)),)

    return _make(p, (a,), backward_fn)


def softmax_axis0(a):
    """Column-wise softmax of a (K, D) matrix, normalizing over K."""
    x = a.values
    e = np.exp(x - x.max(axis=0, keepdims=True))
    p = e / e.sum(axis=0, keepdims=True)

    def backward_fn(g):
        return (p * (g - (g * p).sum(axis=0, keepdims=True)),)

    return _make(p, (a,), backward_fn)


def max_elementwise(tensors):
    """Coordinate-wise maximum over K same-length vectors.

    Ties route the gradient to the lowest index, keeping backward
    deterministic.
    """
    stacked = np.stack([t.values for t in tensors])
    winner = np.argmax(stacked, axis=0)
    out = stacked[winner, np.arange(stacked.shape[1])]

    def backward_fn(g):
        return tuple(np.where(winner == k, g, 0.0) for k in range(len(tensors)))

    return _make(out, tuple(tensors), backward_fn)


def mean_elementwise(tensors):
    """Coordinate-wise mean over K same-length vectors.

    Summands are sorted per coordinate before adding, so the result is exactly
    invariant to the order of the inputs.
    """
    k = len(tensors)
    out = np.sort(np.stack([t.values for t in tensors]), axis=0).sum(axis=0) / k

    def backward_fn(g):
        gi = g / k
        return (gi,) * k

    return _make(out, tuple(tensors), backward_fn)


def add_n(tensors):
    """Sum of same-shape tensors."""
    shapes = {t.values.shape for t in tensors}
    if len(shapes) != 1:
        raise ShapeError(f"add_n shape mismatch: {sorted(shapes)}")
    total = tensors[0].values.copy()
    for t in tensors[1:]:
        total += t.values
    return _make(total, tuple(tensors), lambda g: (g,) * len(tensors))


def vsum(a):
    """Sum of all elements, as a scalar tensor."""
    shape = a.values.shape
    return _make(a.values.sum(), (a,), lambda g: (np.full(shape, g),))


def cross_entropy(pred, target_class):
    """-log(pred[target_class]) for a probability vector ``pred``."""
    n = pred.values.shape[0]
    if not 0 <= target_class < n:
        raise IndexError(f"target class {target_class} out of range for {n} classes")
    p = max(float(pred.values[target_class]), 1e-300)

    def backward_fn(g):
        full = np.zeros(n)
        full[target_class] = -float(g) / p
        return (full,)

    return _make(-np.log(p), (pred,), backward_fn)


def embedding_column(table, token_id):
    """Column ``token_id`` of an embedding matrix (E times one-hot)."""
    m, v = table.values.shape
    if not 0 <= token_id < v:
        raise IndexError(f"token id {token_id} out of range for vocabulary of {v}")

    def backward_fn(g):
        full = np.zeros((m, v))
        full[:, token_id] = g
        return (full,)

    return _make(table.values[:, token_id].copy(), (table,), backward_fn)


# ---------------------------------------------------------------------------
# gradient checking


def grad_check(f, x, eps=1e-5):
    """Max relative error between analytic and central-difference gradients.

    ``f`` maps a tensor to a scalar tensor. The error at each coordinate is
    |analytic - numeric| / max(1, |numeric|); the maximum over coordinates is
    returned.
    """
    if not 1e-6 <= eps <= 1e-3:
        raise ValueError(f"eps {eps} outside [1e-6, 1e-3]")
    x.grad = None
    with Tape() as tape:
        y = f(x)
    backward(y, tape)
    analytic = np.zeros_like(x.values) if x.grad is None else x.grad.copy()

    flat = x.values.reshape(-1)
    numeric = np.zeros_like(flat)
    for i in range(flat.size):
        saved = flat[i]
        flat[i] = saved + eps
        up = float(f(x).values)
        flat[i] = saved - eps
        down = float(f(x).values)
        flat[i] = saved
        numeric[i] = (up - down) / (2.0 * eps)
    numeric = numeric.reshape(x.values.shape)

    err = np.abs(analytic - numeric) / np.maximum(1.0, np.abs(numeric))
    return float(err.max()) if err.size else 0.0
