"""Reverse-mode automatic differentiation on a replayable op tape.

A `Tape` records every primitive in creation order (a Wengert list);
`backward` walks it once in reverse accumulating exact vector-Jacobian
products, and `replay` re-executes the recorded forwards to reproduce the
output bit-identically - used to detect tape corruption. Values are
float64 numpy arrays (0-d for scalars). Ops must run inside a `with
Tape()` block.
"""

from __future__ import annotations

import numpy as np

from .errors import TapeError

_TAPES: list["Tape"] = []


def _active() -> "Tape":
    if not _TAPES:
        raise TapeError("no active tape; wrap the computation in `with Tape():`")
    return _TAPES[-1]


class Var:
    __slots__ = ("value", "grad", "parents", "pull", "recompute", "name")

    def __init__(self, value, parents=(), pull=None, recompute=None, name=None):
        self.value = value
        self.grad = None
        self.parents = parents
        self.pull = pull
        self.recompute = recompute
        self.name = name

    @property
    def shape(self):
        return self.value.shape

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __truediv__(self, other):
        return div(self, other)

    def __matmul__(self, other):
        return matmul(self, other)

    def __neg__(self):
        return mul(self, -1.0)


class Tape:
    def __init__(self):
        self.nodes: list[Var] = []
        self.output: Var | None = None
        self._consumed = False

    def __enter__(self):
        _TAPES.append(self)
        return self

    def __exit__(self, exc_type, exc, tb):
        popped = _TAPES.pop()
        if popped is not self:  # pragma: no cover - misnesting guard
            raise TapeError("tape context misnesting")
        return False

    def leaf(self, value, name=None) -> Var:
        node = Var(np.asarray(value, dtype=np.float64), name=name)
        self.nodes.append(node)
        return node

    def record(self, value, parents, pull, recompute, name=None) -> Var:
        node = Var(np.asarray(value, dtype=np.float64), tuple(parents), pull, recompute, name)
        self.nodes.append(node)
        return node


def _wrap(x) -> Var:
    if isinstance(x, Var):
        return x
    return _active().leaf(x)


def constant(value) -> Var:
    """Record a non-learnable input on the active tape."""
    return _active().leaf(value)


def _accumulate(node: Var, grad):
    if node.grad is None:
        node.grad = np.zeros_like(node.value)
    node.grad += grad


def backward(tape: Tape, output: Var | None = None) -> dict[str, np.ndarray]:
    """Reverse accumulation from the tape output; single use per tape."""
    out = output if output is not None else tape.output
    if out is None:
        raise TapeError("tape has no output to differentiate")
    if tape._consumed:
        raise TapeError("tape already differentiated; it is single-use")
    if out is not tape.nodes[-1] and out not in tape.nodes:
        raise TapeError("output does not belong to this tape")
    tape._consumed = True
    out.grad = np.ones_like(out.value)
    for node in reversed(tape.nodes):
        if node.grad is None or node.pull is None:
            continue
        node.pull(node.grad)
    grads = {}
    for node in tape.nodes:
        if node.name is not None and node.pull is None:
            grads[node.name] = node.grad if node.grad is not None else np.zeros_like(node.value)
    return grads


def replay(tape: Tape) -> np.ndarray:
    """Re-execute the recorded forward; returns the recomputed output value."""
    if tape.output is None:
        raise TapeError("tape has no output to replay")
    for node in tape.nodes:
        if node.recompute is not None:
            node.value = node.recompute()
    return tape.output.value


def _unbroadcast(grad: np.ndarray, shape) -> np.ndarray:
    if grad.shape == tuple(shape):
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


def add(a, b) -> Var:
    a, b = _wrap(a), _wrap(b)
    value = a.value + b.value

    def pull(g):
        _accumulate(a, _unbroadcast(g, a.value.shape))
        _accumulate(b, _unbroadcast(g, b.value.shape))

    return _active().record(value, (a, b), pull, lambda: a.value + b.value)


def sub(a, b) -> Var:
    a, b = _wrap(a), _wrap(b)
    value = a.value - b.value

    def pull(g):
        _accumulate(a, _unbroadcast(g, a.value.shape))
        _accumulate(b, _unbroadcast(-g, b.value.shape))

    return _active().record(value, (a, b), pull, lambda: a.value - b.value)


def mul(a, b) -> Var:
    a, b = _wrap(a), _wrap(b)
    value = a.value * b.value

    def pull(g):
        _accumulate(a, _unbroadcast(g * b.value, a.value.shape))
        _accumulate(b, _unbroadcast(g * a.value, b.value.shape))

    return _active().record(value, (a, b), pull, lambda: a.value * b.value)


def div(a, b) -> Var:
    a, b = _wrap(a), _wrap(b)
    value = a.value / b.value

    def pull(g):
        _accumulate(a, _unbroadcast(g / b.value, a.value.shape))
        _accumulate(b, _unbroadcast(-g * a.value / (b.value * b.value), b.value.shape))

    return _active().record(value, (a, b), pull, lambda: a.value / b.value)


def matmul(a, b) -> Var:
    a, b = _wrap(a), _wrap(b)
    value = a.value @ b.value

    def pull(g):
        _accumulate(a, g @ b.value.T)
        _accumulate(b, a.value.T @ g)

    return _active().record(value, (a, b), pull, lambda: a.value @ b.value)


def transpose(a) -> Var:
    a = _wrap(a)

    def pull(g):
        _accumulate(a, g.T)

    return _active().record(a.value.T, (a,), pull, lambda: a.value.T)


def concat_cols(a, b) -> Var:
    a, b = _wrap(a), _wrap(b)
    split = a.value.shape[1]

    def pull(g):
        _accumulate(a, g[:, :split])
        _accumulate(b, g[:, split:])

    return _active().record(
        np.concatenate([a.value, b.value], axis=1),
        (a, b),
        pull,
        lambda: np.concatenate([a.value, b.value], axis=1),
    )


def stack_rows(parts: list[Var]) -> Var:
    parts = [_wrap(p) for p in parts]
    sizes = [p.value.shape[0] for p in parts]

    def pull(g):
        start = 0
        for p, size in zip(parts, sizes):
            _accumulate(p, g[start : start + size])
            start += size

    return _active().record(
        np.concatenate([p.value for p in parts], axis=0),
        tuple(parts),
        pull,
        lambda: np.concatenate([p.value for p in parts], axis=0),
    )


def sum_all(a) -> Var:
    a = _wrap(a)

    def pull(g):
        _accumulate(a, np.broadcast_to(g, a.value.shape).copy())

    return _active().record(np.asarray(a.value.sum()), (a,), pull, lambda: np.asarray(a.value.sum()))


def mean_all(a) -> Var:
    a = _wrap(a)
    size = a.value.size

    def pull(g):
        _accumulate(a, np.broadcast_to(g / size, a.value.shape).copy())

    return _active().record(np.asarray(a.value.mean()), (a,), pull, lambda: np.asarray(a.value.mean()))


def sum_axis(a, axis: int, keepdims: bool = True) -> Var:
    a = _wrap(a)

    def pull(g):
        gg = g if keepdims else np.expand_dims(g, axis)
        _accumulate(a, np.broadcast_to(gg, a.value.shape).copy())

    return _active().record(
        a.value.sum(axis=axis, keepdims=keepdims),
        (a,),
        pull,
        lambda: a.value.sum(axis=axis, keepdims=keepdims),
    )


def relu(a) -> Var:
    a = _wrap(a)
    value = np.maximum(a.value, 0.0)

    def pull(g):
        _accumulate(a, g * (a.value > 0.0))

    return _active().record(value, (a,), pull, lambda: np.maximum(a.value, 0.0))


def exp(a) -> Var:
    a = _wrap(a)
    node_holder = {}

    def pull(g):
        _accumulate(a, g * node_holder["node"].value)

    node = _active().record(np.exp(a.value), (a,), pull, lambda: np.exp(a.value))
    node_holder["node"] = node
    return node


def log(a) -> Var:
    a = _wrap(a)

    def pull(g):
        _accumulate(a, g / a.value)

    return _active().record(np.log(a.value), (a,), pull, lambda: np.log(a.value))


def sqrt(a) -> Var:
    a = _wrap(a)
    node_holder = {}

    def pull(g):
        _accumulate(a, g * 0.5 / node_holder["node"].value)

    node = _active().record(np.sqrt(a.value), (a,), pull, lambda: np.sqrt(a.value))
    node_holder["node"] = node
    return node


def maximum_scalar(a, floor: float) -> Var:
    a = _wrap(a)

    def pull(g):
        _accumulate(a, g * (a.value > floor))

    return _active().record(
        np.maximum(a.value, floor), (a,), pull, lambda: np.maximum(a.value, floor)
    )


def tril(a) -> Var:
    a = _wrap(a)

    def pull(g):
        _accumulate(a, np.tril(g))

    return _active().record(np.tril(a.value), (a,), pull, lambda: np.tril(a.value))


def cumsum_rows(a) -> Var:
    """Running sum down the rows (prefix sums along axis 0)."""
    a = _wrap(a)

    def pull(g):
        _accumulate(a, np.flip(np.cumsum(np.flip(g, axis=0), axis=0), axis=0))

    return _active().record(
        np.cumsum(a.value, axis=0), (a,), pull, lambda: np.cumsum(a.value, axis=0)
    )


def gather_rows(table, indices) -> Var:
    table = _wrap(table)
    idx = np.asarray(indices, dtype=np.intp)

    def pull(g):
        if table.grad is None:
            table.grad = np.zeros_like(table.value)
        np.add.at(table.grad, idx, g)

    return _active().record(table.value[idx], (table,), pull, lambda: table.value[idx])


def _softmax_forward(scores: np.ndarray, causal: bool) -> np.ndarray:
    if causal:
        n = scores.shape[0]
        scores = np.where(np.tril(np.ones((n, n), dtype=bool)), scores, -np.inf)
    shifted = scores - scores.max(axis=1, keepdims=True)
    weights = np.exp(shifted)
    return weights / weights.sum(axis=1, keepdims=True)


def softmax_rows(a, causal: bool = False) -> Var:
    a = _wrap(a)
    node_holder = {}

    def pull(g):
        y = node_holder["node"].value
        _accumulate(a, (g - (g * y).sum(axis=1, keepdims=True)) * y)

    node = _active().record(
        _softmax_forward(a.value, causal), (a,), pull, lambda: _softmax_forward(a.value, causal)
    )
    node_holder["node"] = node
    return node


def cross_entropy_mean(logits, labels) -> Var:
    """Mean cross-entropy of row logits against integer labels."""
    logits = _wrap(logits)
    labels = np.asarray(labels, dtype=np.intp)
    rows = np.arange(labels.shape[0])

    def forward():
        z = logits.value
        m = z.max(axis=1, keepdims=True)
        lse = m[:, 0] + np.log(np.exp(z - m).sum(axis=1))
        return np.asarray(np.mean(lse - z[rows, labels]))

    def pull(g):
        z = logits.value
        m = z.max(axis=1, keepdims=True)
        e = np.exp(z - m)
        probs = e / e.sum(axis=1, keepdims=True)
        probs[rows, labels] -= 1.0
        _accumulate(logits, g * probs / labels.shape[0])

    return _active().record(forward(), (logits,), pull, forward)


def row_normalize(a, epsilon: float = 1e-12) -> Var:
    """Unit-normalize rows with the norm clamped at epsilon (cosine map)."""
    norms = sqrt(sum_axis(mul(a, a), axis=1, keepdims=True))
    return div(a, maximum_scalar(norms, epsilon))


def standardize_rows(a, eps: float = 1e-5) -> Var:
    """Zero-mean, unit-variance per row (per-token standardization)."""
    width = a.value.shape[1] if isinstance(a, Var) else np.asarray(a).shape[1]
    mean = div(sum_axis(a, axis=1, keepdims=True), float(width))
    centered = sub(a, mean)
    variance = div(sum_axis(mul(centered, centered), axis=1, keepdims=True), float(width))
    return div(centered, sqrt(add(variance, eps)))
