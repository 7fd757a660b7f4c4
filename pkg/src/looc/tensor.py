"""Dense float64 tensors with reverse-mode automatic differentiation.

The operation set is deliberately small: exactly what an MLP encoder, the
projection heads and the contrastive losses need.  Everything is float64 so
finite-difference gradient checks are sharp.  Graphs are recorded as a tape:
each non-leaf tensor carries a node with a monotonically increasing sequence
number, and ``backward`` replays reachable nodes in reverse construction
order exactly once.
"""

from __future__ import annotations

import itertools

import numpy as np

_SEQ = itertools.count()


class DimensionError(ValueError):
    """Operand shapes are incompatible for the requested operation."""


class DegenerateEmbeddingError(ValueError):
    """A vector scheduled for normalization has (near-)zero norm."""


class DivergenceError(RuntimeError):
    """Training produced a non-finite gradient or loss."""


class _Node:
    __slots__ = ("seq", "op", "inputs", "out", "backward_fn")

    def __init__(self, op, inputs, out, backward_fn):
        self.seq = next(_SEQ)
        self.op = op
        self.inputs = inputs
        self.out = out
        self.backward_fn = backward_fn


class Tensor:
    """A dense ND array, optionally participating in the gradient tape.

    ``requires_grad`` marks leaves (parameters); tensors produced by ops on
    tape-participating inputs carry a tape node.  ``detach`` severs tape
    membership; a detached tensor never accumulates gradient.
    """

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.ascontiguousarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._node = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def on_tape(self) -> bool:
        return self.requires_grad or self._node is not None

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    def zero_grad(self):
        self.grad = None

    def backward(self):
        """Accumulate d(self)/d(leaf) into every reachable leaf's ``.grad``."""
        if self._node is None:
            raise ValueError("backward() called on a tensor that is not on the tape")
        if self.data.size != 1:
            raise ValueError(f"backward() requires a scalar, got shape {self.shape}")
        nodes = []
        seen = set()
        stack = [self._node]
        while stack:
            node = stack.pop()
            if id(node) in seen:
                continue
            seen.add(id(node))
            nodes.append(node)
            for t in node.inputs:
                if t._node is not None:
                    stack.append(t._node)
        # Construction order is a topological order of the graph.
        nodes.sort(key=lambda n: n.seq, reverse=True)
        self.grad = np.ones_like(self.data)
        for node in nodes:
            if node.out.grad is not None:
                node.backward_fn(node.out.grad)

    def __repr__(self):
        tag = ", on_tape" if self.on_tape else ""
        return f"Tensor(shape={tuple(self.shape)}{tag})"


def _accumulate(t: Tensor, g: np.ndarray):
    if not t.on_tape:
        return
    t.grad = g.copy() if t.grad is None else t.grad + g


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(op, data, inputs, backward_fn) -> Tensor:
    out = Tensor(data)
    if any(t.on_tape for t in inputs):
        out._node = _Node(op, inputs, out, backward_fn)
    return out


def _check_same_shape(op, a, b):
    if a.shape != b.shape:
        raise DimensionError(f"{op}: operand shapes differ, {a.shape} vs {b.shape}")


def add(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _check_same_shape("add", a, b)

    def backward(g):
        _accumulate(a, g)
        _accumulate(b, g)

    return _make("add", a.data + b.data, (a, b), backward)


def mul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _check_same_shape("mul", a, b)

    def backward(g):
        _accumulate(a, g * b.data)
        _accumulate(b, g * a.data)

    return _make("mul", a.data * b.data, (a, b), backward)


def relu(a) -> Tensor:
    a = _as_tensor(a)
    mask = a.data > 0  # subgradient 0 at exactly 0

    def backward(g):
        _accumulate(a, g * mask)

    return _make("relu", a.data * mask, (a,), backward)


def scale(a, s: float) -> Tensor:
    a = _as_tensor(a)
    s = float(s)

    def backward(g):
        _accumulate(a, g * s)

    return _make("scale", a.data * s, (a,), backward)


def matmul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul: incompatible shapes {a.shape} and {b.shape}")

    def backward(g):
        _accumulate(a, g @ b.data.T)
        _accumulate(b, a.data.T @ g)

    return _make("matmul", a.data @ b.data, (a, b), backward)


def bias_add(x, bias) -> Tensor:
    """Add a [n]-vector to every row of a [b, n] matrix."""
    x, bias = _as_tensor(x), _as_tensor(bias)
    if x.data.ndim != 2 or bias.data.ndim != 1 or x.shape[1] != bias.shape[0]:
        raise DimensionError(f"bias_add: incompatible shapes {x.shape} and {bias.shape}")

    def backward(g):
        _accumulate(x, g)
        _accumulate(bias, g.sum(axis=0))

    return _make("bias_add", x.data + bias.data[None, :], (x, bias), backward)


def rowsum(x) -> Tensor:
    """Sum each row of a [b, n] matrix, yielding [b, 1]."""
    x = _as_tensor(x)
    if x.data.ndim != 2:
        raise DimensionError(f"rowsum: expected 2-D input, got {x.shape}")

    def backward(g):
        _accumulate(x, np.broadcast_to(g, x.shape).copy())

    return _make("rowsum", x.data.sum(axis=1, keepdims=True), (x,), backward)


def concat_cols(parts) -> Tensor:
    """Concatenate [b, c_i] matrices along columns."""
    parts = [_as_tensor(p) for p in parts]
    if not parts:
        raise DimensionError("concat_cols: empty input list")
    rows = parts[0].shape[0]
    for p in parts:
        if p.data.ndim != 2 or p.shape[0] != rows:
            raise DimensionError(
                f"concat_cols: row counts differ, {p.shape} vs {(rows, -1)}"
            )
    widths = [p.shape[1] for p in parts]
    offsets = np.cumsum([0] + widths)

    def backward(g):
        for p, lo, hi in zip(parts, offsets[:-1], offsets[1:]):
            _accumulate(p, g[:, lo:hi])

    return _make(
        "concat_cols", np.concatenate([p.data for p in parts], axis=1), tuple(parts), backward
    )


def l2_normalize(x, eps: float = 1e-12) -> Tensor:
    """Normalize each row of a [b, d] matrix to unit Euclidean norm."""
    x = _as_tensor(x)
    if x.data.ndim != 2:
        raise DimensionError(f"l2_normalize: expected 2-D input, got {x.shape}")
    norms = np.sqrt((x.data ** 2).sum(axis=1, keepdims=True))
    if np.any(norms < eps):
        raise DegenerateEmbeddingError(
            f"l2_normalize: row norm below {eps} (min {norms.min():.3e})"
        )
    y = x.data / norms

    def backward(g):
        # d/dx of x/|x|: g/|x| - y * (g.y)/|x|, rowwise
        gy = (g * y).sum(axis=1, keepdims=True)
        _accumulate(x, g / norms - y * gy / norms)

    return _make("l2_normalize", y, (x,), backward)


def log_softmax_nll(logits, targets) -> Tensor:
    """Mean over rows of -log softmax(logits)[target], max-stabilized."""
    logits = _as_tensor(logits)
    if logits.data.ndim != 2 or logits.shape[1] < 1:
        raise DimensionError(f"log_softmax_nll: expected [b, c] logits, got {logits.shape}")
    targets = np.asarray(targets, dtype=np.int64).reshape(-1)
    b, c = logits.shape
    if targets.shape[0] != b:
        raise DimensionError(
            f"log_softmax_nll: {b} rows but {targets.shape[0]} targets"
        )
    if targets.min(initial=0) < 0 or targets.max(initial=0) >= c:
        raise IndexError(f"log_softmax_nll: target out of range [0, {c})")
    shifted = logits.data - logits.data.max(axis=1, keepdims=True)
    logsumexp = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    log_probs = shifted - logsumexp
    rows = np.arange(b)
    loss = -log_probs[rows, targets].mean()

    def backward(g):
        grad = np.exp(log_probs)
        grad[rows, targets] -= 1.0
        _accumulate(logits, grad * (float(g.reshape(-1)[0]) / b))

    return _make("log_softmax_nll", np.array(loss), (logits,), backward)


class SgdState:
    """Momentum SGD over a fixed parameter list.

    Update rule: v <- momentum * v + g;  p <- p - lr * v.
    """

    def __init__(self, params, lr: float, momentum: float = 0.0):
        if not 0.0 <= momentum < 1.0:
            raise ValueError(f"momentum must be in [0, 1), got {momentum}")
        self.params = list(params)
        self.lr = float(lr)
        self.momentum = float(momentum)
        self.velocity = [np.zeros_like(p.data) for p in self.params]

    def zero_grad(self):
        for p in self.params:
            p.grad = None

    def step(self):
        for p, v in zip(self.params, self.velocity):
            g = p.grad if p.grad is not None else 0.0
            if p.grad is not None and not np.all(np.isfinite(p.grad)):
                raise DivergenceError("non-finite gradient encountered in sgd step")
            v *= self.momentum
            v += g
            p.data -= self.lr * v
