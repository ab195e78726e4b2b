"""Minimal dense-tensor engine with reverse-mode automatic differentiation.

Values are 64-bit floats stored in numpy arrays (row-major). Graph
construction is single-threaded; tensors are immutable after creation
except for their grad buffers. Broadcasting is deliberately restricted to
(matrix, bias-row) addition so every shape rule stays auditable.

relu's subgradient at 0 is defined as 0; grad_check skips coordinates
whose finite-difference probes cross a relu kink.
"""

from __future__ import annotations

import warnings

import numpy as np

from .errors import NumericError, ShapeError, SubgradientWarning

# When non-empty, relu appends its activation mask here. grad_check uses
# this to detect finite-difference probes that cross a kink.
_relu_trace: list[np.ndarray] | None = None


def _check_finite(*arrays):
    for a in arrays:
        if not np.all(np.isfinite(a)):
            raise NumericError("non-finite value in operand")


class Tensor:
    """Dense float64 array participating in the gradient tape."""

    __slots__ = ("values", "requires_grad", "grad", "_parents", "_backward")

    def __init__(self, values, requires_grad=False):
        self.values = np.asarray(values, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self._parents = ()
        self._backward = None

    @property
    def shape(self):
        return self.values.shape

    def zero_grad(self):
        self.grad = None

    def _accumulate(self, g):
        if self.grad is None:
            self.grad = np.zeros_like(self.values)
        self.grad += g

    def __repr__(self):
        return f"Tensor(shape={self.values.shape}, requires_grad={self.requires_grad})"


def _make(values, parents, backward_fn):
    out = Tensor(values)
    if any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward_fn
    return out


def constant(values):
    return Tensor(values, requires_grad=False)


def parameter(values):
    return Tensor(values, requires_grad=True)


# ---------------------------------------------------------------------------
# Primitives
# ---------------------------------------------------------------------------

def matmul(a: Tensor, b: Tensor) -> Tensor:
    _check_finite(a.values, b.values)
    if a.values.ndim != 2 or b.values.ndim != 2 or a.values.shape[1] != b.values.shape[0]:
        raise ShapeError(f"matmul: {a.values.shape} @ {b.values.shape}")
    out_vals = a.values @ b.values

    def backward(out):
        if a.requires_grad:
            a._accumulate(out.grad @ b.values.T)
        if b.requires_grad:
            b._accumulate(a.values.T @ out.grad)

    return _make(out_vals, (a, b), backward)


def add(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise addition; also allows (m,n) + (1,n) bias-row broadcast."""
    _check_finite(a.values, b.values)
    bias_row = (
        a.values.ndim == 2
        and b.values.ndim == 2
        and b.values.shape == (1, a.values.shape[1])
        and a.values.shape[0] != 1
    )
    if not bias_row and a.values.shape != b.values.shape:
        raise ShapeError(f"add: {a.values.shape} + {b.values.shape}")
    out_vals = a.values + b.values

    def backward(out):
        if a.requires_grad:
            a._accumulate(out.grad)
        if b.requires_grad:
            g = out.grad.sum(axis=0, keepdims=True) if bias_row else out.grad
            b._accumulate(g)

    return _make(out_vals, (a, b), backward)


def smul(a: Tensor, c) -> Tensor:
    """Multiply by a scalar (python float or scalar-shaped Tensor)."""
    if isinstance(c, Tensor):
        if c.values.ndim != 0:
            raise ShapeError(f"smul: scalar operand has shape {c.values.shape}")
        _check_finite(a.values, c.values)
        out_vals = a.values * c.values

        def backward(out):
            if a.requires_grad:
                a._accumulate(out.grad * c.values)
            if c.requires_grad:
                c._accumulate(np.asarray((out.grad * a.values).sum()))

        return _make(out_vals, (a, c), backward)

    c = float(c)
    _check_finite(a.values, np.asarray(c))
    out_vals = a.values * c

    def backward(out):
        if a.requires_grad:
            a._accumulate(out.grad * c)

    return _make(out_vals, (a,), backward)


def mul(a: Tensor, b: Tensor) -> Tensor:
    _check_finite(a.values, b.values)
    if a.values.shape != b.values.shape:
        raise ShapeError(f"mul: {a.values.shape} * {b.values.shape}")
    out_vals = a.values * b.values

    def backward(out):
        if a.requires_grad:
            a._accumulate(out.grad * b.values)
        if b.requires_grad:
            b._accumulate(out.grad * a.values)

    return _make(out_vals, (a, b), backward)


def concat_last(tensors) -> Tensor:
    tensors = list(tensors)
    _check_finite(*(t.values for t in tensors))
    lead = tensors[0].values.shape[:-1]
    for t in tensors:
        if t.values.ndim == 0 or t.values.shape[:-1] != lead:
            raise ShapeError("concat-last-dim: leading dimensions differ")
    out_vals = np.concatenate([t.values for t in tensors], axis=-1)
    widths = [t.values.shape[-1] for t in tensors]

    def backward(out):
        offset = 0
        for t, w in zip(tensors, widths):
            if t.requires_grad:
                t._accumulate(out.grad[..., offset:offset + w])
            offset += w

    return _make(out_vals, tensors, backward)


def sum_reduce(a: Tensor) -> Tensor:
    _check_finite(a.values)
    out_vals = np.asarray(a.values.sum())

    def backward(out):
        if a.requires_grad:
            a._accumulate(np.full_like(a.values, out.grad))

    return _make(out_vals, (a,), backward)


def mean(a: Tensor) -> Tensor:
    _check_finite(a.values)
    if a.values.size == 0:
        raise ShapeError("mean of empty tensor")
    out_vals = np.asarray(a.values.mean())
    n = a.values.size

    def backward(out):
        if a.requires_grad:
            a._accumulate(np.full_like(a.values, out.grad / n))

    return _make(out_vals, (a,), backward)


def relu(a: Tensor) -> Tensor:
    _check_finite(a.values)
    mask = a.values > 0  # subgradient at 0 is 0
    if _relu_trace is not None:
        _relu_trace.append(mask.copy())
    out_vals = np.where(mask, a.values, 0.0)

    def backward(out):
        if a.requires_grad:
            a._accumulate(out.grad * mask)

    return _make(out_vals, (a,), backward)


def sigmoid(a: Tensor) -> Tensor:
    _check_finite(a.values)
    out_vals = np.empty_like(a.values, dtype=np.float64)
    pos = a.values >= 0
    out_vals[pos] = 1.0 / (1.0 + np.exp(-a.values[pos]))
    ez = np.exp(a.values[~pos])
    out_vals[~pos] = ez / (1.0 + ez)

    def backward(out):
        if a.requires_grad:
            a._accumulate(out.grad * out_vals * (1.0 - out_vals))

    return _make(out_vals, (a,), backward)


def softmax(a: Tensor) -> Tensor:
    """Row-wise softmax over the last axis, stabilised by max subtraction."""
    _check_finite(a.values)
    if a.values.ndim == 0:
        raise ShapeError("softmax needs at least one axis")
    shifted = a.values - a.values.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    out_vals = e / e.sum(axis=-1, keepdims=True)

    def backward(out):
        if a.requires_grad:
            dot = (out.grad * out_vals).sum(axis=-1, keepdims=True)
            a._accumulate(out_vals * (out.grad - dot))

    return _make(out_vals, (a,), backward)


def log(a: Tensor) -> Tensor:
    _check_finite(a.values)
    if np.any(a.values <= 0):
        raise NumericError("log of non-positive value")
    out_vals = np.log(a.values)

    def backward(out):
        if a.requires_grad:
            a._accumulate(out.grad / a.values)

    return _make(out_vals, (a,), backward)


def reciprocal(a: Tensor) -> Tensor:
    _check_finite(a.values)
    if np.any(a.values == 0):
        raise NumericError("reciprocal of zero")
    out_vals = 1.0 / a.values

    def backward(out):
        if a.requires_grad:
            a._accumulate(-out.grad * out_vals * out_vals)

    return _make(out_vals, (a,), backward)


PRIMITIVES = {
    "matmul": lambda inputs: matmul(*inputs),
    "add": lambda inputs: add(*inputs),
    "scalar-multiply": lambda inputs: smul(*inputs),
    "elementwise-multiply": lambda inputs: mul(*inputs),
    "concat-last-dim": concat_last,
    "sum-reduce": lambda inputs: sum_reduce(*inputs),
    "mean": lambda inputs: mean(*inputs),
    "relu": lambda inputs: relu(*inputs),
    "sigmoid": lambda inputs: sigmoid(*inputs),
    "softmax": lambda inputs: softmax(*inputs),
    "log": lambda inputs: log(*inputs),
    "reciprocal": lambda inputs: reciprocal(*inputs),
}


def apply_primitive(kind: str, inputs) -> Tensor:
    """Apply a primitive by name to a list of tensors."""
    if kind not in PRIMITIVES:
        raise ShapeError(f"unknown primitive {kind!r}")
    return PRIMITIVES[kind](list(inputs))


# ---------------------------------------------------------------------------
# Backward pass
# ---------------------------------------------------------------------------

def backward(root: Tensor):
    """Populate .grad of every requires_grad tensor reachable from root.

    Gradients accumulate additively across multiple uses of a node (and
    across repeated backward calls unless zero_grad is used).
    """
    if root.values.ndim != 0:
        raise ShapeError(f"backward root must be scalar, got shape {root.values.shape}")
    topo: list[Tensor] = []
    visited: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            topo.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in visited:
                stack.append((p, False))

    root._accumulate(np.ones_like(root.values))
    for node in reversed(topo):
        if node._backward is not None and node.grad is not None:
            node._backward(node)


# ---------------------------------------------------------------------------
# Finite-difference oracle
# ---------------------------------------------------------------------------

def grad_check(function, point, epsilon=1e-5) -> float:
    """Compare reverse-mode gradients of a scalar function against central
    finite differences.

    ``function`` maps a list of Tensors to a scalar Tensor. Returns the max
    over coordinates of |ad - fd| / max(1, |ad|, |fd|). Coordinates whose
    perturbed evaluations land on different relu activation patterns are
    skipped with a SubgradientWarning.
    """
    global _relu_trace
    if epsilon <= 0:
        raise ShapeError("epsilon must be positive")
    leaves = [Tensor(np.asarray(p.values if isinstance(p, Tensor) else p,
                                dtype=np.float64).copy(), requires_grad=True)
              for p in point]
    out = function(leaves)
    if out.values.ndim != 0:
        raise ShapeError("grad_check function must return a scalar")
    backward(out)
    grads = [leaf.grad if leaf.grad is not None else np.zeros_like(leaf.values)
             for leaf in leaves]

    def evaluate(leaf_idx, flat_idx, delta):
        probes = [Tensor(l.values.copy()) for l in leaves]
        probes[leaf_idx].values.flat[flat_idx] += delta
        global _relu_trace
        _relu_trace = []
        try:
            val = float(function(probes).values)
            trace = _relu_trace
        finally:
            _relu_trace = None
        return val, trace

    max_err = 0.0
    for li, leaf in enumerate(leaves):
        for fi in range(leaf.values.size):
            f_plus, trace_plus = evaluate(li, fi, epsilon)
            f_minus, trace_minus = evaluate(li, fi, -epsilon)
            kink = len(trace_plus) != len(trace_minus) or any(
                tp.shape != tm.shape or not np.array_equal(tp, tm)
                for tp, tm in zip(trace_plus, trace_minus)
            )
            if kink:
                warnings.warn(
                    f"relu kink at leaf {li} coordinate {fi}; skipped",
                    SubgradientWarning,
                )
                continue
            fd = (f_plus - f_minus) / (2.0 * epsilon)
            ad = float(grads[li].flat[fi])
            err = abs(ad - fd) / max(1.0, abs(ad), abs(fd))
            max_err = max(max_err, err)
    return max_err
