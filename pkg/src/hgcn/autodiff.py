"""Minimal dense-matrix reverse-mode autodiff.

Everything is a 2-D float array. A `Node` wraps a value matrix together
with its gradient and a closure that pushes incoming gradients to its
parents. Nodes created while a `Tape` is active are recorded in creation
order, which is a valid topological order, so `Tape.backward` simply
walks the list in reverse.

Leaf parameters live outside any tape and accumulate gradients across
backward calls until an optimizer step zeroes them.
"""

from __future__ import annotations

import numpy as np


class ShapeError(ValueError):
    """Raised when operand shapes are incompatible."""


_current_tape: "Tape | None" = None


class Tape:
    """Records non-leaf nodes in creation order. Usable as a context manager."""

    def __init__(self):
        self.nodes: list[Node] = []

    def __enter__(self) -> "Tape":
        global _current_tape
        self._outer = _current_tape
        _current_tape = self
        return self

    def __exit__(self, *exc):
        global _current_tape
        _current_tape = self._outer
        return False

    def backward(self, loss: "Node") -> None:
        """Seed d(loss)/d(loss) = 1 and push gradients back through the tape.

        Gradients accumulate; calling twice doubles every gradient.
        """
        if loss.value.shape != (1, 1):
            raise ShapeError(f"loss must be scalar (1x1), got {loss.value.shape}")
        if not any(n is loss for n in self.nodes):
            raise ValueError("loss node is not on this tape")
        # reset intermediate grads so each call contributes exactly one
        # d(loss)/d(leaf) into the (persistent) leaf gradients
        for node in self.nodes:
            node.grad = np.zeros_like(node.value)
        loss.grad = np.ones_like(loss.value)
        for node in reversed(self.nodes):
            if node._backward is not None and node.requires_grad:
                node._backward(node.grad)


def backward(tape: Tape, loss: "Node") -> None:
    tape.backward(loss)


class Node:
    """A matrix in the computation graph.

    `op` names the producing operation ("" for leaves) and `parents` holds
    the producing operation's inputs, so the graph can be inspected.
    """

    __slots__ = ("value", "grad", "op", "parents", "requires_grad", "_backward")

    def __init__(self, value, requires_grad=False, op="", parents=(), backward_fn=None):
        value = np.asarray(value)
        if value.ndim != 2:
            value = np.atleast_2d(value)
        self.value = value
        self.grad = np.zeros_like(value)
        self.op = op
        self.parents = tuple(parents)
        self.requires_grad = bool(requires_grad)
        self._backward = backward_fn
        if op and _current_tape is not None:
            _current_tape.nodes.append(self)

    @property
    def shape(self):
        return self.value.shape

    def zero_grad(self):
        self.grad = np.zeros_like(self.value)

    def __repr__(self):
        return f"Node(op={self.op!r}, shape={self.value.shape}, requires_grad={self.requires_grad})"


def parameter(value) -> Node:
    """A trainable leaf. Rejects non-finite input."""
    value = np.atleast_2d(np.asarray(value, dtype=np.float64))
    if not np.all(np.isfinite(value)):
        raise ValueError("parameter contains NaN/Inf")
    return Node(value, requires_grad=True)


def constant(value, dtype=np.float64) -> Node:
    value = np.atleast_2d(np.asarray(value, dtype=dtype))
    if not np.all(np.isfinite(value)):
        raise ValueError("constant contains NaN/Inf")
    return Node(value, requires_grad=False)


def _result(value, op, parents, backward_fn) -> Node:
    requires = any(p.requires_grad for p in parents)
    return Node(value, requires_grad=requires, op=op, parents=parents,
                backward_fn=backward_fn if requires else None)


def matmul(a: Node, b: Node) -> Node:
    if a.value.shape[1] != b.value.shape[0]:
        raise ShapeError(f"matmul: inner dims differ, {a.value.shape} x {b.value.shape}")

    def push(g):
        if a.requires_grad:
            a.grad = a.grad + g @ b.value.T
        if b.requires_grad:
            b.grad = b.grad + a.value.T @ g

    return _result(a.value @ b.value, "matmul", (a, b), push)


def add(a: Node, b: Node) -> Node:
    if a.value.shape != b.value.shape:
        raise ShapeError(f"add: shapes differ, {a.value.shape} vs {b.value.shape}")

    def push(g):
        if a.requires_grad:
            a.grad = a.grad + g
        if b.requires_grad:
            b.grad = b.grad + g

    return _result(a.value + b.value, "add", (a, b), push)


def elementwise_mul(a: Node, b: Node) -> Node:
    if a.value.shape != b.value.shape:
        raise ShapeError(f"elementwise_mul: shapes differ, {a.value.shape} vs {b.value.shape}")

    def push(g):
        if a.requires_grad:
            a.grad = a.grad + g * b.value
        if b.requires_grad:
            b.grad = b.grad + g * a.value

    return _result(a.value * b.value, "elementwise_mul", (a, b), push)


def scale(a: Node, c: float) -> Node:
    c = float(c)

    def push(g):
        if a.requires_grad:
            a.grad = a.grad + g * c

    return _result(a.value * c, "scale", (a,), push)


def activation(a: Node, kind: str = "relu") -> Node:
    """Elementwise nonlinearity. ReLU's subgradient at 0 is taken as 0."""
    if kind == "relu":
        out = np.maximum(a.value, 0.0)
        mask = a.value > 0.0

        def push(g):
            if a.requires_grad:
                a.grad = a.grad + g * mask
    elif kind == "tanh":
        out = np.tanh(a.value)

        def push(g):
            if a.requires_grad:
                a.grad = a.grad + g * (1.0 - out * out)
    else:
        raise ValueError(f"unknown activation {kind!r}")
    return _result(out, f"activation[{kind}]", (a,), push)


def softmax_row(a: Node) -> Node:
    """Stabilized softmax over a single row vector, with exact Jacobian."""
    if a.value.shape[0] != 1:
        raise ShapeError(f"softmax_row expects a 1xN row, got {a.value.shape}")
    if a.value.shape[1] == 0:
        raise ShapeError("softmax_row: empty vector")
    shifted = a.value - np.max(a.value)
    e = np.exp(shifted)
    out = e / np.sum(e)

    def push(g):
        if a.requires_grad:
            # J^T g with J = diag(s) - s s^T
            dot = float(np.sum(g * out))
            a.grad = a.grad + out * (g - dot)

    return _result(out, "softmax_row", (a,), push)


def mse_loss(pred: Node, target) -> Node:
    target = np.atleast_2d(np.asarray(target, dtype=pred.value.dtype))
    if pred.value.shape != target.shape:
        raise ShapeError(f"mse_loss: shapes differ, {pred.value.shape} vs {target.shape}")
    diff = pred.value - target
    count = diff.size
    out = np.array([[np.sum(diff * diff) / count]])

    def push(g):
        if pred.requires_grad:
            pred.grad = pred.grad + g[0, 0] * 2.0 * diff / count

    return _result(out, "mse_loss", (pred,), push)


def total_sum(a: Node) -> Node:
    out = np.array([[np.sum(a.value)]])

    def push(g):
        if a.requires_grad:
            a.grad = a.grad + np.full_like(a.value, g[0, 0])

    return _result(out, "total_sum", (a,), push)


def col_sums(a: Node) -> Node:
    """Column sums as a 1xN row vector."""
    out = np.sum(a.value, axis=0, keepdims=True)

    def push(g):
        if a.requires_grad:
            a.grad = a.grad + np.broadcast_to(g, a.value.shape)

    return _result(out, "col_sums", (a,), push)


def concat_rows(a: Node, b: Node) -> Node:
    if a.value.shape[1] != b.value.shape[1]:
        raise ShapeError(f"concat_rows: widths differ, {a.value.shape} vs {b.value.shape}")
    m = a.value.shape[0]

    def push(g):
        if a.requires_grad:
            a.grad = a.grad + g[:m]
        if b.requires_grad:
            b.grad = b.grad + g[m:]

    return _result(np.concatenate([a.value, b.value], axis=0), "concat_rows", (a, b), push)


def slice_rows(a: Node, start: int, stop: int) -> Node:
    if not (0 <= start <= stop <= a.value.shape[0]):
        raise ShapeError(f"slice_rows: [{start}:{stop}] out of range for {a.value.shape}")

    def push(g):
        if a.requires_grad:
            pad = np.zeros_like(a.value)
            pad[start:stop] = g
            a.grad = a.grad + pad

    return _result(a.value[start:stop].copy(), "slice_rows", (a,), push)


def gather_rows(table: Node, ids) -> Node:
    """Row lookup; backward scatter-adds into exactly the looked-up rows."""
    ids = np.asarray(ids, dtype=np.intp)
    if ids.size and (ids.min() < 0 or ids.max() >= table.value.shape[0]):
        raise ShapeError(f"gather_rows: id out of range for table {table.value.shape}")

    def push(g):
        if table.requires_grad:
            acc = np.zeros_like(table.value)
            np.add.at(acc, ids, g)
            table.grad = table.grad + acc

    return _result(table.value[ids].copy(), "gather_rows", (table,), push)


def zero_grads(params) -> None:
    for p in params:
        p.zero_grad()


def sgd_step(params, lr: float) -> None:
    """p <- p - lr * grad, then zero grads."""
    if lr < 0:
        raise ValueError(f"lr must be >= 0, got {lr}")
    for p in params:
        p.value = p.value - lr * p.grad
    zero_grads(params)


class Adam:
    """Adaptive-moment optimizer with the usual defaults."""

    def __init__(self, params, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        if lr <= 0:
            raise ValueError(f"lr must be > 0, got {lr}")
        self.params = list(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p.value) for p in self.params]
        self.v = [np.zeros_like(p.value) for p in self.params]

    def step(self) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        for i, p in enumerate(self.params):
            g = p.grad
            self.m[i] = b1 * self.m[i] + (1 - b1) * g
            self.v[i] = b2 * self.v[i] + (1 - b2) * g * g
            m_hat = self.m[i] / (1 - b1 ** self.t)
            v_hat = self.v[i] / (1 - b2 ** self.t)
            p.value = p.value - self.lr * m_hat / (np.sqrt(v_hat) + self.eps)
        zero_grads(self.params)


def adam_step(params, lr, state=None, **kw):
    """One-shot Adam step; returns the optimizer so state can be carried."""
    if state is None:
        state = Adam(params, lr, **kw)
    state.step()
    return state
