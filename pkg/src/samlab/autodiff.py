"""Reverse-mode automatic differentiation over dense float64 arrays.

A :class:`CompGraph` is built eagerly: every op evaluates its output as it is
recorded, so nodes are appended in topological order. ``backward`` walks the
node list in reverse once and returns the gradient of the scalar output with
respect to the single parameter leaf (a flat vector).

Graphs are single-use and not thread-safe; build one per evaluation.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Callable

import numpy as np

from .errors import DomainError, GraphStateError


@dataclass
class Node:
    index: int
    op: str
    inputs: tuple[int, ...]
    value: np.ndarray
    aux: Any = None


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum ``grad`` down to ``shape`` after numpy broadcasting."""
    if grad.shape == shape:
        return grad
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad.reshape(shape)


def _softplus(z: np.ndarray) -> np.ndarray:
    return np.logaddexp(0.0, z)


def _sigmoid(z: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def _log_softmax(z: np.ndarray) -> np.ndarray:
    shifted = z - z.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


class CompGraph:
    """Eager tape of array operations with one flat parameter leaf."""

    def __init__(self) -> None:
        self.nodes: list[Node] = []
        self.output: int | None = None
        self.param_index: int | None = None
        self.visited: list[int] = []
        self._consumed = False

    # -- recording -----------------------------------------------------

    def _push(self, op: str, inputs: tuple[int, ...], value, aux=None) -> int:
        node = Node(len(self.nodes), op, inputs, np.asarray(value, dtype=np.float64), aux)
        self.nodes.append(node)
        return node.index

    def value(self, i: int) -> np.ndarray:
        return self.nodes[i].value

    def param(self, values) -> int:
        if self.param_index is not None:
            raise GraphStateError("graph already has a parameter leaf")
        vec = np.array(values, dtype=np.float64).reshape(-1)
        self.param_index = self._push("param", (), vec)
        return self.param_index

    def const(self, values) -> int:
        return self._push("const", (), np.array(values, dtype=np.float64))

    def view(self, x: int, start: int, stop: int, shape: tuple[int, ...]) -> int:
        """Reshaped slice ``x[start:stop]`` of a flat vector."""
        val = self.value(x)[start:stop].reshape(shape)
        return self._push("view", (x,), val, (start, stop))

    def affine(self, x: int, w: int, b: int) -> int:
        """``x @ W + b`` with ``x`` of shape (B, n_in)."""
        val = self.value(x) @ self.value(w) + self.value(b)
        return self._push("affine", (x, w, b), val)

    def add(self, a: int, b: int) -> int:
        return self._push("add", (a, b), self.value(a) + self.value(b))

    def sub(self, a: int, b: int) -> int:
        return self._push("sub", (a, b), self.value(a) - self.value(b))

    def mul(self, a: int, b: int) -> int:
        return self._push("mul", (a, b), self.value(a) * self.value(b))

    def scale(self, a: int, c: float) -> int:
        return self._push("scale", (a,), float(c) * self.value(a), float(c))

    def shift(self, a: int, c: float) -> int:
        return self._push("shift", (a,), self.value(a) + float(c), float(c))

    def index(self, a: int, i: int) -> int:
        """Scalar element ``a[i]`` of a flat vector."""
        return self._push("index", (a,), self.value(a)[i], int(i))

    def dot(self, a: int, c) -> int:
        """Inner product of a flat vector with a constant vector."""
        c = np.asarray(c, dtype=np.float64)
        return self._push("dot", (a,), float(self.value(a) @ c), c)

    def quad(self, a: int, m) -> int:
        """Quadratic form ``0.5 * a^T M a`` for a symmetric constant ``M``."""
        m = np.asarray(m, dtype=np.float64)
        m = 0.5 * (m + m.T)
        v = self.value(a)
        return self._push("quad", (a,), 0.5 * float(v @ m @ v), m)

    def sum(self, a: int) -> int:
        return self._push("sum", (a,), self.value(a).sum())

    def square(self, a: int) -> int:
        return self._push("square", (a,), self.value(a) ** 2)

    def tanh(self, a: int) -> int:
        return self._push("tanh", (a,), np.tanh(self.value(a)))

    def softplus(self, a: int) -> int:
        return self._push("softplus", (a,), _softplus(self.value(a)))

    def relu(self, a: int) -> int:
        return self._push("relu", (a,), np.maximum(self.value(a), 0.0))

    def sin(self, a: int) -> int:
        return self._push("sin", (a,), np.sin(self.value(a)))

    def cos(self, a: int) -> int:
        return self._push("cos", (a,), np.cos(self.value(a)))

    def exp(self, a: int) -> int:
        return self._push("exp", (a,), np.exp(self.value(a)))

    def log1p(self, a: int) -> int:
        return self._push("log1p", (a,), np.log1p(self.value(a)))

    def mse(self, pred: int, target) -> int:
        """Mean over the batch of the per-sample squared error summed over outputs."""
        t = np.asarray(target, dtype=np.float64)
        diff = self.value(pred) - t
        return self._push("mse", (pred,), (diff**2).sum() / diff.shape[0], t)

    def softmax_ce(self, logits: int, target) -> int:
        """Mean softmax cross-entropy; ``target`` rows are (one-hot) distributions."""
        t = np.asarray(target, dtype=np.float64)
        logp = _log_softmax(self.value(logits))
        return self._push("softmax_ce", (logits,), -(t * logp).sum() / t.shape[0], (t, logp))

    def set_output(self, i: int) -> int:
        if np.ndim(self.value(i)) != 0:
            raise DomainError("graph output must be a scalar")
        self.output = i
        return i

    @property
    def loss(self) -> float:
        if self.output is None:
            raise GraphStateError("forward has not been evaluated on this graph")
        return float(self.value(self.output))

    # -- differentiation -----------------------------------------------

    def backward(self) -> np.ndarray:
        """Gradient of the output w.r.t. the parameter leaf."""
        if self.output is None:
            raise GraphStateError("backward called before forward")
        if self._consumed:
            raise GraphStateError("graph is single-use; backward already ran")
        if self.param_index is None:
            raise GraphStateError("graph has no parameter leaf")
        self._consumed = True
        grads: list[np.ndarray | None] = [None] * len(self.nodes)
        grads[self.output] = np.ones((), dtype=np.float64)
        for node in reversed(self.nodes[: self.output + 1]):
            self.visited.append(node.index)
            g = grads[node.index]
            if g is None or not node.inputs:
                continue
            for inp, gin in zip(node.inputs, _VJP[node.op](self, node, g)):
                if gin is None:
                    continue
                grads[inp] = gin if grads[inp] is None else grads[inp] + gin
        out = grads[self.param_index]
        if out is None:
            return np.zeros_like(self.value(self.param_index))
        return np.array(out, dtype=np.float64)


# Vector-Jacobian products: (graph, node, upstream grad) -> grads per input.

def _vjp_view(graph, node, g):
    (x,) = node.inputs
    start, stop = node.aux
    full = np.zeros_like(graph.value(x))
    full[start:stop] = g.reshape(-1)
    return (full,)


def _vjp_affine(graph, node, g):
    x, w, b = node.inputs
    return (g @ graph.value(w).T, graph.value(x).T @ g, g.sum(axis=0))


def _vjp_binary(sign_b):
    def vjp(graph, node, g):
        a, b = node.inputs
        return (_unbroadcast(g, graph.value(a).shape), _unbroadcast(sign_b * g, graph.value(b).shape))
    return vjp


def _vjp_mul(graph, node, g):
    a, b = node.inputs
    va, vb = graph.value(a), graph.value(b)
    return (_unbroadcast(g * vb, va.shape), _unbroadcast(g * va, vb.shape))


def _vjp_index(graph, node, g):
    (a,) = node.inputs
    full = np.zeros_like(graph.value(a))
    full[node.aux] = g
    return (full,)


def _elementwise(deriv: Callable[[np.ndarray, np.ndarray], np.ndarray]):
    def vjp(graph, node, g):
        (a,) = node.inputs
        return (g * deriv(graph.value(a), node.value),)
    return vjp


def _vjp_mse(graph, node, g):
    (pred,) = node.inputs
    diff = graph.value(pred) - node.aux
    return (g * 2.0 * diff / diff.shape[0],)


def _vjp_softmax_ce(graph, node, g):
    (logits,) = node.inputs
    t, logp = node.aux
    mass = t.sum(axis=1, keepdims=True)
    return (g * (np.exp(logp) * mass - t) / t.shape[0],)


_VJP: dict[str, Callable] = {
    "view": _vjp_view,
    "affine": _vjp_affine,
    "add": _vjp_binary(1.0),
    "sub": _vjp_binary(-1.0),
    "mul": _vjp_mul,
    "scale": lambda graph, node, g: (g * node.aux,),
    "shift": lambda graph, node, g: (g,),
    "index": _vjp_index,
    "dot": lambda graph, node, g: (g * node.aux,),
    "quad": lambda graph, node, g: (g * (node.aux @ graph.value(node.inputs[0])),),
    "sum": lambda graph, node, g: (np.broadcast_to(g, graph.value(node.inputs[0]).shape).copy(),),
    "square": _elementwise(lambda x, y: 2.0 * x),
    "tanh": _elementwise(lambda x, y: 1.0 - y * y),
    "softplus": _elementwise(lambda x, y: _sigmoid(x)),
    "relu": _elementwise(lambda x, y: (x > 0.0).astype(np.float64)),
    "sin": _elementwise(lambda x, y: np.cos(x)),
    "cos": _elementwise(lambda x, y: -np.sin(x)),
    "exp": _elementwise(lambda x, y: y),
    "log1p": _elementwise(lambda x, y: 1.0 / (1.0 + x)),
    "mse": _vjp_mse,
    "softmax_ce": _vjp_softmax_ce,
}

ACTIVATIONS = ("tanh", "softplus", "relu", "identity")
LOSSES = ("mse", "softmax_ce")


def backward(graph: CompGraph) -> np.ndarray:
    """Exact reverse-mode gradient of a forward-evaluated graph."""
    return graph.backward()


def forward(model, params: np.ndarray, batch) -> float:
    """Mean loss of ``model`` at ``params`` on ``batch``."""
    return model.loss(params, batch)


HVP_EPS = 1e-4


def hessian_vector_product(model, params: np.ndarray, batch, v: np.ndarray) -> np.ndarray:
    """Central difference of exact gradients along ``v``.

    ``h = 1e-4 * (1 + ||w||) / ||v||``; exact (up to rounding) for quadratic losses.
    """
    v = np.asarray(v, dtype=np.float64)
    vnorm = float(np.linalg.norm(v))
    if not vnorm > 0.0:
        raise DomainError("hessian_vector_product needs a nonzero direction")
    params = np.asarray(params, dtype=np.float64)
    h = HVP_EPS * (1.0 + float(np.linalg.norm(params))) / vnorm
    _, g_plus = model.loss_and_grad(params + h * v, batch)
    _, g_minus = model.loss_and_grad(params - h * v, batch)
    return (g_plus - g_minus) / (2.0 * h)
