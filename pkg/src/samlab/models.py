"""Feed-forward model specs, parameter layout and differentiable model objects.

Every model exposes the same small surface used by the optimizers and probes::

    model.num_params
    model.loss(params, batch) -> float
    model.loss_and_grad(params, batch) -> (float, ndarray)

Parameters are plain 1-D float64 arrays; :class:`ParamLayout` maps them to
per-layer ``(W, b)`` blocks.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .autodiff import ACTIVATIONS, LOSSES, CompGraph
from .errors import ConfigError
from .rng import Xoshiro256


@dataclass(frozen=True)
class LayerSlice:
    fan_in: int
    fan_out: int
    w_start: int
    b_start: int

    @property
    def w_stop(self) -> int:
        return self.w_start + self.fan_in * self.fan_out

    @property
    def b_stop(self) -> int:
        return self.b_start + self.fan_out


class ParamLayout:
    """Offsets of each layer's weight matrix and bias inside the flat vector."""

    def __init__(self, widths: Sequence[int]):
        self.layers: list[LayerSlice] = []
        offset = 0
        for fan_in, fan_out in zip(widths[:-1], widths[1:]):
            w_start = offset
            b_start = w_start + fan_in * fan_out
            self.layers.append(LayerSlice(fan_in, fan_out, w_start, b_start))
            offset = b_start + fan_out
        self.size = offset

    def unflatten(self, vec: np.ndarray) -> list[tuple[np.ndarray, np.ndarray]]:
        vec = np.asarray(vec, dtype=np.float64)
        if vec.shape != (self.size,):
            raise ConfigError(f"parameter vector has shape {vec.shape}, layout expects ({self.size},)")
        return [
            (vec[s.w_start:s.w_stop].reshape(s.fan_in, s.fan_out).copy(), vec[s.b_start:s.b_stop].copy())
            for s in self.layers
        ]

    def flatten(self, blocks: Sequence[tuple[np.ndarray, np.ndarray]]) -> np.ndarray:
        if len(blocks) != len(self.layers):
            raise ConfigError("block count does not match layout")
        out = np.empty(self.size, dtype=np.float64)
        for s, (w, b) in zip(self.layers, blocks):
            if np.shape(w) != (s.fan_in, s.fan_out) or np.shape(b) != (s.fan_out,):
                raise ConfigError("block shape does not match layout")
            out[s.w_start:s.w_stop] = np.ravel(w)
            out[s.b_start:s.b_stop] = b
        return out


@dataclass(frozen=True)
class ModelSpec:
    """MLP description.

    ``activation`` is one name applied to every hidden layer, or a sequence with
    one entry per hidden layer. The output layer is always affine.
    """

    widths: tuple[int, ...]
    activation: str | tuple[str, ...] = "tanh"
    loss: str = "softmax_ce"
    init_seed: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "widths", tuple(int(w) for w in self.widths))
        if not isinstance(self.activation, str):
            object.__setattr__(self, "activation", tuple(self.activation))
        if len(self.widths) < 2:
            raise ConfigError("model needs at least one layer (two widths)")
        if any(w <= 0 for w in self.widths):
            raise ConfigError("layer widths must be positive")
        for act in self.activations:
            if act not in ACTIVATIONS:
                raise ConfigError(f"unknown activation {act!r}; expected one of {ACTIVATIONS}")
        if len(self.activations) != len(self.widths) - 2:
            raise ConfigError("need one activation per hidden layer")
        if self.loss not in LOSSES:
            raise ConfigError(f"unknown loss {self.loss!r}; expected one of {LOSSES}")

    @property
    def activations(self) -> tuple[str, ...]:
        if isinstance(self.activation, str):
            return (self.activation,) * (len(self.widths) - 2)
        return self.activation

    @property
    def layout(self) -> ParamLayout:
        return ParamLayout(self.widths)

    @property
    def num_params(self) -> int:
        return self.layout.size

    def to_dict(self) -> dict:
        act = self.activation if isinstance(self.activation, str) else list(self.activation)
        return {"widths": list(self.widths), "activation": act, "loss": self.loss, "init_seed": self.init_seed}

    @classmethod
    def from_dict(cls, d: dict) -> "ModelSpec":
        act = d.get("activation", "tanh")
        return cls(
            widths=tuple(d["widths"]),
            activation=act if isinstance(act, str) else tuple(act),
            loss=d.get("loss", "softmax_ce"),
            init_seed=int(d.get("init_seed", 0)),
        )


def init_params(spec: ModelSpec) -> np.ndarray:
    """Scaled-uniform weights (bound sqrt(6 / (fan_in + fan_out))), zero biases."""
    rng = Xoshiro256(spec.init_seed, stream="init")
    layout = spec.layout
    params = np.zeros(layout.size, dtype=np.float64)
    for s in layout.layers:
        bound = math.sqrt(6.0 / (s.fan_in + s.fan_out))
        params[s.w_start:s.w_stop] = rng.uniform(-bound, bound, s.fan_in * s.fan_out)
    return params


@dataclass
class Batch:
    inputs: np.ndarray
    targets: np.ndarray
    index: int = 0
    epoch: int = 0
    rows: np.ndarray | None = None

    def __post_init__(self) -> None:
        self.inputs = np.atleast_2d(np.asarray(self.inputs, dtype=np.float64))
        self.targets = np.asarray(self.targets, dtype=np.float64)
        if self.targets.ndim == 1:
            self.targets = self.targets[:, None]
        if self.inputs.shape[0] < 1:
            raise ConfigError("batch must contain at least one row")
        if self.targets.shape[0] != self.inputs.shape[0]:
            raise ConfigError("inputs and targets disagree on batch size")

    def __len__(self) -> int:
        return self.inputs.shape[0]


class MLP:
    """Differentiable MLP built on :class:`CompGraph`."""

    def __init__(self, spec: ModelSpec):
        self.spec = spec
        self.layout = spec.layout
        self.num_params = self.layout.size

    def build_graph(self, params: np.ndarray, batch: Batch) -> CompGraph:
        params = np.asarray(params, dtype=np.float64)
        if params.shape != (self.num_params,):
            raise ConfigError(f"params have shape {params.shape}, model expects ({self.num_params},)")
        if batch.inputs.shape[1] != self.spec.widths[0]:
            raise ConfigError(f"batch has {batch.inputs.shape[1]} features, model expects {self.spec.widths[0]}")
        if batch.targets.shape[1] != self.spec.widths[-1]:
            raise ConfigError(f"targets have {batch.targets.shape[1]} columns, model outputs {self.spec.widths[-1]}")
        g = CompGraph()
        w = g.param(params)
        h = g.const(batch.inputs)
        acts = self.spec.activations
        for i, s in enumerate(self.layout.layers):
            W = g.view(w, s.w_start, s.w_stop, (s.fan_in, s.fan_out))
            b = g.view(w, s.b_start, s.b_stop, (s.fan_out,))
            h = g.affine(h, W, b)
            if i < len(acts) and acts[i] != "identity":
                h = getattr(g, acts[i])(h)
        if self.spec.loss == "mse":
            out = g.mse(h, batch.targets)
        else:
            out = g.softmax_ce(h, batch.targets)
        g.set_output(out)
        return g

    def predict(self, params: np.ndarray, inputs: np.ndarray) -> np.ndarray:
        """Network outputs (logits or regression values) without a graph."""
        h = np.atleast_2d(np.asarray(inputs, dtype=np.float64))
        acts = self.spec.activations
        for i, (W, b) in enumerate(self.layout.unflatten(params)):
            h = h @ W + b
            if i < len(acts):
                h = _apply_activation(acts[i], h)
        return h

    def loss(self, params: np.ndarray, batch: Batch) -> float:
        return self.build_graph(params, batch).loss

    def loss_and_grad(self, params: np.ndarray, batch: Batch) -> tuple[float, np.ndarray]:
        g = self.build_graph(params, batch)
        return g.loss, g.backward()


def _apply_activation(name: str, z: np.ndarray) -> np.ndarray:
    if name == "tanh":
        return np.tanh(z)
    if name == "softplus":
        return np.logaddexp(0.0, z)
    if name == "relu":
        return np.maximum(z, 0.0)
    return z


class GraphFunction:
    """Batch-independent loss written directly with graph ops.

    ``fn(graph, w)`` receives the graph and the parameter leaf and returns the
    scalar output node. Used for closed-form toy losses.
    """

    def __init__(self, fn: Callable[[CompGraph, int], int], num_params: int, name: str = "function"):
        self.fn = fn
        self.num_params = int(num_params)
        self.name = name

    def build_graph(self, params: np.ndarray, batch=None) -> CompGraph:
        params = np.asarray(params, dtype=np.float64).reshape(-1)
        if params.shape != (self.num_params,):
            raise ConfigError(f"params have shape {params.shape}, {self.name} expects ({self.num_params},)")
        g = CompGraph()
        w = g.param(params)
        g.set_output(self.fn(g, w))
        return g

    def loss(self, params: np.ndarray, batch=None) -> float:
        return self.build_graph(params, batch).loss

    def loss_and_grad(self, params: np.ndarray, batch=None) -> tuple[float, np.ndarray]:
        g = self.build_graph(params, batch)
        return g.loss, g.backward()


def quadratic(matrix) -> GraphFunction:
    """``0.5 * w^T A w``."""
    a = np.atleast_2d(np.asarray(matrix, dtype=np.float64))
    return GraphFunction(lambda g, w: g.quad(w, a), a.shape[0], name="quadratic")


def linear(coeffs) -> GraphFunction:
    """``c^T w``."""
    c = np.asarray(coeffs, dtype=np.float64).reshape(-1)
    return GraphFunction(lambda g, w: g.dot(w, c), c.size, name="linear")


@dataclass
class CountingModel:
    """Wraps a model and counts evaluations plus the batches they touch."""

    model: object
    loss_evals: int = 0
    grad_evals: int = 0
    batch_ids: list[int] = field(default_factory=list)

    @property
    def num_params(self) -> int:
        return self.model.num_params

    def loss(self, params, batch=None) -> float:
        self.loss_evals += 1
        self.batch_ids.append(id(batch))
        return self.model.loss(params, batch)

    def loss_and_grad(self, params, batch=None):
        self.grad_evals += 1
        self.batch_ids.append(id(batch))
        return self.model.loss_and_grad(params, batch)

    def reset(self) -> None:
        self.loss_evals = 0
        self.grad_evals = 0
        self.batch_ids.clear()

    @property
    def distinct_batches(self) -> int:
        return len(set(self.batch_ids))


def accuracy(model: MLP, params: np.ndarray, inputs: np.ndarray, targets: np.ndarray) -> float:
    """Fraction of rows whose arg-max output matches the arg-max target."""
    targets = np.asarray(targets)
    if targets.ndim == 1 or targets.shape[1] == 1 or model.spec.loss != "softmax_ce":
        return float("nan")
    pred = model.predict(params, inputs)
    return float(np.mean(pred.argmax(axis=1) == targets.argmax(axis=1)))
