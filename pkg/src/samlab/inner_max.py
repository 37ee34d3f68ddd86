"""Exhaustive search of the radius-rho sphere for the inner maximum (P <= 3)."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .autodiff import CompGraph
from .errors import ConfigError
from .models import GraphFunction

MAX_PARAMS = 3


@dataclass
class InnerMaxResult:
    max_loss: float
    direction: np.ndarray
    n_points: int
    angular_gap: float  # worst-case angle from any sphere point to its nearest grid point
    lipschitz: float
    tolerance: float  # upper bound on (true max - max_loss)


def sphere_grid(p: int, resolution: int) -> np.ndarray:
    """Unit directions: ``resolution`` angles for P=2, ``resolution**2`` (polar x azimuth) for P=3."""
    if p == 1:
        return np.array([[1.0], [-1.0]])
    if p == 2:
        t = 2.0 * math.pi * np.arange(resolution) / resolution
        return np.stack([np.cos(t), np.sin(t)], axis=1)
    theta = math.pi * (np.arange(resolution) + 0.5) / resolution
    phi = 2.0 * math.pi * np.arange(resolution) / resolution
    th, ph = np.meshgrid(theta, phi, indexing="ij")
    return np.stack([np.sin(th) * np.cos(ph), np.sin(th) * np.sin(ph), np.cos(th)], axis=-1).reshape(-1, 3)


def _angular_gap(p: int, resolution: int) -> float:
    if p == 1:
        return 0.0
    if p == 2:
        return math.pi / resolution
    return 1.5 * math.pi / resolution


def bruteforce_inner_max(model, params, batch, rho: float, resolution: int = 3600,
                         lipschitz: float | None = None) -> InnerMaxResult:
    """Maximum of ``l(w + rho * u)`` over a uniform angular grid of unit vectors ``u``.

    The returned ``tolerance`` bounds how far the grid maximum can sit below
    the true sphere maximum: ``rho * L * angular_gap``. ``L`` bounds the gradient
    norm on the sphere; if not supplied it is estimated as twice the largest
    gradient norm seen on the grid.
    """
    w = np.asarray(params, dtype=np.float64)
    p = w.size
    if p > MAX_PARAMS:
        raise ConfigError(
            f"exhaustive sphere search needs P <= {MAX_PARAMS} parameters (got {p}); "
            "the grid size grows exponentially with P"
        )
    if resolution < 1 or not rho >= 0:
        raise ConfigError("need resolution >= 1 and rho >= 0")
    dirs = sphere_grid(p, resolution)
    losses = np.empty(len(dirs))
    gnorm_max = 0.0
    for i, u in enumerate(dirs):
        if lipschitz is None:
            losses[i], g = model.loss_and_grad(w + rho * u, batch)
            gnorm_max = max(gnorm_max, float(np.linalg.norm(g)))
        else:
            losses[i] = model.loss(w + rho * u, batch)
    best = int(np.argmax(losses))
    lip = 2.0 * gnorm_max if lipschitz is None else float(lipschitz)
    gap = _angular_gap(p, resolution)
    return InnerMaxResult(float(losses[best]), dirs[best].copy(), len(dirs), gap, lip, rho * lip * gap)


# -- closed-form toy losses -------------------------------------------------

@dataclass(frozen=True)
class ToyLoss:
    name: str
    build: Callable[[CompGraph, int], int]
    point: tuple[float, float]
    rho: float
    formula: str

    def model(self) -> GraphFunction:
        return GraphFunction(self.build, 2, name=self.name)


def _quartic_bowl(g, w):
    x, y = g.index(w, 0), g.index(w, 1)
    quad = g.add(g.scale(g.square(x), 0.5), g.scale(g.square(y), 2.0))
    quart = g.scale(g.add(g.square(g.square(x)), g.square(g.square(y))), 0.25)
    return g.add(quad, quart)


def _rosenbrock(g, w):
    x, y = g.index(w, 0), g.index(w, 1)
    a = g.square(g.shift(g.scale(x, -1.0), 1.0))
    b = g.scale(g.square(g.sub(y, g.square(x))), 10.0)
    return g.add(a, b)


def _sin_bowl(g, w):
    x, y = g.index(w, 0), g.index(w, 1)
    wave = g.mul(g.sin(x), g.cos(y))
    bowl = g.scale(g.add(g.square(x), g.square(y)), 0.1)
    return g.add(wave, bowl)


def _softplus_ridge(g, w):
    x, y = g.index(w, 0), g.index(w, 1)
    a = g.softplus(g.sub(g.scale(x, 3.0), y))
    b = g.softplus(g.shift(g.scale(y, 2.0), -1.0))
    return g.add(a, g.scale(g.mul(a, b), 0.5))


def _exp_valley(g, w):
    x, y = g.index(w, 0), g.index(w, 1)
    return g.add(g.exp(g.scale(x, 0.5)), g.mul(g.square(y), g.shift(g.square(x), 1.0)))


def _tanh_saddle(g, w):
    x, y = g.index(w, 0), g.index(w, 1)
    return g.add(g.square(g.tanh(g.add(x, g.scale(y, 2.0)))), g.scale(g.square(g.sub(x, y)), 0.3))


def _himmelblau(g, w):
    x, y = g.index(w, 0), g.index(w, 1)
    a = g.square(g.shift(g.add(g.square(x), y), -11.0))
    b = g.square(g.shift(g.add(x, g.square(y)), -7.0))
    return g.scale(g.add(a, b), 0.01)


def _ring(g, w):
    x, y = g.index(w, 0), g.index(w, 1)
    r2 = g.add(g.square(x), g.square(y))
    return g.add(g.square(g.shift(r2, -1.0)), g.scale(x, 0.5))


TOY_LOSSES: dict[str, ToyLoss] = {
    t.name: t
    for t in (
        ToyLoss("quartic-bowl", _quartic_bowl, (1.0, 0.5), 1.0, "0.5x^2 + 2y^2 + 0.25(x^4 + y^4)"),
        ToyLoss("rosenbrock", _rosenbrock, (0.5, 0.5), 0.5, "(1 - x)^2 + 10(y - x^2)^2"),
        ToyLoss("sin-bowl", _sin_bowl, (0.3, 0.2), 1.0, "sin(x)cos(y) + 0.1(x^2 + y^2)"),
        ToyLoss("softplus-ridge", _softplus_ridge, (0.2, 0.1), 1.0,
                "a + 0.5 a softplus(2y - 1), a = softplus(3x - y)"),
        ToyLoss("exp-valley", _exp_valley, (0.5, 0.5), 1.0, "exp(x/2) + y^2 (1 + x^2)"),
        ToyLoss("tanh-saddle", _tanh_saddle, (0.1, -0.2), 0.8, "tanh(x + 2y)^2 + 0.3(x - y)^2"),
        ToyLoss("himmelblau", _himmelblau, (0.0, 0.0), 1.0, "0.01((x^2 + y - 11)^2 + (x + y^2 - 7)^2)"),
        ToyLoss("ring", _ring, (0.5, 0.3), 0.5, "(x^2 + y^2 - 1)^2 + 0.5x"),
    )
}

TOY_QUADRATIC = ToyLoss("quadratic", lambda g, w: g.quad(w, np.diag([1.0, 4.0])), (0.0, 0.0), 1.0,
                        "0.5 (x^2 + 4 y^2)")


def toy_model(name: str) -> ToyLoss:
    if name == TOY_QUADRATIC.name:
        return TOY_QUADRATIC
    try:
        return TOY_LOSSES[name]
    except KeyError:
        valid = ", ".join([TOY_QUADRATIC.name, *TOY_LOSSES])
        raise ConfigError(f"unknown toy loss {name!r}; valid: {valid}") from None

