"""Loss-landscape measurements around a weight vector.

All probes evaluate on one fixed batch unless stated otherwise, and every
report converts to CSV rows via ``header()`` / ``rows()``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .errors import ConfigError, DegenerateDirectionError
from .optim import AscentConfig, ascent_multi

UNDEFINED = "undef"


def fmt(x) -> str:
    """Shortest round-tripping text for a float; ``undef`` for None."""
    if x is None:
        return UNDEFINED
    return repr(float(x))


def ascent_direction(model, params, batch, cfg: AscentConfig) -> np.ndarray:
    traj = ascent_multi(model, params, batch, cfg)
    if traj.degenerate:
        raise DegenerateDirectionError(
            "ascent direction undefined: the gradient at the base weights is (near) zero"
        )
    return traj.direction


def perturbed_point(model, params, batch, rho: float, steps: int) -> np.ndarray:
    """``w + rho * v_N`` with the default ``rho / N`` schedule."""
    if rho == 0.0:
        return np.asarray(params, dtype=np.float64).copy()
    traj = ascent_multi(model, params, batch, AscentConfig(rho=rho, steps=steps))
    return traj.final_perturbed


def default_scale_grid(rho: float, points: int = 21) -> np.ndarray:
    return np.linspace(0.0, 2.0 * rho, points)


@dataclass
class RayProbe:
    steps: int
    scales: np.ndarray
    losses: np.ndarray

    def header(self) -> list[str]:
        return ["steps", "k", "loss"]

    def rows(self) -> list[list[str]]:
        return [[str(self.steps), fmt(k), fmt(v)] for k, v in zip(self.scales, self.losses)]


def ray_probe(model, params, batch, ascent_cfg: AscentConfig, scale_grid: Sequence[float]) -> RayProbe:
    """Losses ``l(w + k * v_N)`` along the N-step ascent direction."""
    scales = np.asarray(scale_grid, dtype=np.float64)
    if scales.ndim != 1 or scales.size == 0 or np.any(np.diff(scales) <= 0):
        raise ConfigError("scale grid must be a non-empty strictly increasing sequence")
    w = np.asarray(params, dtype=np.float64)
    v = ascent_direction(model, w, batch, ascent_cfg)
    losses = np.array([model.loss(w + k * v, batch) for k in scales])
    if not np.all(np.isfinite(losses)):
        raise ConfigError("ray probe produced non-finite losses")
    return RayProbe(ascent_cfg.steps, scales, losses)


@dataclass
class GridProbe:
    x_grid: np.ndarray
    y_grid: np.ndarray
    losses: np.ndarray  # shape (len(x_grid), len(y_grid))
    normalized: bool = False

    @property
    def argmax(self) -> tuple[int, int]:
        i, j = np.unravel_index(int(np.argmax(self.losses)), self.losses.shape)
        return int(i), int(j)

    def header(self) -> list[str]:
        return ["x", "y", "loss"]

    def rows(self) -> list[list[str]]:
        return [
            [fmt(x), fmt(y), fmt(self.losses[i, j])]
            for i, x in enumerate(self.x_grid)
            for j, y in enumerate(self.y_grid)
        ]


def _unit(v: np.ndarray) -> tuple[np.ndarray, bool]:
    v = np.asarray(v, dtype=np.float64)
    n = float(np.linalg.norm(v))
    if n == 0.0:
        raise ConfigError("grid direction must be nonzero")
    if abs(n - 1.0) > 1e-12:
        return v / n, True
    return v, False


def grid_probe(model, params, batch, dir_a, dir_b, x_grid, y_grid) -> GridProbe:
    """Loss surface ``l(w + x * a + y * b)``; non-unit directions are normalized and flagged."""
    w = np.asarray(params, dtype=np.float64)
    a, fa = _unit(dir_a)
    b, fb = _unit(dir_b)
    xs = np.asarray(x_grid, dtype=np.float64)
    ys = np.asarray(y_grid, dtype=np.float64)
    losses = np.empty((xs.size, ys.size))
    for i, x in enumerate(xs):
        for j, y in enumerate(ys):
            losses[i, j] = model.loss(w + x * a + y * b, batch)
    return GridProbe(xs, ys, losses, normalized=fa or fb)


def cosine(a: np.ndarray, b: np.ndarray, floor: float = 1e-12) -> float | None:
    na, nb = float(np.linalg.norm(a)), float(np.linalg.norm(b))
    if na <= floor or nb <= floor:
        return None
    return float(min(1.0, max(-1.0, float(a @ b) / (na * nb))))


@dataclass
class CosineMatrix:
    labels: list[str]
    matrix: list[list[float | None]]

    def value(self, i: int, j: int) -> float | None:
        return self.matrix[i][j]

    def header(self) -> list[str]:
        return ["label"] + self.labels

    def rows(self) -> list[list[str]]:
        return [[lab] + [fmt(x) for x in row] for lab, row in zip(self.labels, self.matrix)]


def cosine_from_gradients(labels: Sequence[str], grads: Sequence[np.ndarray]) -> CosineMatrix:
    k = len(grads)
    mat: list[list[float | None]] = [[None] * k for _ in range(k)]
    for i in range(k):
        for j in range(i, k):
            if i == j:
                c = 1.0 if cosine(grads[i], grads[i]) is not None else None
            else:
                c = cosine(grads[i], grads[j])
            mat[i][j] = mat[j][i] = c
    return CosineMatrix(list(labels), mat)


def perturbed_gradients(model, params, batch, max_steps: int, rho: float) -> tuple[list[str], list[np.ndarray]]:
    """Gradients at ``w`` (label p0) and at ``w + rho * v_N`` for N = 1..max_steps."""
    w = np.asarray(params, dtype=np.float64)
    _, g0 = model.loss_and_grad(w, batch)
    labels, grads = ["p0"], [g0]
    for n in range(1, max_steps + 1):
        traj = ascent_multi(model, w, batch, AscentConfig(rho=rho, steps=n))
        point = traj.final_perturbed
        _, g = model.loss_and_grad(point, batch)
        labels.append(f"p{n}")
        grads.append(g)
    return labels, grads


def cosine_matrix(model, params, batch, max_steps: int, rho: float) -> CosineMatrix:
    if max_steps < 1:
        raise ConfigError("max_steps must be >= 1")
    labels, grads = perturbed_gradients(model, params, batch, max_steps, rho)
    return cosine_from_gradients(labels, grads)


@dataclass
class DecreaseMatrix:
    point_labels: list[str]
    gradient_labels: list[str]
    values: np.ndarray  # shape (points, gradients)

    def entry(self, point: str, gradient: str) -> float:
        return float(self.values[self.point_labels.index(point), self.gradient_labels.index(gradient)])

    def header(self) -> list[str]:
        return ["point"] + [f"grad_{g}" for g in self.gradient_labels]

    def rows(self) -> list[list[str]]:
        return [[p] + [fmt(v) for v in row] for p, row in zip(self.point_labels, self.values)]


def decrease_matrix(model, batch, eval_points: Mapping[str, np.ndarray],
                    gradients: Mapping[str, np.ndarray], lr: float) -> DecreaseMatrix:
    """``l(theta) - l(theta - lr * g)`` for every evaluation point and update gradient."""
    if not lr > 0:
        raise ConfigError("lr must be > 0")
    pts, grs = list(eval_points), list(gradients)
    vals = np.empty((len(pts), len(grs)))
    for i, p in enumerate(pts):
        theta = np.asarray(eval_points[p], dtype=np.float64)
        base = model.loss(theta, batch)
        for j, gname in enumerate(grs):
            vals[i, j] = base - model.loss(theta - lr * np.asarray(gradients[gname]), batch)
    return DecreaseMatrix(pts, grs, vals)


def interpolate(a: np.ndarray, b: np.ndarray, ts: Sequence[float]) -> dict[str, np.ndarray]:
    """Points ``(1 - t) a + t b`` keyed by ``t``."""
    return {f"t={t:g}": (1.0 - t) * np.asarray(a) + t * np.asarray(b) for t in ts}


def standard_decrease_matrix(model, params, batch, max_steps: int, rho: float, lr: float = 0.1,
                             interpolation: Sequence[float] = ()) -> DecreaseMatrix:
    """Points w, w^{p_1..p_K} (plus optional p1->p2 interpolants) against gradients at each."""
    w = np.asarray(params, dtype=np.float64)
    points = {"p0": w}
    for n in range(1, max_steps + 1):
        points[f"p{n}"] = perturbed_point(model, w, batch, rho, n)
    grads = {k: model.loss_and_grad(v, batch)[1] for k, v in points.items()}
    if interpolation and max_steps >= 2:
        points.update(interpolate(points["p1"], points["p2"], interpolation))
    return decrease_matrix(model, batch, points, grads, lr)


@dataclass
class PerturbedLossRow:
    method: str
    losses: dict[str, list[float]] = field(default_factory=dict)  # column -> per-seed values

    def mean_std(self, column: str) -> tuple[float, float]:
        vals = np.array(self.losses[column])
        return float(vals.mean()), float(vals.std(ddof=1)) if vals.size > 1 else 0.0


@dataclass
class PerturbedLossTable:
    rho: float
    steps: list[int]
    rows_: list[PerturbedLossRow]

    @property
    def columns(self) -> list[str]:
        return ["loss"] + [f"p{n}" for n in self.steps]

    def row(self, method: str) -> PerturbedLossRow:
        for r in self.rows_:
            if r.method == method:
                return r
        raise KeyError(method)

    def header(self) -> list[str]:
        out = ["method", "n_seeds"]
        for c in self.columns:
            out += [f"{c}_mean", f"{c}_std"]
        return out

    def rows(self) -> list[list[str]]:
        out = []
        for r in self.rows_:
            line = [r.method, str(len(r.losses["loss"]))]
            for c in self.columns:
                m, s = r.mean_std(c)
                line += [fmt(m), fmt(s)]
            out.append(line)
        return out


def full_set_perturbed_loss(model, params, batches, rho: float, steps: int) -> float:
    """Row-weighted mean of ``l(w^{p_N})`` with the ascent recomputed on each batch."""
    total, count = 0.0, 0
    for batch in batches:
        point = perturbed_point(model, params, batch, rho, steps) if steps > 0 else params
        total += model.loss(point, batch) * len(batch)
        count += len(batch)
    return total / count


def perturbed_loss_table(groups: Mapping[str, Sequence], batches, rho: float,
                         steps: Sequence[int] = (1, 3, 5)) -> PerturbedLossTable:
    """Mean and std across seeds of ``l(w)`` and ``l(w^{p_N})`` over the whole training set.

    ``groups`` maps a method label to its trained models (one per seed); every
    model must share one architecture. ``batches`` cover the full training set.
    """
    specs = {tm.spec.widths + (tm.spec.activations, tm.spec.loss) for ms in groups.values() for tm in ms}
    if len(specs) != 1:
        raise ConfigError("perturbed-loss table needs models with one shared architecture")
    rows = []
    for method, models in groups.items():
        row = PerturbedLossRow(method, {"loss": []} | {f"p{n}": [] for n in steps})
        for tm in models:
            model = tm.model
            row.losses["loss"].append(full_set_perturbed_loss(model, tm.params, batches, rho, 0))
            for n in steps:
                row.losses[f"p{n}"].append(full_set_perturbed_loss(model, tm.params, batches, rho, n))
        rows.append(row)
    return PerturbedLossTable(rho, list(steps), rows)


def is_valid_cosine_matrix(cm: CosineMatrix) -> bool:
    k = len(cm.labels)
    for i in range(k):
        if cm.matrix[i][i] is not None and cm.matrix[i][i] != 1.0:
            return False
        for j in range(k):
            a, b = cm.matrix[i][j], cm.matrix[j][i]
            if a != b:
                return False
            if a is not None and (not math.isfinite(a) or a < -1.0 or a > 1.0):
                return False
    return True
