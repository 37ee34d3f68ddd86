"""Single-step SAM, multi-step SAM-N and MSAM-N update rules.

Notation used throughout:

* ``w``            current weights, ``g(.)`` the mini-batch gradient.
* ascent point n:  ``p_n = p_{n-1} + r_n * g(p_{n-1}) / ||g(p_{n-1})||`` with ``p_0 = w``.
* direction:       ``v = (p_N - w) / ||p_N - w||``.
* perturbed point: ``w + rho * v`` (or the raw endpoint ``p_N`` when renormalization is off).

SAM descends along ``g`` at the perturbed point. MSAM descends along the
weighted average of ``g(p_1) ... g(p_N)``; ``g(p_1) ... g(p_{N-1})`` are reused
from the ascent, so only ``g(p_N)`` is new. Both therefore cost N + 1
gradient evaluations per step.

All functions are pure: they never mutate ``params`` and every gradient
inside one step uses the same batch.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import ConfigError

GRAD_NORM_FLOOR = 1e-12
KINDS = ("sgd", "sam", "msam")


def ratio_radii(rho: float, ratio: Sequence[float]) -> list[float]:
    """Per-step radii proportional to ``ratio`` and summing to ``rho``."""
    ratio = [float(r) for r in ratio]
    total = sum(ratio)
    if not ratio or any(r < 0 for r in ratio) or total <= 0:
        raise ConfigError(f"invalid step ratio {ratio}")
    return [rho * r / total for r in ratio]


def parse_ratio(text: str) -> list[float]:
    """``"1:2"`` -> ``[1.0, 2.0]``."""
    try:
        return [float(part) for part in str(text).split(":")]
    except ValueError as exc:
        raise ConfigError(f"cannot parse step ratio {text!r}") from exc


@dataclass(frozen=True)
class AscentConfig:
    rho: float
    steps: int = 1
    step_radii: tuple[float, ...] | None = None
    grad_norm_floor: float = GRAD_NORM_FLOOR
    renormalize_final: bool = True

    def __post_init__(self) -> None:
        if not self.rho >= 0:
            raise ConfigError(f"rho must be >= 0, got {self.rho}")
        if int(self.steps) != self.steps or self.steps < 1:
            raise ConfigError(f"steps must be an integer >= 1, got {self.steps}")
        radii = self.step_radii
        if radii is None:
            radii = (self.rho / self.steps,) * self.steps
        radii = tuple(float(r) for r in radii)
        if len(radii) != self.steps:
            raise ConfigError(f"step_radii has {len(radii)} entries for {self.steps} steps")
        if any(not r >= 0 for r in radii):
            raise ConfigError("step radii must be >= 0")
        object.__setattr__(self, "steps", int(self.steps))
        object.__setattr__(self, "step_radii", radii)

    @classmethod
    def from_ratio(cls, rho: float, ratio: Sequence[float], **kwargs) -> "AscentConfig":
        radii = ratio_radii(rho, ratio)
        return cls(rho=rho, steps=len(radii), step_radii=tuple(radii), **kwargs)


@dataclass
class AscentTrajectory:
    """Result of an ascent from ``base``.

    ``intermediates[n]`` is the raw ascent point p_{n+1}. ``ascent_grads[n]``
    is the gradient that produced the (n+1)-th move, i.e. ``g(p_n)``, so
    ``ascent_grads[0]`` is the gradient at ``base``. ``endpoint_grad`` is
    ``g(p_N)`` when it was requested or already known (early stop).
    """

    base: np.ndarray
    rho: float
    step_radii: tuple[float, ...]
    intermediates: list[np.ndarray] = field(default_factory=list)
    ascent_grads: list[np.ndarray] = field(default_factory=list)
    base_loss: float = float("nan")
    direction: np.ndarray | None = None
    final_perturbed: np.ndarray | None = None
    degenerate: bool = False
    stopped_early: bool = False
    endpoint_grad: np.ndarray | None = None

    @property
    def steps_taken(self) -> int:
        return len(self.intermediates)

    @property
    def base_grad(self) -> np.ndarray:
        return self.ascent_grads[0]

    @property
    def intermediate_grads(self) -> list[np.ndarray]:
        """``g(p_1) ... g(p_N)``; requires the endpoint gradient."""
        if self.endpoint_grad is None:
            raise ValueError("endpoint gradient was not evaluated for this trajectory")
        return self.ascent_grads[1:] + [self.endpoint_grad]


def _degenerate(traj: AscentTrajectory) -> AscentTrajectory:
    traj.degenerate = True
    traj.direction = np.zeros_like(traj.base)
    traj.final_perturbed = traj.base.copy()
    return traj


def ascent_single(model, params, batch, rho: float, grad_norm_floor: float = GRAD_NORM_FLOOR) -> AscentTrajectory:
    """One normalized-gradient step of length ``rho``."""
    if not rho >= 0:
        raise ConfigError(f"rho must be >= 0, got {rho}")
    w = np.asarray(params, dtype=np.float64)
    loss, g = model.loss_and_grad(w, batch)
    traj = AscentTrajectory(base=w, rho=float(rho), step_radii=(float(rho),), ascent_grads=[g], base_loss=loss)
    gnorm = float(np.linalg.norm(g))
    if gnorm <= grad_norm_floor:
        return _degenerate(traj)
    direction = g / max(gnorm, grad_norm_floor)
    perturbed = w + rho * direction
    traj.intermediates = [perturbed]
    traj.direction = direction
    traj.final_perturbed = perturbed
    return traj


def ascent_multi(model, params, batch, cfg: AscentConfig, endpoint_grad: bool = False) -> AscentTrajectory:
    """N normalized-gradient steps on one batch, then renormalize to radius ``rho``.

    With ``endpoint_grad`` the gradient at the raw endpoint is also evaluated
    (MSAM needs it; SAM does not). A vanishing gradient at an ascent point
    ends the ascent there; a vanishing gradient at ``w`` makes the trajectory
    degenerate (zero direction, no perturbation).
    """
    w = np.asarray(params, dtype=np.float64)
    floor = cfg.grad_norm_floor
    traj = AscentTrajectory(base=w, rho=cfg.rho, step_radii=cfg.step_radii)
    point = w
    displacement = np.zeros_like(w)
    first_unit = None
    for radius in cfg.step_radii:
        loss, g = model.loss_and_grad(point, batch)
        if not traj.ascent_grads:
            traj.base_loss = loss
        gnorm = float(np.linalg.norm(g))
        if gnorm <= floor:
            if not traj.intermediates:
                traj.ascent_grads.append(g)
                return _degenerate(traj)
            traj.stopped_early = True
            traj.endpoint_grad = g
            break
        traj.ascent_grads.append(g)
        unit = g / max(gnorm, floor)
        if first_unit is None:
            first_unit = unit
        point = point + radius * unit
        displacement = displacement + radius * unit
        traj.intermediates.append(point)

    if len(traj.intermediates) == 1:
        # Exactly the single-step direction; avoids re-normalizing rho * u.
        direction = first_unit
    else:
        dnorm = float(np.linalg.norm(displacement))
        if dnorm > floor:
            direction = displacement / dnorm
        elif all(r == 0.0 for r in cfg.step_radii):
            direction = first_unit
        else:
            return _degenerate(traj)
    traj.direction = direction
    if cfg.renormalize_final:
        traj.final_perturbed = w + cfg.rho * direction
    else:
        traj.final_perturbed = traj.intermediates[-1]
    if endpoint_grad and traj.endpoint_grad is None:
        _, traj.endpoint_grad = model.loss_and_grad(traj.intermediates[-1], batch)
    return traj


@dataclass(frozen=True)
class OptimizerConfig:
    kind: str = "sgd"
    lr: float = 0.1
    ascent: AscentConfig = field(default_factory=lambda: AscentConfig(rho=0.0))
    msam_weights: tuple[float, ...] | None = None

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise ConfigError(f"unknown optimizer kind {self.kind!r}; expected one of {KINDS}")
        if not self.lr > 0:
            raise ConfigError(f"learning rate must be > 0, got {self.lr}")
        n = self.ascent.steps
        weights = self.msam_weights
        if weights is None:
            weights = (1.0 / n,) * n
        weights = tuple(float(x) for x in weights)
        if len(weights) != n:
            raise ConfigError(f"msam_weights has {len(weights)} entries for {n} ascent steps")
        if any(not x >= 0 for x in weights):
            raise ConfigError("msam_weights must be non-negative")
        if abs(sum(weights) - 1.0) > 1e-12:
            raise ConfigError(f"msam_weights must sum to 1, got {sum(weights)!r}")
        object.__setattr__(self, "msam_weights", weights)

    @property
    def label(self) -> str:
        if self.kind == "sgd":
            return "SGD"
        return f"{self.kind.upper()}-{self.ascent.steps}"


def sgd_direction(model, params, batch) -> np.ndarray:
    _, g = model.loss_and_grad(np.asarray(params, dtype=np.float64), batch)
    return g


def sam_direction(model, params, batch, cfg: OptimizerConfig) -> np.ndarray:
    """Gradient at the perturbed point (or at ``w`` for a degenerate ascent)."""
    if cfg.ascent.rho == 0.0:
        return sgd_direction(model, params, batch)
    traj = ascent_multi(model, params, batch, cfg.ascent)
    if traj.degenerate:
        return traj.base_grad
    _, g = model.loss_and_grad(traj.final_perturbed, batch)
    return g


def msam_direction(model, params, batch, cfg: OptimizerConfig) -> np.ndarray:
    """Weighted sum of the gradients at the raw ascent points p_1..p_N."""
    if cfg.ascent.rho == 0.0:
        return sgd_direction(model, params, batch)
    traj = ascent_multi(model, params, batch, cfg.ascent, endpoint_grad=True)
    if traj.degenerate:
        return traj.base_grad
    grads = traj.intermediate_grads
    weights = list(cfg.msam_weights[: len(grads)])
    total = sum(weights)
    if total <= 0.0:
        return grads[-1]
    if len(grads) < cfg.ascent.steps:
        weights = [x / total for x in weights]
    out = np.zeros_like(traj.base)
    for wt, g in zip(weights, grads):
        out = out + wt * g
    return out


def update_direction(model, params, batch, cfg: OptimizerConfig) -> np.ndarray:
    if cfg.kind == "sgd":
        return sgd_direction(model, params, batch)
    if cfg.kind == "sam":
        return sam_direction(model, params, batch, cfg)
    return msam_direction(model, params, batch, cfg)


def sgd_step(model, params, batch, lr: float) -> np.ndarray:
    """``w - lr * g(w)``."""
    w = np.asarray(params, dtype=np.float64)
    return w - lr * sgd_direction(model, w, batch)


def sam_step(model, params, batch, cfg: OptimizerConfig) -> np.ndarray:
    if cfg.kind != "sam":
        raise ConfigError(f"sam_step needs kind='sam', got {cfg.kind!r}")
    w = np.asarray(params, dtype=np.float64)
    return w - cfg.lr * sam_direction(model, w, batch, cfg)


def msam_step(model, params, batch, cfg: OptimizerConfig) -> np.ndarray:
    if cfg.kind != "msam":
        raise ConfigError(f"msam_step needs kind='msam', got {cfg.kind!r}")
    w = np.asarray(params, dtype=np.float64)
    return w - cfg.lr * msam_direction(model, w, batch, cfg)


def step(model, params, batch, cfg: OptimizerConfig) -> np.ndarray:
    w = np.asarray(params, dtype=np.float64)
    return w - cfg.lr * update_direction(model, w, batch, cfg)
