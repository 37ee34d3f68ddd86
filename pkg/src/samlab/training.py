"""Seeded training loop around the optimizer update rules."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .config import RunConfig
from .data import Dataset, DatasetSpec, batch_iterator, generate_dataset
from .errors import NumericalAbort
from .models import MLP, ModelSpec, accuracy, init_params
from .optim import update_direction


@dataclass
class MetricRow:
    epoch: int
    split: str
    loss: float
    accuracy: float


@dataclass
class TrainedModel:
    spec: ModelSpec
    params: np.ndarray
    dataset_spec: DatasetSpec
    batch_size: int
    seed: int
    method: str
    metrics: list[MetricRow] = field(default_factory=list)
    probe_batch_loss: float = float("nan")

    @property
    def model(self) -> MLP:
        return MLP(self.spec)

    def final(self, split: str) -> MetricRow | None:
        rows = [r for r in self.metrics if r.split == split]
        return rows[-1] if rows else None


def lr_at(base_lr: float, schedule: str, step: int, total_steps: int) -> float:
    if schedule == "cosine" and total_steps > 0:
        return base_lr * 0.5 * (1.0 + math.cos(math.pi * step / total_steps))
    return base_lr


def evaluate(model: MLP, params: np.ndarray, dataset: Dataset, split: str) -> tuple[float, float]:
    x, t = dataset.split(split)
    if len(x) == 0:
        return float("nan"), float("nan")
    batch = dataset.full_batch(split)
    return model.loss(params, batch), accuracy(model, params, x, t)


def train(run: RunConfig, seed: int | None = None, dataset: Dataset | None = None) -> TrainedModel:
    """Train one seed of ``run``.

    The seed drives weight initialization and the per-epoch shuffle; the
    dataset comes from its own generation seed so all runs share it.
    Divergence raises ``NumericalAbort`` carrying the last finite parameters.
    """
    with np.errstate(over="ignore", invalid="ignore"):
        return _train(run, seed, dataset)


def _train(run: RunConfig, seed: int | None, dataset: Dataset | None) -> TrainedModel:
    seed = run.seeds[0] if seed is None else int(seed)
    if dataset is None:
        dataset = generate_dataset(run.dataset.to_spec())
    spec = run.model.to_spec(init_seed=seed)
    model = MLP(spec)
    params = init_params(spec)
    opt = run.optimizer.to_config()
    momentum = run.optimizer.momentum
    steps_per_epoch = math.ceil(len(dataset.x_train) / run.batch_size)
    total = run.epochs * steps_per_epoch
    buf = None
    metrics: list[MetricRow] = []
    t = 0
    for epoch in range(run.epochs):
        for batch in batch_iterator(dataset, run.batch_size, shuffle_seed=seed, epoch=epoch):
            d = update_direction(model, params, batch, opt)
            if momentum > 0.0:
                buf = d if buf is None else momentum * buf + d
                d = buf
            new = params - lr_at(opt.lr, run.lr_schedule, t, total) * d
            if not np.all(np.isfinite(new)):
                raise NumericalAbort(
                    f"non-finite parameters at epoch {epoch}, batch {batch.index}",
                    params=params, epoch=epoch, batch_index=batch.index,
                )
            params = new
            t += 1
        for split in ("train", "test"):
            loss, acc = evaluate(model, params, dataset, split)
            if split == "train" and not math.isfinite(loss):
                raise NumericalAbort(f"non-finite training loss after epoch {epoch}",
                                     params=params, epoch=epoch, batch_index=steps_per_epoch - 1)
            metrics.append(MetricRow(epoch + 1, split, loss, acc))
    return TrainedModel(
        spec=spec,
        params=params,
        dataset_spec=dataset.spec,
        batch_size=run.batch_size,
        seed=seed,
        method=opt.label,
        metrics=metrics,
        probe_batch_loss=model.loss(params, dataset.first_batch(run.batch_size)),
    )
