"""Synthetic datasets, seeded batching and CSV export/import."""

from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError
from .models import Batch
from .rng import Xoshiro256

KINDS = ("gaussian-blobs", "two-spirals", "noisy-rings", "random-regression")


@dataclass(frozen=True)
class DatasetSpec:
    kind: str = "gaussian-blobs"
    n_train: int = 256
    n_test: int = 256
    n_classes: int = 2
    label_noise: float = 0.0
    seed: int = 0
    input_dim: int = 2
    spread: float | None = None

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise ConfigError(f"unknown dataset kind {self.kind!r}; expected one of {KINDS}")
        if self.n_train < 1 or self.n_test < 0:
            raise ConfigError("need n_train >= 1 and n_test >= 0")
        if not 0.0 <= self.label_noise < 1.0:
            raise ConfigError(f"label_noise must lie in [0, 1), got {self.label_noise}")
        if self.kind == "random-regression":
            if self.label_noise > 0.0:
                raise ConfigError("label_noise is undefined for random-regression")
            if self.input_dim < 1:
                raise ConfigError("input_dim must be positive")
        else:
            if self.n_classes < 2:
                raise ConfigError("classification datasets need n_classes >= 2")
            if self.kind == "two-spirals" and self.n_classes != 2:
                raise ConfigError("two-spirals has exactly 2 classes")
            if self.input_dim != 2:
                raise ConfigError(f"{self.kind} is two-dimensional (input_dim = 2)")

    @property
    def is_regression(self) -> bool:
        return self.kind == "random-regression"

    @property
    def n_outputs(self) -> int:
        return 1 if self.is_regression else self.n_classes

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class Dataset:
    spec: DatasetSpec
    x_train: np.ndarray
    y_train: np.ndarray
    x_test: np.ndarray
    y_test: np.ndarray
    flipped: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))

    def targets(self, y: np.ndarray) -> np.ndarray:
        """Training targets as a float matrix (one-hot for classification)."""
        if self.spec.is_regression:
            return np.asarray(y, dtype=np.float64).reshape(-1, 1)
        return np.eye(self.spec.n_classes)[np.asarray(y, dtype=np.int64)]

    @property
    def train_targets(self) -> np.ndarray:
        return self.targets(self.y_train)

    @property
    def test_targets(self) -> np.ndarray:
        return self.targets(self.y_test)

    def split(self, name: str) -> tuple[np.ndarray, np.ndarray]:
        if name == "train":
            return self.x_train, self.train_targets
        if name == "test":
            return self.x_test, self.test_targets
        raise ConfigError(f"unknown split {name!r}")

    def full_batch(self, split: str = "train") -> Batch:
        x, t = self.split(split)
        return Batch(x, t, index=0, epoch=0, rows=np.arange(len(x)))

    def first_batch(self, batch_size: int) -> Batch:
        """The first ``batch_size`` training rows in stored order."""
        n = min(batch_size, len(self.x_train))
        return Batch(self.x_train[:n], self.train_targets[:n], index=0, epoch=0, rows=np.arange(n))


# -- generators ---------------------------------------------------------

def _balanced_labels(n: int, k: int) -> np.ndarray:
    return np.arange(n, dtype=np.int64) % k


def _blobs(rng: Xoshiro256, n: int, k: int, spread: float) -> tuple[np.ndarray, np.ndarray]:
    labels = _balanced_labels(n, k)
    angles = 2.0 * math.pi * labels / k
    centers = 3.0 * np.stack([np.cos(angles), np.sin(angles)], axis=1)
    return centers + spread * rng.normal(2 * n).reshape(n, 2), labels


def _spirals(rng: Xoshiro256, n: int, spread: float) -> tuple[np.ndarray, np.ndarray]:
    labels = _balanced_labels(n, 2)
    u = np.array([rng.random() for _ in range(n)])
    t = 0.25 * math.pi + np.sqrt(u) * 2.5 * math.pi
    sign = np.where(labels == 0, 1.0, -1.0)[:, None]
    base = np.stack([t * np.cos(t), t * np.sin(t)], axis=1) / (2.0 * math.pi)
    return sign * base + spread * rng.normal(2 * n).reshape(n, 2), labels


def _rings(rng: Xoshiro256, n: int, k: int, spread: float) -> tuple[np.ndarray, np.ndarray]:
    labels = _balanced_labels(n, k)
    theta = np.array([2.0 * math.pi * rng.random() for _ in range(n)])
    radius = 1.0 + labels + spread * rng.normal(n)
    return np.stack([radius * np.cos(theta), radius * np.sin(theta)], axis=1), labels


def _regression(rng: Xoshiro256, teacher: np.ndarray, n: int, spread: float) -> tuple[np.ndarray, np.ndarray]:
    d = teacher.size
    x = rng.normal(n * d).reshape(n, d)
    return x, x @ teacher + spread * rng.normal(n)


_DEFAULT_SPREAD = {"gaussian-blobs": 0.6, "two-spirals": 0.08, "noisy-rings": 0.2, "random-regression": 0.1}


def _draw(spec: DatasetSpec, rng: Xoshiro256, n: int, teacher) -> tuple[np.ndarray, np.ndarray]:
    spread = _DEFAULT_SPREAD[spec.kind] if spec.spread is None else spec.spread
    if spec.kind == "gaussian-blobs":
        return _blobs(rng, n, spec.n_classes, spread)
    if spec.kind == "two-spirals":
        return _spirals(rng, n, spread)
    if spec.kind == "noisy-rings":
        return _rings(rng, n, spec.n_classes, spread)
    return _regression(rng, teacher, n, spread)


def generate_dataset(spec: DatasetSpec) -> Dataset:
    """Draw train and test splits from disjoint seed streams.

    Label noise touches the training split only: exactly ``floor(rate * n_train)``
    rows, chosen by the ``noise`` stream, get a different label.
    """
    teacher = None
    if spec.is_regression:
        teacher = Xoshiro256(spec.seed, stream="teacher").normal(spec.input_dim)
    x_tr, y_tr = _draw(spec, Xoshiro256(spec.seed, stream="train"), spec.n_train, teacher)
    x_te, y_te = _draw(spec, Xoshiro256(spec.seed, stream="test"), spec.n_test, teacher)
    flipped = np.zeros(0, dtype=np.int64)
    n_flip = int(math.floor(spec.label_noise * spec.n_train))
    if n_flip:
        rng = Xoshiro256(spec.seed, stream="noise")
        flipped = np.sort(rng.sample_without_replacement(spec.n_train, n_flip))
        y_tr = y_tr.copy()
        k = spec.n_classes
        for i in flipped:
            y_tr[i] = (y_tr[i] + 1 + rng.below(k - 1)) % k
    if x_te.size == 0:
        x_te = x_te.reshape(0, x_tr.shape[1])
    return Dataset(spec, x_tr, y_tr, x_te, y_te, flipped)


def batch_iterator(dataset: Dataset, batch_size: int, shuffle_seed: int, epoch: int = 0,
                   split: str = "train") -> list[Batch]:
    """One epoch of batches; the row order is a seeded permutation, last short batch kept."""
    x, t = dataset.split(split)
    n = len(x)
    if batch_size < 1:
        raise ConfigError("batch_size must be >= 1")
    if batch_size > n:
        raise ConfigError(f"batch_size {batch_size} exceeds dataset size {n}")
    perm = Xoshiro256(shuffle_seed, stream=f"epoch:{epoch}").permutation(n)
    return [
        Batch(x[rows], t[rows], index=i, epoch=epoch, rows=rows)
        for i, rows in enumerate(perm[start:start + batch_size] for start in range(0, n, batch_size))
    ]


def sequential_batches(dataset: Dataset, batch_size: int, split: str = "train") -> list[Batch]:
    """Batches in stored order, for full-set evaluation."""
    x, t = dataset.split(split)
    n = len(x)
    return [
        Batch(x[s:s + batch_size], t[s:s + batch_size], index=i, rows=np.arange(s, min(n, s + batch_size)))
        for i, s in enumerate(range(0, n, batch_size))
    ]


# -- CSV ------------------------------------------------------------------

def export_csv(dataset: Dataset, directory: str | Path) -> list[Path]:
    """Write ``train.csv`` and ``test.csv`` with header ``x0,...,x{d-1},label``."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = []
    for split, x, y in (("train", dataset.x_train, dataset.y_train), ("test", dataset.x_test, dataset.y_test)):
        path = directory / f"{split}.csv"
        with path.open("w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow([f"x{j}" for j in range(dataset.x_train.shape[1])] + ["label"])
            for row, label in zip(x, y):
                lab = repr(float(label)) if dataset.spec.is_regression else str(int(label))
                writer.writerow([repr(float(v)) for v in row] + [lab])
        paths.append(path)
    return paths


def read_split_csv(path: str | Path, regression: bool = False) -> tuple[np.ndarray, np.ndarray]:
    with Path(path).open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header[-1] != "label" or not all(h == f"x{j}" for j, h in enumerate(header[:-1])):
            raise ConfigError(f"{path}: unexpected header {header}")
        rows = list(reader)
    d = len(header) - 1
    x = np.array([[float(v) for v in r[:d]] for r in rows], dtype=np.float64).reshape(len(rows), d)
    conv = float if regression else int
    y = np.array([conv(r[d]) for r in rows])
    return x, y


def import_csv(spec: DatasetSpec, directory: str | Path) -> Dataset:
    directory = Path(directory)
    x_tr, y_tr = read_split_csv(directory / "train.csv", spec.is_regression)
    x_te, y_te = read_split_csv(directory / "test.csv", spec.is_regression)
    return Dataset(spec, x_tr, y_tr, x_te, y_te)
