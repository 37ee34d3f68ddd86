"""Run configuration: TOML file schema, validation and a key-order-stable hash.

Example::

    name = "msam2-spirals"
    epochs = 60
    batch_size = 64
    seeds = [0, 1, 2]
    lr_schedule = "constant"      # or "cosine"

    [model]
    widths = [2, 64, 64, 2]
    activation = "tanh"
    loss = "softmax_ce"

    [dataset]
    kind = "two-spirals"
    n_train = 512
    n_test = 2000
    label_noise = 0.2
    seed = 0

    [optimizer]
    kind = "msam"                 # sgd | sam | msam
    lr = 0.05
    momentum = 0.9
    rho = 0.1
    steps = 2
    step_ratio = "1:2"            # optional; overrides the rho/N default

    [analysis]
    probes = ["ray", "cosine"]    # run on each final checkpoint
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path
from typing import Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .data import DatasetSpec
from .errors import ConfigError
from .models import ModelSpec
from .optim import AscentConfig, OptimizerConfig, parse_ratio

try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib

PROBES = ("ray", "grid", "cosine", "decrease", "spectrum", "perturbed")


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid")


class ModelSection(_Section):
    widths: list[int] = Field(default_factory=lambda: [2, 64, 64, 2], min_length=2)
    activation: Union[str, list[str]] = "tanh"
    loss: Literal["softmax_ce", "mse"] = "softmax_ce"

    @field_validator("widths")
    @classmethod
    def _positive(cls, v):
        if any(w <= 0 for w in v):
            raise ValueError("layer widths must be positive")
        return v

    def to_spec(self, init_seed: int = 0) -> ModelSpec:
        act = self.activation if isinstance(self.activation, str) else tuple(self.activation)
        return ModelSpec(tuple(self.widths), act, self.loss, init_seed)


class DatasetSection(_Section):
    kind: Literal["gaussian-blobs", "two-spirals", "noisy-rings", "random-regression"] = "gaussian-blobs"
    n_train: int = Field(256, ge=1)
    n_test: int = Field(256, ge=0)
    n_classes: int = Field(2, ge=1)
    label_noise: float = Field(0.0, ge=0.0, lt=1.0)
    seed: int = 0
    input_dim: int = Field(2, ge=1)
    spread: Optional[float] = Field(None, ge=0.0)

    def to_spec(self) -> DatasetSpec:
        return DatasetSpec(**self.model_dump())


class OptimizerSection(_Section):
    kind: Literal["sgd", "sam", "msam"] = "sgd"
    lr: float = Field(0.05, gt=0.0)
    momentum: float = Field(0.0, ge=0.0, lt=1.0)
    rho: float = Field(0.0, ge=0.0)
    steps: int = Field(1, ge=1)
    step_ratio: Optional[Union[str, list[float]]] = None
    renormalize_final: bool = True
    msam_weights: Optional[list[float]] = None

    def ascent(self) -> AscentConfig:
        if self.step_ratio is not None:
            ratio = parse_ratio(self.step_ratio) if isinstance(self.step_ratio, str) else self.step_ratio
            if len(ratio) != self.steps:
                raise ConfigError(f"optimizer.step_ratio has {len(ratio)} parts but steps = {self.steps}")
            return AscentConfig.from_ratio(self.rho, ratio, renormalize_final=self.renormalize_final)
        return AscentConfig(rho=self.rho, steps=self.steps, renormalize_final=self.renormalize_final)

    def to_config(self) -> OptimizerConfig:
        weights = tuple(self.msam_weights) if self.msam_weights is not None else None
        return OptimizerConfig(kind=self.kind, lr=self.lr, ascent=self.ascent(), msam_weights=weights)


class AnalysisSection(_Section):
    probes: list[str] = Field(default_factory=list)
    rho: Optional[float] = Field(None, ge=0.0)
    steps: int = Field(5, ge=1)

    @field_validator("probes")
    @classmethod
    def _known(cls, v):
        bad = [p for p in v if p not in PROBES]
        if bad:
            raise ValueError(f"unknown probe(s) {bad}; valid: {', '.join(PROBES)}")
        return v


class RunConfig(_Section):
    name: str = "run"
    epochs: int = Field(20, ge=0)
    batch_size: int = Field(64, ge=1)
    lr_schedule: Literal["constant", "cosine"] = "constant"
    seeds: list[int] = Field(default_factory=lambda: [0], min_length=1)
    out_dir: Optional[str] = None
    model: ModelSection = Field(default_factory=ModelSection)
    dataset: DatasetSection = Field(default_factory=DatasetSection)
    optimizer: OptimizerSection = Field(default_factory=OptimizerSection)
    analysis: AnalysisSection = Field(default_factory=AnalysisSection)

    @model_validator(mode="after")
    def _consistent(self):
        ds = self.dataset
        n_out = 1 if ds.kind == "random-regression" else ds.n_classes
        n_in = ds.input_dim if ds.kind == "random-regression" else 2
        if self.model.widths[0] != n_in:
            raise ValueError(f"model.widths[0] = {self.model.widths[0]} but dataset has {n_in} input features")
        if self.model.widths[-1] != n_out:
            raise ValueError(f"model.widths[-1] = {self.model.widths[-1]} but dataset needs {n_out} outputs")
        if ds.kind == "random-regression" and self.model.loss != "mse":
            raise ValueError("random-regression requires model.loss = 'mse'")
        if self.batch_size > ds.n_train:
            raise ValueError(f"batch_size {self.batch_size} exceeds dataset.n_train {ds.n_train}")
        return self

    def validate_specs(self) -> None:
        """Build every nested spec once so their own checks run."""
        self.model.to_spec()
        self.dataset.to_spec()
        self.optimizer.to_config()

    def canonical(self) -> dict:
        """Config content that defines results (output location excluded)."""
        return self.model_dump(mode="json", exclude={"out_dir"})

    def config_hash(self) -> str:
        return config_hash(self.canonical())


def config_hash(data: dict) -> str:
    blob = json.dumps(data, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


def _format_validation_error(exc: ValidationError, source: str) -> str:
    lines = []
    for err in exc.errors():
        loc = ".".join(str(p) for p in err["loc"]) or "<root>"
        lines.append(f"{source}: field {loc}: {err['msg']}")
    return "\n".join(lines)


def parse_config(data: dict, source: str = "<config>") -> RunConfig:
    try:
        cfg = RunConfig.model_validate(data)
        cfg.validate_specs()
    except ValidationError as exc:
        raise ConfigError(_format_validation_error(exc, source)) from None
    except ConfigError as exc:
        raise ConfigError(f"{source}: {exc}") from None
    return cfg


def load_config(path: str | Path) -> RunConfig:
    path = Path(path)
    text = path.read_text(encoding="utf-8")  # OSError propagates: an I/O failure, not a bad config
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        # message carries "(at line L, column C)"
        raise ConfigError(f"{path}: {exc}") from None
    return parse_config(data, str(path))
