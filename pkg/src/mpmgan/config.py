"""Run configuration: a strict JSON schema backed by pydantic."""

from __future__ import annotations

import json
from pathlib import Path
from typing import Literal, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from .data import NoiseSpec
from .objectives import ObjectiveKind

__all__ = ["TrainConfig", "RingDatasetSpec", "BlobDatasetSpec", "ConfigError", "load_config", "dump_config"]


class ConfigError(ValueError):
    pass


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", strict=True, frozen=True)


class RingDatasetSpec(_Strict):
    kind: Literal["ring_mixture"] = "ring_mixture"
    k: int = Field(8, ge=1)
    radius: float = 2.0
    sigma: float = Field(0.02, gt=0)
    n: int = Field(20000, ge=1)


class BlobDatasetSpec(_Strict):
    kind: Literal["labeled_blobs"] = "labeled_blobs"
    k: int = Field(3, ge=1)
    spread: float = 2.0
    sigma: float = Field(0.1, gt=0)
    n: int = Field(20000, ge=1)
    centers: Union[list[list[float]], None] = None


class TrainConfig(_Strict):
    generator_mode: Literal["vanilla", "competing", "conceding"] = "vanilla"
    message_mode: Literal["none", "message_passing", "conditioned_message_passing"] = "none"
    noise1: Literal["uniform_pm1", "normal01"] = "uniform_pm1"
    noise2: Literal["uniform_pm1", "normal01"] = "normal01"
    noise_dim: int = Field(4, ge=1)
    msg_dim: int = Field(8, ge=1)
    data_dim: int = Field(2, ge=1)
    hidden: int = Field(64, ge=1)
    dataset: Union[RingDatasetSpec, BlobDatasetSpec] = Field(default_factory=RingDatasetSpec, discriminator="kind")
    lr: float = Field(2e-4, gt=0)
    beta1: float = Field(0.5, ge=0, lt=1)
    beta2: float = Field(0.999, ge=0, lt=1)
    eps: float = Field(1e-8, gt=0)
    n_iters: int = Field(2000, ge=0)
    batch: int = Field(128, ge=1)
    seed: int = Field(42, ge=0)
    checkpoint_every: int = Field(500, ge=1)
    out_dir: str = "runs/default"
    detach_messages: bool = False
    non_saturating: bool = False
    shared_msg_gen: bool = True
    single_generator: bool = False

    @model_validator(mode="after")
    def _consistent(self):
        if self.single_generator and self.message_mode != "none":
            raise ValueError("single_generator requires message_mode 'none'")
        if self.single_generator and self.generator_mode != "vanilla":
            raise ValueError("single_generator requires generator_mode 'vanilla'")
        if self.data_dim != 2:
            raise ValueError("synthetic datasets are two-dimensional; data_dim must be 2")
        return self

    @property
    def objective(self) -> ObjectiveKind:
        return ObjectiveKind(self.generator_mode, self.message_mode)

    @property
    def noise_spec1(self) -> NoiseSpec:
        return NoiseSpec(self.noise1, self.noise_dim)

    @property
    def noise_spec2(self) -> NoiseSpec:
        return NoiseSpec(self.noise2, self.noise_dim)

    def to_dict(self) -> dict:
        return self.model_dump(mode="json")

    @classmethod
    def from_dict(cls, data: dict) -> "TrainConfig":
        try:
            return cls.model_validate(data)
        except ValidationError as exc:
            raise ConfigError(_describe(exc)) from None


def _describe(exc: ValidationError) -> str:
    lines = []
    for err in exc.errors():
        loc = ".".join(str(p) for p in err["loc"]) or "<root>"
        if err["type"] == "extra_forbidden":
            lines.append(f"unknown key {loc!r}")
        else:
            lines.append(f"key {loc!r}: {err['msg']} (got {err.get('input')!r})")
    return "; ".join(lines)


def load_config(path: str | Path) -> TrainConfig:
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a JSON object")
    return TrainConfig.from_dict(data)


def dump_config(config: TrainConfig) -> str:
    return json.dumps(config.to_dict(), indent=2, sort_keys=True) + "\n"
