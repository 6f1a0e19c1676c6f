"""Run configuration files (JSON) bundling every config section of a run."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError
from .losses import LossWeights
from .models import DiscriminatorConfig, FeatureNetSpec, GeneratorConfig
from .training import TrainConfig

SECTIONS = ("train", "generator", "discriminator", "loss_weights", "feature_net", "data", "seed")
DATA_KEYS = ("train", "eval")


@dataclass(frozen=True)
class RunConfigFile:
    train: TrainConfig = field(default_factory=TrainConfig)
    generator: GeneratorConfig = field(default_factory=GeneratorConfig)
    discriminator: DiscriminatorConfig = field(default_factory=DiscriminatorConfig)
    feature_net: FeatureNetSpec = field(default_factory=FeatureNetSpec)
    data: dict = field(default_factory=dict)
    seed: int = 0

    @property
    def loss_weights(self):
        return self.train.loss_weights

    def to_dict(self):
        train = self.train.to_dict()
        weights = train.pop("loss_weights")
        return {
            "train": train,
            "generator": self.generator.to_dict(),
            "discriminator": self.discriminator.to_dict(),
            "loss_weights": weights,
            "feature_net": self.feature_net.to_dict(),
            "data": dict(self.data),
            "seed": self.seed,
        }

    def dumps(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, raw):
        if not isinstance(raw, dict):
            raise ConfigError("run config must be a JSON object")
        unknown = set(raw) - set(SECTIONS)
        if unknown:
            raise ConfigError(f"unknown config sections {sorted(unknown)}")
        seed = raw.get("seed", 0)
        if not isinstance(seed, int) or isinstance(seed, bool) or seed < 0:
            raise ConfigError(f"seed must be a non-negative integer, got {seed!r}")
        data = raw.get("data", {})
        if not isinstance(data, dict) or set(data) - set(DATA_KEYS):
            raise ConfigError(f"data section accepts only {DATA_KEYS}")
        train = dict(raw.get("train", {}))
        if "loss_weights" in train:
            raise ConfigError("loss_weights belongs in its own section")
        train.setdefault("seed", seed)
        try:
            weights = LossWeights.from_dict(raw.get("loss_weights", {}))
            return cls(
                train=TrainConfig.from_dict({**train, "loss_weights": weights}),
                generator=GeneratorConfig.from_dict(raw.get("generator", {})),
                discriminator=DiscriminatorConfig.from_dict(raw.get("discriminator", {})),
                feature_net=FeatureNetSpec.from_dict(raw.get("feature_net", {})),
                data=dict(data),
                seed=seed,
            )
        except TypeError as exc:
            raise ConfigError(str(exc)) from None

    @classmethod
    def loads(cls, text):
        try:
            raw = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from None
        return cls.from_dict(raw)

    @classmethod
    def load(cls, path):
        return cls.loads(Path(path).read_text())

    def save(self, path):
        Path(path).write_text(self.dumps())
