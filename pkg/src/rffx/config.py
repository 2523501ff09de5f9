"""Composed experiment configuration: JSON round trip and dotted overrides.

An experiment bundles four sections: dataset synthesis, model sizes, loss
weights, and optimization. Serialized form is plain JSON; infinite SNR is
stored as null. Unknown keys are rejected everywhere so typos fail loudly.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from .datasets import DatasetConfig, JitterChannel
from .exceptions import ConfigurationError
from .losses import LossConfig
from .models import ModelConfig
from .signals import ChannelSpec, ProfileSpread
from .training import TrainConfig


def _strict(cls_, d: dict):
    known = {f.name for f in fields(cls_)}
    extra = set(d) - known
    if extra:
        raise ConfigurationError(f"unknown {cls_.__name__} keys {sorted(extra)}")


def _listify(obj):
    if isinstance(obj, (tuple, list)):
        return [_listify(v) for v in obj]
    if isinstance(obj, dict):
        return {k: _listify(v) for k, v in obj.items()}
    return obj


def dataset_to_dict(cfg: DatasetConfig) -> dict:
    d = _listify(asdict(cfg))
    for key in ("known_test_channel", "unknown_test_channel"):
        if math.isinf(d[key]["snr_db"]):
            d[key]["snr_db"] = None
    return d


def dataset_from_dict(d: dict) -> DatasetConfig:
    _strict(DatasetConfig, d)
    d = dict(d)
    if isinstance(d.get("train_channel"), dict):
        jc = d["train_channel"]
        _strict(JitterChannel, jc)
        d["train_channel"] = JitterChannel(**{k: tuple(v) for k, v in jc.items()})
    for key in ("known_test_channel", "unknown_test_channel"):
        if isinstance(d.get(key), dict):
            ch = dict(d[key])
            _strict(ChannelSpec, ch)
            if ch.get("snr_db") is None:
                ch["snr_db"] = float("inf")
            d[key] = ChannelSpec(**ch)
    if isinstance(d.get("profile_spread"), dict):
        ps = dict(d["profile_spread"])
        _strict(ProfileSpread, ps)
        if "pa_a3_range" in ps:
            ps["pa_a3_range"] = tuple(ps["pa_a3_range"])
        d["profile_spread"] = ProfileSpread(**ps)
    return DatasetConfig(**d)


def loss_from_dict(d: dict) -> LossConfig:
    _strict(LossConfig, d)
    return LossConfig(**d)


@dataclass
class ExperimentConfig:
    """All settings for one experiment, grouped by concern."""

    dataset: DatasetConfig = field(default_factory=DatasetConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    loss: LossConfig = field(default_factory=LossConfig)
    train: TrainConfig = field(default_factory=TrainConfig)

    def to_dict(self) -> dict:
        return {"dataset": dataset_to_dict(self.dataset),
                "model": self.model.to_dict(),
                "loss": asdict(self.loss),
                "train": self.train.to_dict()}

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        _strict(cls, d)
        kwargs = {}
        if "dataset" in d:
            kwargs["dataset"] = dataset_from_dict(d["dataset"])
        if "model" in d:
            kwargs["model"] = ModelConfig.from_dict(d["model"])
        if "loss" in d:
            kwargs["loss"] = loss_from_dict(d["loss"])
        if "train" in d:
            train = dict(d["train"])
            if isinstance(train.get("adam_betas"), list):
                train["adam_betas"] = tuple(train["adam_betas"])
            if isinstance(train.get("aug_snr_range"), list):
                train["aug_snr_range"] = tuple(train["aug_snr_range"])
            kwargs["train"] = TrainConfig.from_dict(train)
        return cls(**kwargs)


def default_config() -> ExperimentConfig:
    return ExperimentConfig()


def desk_config(seed: int = 0) -> ExperimentConfig:
    """Reduced-size preset for CPU-only desk experiments.

    The extractor keeps enough depth to overfit the training channel within
    30 epochs (the generalization-trend experiments need that headroom), the
    U-nets are slimmed to keep a full disentangling run under half an hour,
    and the unknown-device split uses a harsher channel draw (lower SNR,
    flatter power-delay profile) so channel-robustness differences between
    training methods are visible at this scale.
    """
    return ExperimentConfig(
        dataset=DatasetConfig(
            unknown_test_channel=ChannelSpec("multipath_fir", snr_db=15.0,
                                             num_taps=5, pdp_decay=0.3)),
        model=ModelConfig(complexity=18, embed_dim=96, base_width=24,
                          width_cap=192, unet_widths=(16, 32, 64, 128)),
        train=TrainConfig(epochs=30, batch_size=32, seed=seed),
    )


def save_config(cfg: ExperimentConfig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        json.dump(cfg.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        with open(path) as fh:
            d = json.load(fh)
    except FileNotFoundError:
        raise ConfigurationError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"unparseable config {path}: {exc}") from exc
    if not isinstance(d, dict):
        raise ConfigurationError(f"config {path} must hold a JSON object")
    return ExperimentConfig.from_dict(d)


def apply_overrides(cfg: ExperimentConfig, overrides) -> ExperimentConfig:
    """Apply `section.key=value` strings; values parse as JSON, else raw text.

    Every dotted path must already exist in the serialized config, so a typo
    raises instead of silently adding a dead key.
    """
    d = cfg.to_dict()
    for item in overrides:
        if "=" not in item:
            raise ConfigurationError(f"override must look like section.key=value, got {item!r}")
        dotted, raw = item.split("=", 1)
        keys = dotted.strip().split(".")
        if len(keys) < 2 or not all(keys):
            raise ConfigurationError(f"override path must be section.key, got {dotted!r}")
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        node = d
        for key in keys[:-1]:
            if not isinstance(node, dict) or key not in node:
                raise ConfigurationError(f"unknown config path {dotted!r}")
            node = node[key]
        if not isinstance(node, dict) or keys[-1] not in node:
            raise ConfigurationError(f"unknown config path {dotted!r}")
        node[keys[-1]] = value
    return ExperimentConfig.from_dict(d)
