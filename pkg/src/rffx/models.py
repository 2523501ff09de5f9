"""Convolutional networks and checkpoint handling.

Three networks operate on (2, 16, 80) signal images: a plain convolutional
fingerprint extractor producing an embedding, and two U-nets sharing one core
layout: a background extractor that perturbs the bottleneck with Gaussian
noise, and a signal generator that injects a projected embedding there
instead. A weight-normalized hypersphere head turns embeddings into class
probabilities.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import torch
import torch.nn as nn

from .exceptions import (
    ConfigurationError,
    DegenerateEmbeddingError,
    FormatError,
    ShapeError,
)

CHECKPOINT_FORMAT_VERSION = 1


@dataclass
class ModelConfig:
    """Sizes for all three networks.

    complexity is the total number of extractor conv layers, spread evenly
    over its resolution stages; width doubles from base_width at each stage up
    to width_cap. unet_widths is the encoder channel schedule shared by the
    background extractor and generator.
    """

    complexity: int = 18
    embed_dim: int = 128
    base_width: int = 32
    width_cap: int = 512
    unet_widths: tuple = (32, 64, 128, 256, 512)
    input_shape: tuple = (2, 16, 80)
    leaky_slope: float = 0.2

    def __post_init__(self):
        self.unet_widths = tuple(int(w) for w in self.unet_widths)
        self.input_shape = tuple(int(s) for s in self.input_shape)
        if self.complexity < 2:
            raise ConfigurationError(f"complexity must be >= 2, got {self.complexity}")
        if self.embed_dim < 2:
            raise ConfigurationError(f"embed_dim must be >= 2, got {self.embed_dim}")
        if self.base_width < 1 or self.width_cap < self.base_width:
            raise ConfigurationError("need 1 <= base_width <= width_cap")
        if len(self.unet_widths) < 2 or any(w < 1 for w in self.unet_widths):
            raise ConfigurationError(f"bad unet_widths {self.unet_widths}")
        if len(self.input_shape) != 3 or any(s < 1 for s in self.input_shape):
            raise ConfigurationError(f"bad input_shape {self.input_shape}")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["unet_widths"] = list(self.unet_widths)
        d["input_shape"] = list(self.input_shape)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        known = {f.name for f in cls.__dataclass_fields__.values()}
        extra = set(d) - known
        if extra:
            raise ConfigurationError(f"unknown model config keys {sorted(extra)}")
        return cls(**d)


def _check_image_batch(x: torch.Tensor, input_shape: tuple, who: str):
    if x.ndim != 4 or tuple(x.shape[1:]) != tuple(input_shape):
        raise ShapeError(f"{who} expects (B, {', '.join(map(str, input_shape))}), "
                         f"got {tuple(x.shape)}")


def _pool_plan(h: int, w: int) -> list:
    """Per-stage pooling kernels until the map is smaller than 3x3 both ways."""
    plan = []
    while h >= 3 or w >= 3:
        kh = 2 if h >= 2 else 1
        kw = 2 if w >= 2 else 1
        plan.append((kh, kw))
        h //= kh
        w //= kw
    return plan


def _batch_stat_norm(width: int) -> nn.BatchNorm2d:
    # Batch statistics in every mode. The three networks feed each other inside
    # one loop (the extractor embeds for the generator, the generator's output
    # flows back through the extractor), so exponential running averages track
    # a mixture of raw and synthesized batches and lag the live distribution,
    # corrupting both the synthesized signals and eval-time embeddings.
    return nn.BatchNorm2d(width, track_running_stats=False)


class FingerprintExtractor(nn.Module):
    """Stacked 3x3 conv + BN + LeakyReLU stages, pooled down, then one FC layer."""

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.cfg = cfg
        channels, h, w = cfg.input_shape
        plan = _pool_plan(h, w)
        num_stages = len(plan) + 1
        if cfg.complexity < num_stages:
            raise ConfigurationError(
                f"complexity {cfg.complexity} is below the {num_stages} stages needed "
                f"to reduce {h}x{w} maps below 3x3")
        per_stage, extra = divmod(cfg.complexity, num_stages)
        counts = [per_stage + (1 if i < extra else 0) for i in range(num_stages)]

        layers = []
        c_in = channels
        for stage, count in enumerate(counts):
            width = min(cfg.base_width * 2 ** stage, cfg.width_cap)
            for _ in range(count):
                layers += [nn.Conv2d(c_in, width, 3, padding=1),
                           _batch_stat_norm(width),
                           nn.LeakyReLU(cfg.leaky_slope)]
                c_in = width
            if stage < len(plan):
                layers.append(nn.MaxPool2d(plan[stage]))
                h //= plan[stage][0]
                w //= plan[stage][1]
        self.features = nn.Sequential(*layers)
        self.head = nn.Linear(c_in * h * w, cfg.embed_dim)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        _check_image_batch(x, self.cfg.input_shape, "extractor")
        feats = self.features(x)
        return self.head(feats.flatten(1))


class DoubleConv(nn.Module):
    """Two 3x3 stride-1 convolutions, each followed by BN and ReLU."""

    def __init__(self, c_in: int, c_out: int):
        super().__init__()
        self.block = nn.Sequential(
            nn.Conv2d(c_in, c_out, 3, padding=1), _batch_stat_norm(c_out), nn.ReLU(),
            nn.Conv2d(c_out, c_out, 3, padding=1), _batch_stat_norm(c_out), nn.ReLU(),
        )

    def forward(self, x):
        return self.block(x)


class DownConv(nn.Module):
    """2x2 max-pool halving both spatial dims, then a DoubleConv."""

    def __init__(self, c_in: int, c_out: int):
        super().__init__()
        self.pool = nn.MaxPool2d(2)
        self.conv = DoubleConv(c_in, c_out)

    def forward(self, x):
        if x.shape[-2] % 2 or x.shape[-1] % 2:
            raise ConfigurationError(
                f"down_conv needs even spatial dims, got {tuple(x.shape[-2:])}")
        return self.conv(self.pool(x))


class UpConv(nn.Module):
    """2x spatial upsampling followed by two conv + BN + ReLU layers."""

    def __init__(self, c_in: int, c_out: int):
        super().__init__()
        self.up = nn.Upsample(scale_factor=2, mode="nearest")
        self.conv = nn.Sequential(
            nn.Conv2d(c_in, c_out, 3, padding=1), _batch_stat_norm(c_out), nn.ReLU(),
            nn.Conv2d(c_out, c_out, 3, padding=1), _batch_stat_norm(c_out), nn.ReLU(),
        )

    def forward(self, x):
        return self.conv(self.up(x))


def catenate(a: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
    """Concatenate feature maps on the channel dimension."""
    if a.shape[0] != b.shape[0] or a.shape[-2:] != b.shape[-2:]:
        raise ShapeError(f"cannot catenate {tuple(a.shape)} with {tuple(b.shape)}")
    return torch.cat([a, b], dim=1)


def _bottleneck_hw(h: int, w: int, num_down: int) -> tuple:
    for _ in range(num_down):
        if h % 2 or w % 2:
            raise ConfigurationError(
                f"input {h}x{w} is not divisible through {num_down} halvings")
        h //= 2
        w //= 2
    return h, w


class UnetCore(nn.Module):
    """Shared U-net body: encoder, bottleneck access, skip-connected decoder."""

    def __init__(self, widths: tuple, io_channels: int, input_hw: tuple):
        super().__init__()
        widths = tuple(widths)
        num_down = len(widths) - 1
        hb, wb = _bottleneck_hw(input_hw[0], input_hw[1], num_down)
        self.bottleneck_shape = (widths[-1], hb, wb)

        self.inc = DoubleConv(io_channels, widths[0])
        self.downs = nn.ModuleList(
            DownConv(widths[i], widths[i + 1]) for i in range(num_down))
        ups = []
        for j in range(num_down):
            c_in = widths[-1] if j == 0 else 2 * widths[num_down - j]
            ups.append(UpConv(c_in, widths[num_down - 1 - j]))
        self.ups = nn.ModuleList(ups)
        self.out_conv = nn.Conv2d(2 * widths[0], io_channels, 3, padding=1)

    def encode(self, x):
        feats = [self.inc(x)]
        for down in self.downs[:-1]:
            feats.append(down(feats[-1]))
        bottleneck = self.downs[-1](feats[-1])
        return feats, bottleneck

    def decode(self, bottleneck, feats):
        x = bottleneck
        for up, skip in zip(self.ups, reversed(feats)):
            x = catenate(up(x), skip)
        return self.out_conv(x)


class BackgroundExtractor(nn.Module):
    """U-net that re-synthesizes the input with Gaussian noise injected at the bottleneck."""

    def __init__(self, widths=(32, 64, 128, 256, 512), input_shape=(2, 16, 80)):
        super().__init__()
        self.input_shape = tuple(input_shape)
        self.core = UnetCore(widths, self.input_shape[0], self.input_shape[1:])

    @property
    def bottleneck_shape(self) -> tuple:
        return self.core.bottleneck_shape

    def sample_noise(self, batch_size: int, generator=None, **kwargs) -> torch.Tensor:
        return torch.randn((batch_size, *self.bottleneck_shape), generator=generator, **kwargs)

    def forward(self, x: torch.Tensor, noise: torch.Tensor) -> torch.Tensor:
        _check_image_batch(x, self.input_shape, "background extractor")
        expected = (x.shape[0], *self.bottleneck_shape)
        if tuple(noise.shape) != expected:
            raise ShapeError(f"noise must have shape {expected}, got {tuple(noise.shape)}")
        feats, bottleneck = self.core.encode(x)
        return self.core.decode(bottleneck + noise, feats)


class SignalGenerator(nn.Module):
    """U-net that rebuilds a signal image from an embedding and a background image."""

    def __init__(self, embed_dim=128, widths=(32, 64, 128, 256, 512), input_shape=(2, 16, 80)):
        super().__init__()
        self.input_shape = tuple(input_shape)
        self.core = UnetCore(widths, self.input_shape[0], self.input_shape[1:])
        c, h, w = self.core.bottleneck_shape
        self.embed_dim = embed_dim
        self.project = nn.Linear(embed_dim, c * h * w)

    @property
    def bottleneck_shape(self) -> tuple:
        return self.core.bottleneck_shape

    def forward(self, embedding: torch.Tensor, background: torch.Tensor) -> torch.Tensor:
        _check_image_batch(background, self.input_shape, "generator")
        if embedding.ndim != 2 or embedding.shape != (background.shape[0], self.embed_dim):
            raise ShapeError(f"embedding must be ({background.shape[0]}, {self.embed_dim}), "
                             f"got {tuple(embedding.shape)}")
        feats, bottleneck = self.core.encode(background)
        injection = self.project(embedding).view(-1, *self.core.bottleneck_shape)
        return self.core.decode(bottleneck + injection, feats)


def hypersphere_project(z: torch.Tensor, radius: float = 10.0) -> torch.Tensor:
    """Scale embeddings onto the radius-delta hypersphere: radius * z / ||z||."""
    if radius <= 0:
        raise ConfigurationError(f"radius must be positive, got {radius}")
    norms = torch.linalg.vector_norm(z, dim=-1, keepdim=True)
    if torch.any(norms == 0):
        raise DegenerateEmbeddingError("cannot project a zero embedding onto the sphere")
    return radius * z / norms


class HypersphereClassifier(nn.Module):
    """Softmax over inner products of sphere-projected embeddings and unit weights."""

    def __init__(self, embed_dim: int, num_classes: int, radius: float = 10.0):
        super().__init__()
        if num_classes < 2:
            raise ConfigurationError(f"num_classes must be >= 2, got {num_classes}")
        if radius <= 0:
            raise ConfigurationError(f"radius must be positive, got {radius}")
        self.num_classes = num_classes
        self.radius = radius
        self.weight = nn.Parameter(torch.randn(num_classes, embed_dim))

    def logits(self, z: torch.Tensor) -> torch.Tensor:
        w_norms = torch.linalg.vector_norm(self.weight, dim=-1, keepdim=True)
        if torch.any(w_norms == 0):
            raise DegenerateEmbeddingError("classifier weight row collapsed to zero")
        return hypersphere_project(z, self.radius) @ (self.weight / w_norms).t()

    forward = logits

    def prob(self, z: torch.Tensor) -> torch.Tensor:
        # float64 keeps the rows summing to 1 well inside a 1e-7 budget
        return torch.softmax(self.logits(z).to(torch.float64), dim=-1)


def build_extractor(cfg: ModelConfig) -> FingerprintExtractor:
    return FingerprintExtractor(cfg)


def build_background(cfg: ModelConfig) -> BackgroundExtractor:
    return BackgroundExtractor(cfg.unet_widths, cfg.input_shape)


def build_generator(cfg: ModelConfig) -> SignalGenerator:
    return SignalGenerator(cfg.embed_dim, cfg.unet_widths, cfg.input_shape)


@dataclass
class Checkpoint:
    """A loaded checkpoint: networks plus the sidecar metadata."""

    extractor: FingerprintExtractor
    classifier: HypersphereClassifier
    background: BackgroundExtractor | None
    generator: SignalGenerator | None
    config: dict
    num_classes: int
    epoch: int
    seed: int
    loss_history: list = field(default_factory=list)


def save_checkpoint(prefix: str | Path, *, extractor, classifier, config: dict,
                    num_classes: int, epoch: int, seed: int, loss_history: list,
                    background=None, generator=None) -> tuple:
    """Write `<prefix>.pt` (parameter blob) and `<prefix>.json` (sidecar)."""
    prefix = Path(prefix)
    prefix.parent.mkdir(parents=True, exist_ok=True)
    blob = {"extractor": extractor.state_dict(), "classifier": classifier.state_dict()}
    if background is not None:
        blob["background"] = background.state_dict()
    if generator is not None:
        blob["generator"] = generator.state_dict()
    pt_path = prefix.with_suffix(".pt")
    torch.save(blob, pt_path)

    sidecar = {
        "format_version": CHECKPOINT_FORMAT_VERSION,
        "config": config,
        "num_classes": int(num_classes),
        "epoch": int(epoch),
        "seed": int(seed),
        "loss_history": loss_history,
    }
    json_path = prefix.with_suffix(".json")
    with open(json_path, "w") as fh:
        json.dump(sidecar, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return pt_path, json_path


def load_checkpoint(path: str | Path) -> Checkpoint:
    """Load a checkpoint from its prefix or either of its two file paths."""
    path = Path(path)
    if path.is_dir():
        pts = sorted(path.glob("*.pt"))
        if len(pts) != 1:
            raise FormatError(f"{path} must contain exactly one .pt file, found {len(pts)}")
        path = pts[0]
    prefix = path.with_suffix("")
    pt_path = prefix.with_suffix(".pt")
    json_path = prefix.with_suffix(".json")
    if not json_path.exists():
        raise FormatError(f"missing checkpoint sidecar {json_path}")
    if not pt_path.exists():
        raise FormatError(f"missing checkpoint blob {pt_path}")

    with open(json_path) as fh:
        try:
            sidecar = json.load(fh)
        except json.JSONDecodeError as exc:
            raise FormatError(f"unparseable sidecar {json_path}: {exc}") from exc
    for key in ("format_version", "config", "num_classes", "epoch", "seed", "loss_history"):
        if key not in sidecar:
            raise FormatError(f"sidecar {json_path} lacks required key {key!r}")
    if sidecar["format_version"] != CHECKPOINT_FORMAT_VERSION:
        raise FormatError(f"unsupported checkpoint format_version {sidecar['format_version']}")

    config = sidecar["config"]
    try:
        model_cfg = ModelConfig.from_dict(config["model"])
        radius = float(config["loss"]["radius"])
    except (KeyError, TypeError) as exc:
        raise FormatError(f"sidecar config is missing model/loss sections: {exc}") from exc

    blob = torch.load(pt_path, map_location="cpu", weights_only=True)
    extractor = build_extractor(model_cfg)
    extractor.load_state_dict(blob["extractor"])
    classifier = HypersphereClassifier(model_cfg.embed_dim, sidecar["num_classes"], radius)
    classifier.load_state_dict(blob["classifier"])
    background = generator = None
    if "background" in blob:
        background = build_background(model_cfg)
        background.load_state_dict(blob["background"])
    if "generator" in blob:
        generator = build_generator(model_cfg)
        generator.load_state_dict(blob["generator"])
    for net in (extractor, classifier, background, generator):
        if net is not None:
            net.eval()
    return Checkpoint(extractor, classifier, background, generator, config,
                      sidecar["num_classes"], sidecar["epoch"], sidecar["seed"],
                      sidecar["loss_history"])
