"""Alternating disentanglement training plus augmentation baselines.

Each minibatch of a disentangling run takes one step on the background
extractor and generator with the fingerprint side frozen, then one step on
the extractor and classifier with the reconstruction side frozen. The
extractor step swaps backgrounds across the batch to build its augmented
views. Baselines reduce to plain classification on raw (ml), noisy (awgn),
or filtered (fir) signals.
"""

from __future__ import annotations

import hashlib
import itertools
import json
import warnings
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import torch

from .exceptions import ConfigurationError
from .losses import (
    LossConfig,
    background_loss,
    extractor_loss,
    generator_loss,
    leakage_penalty,
    reconstruction_loss,
)
from .metrics import split_auc
from .models import (
    HypersphereClassifier,
    build_background,
    build_extractor,
    build_generator,
    save_checkpoint,
)
from .preprocessing import batch_to_images
from .signals import _complex_normal, draw_fir_taps

METHODS = ("dr", "ml", "awgn", "fir")
BASELINE_METHODS = ("ml", "awgn", "fir")

# Sub-stream tags hung off the run seed. Init streams are separate per
# network so that constructing the disentangling side cannot perturb the
# extractor or classifier draws shared with the baselines.
_S_EXTRACTOR = 10
_S_CLASSIFIER = 11
_S_BACKGROUND = 12
_S_GENERATOR = 13
_S_ORDER = 20
_S_TORCH = 21
_S_AUGMENT = 23


def stream_seed(seed: int, stream: int) -> int:
    return int(np.random.SeedSequence([seed, stream]).generate_state(1)[0])


@dataclass
class TrainConfig:
    """Optimization settings shared by all training methods."""

    epochs: int = 30
    batch_size: int = 32
    learning_rate: float = 1e-3
    adam_betas: tuple = (0.9, 0.999)
    method: str = "dr"
    seed: int = 0
    eval_every: int = 0
    qg_per_f: int = 1
    aug_snr_range: tuple | None = (5.0, 30.0)
    aug_fir_taps: int = 5

    def __post_init__(self):
        self.adam_betas = tuple(float(b) for b in self.adam_betas)
        if self.epochs < 0:
            raise ConfigurationError(f"epochs must be >= 0, got {self.epochs}")
        if self.batch_size < 2:
            raise ConfigurationError(f"batch_size must be >= 2, got {self.batch_size}")
        if self.learning_rate <= 0:
            raise ConfigurationError(f"learning_rate must be positive, got {self.learning_rate}")
        if len(self.adam_betas) != 2 or not all(0.0 <= b < 1.0 for b in self.adam_betas):
            raise ConfigurationError(f"adam_betas must be two values in [0, 1), got {self.adam_betas}")
        if self.method not in METHODS:
            raise ConfigurationError(f"method must be one of {METHODS}, got {self.method!r}")
        if self.seed < 0:
            raise ConfigurationError(f"seed must be >= 0, got {self.seed}")
        if self.eval_every < 0:
            raise ConfigurationError(f"eval_every must be >= 0, got {self.eval_every}")
        if self.qg_per_f < 1:
            raise ConfigurationError(f"qg_per_f must be >= 1, got {self.qg_per_f}")
        if self.aug_snr_range is not None:
            self.aug_snr_range = tuple(float(s) for s in self.aug_snr_range)
            if len(self.aug_snr_range) != 2 or self.aug_snr_range[0] > self.aug_snr_range[1]:
                raise ConfigurationError(f"bad aug_snr_range {self.aug_snr_range}")
        if self.aug_fir_taps < 1:
            raise ConfigurationError(f"aug_fir_taps must be >= 1, got {self.aug_fir_taps}")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["adam_betas"] = list(self.adam_betas)
        d["aug_snr_range"] = None if self.aug_snr_range is None else list(self.aug_snr_range)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        known = {f.name for f in cls.__dataclass_fields__.values()}
        extra = set(d) - known
        if extra:
            raise ConfigurationError(f"unknown train config keys {sorted(extra)}")
        return cls(**d)


@dataclass
class TrainState:
    """Everything mutable during a run: networks, optimizers, RNG, histories."""

    extractor: torch.nn.Module
    classifier: HypersphereClassifier
    background: torch.nn.Module | None
    generator: torch.nn.Module | None
    opt_fw: torch.optim.Optimizer
    opt_qg: torch.optim.Optimizer | None
    torch_gen: torch.Generator
    num_classes: int
    loss_cfg: LossConfig
    epoch: int = 0
    loss_history: list = field(default_factory=list)
    eval_history: list = field(default_factory=list)


def init_state(num_classes: int, model_cfg, loss_cfg: LossConfig,
               train_cfg: TrainConfig) -> TrainState:
    """Build and seed the networks and optimizers for one run."""
    if num_classes < 2:
        raise ConfigurationError(f"training needs >= 2 classes, got {num_classes}")
    seed = train_cfg.seed
    torch.manual_seed(stream_seed(seed, _S_EXTRACTOR))
    extractor = build_extractor(model_cfg)
    torch.manual_seed(stream_seed(seed, _S_CLASSIFIER))
    classifier = HypersphereClassifier(model_cfg.embed_dim, num_classes, loss_cfg.radius)

    background = generator = opt_qg = None
    if train_cfg.method == "dr":
        torch.manual_seed(stream_seed(seed, _S_BACKGROUND))
        background = build_background(model_cfg)
        torch.manual_seed(stream_seed(seed, _S_GENERATOR))
        generator = build_generator(model_cfg)
        opt_qg = torch.optim.Adam(
            [*background.parameters(), *generator.parameters()],
            lr=train_cfg.learning_rate, betas=train_cfg.adam_betas)

    opt_fw = torch.optim.Adam(
        [*extractor.parameters(), *classifier.parameters()],
        lr=train_cfg.learning_rate, betas=train_cfg.adam_betas)
    torch_gen = torch.Generator()
    torch_gen.manual_seed(stream_seed(seed, _S_TORCH))
    return TrainState(extractor, classifier, background, generator,
                      opt_fw, opt_qg, torch_gen, num_classes, loss_cfg)


def _set_mode(modules, trainable: bool):
    for m in modules:
        if m is None:
            continue
        m.train(trainable)
        for p in m.parameters():
            p.requires_grad_(trainable)


def _mixing_permutation(n: int, generator: torch.Generator) -> torch.Tensor:
    """Batch permutation, redrawn up to ten times to avoid fixed points."""
    idx = torch.arange(n)
    perm = idx
    for _ in range(10):
        perm = torch.randperm(n, generator=generator)
        if not bool((perm == idx).any()):
            break
    return perm


def qg_step(state: TrainState, images: torch.Tensor, labels: torch.Tensor) -> dict:
    """One optimizer step on the background extractor and generator.

    The fingerprint side is frozen and kept in inference mode so its
    parameters and normalization statistics cannot move here. Self-pairs
    only: the generator rebuilds each signal from its own background.
    """
    f, w, q, g = state.extractor, state.classifier, state.background, state.generator
    if q is None or g is None:
        raise ConfigurationError("qg_step needs the disentangling networks")
    lc = state.loss_cfg
    _set_mode([f, w], False)
    _set_mode([q, g], True)

    noise = q.sample_noise(images.shape[0], generator=state.torch_gen)
    bg = q(images, noise)
    recon = reconstruction_loss(images, bg)
    leak = leakage_penalty(w.prob(f(bg)), labels, state.num_classes, lc.epsilon)
    loss_q = background_loss(recon, leak, lc.alpha)

    emb = f(images)
    synth = g(emb, bg)
    loss_g = generator_loss(images, synth, f, lc.beta, emb=emb)

    state.opt_qg.zero_grad()
    (loss_q + loss_g).backward()
    state.opt_qg.step()
    return {"background": loss_q.item(), "generator": loss_g.item(),
            "reconstruction": recon.item(), "leakage": leak.item()}


def f_step(state: TrainState, images: torch.Tensor, labels: torch.Tensor) -> dict:
    """One optimizer step on the fingerprint extractor and classifier.

    In a disentangling run each signal is re-rendered with another record's
    background before this step; the synthetic batch is built without
    gradients so only the classification path trains. Without the
    disentangling networks (or with lam = 1) this is a plain likelihood step.
    """
    f, w, q, g = state.extractor, state.classifier, state.background, state.generator
    lc = state.loss_cfg
    batch = images.shape[0]
    _set_mode([f, w], True)
    emb_raw = f(images)
    raw_probs = w.prob(emb_raw)
    synth = None
    if q is not None and g is not None and lc.lam < 1.0:
        if batch < 2:
            warnings.warn("batch of one record has no background to borrow; raw-only step")
        else:
            # the raw forward doubles as the generator's embedding input
            # (detached); normalization is batch-statistic, so train/eval
            # mode does not change the values
            _set_mode([q, g], False)
            with torch.no_grad():
                perm = _mixing_permutation(batch, state.torch_gen)
                noise = q.sample_noise(batch, generator=state.torch_gen)
                bg = q(images[perm], noise)
                synth = g(emb_raw.detach(), bg)

    lam = lc.lam if synth is not None else 1.0
    aug_probs = w.prob(f(synth)) if synth is not None else None
    loss = extractor_loss(raw_probs, aug_probs, labels, lam)
    state.opt_fw.zero_grad()
    loss.backward()
    state.opt_fw.step()
    return {"extractor": loss.item()}


def _augment(signals: np.ndarray, method: str, cfg: TrainConfig, rng) -> np.ndarray:
    """Per-record channel augmentation on complex signals for the baselines."""
    out = np.array(signals, dtype=np.complex128, copy=True)
    for r in range(out.shape[0]):
        if method == "awgn":
            if cfg.aug_snr_range is None:
                continue
            snr_db = rng.uniform(*cfg.aug_snr_range)
            power = np.mean(np.abs(out[r]) ** 2)
            scale = np.sqrt(power / 10.0 ** (snr_db / 10.0))
            out[r] += scale * _complex_normal(rng, out[r].shape)
        else:
            taps = draw_fir_taps(rng, cfg.aug_fir_taps, 0.0)
            out[r] = np.convolve(out[r], taps)[: out.shape[1]]
    return out


def _mean_record(sums: dict, counts: dict, epoch: int) -> dict:
    record = {"epoch": epoch}
    for key in ("extractor", "background", "generator", "reconstruction", "leakage"):
        if counts.get(key):
            record[key] = sums[key] / counts[key]
    return record


def _train(dataset, config, eval_datasets=None, out_dir=None) -> TrainState:
    tc: TrainConfig = config.train
    method = tc.method
    labels_np = np.asarray(dataset.labels)
    classes = np.unique(labels_np)
    if not np.array_equal(classes, np.arange(classes.size)):
        raise ConfigurationError("labels must be contiguous 0..K-1; encode them first")

    images = torch.from_numpy(batch_to_images(dataset.signals))
    if tuple(images.shape[1:]) != tuple(config.model.input_shape):
        raise ConfigurationError(
            f"dataset maps to images {tuple(images.shape[1:])}, "
            f"model expects {tuple(config.model.input_shape)}")
    labels = torch.from_numpy(labels_np.astype(np.int64, copy=True))

    state = init_state(int(classes.size), config.model, config.loss, tc)
    n = images.shape[0]
    for epoch in range(1, tc.epochs + 1):
        order = np.random.default_rng([tc.seed, _S_ORDER, epoch]).permutation(n)
        aug_rng = None
        if method in ("awgn", "fir"):
            aug_rng = np.random.default_rng([tc.seed, _S_AUGMENT, epoch])
        sums: dict = {}
        counts: dict = {}
        for start in range(0, n, tc.batch_size):
            idx = order[start:start + tc.batch_size]
            tidx = torch.from_numpy(idx)
            yb = labels[tidx]
            if aug_rng is not None:
                xb = torch.from_numpy(batch_to_images(
                    _augment(dataset.signals[idx], method, tc, aug_rng)))
            else:
                xb = images[tidx]
            parts = {}
            if method == "dr":
                for _ in range(tc.qg_per_f):
                    parts.update(qg_step(state, xb, yb))
            parts.update(f_step(state, xb, yb))
            for key, value in parts.items():
                sums[key] = sums.get(key, 0.0) + value
                counts[key] = counts.get(key, 0) + 1
        state.loss_history.append(_mean_record(sums, counts, epoch))
        state.epoch = epoch
        if eval_datasets and tc.eval_every and epoch % tc.eval_every == 0:
            aucs = {name: split_auc(state.extractor, ds)
                    for name, ds in eval_datasets.items()}
            state.eval_history.append({"epoch": epoch, "auc": aucs})

    if out_dir is not None:
        save_state(state, config, out_dir)
    return state


def train_dr(dataset, config, eval_datasets=None, out_dir=None) -> TrainState:
    """Train the full disentangling system on one dataset."""
    if config.train.method != "dr":
        raise ConfigurationError(f"train_dr needs method 'dr', got {config.train.method!r}")
    return _train(dataset, config, eval_datasets, out_dir)


def train_baseline(dataset, config, eval_datasets=None, out_dir=None) -> TrainState:
    """Train a classification-only baseline (ml, awgn, or fir)."""
    if config.train.method not in BASELINE_METHODS:
        raise ConfigurationError(
            f"train_baseline needs method in {BASELINE_METHODS}, got {config.train.method!r}")
    return _train(dataset, config, eval_datasets, out_dir)


def train(dataset, config, eval_datasets=None, out_dir=None) -> TrainState:
    """Dispatch on config.train.method."""
    if config.train.method == "dr":
        return train_dr(dataset, config, eval_datasets, out_dir)
    return train_baseline(dataset, config, eval_datasets, out_dir)


def save_state(state: TrainState, config, out_dir) -> Path:
    """Write checkpoint files and the loss/eval history for one finished run."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    save_checkpoint(out_dir / "checkpoint",
                    extractor=state.extractor, classifier=state.classifier,
                    background=state.background, generator=state.generator,
                    config=config.to_dict(), num_classes=state.num_classes,
                    epoch=state.epoch, seed=config.train.seed,
                    loss_history=state.loss_history)
    history = {"method": config.train.method, "seed": config.train.seed,
               "loss_history": state.loss_history, "eval_history": state.eval_history}
    with open(out_dir / "history.json", "w") as fh:
        json.dump(history, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return out_dir


def parameter_digest(*modules) -> str:
    """SHA-256 over named parameters and buffers; any drift changes the digest."""
    digest = hashlib.sha256()
    for module in modules:
        entries = sorted(itertools.chain(module.named_parameters(), module.named_buffers()),
                         key=lambda item: item[0])
        for name, tensor in entries:
            digest.update(name.encode())
            digest.update(tensor.detach().cpu().contiguous().numpy().tobytes())
    return digest.hexdigest()
