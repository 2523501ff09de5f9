"""Training objectives for the extractor, background, and generator networks.

All reductions are means over elements (not sums), so values are comparable
across batch sizes and image sizes. Probabilities are floored at PROB_FLOOR
before any log.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch

from .exceptions import ConfigurationError, DegenerateEmbeddingError, ShapeError

PROB_FLOOR = 1e-12


@dataclass
class LossConfig:
    """Loss weights: lam mixes raw/augmented likelihoods, alpha scales the
    leakage penalty, beta the embedding-consistency term, epsilon the leakage
    budget, radius the classification hypersphere."""

    lam: float = 0.5
    alpha: float = 10.0
    beta: float = 10.0
    epsilon: float = 0.0
    radius: float = 10.0

    def __post_init__(self):
        if not 0.0 <= self.lam <= 1.0:
            raise ConfigurationError(f"lam must be in [0, 1], got {self.lam}")
        for name in ("alpha", "beta", "epsilon"):
            if getattr(self, name) < 0:
                raise ConfigurationError(f"{name} must be >= 0, got {getattr(self, name)}")
        if self.radius <= 0:
            raise ConfigurationError(f"radius must be positive, got {self.radius}")


def cosine_distance(a: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
    """1 - cos(a, b) along the last dimension; in [0, 2], 0 iff parallel."""
    norm_a = torch.linalg.vector_norm(a, dim=-1)
    norm_b = torch.linalg.vector_norm(b, dim=-1)
    if torch.any(norm_a == 0) or torch.any(norm_b == 0):
        raise DegenerateEmbeddingError("cosine distance is undefined for zero vectors")
    return 1.0 - (a * b).sum(-1) / (norm_a * norm_b)


def _true_class_probs(probs: torch.Tensor, labels: torch.Tensor) -> torch.Tensor:
    if probs.ndim != 2:
        raise ShapeError(f"probabilities must be (B, K), got {tuple(probs.shape)}")
    if labels.shape != probs.shape[:1]:
        raise ShapeError(f"labels must be (B,), got {tuple(labels.shape)}")
    if labels.numel() and (labels.min() < 0 or labels.max() >= probs.shape[1]):
        raise ConfigurationError("label outside [0, K)")
    return probs[torch.arange(probs.shape[0]), labels]


def extractor_loss(raw_probs: torch.Tensor, aug_probs: torch.Tensor | None,
                   labels: torch.Tensor, lam: float = 0.5) -> torch.Tensor:
    """Mixed negative log-likelihood over raw and augmented true-class probabilities.

    With lam = 1 the augmented term has zero weight and aug_probs may be None;
    the value then equals the plain classification loss on the raw batch.
    """
    if not 0.0 <= lam <= 1.0:
        raise ConfigurationError(f"lam must be in [0, 1], got {lam}")
    p_raw = torch.clamp(_true_class_probs(raw_probs, labels), min=PROB_FLOOR)
    nll = -lam * torch.log(p_raw)
    if lam < 1.0:
        if aug_probs is None:
            raise ConfigurationError("aug_probs is required when lam < 1")
        p_aug = torch.clamp(_true_class_probs(aug_probs, labels), min=PROB_FLOOR)
        nll = nll - (1.0 - lam) * torch.log(p_aug)
    return nll.mean()


def reconstruction_loss(x: torch.Tensor, background: torch.Tensor) -> torch.Tensor:
    """Mean squared error between the input image and its background rendering."""
    if x.shape != background.shape:
        raise ShapeError(f"shape mismatch {tuple(x.shape)} vs {tuple(background.shape)}")
    return ((x - background) ** 2).mean()


def leakage_penalty(bg_probs: torch.Tensor, labels: torch.Tensor, num_classes: int,
                    epsilon: float = 0.0) -> torch.Tensor:
    """Squared hinge on the batch-mean log identity-likelihood ratio of backgrounds.

    The mean of ln(K * p(y_i | background_i)) is taken first, then clamped at
    epsilon from below; only above-chance identity information is penalized.
    """
    if num_classes < 2:
        raise ConfigurationError(f"num_classes must be >= 2, got {num_classes}")
    if bg_probs.shape[1] != num_classes:
        raise ShapeError(f"expected {num_classes} columns, got {bg_probs.shape[1]}")
    p_true = torch.clamp(_true_class_probs(bg_probs, labels), min=PROB_FLOOR)
    mean_log_ratio = (torch.log(p_true) + torch.log(torch.tensor(
        float(num_classes), dtype=p_true.dtype))).mean()
    return torch.clamp(mean_log_ratio - epsilon, min=0.0) ** 2


def background_loss(recon: torch.Tensor, leakage: torch.Tensor,
                    alpha: float = 10.0) -> torch.Tensor:
    """Reconstruction term plus alpha times the leakage penalty."""
    if alpha < 0:
        raise ConfigurationError(f"alpha must be >= 0, got {alpha}")
    return recon + alpha * leakage


def generator_loss(x: torch.Tensor, synthetic: torch.Tensor, extractor,
                   beta: float = 10.0, emb: torch.Tensor | None = None) -> torch.Tensor:
    """Image reconstruction error plus beta times embedding reconstruction error.

    emb may carry a precomputed extractor output for x to avoid a duplicate
    forward pass; it must equal extractor(x).
    """
    if beta < 0:
        raise ConfigurationError(f"beta must be >= 0, got {beta}")
    if x.shape != synthetic.shape:
        raise ShapeError(f"shape mismatch {tuple(x.shape)} vs {tuple(synthetic.shape)}")
    if emb is None:
        emb = extractor(x)
    emb_synth = extractor(synthetic)
    return ((x - synthetic) ** 2).mean() + beta * ((emb - emb_synth) ** 2).mean()
