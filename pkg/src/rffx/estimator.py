"""Scikit-learn style front end: fit on labeled IQ arrays, transform to embeddings.

The estimator wraps dataset packing, network construction, and the training
loop behind the usual fit/transform/predict surface so it can sit inside
pipelines and cross-validation search. Labels may be any 1-D values; they are
encoded internally and restored on predict.
"""

from __future__ import annotations

import numpy as np
import torch
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .config import ExperimentConfig
from .datasets import SignalDataset
from .exceptions import ConfigurationError, ShapeError
from .losses import LossConfig
from .metrics import extract_embeddings
from .models import ModelConfig
from .preprocessing import IMAGE_COLS, batch_to_images
from .training import TrainConfig, train as _run_training

_PRED_BATCH = 256


def check_signal_array(X) -> np.ndarray:
    """Validate an (n, m) complex signal matrix; returns a complex128 copy."""
    X = np.asarray(X)
    if X.ndim != 2 or X.shape[0] < 1 or X.shape[1] < 1:
        raise ShapeError(f"expected a (n_signals, n_samples) matrix, got shape {X.shape}")
    X = X.astype(np.complex128, copy=True)
    if not np.all(np.isfinite(X.view(np.float64))):
        raise ConfigurationError("signals contain non-finite samples")
    return X


def check_labels(y, n: int) -> np.ndarray:
    y = np.asarray(y)
    if y.ndim != 1 or y.shape[0] != n:
        raise ShapeError(f"labels must be 1-D with {n} entries, got shape {y.shape}")
    return y


class RffExtractor(BaseEstimator, TransformerMixin):
    """Device-fingerprint embedding extractor with an optional classifier head.

    method selects the training recipe: "dr" trains the full disentangling
    system, "ml" plain classification, "awgn"/"fir" classification with
    channel augmentation. transform returns unit-free embeddings meant for
    cosine comparison; predict returns device labels for signals from devices
    seen during fit.
    """

    def __init__(self, method="dr", epochs=30, batch_size=32, learning_rate=1e-3,
                 lam=0.5, alpha=10.0, beta=10.0, epsilon=0.0, radius=10.0,
                 complexity=18, embed_dim=128, base_width=32, width_cap=512,
                 unet_widths=(32, 64, 128, 256, 512), aug_snr_range=(5.0, 30.0),
                 aug_fir_taps=5, qg_per_f=1, random_state=0):
        self.method = method
        self.epochs = epochs
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.lam = lam
        self.alpha = alpha
        self.beta = beta
        self.epsilon = epsilon
        self.radius = radius
        self.complexity = complexity
        self.embed_dim = embed_dim
        self.base_width = base_width
        self.width_cap = width_cap
        self.unet_widths = unet_widths
        self.aug_snr_range = aug_snr_range
        self.aug_fir_taps = aug_fir_taps
        self.qg_per_f = qg_per_f
        self.random_state = random_state

    def _experiment_config(self, n_samples: int) -> ExperimentConfig:
        if n_samples % IMAGE_COLS != 0:
            raise ConfigurationError(
                f"signal length must be a multiple of {IMAGE_COLS}, got {n_samples}")
        model = ModelConfig(complexity=self.complexity, embed_dim=self.embed_dim,
                            base_width=self.base_width, width_cap=self.width_cap,
                            unet_widths=tuple(self.unet_widths),
                            input_shape=(2, n_samples // IMAGE_COLS, IMAGE_COLS))
        loss = LossConfig(lam=self.lam, alpha=self.alpha, beta=self.beta,
                          epsilon=self.epsilon, radius=self.radius)
        train = TrainConfig(epochs=self.epochs, batch_size=self.batch_size,
                            learning_rate=self.learning_rate, method=self.method,
                            seed=self.random_state, qg_per_f=self.qg_per_f,
                            aug_snr_range=self.aug_snr_range,
                            aug_fir_taps=self.aug_fir_taps)
        return ExperimentConfig(model=model, loss=loss, train=train)

    def fit(self, X, y):
        X = check_signal_array(X)
        y = check_labels(y, X.shape[0])
        classes, encoded = np.unique(y, return_inverse=True)
        if classes.size < 2:
            raise ConfigurationError("fit needs signals from at least two devices")
        cfg = self._experiment_config(X.shape[1])
        dataset = SignalDataset(signals=X, labels=encoded.astype(np.int64),
                                channel_tags=["unspecified"] * X.shape[0],
                                sample_rate=1.0, seed=self.random_state)
        state = _run_training(dataset, cfg)
        self.classes_ = classes
        self.state_ = state
        self.config_ = cfg
        self.n_features_in_ = X.shape[1]
        self.loss_history_ = state.loss_history
        return self

    def _check_ready(self, X) -> np.ndarray:
        check_is_fitted(self, "state_")
        X = check_signal_array(X)
        if X.shape[1] != self.n_features_in_:
            raise ShapeError(f"expected {self.n_features_in_} samples per signal, "
                             f"got {X.shape[1]}")
        return X

    def transform(self, X) -> np.ndarray:
        """Embed signals; rows are compared with cosine distance."""
        X = self._check_ready(X)
        dataset = SignalDataset(signals=X, labels=np.zeros(X.shape[0], dtype=np.int64),
                                channel_tags=["unspecified"] * X.shape[0], sample_rate=1.0)
        z, _ = extract_embeddings(self.state_.extractor, dataset)
        return z

    def predict_proba(self, X) -> np.ndarray:
        """Class-membership probabilities over the devices seen in fit."""
        X = self._check_ready(X)
        images = torch.from_numpy(batch_to_images(X))
        extractor, classifier = self.state_.extractor, self.state_.classifier
        extractor.eval()
        classifier.eval()
        probs = []
        with torch.no_grad():
            for start in range(0, images.shape[0], _PRED_BATCH):
                batch = images[start:start + _PRED_BATCH]
                probs.append(classifier.prob(extractor(batch)).numpy())
        return np.vstack(probs)

    def predict(self, X) -> np.ndarray:
        return self.classes_[np.argmax(self.predict_proba(X), axis=1)]

    def score(self, X, y) -> float:
        """Closed-set classification accuracy."""
        y = check_labels(y, np.asarray(X).shape[0])
        return float(np.mean(self.predict(X) == y))
