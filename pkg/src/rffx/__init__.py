"""rffx: radio-frequency fingerprint extraction on synthetic ZigBee-like preambles.

The package simulates impaired preamble captures, trains convolutional
fingerprint extractors (with an optional disentangling background-shuffling
scheme and classical augmentation baselines), and evaluates open-set device
verification with ROC/AUC/EER metrics.
"""

__version__ = "0.1.0"

from .signals import (
    ChannelSpec,
    ComplexSignal,
    DeviceProfile,
    ProfileSpread,
    apply_channel,
    apply_device,
    draw_device_profiles,
    gen_preamble,
)
from .preprocessing import batch_to_images, image_to_signal, normalize, signal_to_image
from .datasets import DatasetConfig, SignalDataset, gen_dataset, read_dataset, write_dataset
from .models import ModelConfig, load_checkpoint, save_checkpoint
from .losses import LossConfig
from .metrics import ScoreSet, eer, evaluate_split, pairwise_scores, roc_auc, sweep
from .training import TrainConfig, TrainState, train, train_baseline, train_dr
from .config import (
    ExperimentConfig,
    apply_overrides,
    default_config,
    desk_config,
    load_config,
    save_config,
)
from .estimator import RffExtractor

__all__ = [
    "__version__",
    "ChannelSpec",
    "ComplexSignal",
    "DatasetConfig",
    "DeviceProfile",
    "ExperimentConfig",
    "LossConfig",
    "ModelConfig",
    "ProfileSpread",
    "RffExtractor",
    "ScoreSet",
    "SignalDataset",
    "TrainConfig",
    "TrainState",
    "apply_channel",
    "apply_device",
    "apply_overrides",
    "batch_to_images",
    "default_config",
    "desk_config",
    "draw_device_profiles",
    "eer",
    "evaluate_split",
    "gen_dataset",
    "gen_preamble",
    "image_to_signal",
    "load_checkpoint",
    "load_config",
    "normalize",
    "pairwise_scores",
    "read_dataset",
    "roc_auc",
    "save_checkpoint",
    "save_config",
    "signal_to_image",
    "sweep",
    "train",
    "train_baseline",
    "train_dr",
    "write_dataset",
]
