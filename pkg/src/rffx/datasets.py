"""Dataset generation and the on-disk record format.

A dataset split is a flat binary `.iq` file (little-endian float32,
interleaved real/imag, records back to back) plus a `.manifest.json` sidecar
listing per-record device ids, channel tags, and byte offsets.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .exceptions import ConfigurationError, FormatError
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

FORMAT_VERSION = 1
BYTES_PER_SAMPLE = 8  # two float32 components

SPLIT_NAMES = ("train", "val", "test_known", "test_unknown_multipath")
_SPLIT_INDEX = {name: i for i, name in enumerate(SPLIT_NAMES)}
_PROFILE_STREAM = 99


@dataclass
class SignalDataset:
    """In-memory split: (N, M) complex records with device labels and channel tags."""

    signals: np.ndarray
    labels: np.ndarray
    channel_tags: list
    sample_rate: float
    seed: int = 0

    def __post_init__(self):
        self.signals = np.asarray(self.signals, dtype=np.complex128)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.signals.ndim != 2:
            raise ConfigurationError(f"signals must be (N, M), got shape {self.signals.shape}")
        if self.labels.shape != (self.signals.shape[0],):
            raise ConfigurationError("labels must have one entry per record")
        if len(self.channel_tags) != self.signals.shape[0]:
            raise ConfigurationError("channel_tags must have one entry per record")
        if np.any(self.labels < 0):
            raise ConfigurationError("device labels must be >= 0")

    @property
    def num_records(self) -> int:
        return self.signals.shape[0]

    @property
    def signal_length(self) -> int:
        return self.signals.shape[1]

    @property
    def device_ids(self) -> np.ndarray:
        return np.unique(self.labels)


@dataclass
class JitterChannel:
    """Benign capture-to-capture variation: flat complex gain plus noise.

    Each record draws a gain magnitude from gain_range, a phase from
    [0, 2*pi), and an SNR in dB from snr_range.
    """

    gain_range: tuple = (0.9, 1.1)
    snr_range: tuple = (20.0, 30.0)

    def __post_init__(self):
        if not (0 < self.gain_range[0] <= self.gain_range[1]):
            raise ConfigurationError(f"bad gain_range {self.gain_range}")
        if self.snr_range[0] > self.snr_range[1]:
            raise ConfigurationError(f"bad snr_range {self.snr_range}")


@dataclass
class DatasetConfig:
    """Knobs for the synthetic four-split experiment data."""

    sample_rate: float = 1e7
    samples_per_chip: int = 5
    num_symbols: int = 8
    num_train_devices: int = 8
    num_unknown_devices: int = 4
    train_signals_per_device: int = 200
    eval_signals_per_device: int = 50
    train_channel: JitterChannel = field(default_factory=JitterChannel)
    known_test_channel: ChannelSpec = field(default_factory=lambda: ChannelSpec(
        "multipath_fir", snr_db=20.0, num_taps=3, pdp_decay=0.7))
    unknown_test_channel: ChannelSpec = field(default_factory=lambda: ChannelSpec(
        "multipath_fir", snr_db=20.0, num_taps=5, pdp_decay=0.7))
    profile_spread: ProfileSpread = field(default_factory=ProfileSpread)

    def __post_init__(self):
        if self.num_train_devices < 2:
            raise ConfigurationError("need at least 2 train devices")
        if self.num_unknown_devices < 2:
            raise ConfigurationError("need at least 2 unknown devices")
        if self.train_signals_per_device < 1 or self.eval_signals_per_device < 1:
            raise ConfigurationError("signals per device must be >= 1")


def channel_tag(channel) -> str:
    """Short per-record tag describing the channel family."""
    if isinstance(channel, JitterChannel):
        return "los_jitter"
    if channel.kind == "multipath_fir":
        return f"fir{channel.num_taps}"
    if channel.kind == "rician_flat":
        return f"rician{channel.rician_k:g}"
    return f"awgn{channel.snr_db:g}"


def _record_rng(seed: int, split_index: int, record_index: int) -> np.random.Generator:
    # one independent stream per record so generation order cannot matter
    return np.random.default_rng([seed, split_index, record_index])


def _apply_record_channel(clean: ComplexSignal, channel, rng) -> np.ndarray:
    if isinstance(channel, JitterChannel):
        mag = rng.uniform(*channel.gain_range)
        phase = rng.uniform(0.0, 2.0 * np.pi)
        snr = rng.uniform(*channel.snr_range)
        gained = ComplexSignal(mag * np.exp(1j * phase) * clean.samples, clean.sample_rate)
        return apply_channel(gained, ChannelSpec("awgn", snr_db=snr), rng).samples
    return apply_channel(clean, channel, rng).samples


def generate_split(profiles: list, signals_per_device: int, channel,
                   seed: int, split_name: str, cfg: DatasetConfig) -> SignalDataset:
    """Simulate one split: every profile gets signals_per_device fresh records."""
    preamble = gen_preamble(cfg.sample_rate, samples_per_chip=cfg.samples_per_chip,
                            num_symbols=cfg.num_symbols)
    split_index = _SPLIT_INDEX.get(split_name, len(SPLIT_NAMES))
    impaired = {p.device_id: apply_device(preamble, p) for p in profiles}
    tag = channel_tag(channel)

    n = len(profiles) * signals_per_device
    signals = np.empty((n, len(preamble)), dtype=np.complex128)
    labels = np.empty(n, dtype=np.int64)
    rec = 0
    for profile in profiles:
        for _ in range(signals_per_device):
            rng = _record_rng(seed, split_index, rec)
            signals[rec] = _apply_record_channel(impaired[profile.device_id], channel, rng)
            labels[rec] = profile.device_id
            rec += 1
    return SignalDataset(signals, labels, [tag] * n, cfg.sample_rate, seed)


def dataset_profiles(cfg: DatasetConfig, seed: int) -> tuple:
    """Draw the (train, unknown) device profile lists for a dataset seed."""
    rng = np.random.default_rng([seed, _PROFILE_STREAM])
    all_profiles = draw_device_profiles(cfg.num_train_devices + cfg.num_unknown_devices,
                                        rng, cfg.profile_spread)
    return all_profiles[:cfg.num_train_devices], all_profiles[cfg.num_train_devices:]


def gen_dataset(cfg: DatasetConfig, seed: int, out_dir: str | Path | None = None) -> dict:
    """Generate the four standard splits; optionally write them under out_dir.

    Returns {split_name: SignalDataset}. Known devices appear in train, val,
    and test_known; held-out devices only in test_unknown_multipath.
    """
    train_profiles, unknown_profiles = dataset_profiles(cfg, seed)
    splits = {
        "train": generate_split(train_profiles, cfg.train_signals_per_device,
                                cfg.train_channel, seed, "train", cfg),
        "val": generate_split(train_profiles, cfg.eval_signals_per_device,
                              cfg.train_channel, seed, "val", cfg),
        "test_known": generate_split(train_profiles, cfg.eval_signals_per_device,
                                     cfg.known_test_channel, seed, "test_known", cfg),
        "test_unknown_multipath": generate_split(unknown_profiles, cfg.eval_signals_per_device,
                                                 cfg.unknown_test_channel, seed,
                                                 "test_unknown_multipath", cfg),
    }
    if out_dir is not None:
        out_dir = Path(out_dir)
        for name, ds in splits.items():
            split_dir = out_dir / name
            split_dir.mkdir(parents=True, exist_ok=True)
            write_dataset(split_dir / "signals", ds)
    return splits


def write_dataset(prefix: str | Path, dataset: SignalDataset) -> tuple:
    """Write `<prefix>.iq` and `<prefix>.manifest.json`; returns both paths."""
    prefix = Path(prefix)
    iq_path = prefix.with_suffix(".iq")
    manifest_path = prefix.with_suffix(".manifest.json")

    n, m = dataset.signals.shape
    interleaved = np.empty((n, 2 * m), dtype="<f4")
    interleaved[:, 0::2] = dataset.signals.real
    interleaved[:, 1::2] = dataset.signals.imag
    interleaved.tofile(iq_path)

    record_bytes = m * BYTES_PER_SAMPLE
    manifest = {
        "format_version": FORMAT_VERSION,
        "signal_length": m,
        "num_devices": int(dataset.device_ids.size),
        "sample_rate": dataset.sample_rate,
        "seed": int(dataset.seed),
        "records": [
            {"device_id": int(dataset.labels[i]),
             "channel_tag": dataset.channel_tags[i],
             "byte_offset": i * record_bytes}
            for i in range(n)
        ],
    }
    with open(manifest_path, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return iq_path, manifest_path


def _resolve_prefix(path: Path) -> Path:
    if path.is_dir():
        manifests = sorted(path.glob("*.manifest.json"))
        if len(manifests) != 1:
            raise FormatError(f"{path} must contain exactly one .manifest.json, "
                              f"found {len(manifests)}")
        return Path(str(manifests[0])[: -len(".manifest.json")])
    name = path.name
    for suffix in (".manifest.json", ".iq"):
        if name.endswith(suffix):
            return path.with_name(name[: -len(suffix)])
    return path


def read_dataset(path: str | Path) -> SignalDataset:
    """Load a split from a prefix, an .iq/.manifest.json path, or a directory."""
    prefix = _resolve_prefix(Path(path))
    iq_path = prefix.with_suffix(".iq")
    manifest_path = prefix.with_suffix(".manifest.json")
    if not manifest_path.exists():
        raise FormatError(f"missing manifest {manifest_path}")
    if not iq_path.exists():
        raise FormatError(f"missing signal file {iq_path}")

    with open(manifest_path) as fh:
        try:
            manifest = json.load(fh)
        except json.JSONDecodeError as exc:
            raise FormatError(f"unparseable manifest {manifest_path}: {exc}") from exc

    for key in ("format_version", "signal_length", "num_devices", "seed", "records"):
        if key not in manifest:
            raise FormatError(f"manifest {manifest_path} lacks required key {key!r}")
    if manifest["format_version"] != FORMAT_VERSION:
        raise FormatError(f"unsupported format_version {manifest['format_version']}")

    m = int(manifest["signal_length"])
    records = manifest["records"]
    record_bytes = m * BYTES_PER_SAMPLE
    offsets = [r["byte_offset"] for r in records]
    for i, off in enumerate(offsets):
        if off % record_bytes != 0 or off != i * record_bytes:
            raise FormatError(f"record {i} byte_offset {off} is not {i} * {record_bytes}")

    raw = np.fromfile(iq_path, dtype="<f4")
    if raw.size != len(records) * 2 * m:
        raise FormatError(f"{iq_path} holds {raw.size} floats, expected {len(records) * 2 * m}")
    raw = raw.reshape(len(records), 2 * m).astype(np.float64)
    signals = raw[:, 0::2] + 1j * raw[:, 1::2]

    labels = np.array([r["device_id"] for r in records], dtype=np.int64)
    tags = [r["channel_tag"] for r in records]
    ds = SignalDataset(signals, labels, tags, float(manifest.get("sample_rate", 1e7)),
                       int(manifest["seed"]))
    if ds.device_ids.size != manifest["num_devices"]:
        raise FormatError(f"manifest num_devices={manifest['num_devices']} but records "
                          f"cover {ds.device_ids.size} devices")
    return ds
