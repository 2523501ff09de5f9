"""Disentanglement panels and learning-curve figures, each with CSV twins.

Every figure writes its plotted numbers alongside the image so results can be
checked or replotted without rerunning models. Panel CSVs use full float64
precision and round-trip exactly.
"""

from __future__ import annotations

import json
from pathlib import Path

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np
import torch

from .exceptions import ConfigurationError, FormatError
from .preprocessing import batch_to_images

PANEL_ORDER = ("raw_a", "raw_b", "background_a", "background_b",
               "synthetic_ab", "synthetic_ba", "difference_a", "difference_b")


def _magnitude(panel: np.ndarray) -> np.ndarray:
    if panel.ndim == 3:  # two-channel signal image
        return np.sqrt(panel[0] ** 2 + panel[1] ** 2)
    return panel


def write_panel_csv(path: str | Path, panel: np.ndarray):
    """2-D or (2, H, W) array as comma-separated rows at full precision."""
    flat = panel.reshape(-1, panel.shape[-1])
    with open(path, "w") as fh:
        for row in flat:
            fh.write(",".join(f"{v:.17g}" for v in row) + "\n")


def read_panel_csv(path: str | Path, channels: int = 1) -> np.ndarray:
    rows = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if line:
                rows.append([float(v) for v in line.split(",")])
    arr = np.asarray(rows, dtype=np.float64)
    if channels > 1:
        if arr.shape[0] % channels:
            raise FormatError(f"{path}: {arr.shape[0]} rows do not split into "
                              f"{channels} channels")
        arr = arr.reshape(channels, arr.shape[0] // channels, arr.shape[1])
    return arr


def render_disentanglement(checkpoint, dataset, index_a: int = 0, index_b: int = 1,
                           seed: int = 0, out_dir: str | Path = ".",
                           name: str = "disentangle") -> dict:
    """Cross-render two records: fingerprints swapped onto each other's background.

    Writes `<name>.png` (a grid of magnitude images), one CSV per panel, and
    `<name>.json` with the record metadata. Returns {panel: array}.
    """
    if checkpoint.background is None or checkpoint.generator is None:
        raise ConfigurationError("checkpoint has no disentangling networks to render")
    n = dataset.num_records
    for idx in (index_a, index_b):
        if not 0 <= idx < n:
            raise ConfigurationError(f"record index {idx} outside dataset of {n}")
    if index_a == index_b:
        raise ConfigurationError("pick two different records to cross-render")

    images = torch.from_numpy(batch_to_images(dataset.signals[[index_a, index_b]]))
    gen = torch.Generator().manual_seed(seed)
    extractor, background, generator = (checkpoint.extractor, checkpoint.background,
                                        checkpoint.generator)
    for net in (extractor, background, generator):
        net.eval()
    with torch.no_grad():
        noise = background.sample_noise(2, generator=gen)
        bg = background(images, noise)
        emb = extractor(images)
        synth_ab = generator(emb[0:1], bg[1:2])  # a's fingerprint on b's background
        synth_ba = generator(emb[1:2], bg[0:1])

    raw = images.numpy()
    bg_np = bg.numpy()
    panels = {
        "raw_a": raw[0], "raw_b": raw[1],
        "background_a": bg_np[0], "background_b": bg_np[1],
        "synthetic_ab": synth_ab[0].numpy(), "synthetic_ba": synth_ba[0].numpy(),
    }
    panels = {k: np.asarray(v, dtype=np.float64) for k, v in panels.items()}
    panels["difference_a"] = np.sqrt(((panels["raw_a"] - panels["synthetic_ab"]) ** 2).sum(axis=0))
    panels["difference_b"] = np.sqrt(((panels["raw_b"] - panels["synthetic_ba"]) ** 2).sum(axis=0))

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    fig, axes = plt.subplots(2, 4, figsize=(16, 5))
    for ax, key in zip(axes.ravel(), PANEL_ORDER):
        ax.imshow(_magnitude(panels[key]), aspect="auto", cmap="viridis")
        ax.set_title(key.replace("_", " "))
        ax.set_xticks([])
        ax.set_yticks([])
    fig.tight_layout()
    fig.savefig(out_dir / f"{name}.png", dpi=120)
    plt.close(fig)

    for key in PANEL_ORDER:
        write_panel_csv(out_dir / f"{name}.{key}.csv", panels[key])
    meta = {
        "record_a": int(index_a), "record_b": int(index_b),
        "device_a": int(dataset.labels[index_a]), "device_b": int(dataset.labels[index_b]),
        "same_device": bool(dataset.labels[index_a] == dataset.labels[index_b]),
        "seed": int(seed), "panels": list(PANEL_ORDER),
    }
    with open(out_dir / f"{name}.json", "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return panels


def collect_curves(history_files) -> list:
    """Per-epoch AUC rows averaged over runs of the same method.

    Input files are training histories; output rows are dicts with keys
    method, split, epoch, mean_auc, sorted for stable CSV bytes.
    """
    history_files = [Path(p) for p in history_files]
    if not history_files:
        raise ConfigurationError("need at least one history file")
    groups: dict = {}
    for path in history_files:
        try:
            with open(path) as fh:
                history = json.load(fh)
        except FileNotFoundError:
            raise FormatError(f"history file not found: {path}") from None
        except json.JSONDecodeError as exc:
            raise FormatError(f"unparseable history {path}: {exc}") from exc
        for key in ("method", "eval_history"):
            if key not in history:
                raise FormatError(f"history {path} lacks required key {key!r}")
        for entry in history["eval_history"]:
            for split, auc in entry["auc"].items():
                groups.setdefault((history["method"], split, entry["epoch"]), []).append(auc)
    if not groups:
        raise FormatError("no evaluation points in any history file; "
                          "train with eval_every > 0")
    rows = [{"method": m, "split": s, "epoch": e, "mean_auc": float(np.mean(v))}
            for (m, s, e), v in sorted(groups.items())]
    return rows


def render_learning_curves(history_files, out_dir: str | Path = ".",
                           name: str = "curves") -> list:
    """Write `<name>.csv` and a matching line plot of mean AUC per epoch."""
    rows = collect_curves(history_files)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / f"{name}.csv", "w") as fh:
        fh.write("method,split,epoch,mean_auc\n")
        for row in rows:
            fh.write(f"{row['method']},{row['split']},{row['epoch']},"
                     f"{row['mean_auc']:.17g}\n")

    fig, ax = plt.subplots(figsize=(8, 5))
    series: dict = {}
    for row in rows:
        series.setdefault((row["method"], row["split"]), []).append(
            (row["epoch"], row["mean_auc"]))
    for (method, split), points in sorted(series.items()):
        points.sort()
        ax.plot([p[0] for p in points], [p[1] for p in points],
                marker="o", markersize=3, label=f"{method} / {split}")
    ax.set_xlabel("epoch")
    ax.set_ylabel("mean AUC")
    ax.set_ylim(0.0, 1.05)
    ax.grid(True, alpha=0.3)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(out_dir / f"{name}.png", dpi=120)
    plt.close(fig)
    return rows
