"""Open-set verification metrics: pairwise cosine scoring, ROC/AUC, EER.

A lower cosine distance means "same device"; a pair is accepted when its
distance falls at or below the decision threshold. AUC and EER are computed
from exact pair counts at enumerated thresholds, so small score sets
reproduce a brute-force enumeration bit for bit.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch

from .exceptions import (
    ConfigurationError,
    DegenerateEmbeddingError,
    MissingImpostorError,
    ShapeError,
)

_EVAL_BATCH = 512


@dataclass
class ScoreSet:
    """Genuine (same device) and impostor (different device) pair distances."""

    genuine: np.ndarray
    impostor: np.ndarray

    def __post_init__(self):
        self.genuine = np.asarray(self.genuine, dtype=np.float64).ravel()
        self.impostor = np.asarray(self.impostor, dtype=np.float64).ravel()
        if self.genuine.size == 0 or self.impostor.size == 0:
            raise MissingImpostorError("score set needs both genuine and impostor pairs")
        for name, arr in (("genuine", self.genuine), ("impostor", self.impostor)):
            if not np.all(np.isfinite(arr)):
                raise ConfigurationError(f"{name} scores contain non-finite values")
            if np.any(arr < 0.0) or np.any(arr > 2.0):
                raise ConfigurationError(f"{name} scores fall outside [0, 2]")


def pairwise_scores(embeddings: np.ndarray, labels: np.ndarray) -> ScoreSet:
    """Cosine distances over all n(n-1)/2 embedding pairs, split by label match."""
    z = np.asarray(embeddings, dtype=np.float64)
    labels = np.asarray(labels)
    if z.ndim != 2 or z.shape[0] < 2:
        raise ShapeError(f"need (n >= 2, d) embeddings, got shape {z.shape}")
    if labels.shape != (z.shape[0],):
        raise ShapeError("labels must have one entry per embedding")
    norms = np.linalg.norm(z, axis=1)
    if np.any(norms == 0):
        raise DegenerateEmbeddingError("zero embedding has no direction to score")
    unit = z / norms[:, None]
    dist = np.clip(1.0 - unit @ unit.T, 0.0, 2.0)
    iu = np.triu_indices(z.shape[0], k=1)
    same = labels[:, None] == labels[None, :]
    return ScoreSet(dist[iu][same[iu]], dist[iu][~same[iu]])


def roc_auc(scores: ScoreSet) -> tuple:
    """ROC curve over enumerated thresholds and the exact pair-ordering AUC.

    The curve starts at (0, 0) and ends at (1, 1); trapezoidal integration of
    it equals the returned AUC, which counts genuine-below-impostor pairs with
    half credit for ties.
    """
    g = np.sort(scores.genuine)
    imp = np.sort(scores.impostor)
    thresholds = np.unique(np.concatenate([g, imp]))
    tpr = np.searchsorted(g, thresholds, side="right") / g.size
    fpr = np.searchsorted(imp, thresholds, side="right") / imp.size
    curve = np.vstack([[0.0, 0.0], np.column_stack([fpr, tpr])])

    below = np.searchsorted(g, imp, side="left").sum()
    ties = (np.searchsorted(g, imp, side="right") - np.searchsorted(g, imp, side="left")).sum()
    auc = (int(below) + 0.5 * int(ties)) / (g.size * imp.size)
    return curve, float(auc)


def eer(scores: ScoreSet) -> float:
    """Equal error rate: where the false-negative and false-positive rates cross.

    Rates are stepped at enumerated thresholds; an off-grid crossing is
    linearly interpolated between the bracketing threshold points.
    """
    g = np.sort(scores.genuine)
    imp = np.sort(scores.impostor)
    thresholds = np.unique(np.concatenate([g, imp]))
    fnr = (g.size - np.searchsorted(g, thresholds, side="right")) / g.size
    fpr = np.searchsorted(imp, thresholds, side="right") / imp.size
    fnr = np.concatenate([[1.0], fnr])  # below every score nothing is accepted
    fpr = np.concatenate([[0.0], fpr])
    diff = fnr - fpr
    k = int(np.argmax(diff <= 0.0))  # diff starts at 1 and is non-increasing
    if diff[k] == 0.0:
        return float(fpr[k])
    d_a = diff[k - 1]
    d_b = diff[k]
    frac = d_a / (d_a - d_b)
    return float(fpr[k - 1] + frac * (fpr[k] - fpr[k - 1]))


def extract_embeddings(model, dataset, batch_size: int = _EVAL_BATCH) -> tuple:
    """Run the extractor over a dataset; returns (embeddings (n, d), labels).

    Chunks of batch_size records go through together, and the extractor's
    normalization layers draw their statistics from each chunk, so results are
    deterministic for a fixed dataset order and batch_size but shift if either
    changes. Keep one batch_size when comparing embeddings across calls.
    """
    extractor = getattr(model, "extractor", model)
    from .preprocessing import batch_to_images

    images = torch.from_numpy(batch_to_images(dataset.signals))
    was_training = extractor.training
    extractor.eval()
    outs = []
    with torch.no_grad():
        for start in range(0, images.shape[0], batch_size):
            outs.append(extractor(images[start:start + batch_size]))
    if was_training:
        extractor.train()
    z = torch.cat(outs).double().numpy()
    return z, np.asarray(dataset.labels).copy()


def split_auc(model, dataset) -> float:
    """Convenience: pairwise verification AUC of a dataset under a model."""
    z, labels = extract_embeddings(model, dataset)
    _, value = roc_auc(pairwise_scores(z, labels))
    return value


def evaluate_split(model, dataset, out_dir: str | Path | None = None) -> dict:
    """Score one split end to end; optionally write metrics.json and roc.csv.

    The report pools all pairs in the split; when records carry more than one
    channel tag, a per-tag breakdown over same-tag pairs is added.
    """
    z, labels = extract_embeddings(model, dataset)
    scores = pairwise_scores(z, labels)
    curve, auc_value = roc_auc(scores)
    report = {
        "auc": auc_value,
        "eer": eer(scores),
        "n_genuine": int(scores.genuine.size),
        "n_impostor": int(scores.impostor.size),
    }

    tags = np.asarray(dataset.channel_tags)
    if np.unique(tags).size > 1:
        per_tag = {}
        for tag in sorted(np.unique(tags)):
            mask = tags == tag
            sub_labels = labels[mask]
            if mask.sum() < 2 or np.unique(sub_labels).size < 2:
                continue
            try:
                sub = pairwise_scores(z[mask], sub_labels)
            except MissingImpostorError:
                continue
            _, sub_auc = roc_auc(sub)
            per_tag[str(tag)] = {"auc": sub_auc, "eer": eer(sub),
                                 "n_genuine": int(sub.genuine.size),
                                 "n_impostor": int(sub.impostor.size)}
        if per_tag:
            report["per_tag"] = per_tag

    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        with open(out_dir / "metrics.json", "w") as fh:
            json.dump(report, fh, indent=2, sort_keys=True)
            fh.write("\n")
        write_roc_csv(out_dir / "roc.csv", curve)
    return report


def write_roc_csv(path: str | Path, curve: np.ndarray):
    with open(path, "w") as fh:
        fh.write("fpr,tpr\n")
        for fpr_value, tpr_value in curve:
            fh.write(f"{fpr_value:.17g},{tpr_value:.17g}\n")


def quartile_stats(values) -> dict:
    """Five-number summary used by the hyperparameter sweep."""
    arr = np.asarray(values, dtype=np.float64)
    if arr.size == 0:
        raise ConfigurationError("cannot summarize an empty value list")
    q1, median, q3 = np.percentile(arr, [25.0, 50.0, 75.0])
    return {"min": float(arr.min()), "q1": float(q1), "median": float(median),
            "q3": float(q3), "max": float(arr.max())}


SWEEPABLE = {"lambda": "lam", "alpha": "alpha", "beta": "beta"}


def sweep(param: str, values, repeats: int, config, datasets: dict,
          eval_split: str = "test_unknown_multipath") -> list:
    """Train `repeats` disentangling models per parameter value; summarize test AUC.

    Returns one row per value: {param_value, min, q1, median, q3, max}.
    Repeats differ only in seed (base seed + repeat index).
    """
    if param not in SWEEPABLE:
        raise ConfigurationError(f"param must be one of {sorted(SWEEPABLE)}, got {param!r}")
    if repeats < 1:
        raise ConfigurationError(f"repeats must be >= 1, got {repeats}")
    if eval_split not in datasets:
        raise ConfigurationError(f"no split named {eval_split!r} in the provided datasets")
    values = list(values)
    if not values:
        raise ConfigurationError("values must be non-empty")

    from dataclasses import replace

    from .training import train_dr

    rows = []
    for value in values:
        aucs = []
        for rep in range(repeats):
            cfg = replace(config,
                          loss=replace(config.loss, **{SWEEPABLE[param]: float(value)}),
                          train=replace(config.train, seed=config.train.seed + rep))
            state = train_dr(datasets["train"], cfg)
            aucs.append(split_auc(state.extractor, datasets[eval_split]))
        rows.append({"param_value": float(value), **quartile_stats(aucs)})
    return rows


def write_sweep_csv(path: str | Path, rows: list):
    with open(path, "w") as fh:
        fh.write("param_value,min,q1,median,q3,max\n")
        for row in rows:
            fh.write(",".join(f"{row[k]:.17g}" for k in
                              ("param_value", "min", "q1", "median", "q3", "max")) + "\n")
