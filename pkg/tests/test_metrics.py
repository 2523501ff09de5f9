"""Verification-metric tests: exact agreement with brute-force oracles."""

import json

import numpy as np
import pytest
import torch

from rffx.datasets import SignalDataset
from rffx.exceptions import (
    ConfigurationError,
    DegenerateEmbeddingError,
    MissingImpostorError,
    ShapeError,
)
from rffx.metrics import (
    ScoreSet,
    eer,
    evaluate_split,
    extract_embeddings,
    pairwise_scores,
    quartile_stats,
    roc_auc,
    split_auc,
    sweep,
    write_sweep_csv,
)
from rffx.models import ModelConfig, build_extractor

from helpers import auc_oracle, eer_oracle


def test_worked_example():
    s = ScoreSet([0.1, 0.2], [0.15, 0.3])
    _, auc_value = roc_auc(s)
    assert auc_value == 0.75
    assert eer(s) == 0.5


def test_perfect_separation():
    s = ScoreSet([0.1, 0.2, 0.3], [0.9, 1.1, 1.5, 1.9])
    curve, auc_value = roc_auc(s)
    assert auc_value == 1.0
    assert eer(s) == 0.0
    assert curve[0].tolist() == [0.0, 0.0]
    assert curve[-1].tolist() == [1.0, 1.0]


def test_reversed_separation():
    s = ScoreSet([1.5, 1.8], [0.2, 0.4])
    _, auc_value = roc_auc(s)
    assert auc_value == 0.0
    assert eer(s) == 1.0


def test_swap_symmetry_without_ties():
    rng = np.random.default_rng(3)
    g = rng.uniform(0.0, 2.0, size=25)
    i = rng.uniform(0.0, 2.0, size=31)
    _, forward = roc_auc(ScoreSet(g, i))
    _, backward = roc_auc(ScoreSet(i, g))
    assert abs(forward + backward - 1.0) < 1e-12


def test_all_tied_scores():
    s = ScoreSet([0.5] * 4, [0.5] * 6)
    _, auc_value = roc_auc(s)
    assert auc_value == 0.5
    assert eer(s) == 0.5


def test_matches_oracles_on_random_score_sets():
    rng = np.random.default_rng(7)
    for _ in range(200):
        ng = int(rng.integers(1, 60))
        ni = int(rng.integers(1, 60))
        if rng.random() < 0.5:
            # coarse grid forces heavy ties
            levels = np.linspace(0.0, 2.0, 8)
            g = rng.choice(levels, size=ng)
            i = rng.choice(levels, size=ni)
        else:
            g = rng.uniform(0.0, 2.0, size=ng)
            i = rng.uniform(0.0, 2.0, size=ni)
        s = ScoreSet(g, i)
        curve, auc_value = roc_auc(s)
        assert auc_value == auc_oracle(list(g), list(i))
        assert eer(s) == eer_oracle(list(g), list(i))
        # the stepped curve integrates to the pair-counting value
        assert abs(np.trapezoid(curve[:, 1], curve[:, 0]) - auc_value) < 1e-12


def test_curve_is_monotone():
    rng = np.random.default_rng(11)
    s = ScoreSet(rng.uniform(0, 2, 40), rng.uniform(0, 2, 55))
    curve, _ = roc_auc(s)
    assert np.all(np.diff(curve[:, 0]) >= 0)
    assert np.all(np.diff(curve[:, 1]) >= 0)
    assert curve[-1].tolist() == [1.0, 1.0]


def test_score_set_validation():
    with pytest.raises(MissingImpostorError):
        ScoreSet([], [0.5])
    with pytest.raises(MissingImpostorError):
        ScoreSet([0.5], [])
    with pytest.raises(ConfigurationError):
        ScoreSet([2.5], [0.5])
    with pytest.raises(ConfigurationError):
        ScoreSet([-0.1], [0.5])
    with pytest.raises(ConfigurationError):
        ScoreSet([np.nan], [0.5])


def test_pairwise_scores_hand_values():
    z = np.array([[1.0, 0.0], [0.0, 1.0], [-2.0, 0.0]])
    labels = np.array([0, 0, 1])
    s = pairwise_scores(z, labels)
    # genuine pair: orthogonal unit vectors -> distance 1
    assert s.genuine.tolist() == [1.0]
    # impostor pairs: opposite -> 2, orthogonal -> 1 (scale must not matter)
    assert sorted(s.impostor.tolist()) == [1.0, 2.0]


def test_pairwise_scores_errors():
    z = np.ones((3, 4))
    with pytest.raises(ShapeError):
        pairwise_scores(z, np.zeros(2, dtype=int))
    with pytest.raises(ShapeError):
        pairwise_scores(np.ones(4), np.zeros(1, dtype=int))
    z_bad = z.copy()
    z_bad[1] = 0.0
    with pytest.raises(DegenerateEmbeddingError):
        pairwise_scores(z_bad, np.array([0, 0, 1]))
    with pytest.raises(MissingImpostorError):
        pairwise_scores(z, np.array([0, 0, 0]))


def _tiny_dataset(n_per_device=4, num_devices=3, seed=0, tags=None):
    rng = np.random.default_rng(seed)
    n = n_per_device * num_devices
    signals = rng.normal(size=(n, 1280)) + 1j * rng.normal(size=(n, 1280))
    labels = np.repeat(np.arange(num_devices), n_per_device)
    if tags is None:
        tags = ["los_jitter"] * n
    return SignalDataset(signals=signals, labels=labels.astype(np.int64),
                         channel_tags=list(tags), sample_rate=1e7, seed=seed)


def _tiny_extractor():
    cfg = ModelConfig(complexity=6, embed_dim=4, base_width=2, width_cap=4)
    torch.manual_seed(0)
    return build_extractor(cfg)


def test_extract_embeddings_matches_direct_forward():
    ds = _tiny_dataset()
    net = _tiny_extractor()
    z, labels = extract_embeddings(net, ds, batch_size=64)
    assert z.shape == (12, 4)
    assert z.dtype == np.float64
    np.testing.assert_array_equal(labels, ds.labels)

    from rffx.preprocessing import batch_to_images
    net.eval()  # extraction always runs in inference mode
    images = torch.from_numpy(batch_to_images(ds.signals))
    with torch.no_grad():
        direct = net(images).double().numpy()
    np.testing.assert_array_equal(z, direct)

    # normalization statistics come from each chunk, so chunked extraction
    # must equal the matching per-chunk forwards, not one big forward
    z5, _ = extract_embeddings(net, ds, batch_size=5)
    with torch.no_grad():
        chunked = np.concatenate([net(images[i:i + 5]).double().numpy()
                                  for i in range(0, 12, 5)])
    np.testing.assert_array_equal(z5, chunked)


def test_extract_embeddings_restores_train_mode():
    ds = _tiny_dataset()
    net = _tiny_extractor()
    net.train()
    extract_embeddings(net, ds)
    assert net.training


def test_evaluate_split_writes_report(tmp_path):
    tags = (["fir5"] * 6) + (["rician4"] * 6)
    ds = _tiny_dataset(tags=tags)
    net = _tiny_extractor()
    report = evaluate_split(net, ds, out_dir=tmp_path)
    assert set(report) >= {"auc", "eer", "n_genuine", "n_impostor"}
    assert 0.0 <= report["auc"] <= 1.0
    assert 0.0 <= report["eer"] <= 1.0
    assert report["n_genuine"] + report["n_impostor"] == 12 * 11 // 2
    assert "per_tag" in report
    assert set(report["per_tag"]) == {"fir5", "rician4"}

    on_disk = json.loads((tmp_path / "metrics.json").read_text())
    assert on_disk == report
    roc_lines = (tmp_path / "roc.csv").read_text().splitlines()
    assert roc_lines[0] == "fpr,tpr"
    first = [float(v) for v in roc_lines[1].split(",")]
    assert first == [0.0, 0.0]
    assert report["auc"] == split_auc(net, ds)


def test_evaluate_split_deterministic_bytes(tmp_path):
    ds = _tiny_dataset()
    net = _tiny_extractor()
    evaluate_split(net, ds, out_dir=tmp_path / "a")
    evaluate_split(net, ds, out_dir=tmp_path / "b")
    assert (tmp_path / "a" / "metrics.json").read_bytes() == \
        (tmp_path / "b" / "metrics.json").read_bytes()
    assert (tmp_path / "a" / "roc.csv").read_bytes() == (tmp_path / "b" / "roc.csv").read_bytes()


def test_quartile_stats():
    stats = quartile_stats([1.0, 2.0, 3.0, 4.0, 5.0])
    assert stats == {"min": 1.0, "q1": 2.0, "median": 3.0, "q3": 4.0, "max": 5.0}
    with pytest.raises(ConfigurationError):
        quartile_stats([])


def test_sweep_validation():
    with pytest.raises(ConfigurationError):
        sweep("gamma", [0.1], 1, None, {"train": None})
    with pytest.raises(ConfigurationError):
        sweep("lambda", [0.1], 0, None, {"train": None})
    with pytest.raises(ConfigurationError):
        sweep("lambda", [], 1, None, {"train": None, "test_unknown_multipath": None})
    with pytest.raises(ConfigurationError):
        sweep("lambda", [0.1], 1, None, {"train": None})


def test_write_sweep_csv(tmp_path):
    rows = [{"param_value": 0.5, "min": 0.8, "q1": 0.85, "median": 0.9,
             "q3": 0.95, "max": 1.0}]
    path = tmp_path / "sweep.csv"
    write_sweep_csv(path, rows)
    lines = path.read_text().splitlines()
    assert lines[0] == "param_value,min,q1,median,q3,max"
    assert [float(v) for v in lines[1].split(",")] == [0.5, 0.8, 0.85, 0.9, 0.95, 1.0]
