"""Training-loop tests: step isolation, baseline equivalence, run artifacts."""

import json

import numpy as np
import pytest
import torch

from rffx.config import ExperimentConfig
from rffx.datasets import SignalDataset
from rffx.exceptions import ConfigurationError
from rffx.losses import LossConfig
from rffx.models import ModelConfig, load_checkpoint
from rffx.training import (
    TrainConfig,
    _mixing_permutation,
    f_step,
    init_state,
    parameter_digest,
    qg_step,
    train,
    train_baseline,
    train_dr,
)

M = 160  # 2 rows of 80 samples per image keeps the toy nets tiny


def toy_model_cfg():
    return ModelConfig(complexity=6, embed_dim=8, base_width=2, width_cap=4,
                       unet_widths=(4, 8), input_shape=(2, 2, 80))


def toy_cfg(method="dr", epochs=2, lam=0.5, alpha=10.0, seed=0, **train_kw):
    return ExperimentConfig(
        model=toy_model_cfg(),
        loss=LossConfig(lam=lam, alpha=alpha),
        train=TrainConfig(epochs=epochs, batch_size=8, method=method,
                          seed=seed, **train_kw))


def toy_dataset(n_per=8, devices=3, seed=0):
    rng = np.random.default_rng(seed)
    n = n_per * devices
    signals = rng.normal(size=(n, M)) + 1j * rng.normal(size=(n, M))
    labels = np.repeat(np.arange(devices), n_per)
    return SignalDataset(signals=signals, labels=labels, channel_tags=["los_jitter"] * n,
                         sample_rate=1e7, seed=seed)


def toy_batch(state, n=8, devices=3, seed=1):
    rng = np.random.default_rng(seed)
    from rffx.preprocessing import batch_to_images
    signals = rng.normal(size=(n, M)) + 1j * rng.normal(size=(n, M))
    images = torch.from_numpy(batch_to_images(signals))
    labels = torch.from_numpy(rng.integers(0, devices, size=n))
    return images, labels


def test_train_config_validation():
    with pytest.raises(ConfigurationError):
        TrainConfig(batch_size=1)
    with pytest.raises(ConfigurationError):
        TrainConfig(epochs=-1)
    with pytest.raises(ConfigurationError):
        TrainConfig(method="sgd")
    with pytest.raises(ConfigurationError):
        TrainConfig(learning_rate=0.0)
    with pytest.raises(ConfigurationError):
        TrainConfig(adam_betas=(0.9, 1.0))
    with pytest.raises(ConfigurationError):
        TrainConfig(aug_snr_range=(30.0, 5.0))
    with pytest.raises(ConfigurationError):
        TrainConfig(qg_per_f=0)


def test_train_config_round_trip():
    cfg = TrainConfig(epochs=3, method="awgn", aug_snr_range=(5, 30))
    again = TrainConfig.from_dict(cfg.to_dict())
    assert again == cfg
    with pytest.raises(ConfigurationError):
        TrainConfig.from_dict({"momentum": 0.9})


def test_init_state_network_roster():
    cfg = toy_cfg("dr")
    state = init_state(3, cfg.model, cfg.loss, cfg.train)
    assert state.background is not None and state.generator is not None
    assert state.opt_qg is not None

    cfg_ml = toy_cfg("ml")
    state_ml = init_state(3, cfg_ml.model, cfg_ml.loss, cfg_ml.train)
    assert state_ml.background is None and state_ml.opt_qg is None


def test_init_draws_match_across_methods():
    # the extractor and classifier must start identically whether or not the
    # disentangling networks get built afterwards
    cfg_dr = toy_cfg("dr", seed=5)
    cfg_ml = toy_cfg("ml", seed=5)
    s_dr = init_state(3, cfg_dr.model, cfg_dr.loss, cfg_dr.train)
    s_ml = init_state(3, cfg_ml.model, cfg_ml.loss, cfg_ml.train)
    assert parameter_digest(s_dr.extractor, s_dr.classifier) == \
        parameter_digest(s_ml.extractor, s_ml.classifier)

    s_other = init_state(3, cfg_dr.model, cfg_dr.loss, toy_cfg("dr", seed=6).train)
    assert parameter_digest(s_other.extractor) != parameter_digest(s_dr.extractor)


def test_qg_step_leaves_fingerprint_side_alone():
    cfg = toy_cfg("dr")
    state = init_state(3, cfg.model, cfg.loss, cfg.train)
    images, labels = toy_batch(state)
    before_fw = parameter_digest(state.extractor, state.classifier)
    before_qg = parameter_digest(state.background, state.generator)
    parts = qg_step(state, images, labels)
    assert parameter_digest(state.extractor, state.classifier) == before_fw
    assert parameter_digest(state.background, state.generator) != before_qg
    for key in ("background", "generator", "reconstruction", "leakage"):
        assert np.isfinite(parts[key])
    for p in state.extractor.parameters():
        assert p.grad is None
    for p in state.classifier.parameters():
        assert p.grad is None


def test_f_step_leaves_disentangling_side_alone():
    cfg = toy_cfg("dr")
    state = init_state(3, cfg.model, cfg.loss, cfg.train)
    images, labels = toy_batch(state)
    before_qg = parameter_digest(state.background, state.generator)
    before_fw = parameter_digest(state.extractor, state.classifier)
    parts = f_step(state, images, labels)
    assert parameter_digest(state.background, state.generator) == before_qg
    assert parameter_digest(state.extractor, state.classifier) != before_fw
    assert np.isfinite(parts["extractor"])
    for p in state.background.parameters():
        assert p.grad is None
    for p in state.generator.parameters():
        assert p.grad is None


def test_f_step_warns_on_singleton_batch():
    cfg = toy_cfg("dr")
    state = init_state(3, cfg.model, cfg.loss, cfg.train)
    images, labels = toy_batch(state, n=1)
    with pytest.warns(UserWarning):
        f_step(state, images, labels)


def test_qg_step_requires_disentangling_networks():
    cfg = toy_cfg("ml")
    state = init_state(3, cfg.model, cfg.loss, cfg.train)
    images, labels = toy_batch(state)
    with pytest.raises(ConfigurationError):
        qg_step(state, images, labels)


def test_mixing_permutation_avoids_fixed_points():
    gen = torch.Generator().manual_seed(0)
    clean = 0
    for _ in range(50):
        perm = _mixing_permutation(8, gen)
        assert sorted(perm.tolist()) == list(range(8))
        clean += not any(perm[i] == i for i in range(8))
    # redraws make a fixed point rare (about 1% per call), not impossible
    assert clean >= 45
    gen_a = torch.Generator().manual_seed(3)
    gen_b = torch.Generator().manual_seed(3)
    assert _mixing_permutation(6, gen_a).tolist() == _mixing_permutation(6, gen_b).tolist()


def test_parameter_digest_tracks_changes():
    net = torch.nn.Linear(4, 3)
    d0 = parameter_digest(net)
    assert parameter_digest(net) == d0
    with torch.no_grad():
        net.weight[0, 0] += 1.0
    assert parameter_digest(net) != d0


def test_neutral_dr_matches_plain_likelihood_trajectory():
    # with the augmented term disabled, the disentangling run must move the
    # fingerprint networks exactly as the plain baseline does
    ds = toy_dataset()
    state_dr = train_dr(ds, toy_cfg("dr", epochs=2, lam=1.0, alpha=0.0))
    state_ml = train_baseline(ds, toy_cfg("ml", epochs=2))
    vec_dr = torch.cat([p.detach().reshape(-1) for p in state_dr.extractor.parameters()])
    vec_ml = torch.cat([p.detach().reshape(-1) for p in state_ml.extractor.parameters()])
    assert float((vec_dr - vec_ml).abs().max()) < 1e-6
    assert parameter_digest(state_dr.extractor, state_dr.classifier) == \
        parameter_digest(state_ml.extractor, state_ml.classifier)
    dr_losses = [r["extractor"] for r in state_dr.loss_history]
    ml_losses = [r["extractor"] for r in state_ml.loss_history]
    assert dr_losses == ml_losses


def test_awgn_without_noise_matches_plain_likelihood():
    ds = toy_dataset()
    state_awgn = train_baseline(ds, toy_cfg("awgn", epochs=2, aug_snr_range=None))
    state_ml = train_baseline(ds, toy_cfg("ml", epochs=2))
    assert parameter_digest(state_awgn.extractor, state_awgn.classifier) == \
        parameter_digest(state_ml.extractor, state_ml.classifier)


def test_fir_baseline_differs_from_plain_likelihood():
    ds = toy_dataset()
    state_fir = train_baseline(ds, toy_cfg("fir", epochs=1))
    state_ml = train_baseline(ds, toy_cfg("ml", epochs=1))
    assert parameter_digest(state_fir.extractor) != parameter_digest(state_ml.extractor)
    assert np.isfinite(state_fir.loss_history[0]["extractor"])


def test_dr_run_records_all_loss_components():
    ds = toy_dataset()
    state = train_dr(ds, toy_cfg("dr", epochs=2))
    assert len(state.loss_history) == 2
    for i, record in enumerate(state.loss_history):
        assert record["epoch"] == i + 1
        assert set(record) == {"epoch", "extractor", "background", "generator",
                               "reconstruction", "leakage"}
        assert all(np.isfinite(v) for v in record.values())
    assert state.epoch == 2


def test_baseline_run_records_extractor_loss_only():
    ds = toy_dataset()
    state = train_baseline(ds, toy_cfg("ml", epochs=1))
    assert state.loss_history[0].keys() == {"epoch", "extractor"}


def test_eval_history_collection():
    ds = toy_dataset()
    state = train_baseline(ds, toy_cfg("ml", epochs=2, eval_every=1),
                           eval_datasets={"val": toy_dataset(seed=9)})
    assert [e["epoch"] for e in state.eval_history] == [1, 2]
    for entry in state.eval_history:
        assert 0.0 <= entry["auc"]["val"] <= 1.0


def test_run_artifacts_on_disk(tmp_path):
    ds = toy_dataset()
    train_dr(ds, toy_cfg("dr", epochs=1), out_dir=tmp_path)
    ckpt = load_checkpoint(tmp_path / "checkpoint.pt")
    assert ckpt.num_classes == 3
    assert ckpt.epoch == 1
    assert ckpt.background is not None and ckpt.generator is not None
    history = json.loads((tmp_path / "history.json").read_text())
    assert history["method"] == "dr"
    assert len(history["loss_history"]) == 1
    assert history["eval_history"] == []


def test_zero_epochs_still_writes_checkpoint(tmp_path):
    ds = toy_dataset()
    state = train_baseline(ds, toy_cfg("ml", epochs=0), out_dir=tmp_path)
    assert state.loss_history == []
    assert (tmp_path / "checkpoint.pt").exists()


def test_dispatcher_and_method_guards():
    ds = toy_dataset()
    state = train(ds, toy_cfg("ml", epochs=1))
    assert state.background is None
    with pytest.raises(ConfigurationError):
        train_dr(ds, toy_cfg("ml"))
    with pytest.raises(ConfigurationError):
        train_baseline(ds, toy_cfg("dr"))


def test_label_and_shape_validation():
    ds = toy_dataset()
    bad_labels = ds.labels.copy()
    bad_labels[bad_labels == 1] = 7
    bad = SignalDataset(signals=ds.signals, labels=bad_labels,
                        channel_tags=ds.channel_tags, sample_rate=1e7)
    with pytest.raises(ConfigurationError):
        train_baseline(bad, toy_cfg("ml"))

    cfg = toy_cfg("ml")
    cfg.model = ModelConfig(complexity=6, embed_dim=8, base_width=2, width_cap=4,
                            unet_widths=(4, 8), input_shape=(2, 16, 80))
    with pytest.raises(ConfigurationError):
        train_baseline(ds, cfg)


def test_determinism_across_identical_runs():
    ds = toy_dataset()
    a = train_dr(ds, toy_cfg("dr", epochs=1))
    b = train_dr(ds, toy_cfg("dr", epochs=1))
    assert parameter_digest(a.extractor, a.classifier, a.background, a.generator) == \
        parameter_digest(b.extractor, b.classifier, b.background, b.generator)
    assert a.loss_history == b.loss_history
