"""Training/evaluation harness: config plumbing, determinism, artifacts."""

import numpy as np
import pytest

from hdcnet import harness
from hdcnet.data import dataset as ds
from hdcnet.data.checkpoint import load_checkpoint
from hdcnet.tensor import Tensor

TINY = dict(channels=4, height=32, width=32, heads="2,2,2,2", mha_heads=2)


def tiny_cfg(tmp_path, **kw):
    base = dict(TINY, synthetic=4, epochs=2, batch_size=2, seed=0, out_dir=str(tmp_path / "run"))
    base.update(kw)
    return harness.TrainConfig(**base)


# ------------------------------------------------------------------- config


def test_config_from_kv_types_and_unknown_keys():
    cfg = harness.config_from_kv(
        {"lr": "0.01", "epochs": "7", "use_smfm": "false", "heads": "2,4,4,8"}
    )
    assert cfg.lr == 0.01 and cfg.epochs == 7
    assert cfg.use_smfm is False
    assert cfg.heads == "2,4,4,8"
    with pytest.raises(ValueError, match="unknown config key"):
        harness.config_from_kv({"learning_rate": "0.1"})
    with pytest.raises(ValueError, match="boolean"):
        harness.config_from_kv({"use_btmfm": "maybe"})


def test_config_from_kv_layers_on_base():
    base = harness.TrainConfig(epochs=5, lr=0.5)
    out = harness.config_from_kv({"lr": "0.25"}, base)
    assert out.lr == 0.25 and out.epochs == 5
    assert base.lr == 0.5  # base untouched


def test_read_config_file(tmp_path):
    p = tmp_path / "run.cfg"
    p.write_text("# comment\nlr = 0.002\n\nepochs=3  # inline\nheads = 2,2,2,2\n")
    kv = harness.read_config_file(p)
    assert kv == {"lr": "0.002", "epochs": "3", "heads": "2,2,2,2"}
    p.write_text("oops\n")
    with pytest.raises(ValueError, match="key=value"):
        harness.read_config_file(p)


def test_train_config_kv_roundtrip():
    cfg = harness.TrainConfig(lr=0.02, use_btmfm=False, heads="2,4,8,16")
    back = harness.config_from_kv(cfg.to_kv())
    assert back == cfg


# ----------------------------------------------------------------- batching


def test_batch_arrays_shapes():
    samples = ds.synthetic_split(3, base_seed=11, height=32, width=40)
    rgb, raw, gt, valid, ev = harness.batch_arrays(samples)
    assert rgb.shape == (3, 3, 32, 40) and rgb.dtype == np.float32
    assert raw.shape == gt.shape == valid.shape == ev.shape == (3, 1, 32, 40)
    assert valid.dtype == np.bool_
    np.testing.assert_array_equal(valid[1, 0], samples[1].valid)
    # evaluation mask is the transparent & valid subset here
    np.testing.assert_array_equal(ev[1, 0], samples[1].transparent & samples[1].valid)


def test_check_resolution_names_offender():
    samples = ds.synthetic_split(1, base_seed=11, height=32, width=40)
    with pytest.raises(ValueError, match="syn-00000011.*40x32.*64x48"):
        harness.check_resolution(48, 64, samples, "train")


# ----------------------------------------------------------------- training


def test_train_writes_artifacts_and_is_deterministic(tmp_path):
    ra = harness.train(tiny_cfg(tmp_path / "a"))
    rb = harness.train(tiny_cfg(tmp_path / "b"))
    assert ra.steps_done == rb.steps_done == 4  # 4 samples / batch 2 * 2 epochs
    assert ra.final_path.exists() and ra.best_path.exists()
    # different out_dir must not leak into the bytes
    assert ra.final_path.read_bytes() == rb.final_path.read_bytes()
    assert ra.best_path.read_bytes() == rb.best_path.read_bytes()
    # loss columns identical; wall seconds may differ
    for x, y in zip(ra.log_rows, rb.log_rows):
        assert x[:4] == y[:4]
    log = (tmp_path / "a" / "run" / "train_log.csv").read_text().splitlines()
    assert log[0] == "epoch,loss_mse,loss_normal,loss_total,seconds"
    assert len(log) == 3


def test_train_seed_changes_everything(tmp_path):
    ra = harness.train(tiny_cfg(tmp_path / "a"))
    rb = harness.train(tiny_cfg(tmp_path / "b", seed=1))
    assert ra.final_path.read_bytes() != rb.final_path.read_bytes()


def test_epochs_zero_saves_init(tmp_path):
    res = harness.train(tiny_cfg(tmp_path, epochs=0))
    assert res.steps_done == 0
    assert res.final_path.exists()
    assert res.best_path is None
    tensors, _ = load_checkpoint(res.final_path)
    assert tensors  # the untrained weights are already a usable model


def test_step_cap_cuts_mid_epoch(tmp_path):
    res = harness.train(tiny_cfg(tmp_path, epochs=50, steps=3))
    assert res.steps_done == 3


def test_best_checkpoint_uses_validation_set(tmp_path):
    cfg = tiny_cfg(tmp_path)
    val = ds.synthetic_split(2, base_seed=500, height=32, width=32)
    res = harness.train(cfg, val_samples=val)
    assert res.best_path is not None and res.best_path.exists()


def test_divergence_aborts_cleanly(tmp_path, monkeypatch):
    nan_loss = lambda *a, **k: Tensor(np.float32(np.nan))
    monkeypatch.setattr(harness, "loss_mse", nan_loss)
    monkeypatch.setattr(harness, "loss_normal", nan_loss)
    res = harness.train(tiny_cfg(tmp_path))
    assert res.diverged is True
    assert res.final_path is None  # nothing completed, nothing kept
    assert res.log_rows == []


def test_train_input_validation(tmp_path):
    with pytest.raises(ValueError, match="synthetic>0 or a data_root"):
        harness.train(tiny_cfg(tmp_path, synthetic=0))
    with pytest.raises(ValueError, match="empty training set"):
        harness.train(tiny_cfg(tmp_path), samples=[])
    bad = ds.synthetic_split(1, base_seed=0, height=48, width=64)
    with pytest.raises(ValueError, match="train"):
        harness.train(tiny_cfg(tmp_path), samples=bad)


# ------------------------------------------------------- persistence


def test_save_load_model_roundtrip(tmp_path):
    cfg = tiny_cfg(tmp_path, lr=0.123, use_btmfm=False)
    res = harness.train(cfg)
    model, cfg2 = harness.load_model(res.final_path)
    assert cfg2.lr == 0.123
    assert cfg2.use_btmfm is False
    assert cfg2.channels == cfg.channels
    # volatile keys never round-trip
    assert cfg2.out_dir == harness.TrainConfig().out_dir
    # a loaded model reproduces the saved weights exactly
    tensors, _ = load_checkpoint(res.final_path)
    state = model.state_dict()
    assert set(state) == set(tensors)
    for k in state:
        np.testing.assert_array_equal(state[k], tensors[k])


def test_checkpoint_meta_has_format_tag(tmp_path):
    res = harness.train(tiny_cfg(tmp_path, epochs=0))
    _, meta = load_checkpoint(res.final_path)
    assert meta["format"] == "hdcnet-train"
    assert "out_dir" not in meta and "data_root" not in meta


# ------------------------------------------------- evaluation and inference


def _trained(tmp_path):
    res = harness.train(tiny_cfg(tmp_path, epochs=1))
    return harness.load_model(res.final_path)[0]


def test_predict_and_evaluate(tmp_path):
    model = _trained(tmp_path)
    samples = ds.synthetic_split(3, base_seed=500, height=32, width=32)
    preds = harness.predict(model, samples, batch_size=2)
    assert preds.shape == (3, 32, 32)
    assert (preds > 0).all()
    report, rows = harness.evaluate(model, samples, batch_size=2, per_sample=True)
    assert len(rows) == 3
    assert all(np.isfinite(v) for v in report.as_tuple())
    csv = harness.eval_csv(report, rows)
    lines = csv.splitlines()
    assert lines[0] == "rmse,rel,mae,d105,d110,d125"
    assert len(lines) == 5
    assert lines[3].startswith("syn-00000501,")


def test_evaluate_falls_back_to_valid_when_nothing_transparent(tmp_path):
    # an all-opaque scene must still be scored, over its valid pixels
    model = _trained(tmp_path)
    samples = ds.synthetic_split(
        1, base_seed=42, height=32, width=32, n_primitives=0, hole_ratio=0.0
    )
    assert not samples[0].transparent.any()
    report, _ = harness.evaluate(model, samples)
    assert np.isfinite(report.rmse)


def test_evaluate_batch_size_does_not_change_result(tmp_path):
    model = _trained(tmp_path)
    samples = ds.synthetic_split(4, base_seed=500, height=32, width=32)
    r1, _ = harness.evaluate(model, samples, batch_size=1)
    r4, _ = harness.evaluate(model, samples, batch_size=4)
    # window attention and the scan see each sample independently, so
    # batching is a pure throughput knob
    assert r1.as_tuple() == pytest.approx(r4.as_tuple(), rel=1e-5)


def test_train_rmse_uses_valid_pixels(tmp_path):
    model = _trained(tmp_path)
    samples = ds.synthetic_split(2, base_seed=500, height=32, width=32)
    v = harness.train_rmse(model, samples)
    assert np.isfinite(v) and v > 0


def test_infer_files_roundtrip(tmp_path):
    from hdcnet.data import pnm

    cfg = tiny_cfg(tmp_path, epochs=1)
    res = harness.train(cfg)
    sample = ds.synthetic_split(1, base_seed=9, height=32, width=32)[0]
    d = tmp_path / "io"
    ds.write_sample(sample, d)
    sid = sample.sample_id
    out, err = harness.infer_files(
        res.final_path, d / f"{sid}_rgb.ppm", d / f"{sid}_raw.pgm", d / "pred.pgm"
    )
    assert err is None
    pred = pnm.read_pgm(out)
    assert pred.shape == (32, 32) and pred.dtype == np.uint16
    out, err = harness.infer_files(
        res.final_path,
        d / f"{sid}_rgb.ppm",
        d / f"{sid}_raw.pgm",
        d / "pred2.pgm",
        gt_path=d / f"{sid}_gt.pgm",
    )
    assert err is not None and err.exists()
    emap = pnm.read_pgm(err)
    assert emap.shape == (32, 32)


def test_infer_files_rejects_mismatched_sizes(tmp_path):
    cfg = tiny_cfg(tmp_path, epochs=0)
    res = harness.train(cfg)
    sample = ds.synthetic_split(1, base_seed=9, height=48, width=64)[0]
    d = tmp_path / "io"
    ds.write_sample(sample, d)
    sid = sample.sample_id
    with pytest.raises(ValueError, match="checkpoint expects 32x32"):
        harness.infer_files(
            res.final_path, d / f"{sid}_rgb.ppm", d / f"{sid}_raw.pgm", d / "pred.pgm"
        )


# ----------------------------------------------------------------- ablation


def test_ablation_csv_structure():
    from hdcnet.metrics import MetricsReport

    rep = MetricsReport(0.1, 0.2, 0.3, 10.0, 20.0, 30.0)
    rows = [(label, None, rep) for label, _, _ in harness.ABLATION_GRID]
    csv = harness.ablation_csv(rows)
    lines = csv.splitlines()
    assert lines[0] == "variant,rmse,rel,mae,d105,d110,d125"
    assert [l.split(",")[0] for l in lines[1:]] == ["none", "smfm", "btmfm", "smfm+btmfm"]
    assert lines[1].endswith("0.100000,0.200000,0.300000,10.000000,20.000000,30.000000")
