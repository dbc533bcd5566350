import json
import os

import numpy as np
import pytest
import torch

from sostrainer.data import CorpusDataset, inject_thermal_noise, normalize_planes
from sostrainer.model import ModelSpec
from sostrainer.predict import predict_corpus, predict_sample
from sostrainer.train import TrainConfig, load_checkpoint, train
from sostrainer.ustn import read_tensor

SMALL_SPEC = ModelSpec(growth=4, channels=(8, 12), bottleneck=16)


class TestData:
    def test_normalization(self, fake_corpus):
        ds = CorpusDataset(fake_corpus, "train")
        x, y = ds[0]
        assert x.shape[0] == 6 and y.shape[0] == 1
        for k in range(6):
            assert abs(float(x[k].mean())) < 1e-4
        back = ds.denormalize(y)
        raw = read_tensor(os.path.join(fake_corpus, ds.ids[0], "target.ustn"))
        assert torch.allclose(back[0], torch.from_numpy(raw), atol=1e-2)

    def test_noise_injection_level(self):
        planes = np.zeros((6, 64, 64), dtype=np.float32)
        meta = {"pulse_rms": 0.5, "n_elements": 64}
        rng = np.random.default_rng(0)
        out = inject_thermal_noise(planes, meta, -80.0, rng)
        sigma = out.std()
        expected = 0.5 * 10 ** (-80 / 20) * np.sqrt(64)
        assert abs(sigma - expected) / expected < 0.05

    def test_empty_split_rejected(self, tmp_path):
        from conftest import fabricate_corpus
        root = fabricate_corpus(tmp_path / "c", n=2)
        manifest = json.loads((root / "manifest.json").read_text())
        manifest["val"] = []
        (root / "manifest.json").write_text(json.dumps(manifest))
        with pytest.raises(ValueError):
            CorpusDataset(root, "val")


@pytest.mark.slow
class TestTrainLoop:
    def test_zero_learning_rate_freezes_loss(self, fake_corpus, tmp_path):
        cfg = TrainConfig(epochs=4, learning_rate=0.0, early_stopping_patience=10,
                          batch_size=4, seed=1)
        log = train(fake_corpus, tmp_path / "run", cfg, spec=SMALL_SPEC)
        losses = log["train_mse"]
        assert max(losses) - min(losses) <= 1e-6 * max(losses)

    def test_early_stopping_keeps_best(self, fake_corpus, tmp_path):
        cfg = TrainConfig(epochs=12, early_stopping_patience=3, batch_size=4, seed=2)
        log = train(fake_corpus, tmp_path / "run", cfg, spec=SMALL_SPEC)
        model, ckpt = load_checkpoint(tmp_path / "run" / "checkpoint.pt")
        assert ckpt["val_mse"] == pytest.approx(min(log["val_mse"]), rel=1e-9)
        assert ckpt["val_mse"] <= min(log["val_mse"]) + 1e-12

    def test_weight_decay_ablation(self, fake_corpus, tmp_path):
        base = dict(epochs=10, early_stopping_patience=99, batch_size=4, seed=3)
        log_wd = train(fake_corpus, tmp_path / "wd",
                       TrainConfig(weight_decay=1e-2, **base), spec=SMALL_SPEC)
        log_free = train(fake_corpus, tmp_path / "free",
                         TrainConfig(weight_decay=0.0, **base), spec=SMALL_SPEC)
        assert log_free["train_mse"][-1] < log_wd["train_mse"][-1]


@pytest.mark.slow
class TestPredict:
    def test_predict_writes_estimates(self, fake_corpus, tmp_path):
        cfg = TrainConfig(epochs=2, batch_size=4, seed=4)
        train(fake_corpus, tmp_path / "run", cfg, spec=SMALL_SPEC)
        written = predict_corpus(tmp_path / "run" / "checkpoint.pt", fake_corpus)
        assert len(written) == 8
        est = read_tensor(os.path.join(fake_corpus, written[0], "estimate.ustn"))
        assert est.shape == (32, 32) and est.dtype == np.float32
        assert np.isfinite(est).all()
        assert 1000 < est.mean() < 2000  # denormalized to plausible m/s

    def test_noise_option_changes_input_not_crash(self, fake_corpus, tmp_path):
        cfg = TrainConfig(epochs=1, batch_size=4, seed=5)
        train(fake_corpus, tmp_path / "run", cfg, spec=SMALL_SPEC)
        model, ckpt = load_checkpoint(tmp_path / "run" / "checkpoint.pt")
        sdir = os.path.join(fake_corpus, "sample_000000")
        a = predict_sample(model, ckpt, sdir)
        b = predict_sample(model, ckpt, sdir, noise_db=-60.0,
                           rng=np.random.default_rng(1))
        assert np.isfinite(b).all()
        assert not np.array_equal(a, b)
