"""Tests for the training loop, prediction and checkpoint resume."""

import numpy as np
import pytest

from mew_unet.data import TextureSpec, generate_dataset
from mew_unet.errors import ConfigError, DataError, NumericalError
from mew_unet.model import ModelConfig, build, load_checkpoint, save_checkpoint
from mew_unet.optim import cosine_annealing_lr
from mew_unet.tensor import make_rng
from mew_unet.train import (
    BEST_CHECKPOINT,
    LAST_CHECKPOINT,
    TrainConfig,
    evaluate_model,
    fit,
    predict,
    train_epoch,
)

MODEL = ModelConfig(in_channels=3, n_classes=2, base_width=4, stage_depths=[1, 1],
                    image_size=16, ffn_ratio=2, irb_ratio=2, weight_base=4)


@pytest.fixture(scope="module")
def train_set():
    return generate_dataset(4, 16, 2, TextureSpec.default(), seed=0)


@pytest.fixture(scope="module")
def test_set():
    return generate_dataset(2, 16, 2, TextureSpec.default(), seed=0, stream=1)


def recipe(**kwargs):
    return TrainConfig(**{"epochs": 2, "batch_size": 2, "lr_init": 1e-2, "seed": 3, **kwargs})


class TestTrainConfig:
    @pytest.mark.parametrize("kwargs", [{"epochs": 0}, {"lr_init": 0.0}, {"optimizer": "adam"},
                                        {"batch_size": 0}, {"seed": -1}, {"eta_min": -1.0}])
    def test_invalid(self, kwargs):
        with pytest.raises(ConfigError):
            TrainConfig(**kwargs)

    def test_unknown_key(self):
        with pytest.raises(ConfigError):
            TrainConfig.from_dict({"epochs": 3, "warmup": 2})

    def test_lr_follows_cosine(self):
        cfg = recipe(epochs=10)
        for t in range(10):
            assert cfg.lr_at(t) == cosine_annealing_lr(t, 10, 1e-2, 1e-5)


class TestEpoch:
    def test_stats(self, train_set):
        model = build(MODEL, make_rng(0))
        cfg = recipe(batch_size=3)
        stats = train_epoch(model, train_set, cfg, cfg.make_optimizer(model.parameters()), 1)
        assert stats.epoch == 1
        assert stats.steps == 2
        assert stats.lr == cfg.lr_at(1)
        assert np.isfinite(stats.loss)
        assert 0.0 <= stats.train_miou <= 1.0

    def test_updates_parameters(self, train_set):
        model = build(MODEL, make_rng(0))
        before = {k: v.copy() for k, v in model.parameters().items()}
        cfg = recipe()
        train_epoch(model, train_set, cfg, cfg.make_optimizer(model.parameters()), 0)
        changed = [k for k, v in model.parameters().items() if not np.array_equal(v, before[k])]
        assert "head.kernel" in changed and "stem.kernel" in changed

    def test_empty_dataset(self, train_set):
        empty = generate_dataset(0, 16, 2, TextureSpec.default(), seed=0)
        model = build(MODEL, make_rng(0))
        cfg = recipe()
        with pytest.raises(DataError):
            train_epoch(model, empty, cfg, cfg.make_optimizer(model.parameters()), 0)

    def test_non_finite_input(self, train_set):
        bad = generate_dataset(2, 16, 2, TextureSpec.default(), seed=0)
        bad.images[0, 0, 0, 0] = np.nan
        model = build(MODEL, make_rng(0))
        cfg = recipe()
        with pytest.raises(NumericalError):
            train_epoch(model, bad, cfg, cfg.make_optimizer(model.parameters()), 0)


class TestFit:
    def test_deterministic(self, train_set, test_set):
        runs = []
        for _ in range(2):
            model = build(MODEL, make_rng(1))
            history = fit(model, train_set, recipe(), test_set)
            runs.append((history, model.parameters()))
        (h1, p1), (h2, p2) = runs
        assert h1.equals(h2)
        for name in p1:
            np.testing.assert_array_equal(p1[name], p2[name])

    def test_history_and_checkpoints(self, train_set, test_set, tmp_path):
        model = build(MODEL, make_rng(1))
        history = fit(model, train_set, recipe(), test_set, out_dir=tmp_path)
        assert list(history.epoch) == [0, 1]
        for column in ("lr", "loss", "steps", "train_miou", "train_dsc",
                       "test_miou", "test_dsc", "test_hd95"):
            assert column in history.columns
        assert (tmp_path / BEST_CHECKPOINT).exists()
        last = load_checkpoint(tmp_path / LAST_CHECKPOINT, expected_config=MODEL)
        assert last.next_epoch == 2
        assert last.optimizer_meta["kind"] == "adamw"
        assert last.metadata["train_config"]["seed"] == 3
        np.testing.assert_array_equal(predict(last.model, test_set.images),
                                      predict(model, test_set.images))

    def test_eval_every(self, train_set, test_set):
        history = fit(build(MODEL, make_rng(1)), train_set, recipe(epochs=3, eval_every=2),
                      test_set)
        assert history.test_dsc.isna().tolist() == [True, False, False]

    @pytest.mark.parametrize("optimizer", ["adamw", "sgd"])
    def test_resume_is_exact(self, train_set, tmp_path, optimizer):
        cfg = recipe(optimizer=optimizer)

        model = build(MODEL, make_rng(2))
        opt = cfg.make_optimizer(model.parameters())
        for epoch in range(2):
            train_epoch(model, train_set, cfg, opt, epoch)

        first = build(MODEL, make_rng(2))
        first_opt = cfg.make_optimizer(first.parameters())
        train_epoch(first, train_set, cfg, first_opt, 0)
        meta, arrays = first_opt.state_dict()
        path = save_checkpoint(tmp_path / "mid.mewt", first, seed=cfg.seed, next_epoch=1,
                               optimizer_meta=meta, optimizer_arrays=arrays)

        ckpt = load_checkpoint(path)
        resumed_opt = cfg.make_optimizer(ckpt.model.parameters())
        resumed_opt.load_state_dict(ckpt.optimizer_meta, ckpt.optimizer_arrays)
        train_epoch(ckpt.model, train_set, cfg, resumed_opt, ckpt.next_epoch)

        for name, value in model.parameters().items():
            np.testing.assert_array_equal(ckpt.model.parameters()[name], value)


class TestPredict:
    def test_shapes(self, test_set):
        model = build(MODEL, make_rng(0))
        labels = predict(model, test_set.images, batch_size=1)
        assert labels.shape == (2, 16, 16)
        assert set(np.unique(labels)) <= {0, 1}
        assert predict(model, test_set.images[:0]).shape == (0, 16, 16)

    def test_evaluate(self, test_set):
        report = evaluate_model(build(MODEL, make_rng(0)), test_set)
        assert list(report.per_class.index) == [0, 1]
        assert report.n_samples == 2


@pytest.mark.slow
class TestConvergence:
    def test_overfits_single_sample(self):
        one = generate_dataset(1, 16, 2, TextureSpec.default(), seed=0)
        model = build(MODEL, make_rng(0))
        history = fit(model, one, recipe(epochs=200, batch_size=1, lr_init=3e-3,
                                         augment_flip=False, augment_rotate=False))
        assert history.steps.sum() == 200
        assert history.loss.iloc[-1] < 0.01

    def test_learns_texture_segmentation(self):
        spec = TextureSpec.default()
        train = generate_dataset(200, 64, 2, spec, seed=0)
        test = generate_dataset(50, 64, 2, spec, seed=0, stream=1)
        model = build(ModelConfig(), make_rng(0))
        fit(model, train, TrainConfig(epochs=60), test)
        assert evaluate_model(model, test).mean["miou"] >= 0.85
