"""Tests for BceDice, CE+Dice and the task-loss dispatcher."""

import numpy as np
import pytest

from mew_unet.errors import DataError, ShapeError
from mew_unet.losses import (
    bce_dice_loss,
    binary_logit,
    binary_logit_backward,
    ce_dice_loss,
    segmentation_loss,
)
from mew_unet.tensor import make_rng


class TestBceDice:
    def test_hand_case(self):
        mask = np.array([[1, 0], [0, 1]])
        loss, _ = bce_dice_loss(np.zeros((2, 2)), mask)
        # p = 0.5 everywhere: BCE = ln 2, dice = (2*1 + 1) / (2 + 2 + 1)
        assert loss == pytest.approx(np.log(2.0) + 0.4)

    @pytest.mark.parametrize("fill", [0, 1, None])
    def test_perfect_prediction(self, fill):
        rng = np.random.default_rng(0)
        mask = rng.integers(0, 2, size=(3, 6, 6)) if fill is None else np.full((3, 6, 6), fill)
        logit = np.where(mask == 1, 40.0, -40.0)
        loss, _ = bce_dice_loss(logit, mask)
        assert 0.0 <= loss < 1e-6

    def test_weights(self):
        mask = np.array([[1, 0], [0, 1]])
        bce_only, _ = bce_dice_loss(np.zeros((2, 2)), mask, wb=1.0, wd=0.0)
        dice_only, _ = bce_dice_loss(np.zeros((2, 2)), mask, wb=0.0, wd=2.0)
        assert bce_only == pytest.approx(np.log(2.0))
        assert dice_only == pytest.approx(0.8)

    def test_dice_is_per_sample(self):
        mask = np.zeros((2, 2, 2))
        mask[0] = 1
        logit = np.zeros((2, 2, 2))
        loss, _ = bce_dice_loss(logit, mask, wb=0.0)
        # sample 0: (4 + 1) / (2 + 4 + 1); sample 1: 1 / (2 + 0 + 1)
        expected = np.mean([1 - 5 / 7, 1 - 1 / 3])
        assert loss == pytest.approx(expected)

    @pytest.mark.parametrize("seed", range(5))
    def test_gradient(self, seed, grad_check):
        rng = make_rng(seed)
        logit = rng.normal(size=(2, 4, 5))
        mask = rng.integers(0, 2, size=(2, 4, 5))
        _, grad = bce_dice_loss(logit, mask, wb=0.7, wd=1.3)
        grad_check(lambda: bce_dice_loss(logit, mask, wb=0.7, wd=1.3)[0], logit, grad, rng)

    def test_rejects_non_binary_mask(self):
        with pytest.raises(DataError):
            bce_dice_loss(np.zeros((2, 2)), np.array([[0, 2], [1, 0]]))

    def test_rejects_shape_mismatch(self):
        with pytest.raises(ShapeError):
            bce_dice_loss(np.zeros((2, 2)), np.zeros((2, 3)))


class TestCeDice:
    def test_perfect_prediction(self):
        labels = np.random.default_rng(1).integers(0, 3, size=(2, 5, 5))
        logits = np.where(np.arange(3)[None, :, None, None] == labels[:, None], 40.0, -40.0)
        loss, _ = ce_dice_loss(logits, labels)
        assert 0.0 <= loss < 1e-6

    def test_uniform_logits(self):
        labels = np.array([[0, 1], [2, 2]])
        loss, _ = ce_dice_loss(np.zeros((3, 2, 2)), labels, wd=0.0)
        assert loss == pytest.approx(np.log(3.0))

    @pytest.mark.parametrize("seed", range(5))
    def test_gradient(self, seed, grad_check):
        rng = make_rng(seed)
        logits = rng.normal(size=(2, 3, 4, 4))
        labels = rng.integers(0, 3, size=(2, 4, 4))
        _, grad = ce_dice_loss(logits, labels, wb=0.5, wd=1.5)
        grad_check(lambda: ce_dice_loss(logits, labels, wb=0.5, wd=1.5)[0], logits, grad, rng)

    def test_unbatched(self):
        rng = np.random.default_rng(2)
        logits = rng.normal(size=(3, 4, 4))
        labels = rng.integers(0, 3, size=(4, 4))
        loss, grad = ce_dice_loss(logits, labels)
        batched, bgrad = ce_dice_loss(logits[None], labels[None])
        assert loss == pytest.approx(batched)
        np.testing.assert_allclose(grad, bgrad[0])

    def test_rejects_out_of_range_labels(self):
        with pytest.raises(DataError):
            ce_dice_loss(np.zeros((3, 2, 2)), np.array([[0, 3], [1, 1]]))


class TestDispatch:
    def test_binary_logit(self):
        logits = np.stack([np.full((2, 2), 1.0), np.full((2, 2), 3.0)])
        np.testing.assert_array_equal(binary_logit(logits), 2.0)
        back = binary_logit_backward(np.ones((2, 2)))
        np.testing.assert_array_equal(back[0], -1.0)
        np.testing.assert_array_equal(back[1], 1.0)

    def test_two_classes_use_bce_dice(self):
        rng = np.random.default_rng(3)
        logits = rng.normal(size=(2, 2, 4, 4))
        mask = rng.integers(0, 2, size=(2, 4, 4))
        loss, _ = segmentation_loss(logits, mask)
        expected, _ = bce_dice_loss(logits[:, 1] - logits[:, 0], mask)
        assert loss == pytest.approx(expected)

    def test_three_classes_use_ce_dice(self):
        rng = np.random.default_rng(4)
        logits = rng.normal(size=(2, 3, 4, 4))
        labels = rng.integers(0, 3, size=(2, 4, 4))
        assert segmentation_loss(logits, labels)[0] == pytest.approx(
            ce_dice_loss(logits, labels)[0])

    @pytest.mark.parametrize("seed", range(5))
    def test_binary_gradient_through_logits(self, seed, grad_check):
        rng = make_rng(seed)
        logits = rng.normal(size=(2, 2, 3, 3))
        mask = rng.integers(0, 2, size=(2, 3, 3))
        _, grad = segmentation_loss(logits, mask)
        grad_check(lambda: segmentation_loss(logits, mask)[0], logits, grad, rng)
