"""Tests for confusion counts, rate metrics, HD95 and metric reports."""

import json

import numpy as np
import pandas as pd
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.spatial.distance import cdist

from mew_unet.errors import ShapeError
from mew_unet.metrics import (
    ConfusionCounts,
    confusion,
    evaluate_predictions,
    hd95,
    rates,
)

GT = np.array([[1, 1, 0], [1, 0, 0], [0, 0, 0]])
PRED = np.array([[1, 0, 0], [1, 1, 0], [0, 0, 0]])


def brute_force_hd95(a, b):
    pa = np.argwhere(a)
    pb = np.argwhere(b)
    d = cdist(pa, pb)
    return max(np.percentile(d.min(axis=1), 95), np.percentile(d.min(axis=0), 95))


masks = st.integers(0, 2 ** 30).map(
    lambda s: np.random.default_rng(s).random((9, 11)) < 0.3
)


class TestRates:
    def test_hand_case(self):
        counts = confusion(PRED, GT)
        assert counts == ConfusionCounts(tp=2, fp=1, tn=5, fn=1)
        r = rates(counts)
        assert r.iou == pytest.approx(0.5)
        assert r.dsc == pytest.approx(2 / 3)
        assert r.acc == pytest.approx(7 / 9)
        assert r.sen == pytest.approx(2 / 3)
        assert r.spe == pytest.approx(5 / 6)

    def test_perfect(self):
        r = rates(confusion(GT, GT))
        assert r == (1.0, 1.0, 1.0, 1.0, 1.0)

    def test_inverted(self):
        r = rates(confusion(1 - GT, GT))
        assert r.iou == 0.0 and r.dsc == 0.0 and r.acc == 0.0
        assert r.sen == 0.0 and r.spe == 0.0

    def test_empty_denominators_give_one(self):
        empty = np.zeros((4, 4), dtype=int)
        r = rates(confusion(empty, empty))
        assert r.iou == 1.0 and r.dsc == 1.0 and r.sen == 1.0
        assert rates(ConfusionCounts()).acc == 1.0

    def test_dsc_iou_relation(self):
        rng = np.random.default_rng(0)
        for _ in range(10):
            r = rates(confusion(rng.integers(0, 2, (6, 6)), rng.integers(0, 2, (6, 6))))
            assert r.dsc == pytest.approx(2 * r.iou / (1 + r.iou))

    def test_counts_add(self):
        a = ConfusionCounts(1, 2, 3, 4)
        assert a + a == ConfusionCounts(2, 4, 6, 8)
        assert (a + a).total == 20

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            confusion(np.zeros((2, 2)), np.zeros((2, 3)))


class TestHd95:
    def test_single_points(self):
        a = np.zeros((6, 6), dtype=bool)
        b = np.zeros((6, 6), dtype=bool)
        a[0, 0] = True
        b[3, 4] = True
        assert hd95(a, b) == pytest.approx(5.0)

    def test_identical(self):
        assert hd95(GT, GT) == 0.0

    def test_both_empty(self):
        assert hd95(np.zeros((3, 3)), np.zeros((3, 3))) == 0.0

    def test_one_empty(self):
        assert hd95(GT, np.zeros_like(GT)) == float("inf")
        assert hd95(np.zeros_like(GT), GT) == float("inf")

    @given(masks, masks)
    @settings(max_examples=40, deadline=None)
    def test_matches_brute_force(self, a, b):
        if not a.any() or not b.any():
            return
        assert hd95(a, b) == pytest.approx(brute_force_hd95(a, b))
        assert hd95(a, b) == pytest.approx(hd95(b, a))

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            hd95(np.zeros((2, 2)), np.zeros((3, 2)))


class TestReport:
    def test_dataset_counts_are_summed(self):
        preds = np.stack([PRED, GT])
        gts = np.stack([GT, GT])
        report = evaluate_predictions(preds, gts, n_classes=2)
        row = report.per_class.loc[1]
        assert (row.tp, row.fp, row.fn, row.tn) == (5, 1, 1, 11)
        assert row.iou == pytest.approx(5 / 7)
        assert report.mean["miou"] == pytest.approx(5 / 7)
        assert report.n_samples == 2

    def test_mean_over_foreground(self):
        labels = np.array([[[0, 1, 2], [0, 1, 2], [0, 1, 2]]])
        preds = labels.copy()
        preds[0, 0, 2] = 1
        report = evaluate_predictions(preds, labels, n_classes=3)
        fg = report.per_class.loc[[1, 2], "dsc"]
        assert report.mean["dsc"] == pytest.approx(fg.mean())
        assert report.per_class.loc[0, "dsc"] == 1.0
        assert report.mean["dsc"] < report.per_class["dsc"].mean()
        assert report.mean["miou"] == pytest.approx(report.per_class.loc[[1, 2], "iou"].mean())

    def test_one_sided_empty_is_excluded(self):
        gts = np.zeros((2, 4, 4), dtype=int)
        gts[:, 1:3, 1:3] = 1
        preds = gts.copy()
        preds[1] = 0
        with pytest.warns(UserWarning, match="excluded"):
            report = evaluate_predictions(preds, gts, n_classes=2)
        assert report.per_class.loc[1, "hd95"] == 0.0
        assert report.mean["hd95_excluded"] == 1

    def test_writers(self, tmp_path):
        report = evaluate_predictions(np.stack([PRED]), np.stack([GT]), n_classes=2)
        payload = json.loads(report.write_json(tmp_path / "r.json").read_text())
        assert payload["mean"]["iou"] == pytest.approx(0.5)
        assert payload["per_class"]["1"]["tp"] == 2
        assert payload["conventions"]["mean_over"] == "foreground classes"
        table = pd.read_csv(report.write_csv(tmp_path / "r.csv"), index_col="class")
        assert list(table.index) == ["0", "1", "mean"]
        assert float(table.loc["mean", "iou"]) == pytest.approx(0.5)

    def test_shape_errors(self):
        with pytest.raises(ShapeError):
            evaluate_predictions(np.zeros((2, 3)), np.zeros((2, 3)), n_classes=2)


def brute_force_rates(pred, gt):
    tp = fp = tn = fn = 0
    for p, g in zip(pred.ravel().tolist(), gt.ravel().tolist()):
        if p and g:
            tp += 1
        elif p:
            fp += 1
        elif g:
            fn += 1
        else:
            tn += 1

    def ratio(num, den):
        return 1.0 if den == 0 else num / den

    return (ratio(tp, tp + fp + fn), ratio(2 * tp, 2 * tp + fp + fn),
            ratio(tp + tn, tp + fp + tn + fn), ratio(tp, tp + fn), ratio(tn, tn + fp))


def test_random_pairs_match_oracles():
    rng = np.random.default_rng(2024)
    for _ in range(500):
        h, w = rng.integers(1, 13, size=2)
        density = rng.uniform(0.0, 0.6)
        pred = (rng.random((h, w)) < density).astype(int)
        gt = (rng.random((h, w)) < density).astype(int)
        assert tuple(rates(confusion(pred, gt))) == pytest.approx(brute_force_rates(pred, gt),
                                                                  abs=1e-15)
        if pred.any() and gt.any():
            assert hd95(pred, gt) == pytest.approx(brute_force_hd95(pred, gt), abs=1e-12)
