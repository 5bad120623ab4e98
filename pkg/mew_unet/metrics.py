"""
Segmentation metrics: confusion counts, rate metrics and HD95.

Conventions
-----------
- A ratio whose denominator is zero evaluates to 1 (e.g. IoU and DSC are 1
  when both prediction and ground truth are empty for a class).
- HD95 is computed on full foreground point sets in pixel units, with the
  95th percentile taken by linear interpolation between order statistics.
  Both sets empty gives 0; exactly one empty gives ``inf``, which is left
  out of means and counted separately.
- Dataset-level rates come from confusion counts summed over all samples;
  mean metrics average over the foreground classes ``1..K-1``.
"""

import json
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, NamedTuple, Union

import numpy as np
import pandas as pd
from scipy.ndimage import distance_transform_edt

from .errors import ShapeError

RATE_NAMES = ("iou", "dsc", "acc", "sen", "spe")


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int = 0
    fp: int = 0
    tn: int = 0
    fn: int = 0

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn

    def __add__(self, other: "ConfusionCounts") -> "ConfusionCounts":
        return ConfusionCounts(self.tp + other.tp, self.fp + other.fp,
                               self.tn + other.tn, self.fn + other.fn)


class Rates(NamedTuple):
    iou: float
    dsc: float
    acc: float
    sen: float
    spe: float


def confusion(pred: np.ndarray, gt: np.ndarray, cls: int = 1) -> ConfusionCounts:
    """One-vs-rest pixel counts for class ``cls``."""
    if pred.shape != gt.shape:
        raise ShapeError(f"Prediction shape {pred.shape} does not match ground truth {gt.shape}")
    p = pred == cls
    g = gt == cls
    return ConfusionCounts(
        tp=int(np.count_nonzero(p & g)),
        fp=int(np.count_nonzero(p & ~g)),
        tn=int(np.count_nonzero(~p & ~g)),
        fn=int(np.count_nonzero(~p & g)),
    )


def _ratio(num: int, den: int) -> float:
    return 1.0 if den == 0 else num / den


def rates(counts: ConfusionCounts) -> Rates:
    c = counts
    return Rates(
        iou=_ratio(c.tp, c.tp + c.fp + c.fn),
        dsc=_ratio(2 * c.tp, 2 * c.tp + c.fp + c.fn),
        acc=_ratio(c.tp + c.tn, c.total),
        sen=_ratio(c.tp, c.tp + c.fn),
        spe=_ratio(c.tn, c.tn + c.fp),
    )


def _directed_p95(src: np.ndarray, dst: np.ndarray) -> float:
    # distance from every pixel to the nearest dst pixel
    dist = distance_transform_edt(~dst)
    return float(np.percentile(dist[src], 95))


def hd95(pred: np.ndarray, gt: np.ndarray) -> float:
    """
    Symmetric 95th-percentile Hausdorff distance between two binary masks.

    Returns 0.0 when both masks are empty and ``inf`` when exactly one is.
    """
    if pred.shape != gt.shape:
        raise ShapeError(f"Mask shapes differ: {pred.shape} vs {gt.shape}")
    a = np.asarray(pred, dtype=bool)
    b = np.asarray(gt, dtype=bool)
    has_a, has_b = a.any(), b.any()
    if not has_a and not has_b:
        return 0.0
    if not has_a or not has_b:
        return float("inf")
    return max(_directed_p95(a, b), _directed_p95(b, a))


@dataclass
class MetricReport:
    """
    Per-class metrics of a prediction set.

    ``per_class`` is indexed by class label with columns ``iou, dsc, acc,
    sen, spe, hd95, hd95_excluded`` plus the summed confusion counts.
    """

    per_class: pd.DataFrame
    n_samples: int

    @property
    def foreground(self) -> pd.DataFrame:
        return self.per_class[self.per_class.index > 0]

    @property
    def mean(self) -> Dict[str, float]:
        fg = self.foreground
        out = {name: float(fg[name].mean()) for name in RATE_NAMES}
        out["miou"] = out["iou"]
        out["hd95"] = float(fg["hd95"].mean())
        out["hd95_excluded"] = int(fg["hd95_excluded"].sum())
        return out

    def to_dict(self) -> Dict:
        return {
            "n_samples": self.n_samples,
            "mean": self.mean,
            "per_class": {
                str(label): {k: (v.item() if hasattr(v, "item") else v) for k, v in row.items()}
                for label, row in self.per_class.to_dict(orient="index").items()
            },
            "conventions": {
                "empty_denominator": 1.0,
                "hd95": "full foreground point sets, linear-interpolated 95th percentile, pixels",
                "hd95_one_empty": "inf, excluded from means and counted in hd95_excluded",
                "mean_over": "foreground classes",
            },
        }

    def write_json(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(self.to_dict(), indent=2, allow_nan=True))
        return path

    def write_csv(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        mean = {k: v for k, v in self.mean.items() if k in self.per_class.columns}
        mean_row = pd.DataFrame([mean], index=["mean"])
        table = pd.concat([self.per_class, mean_row])
        table.to_csv(path, index_label="class")
        return path


def evaluate_predictions(preds: np.ndarray, gts: np.ndarray, n_classes: int) -> MetricReport:
    """
    Score integer label maps ``[N, H, W]`` against ground truth.

    Rates use confusion counts summed over the dataset; HD95 is averaged
    over samples with a finite distance.
    """
    preds = np.asarray(preds)
    gts = np.asarray(gts)
    if preds.shape != gts.shape or preds.ndim != 3:
        raise ShapeError(f"Expected matching [N, H, W] label maps, got {preds.shape}, {gts.shape}")

    rows = {}
    for cls in range(n_classes):
        total = ConfusionCounts()
        distances = []
        for pred, gt in zip(preds, gts):
            total = total + confusion(pred, gt, cls)
            distances.append(hd95(pred == cls, gt == cls))
        distances = np.asarray(distances, dtype=np.float64)
        finite = distances[np.isfinite(distances)]
        excluded = int(distances.size - finite.size)
        if excluded:
            warnings.warn(f"HD95 undefined for {excluded} sample(s) of class {cls}; "
                          "excluded from the mean")
        rows[cls] = {
            **rates(total)._asdict(),
            "hd95": float(finite.mean()) if finite.size else float("nan"),
            "hd95_excluded": excluded,
            "tp": total.tp, "fp": total.fp, "tn": total.tn, "fn": total.fn,
        }
    per_class = pd.DataFrame.from_dict(rows, orient="index")
    per_class.index.name = "class"
    return MetricReport(per_class=per_class, n_samples=int(preds.shape[0]))
