"""
analyze-freq: frequency signal strength curves of labelled patches.

For each region label a fully-labelled patch is located (or given
explicitly), its single-axis and multi-axis strength curves are written to
``curves.csv`` and every pair of regions is compared in
``freq_summary.csv``.
"""

import time
import warnings
from itertools import combinations
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np
import pandas as pd

from mew_unet.data import extract_patch, find_patch, load_dataset
from mew_unet.errors import DataError
from mew_unet.spectral import curve_intersections, curve_margin, signal_strength_curve

from ..config_loader import Config
from ..manifest import write_manifest

CURVES_FILE = "curves.csv"
SUMMARY_FILE = "freq_summary.csv"
MODES = ("single", "multi")


def locate_patches(masks: np.ndarray, n_classes: int, size: int,
                   max_samples: int) -> Dict[int, Tuple[int, int, int]]:
    """First ``(sample, top, left)`` with a fully-labelled window, per label."""
    found: Dict[int, Tuple[int, int, int]] = {}
    for label in range(n_classes):
        for i in range(min(max_samples, len(masks))):
            corner = find_patch(masks[i], label, size)
            if corner is not None:
                found[label] = (i, *corner)
                break
        else:
            warnings.warn(f"No fully-labelled {size}x{size} patch for region {label}")
    return found


def explicit_patches(masks: np.ndarray, sample: int, corners: List[Tuple[int, int]],
                     size: int) -> Dict[int, Tuple[int, int, int]]:
    """Label each given corner of ``sample`` by its (uniform) mask value."""
    if not 0 <= sample < len(masks):
        raise DataError(f"Sample index {sample} out of range for {len(masks)} samples")
    found = {}
    h, w = masks.shape[1:]
    for top, left in corners:
        if top < 0 or left < 0 or top + size > h or left + size > w:
            raise DataError(f"Patch at ({top}, {left}) of size {size} exceeds image {h}x{w}")
        window = masks[sample, top:top + size, left:left + size]
        labels = np.unique(window)
        if labels.size != 1:
            raise DataError(f"Patch at ({top}, {left}) covers several labels {labels.tolist()}")
        found[int(labels[0])] = (sample, top, left)
    return found


def run(config: Config, data_dir: Optional[str] = None, out: Optional[str] = None,
        split: str = "test", sample: int = 0,
        patches: Optional[List[Tuple[int, int]]] = None, verbose: bool = False) -> Path:
    """Write ``curves.csv`` and ``freq_summary.csv`` for one dataset split."""
    started = time.time()
    dataset = load_dataset(Path(data_dir or config.data_dir) / split)
    out_dir = Path(out or Path(config.output_dir) / "freq")
    out_dir.mkdir(parents=True, exist_ok=True)
    size = config.patch_size
    tol = config.support_tol

    if patches:
        located = explicit_patches(dataset.masks, sample, patches, size)
    else:
        located = locate_patches(dataset.masks, dataset.n_classes, size,
                                 config.analysis_max_samples)
    if len(located) < 2:
        raise DataError("Need patches from at least two regions to compare curves")

    curves: Dict[Tuple[int, str], np.ndarray] = {}
    rows = []
    for label, (i, top, left) in sorted(located.items()):
        patch = extract_patch(dataset.images[i], top, left, size)
        for mode in MODES:
            curve = signal_strength_curve(patch, mode)
            curves[label, mode] = curve
            rows += [{"region": label, "mode": mode, "index": k, "strength": float(v)}
                     for k, v in enumerate(curve)]
    pd.DataFrame(rows, columns=["region", "mode", "index", "strength"]).to_csv(
        out_dir / CURVES_FILE, index=False)

    summary = []
    for a, b in combinations(sorted(located), 2):
        for mode in MODES:
            summary.append({
                "region_a": a, "region_b": b, "mode": mode,
                "intersections": curve_intersections(curves[a, mode], curves[b, mode], tol),
                "margin": curve_margin(curves[a, mode], curves[b, mode], tol),
            })
    summary = pd.DataFrame(summary)
    summary.to_csv(out_dir / SUMMARY_FILE, index=False)
    if verbose:
        print(summary.to_string(index=False))

    write_manifest(out_dir, "analyze-freq", config.to_dict(), None, [CURVES_FILE, SUMMARY_FILE],
                   started, extra={"split": split, "support_tol": tol, "patch_size": size,
                                   "patches": {str(k): list(v) for k, v in located.items()}})
    return out_dir
