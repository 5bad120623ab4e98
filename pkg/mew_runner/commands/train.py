"""
train: fit a model on a generated dataset.
"""

import time
from pathlib import Path
from typing import Optional

from mew_unet.data import load_dataset
from mew_unet.model import build
from mew_unet.tensor import make_rng
from mew_unet.train import BEST_CHECKPOINT, LAST_CHECKPOINT, evaluate_model, fit

from ..config_loader import Config
from ..manifest import write_manifest

METRICS_FILE = "metrics.csv"


def run(config: Config, data_dir: Optional[str] = None, out: Optional[str] = None,
        verbose: bool = False) -> Path:
    """
    Train per the ``train`` and ``model`` sections and write the run dir.

    Outputs: ``metrics.csv`` (one row per epoch), ``best.mewt``,
    ``last.mewt``, ``report.json`` / ``report.csv`` for the final model on
    the test split, and ``manifest.json``.
    """
    started = time.time()
    model_cfg = config.model_config()
    train_cfg = config.train_config()
    data_root = Path(data_dir or config.data_dir)
    train_set = load_dataset(data_root / "train")
    test_set = load_dataset(data_root / "test")
    out_dir = Path(out or Path(config.output_dir) / "train")
    out_dir.mkdir(parents=True, exist_ok=True)

    model = build(model_cfg, make_rng(train_cfg.seed))
    if verbose:
        print(f"Model: {model.parameter_count()} parameters, mask "
              f"{model_cfg.branch_mask.to_string()}, weights {model_cfg.generator_mode}")
        print(f"Training on {len(train_set)} samples, testing on {len(test_set)}")

    history = fit(model, train_set, train_cfg, test_set=test_set, out_dir=out_dir,
                  verbose=verbose)
    history.to_csv(out_dir / METRICS_FILE, index=False)

    report = evaluate_model(model, test_set, config.eval_batch_size)
    report.write_json(out_dir / "report.json")
    report.write_csv(out_dir / "report.csv")
    if verbose:
        mean = report.mean
        print(f"Final test mIoU {mean['miou']:.4f}, DSC {mean['dsc']:.4f}, "
              f"HD95 {mean['hd95']:.3f}")

    outputs = [METRICS_FILE, LAST_CHECKPOINT, "report.json", "report.csv"]
    if (out_dir / BEST_CHECKPOINT).exists():
        outputs.append(BEST_CHECKPOINT)
    write_manifest(out_dir, "train", config.to_dict(), train_cfg.seed, outputs, started,
                   extra={"data_dir": str(data_root), "final": report.mean,
                          "parameter_count": model.parameter_count()})
    return out_dir
