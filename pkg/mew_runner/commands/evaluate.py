"""
eval: score a checkpoint on the test split.
"""

import time
from pathlib import Path
from typing import Optional

from mew_unet.data import load_dataset
from mew_unet.model import load_checkpoint
from mew_unet.train import evaluate_model

from ..config_loader import Config
from ..manifest import write_manifest


def run(config: Config, checkpoint: str, data_dir: Optional[str] = None,
        out: Optional[str] = None, split: str = "test", verbose: bool = False) -> Path:
    """Write ``report.json`` / ``report.csv`` for ``checkpoint`` on ``split``."""
    started = time.time()
    ckpt = load_checkpoint(checkpoint)
    dataset = load_dataset(Path(data_dir or config.data_dir) / split)
    out_dir = Path(out or Path(config.output_dir) / "eval")

    report = evaluate_model(ckpt.model, dataset, config.eval_batch_size)
    report.write_json(out_dir / "report.json")
    report.write_csv(out_dir / "report.csv")
    if verbose:
        for name, value in report.mean.items():
            print(f"  {name}: {value}")

    write_manifest(out_dir, "eval", config.to_dict(), ckpt.seed,
                   ["report.json", "report.csv"], started,
                   extra={"checkpoint": str(checkpoint), "split": split,
                          "model_config": ckpt.model.config.to_dict(), "mean": report.mean})
    return out_dir
