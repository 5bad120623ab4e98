"""
gen-data: write the synthetic train/test splits.
"""

import time
from pathlib import Path
from typing import Optional

from mew_unet.data import generate_dataset, save_dataset, verify_separability

from ..config_loader import Config
from ..manifest import write_manifest

TRAIN_STREAM = 0
TEST_STREAM = 1


def run(config: Config, out: Optional[str] = None, verbose: bool = False) -> Path:
    """
    Generate ``data.n_train`` / ``data.n_test`` samples under ``out``.

    Returns the dataset root (containing ``train/``, ``test/`` and the
    manifest).
    """
    started = time.time()
    root = Path(out or config.data_dir)
    spec = config.texture_spec()
    single, multi = verify_separability(spec, tol=config.support_tol)
    if verbose:
        print(f"Texture check: single-axis intersections={single}, multi-axis={multi}")

    outputs = []
    for split, n, stream in (("train", config.n_train, TRAIN_STREAM),
                             ("test", config.n_test, TEST_STREAM)):
        if verbose:
            print(f"Generating {n} {split} samples ({config.image_size}x{config.image_size})")
        dataset = generate_dataset(n, config.image_size, config.n_classes, spec,
                                   config.data_seed, stream=stream, verbose=verbose)
        save_dataset(root / split, dataset, metadata={
            "split": split, "seed": config.data_seed, "stream": stream,
            "noise": spec.noise, "image_size": config.image_size,
        })
        outputs += [f"{split}/data.mewt", f"{split}/index.json"]

    write_manifest(root, "gen-data", config.to_dict(), config.data_seed, outputs, started,
                   extra={"separability": {"single_axis": single, "multi_axis": multi}})
    if verbose:
        print(f"Dataset written to {root}")
    return root
