"""
Run manifests: a JSON record of what a command did and how to redo it.
"""

import hashlib
import json
import platform
import time
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

import numpy as np

import mew_unet

MANIFEST_FILE = "manifest.json"
_PACKAGES = ("mew_unet", "mew_runner")


def code_hash() -> str:
    """sha256 over the source files of both packages, in sorted path order."""
    root = Path(mew_unet.__file__).parent.parent
    digest = hashlib.sha256()
    for package in _PACKAGES:
        for path in sorted((root / package).rglob("*.py")):
            digest.update(str(path.relative_to(root)).encode("utf-8"))
            digest.update(path.read_bytes())
    return digest.hexdigest()


def write_manifest(out_dir: Union[str, Path], command: str, config: Dict[str, Any],
                   seed: Optional[int], outputs: List[str], started: float,
                   extra: Optional[Dict[str, Any]] = None) -> Path:
    """
    Write ``manifest.json`` into ``out_dir``.

    Parameters
    ----------
    out_dir : path
        Run directory.
    command : str
        Subcommand name.
    config : dict
        Fully resolved configuration (after CLI overrides).
    seed : int, optional
        Seed that drove the run.
    outputs : list of str
        Files written by the run, relative to ``out_dir``.
    started : float
        ``time.time()`` at the start of the run; wall time is derived from it.
    extra : dict, optional
        Command-specific fields.

    Returns
    -------
    Path
        Path of the manifest file.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = {
        "command": command,
        "config": config,
        "seed": seed,
        "outputs": sorted(outputs),
        "code_version": mew_unet.__version__,
        "code_hash": code_hash(),
        "python": platform.python_version(),
        "numpy": np.__version__,
        "wall_time_seconds": round(time.time() - started, 3),
        **(extra or {}),
    }
    path = out_dir / MANIFEST_FILE
    with open(path, "w") as f:
        json.dump(manifest, f, indent=2, sort_keys=True, default=str)
    return path
