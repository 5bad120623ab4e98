"""
ablate: train every branch configuration over several seeds.

Rows (branches enabled, weight mode):

- dw_only:       DW
- dw_hw:         DW + H-W
- dw_hw_cw:      DW + H-W + C-W
- spectral_only: H-W + C-W + C-H
- full:          all four, generated weights
- full_random:   all four, raw learnable weights (no generator)
"""

import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

import pandas as pd

from mew_unet.data import load_dataset
from mew_unet.mew import BRANCH_NAMES, BranchMask
from mew_unet.model import build
from mew_unet.tensor import make_rng
from mew_unet.train import evaluate_model, fit

from ..config_loader import Config
from ..manifest import write_manifest

ABLATION_ROWS: List[Tuple[str, str, str]] = [
    ("dw_only", "dw", "generated"),
    ("dw_hw", "dw,hw", "generated"),
    ("dw_hw_cw", "dw,hw,cw", "generated"),
    ("spectral_only", "hw,cw,ch", "generated"),
    ("full", "dw,hw,cw,ch", "generated"),
    ("full_random", "dw,hw,cw,ch", "raw"),
]
TABLE_FILE = "ablation.csv"
RUNS_FILE = "ablation_runs.csv"
TABLE_NOTE = ("# Synthetic desk-scale ablation. Only the ordering of rows is meaningful; "
              "absolute numbers are not comparable to published benchmarks.\n")


def _run_job(config_data: Dict[str, Any], data_root: str, row: str, mask: str,
             mode: str, seed: int, epochs: Optional[int]) -> Dict[str, Any]:
    overrides = {"model.branch_mask": mask, "model.generator_mode": mode, "train.seed": seed,
                 "train.epochs": epochs}
    config = Config(data=config_data).with_overrides(overrides)
    train_set = load_dataset(Path(data_root) / "train")
    test_set = load_dataset(Path(data_root) / "test")
    train_cfg = config.train_config()
    model = build(config.model_config(), make_rng(seed))
    history = fit(model, train_set, train_cfg)
    mean = evaluate_model(model, test_set, config.eval_batch_size).mean
    return {"row": row, "seed": seed, "miou": mean["miou"], "dsc": mean["dsc"],
            "hd95": mean["hd95"], "final_loss": float(history["loss"].iloc[-1])}


def summarize(runs: pd.DataFrame) -> pd.DataFrame:
    """Mean and sample standard deviation of each metric per row, in row order."""
    order = [name for name, _, _ in ABLATION_ROWS]
    grouped = runs.groupby("row", sort=False)
    table = pd.DataFrame({
        "n_seeds": grouped["seed"].count(),
        "miou_mean": grouped["miou"].mean(),
        "miou_sd": grouped["miou"].std(ddof=1),
        "dsc_mean": grouped["dsc"].mean(),
        "dsc_sd": grouped["dsc"].std(ddof=1),
        "hd95_mean": grouped["hd95"].mean(),
    }).reindex([r for r in order if r in set(runs["row"])])
    for name, mask, mode in ABLATION_ROWS:
        if name in table.index:
            branches = BranchMask.from_string(mask)
            for branch in BRANCH_NAMES:
                table.loc[name, branch] = int(branches.enabled(branch))
            table.loc[name, "random"] = int(mode == "raw")
    cols = list(BRANCH_NAMES) + ["random"]
    table[cols] = table[cols].astype(int)
    table.index.name = "row"
    return table[cols + [c for c in table.columns if c not in cols]]


def directional_checks(runs: pd.DataFrame) -> Dict[str, Any]:
    """Ordering checks on mean mIoU and the per-seed generated vs raw comparison."""
    mean = runs.groupby("row")["miou"].mean()
    checks: Dict[str, Any] = {}
    if {"full", "dw_only"} <= set(mean.index):
        checks["full_ge_dw_only"] = bool(mean["full"] >= mean["dw_only"])
    if {"dw_hw", "dw_only"} <= set(mean.index):
        checks["single_axis_ge_dw_only"] = bool(mean["dw_hw"] >= mean["dw_only"])
    if {"full", "dw_hw"} <= set(mean.index):
        checks["full_ge_single_axis"] = bool(mean["full"] >= mean["dw_hw"])
    by_seed = runs.pivot(index="seed", columns="row", values="miou")
    if {"full", "full_random"} <= set(by_seed.columns):
        wins = int((by_seed["full"] >= by_seed["full_random"]).sum())
        checks["generated_beats_raw_seeds"] = f"{wins}/{len(by_seed)}"
    return checks


def run(config: Config, data_dir: Optional[str] = None, out: Optional[str] = None,
        seeds: Optional[List[int]] = None, parallel: Optional[bool] = None,
        verbose: bool = False) -> Path:
    """
    Run all rows x seeds and write ``ablation.csv`` and ``ablation_runs.csv``.

    Jobs are independent; with ``parallel`` they run in a process pool of
    ``ablation.workers`` processes and results are reassembled in job order.
    """
    started = time.time()
    data_root = str(data_dir or config.data_dir)
    out_dir = Path(out or Path(config.output_dir) / "ablation")
    out_dir.mkdir(parents=True, exist_ok=True)
    seeds = seeds if seeds is not None else config.ablation_seeds
    parallel = config.ablation_parallel if parallel is None else parallel
    epochs = config.ablation_epochs
    jobs = [(config.to_dict(), data_root, name, mask, mode, seed, epochs)
            for name, mask, mode in ABLATION_ROWS for seed in seeds]

    if parallel:
        with ProcessPoolExecutor(max_workers=config.ablation_workers) as pool:
            results = list(pool.map(_run_job, *zip(*jobs)))
    else:
        results = []
        for job in jobs:
            if verbose:
                print(f"Ablation row {job[2]} seed {job[5]}")
            results.append(_run_job(*job))

    runs = pd.DataFrame(results)
    runs.to_csv(out_dir / RUNS_FILE, index=False)
    table = summarize(runs)
    with open(out_dir / TABLE_FILE, "w") as f:
        f.write(TABLE_NOTE)
        table.to_csv(f)
    checks = directional_checks(runs)
    if verbose:
        print(table.to_string())
        print(f"Directional checks: {checks}")

    write_manifest(out_dir, "ablate", config.to_dict(), None, [TABLE_FILE, RUNS_FILE],
                   started, extra={"seeds": list(seeds), "parallel": parallel,
                                   "data_dir": data_root, "checks": checks})
    return out_dir
