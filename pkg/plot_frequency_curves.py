#!/usr/bin/env python3
"""
Plot the frequency signal strength curves written by `mew-unet analyze-freq`.
"""

import argparse
from pathlib import Path

import matplotlib.pyplot as plt
import pandas as pd


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("run_dir", nargs="?", default="runs/freq",
                        help="analyze-freq output directory")
    parser.add_argument("--output", default="frequency_curves.png")
    parser.add_argument("--max-index", type=int, default=40,
                        help="Only plot the strongest N entries of each curve")
    args = parser.parse_args()

    run_dir = Path(args.run_dir)
    print(f"Loading curves from {run_dir}...")
    curves = pd.read_csv(run_dir / "curves.csv")
    summary = pd.read_csv(run_dir / "freq_summary.csv")

    print("\nIntersection summary:")
    for _, row in summary.iterrows():
        print(f"  regions {row['region_a']}/{row['region_b']} {row['mode']:<6s} "
              f"intersections={row['intersections']}  margin={row['margin']:.3f}")

    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(12, 5))

    for ax, mode, title in ((ax1, "single", "Single-axis (H-W)"),
                            (ax2, "multi", "Multi-axis (H-W, C-W, C-H)")):
        subset = curves[(curves["mode"] == mode) & (curves["index"] < args.max_index)]
        for region, group in subset.groupby("region"):
            ax.plot(group["index"], group["strength"], marker="o", markersize=3,
                    label=f"region {region}")
        ax.set_xlabel("Curve index (sorted by strength)")
        ax.set_ylabel("Signal strength")
        ax.set_title(title)
        ax.set_yscale("symlog", linthresh=1.0)
        ax.grid(True, alpha=0.3, which="both")
        ax.legend()

    plt.tight_layout()
    plt.savefig(args.output, dpi=150, bbox_inches="tight")
    print(f"\nFigure saved to: {args.output}")


if __name__ == "__main__":
    main()
