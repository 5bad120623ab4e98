"""
One module per CLI subcommand; each exposes ``run(config, ...)``.
"""

from . import ablate, analyze_freq, evaluate, gen_data, train

__all__ = ["ablate", "analyze_freq", "evaluate", "gen_data", "train"]
