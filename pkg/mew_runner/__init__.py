"""
MEW-UNet Runner

Command-line surface for the mew_unet library.

This package provides:
- YAML configuration loading with dot-notation access and CLI overrides
- Subcommands: gen-data, train, eval, ablate, analyze-freq
- Run manifests recording the resolved config, seed and code hash
"""

__version__ = "0.1.0"

__all__ = []
