"""
Shared fixtures: tiny model configs, random streams and a finite-difference
gradient checker.
"""

import numpy as np
import pytest

from mew_unet.autodiff import numerical_gradient, relative_error, sample_indices
from mew_unet.model import ModelConfig
from mew_unet.tensor import make_rng

GRAD_TOL = 1e-5


@pytest.fixture
def rng():
    return make_rng(1234)


@pytest.fixture
def tiny_config():
    """Smallest valid network: widths 4 and 8, 8x8 inputs."""
    return ModelConfig(in_channels=2, n_classes=2, base_width=4, stage_depths=[1, 1],
                       image_size=8, ffn_ratio=2, irb_ratio=2, weight_base=4)


@pytest.fixture
def grad_check():
    """
    ``grad_check(f, array, analytic, rng, count=24, h=1e-4)`` compares ``analytic``
    (the claimed dF/darray) with central differences of the scalar ``f()``
    on up to ``count`` random entries of ``array``.
    """

    def check(f, array, analytic, rng, count=24, tol=GRAD_TOL, h=1e-4):
        assert analytic.shape == array.shape
        idx = sample_indices(array.shape, count, rng)
        numeric = numerical_gradient(f, array, h=h, indices=idx)
        a = np.array([analytic[i] for i in idx])
        n = np.array([numeric[i] for i in idx])
        err = relative_error(a, n)
        assert err < tol, f"relative error {err:.3e}"
        return err

    return check
