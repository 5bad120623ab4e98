"""
Dense tensor helpers shared by every other module.

Tensors are plain numpy arrays: float64 for activations, parameters and
gradients, complex128 for spectra. This module adds the checked
constructors, the strict (non-broadcasting) elementwise kernels, channel
split/concat and the deterministic random streams used throughout.

Reductions go through numpy, whose ``sum`` uses pairwise summation in a
fixed order, so results are reproducible for identical inputs.
"""

from dataclasses import fields, is_dataclass
from typing import Any, Dict, List, Sequence

import numpy as np

from .errors import NumericalError, ShapeError

DTYPE = np.float64
CHANNEL_AXIS = -3


def make_rng(seed: int, *stream: int) -> np.random.Generator:
    """
    Create a counter-based random generator.

    Parameters
    ----------
    seed : int
        Base 64-bit seed.
    *stream : int
        Extra integers selecting an independent stream, e.g. ``(epoch,)`` or
        ``(sample_index,)``.

    Returns
    -------
    np.random.Generator
        Generator backed by the Philox bit generator, which produces the
        same stream on every platform for the same seed material.
    """
    if seed < 0:
        raise ValueError(f"Seed must be non-negative, got {seed}")
    seq = np.random.SeedSequence([int(seed), *[int(s) for s in stream]])
    return np.random.Generator(np.random.Philox(seq))


def validate_shape(shape: Sequence[int]) -> tuple:
    """Return ``shape`` as a tuple, rejecting empty shapes and dims < 1."""
    shape = tuple(int(d) for d in shape)
    if len(shape) == 0:
        raise ShapeError("Shape must have at least one dimension")
    if any(d < 1 for d in shape):
        raise ShapeError(f"All dimensions must be >= 1, got {shape}")
    return shape


def full(shape: Sequence[int], value: float) -> np.ndarray:
    """Tensor of ``shape`` filled with ``value``."""
    return np.full(validate_shape(shape), value, dtype=DTYPE)


def zeros(shape: Sequence[int]) -> np.ndarray:
    return full(shape, 0.0)


def ones(shape: Sequence[int]) -> np.ndarray:
    return full(shape, 1.0)


def randn(shape: Sequence[int], rng: np.random.Generator,
          std: float = 1.0, mean: float = 0.0) -> np.ndarray:
    """
    I.i.d. Gaussian tensor.

    Parameters
    ----------
    shape : sequence of int
        Output shape.
    rng : np.random.Generator
        Source of randomness (see ``make_rng``).
    std : float
        Standard deviation, must be positive.
    mean : float
        Mean of the distribution.

    Returns
    -------
    np.ndarray
        float64 tensor of the requested shape.
    """
    if not std > 0:
        raise ValueError(f"std must be > 0, got {std}")
    return rng.normal(loc=mean, scale=std, size=validate_shape(shape)).astype(DTYPE)


def _same_shape(a: np.ndarray, b: np.ndarray, op: str) -> None:
    if a.shape != b.shape:
        raise ShapeError(f"{op}: shape mismatch {a.shape} vs {b.shape}")


def add(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    _same_shape(a, b, "add")
    return a + b


def sub(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    _same_shape(a, b, "sub")
    return a - b


def mul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    _same_shape(a, b, "mul")
    return a * b


def scale(a: np.ndarray, factor: float) -> np.ndarray:
    return a * factor


def split_channels(x: np.ndarray, parts: int) -> List[np.ndarray]:
    """
    Split ``x`` into ``parts`` contiguous blocks along the channel axis.

    Works for ``[C, H, W]`` and batched ``[B, C, H, W]`` tensors; block ``i``
    holds channels ``i*C/parts`` to ``(i+1)*C/parts - 1``.
    """
    if x.ndim < 3:
        raise ShapeError(f"Expected a tensor of rank >= 3, got shape {x.shape}")
    channels = x.shape[CHANNEL_AXIS]
    if parts < 1 or channels % parts != 0:
        raise ShapeError(f"Cannot split {channels} channels into {parts} equal parts")
    return [np.ascontiguousarray(p) for p in np.split(x, parts, axis=CHANNEL_AXIS)]


def concat_channels(parts: Sequence[np.ndarray]) -> np.ndarray:
    """Concatenate tensors along the channel axis, in argument order."""
    if len(parts) == 0:
        raise ShapeError("concat_channels needs at least one part")
    ref = parts[0].shape
    for p in parts[1:]:
        if p.ndim != len(ref) or p.shape[:CHANNEL_AXIS] != ref[:CHANNEL_AXIS] \
                or p.shape[CHANNEL_AXIS + 1:] != ref[CHANNEL_AXIS + 1:]:
            raise ShapeError(f"concat_channels: incompatible shapes {ref} and {p.shape}")
    if len(parts) == 1:
        return parts[0].copy()
    return np.concatenate(parts, axis=CHANNEL_AXIS)


def check_finite(x: np.ndarray, what: str = "tensor") -> np.ndarray:
    """Raise NumericalError if ``x`` contains NaN or Inf; return ``x``."""
    if not np.all(np.isfinite(x)):
        raise NumericalError(f"Non-finite values in {what}")
    return x


def _walk(value: Any, key: str, out: Dict[str, np.ndarray]) -> None:
    if value is None:
        return
    if isinstance(value, np.ndarray):
        out[key] = value
    elif is_dataclass(value) and not isinstance(value, type):
        for f in fields(value):
            _walk(getattr(value, f.name), f"{key}.{f.name}" if key else f.name, out)
    elif isinstance(value, (list, tuple)):
        for i, item in enumerate(value):
            _walk(item, f"{key}.{i}" if key else str(i), out)


def named_arrays(params: Any, prefix: str = "") -> Dict[str, np.ndarray]:
    """
    Flatten a (nested) parameter dataclass into ``{dotted_name: array}``.

    Arrays are returned by reference, so in-place updates through the
    returned dict are visible in ``params``. Non-array fields and ``None``
    are skipped.

    Examples
    --------
    >>> named_arrays(Conv2dParams(kernel=k, bias=b))
    {'kernel': k, 'bias': b}
    """
    out: Dict[str, np.ndarray] = {}
    _walk(params, prefix.rstrip("."), out)
    return out


def prefixed(grads: Dict[str, np.ndarray], prefix: str) -> Dict[str, np.ndarray]:
    """Prepend ``prefix.`` to every key of a gradient dict."""
    return {f"{prefix}.{k}": v for k, v in grads.items()}
