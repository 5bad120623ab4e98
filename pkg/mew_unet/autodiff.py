"""
Reverse-mode bookkeeping and the finite-difference oracle.

Every op in this package has a hand-written backward. The ``Tape`` only
stores the forward caches in order so a model can replay them in reverse;
``GradStore`` accumulates per-parameter gradients across backward calls.
"""

from typing import Any, Callable, Dict, Iterable, List, Optional, Tuple

import numpy as np

from .errors import ShapeError, TapeError


class Tape:
    """LIFO record of named forward caches."""

    def __init__(self):
        self._entries: List[Tuple[str, Any]] = []

    def __len__(self) -> int:
        return len(self._entries)

    def record(self, name: str, cache: Any) -> None:
        self._entries.append((name, cache))

    def pop(self, name: str) -> Any:
        """
        Remove and return the most recent cache, which must be ``name``.

        Raises
        ------
        TapeError
            If the tape is empty (backward without forward, or a tape reused
            after ``reset`` or a previous backward) or the order is wrong.
        """
        if not self._entries:
            raise TapeError(f"Tape is empty while looking for {name!r}; "
                            "was it reset or already consumed by a backward pass?")
        found, cache = self._entries.pop()
        if found != name:
            raise TapeError(f"Tape order mismatch: expected {name!r}, found {found!r}")
        return cache

    def reset(self) -> None:
        self._entries.clear()


class GradStore:
    """
    Gradient accumulator with one zero-initialized slot per parameter.

    Parameters
    ----------
    params : dict of str to np.ndarray
        Parameter table (e.g. ``model.parameters()``); only names and shapes
        are used.
    """

    def __init__(self, params: Dict[str, np.ndarray]):
        self.grads = {name: np.zeros_like(value) for name, value in params.items()}
        self.count = 0

    def accumulate(self, grads: Dict[str, np.ndarray]) -> None:
        for name, g in grads.items():
            if name not in self.grads:
                raise KeyError(f"No parameter named {name!r}")
            if g.shape != self.grads[name].shape:
                raise ShapeError(
                    f"Gradient for {name!r} has shape {g.shape}, expected {self.grads[name].shape}"
                )
            self.grads[name] += g
        self.count += 1

    def zero(self) -> None:
        for g in self.grads.values():
            g.fill(0.0)
        self.count = 0

    def __getitem__(self, name: str) -> np.ndarray:
        return self.grads[name]

    def items(self):
        return self.grads.items()

    def dead_parameters(self) -> List[str]:
        """Names whose gradient is exactly zero everywhere."""
        return [name for name, g in self.grads.items() if not np.any(g != 0)]


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """``max|a - n| / max(1e-8, max|a|, max|n|)``."""
    analytic = np.asarray(analytic)
    numeric = np.asarray(numeric)
    scale = max(1e-8, float(np.max(np.abs(analytic), initial=0.0)),
                float(np.max(np.abs(numeric), initial=0.0)))
    return float(np.max(np.abs(analytic - numeric), initial=0.0)) / scale


def sample_indices(shape: Tuple[int, ...], count: int,
                   rng: np.random.Generator) -> List[Tuple[int, ...]]:
    """Up to ``count`` distinct multi-indices of an array of ``shape``."""
    size = int(np.prod(shape))
    flat = rng.choice(size, size=min(count, size), replace=False)
    return [tuple(int(i) for i in np.unravel_index(f, shape)) for f in np.sort(flat)]


def numerical_gradient(f: Callable[[], float], x: np.ndarray, h: float = 1e-5,
                       indices: Optional[Iterable[Tuple[int, ...]]] = None) -> np.ndarray:
    """
    Central finite differences of the scalar ``f()`` with respect to ``x``.

    ``x`` is perturbed in place (and restored), so ``f`` should close over
    it. When ``indices`` is given only those entries are estimated; the
    rest of the result is zero.
    """
    grad = np.zeros_like(x, dtype=np.float64)
    if indices is None:
        indices = np.ndindex(*x.shape)
    for idx in indices:
        original = x[idx]
        x[idx] = original + h
        plus = f()
        x[idx] = original - h
        minus = f()
        x[idx] = original
        grad[idx] = (plus - minus) / (2.0 * h)
    return grad
