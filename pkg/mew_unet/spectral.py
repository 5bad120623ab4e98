"""
Real-input 2D discrete Fourier transforms along any axis pair of a
``[C, H, W]`` tensor (or a batch of them), with explicit adjoints.

Conventions
-----------
- The forward transform is unnormalized; the inverse carries ``1/(n1*n2)``.
- Only the non-redundant half of the spectrum is stored: the second axis of
  the pair keeps ``n2 // 2 + 1`` bins.
- Axis indices always refer to the last three dimensions, so a leading
  batch dimension is carried through untouched.

The 1-D transform is a mixed-radix decimation-in-time FFT: the length is
split by its smallest prime factor at each level, and a prime length falls
through to the direct sum. ``naive_dft2`` is the O(N^2) oracle used in
tests.
"""

from dataclasses import dataclass
from functools import lru_cache
from math import isqrt
from typing import Tuple

import numpy as np

from .errors import ShapeError


@dataclass(frozen=True)
class AxisPair:
    """Two distinct axes of a ``[C, H, W]`` tensor; DFT runs over both."""

    first: int
    second: int

    def __post_init__(self):
        if self.first == self.second or {self.first, self.second} - {0, 1, 2}:
            raise ShapeError(f"Invalid axis pair ({self.first}, {self.second})")

    @property
    def untransformed(self) -> int:
        return ({0, 1, 2} - {self.first, self.second}).pop()

    @property
    def name(self) -> str:
        labels = "chw"
        return labels[self.first] + labels[self.second]

    def resolve(self, ndim: int) -> Tuple[int, int]:
        """Absolute axis indices for a tensor of rank ``ndim`` (>= 3)."""
        if ndim < 3:
            raise ShapeError(f"Spectral ops need rank >= 3 tensors, got rank {ndim}")
        return ndim - 3 + self.first, ndim - 3 + self.second


HW = AxisPair(1, 2)
CW = AxisPair(0, 2)
CH = AxisPair(0, 1)
MEW_AXES = (HW, CW, CH)


@dataclass(frozen=True)
class SpectrumLayout:
    """Shape bookkeeping for the half-spectrum of one axis pair."""

    axes: AxisPair
    full_dims: Tuple[int, int]
    untransformed_extent: int

    @classmethod
    def for_shape(cls, shape: Tuple[int, ...], axes: AxisPair) -> "SpectrumLayout":
        chw = tuple(shape[-3:])
        if len(chw) != 3:
            raise ShapeError(f"Expected a [C, H, W] shape, got {shape}")
        return cls(axes, (chw[axes.first], chw[axes.second]), chw[axes.untransformed])

    @property
    def stored_dims(self) -> Tuple[int, int]:
        n1, n2 = self.full_dims
        return n1, n2 // 2 + 1

    @property
    def shape(self) -> Tuple[int, int, int]:
        """Spectrum shape in ``[C, H, W]`` axis positions."""
        dims = [0, 0, 0]
        dims[self.axes.first], dims[self.axes.second] = self.stored_dims
        dims[self.axes.untransformed] = self.untransformed_extent
        return tuple(dims)


@lru_cache(maxsize=None)
def _smallest_factor(n: int) -> int:
    for p in range(2, isqrt(n) + 1):
        if n % p == 0:
            return p
    return n


@lru_cache(maxsize=None)
def _twiddles(n: int, p: int, sign: int) -> np.ndarray:
    r = np.arange(p)[:, None]
    k = np.arange(n)[None, :]
    tw = np.exp(sign * 2j * np.pi * ((r * k) % n) / n)
    tw.setflags(write=False)
    return tw


def _fft_last(x: np.ndarray, sign: int) -> np.ndarray:
    n = x.shape[-1]
    if n == 1:
        return x.copy()
    p = _smallest_factor(n)
    m = n // p
    # element j*p + r goes to sub-sequence r at position j
    sub = x.reshape(*x.shape[:-1], m, p).swapaxes(-1, -2)
    sub = _fft_last(sub, sign)
    # X[k] = sum_r w^(r k) * Sub_r[k mod m]
    return (_twiddles(n, p, sign) * np.tile(sub, p)).sum(axis=-2)


def fft(x: np.ndarray, axis: int = -1, inverse: bool = False) -> np.ndarray:
    """
    Unnormalized complex DFT along one axis.

    ``inverse=True`` flips the sign of the exponent but does not divide by
    the length; callers apply normalization.
    """
    x = np.asarray(x, dtype=np.complex128)
    moved = np.moveaxis(x, axis, -1)
    out = _fft_last(moved, 1 if inverse else -1)
    return np.moveaxis(out, -1, axis)


def naive_dft(x: np.ndarray, axis: int = -1, inverse: bool = False) -> np.ndarray:
    """Direct O(N^2) DFT along one axis (test oracle)."""
    x = np.asarray(x, dtype=np.complex128)
    n = x.shape[axis]
    sign = 1 if inverse else -1
    k = np.arange(n)
    matrix = np.exp(sign * 2j * np.pi * np.outer(k, k) / n)
    moved = np.moveaxis(x, axis, -1)
    return np.moveaxis(moved @ matrix.T, -1, axis)


def naive_dft2(x: np.ndarray, axes: AxisPair = HW) -> np.ndarray:
    """Full (not half) unnormalized 2D DFT by direct summation."""
    a, b = axes.resolve(np.ndim(x))
    return naive_dft(naive_dft(x, axis=b), axis=a)


def hermitian_weights(n2: int) -> np.ndarray:
    """
    Multiplicity of each stored column of a half-spectrum of length ``n2``.

    The DC column (and the Nyquist column for even ``n2``) appears once in
    the full spectrum; every other stored column stands for itself and its
    mirrored conjugate.
    """
    w = np.full(n2 // 2 + 1, 2.0)
    w[0] = 1.0
    if n2 % 2 == 0:
        w[-1] = 1.0
    return w


def rdft2(x: np.ndarray, axes: AxisPair = HW) -> np.ndarray:
    """
    Forward real-input 2D DFT over ``axes``, keeping the half-spectrum.

    Parameters
    ----------
    x : np.ndarray
        Real tensor ``[..., C, H, W]``.
    axes : AxisPair
        Transformed axes; the half-spectrum is taken along ``axes.second``.

    Returns
    -------
    np.ndarray
        complex128 tensor with ``axes.second`` shrunk to ``n2 // 2 + 1``.
    """
    if np.iscomplexobj(x):
        raise TypeError("rdft2 expects a real tensor")
    a, b = axes.resolve(np.ndim(x))
    moved = np.moveaxis(np.asarray(x, dtype=np.float64), (a, b), (-2, -1))
    half = moved.shape[-1] // 2 + 1
    spec = fft(moved, axis=-1)[..., :half]
    spec = fft(spec, axis=-2)
    return np.moveaxis(spec, (-2, -1), (a, b))


def irdft2(s: np.ndarray, axes: AxisPair, original_dims: Tuple[int, int]) -> np.ndarray:
    """
    Inverse of ``rdft2``.

    Parameters
    ----------
    s : np.ndarray
        Half-spectrum as produced by ``rdft2``.
    axes : AxisPair
        Axis pair the spectrum was taken over.
    original_dims : (int, int)
        Extents ``(n1, n2)`` of the transformed axes before the forward
        transform; ``n2`` disambiguates even and odd lengths.

    Returns
    -------
    np.ndarray
        Real tensor with the original extents, normalized by ``1/(n1*n2)``.
    """
    n1, n2 = (int(d) for d in original_dims)
    a, b = axes.resolve(np.ndim(s))
    moved = np.moveaxis(np.asarray(s, dtype=np.complex128), (a, b), (-2, -1))
    if moved.shape[-2] != n1 or moved.shape[-1] != n2 // 2 + 1:
        raise ShapeError(
            f"Spectrum dims {moved.shape[-2:]} inconsistent with original dims ({n1}, {n2})"
        )
    half = n2 // 2 + 1
    t = fft(moved, axis=-2, inverse=True)
    full = np.empty(t.shape[:-1] + (n2,), dtype=np.complex128)
    full[..., :half] = t
    # mirrored columns are conjugates of stored interior columns
    full[..., half:] = np.conj(t[..., 1:n2 - half + 1][..., ::-1])
    out = fft(full, axis=-1, inverse=True).real / (n1 * n2)
    return np.moveaxis(out, (-2, -1), (a, b))


def rdft2_backward(grad: np.ndarray, axes: AxisPair, original_dims: Tuple[int, int]) -> np.ndarray:
    """
    Adjoint of ``rdft2``.

    ``grad`` holds dL/dRe + i dL/dIm for every stored bin. The result is the
    real part of the unnormalized inverse DFT of ``grad`` zero-padded to the
    full spectrum.
    """
    n1, n2 = (int(d) for d in original_dims)
    a, b = axes.resolve(np.ndim(grad))
    moved = np.moveaxis(np.asarray(grad, dtype=np.complex128), (a, b), (-2, -1))
    padded = np.zeros(moved.shape[:-1] + (n2,), dtype=np.complex128)
    padded[..., :moved.shape[-1]] = moved
    out = fft(fft(padded, axis=-1, inverse=True), axis=-2, inverse=True).real
    if out.shape[-2] != n1:
        raise ShapeError(f"Gradient dims {moved.shape[-2:]} inconsistent with ({n1}, {n2})")
    return np.moveaxis(out, (-2, -1), (a, b))


def irdft2_backward(grad: np.ndarray, axes: AxisPair) -> np.ndarray:
    """
    Adjoint of ``irdft2`` with respect to the (complex) half-spectrum.

    Each stored bin receives ``hermitian_weight / (n1*n2)`` times the forward
    transform of the real upstream gradient.
    """
    a, b = axes.resolve(np.ndim(grad))
    n1, n2 = grad.shape[a], grad.shape[b]
    spec = rdft2(grad, axes)
    shape = [1] * spec.ndim
    shape[b] = n2 // 2 + 1
    return spec * hermitian_weights(n2).reshape(shape) / (n1 * n2)


def spectral_mul(s: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Pointwise complex product of two spectra of identical shape."""
    if s.shape != w.shape:
        raise ShapeError(f"spectral_mul: shape mismatch {s.shape} vs {w.shape}")
    return s * w


def spectral_mul_backward(grad: np.ndarray, s: np.ndarray,
                          w: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Gradients of ``s * w`` with real and imaginary parts as independent reals."""
    return grad * np.conj(w), grad * np.conj(s)


def signal_strength_curve(patch: np.ndarray, mode: str = "single") -> np.ndarray:
    """
    Sorted frequency signal strength of a ``[C, H, W]`` patch.

    ``single`` averages ``|rdft2(patch, HW)|`` over channels. ``multi`` joins
    the H-W, C-W and C-H magnitude spectra, each averaged over its
    untransformed axis, before sorting. The value at position ``i`` of the
    returned array is the strength at curve index ``i`` (descending).
    """
    patch = np.asarray(patch, dtype=np.float64)
    if patch.ndim != 3:
        raise ShapeError(f"Expected a [C, H, W] patch, got shape {patch.shape}")
    if mode == "single":
        mags = np.abs(rdft2(patch, HW)).mean(axis=0).ravel()
    elif mode == "multi":
        mags = np.concatenate([
            np.abs(rdft2(patch, axes)).mean(axis=axes.untransformed).ravel()
            for axes in MEW_AXES
        ])
    else:
        raise ValueError(f"Unknown curve mode {mode!r}; expected 'single' or 'multi'")
    return np.sort(mags)[::-1]


def _aligned(a: np.ndarray, b: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    n = max(len(a), len(b))
    return np.pad(a, (0, n - len(a))), np.pad(b, (0, n - len(b)))


def curve_intersections(a: np.ndarray, b: np.ndarray, tol: float = 1e-6) -> int:
    """
    Count points where two strength curves cross or touch.

    Only indices where either curve exceeds ``tol`` (the support) are
    considered. A touch is an index with ``|a - b| <= tol``; a crossing is a
    sign change of ``a - b`` between consecutive supported indices.
    Shorter curves are zero-padded.
    """
    a, b = _aligned(np.asarray(a, float), np.asarray(b, float))
    d = (a - b)[np.maximum(a, b) > tol]
    sign = np.where(np.abs(d) <= tol, 0.0, np.sign(d))
    touches = int(np.count_nonzero(sign == 0))
    strict = sign[sign != 0]
    crossings = int(np.count_nonzero(strict[1:] != strict[:-1]))
    return touches + crossings


def curve_margin(a: np.ndarray, b: np.ndarray, tol: float = 1e-6) -> float:
    """Smallest ``|a - b|`` on the support, or 0.0 if the curves intersect."""
    if curve_intersections(a, b, tol) > 0:
        return 0.0
    a, b = _aligned(np.asarray(a, float), np.asarray(b, float))
    d = (a - b)[np.maximum(a, b) > tol]
    return float(np.abs(d).min()) if d.size else 0.0
