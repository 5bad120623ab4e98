"""
Non-spectral building blocks: convolutions, GroupNorm, activations, the
feed-forward sublayer, bilinear resizing and the inverted residual block.

Every op accepts a single ``[C, H, W]`` tensor or a batch ``[B, C, H, W]``
and returns a tensor of the same rank. Primitive ops come as
``op(...)`` / ``op_backward(grad, ...)`` pairs. Composite ops expose
``op_forward`` returning ``(out, cache)`` and ``op_backward(grad, params,
cache)`` returning ``(grad_x, grads)`` where ``grads`` is keyed like
``named_arrays(params)``.
"""

from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Dict, Optional, Tuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.special import ndtr

from .errors import ConfigError, ShapeError
from .tensor import ones, prefixed, randn, zeros

Grads = Dict[str, np.ndarray]

_INV_SQRT_2PI = 1.0 / np.sqrt(2.0 * np.pi)


def _batched(x: np.ndarray) -> Tuple[np.ndarray, bool]:
    if x.ndim == 3:
        return x[None], True
    if x.ndim == 4:
        return x, False
    raise ShapeError(f"Expected [C, H, W] or [B, C, H, W], got shape {x.shape}")


def _unbatch(x: np.ndarray, squeeze: bool) -> np.ndarray:
    return x[0] if squeeze else x


# ---------------------------------------------------------------------------
# activations
# ---------------------------------------------------------------------------

def gelu(x: np.ndarray) -> np.ndarray:
    """Exact GELU, ``x * Phi(x)``."""
    return x * ndtr(x)


def gelu_backward(grad: np.ndarray, x: np.ndarray) -> np.ndarray:
    pdf = _INV_SQRT_2PI * np.exp(-0.5 * x * x)
    return grad * (ndtr(x) + x * pdf)


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


def relu_backward(grad: np.ndarray, x: np.ndarray) -> np.ndarray:
    return grad * (x > 0)


@dataclass(frozen=True)
class Activation:
    name: str
    forward: Callable[[np.ndarray], np.ndarray]
    backward: Callable[[np.ndarray, np.ndarray], np.ndarray]


ACTIVATIONS: Dict[str, Activation] = {
    "gelu": Activation("gelu", gelu, gelu_backward),
    "relu": Activation("relu", relu, relu_backward),
    # linear-path hook for tests
    "identity": Activation("identity", lambda x: x, lambda grad, x: grad),
}


def get_activation(name: str) -> Activation:
    try:
        return ACTIVATIONS[name]
    except KeyError:
        raise ConfigError(
            f"Unknown activation {name!r}; expected one of {sorted(ACTIVATIONS)}"
        ) from None


# ---------------------------------------------------------------------------
# convolution
# ---------------------------------------------------------------------------

@dataclass
class Conv2dParams:
    """Dense 2D convolution; ``bias`` may be None."""

    kernel: np.ndarray
    bias: Optional[np.ndarray] = None
    stride: int = 1
    padding: int = 0

    @property
    def out_channels(self) -> int:
        return self.kernel.shape[0]

    @property
    def in_channels(self) -> int:
        return self.kernel.shape[1]


def init_conv2d(in_channels: int, out_channels: int, kernel_size: int,
                rng: np.random.Generator, stride: int = 1,
                padding: Optional[int] = None, bias: bool = True,
                std: Optional[float] = None) -> Conv2dParams:
    """
    Gaussian-initialized convolution.

    ``padding`` defaults to ``(kernel_size - 1) // 2`` and ``std`` to
    ``1 / sqrt(fan_in)``. Biases start at zero.
    """
    if kernel_size % 2 == 0:
        raise ConfigError(f"Kernel size must be odd, got {kernel_size}")
    fan_in = in_channels * kernel_size * kernel_size
    kernel = randn((out_channels, in_channels, kernel_size, kernel_size), rng,
                   std=std if std is not None else 1.0 / np.sqrt(fan_in))
    return Conv2dParams(
        kernel=kernel,
        bias=zeros((out_channels,)) if bias else None,
        stride=stride,
        padding=(kernel_size - 1) // 2 if padding is None else padding,
    )


def _pad_hw(x: np.ndarray, padding: int) -> np.ndarray:
    if padding == 0:
        return x
    return np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))


def _conv_windows(xb: np.ndarray, params: Conv2dParams) -> np.ndarray:
    kh, kw = params.kernel.shape[2:]
    s = params.stride
    xp = _pad_hw(xb, params.padding)
    if xp.shape[2] < kh or xp.shape[3] < kw:
        raise ShapeError(f"Input {xb.shape[2:]} too small for a {kh}x{kw} kernel")
    # [B, Cin, Ho, Wo, kh, kw]
    return sliding_window_view(xp, (kh, kw), axis=(2, 3))[:, :, ::s, ::s]


def conv2d(x: np.ndarray, params: Conv2dParams) -> np.ndarray:
    """
    Cross-correlation with symmetric zero padding.

    Parameters
    ----------
    x : np.ndarray
        Input ``[Cin, H, W]`` or ``[B, Cin, H, W]``.
    params : Conv2dParams
        Kernel ``[Cout, Cin, kh, kw]``, optional bias ``[Cout]``, stride and
        padding.

    Returns
    -------
    np.ndarray
        ``[(B,) Cout, Ho, Wo]`` with ``Ho = (H + 2p - kh) // stride + 1``.
    """
    xb, squeeze = _batched(x)
    if xb.shape[1] != params.in_channels:
        raise ShapeError(
            f"conv2d: input has {xb.shape[1]} channels, kernel expects {params.in_channels}"
        )
    win = _conv_windows(xb, params)
    out = np.tensordot(win, params.kernel, axes=([1, 4, 5], [1, 2, 3]))
    out = out.transpose(0, 3, 1, 2)
    if params.bias is not None:
        out = out + params.bias[None, :, None, None]
    return _unbatch(np.ascontiguousarray(out), squeeze)


def conv2d_backward(grad: np.ndarray, x: np.ndarray,
                    params: Conv2dParams) -> Tuple[np.ndarray, Grads]:
    """Gradients of ``conv2d`` w.r.t. its input, kernel and bias."""
    xb, squeeze = _batched(x)
    gb, _ = _batched(grad)
    win = _conv_windows(xb, params)
    grads = {"kernel": np.tensordot(gb, win, axes=([0, 2, 3], [0, 2, 3]))}
    if params.bias is not None:
        grads["bias"] = gb.sum(axis=(0, 2, 3))

    s, p = params.stride, params.padding
    _, _, ho, wo = gb.shape
    kh, kw = params.kernel.shape[2:]
    gxp = np.zeros((xb.shape[0], xb.shape[1], xb.shape[2] + 2 * p, xb.shape[3] + 2 * p))
    for i in range(kh):
        for j in range(kw):
            tap = np.einsum("boyx,oc->bcyx", gb, params.kernel[:, :, i, j])
            gxp[:, :, i:i + s * ho:s, j:j + s * wo:s] += tap
    gx = gxp[:, :, p:p + xb.shape[2], p:p + xb.shape[3]]
    return _unbatch(np.ascontiguousarray(gx), squeeze), grads


def init_depthwise(channels: int, rng: np.random.Generator,
                   kernel_size: int = 3, std: Optional[float] = None) -> np.ndarray:
    """Depthwise kernel ``[C, 1, k, k]``."""
    return randn((channels, 1, kernel_size, kernel_size), rng,
                 std=std if std is not None else 1.0 / kernel_size)


def depthwise_conv2d(x: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    """Per-channel ``k x k`` convolution, stride 1, shape-preserving, no bias."""
    xb, squeeze = _batched(x)
    c, one, kh, kw = kernel.shape
    if one != 1 or xb.shape[1] != c:
        raise ShapeError(f"depthwise kernel {kernel.shape} does not match input {xb.shape}")
    win = sliding_window_view(_pad_hw(xb, (kh - 1) // 2), (kh, kw), axis=(2, 3))
    out = np.einsum("bchwij,cij->bchw", win, kernel[:, 0])
    return _unbatch(out, squeeze)


def depthwise_conv2d_backward(grad: np.ndarray, x: np.ndarray,
                              kernel: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Returns ``(grad_x, grad_kernel)``."""
    xb, squeeze = _batched(x)
    gb, _ = _batched(grad)
    kh, kw = kernel.shape[2:]
    p = (kh - 1) // 2
    win = sliding_window_view(_pad_hw(xb, p), (kh, kw), axis=(2, 3))
    gk = np.einsum("bchw,bchwij->cij", gb, win)[:, None]
    h, w = xb.shape[2:]
    gxp = np.zeros((xb.shape[0], xb.shape[1], h + 2 * p, w + 2 * p))
    for i in range(kh):
        for j in range(kw):
            gxp[:, :, i:i + h, j:j + w] += gb * kernel[None, :, 0, i, j, None, None]
    return _unbatch(gxp[:, :, p:p + h, p:p + w], squeeze), gk


@dataclass
class DwSeparableParams:
    """Depthwise 3x3 pass, optionally followed by a 1x1 pointwise mix."""

    dw_kernel: np.ndarray
    pointwise: Optional[Conv2dParams] = None


def init_dw_separable(channels: int, rng: np.random.Generator,
                      pointwise: bool = True) -> DwSeparableParams:
    return DwSeparableParams(
        dw_kernel=init_depthwise(channels, rng),
        pointwise=init_conv2d(channels, channels, 1, rng) if pointwise else None,
    )


def dw_separable_conv_forward(x: np.ndarray, params: DwSeparableParams):
    h = depthwise_conv2d(x, params.dw_kernel)
    out = conv2d(h, params.pointwise) if params.pointwise is not None else h
    return out, (x, h)


def dw_separable_conv(x: np.ndarray, params: DwSeparableParams) -> np.ndarray:
    return dw_separable_conv_forward(x, params)[0]


def dw_separable_conv_backward(grad: np.ndarray, params: DwSeparableParams,
                               cache) -> Tuple[np.ndarray, Grads]:
    x, h = cache
    grads: Grads = {}
    if params.pointwise is not None:
        grad, pw_grads = conv2d_backward(grad, h, params.pointwise)
        grads.update(prefixed(pw_grads, "pointwise"))
    gx, grads["dw_kernel"] = depthwise_conv2d_backward(grad, x, params.dw_kernel)
    return gx, grads


# ---------------------------------------------------------------------------
# normalization
# ---------------------------------------------------------------------------

@dataclass
class GroupNormParams:
    gamma: np.ndarray
    beta: np.ndarray
    groups: int = 4
    eps: float = 1e-5


def init_group_norm(channels: int, groups: int = 4, eps: float = 1e-5) -> GroupNormParams:
    if channels % groups != 0:
        raise ConfigError(f"GroupNorm: {channels} channels not divisible by {groups} groups")
    return GroupNormParams(ones((channels,)), zeros((channels,)), groups, eps)


def group_norm_forward(x: np.ndarray, params: GroupNormParams):
    xb, squeeze = _batched(x)
    b, c, h, w = xb.shape
    g = params.groups
    if c % g != 0:
        raise ShapeError(f"group_norm: {c} channels not divisible by {g} groups")
    if params.gamma.shape != (c,) or params.beta.shape != (c,):
        raise ShapeError(f"group_norm: affine params do not match {c} channels")
    xg = xb.reshape(b, g, -1)
    mean = xg.mean(axis=-1, keepdims=True)
    var = xg.var(axis=-1, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + params.eps)
    xhat = ((xg - mean) * inv_std).reshape(b, c, h, w)
    out = params.gamma[None, :, None, None] * xhat + params.beta[None, :, None, None]
    return _unbatch(out, squeeze), (xhat, inv_std, squeeze)


def group_norm(x: np.ndarray, params: GroupNormParams) -> np.ndarray:
    """
    Per-sample GroupNorm: statistics over (channels in group, H, W).

    The variance is the population variance; ``eps`` is added before the
    square root.
    """
    return group_norm_forward(x, params)[0]


def group_norm_backward(grad: np.ndarray, params: GroupNormParams,
                        cache) -> Tuple[np.ndarray, Grads]:
    xhat, inv_std, squeeze = cache
    gb, _ = _batched(grad)
    b, c, h, w = gb.shape
    grads = {
        "gamma": (gb * xhat).sum(axis=(0, 2, 3)),
        "beta": gb.sum(axis=(0, 2, 3)),
    }
    gxhat = (gb * params.gamma[None, :, None, None]).reshape(b, params.groups, -1)
    xh = xhat.reshape(b, params.groups, -1)
    gx = inv_std * (gxhat - gxhat.mean(axis=-1, keepdims=True)
                    - xh * (gxhat * xh).mean(axis=-1, keepdims=True))
    return _unbatch(gx.reshape(b, c, h, w), squeeze), grads


# ---------------------------------------------------------------------------
# feed-forward sublayer
# ---------------------------------------------------------------------------

@dataclass
class FfnParams:
    expand: Conv2dParams
    project: Conv2dParams

    @property
    def hidden_ratio(self) -> int:
        return self.expand.out_channels // self.expand.in_channels


def init_ffn(channels: int, rng: np.random.Generator, hidden_ratio: int = 4) -> FfnParams:
    hidden = channels * hidden_ratio
    return FfnParams(
        expand=init_conv2d(channels, hidden, 1, rng),
        project=init_conv2d(hidden, channels, 1, rng),
    )


def ffn_forward(x: np.ndarray, params: FfnParams, activation: str = "gelu"):
    act = get_activation(activation)
    pre = conv2d(x, params.expand)
    hidden = act.forward(pre)
    return conv2d(hidden, params.project), (x, pre, hidden, act)


def ffn(x: np.ndarray, params: FfnParams, activation: str = "gelu") -> np.ndarray:
    """Pointwise C -> rC, activation, pointwise rC -> C (no residual)."""
    return ffn_forward(x, params, activation)[0]


def ffn_backward(grad: np.ndarray, params: FfnParams, cache) -> Tuple[np.ndarray, Grads]:
    x, pre, hidden, act = cache
    grad, g_proj = conv2d_backward(grad, hidden, params.project)
    grad = act.backward(grad, pre)
    gx, g_exp = conv2d_backward(grad, x, params.expand)
    return gx, {**prefixed(g_exp, "expand"), **prefixed(g_proj, "project")}


# ---------------------------------------------------------------------------
# bilinear / linear resizing
# ---------------------------------------------------------------------------

@lru_cache(maxsize=None)
def interp_matrix(n_in: int, n_out: int, align_corners: bool = True) -> np.ndarray:
    """
    ``[n_out, n_in]`` matrix of 1-D linear interpolation weights.

    With ``align_corners`` the first and last samples map exactly onto each
    other; otherwise sample centers are aligned (half-pixel rule, clamped at
    the borders). A source extent of 1 replicates its only value.
    """
    if n_in < 1 or n_out < 1:
        raise ShapeError(f"Interpolation extents must be >= 1, got {n_in} -> {n_out}")
    out_idx = np.arange(n_out, dtype=np.float64)
    if align_corners:
        if n_out == 1 or n_in == 1:
            coords = np.zeros(n_out)
        else:
            coords = out_idx * (n_in - 1) / (n_out - 1)
    else:
        coords = np.clip((out_idx + 0.5) * n_in / n_out - 0.5, 0.0, n_in - 1)
    lo = np.minimum(np.floor(coords).astype(np.int64), n_in - 1)
    hi = np.minimum(lo + 1, n_in - 1)
    frac = coords - lo
    matrix = np.zeros((n_out, n_in))
    np.add.at(matrix, (np.arange(n_out), lo), 1.0 - frac)
    np.add.at(matrix, (np.arange(n_out), hi), frac)
    matrix.setflags(write=False)
    return matrix


def bilinear_interp(x: np.ndarray, target: Tuple[int, int],
                    align_corners: bool = True) -> np.ndarray:
    """
    Resize the last two axes of ``x`` to ``target``.

    Any leading axes are carried along, so ``[C, h, w]`` and
    ``[B, C, h, w]`` both work.
    """
    if x.ndim < 2:
        raise ShapeError(f"bilinear_interp needs rank >= 2, got shape {x.shape}")
    h, w = x.shape[-2:]
    a_h = interp_matrix(h, int(target[0]), align_corners)
    a_w = interp_matrix(w, int(target[1]), align_corners)
    return a_h @ x @ a_w.T


def bilinear_interp_backward(grad: np.ndarray, source: Tuple[int, int],
                             align_corners: bool = True) -> np.ndarray:
    """Adjoint of ``bilinear_interp`` back to a ``source`` extent."""
    a_h = interp_matrix(int(source[0]), grad.shape[-2], align_corners)
    a_w = interp_matrix(int(source[1]), grad.shape[-1], align_corners)
    return a_h.T @ grad @ a_w


def linear_resize(x: np.ndarray, size: int, axis: int,
                  align_corners: bool = True) -> np.ndarray:
    """1-D linear interpolation of ``x`` along ``axis`` to length ``size``."""
    matrix = interp_matrix(x.shape[axis], int(size), align_corners)
    moved = np.moveaxis(x, axis, -1)
    return np.moveaxis(moved @ matrix.T, -1, axis)


def linear_resize_backward(grad: np.ndarray, source: int, axis: int,
                           align_corners: bool = True) -> np.ndarray:
    matrix = interp_matrix(int(source), grad.shape[axis], align_corners)
    moved = np.moveaxis(grad, axis, -1)
    return np.moveaxis(moved @ matrix, -1, axis)


# ---------------------------------------------------------------------------
# inverted residual block
# ---------------------------------------------------------------------------

@dataclass
class IrbParams:
    """Pointwise expand -> depthwise 3x3 -> pointwise project, with residual."""

    expand: Conv2dParams
    dw_kernel: np.ndarray
    project: Conv2dParams


def init_irb(channels: int, rng: np.random.Generator, expand_ratio: int = 4,
             std: Optional[float] = None) -> IrbParams:
    """
    IRB with ``channels * expand_ratio`` hidden channels.

    ``std`` overrides the fan-in scaled initialization for every kernel; the
    weight generator uses a small value so it starts close to identity.
    """
    hidden = channels * expand_ratio
    return IrbParams(
        expand=init_conv2d(channels, hidden, 1, rng, std=std),
        dw_kernel=init_depthwise(hidden, rng, std=std),
        project=init_conv2d(hidden, channels, 1, rng, std=std),
    )


def inverted_residual_block_forward(x: np.ndarray, params: IrbParams,
                                    activation: str = "gelu"):
    act = get_activation(activation)
    pre1 = conv2d(x, params.expand)
    h1 = act.forward(pre1)
    pre2 = depthwise_conv2d(h1, params.dw_kernel)
    h2 = act.forward(pre2)
    out = conv2d(h2, params.project) + x
    return out, (x, pre1, h1, pre2, h2, act)


def inverted_residual_block(x: np.ndarray, params: IrbParams,
                            activation: str = "gelu") -> np.ndarray:
    return inverted_residual_block_forward(x, params, activation)[0]


def inverted_residual_block_backward(grad: np.ndarray, params: IrbParams,
                                     cache) -> Tuple[np.ndarray, Grads]:
    x, pre1, h1, pre2, h2, act = cache
    g, g_proj = conv2d_backward(grad, h2, params.project)
    g = act.backward(g, pre2)
    g, g_dw = depthwise_conv2d_backward(g, h1, params.dw_kernel)
    g = act.backward(g, pre1)
    gx, g_exp = conv2d_backward(g, x, params.expand)
    grads = {**prefixed(g_exp, "expand"), "dw_kernel": g_dw, **prefixed(g_proj, "project")}
    return gx + grad, grads
