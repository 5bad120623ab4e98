"""
Multi-axis external weights.

A MEW layer splits its input into four channel quarters. Quarters one to
three are filtered in the frequency domain over the (H, W), (C, W) and
(C, H) axis pairs with learned complex weights; the fourth quarter goes
through a depthwise-separable convolution. The quarters are concatenated
and added back to the input. The MEW block wraps the layer in two pre-norm
residual sublayers, the second one a feed-forward network.

Spectral weights come from a small per-branch tensor that is resized to
the branch's half-spectrum and refined by an inverted residual block
(``generated`` mode), or are learned directly at full size (``raw`` mode).
"""

from dataclasses import dataclass
from typing import Dict, Iterator, Optional, Tuple

import numpy as np

from .errors import ConfigError, ShapeError
from .nn_ops import (DwSeparableParams, FfnParams, GroupNormParams, IrbParams,
                     bilinear_interp, bilinear_interp_backward, dw_separable_conv_backward,
                     dw_separable_conv_forward, ffn_backward, ffn_forward,
                     group_norm_backward, group_norm_forward, init_dw_separable, init_ffn,
                     init_group_norm, init_irb, inverted_residual_block_backward,
                     inverted_residual_block_forward, linear_resize, linear_resize_backward)
from .spectral import (CH, CW, HW, AxisPair, SpectrumLayout, irdft2, irdft2_backward,
                       rdft2, rdft2_backward, spectral_mul, spectral_mul_backward)
from .tensor import concat_channels, prefixed, randn, split_channels

Grads = Dict[str, np.ndarray]

GENERATOR_MODES = ("generated", "raw")
BRANCH_NAMES = ("dw", "hw", "cw", "ch")
WEIGHT_INIT_STD = 0.02


@dataclass(frozen=True)
class BranchMask:
    """Which MEW branches are active; inactive ones pass their quarter through."""

    use_dw: bool = True
    use_hw: bool = True
    use_cw: bool = True
    use_ch: bool = True

    @classmethod
    def from_string(cls, text: str) -> "BranchMask":
        """
        Parse a comma-separated branch list such as ``"dw,hw,cw,ch"``.

        An empty string or ``"none"`` disables every branch.
        """
        names = [t.strip().lower() for t in text.split(",") if t.strip()]
        if names == ["none"]:
            names = []
        unknown = set(names) - set(BRANCH_NAMES)
        if unknown:
            raise ConfigError(f"Unknown branch name(s) {sorted(unknown)}; expected {BRANCH_NAMES}")
        return cls(**{f"use_{name}": name in names for name in BRANCH_NAMES})

    def to_string(self) -> str:
        active = [name for name in BRANCH_NAMES if self.enabled(name)]
        return ",".join(active) if active else "none"

    def enabled(self, branch: str) -> bool:
        return getattr(self, f"use_{branch}")


@dataclass(frozen=True)
class MewSettings:
    """Non-learnable choices shared by every MEW block of a model."""

    generator_mode: str = "generated"
    complex_weights: bool = True
    weight_base: int = 8
    irb_ratio: int = 4
    ffn_ratio: int = 4
    activation: str = "gelu"
    align_corners: bool = True
    dw_pointwise: bool = True
    gn_groups: int = 4
    gn_eps: float = 1e-5

    def __post_init__(self):
        if self.generator_mode not in GENERATOR_MODES:
            raise ConfigError(
                f"generator_mode must be one of {GENERATOR_MODES}, got {self.generator_mode!r}"
            )
        if self.weight_base < 1:
            raise ConfigError(f"weight_base must be >= 1, got {self.weight_base}")

    @property
    def planes(self) -> int:
        return 2 if self.complex_weights else 1


@dataclass
class BranchWeights:
    """
    Learnable spectral weight of one axis-pair branch.

    In ``generated`` mode ``init`` has shape ``[U0, P, base, base]`` where
    ``U0`` is the base extent of the untransformed axis and ``P`` is 2
    (real and imaginary planes) or 1 (real weights); ``irb`` refines the
    resized planes. In ``raw`` mode ``raw`` has shape ``[P, *spectrum]``.
    """

    axes: AxisPair
    mode: str
    init: Optional[np.ndarray] = None
    irb: Optional[IrbParams] = None
    raw: Optional[np.ndarray] = None

    @property
    def planes(self) -> int:
        if self.mode == "raw":
            return self.raw.shape[0]
        return self.init.shape[1]


@dataclass
class ExternalWeightSet:
    hw: BranchWeights
    cw: BranchWeights
    ch: BranchWeights

    def branches(self) -> Iterator[Tuple[str, BranchWeights]]:
        yield "hw", self.hw
        yield "cw", self.cw
        yield "ch", self.ch


@dataclass
class MewParams:
    weights: ExternalWeightSet
    dw: DwSeparableParams


@dataclass
class MewBlockParams:
    norm1: GroupNormParams
    mew: MewParams
    norm2: GroupNormParams
    ffn: FfnParams


def _planes_init(shape: Tuple[int, ...], plane_axis: int,
                 rng: np.random.Generator) -> np.ndarray:
    """Real plane ~ N(1, 0.02^2), imaginary plane ~ N(0, 0.02^2)."""
    w = randn(shape, rng, std=WEIGHT_INIT_STD)
    real = [slice(None)] * len(shape)
    real[plane_axis] = 0
    w[tuple(real)] += 1.0
    return w


def init_branch_weights(axes: AxisPair, quarter_shape: Tuple[int, int, int],
                        settings: MewSettings, rng: np.random.Generator) -> BranchWeights:
    """
    Initialize one branch for a channel quarter of ``quarter_shape``.

    ``quarter_shape`` is ``[C/4, H, W]``; raw weights are sized from it,
    generated weights only use its channel extent (for the H-W branch,
    whose untransformed axis is the channel axis).
    """
    p = settings.planes
    if settings.generator_mode == "raw":
        layout = SpectrumLayout.for_shape(quarter_shape, axes)
        return BranchWeights(axes, "raw", raw=_planes_init((p, *layout.shape), 0, rng))
    base = settings.weight_base
    u0 = quarter_shape[0] if axes.untransformed == 0 else base
    return BranchWeights(
        axes, "generated",
        init=_planes_init((u0, p, base, base), 1, rng),
        irb=init_irb(p, rng, settings.irb_ratio, std=WEIGHT_INIT_STD),
    )


def _chw_order(axes: AxisPair) -> Tuple[int, int, int]:
    # source axes are ordered (untransformed, first, second)
    src = {axes.untransformed: 0, axes.first: 1, axes.second: 2}
    return tuple(src[k] for k in range(3))


def _to_complex(planes: np.ndarray, axis: int) -> np.ndarray:
    real = np.take(planes, 0, axis=axis)
    if planes.shape[axis] == 1:
        return real.astype(np.complex128)
    return real + 1j * np.take(planes, 1, axis=axis)


def _from_complex_grad(grad: np.ndarray, planes: int, axis: int) -> np.ndarray:
    parts = [grad.real] if planes == 1 else [grad.real, grad.imag]
    return np.stack(parts, axis=axis)


def generate_weights(bw: BranchWeights, layout: SpectrumLayout,
                     activation: str = "gelu", align_corners: bool = True):
    """
    Produce the complex half-spectrum weight of one branch.

    Parameters
    ----------
    bw : BranchWeights
        Branch parameters.
    layout : SpectrumLayout
        Half-spectrum layout of the branch's channel quarter.
    activation, align_corners : str, bool
        Generator IRB activation and resize rule.

    Returns
    -------
    weight : np.ndarray
        complex128 tensor of exactly ``layout.shape``.
    cache : tuple
        State for ``generate_weights_backward``.
    """
    if min(layout.stored_dims) < 1 or layout.untransformed_extent < 1:
        raise ShapeError(f"Target spectrum {layout.shape} is smaller than 1x1")
    if bw.mode == "raw":
        if bw.raw.shape[1:] != layout.shape:
            raise ShapeError(
                f"Raw weight shape {bw.raw.shape[1:]} does not match spectrum {layout.shape}"
            )
        return _to_complex(bw.raw, 0), None

    u0 = bw.init.shape[0]
    resized = linear_resize(bw.init, layout.untransformed_extent, 0, align_corners)
    resized_shape = resized.shape[-2:]
    planes = bilinear_interp(resized, layout.stored_dims, align_corners)
    refined, irb_cache = inverted_residual_block_forward(planes, bw.irb, activation)
    w = np.transpose(_to_complex(refined, 1), _chw_order(bw.axes))
    return np.ascontiguousarray(w), (u0, resized_shape, irb_cache, align_corners)


def generate_weights_backward(grad: np.ndarray, bw: BranchWeights, cache) -> Grads:
    """Parameter gradients of ``generate_weights`` for a complex weight gradient."""
    if bw.mode == "raw":
        return {"raw": _from_complex_grad(grad, bw.raw.shape[0], 0)}
    u0, resized_shape, irb_cache, align_corners = cache
    order = _chw_order(bw.axes)
    g = np.transpose(grad, np.argsort(order))
    g = _from_complex_grad(g, bw.init.shape[1], 1)
    g, irb_grads = inverted_residual_block_backward(g, bw.irb, irb_cache)
    g = bilinear_interp_backward(g, resized_shape, align_corners)
    g = linear_resize_backward(g, u0, 0, align_corners)
    return {"init": g, **prefixed(irb_grads, "irb")}


def init_mew(channels: int, spatial: Tuple[int, int], settings: MewSettings,
             rng: np.random.Generator) -> MewParams:
    if channels % 4 != 0:
        raise ConfigError(f"MEW needs a channel count divisible by 4, got {channels}")
    quarter = (channels // 4, int(spatial[0]), int(spatial[1]))
    return MewParams(
        weights=ExternalWeightSet(
            hw=init_branch_weights(HW, quarter, settings, rng),
            cw=init_branch_weights(CW, quarter, settings, rng),
            ch=init_branch_weights(CH, quarter, settings, rng),
        ),
        dw=init_dw_separable(channels // 4, rng, pointwise=settings.dw_pointwise),
    )


def mew_forward(x: np.ndarray, params: MewParams, mask: BranchMask = BranchMask(),
                activation: str = "gelu", align_corners: bool = True):
    """
    MEW layer: split, per-branch filtering, concatenate, add input.

    Parameters
    ----------
    x : np.ndarray
        ``[C, H, W]`` or ``[B, C, H, W]`` with ``C % 4 == 0``.
    params : MewParams
        Branch weights and DW parameters.
    mask : BranchMask
        Disabled branches pass their channel quarter through unchanged.

    Returns
    -------
    out : np.ndarray
        Same shape as ``x``.
    cache : list
        Per-branch state for ``mew_backward``.
    """
    if x.ndim not in (3, 4) or x.shape[-3] % 4 != 0:
        raise ShapeError(f"mew_forward needs [.., C, H, W] with C % 4 == 0, got {x.shape}")
    parts = split_channels(x, 4)
    outs, caches = [], []

    for part, (name, bw) in zip(parts, params.weights.branches()):
        if not mask.enabled(name):
            outs.append(part)
            caches.append(None)
            continue
        layout = SpectrumLayout.for_shape(part.shape, bw.axes)
        w, gen_cache = generate_weights(bw, layout, activation, align_corners)
        spec = rdft2(part, bw.axes)
        w_full = np.broadcast_to(w, spec.shape)
        outs.append(irdft2(spectral_mul(spec, w_full), bw.axes, layout.full_dims))
        caches.append((layout, spec, w_full, gen_cache))

    if mask.use_dw:
        y, dw_cache = dw_separable_conv_forward(parts[3], params.dw)
        outs.append(y)
        caches.append(dw_cache)
    else:
        outs.append(parts[3])
        caches.append(None)

    return concat_channels(outs) + x, caches


def mew(x: np.ndarray, params: MewParams, mask: BranchMask = BranchMask(),
        activation: str = "gelu", align_corners: bool = True) -> np.ndarray:
    return mew_forward(x, params, mask, activation, align_corners)[0]


def mew_backward(grad: np.ndarray, params: MewParams, cache) -> Tuple[np.ndarray, Grads]:
    """
    Input and parameter gradients of ``mew_forward``.

    Only parameters of enabled branches appear in the returned dict.
    """
    gparts = split_channels(grad, 4)
    gx_parts = []
    grads: Grads = {}

    for g, (name, bw), c in zip(gparts, params.weights.branches(), cache):
        if c is None:
            gx_parts.append(g)
            continue
        layout, spec, w_full, gen_cache = c
        g_prod = irdft2_backward(g, bw.axes)
        g_spec, g_w = spectral_mul_backward(g_prod, spec, w_full)
        # weights are shared across the batch
        g_w = g_w.reshape(-1, *layout.shape).sum(axis=0)
        grads.update(prefixed(generate_weights_backward(g_w, bw, gen_cache),
                              f"weights.{name}"))
        gx_parts.append(rdft2_backward(g_spec, bw.axes, layout.full_dims))

    if cache[3] is None:
        gx_parts.append(gparts[3])
    else:
        g_dw, dw_grads = dw_separable_conv_backward(gparts[3], params.dw, cache[3])
        grads.update(prefixed(dw_grads, "dw"))
        gx_parts.append(g_dw)

    return concat_channels(gx_parts) + grad, grads


def init_mewb(channels: int, spatial: Tuple[int, int], settings: MewSettings,
              rng: np.random.Generator) -> MewBlockParams:
    return MewBlockParams(
        norm1=init_group_norm(channels, settings.gn_groups, settings.gn_eps),
        mew=init_mew(channels, spatial, settings, rng),
        norm2=init_group_norm(channels, settings.gn_groups, settings.gn_eps),
        ffn=init_ffn(channels, rng, settings.ffn_ratio),
    )


def mewb_forward(x: np.ndarray, params: MewBlockParams, mask: BranchMask = BranchMask(),
                 activation: str = "gelu", align_corners: bool = True):
    """
    MEW block: ``X' = MEW(GN(X)) + X`` then ``Y = FFN(GN(X')) + X'``.

    Returns ``(Y, cache)``.
    """
    n1, gn1_cache = group_norm_forward(x, params.norm1)
    m, mew_cache = mew_forward(n1, params.mew, mask, activation, align_corners)
    mid = m + x
    n2, gn2_cache = group_norm_forward(mid, params.norm2)
    f, ffn_cache = ffn_forward(n2, params.ffn, activation)
    return f + mid, (gn1_cache, mew_cache, gn2_cache, ffn_cache)


def mewb(x: np.ndarray, params: MewBlockParams, mask: BranchMask = BranchMask(),
         activation: str = "gelu", align_corners: bool = True) -> np.ndarray:
    return mewb_forward(x, params, mask, activation, align_corners)[0]


def mewb_backward(grad: np.ndarray, params: MewBlockParams,
                  cache) -> Tuple[np.ndarray, Grads]:
    gn1_cache, mew_cache, gn2_cache, ffn_cache = cache
    g, ffn_grads = ffn_backward(grad, params.ffn, ffn_cache)
    g, gn2_grads = group_norm_backward(g, params.norm2, gn2_cache)
    g_mid = g + grad
    g, mew_grads = mew_backward(g_mid, params.mew, mew_cache)
    g, gn1_grads = group_norm_backward(g, params.norm1, gn1_cache)
    grads = {
        **prefixed(gn1_grads, "norm1"),
        **prefixed(mew_grads, "mew"),
        **prefixed(gn2_grads, "norm2"),
        **prefixed(ffn_grads, "ffn"),
    }
    return g + g_mid, grads
