"""
Segmentation losses with analytic gradients.

Binary tasks use BceDice on a single logit per pixel; the network still
emits two class channels and the logit is their difference. Multiclass
tasks use cross-entropy plus the mean per-class soft dice.
"""

from typing import Tuple

import numpy as np
from scipy.special import expit, log_softmax, softmax

from .errors import DataError, ShapeError


def binary_logit(logits: np.ndarray) -> np.ndarray:
    """``z1 - z0`` from two-channel logits ``[(B,) 2, H, W]``."""
    if logits.ndim not in (3, 4) or logits.shape[-3] != 2:
        raise ShapeError(f"binary_logit needs [(B,) 2, H, W], got {logits.shape}")
    return logits[..., 1, :, :] - logits[..., 0, :, :]


def binary_logit_backward(grad: np.ndarray) -> np.ndarray:
    return np.stack([-grad, grad], axis=-3)


def _check_binary_mask(mask: np.ndarray) -> None:
    if not np.all((mask == 0) | (mask == 1)):
        raise DataError("Binary mask values must be 0 or 1")


def bce_dice_loss(logit: np.ndarray, mask: np.ndarray, wb: float = 1.0, wd: float = 1.0,
                  smooth: float = 1.0) -> Tuple[float, np.ndarray]:
    """
    Weighted binary cross-entropy plus soft-dice loss.

    Parameters
    ----------
    logit : np.ndarray
        Per-pixel logits ``[H, W]``, ``[1, H, W]`` or ``[B, H, W]``; a 3-D
        input is always read as a batch.
    mask : np.ndarray
        Binary mask of the same shape.
    wb, wd : float
        Weights of the BCE and dice terms.
    smooth : float
        Additive smoothing in the dice ratio.

    Returns
    -------
    loss : float
        ``wb * mean BCE + wd * mean_b(1 - dice_b)`` with the dice computed
        per sample.
    grad : np.ndarray
        dLoss/dlogit, same shape as ``logit``.
    """
    if logit.shape != mask.shape:
        raise ShapeError(f"Logit shape {logit.shape} does not match mask {mask.shape}")
    _check_binary_mask(mask)
    shape = logit.shape
    z = logit.reshape(-1, *shape[-2:]) if logit.ndim >= 3 else logit[None]
    g = np.asarray(mask, dtype=np.float64).reshape(z.shape)
    n_samples = z.shape[0]

    p = expit(z)
    bce = float(np.mean(np.logaddexp(0.0, z) - g * z))
    grad_bce = (p - g) / z.size

    inter = (p * g).sum(axis=(1, 2))
    denom = p.sum(axis=(1, 2)) + g.sum(axis=(1, 2)) + smooth
    dice = (2.0 * inter + smooth) / denom
    dice_loss = float(np.mean(1.0 - dice))
    d_dice_dp = (2.0 * g * denom[:, None, None] - (2.0 * inter + smooth)[:, None, None]) \
        / (denom ** 2)[:, None, None]
    grad_dice = -d_dice_dp * p * (1.0 - p) / n_samples

    loss = wb * bce + wd * dice_loss
    return loss, (wb * grad_bce + wd * grad_dice).reshape(shape)


def ce_dice_loss(logits: np.ndarray, labels: np.ndarray, wb: float = 1.0, wd: float = 1.0,
                 smooth: float = 1.0) -> Tuple[float, np.ndarray]:
    """
    Cross-entropy plus mean per-class soft dice for ``K >= 2`` classes.

    ``logits`` is ``[(B,) K, H, W]`` and ``labels`` integer ``[(B,) H, W]``.
    The dice term averages ``1 - dice`` over samples and classes, each class
    scored one-vs-rest on the softmax probabilities.
    """
    squeeze = logits.ndim == 3
    z = logits[None] if squeeze else logits
    y = labels[None] if squeeze else labels
    if z.ndim != 4 or y.shape != (z.shape[0],) + z.shape[2:]:
        raise ShapeError(f"Logits {logits.shape} and labels {labels.shape} are incompatible")
    k = z.shape[1]
    if np.any(y < 0) or np.any(y >= k) or np.any(y != np.round(y)):
        raise DataError(f"Labels must be integers in [0, {k})")

    onehot = (y[:, None] == np.arange(k)[None, :, None, None]).astype(np.float64)
    n_pixels = y.size
    ce = float(-(log_softmax(z, axis=1) * onehot).sum() / n_pixels)
    p = softmax(z, axis=1)
    grad_ce = (p - onehot) / n_pixels

    inter = (p * onehot).sum(axis=(2, 3))
    denom = p.sum(axis=(2, 3)) + onehot.sum(axis=(2, 3)) + smooth
    dice = (2.0 * inter + smooth) / denom
    dice_loss = float(np.mean(1.0 - dice))
    scale = -1.0 / dice.size
    grad_p = scale * (2.0 * onehot * denom[..., None, None]
                      - (2.0 * inter + smooth)[..., None, None]) / (denom ** 2)[..., None, None]
    # softmax Jacobian-vector product along the class axis
    grad_dice = p * (grad_p - (grad_p * p).sum(axis=1, keepdims=True))

    grad = wb * grad_ce + wd * grad_dice
    return wb * ce + wd * dice_loss, grad[0] if squeeze else grad


def segmentation_loss(logits: np.ndarray, labels: np.ndarray, wb: float = 1.0,
                      wd: float = 1.0, smooth: float = 1.0) -> Tuple[float, np.ndarray]:
    """
    Task loss on raw network logits; returns ``(loss, dLoss/dlogits)``.

    Two-class logits go through ``binary_logit`` and ``bce_dice_loss``;
    more classes use ``ce_dice_loss``.
    """
    if logits.shape[-3] == 2:
        loss, grad = bce_dice_loss(binary_logit(logits), labels, wb, wd, smooth)
        return loss, binary_logit_backward(grad)
    return ce_dice_loss(logits, labels, wb, wd, smooth)
