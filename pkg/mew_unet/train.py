"""
Training loop, prediction and evaluation.

Every random draw of an epoch (shuffling and augmentation) comes from the
stream ``make_rng(seed, epoch)``, so a run is reproducible bit-for-bit and
can resume from any epoch boundary.
"""

from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

import numpy as np
import pandas as pd

from .autodiff import Tape
from .data import SegmentationDataset, augment
from .errors import ConfigError, DataError, NumericalError
from .losses import segmentation_loss
from .metrics import MetricReport, confusion, evaluate_predictions, rates
from .model import MewUNet, save_checkpoint
from .optim import OPTIMIZERS, Optimizer, cosine_annealing_lr, make_optimizer
from .tensor import check_finite, make_rng

BEST_CHECKPOINT = "best.mewt"
LAST_CHECKPOINT = "last.mewt"


@dataclass
class TrainConfig:
    """Optimization recipe; defaults are the desk-scale AdamW run."""

    lr_init: float = 1e-3
    epochs: int = 60
    optimizer: str = "adamw"
    batch_size: int = 8
    eta_min: float = 1e-5
    weight_decay: float = 1e-2
    momentum: float = 0.9
    betas: List[float] = field(default_factory=lambda: [0.9, 0.999])
    eps: float = 1e-8
    seed: int = 0
    augment_flip: bool = True
    augment_rotate: bool = True
    loss_wb: float = 1.0
    loss_wd: float = 1.0
    dice_smooth: float = 1.0
    eval_every: int = 1

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if self.lr_init <= 0:
            raise ConfigError(f"lr_init must be > 0, got {self.lr_init}")
        if self.eta_min < 0:
            raise ConfigError(f"eta_min must be >= 0, got {self.eta_min}")
        if self.batch_size < 1 or self.eval_every < 1:
            raise ConfigError("batch_size and eval_every must be >= 1")
        if self.optimizer not in OPTIMIZERS:
            raise ConfigError(f"optimizer must be one of {OPTIMIZERS}, got {self.optimizer!r}")
        if self.seed < 0:
            raise ConfigError(f"seed must be >= 0, got {self.seed}")

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: Dict[str, Any]) -> "TrainConfig":
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"Unknown train config key(s): {sorted(unknown)}")
        return cls(**d)

    def lr_at(self, epoch: int) -> float:
        return cosine_annealing_lr(epoch, self.epochs, self.lr_init, self.eta_min)

    def make_optimizer(self, params: Dict[str, np.ndarray]) -> Optimizer:
        return make_optimizer(self.optimizer, params, self.lr_init, self.weight_decay,
                              momentum=self.momentum, betas=tuple(self.betas), eps=self.eps)


@dataclass
class EpochStats:
    epoch: int
    lr: float
    loss: float
    steps: int
    train_miou: float
    train_dsc: float

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


def _batch(dataset: SegmentationDataset, idx: np.ndarray, config: TrainConfig,
           rng: np.random.Generator) -> Tuple[np.ndarray, np.ndarray]:
    images, masks = [], []
    for i in idx:
        sample = augment(dataset[int(i)], rng, config.augment_flip, config.augment_rotate)
        images.append(sample.image)
        masks.append(sample.mask)
    return np.stack(images).astype(np.float64), np.stack(masks)


def _foreground_rates(preds: np.ndarray, gts: np.ndarray, n_classes: int) -> Tuple[float, float]:
    counts = [rates(confusion(preds, gts, c)) for c in range(1, n_classes)]
    return (float(np.mean([r.iou for r in counts])),
            float(np.mean([r.dsc for r in counts])))


def train_step(model: MewUNet, images: np.ndarray, masks: np.ndarray,
               optimizer: Optimizer, lr: float, config: TrainConfig) -> Tuple[float, np.ndarray]:
    """
    One forward/backward/update on a batch.

    Returns the loss and the logits (before the update).

    Raises
    ------
    NumericalError
        If the loss or any gradient is not finite.
    """
    tape = Tape()
    logits = model.forward(images, tape)
    loss, grad = segmentation_loss(logits, masks, config.loss_wb, config.loss_wd,
                                   config.dice_smooth)
    if not np.isfinite(loss):
        raise NumericalError(f"Loss became {loss}")
    grads = model.backward(tape, grad)
    for name, g in grads.items():
        check_finite(g, f"the gradient of {name}")
    optimizer.step(grads, lr)
    return loss, logits


def train_epoch(model: MewUNet, dataset: SegmentationDataset, config: TrainConfig,
                optimizer: Optimizer, epoch: int) -> EpochStats:
    """
    One pass over ``dataset`` in shuffled mini-batches.

    The learning rate is constant within the epoch and equals
    ``config.lr_at(epoch)``.
    """
    if len(dataset) == 0:
        raise DataError("Cannot train on an empty dataset")
    rng = make_rng(config.seed, epoch)
    order = rng.permutation(len(dataset))
    lr = config.lr_at(epoch)
    losses, weights, preds, gts = [], [], [], []
    for start in range(0, len(order), config.batch_size):
        idx = order[start:start + config.batch_size]
        images, masks = _batch(dataset, idx, config, rng)
        loss, logits = train_step(model, images, masks, optimizer, lr, config)
        losses.append(loss)
        weights.append(len(idx))
        preds.append(logits.argmax(axis=1))
        gts.append(masks)
    miou, dsc = _foreground_rates(np.concatenate(preds), np.concatenate(gts), dataset.n_classes)
    return EpochStats(epoch=epoch, lr=lr, loss=float(np.average(losses, weights=weights)),
                      steps=len(losses), train_miou=miou, train_dsc=dsc)


def predict(model: MewUNet, images: np.ndarray, batch_size: int = 8) -> np.ndarray:
    """Integer label maps ``[N, H, W]`` (argmax over class logits)."""
    out = []
    for start in range(0, len(images), batch_size):
        x = np.asarray(images[start:start + batch_size], dtype=np.float64)
        out.append(model.forward(x).argmax(axis=1))
    if not out:
        return np.zeros((0,) + images.shape[2:], dtype=np.int64)
    return np.concatenate(out)


def evaluate_model(model: MewUNet, dataset: SegmentationDataset,
                   batch_size: int = 8) -> MetricReport:
    return evaluate_predictions(predict(model, dataset.images, batch_size), dataset.masks,
                                dataset.n_classes)


def fit(model: MewUNet, train_set: SegmentationDataset, config: TrainConfig,
        test_set: Optional[SegmentationDataset] = None,
        out_dir: Optional[Union[str, Path]] = None, optimizer: Optional[Optimizer] = None,
        start_epoch: int = 0, verbose: bool = False) -> pd.DataFrame:
    """
    Train for ``config.epochs`` epochs with periodic test evaluation.

    Parameters
    ----------
    model : MewUNet
        Model to train in place.
    train_set, test_set : SegmentationDataset
        Training data and optional evaluation split.
    config : TrainConfig
        Recipe.
    out_dir : path, optional
        If given, the best-test-DSC checkpoint is written to ``best.mewt``
        and the final state to ``last.mewt``.
    optimizer : Optimizer, optional
        Resume with an existing optimizer (e.g. restored from a checkpoint).
    start_epoch : int
        First epoch to run.
    verbose : bool
        Print one line per epoch.

    Returns
    -------
    pd.DataFrame
        One row per epoch: ``epoch, lr, loss, steps, train_miou, train_dsc``
        plus ``test_miou, test_dsc, test_hd95`` on evaluation epochs.
    """
    optimizer = optimizer or config.make_optimizer(model.parameters())
    out_dir = Path(out_dir) if out_dir is not None else None
    best_dsc = -np.inf
    rows = []

    for epoch in range(start_epoch, config.epochs):
        row = train_epoch(model, train_set, config, optimizer, epoch).to_dict()
        last = epoch == config.epochs - 1
        if test_set is not None and len(test_set) and ((epoch + 1) % config.eval_every == 0
                                                        or last):
            mean = evaluate_model(model, test_set, config.batch_size).mean
            row.update(test_miou=mean["miou"], test_dsc=mean["dsc"], test_hd95=mean["hd95"])
            if out_dir is not None and mean["dsc"] > best_dsc:
                best_dsc = mean["dsc"]
                _save(out_dir / BEST_CHECKPOINT, model, optimizer, config, epoch + 1)
        rows.append(row)
        if verbose:
            extra = f", test mIoU {row['test_miou']:.4f}" if "test_miou" in row else ""
            print(f"epoch {epoch + 1}/{config.epochs}: loss {row['loss']:.5f}, "
                  f"lr {row['lr']:.2e}{extra}")

    if out_dir is not None:
        _save(out_dir / LAST_CHECKPOINT, model, optimizer, config, config.epochs)
    return pd.DataFrame(rows)


def _save(path: Path, model: MewUNet, optimizer: Optimizer, config: TrainConfig,
          next_epoch: int) -> None:
    meta, arrays = optimizer.state_dict()
    save_checkpoint(path, model, seed=config.seed, next_epoch=next_epoch,
                    optimizer_meta=meta, optimizer_arrays=arrays,
                    metadata={"train_config": config.to_dict()})
