"""
Synthetic frequency-texture segmentation data.

Each image is a layout of random ellipses (one per foreground class) over
a background. Every region is filled with its own texture: a constant
offset plus a sum of plane waves whose spatial frequencies are multiples of
``1 / period``, each multiplied by a per-channel profile. With period 10
the magnitudes of any fully-labelled 10x10 patch do not depend on where the
patch sits or on the per-sample phases.

The default recipe gives the background and the first foreground class
single-axis (H-W) strength curves that cross while their joint multi-axis
curves stay strictly apart; the channel profile of the foreground is what
separates them. ``verify_separability`` checks this on clean, noise-free
renderings and dataset generation refuses to run if it fails. The emitted
samples carry additive noise and are not re-checked; ``analyze-freq``
measures the curves on them.

Datasets are stored as a container file (``data.mewt``: ``images`` float32
``[N, C, H, W]`` and ``masks`` float32 ``[N, H, W]``) plus ``index.json``.
"""

import json
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Tuple, Union

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .container import read_container, write_container
from .errors import ConfigError, DataError, ShapeError
from .spectral import curve_intersections, signal_strength_curve
from .tensor import make_rng

DATA_FILE = "data.mewt"
INDEX_FILE = "index.json"
PATCH_SIZE = 10
SUPPORT_TOL = 0.5


@dataclass(frozen=True)
class WaveComponent:
    """Plane wave ``amplitude * cos(2 pi (fh*y + fw*x) / period + phase)``."""

    fh: int
    fw: int
    amplitude: float


@dataclass(frozen=True)
class RegionTexture:
    label: int
    offset: float
    components: Tuple[WaveComponent, ...]
    channel_profile: Tuple[float, ...]


@dataclass(frozen=True)
class TextureSpec:
    """Per-region frequency recipes plus additive Gaussian noise."""

    regions: Tuple[RegionTexture, ...]
    noise: float = 0.01
    period: int = PATCH_SIZE
    phase_jitter: bool = True

    @classmethod
    def default(cls, n_classes: int = 2, in_channels: int = 3,
                noise: float = 0.01) -> "TextureSpec":
        """
        Built-in recipe for 2 or 3 classes and 3 input channels.

        Background and class 1 share the single-axis envelope shape but
        differ along the channel axis; class 2 is an extra, easier region.
        """
        if in_channels != 3 or n_classes not in (2, 3):
            raise ConfigError("The default texture recipe covers 3 channels and 2 or 3 classes")
        regions = [
            RegionTexture(0, 0.5, (WaveComponent(1, 1, 0.05), WaveComponent(2, 3, 0.05)),
                          (1.0, 1.0, 1.0)),
            RegionTexture(1, 0.55, (WaveComponent(3, 2, 0.35),), (1.0, -1.0, 1.0)),
            RegionTexture(2, 0.45, (WaveComponent(4, 1, 0.15),), (1.0, 0.5, 0.0)),
        ]
        return cls(tuple(regions[:n_classes]), noise=noise)

    def validate(self, n_classes: int, in_channels: int) -> None:
        labels = sorted(r.label for r in self.regions)
        if labels != list(range(n_classes)):
            raise ConfigError(f"Texture regions {labels} do not cover classes 0..{n_classes - 1}")
        for r in self.regions:
            if len(r.channel_profile) != in_channels:
                raise ConfigError(
                    f"Region {r.label} profile has {len(r.channel_profile)} channels, "
                    f"expected {in_channels}"
                )
        if self.noise < 0 or self.period < 1:
            raise ConfigError("noise must be >= 0 and period >= 1")

    def region(self, label: int) -> RegionTexture:
        for r in self.regions:
            if r.label == label:
                return r
        raise KeyError(label)


@dataclass
class SegmentationSample:
    image: np.ndarray
    mask: np.ndarray
    id: str
    seed: int


@dataclass
class SegmentationDataset:
    images: np.ndarray
    masks: np.ndarray
    ids: List[str]
    seeds: List[int]
    n_classes: int

    def __len__(self) -> int:
        return len(self.ids)

    def __getitem__(self, i: int) -> SegmentationSample:
        return SegmentationSample(self.images[i], self.masks[i], self.ids[i], self.seeds[i])

    @property
    def image_size(self) -> int:
        return int(self.images.shape[-1]) if len(self) else 0

    @property
    def in_channels(self) -> int:
        return int(self.images.shape[1]) if len(self) else 0


def render_texture(region: RegionTexture, size: Tuple[int, int], period: int,
                   phases: Optional[np.ndarray] = None) -> np.ndarray:
    """Noise-free ``[C, H, W]`` rendering of one region texture."""
    h, w = size
    yy, xx = np.meshgrid(np.arange(h), np.arange(w), indexing="ij")
    if phases is None:
        phases = np.zeros(len(region.components))
    pattern = np.zeros((h, w))
    for comp, phase in zip(region.components, phases):
        pattern += comp.amplitude * np.cos(2 * np.pi * (comp.fh * yy + comp.fw * xx) / period
                                           + phase)
    profile = np.asarray(region.channel_profile, dtype=np.float64)[:, None, None]
    return region.offset + profile * pattern[None]


def verify_separability(spec: TextureSpec, labels: Tuple[int, int] = (0, 1),
                        tol: float = SUPPORT_TOL) -> Tuple[int, int]:
    """
    Check that two regions are single-axis ambiguous but multi-axis separable.

    Returns ``(single_intersections, multi_intersections)`` measured on
    clean ``period x period`` patches. The noise that ``generate_sample``
    adds is not part of this check.

    Raises
    ------
    DataError
        If the single-axis curves do not intersect or the multi-axis curves
        do.
    """
    size = (spec.period, spec.period)
    a = render_texture(spec.region(labels[0]), size, spec.period)
    b = render_texture(spec.region(labels[1]), size, spec.period)
    single = curve_intersections(signal_strength_curve(a, "single"),
                                 signal_strength_curve(b, "single"), tol)
    multi = curve_intersections(signal_strength_curve(a, "multi"),
                                signal_strength_curve(b, "multi"), tol)
    if single == 0 or multi != 0:
        raise DataError(
            f"Texture spec is not multi-axis separable for regions {labels}: "
            f"single-axis intersections={single}, multi-axis intersections={multi}"
        )
    return single, multi


def _ellipse_mask(size: int, rng: np.random.Generator) -> np.ndarray:
    yy, xx = np.meshgrid(np.arange(size), np.arange(size), indexing="ij")
    cy, cx = rng.uniform(0.25, 0.75, size=2) * (size - 1)
    ay, ax = rng.uniform(0.15, 0.3, size=2) * size
    angle = rng.uniform(0.0, np.pi)
    dy, dx = yy - cy, xx - cx
    u = dy * np.cos(angle) + dx * np.sin(angle)
    v = -dy * np.sin(angle) + dx * np.cos(angle)
    return (u / ay) ** 2 + (v / ax) ** 2 <= 1.0


def generate_sample(index: int, image_size: int, n_classes: int, spec: TextureSpec,
                    seed: int, stream: int = 0) -> SegmentationSample:
    """One sample, fully determined by ``(seed, stream, index)``."""
    rng = make_rng(seed, stream, index)
    mask = np.zeros((image_size, image_size), dtype=np.int64)
    for label in range(1, n_classes):
        mask[_ellipse_mask(image_size, rng)] = label

    in_channels = len(spec.regions[0].channel_profile)
    image = np.zeros((in_channels, image_size, image_size))
    for region in sorted(spec.regions, key=lambda r: r.label):
        if spec.phase_jitter:
            phases = rng.uniform(0.0, 2 * np.pi, size=len(region.components))
        else:
            phases = None
        texture = render_texture(region, (image_size, image_size), spec.period, phases)
        image = np.where(mask[None] == region.label, texture, image)
    if spec.noise > 0:
        image = image + rng.normal(0.0, spec.noise, size=image.shape)
    image = np.clip(image, 0.0, 1.0).astype(np.float32)
    return SegmentationSample(image, mask, f"s{stream}-{index:05d}", int(seed))


def generate_dataset(n: int, image_size: int, n_classes: int, spec: TextureSpec, seed: int,
                     stream: int = 0, verbose: bool = False) -> SegmentationDataset:
    """
    Generate ``n`` samples of the texture segmentation task.

    Parameters
    ----------
    n : int
        Number of samples; 0 gives an empty dataset.
    image_size : int
        Side length of the square images.
    n_classes : int
        Number of labels including background.
    spec : TextureSpec
        Region textures; their clean renderings are checked with
        ``verify_separability`` first.
    seed : int
        Base seed; sample ``i`` uses the stream ``(seed, stream, i)``.
    stream : int
        Split selector, e.g. 0 for train and 1 for test.
    verbose : bool
        Print progress.

    Returns
    -------
    SegmentationDataset
    """
    if n < 0:
        raise ConfigError(f"Sample count must be >= 0, got {n}")
    if image_size < spec.period:
        raise ConfigError(f"image_size {image_size} is smaller than the texture period")
    in_channels = len(spec.regions[0].channel_profile) if spec.regions else 0
    spec.validate(n_classes, in_channels)
    verify_separability(spec)

    samples = []
    for i in range(n):
        samples.append(generate_sample(i, image_size, n_classes, spec, seed, stream))
        if verbose and (i + 1) % 50 == 0:
            print(f"  generated {i + 1}/{n} samples")

    if samples:
        images = np.stack([s.image for s in samples])
        masks = np.stack([s.mask for s in samples])
    else:
        images = np.zeros((0, in_channels, image_size, image_size), dtype=np.float32)
        masks = np.zeros((0, image_size, image_size), dtype=np.int64)
    return SegmentationDataset(images, masks, [s.id for s in samples],
                               [s.seed for s in samples], n_classes)


def save_dataset(path: Union[str, Path], dataset: SegmentationDataset,
                 metadata: Optional[dict] = None) -> Path:
    """Write ``dataset`` to directory ``path`` (container + ``index.json``)."""
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    info = {
        "n": len(dataset),
        "n_classes": dataset.n_classes,
        "image_shape": list(dataset.images.shape[1:]),
        "ids": dataset.ids,
        "seeds": dataset.seeds,
        **(metadata or {}),
    }
    write_container(path / DATA_FILE, {
        "images": dataset.images.astype(np.float32),
        "masks": dataset.masks.astype(np.float32),
    }, info)
    with open(path / INDEX_FILE, "w") as f:
        json.dump({"file": DATA_FILE, **info}, f, indent=2, sort_keys=True)
    return path


def load_dataset(path: Union[str, Path]) -> SegmentationDataset:
    """
    Load a dataset directory written by ``save_dataset``.

    Raises
    ------
    DataError
        If files are missing or corrupt, the stored shapes disagree, or a
        mask holds a value that is not an integer label below ``n_classes``.
    """
    path = Path(path)
    if not (path / INDEX_FILE).exists():
        raise DataError(f"No dataset index found at {path / INDEX_FILE}")
    records, info = read_container(path / DATA_FILE)
    try:
        images, masks = records["images"], records["masks"]
        n_classes = int(info["n_classes"])
    except KeyError as e:
        raise DataError(f"Dataset container is missing {e}") from e
    if images.ndim != 4 or masks.shape != (images.shape[0],) + images.shape[2:]:
        raise DataError(f"Inconsistent dataset shapes {images.shape} and {masks.shape}")
    if np.any(masks != np.round(masks)) or np.any(masks < 0) or np.any(masks >= n_classes):
        raise DataError(f"Mask values must be integer labels in [0, {n_classes})")
    if not np.all(np.isfinite(images)):
        raise DataError("Dataset images contain non-finite values")
    n = images.shape[0]
    return SegmentationDataset(
        images=images,
        masks=masks.astype(np.int64),
        ids=list(info.get("ids", [f"{i:05d}" for i in range(n)])),
        seeds=list(info.get("seeds", [0] * n)),
        n_classes=n_classes,
    )


def augment(sample: SegmentationSample, rng: np.random.Generator, flip: bool = True,
            rotate: bool = True) -> SegmentationSample:
    """
    Random flips (each axis with p=0.5) and a k*90 degree rotation.

    The same draw is applied to image and mask. Three draws are always
    consumed so the stream position does not depend on the toggles.
    """
    flip_w, flip_h = rng.random(2) < 0.5
    k = int(rng.integers(4))
    image, mask = sample.image, sample.mask
    if flip and flip_w:
        image, mask = image[..., ::-1], mask[..., ::-1]
    if flip and flip_h:
        image, mask = image[..., ::-1, :], mask[..., ::-1, :]
    if rotate and k:
        if image.shape[-1] != image.shape[-2]:
            raise ShapeError("Rotation augmentation needs square images")
        image = np.rot90(image, k, axes=(-2, -1))
        mask = np.rot90(mask, k, axes=(-2, -1))
    return SegmentationSample(np.ascontiguousarray(image), np.ascontiguousarray(mask),
                              sample.id, sample.seed)


def find_patch(mask: np.ndarray, label: int, size: int = PATCH_SIZE) -> Optional[Tuple[int, int]]:
    """Top-left corner of the first ``size x size`` window fully labelled ``label``."""
    if mask.shape[0] < size or mask.shape[1] < size:
        return None
    windows = sliding_window_view(mask == label, (size, size))
    full = windows.all(axis=(-2, -1))
    hits = np.argwhere(full)
    if hits.size == 0:
        return None
    return int(hits[0, 0]), int(hits[0, 1])


def extract_patch(image: np.ndarray, top: int, left: int, size: int = PATCH_SIZE) -> np.ndarray:
    """``[C, size, size]`` crop; raises ShapeError when out of bounds."""
    _, h, w = image.shape
    if top < 0 or left < 0 or top + size > h or left + size > w:
        raise ShapeError(f"Patch at ({top}, {left}) of size {size} exceeds image {h}x{w}")
    return np.asarray(image[:, top:top + size, left:left + size], dtype=np.float64)
