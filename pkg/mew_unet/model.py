"""
U-shaped segmentation network built from MEW blocks, plus checkpoints.

Topology for ``S = len(stage_depths)`` levels with widths
``base_width * 2**i``::

    stem 3x3 conv (in_channels -> width_0)
    encoder level i < S-1:  MEWB x depth_i, keep skip, 3x3 stride-2 conv -> width_{i+1}
    bottleneck (level S-1): MEWB x depth_{S-1}
    decoder level i:        bilinear x2, 1x1 conv width_{i+1} -> width_i, add skip_i,
                            MEWB x depth_i
    head 1x1 conv (width_0 -> n_classes), raw logits
"""

from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

import numpy as np

from .autodiff import Tape
from .container import read_container, write_container
from .errors import CheckpointError, ConfigError, ContainerError, ShapeError, TapeError
from .mew import (GENERATOR_MODES, BranchMask, MewBlockParams, MewSettings, init_mewb,
                  mewb_backward, mewb_forward)
from .nn_ops import (ACTIVATIONS, Conv2dParams, bilinear_interp, bilinear_interp_backward,
                     conv2d, conv2d_backward, init_conv2d)
from .tensor import make_rng, named_arrays, prefixed

Grads = Dict[str, np.ndarray]

CHECKPOINT_FORMAT = "mew-unet-checkpoint"


@dataclass
class ModelConfig:
    """
    Architecture hyperparameters.

    The defaults are the desk-scale network: width 8, three levels with
    one block each, 64x64 inputs.
    """

    in_channels: int = 3
    n_classes: int = 2
    base_width: int = 8
    stage_depths: List[int] = field(default_factory=lambda: [1, 1, 1])
    image_size: int = 64
    branch_mask: BranchMask = field(default_factory=BranchMask)
    generator_mode: str = "generated"
    ffn_ratio: int = 4
    irb_ratio: int = 4
    weight_base: int = 8
    complex_weights: bool = True
    dw_pointwise: bool = True
    activation: str = "gelu"
    align_corners: bool = True
    gn_groups: int = 4
    gn_eps: float = 1e-5

    def __post_init__(self):
        if isinstance(self.branch_mask, str):
            self.branch_mask = BranchMask.from_string(self.branch_mask)
        self.stage_depths = [int(d) for d in self.stage_depths]
        self.validate()

    @property
    def n_stages(self) -> int:
        return len(self.stage_depths)

    @property
    def widths(self) -> List[int]:
        return [self.base_width * 2 ** i for i in range(self.n_stages)]

    @property
    def spatial_divisor(self) -> int:
        return 2 ** (self.n_stages - 1)

    def validate(self) -> None:
        """Raise ConfigError if the architecture cannot be built."""
        if self.n_stages < 2:
            raise ConfigError(f"Need at least 2 stages, got stage_depths={self.stage_depths}")
        if any(d < 1 for d in self.stage_depths):
            raise ConfigError(f"Stage depths must be >= 1, got {self.stage_depths}")
        if self.in_channels < 1 or self.n_classes < 2:
            raise ConfigError("in_channels must be >= 1 and n_classes >= 2")
        for width in self.widths:
            if width % 4 != 0 or width % self.gn_groups != 0:
                raise ConfigError(
                    f"Stage width {width} must be divisible by 4 and by {self.gn_groups} groups"
                )
        if self.image_size < 1 or self.image_size % self.spatial_divisor != 0:
            raise ConfigError(
                f"image_size {self.image_size} not divisible by {self.spatial_divisor}"
            )
        if self.generator_mode not in GENERATOR_MODES:
            raise ConfigError(f"generator_mode must be one of {GENERATOR_MODES}")
        if self.activation not in ACTIVATIONS:
            raise ConfigError(f"Unknown activation {self.activation!r}")
        if min(self.ffn_ratio, self.irb_ratio, self.weight_base) < 1 or self.gn_eps <= 0:
            raise ConfigError("ffn_ratio, irb_ratio, weight_base must be >= 1 and gn_eps > 0")

    def settings(self) -> MewSettings:
        return MewSettings(
            generator_mode=self.generator_mode,
            complex_weights=self.complex_weights,
            weight_base=self.weight_base,
            irb_ratio=self.irb_ratio,
            ffn_ratio=self.ffn_ratio,
            activation=self.activation,
            align_corners=self.align_corners,
            dw_pointwise=self.dw_pointwise,
            gn_groups=self.gn_groups,
            gn_eps=self.gn_eps,
        )

    def to_dict(self) -> Dict[str, Any]:
        d = asdict(self)
        d["branch_mask"] = self.branch_mask.to_string()
        return d

    @classmethod
    def from_dict(cls, d: Dict[str, Any]) -> "ModelConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"Unknown model config key(s): {sorted(unknown)}")
        try:
            return cls(**d)
        except TypeError as e:
            raise ConfigError(f"Invalid model config: {e}") from e

    def diff(self, other: "ModelConfig") -> Dict[str, Tuple[Any, Any]]:
        """Fields whose values differ, as ``{name: (self_value, other_value)}``."""
        a, b = self.to_dict(), other.to_dict()
        return {k: (a[k], b[k]) for k in a if a[k] != b[k]}


@dataclass
class EncoderStage:
    blocks: List[MewBlockParams]
    down: Conv2dParams


@dataclass
class DecoderStage:
    up: Conv2dParams
    blocks: List[MewBlockParams]


@dataclass
class MewUNetParams:
    stem: Conv2dParams
    encoder: List[EncoderStage]
    bottleneck: List[MewBlockParams]
    decoder: List[DecoderStage]
    head: Conv2dParams


class MewUNet:
    """
    MEW-UNet with explicit forward/backward.

    Parameters live in ``params`` (a nested dataclass of numpy arrays);
    optimizers update them in place through ``parameters()``.

    Examples
    --------
    >>> model = build(ModelConfig(), make_rng(0))
    >>> tape = Tape()
    >>> logits = model.forward(x, tape)
    >>> grads = model.backward(tape, dlogits)
    """

    def __init__(self, config: ModelConfig, params: MewUNetParams):
        self.config = config
        self.params = params

    def parameters(self) -> Dict[str, np.ndarray]:
        return named_arrays(self.params)

    def parameter_count(self) -> int:
        return int(sum(p.size for p in self.parameters().values()))

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return self.forward(x)

    def _check_input(self, x: np.ndarray) -> None:
        cfg = self.config
        if x.ndim not in (3, 4) or x.shape[-3] != cfg.in_channels:
            raise ShapeError(
                f"Expected input [(B,) {cfg.in_channels}, H, W], got shape {x.shape}"
            )
        h, w = x.shape[-2:]
        if h % cfg.spatial_divisor or w % cfg.spatial_divisor:
            raise ShapeError(f"Spatial dims {(h, w)} not divisible by {cfg.spatial_divisor}")
        if cfg.generator_mode == "raw" and (h, w) != (cfg.image_size, cfg.image_size):
            raise ShapeError(
                f"Raw spectral weights are sized for {cfg.image_size}x{cfg.image_size} inputs"
            )

    def _blocks_forward(self, h, blocks, name, tape):
        cfg = self.config
        for j, block in enumerate(blocks):
            h, cache = mewb_forward(h, block, cfg.branch_mask, cfg.activation, cfg.align_corners)
            if tape is not None:
                tape.record(f"{name}.{j}", cache)
        return h

    def _blocks_backward(self, g, blocks, name, tape, grads):
        for j in reversed(range(len(blocks))):
            g, block_grads = mewb_backward(g, blocks[j], tape.pop(f"{name}.{j}"))
            grads.update(prefixed(block_grads, f"{name}.{j}"))
        return g

    def forward(self, x: np.ndarray, tape: Optional[Tape] = None) -> np.ndarray:
        """
        Logits ``[(B,) n_classes, H, W]`` for input ``[(B,) in_channels, H, W]``.

        When ``tape`` is given every intermediate needed by ``backward`` is
        recorded on it.
        """
        self._check_input(x)
        p = self.params
        rec = tape.record if tape is not None else (lambda name, cache: None)

        rec("stem", x)
        h = conv2d(x, p.stem)
        skips = []
        for i, stage in enumerate(p.encoder):
            h = self._blocks_forward(h, stage.blocks, f"encoder.{i}.blocks", tape)
            skips.append(h)
            rec(f"encoder.{i}.down", h)
            h = conv2d(h, stage.down)

        h = self._blocks_forward(h, p.bottleneck, "bottleneck", tape)

        for k, stage in enumerate(p.decoder):
            level = len(skips) - 1 - k
            rec(f"decoder.{k}.upsample", h.shape[-2:])
            up = bilinear_interp(h, skips[level].shape[-2:], self.config.align_corners)
            rec(f"decoder.{k}.up", up)
            h = conv2d(up, stage.up) + skips[level]
            h = self._blocks_forward(h, stage.blocks, f"decoder.{k}.blocks", tape)

        rec("head", h)
        return conv2d(h, p.head)

    def backward(self, tape: Tape, grad: np.ndarray) -> Grads:
        """
        Consume ``tape`` and return gradients for every parameter.

        Parameters not reached (e.g. masked-out branches) get zero
        gradients, so the result always has the keys and shapes of
        ``parameters()``.
        """
        p = self.params
        grads: Grads = {}

        g, head_grads = conv2d_backward(grad, tape.pop("head"), p.head)
        grads.update(prefixed(head_grads, "head"))

        skip_grads = []
        for k in reversed(range(len(p.decoder))):
            stage = p.decoder[k]
            g = self._blocks_backward(g, stage.blocks, f"decoder.{k}.blocks", tape, grads)
            skip_grads.append(g)
            g, up_grads = conv2d_backward(g, tape.pop(f"decoder.{k}.up"), stage.up)
            grads.update(prefixed(up_grads, f"decoder.{k}.up"))
            source = tape.pop(f"decoder.{k}.upsample")
            g = bilinear_interp_backward(g, source, self.config.align_corners)
        # filled shallowest first, so skip_grads[i] belongs to encoder level i

        g = self._blocks_backward(g, p.bottleneck, "bottleneck", tape, grads)

        for i in reversed(range(len(p.encoder))):
            stage = p.encoder[i]
            g, down_grads = conv2d_backward(g, tape.pop(f"encoder.{i}.down"), stage.down)
            grads.update(prefixed(down_grads, f"encoder.{i}.down"))
            g = g + skip_grads[i]
            g = self._blocks_backward(g, stage.blocks, f"encoder.{i}.blocks", tape, grads)

        _, stem_grads = conv2d_backward(g, tape.pop("stem"), p.stem)
        grads.update(prefixed(stem_grads, "stem"))

        params = self.parameters()
        unknown = set(grads) - set(params)
        if unknown:
            raise TapeError(f"Gradients for unknown parameters: {sorted(unknown)[:5]}")
        return {name: grads.get(name, np.zeros_like(value)) for name, value in params.items()}


def build(config: ModelConfig, rng: np.random.Generator) -> MewUNet:
    """
    Initialize a model deterministically from ``rng``.

    Parameters are drawn in a fixed order (stem, encoder, bottleneck,
    decoder, head), so equal seeds give bit-identical parameters.
    """
    config.validate()
    settings = config.settings()
    widths = config.widths
    size = config.image_size

    def blocks(level: int) -> List[MewBlockParams]:
        spatial = (size // 2 ** level, size // 2 ** level)
        return [init_mewb(widths[level], spatial, settings, rng)
                for _ in range(config.stage_depths[level])]

    stem = init_conv2d(config.in_channels, widths[0], 3, rng)
    encoder = []
    for level in range(config.n_stages - 1):
        encoder.append(EncoderStage(
            blocks=blocks(level),
            down=init_conv2d(widths[level], widths[level + 1], 3, rng, stride=2, padding=1),
        ))
    bottleneck = blocks(config.n_stages - 1)
    decoder = []
    for level in reversed(range(config.n_stages - 1)):
        decoder.append(DecoderStage(
            up=init_conv2d(widths[level + 1], widths[level], 1, rng),
            blocks=blocks(level),
        ))
    head = init_conv2d(widths[0], config.n_classes, 1, rng)
    return MewUNet(config, MewUNetParams(stem, encoder, bottleneck, decoder, head))


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------

@dataclass
class Checkpoint:
    """Everything read back from a checkpoint file."""

    model: MewUNet
    seed: Optional[int] = None
    next_epoch: int = 0
    optimizer_meta: Dict[str, Any] = field(default_factory=dict)
    optimizer_arrays: Dict[str, np.ndarray] = field(default_factory=dict)
    metadata: Dict[str, Any] = field(default_factory=dict)


def save_checkpoint(path: Union[str, Path], model: MewUNet, seed: Optional[int] = None,
                    next_epoch: int = 0, optimizer_meta: Optional[Dict[str, Any]] = None,
                    optimizer_arrays: Optional[Dict[str, np.ndarray]] = None,
                    metadata: Optional[Dict[str, Any]] = None) -> Path:
    """
    Write model parameters (and optional optimizer state) to a container.

    Parameter records are named ``param.<name>``, optimizer arrays
    ``opt.<name>``; the manifest echoes the model config and the
    name -> shape table.
    """
    params = model.parameters()
    records = {f"param.{name}": value for name, value in params.items()}
    for name, value in (optimizer_arrays or {}).items():
        records[f"opt.{name}"] = value
    manifest = {
        "format": CHECKPOINT_FORMAT,
        "config": model.config.to_dict(),
        "params": {name: list(value.shape) for name, value in params.items()},
        "seed": seed,
        "next_epoch": int(next_epoch),
        "optimizer": optimizer_meta or {},
        "metadata": metadata or {},
    }
    return write_container(path, records, manifest)


def load_checkpoint(path: Union[str, Path],
                    expected_config: Optional[ModelConfig] = None) -> Checkpoint:
    """
    Read a checkpoint written by ``save_checkpoint``.

    Raises
    ------
    CheckpointError
        If the file is corrupt, the manifest does not match the records, or
        ``expected_config`` differs from the stored config (the message
        lists the differing fields).
    """
    try:
        records, manifest = read_container(path)
    except ContainerError as e:
        raise CheckpointError(f"Cannot read checkpoint {path}: {e}") from e
    if manifest.get("format") != CHECKPOINT_FORMAT:
        raise CheckpointError(f"{path} is not a model checkpoint")

    try:
        config = ModelConfig.from_dict(manifest["config"])
    except (KeyError, ConfigError) as e:
        raise CheckpointError(f"Checkpoint config is invalid: {e}") from e
    if expected_config is not None:
        diff = expected_config.diff(config)
        if diff:
            lines = ", ".join(f"{k}: expected {a!r}, found {b!r}" for k, (a, b) in diff.items())
            raise CheckpointError(f"Checkpoint config mismatch ({lines})")

    model = build(config, make_rng(0))
    params = model.parameters()
    shapes = manifest.get("params", {})
    if set(shapes) != set(params):
        raise CheckpointError("Checkpoint parameter names do not match the model")
    for name, target in params.items():
        value = records.get(f"param.{name}")
        if value is None:
            raise CheckpointError(f"Missing parameter record {name!r}")
        if list(value.shape) != list(shapes[name]) or value.shape != target.shape:
            raise CheckpointError(
                f"Parameter {name!r} has shape {value.shape}, expected {target.shape}"
            )
    for name, target in params.items():
        target[...] = records[f"param.{name}"]

    return Checkpoint(
        model=model,
        seed=manifest.get("seed"),
        next_epoch=int(manifest.get("next_epoch", 0)),
        optimizer_meta=manifest.get("optimizer", {}),
        optimizer_arrays={k[len("opt."):]: v for k, v in records.items() if k.startswith("opt.")},
        metadata=manifest.get("metadata", {}),
    )
