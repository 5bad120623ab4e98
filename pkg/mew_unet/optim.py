"""
Optimizers and the cosine learning-rate schedule.

Optimizers hold references to the parameter arrays (``model.parameters()``)
and update them in place. ``state_dict`` splits their state into a
JSON-friendly dict and a dict of arrays so checkpoints can store both.
"""

from typing import Any, Dict, Optional, Tuple

import numpy as np

from .errors import CheckpointError, ConfigError, ShapeError

OPTIMIZERS = ("adamw", "sgd")


def cosine_annealing_lr(t: float, t_max: float, lr_init: float, eta_min: float = 1e-5) -> float:
    """
    ``eta_min + (lr_init - eta_min) * (1 + cos(pi * t / t_max)) / 2``.

    Raises
    ------
    ValueError
        If ``t`` lies outside ``[0, t_max]``.
    """
    if t_max <= 0:
        raise ValueError(f"t_max must be positive, got {t_max}")
    if t < 0 or t > t_max:
        raise ValueError(f"Step {t} outside [0, {t_max}]")
    return eta_min + (lr_init - eta_min) * (1.0 + np.cos(np.pi * t / t_max)) / 2.0


class Optimizer:
    kind = ""

    def __init__(self, params: Dict[str, np.ndarray], lr: float, weight_decay: float = 0.0):
        if lr <= 0:
            raise ConfigError(f"Learning rate must be > 0, got {lr}")
        if weight_decay < 0:
            raise ConfigError(f"weight_decay must be >= 0, got {weight_decay}")
        self.params = params
        self.lr = lr
        self.weight_decay = weight_decay
        self.step_count = 0

    def _checked(self, grads: Dict[str, np.ndarray]):
        for name, p in self.params.items():
            if name not in grads:
                raise KeyError(f"Missing gradient for parameter {name!r}")
            g = grads[name]
            if g.shape != p.shape:
                raise ShapeError(f"Gradient for {name!r} has shape {g.shape}, expected {p.shape}")
            yield name, p, g

    def step(self, grads: Dict[str, np.ndarray], lr: Optional[float] = None) -> None:
        raise NotImplementedError

    def hyperparameters(self) -> Dict[str, Any]:
        return {"lr": self.lr, "weight_decay": self.weight_decay}

    def _slots(self) -> Dict[str, Dict[str, np.ndarray]]:
        return {}

    def state_dict(self) -> Tuple[Dict[str, Any], Dict[str, np.ndarray]]:
        meta = {"kind": self.kind, "step": self.step_count, **self.hyperparameters()}
        arrays = {f"{slot}.{name}": value
                  for slot, table in self._slots().items() for name, value in table.items()}
        return meta, arrays

    def load_state_dict(self, meta: Dict[str, Any], arrays: Dict[str, np.ndarray]) -> None:
        if meta.get("kind") != self.kind:
            raise CheckpointError(
                f"Optimizer state is for {meta.get('kind')!r}, not {self.kind!r}"
            )
        self.step_count = int(meta.get("step", 0))
        for slot, table in self._slots().items():
            for name, target in self.params.items():
                key = f"{slot}.{name}"
                if key in arrays:
                    if arrays[key].shape != target.shape:
                        raise CheckpointError(f"Optimizer state {key!r} has the wrong shape")
                    table[name] = np.array(arrays[key], dtype=np.float64)
                else:
                    table.pop(name, None)


class AdamW(Optimizer):
    """Adam with decoupled weight decay (``p *= 1 - lr * wd`` before the update)."""

    kind = "adamw"

    def __init__(self, params: Dict[str, np.ndarray], lr: float = 1e-3,
                 weight_decay: float = 1e-2, betas: Tuple[float, float] = (0.9, 0.999),
                 eps: float = 1e-8):
        super().__init__(params, lr, weight_decay)
        self.betas = (float(betas[0]), float(betas[1]))
        self.eps = eps
        self.m = {name: np.zeros_like(p) for name, p in params.items()}
        self.v = {name: np.zeros_like(p) for name, p in params.items()}

    def hyperparameters(self) -> Dict[str, Any]:
        return {**super().hyperparameters(), "betas": list(self.betas), "eps": self.eps}

    def _slots(self):
        return {"m": self.m, "v": self.v}

    def step(self, grads: Dict[str, np.ndarray], lr: Optional[float] = None) -> None:
        lr = self.lr if lr is None else lr
        b1, b2 = self.betas
        self.step_count += 1
        bias1 = 1.0 - b1 ** self.step_count
        bias2 = 1.0 - b2 ** self.step_count
        for name, p, g in self._checked(grads):
            if self.weight_decay:
                p *= 1.0 - lr * self.weight_decay
            m = self.m.setdefault(name, np.zeros_like(p))
            v = self.v.setdefault(name, np.zeros_like(p))
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            p -= lr * (m / bias1) / (np.sqrt(v / bias2) + self.eps)


class SGD(Optimizer):
    """SGD with heavy-ball momentum; weight decay is added to the gradient."""

    kind = "sgd"

    def __init__(self, params: Dict[str, np.ndarray], lr: float = 3e-3,
                 weight_decay: float = 0.0, momentum: float = 0.9):
        super().__init__(params, lr, weight_decay)
        if not 0.0 <= momentum < 1.0:
            raise ConfigError(f"momentum must be in [0, 1), got {momentum}")
        self.momentum = momentum
        self.buffers: Dict[str, np.ndarray] = {}

    def hyperparameters(self) -> Dict[str, Any]:
        return {**super().hyperparameters(), "momentum": self.momentum}

    def _slots(self):
        return {"momentum": self.buffers}

    def step(self, grads: Dict[str, np.ndarray], lr: Optional[float] = None) -> None:
        lr = self.lr if lr is None else lr
        self.step_count += 1
        for name, p, g in self._checked(grads):
            if self.weight_decay:
                g = g + self.weight_decay * p
            buf = self.buffers.get(name)
            if buf is None:
                buf = self.buffers[name] = np.array(g, dtype=np.float64)
            else:
                buf *= self.momentum
                buf += g
            p -= lr * buf


def make_optimizer(kind: str, params: Dict[str, np.ndarray], lr: float,
                   weight_decay: float, momentum: float = 0.9,
                   betas: Tuple[float, float] = (0.9, 0.999), eps: float = 1e-8) -> Optimizer:
    if kind == "adamw":
        return AdamW(params, lr=lr, weight_decay=weight_decay, betas=betas, eps=eps)
    if kind == "sgd":
        return SGD(params, lr=lr, weight_decay=weight_decay, momentum=momentum)
    raise ConfigError(f"Unknown optimizer {kind!r}; expected one of {OPTIMIZERS}")
