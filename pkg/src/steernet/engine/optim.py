"""SGD and Adam with elastic-net regularization and exponential lr decay."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import ConfigError
from .tensor import Parameter

__all__ = ["OptimizerConfig", "Optimizer"]


@dataclass
class OptimizerConfig:
    """Hyperparameters.

    ``l1``/``l2`` map a parameter's penalty group ("conv", "fc") to its
    coefficient; ungrouped parameters (biases, batchnorm affine) are not
    penalized.  The learning rate decays as ``lr * rate^max(0, epoch - start)``
    with epochs counted from 0.
    """

    kind: str = "adam"
    lr: float = 0.015
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    decay_rate: float = 0.8
    decay_start_epoch: int = 15
    l1: dict = field(default_factory=dict)
    l2: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in ("sgd", "adam"):
            raise ConfigError(f"optimizer kind must be sgd or adam, got {self.kind!r}")


class Optimizer:
    """Holds per-parameter moment buffers and applies updates in place."""

    def __init__(self, params: list[Parameter], config: OptimizerConfig):
        self.params = list(params)
        self.config = config
        self.step_count = 0
        self.epoch = 0
        if config.kind == "adam":
            self.m = [np.zeros_like(p.data) for p in self.params]
            self.v = [np.zeros_like(p.data) for p in self.params]
        else:
            self.m = []
            self.v = []

    def set_epoch(self, epoch: int) -> None:
        self.epoch = int(epoch)

    def current_lr(self) -> float:
        c = self.config
        return c.lr * c.decay_rate ** max(0, self.epoch - c.decay_start_epoch)

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None

    def step(self) -> None:
        """One update over all parameters; raises on non-finite gradients."""
        c = self.config
        lr = self.current_lr()
        if c.kind == "adam":
            self.step_count += 1
            bc1 = 1.0 - c.beta1**self.step_count
            bc2 = 1.0 - c.beta2**self.step_count
        for i, p in enumerate(self.params):
            g = p.grad
            if g is None:
                continue
            if not np.all(np.isfinite(g)):
                raise FloatingPointError(
                    f"non-finite gradient for parameter {p.name!r} "
                    f"(step {self.step_count}, epoch {self.epoch})"
                )
            if p.penalty is not None:
                l2 = c.l2.get(p.penalty, 0.0)
                l1 = c.l1.get(p.penalty, 0.0)
                if l2:
                    g = g + l2 * p.data
                if l1:
                    g = g + l1 * np.sign(p.data)
            if c.kind == "sgd":
                p.data -= (lr * g).astype(p.data.dtype, copy=False)
            else:
                self.m[i] = c.beta1 * self.m[i] + (1.0 - c.beta1) * g
                self.v[i] = c.beta2 * self.v[i] + (1.0 - c.beta2) * g * g
                m_hat = self.m[i] / bc1
                v_hat = self.v[i] / bc2
                p.data -= (lr * m_hat / (np.sqrt(v_hat) + c.eps)).astype(
                    p.data.dtype, copy=False
                )

    # checkpoint support -----------------------------------------------------

    def state_tensors(self) -> dict[str, np.ndarray]:
        out: dict[str, np.ndarray] = {}
        for i, p in enumerate(self.params):
            if self.config.kind == "adam":
                out[f"opt/m/{p.name}"] = self.m[i]
                out[f"opt/v/{p.name}"] = self.v[i]
        return out

    def load_state_tensors(self, tensors: dict[str, np.ndarray], step_count: int) -> None:
        self.step_count = int(step_count)
        for i, p in enumerate(self.params):
            if self.config.kind == "adam":
                self.m[i] = tensors[f"opt/m/{p.name}"].astype(p.data.dtype)
                self.v[i] = tensors[f"opt/v/{p.name}"].astype(p.data.dtype)
