"""AdamW with decoupled weight decay plus a linear warmup/decay schedule."""

from dataclasses import dataclass, field

import numpy as np

from .autodiff import Tensor
from .errors import ContractViolation


@dataclass
class LrSchedule:
    """Linear ramp 0 -> peak over warmup_steps, then linear decay to 0."""

    peak_lr: float
    warmup_steps: int
    total_steps: int

    def __post_init__(self):
        if self.warmup_steps > self.total_steps:
            raise ContractViolation(
                f"warmup_steps {self.warmup_steps} exceeds total_steps {self.total_steps}"
            )
        if self.total_steps <= 0:
            raise ContractViolation("total_steps must be positive")


def lr_at(schedule: LrSchedule, step: int) -> float:
    """Learning rate at an integer step; clamped to 0 past the schedule end."""
    if step < 0:
        raise ContractViolation("step must be non-negative")
    if step > schedule.total_steps:
        return 0.0
    if step < schedule.warmup_steps:
        return schedule.peak_lr * step / schedule.warmup_steps
    span = schedule.total_steps - schedule.warmup_steps
    if span == 0:
        return schedule.peak_lr if step == schedule.warmup_steps else 0.0
    return schedule.peak_lr * (schedule.total_steps - step) / span


@dataclass
class AdamW:
    """Decoupled weight decay Adam over a named parameter dict.

    The learning rate is passed per step so a schedule can drive it; the
    remaining constants default to the usual values and can be overridden.
    Gradients are left untouched, the caller zeroes them.
    """

    params: dict[str, Tensor]
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.01
    step_count: int = 0
    _m: dict[str, np.ndarray] = field(default_factory=dict, repr=False)
    _v: dict[str, np.ndarray] = field(default_factory=dict, repr=False)

    def __post_init__(self):
        for name, p in self.params.items():
            self._m.setdefault(name, np.zeros_like(p.data))
            self._v.setdefault(name, np.zeros_like(p.data))

    def step(self, lr: float) -> None:
        self.step_count += 1
        t = self.step_count
        bc1 = 1.0 - self.beta1 ** t
        bc2 = 1.0 - self.beta2 ** t
        for name, p in self.params.items():
            if p.grad is None:
                raise ContractViolation(f"parameter '{name}' has no gradient")
            g = p.grad
            m = self._m[name]
            v = self._v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            mhat = m / bc1
            vhat = v / bc2
            p.data -= lr * (mhat / (np.sqrt(vhat) + self.eps) + self.weight_decay * p.data)

    def state(self) -> dict:
        """Snapshot for checkpointing: moments and step counter."""
        return {"m": dict(self._m), "v": dict(self._v), "step_count": self.step_count}

    def load_state(self, state: dict) -> None:
        for name in self.params:
            self._m[name] = np.array(state["m"][name], copy=True)
            self._v[name] = np.array(state["v"][name], copy=True)
        self.step_count = int(state["step_count"])


def steps_per_epoch(n_examples: int, batch_size: int) -> int:
    """Number of optimizer steps one pass over the data takes."""
    if batch_size <= 0:
        raise ContractViolation("batch_size must be positive")
    return max(1, -(-n_examples // batch_size))
