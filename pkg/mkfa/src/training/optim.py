"""Adam / AdamW and the warmup-cosine learning-rate schedule"""
import logging
import math
from dataclasses import dataclass, field
from typing import Dict, Sequence

import numpy as np

from ..tensor.core import Parameter
from ..utils.errors import ConfigError, NonFiniteError

log = logging.getLogger(__name__)

OPTIMIZERS = ('adam', 'adamw')


@dataclass
class OptimizerState:
    kind: str
    lr: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.0
    step: int = 0
    m: Dict[str, np.ndarray] = field(default_factory=dict)
    v: Dict[str, np.ndarray] = field(default_factory=dict)

    def meta(self) -> dict:
        return {
            'kind': self.kind, 'lr': self.lr, 'beta1': self.beta1, 'beta2': self.beta2,
            'eps': self.eps, 'weight_decay': self.weight_decay, 'step': self.step,
        }


def make_optimizer(
    kind: str,
    params: Sequence[Parameter],
    lr: float,
    weight_decay: float = 0.0,
    betas=(0.9, 0.999),
    eps: float = 1e-8,
) -> OptimizerState:
    if kind not in OPTIMIZERS:
        raise ConfigError(f"unknown optimizer '{kind}', expected one of {OPTIMIZERS}")
    if lr < 0:
        raise ConfigError(f"learning rate must be non-negative, got {lr}")
    if not (0.0 <= betas[0] < 1.0 and 0.0 <= betas[1] < 1.0):
        raise ConfigError(f"invalid betas {betas}")
    if kind == 'adam' and weight_decay:
        log.warning(f"⚠️ weight_decay={weight_decay} ignored by plain adam")
        weight_decay = 0.0
    return OptimizerState(
        kind=kind, lr=lr, beta1=betas[0], beta2=betas[1], eps=eps, weight_decay=weight_decay,
        m={p.name: np.zeros_like(p.data) for p in params},
        v={p.name: np.zeros_like(p.data) for p in params},
    )


def optimizer_step(state: OptimizerState, params: Sequence[Parameter], lr: float = None) -> None:
    """
    One Adam(W) update over `params`, then zero their grads

    AdamW scales each parameter by (1 − lr·wd) before the Adam delta. eps enters
    the denominator scaled by √(1 − β2^t), so the first step is −lr·g/(|g| + eps·√(1 − β2)).
    """
    lr = state.lr if lr is None else lr
    for p in params:
        if not np.isfinite(p.grad).all():
            raise NonFiniteError(f"non-finite gradient in parameter '{p.name}' at step {state.step + 1}")

    state.step += 1
    t = state.step
    b1, b2 = state.beta1, state.beta2
    correction1 = 1.0 - b1 ** t
    correction2 = 1.0 - b2 ** t
    root2 = np.sqrt(correction2)

    for p in params:
        if not p.trainable:
            continue
        g = p.grad
        m = state.m[p.name]
        v = state.v[p.name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g

        if state.kind == 'adamw' and state.weight_decay:
            p.data *= 1.0 - lr * state.weight_decay
        p.data -= lr * (m / correction1) / (np.sqrt(v / correction2) + state.eps * root2)
        p.zero_grad()


@dataclass(frozen=True)
class LrSchedule:
    """Linear warmup from 0 to base_lr, then cosine from base_lr to min_lr at total_steps"""
    base_lr: float
    min_lr: float
    warmup_steps: int
    total_steps: int

    def __call__(self, step: int) -> float:
        if step < 0:
            raise ValueError(f"step must be non-negative, got {step}")
        if self.warmup_steps > 0 and step <= self.warmup_steps:
            return self.base_lr * (step / self.warmup_steps)
        span = self.total_steps - self.warmup_steps
        if span <= 0:
            return self.base_lr
        progress = min(1.0, (step - self.warmup_steps) / span)
        return self.min_lr + 0.5 * (self.base_lr - self.min_lr) * (1.0 + math.cos(math.pi * progress))


def lr_schedule(schedule: LrSchedule, step: int) -> float:
    return schedule(step)
