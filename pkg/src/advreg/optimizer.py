"""Adam / SGD over flat parameter vectors, and epoch schedules."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import InvalidArgumentError, NumericalAbort


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: Optional[np.ndarray] = None
    v: Optional[np.ndarray] = None

    def __post_init__(self):
        if not (0.0 <= self.beta1 < 1.0 and 0.0 <= self.beta2 < 1.0):
            raise InvalidArgumentError("betas must lie in [0, 1)")
        if not self.eps > 0:
            raise InvalidArgumentError("eps must be positive")


def adam_step(state, params, grads):
    """One bias-corrected Adam update. Mutates ``state``; returns ``(params, state)``."""
    params = np.asarray(params, dtype=np.float64)
    grads = np.asarray(grads, dtype=np.float64)
    if params.shape != grads.shape:
        raise InvalidArgumentError(f"shape mismatch: params {params.shape}, grads {grads.shape}")
    if not np.all(np.isfinite(grads)):
        raise NumericalAbort("non-finite gradient passed to adam_step")
    if state.m is None:
        state.m = np.zeros_like(params)
        state.v = np.zeros_like(params)
    elif state.m.shape != params.shape:
        raise InvalidArgumentError("optimizer state does not match parameter shape")
    state.step += 1
    state.m = state.beta1 * state.m + (1.0 - state.beta1) * grads
    state.v = state.beta2 * state.v + (1.0 - state.beta2) * grads * grads
    m_hat = state.m / (1.0 - state.beta1 ** state.step)
    v_hat = state.v / (1.0 - state.beta2 ** state.step)
    return params - state.lr * m_hat / (np.sqrt(v_hat) + state.eps), state


def sgd_step(lr, params, grads):
    grads = np.asarray(grads, dtype=np.float64)
    if not np.all(np.isfinite(grads)):
        raise NumericalAbort("non-finite gradient passed to sgd_step")
    return np.asarray(params, dtype=np.float64) - lr * grads


@dataclass(frozen=True)
class Schedule:
    """Per-epoch value: constant, ``base * rate**epoch`` or ``base * rate**(epoch // interval)``.

    A rate above 1 grows the value, which is how batch-size growth is
    expressed.
    """

    kind: str = "constant"
    base: float = 1e-3
    rate: float = 1.0
    interval: int = 1

    KINDS = ("constant", "exponential_decay", "step_decay")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise InvalidArgumentError(f"unknown schedule kind {self.kind!r}")
        if not self.base > 0:
            raise InvalidArgumentError("schedule base must be positive")
        if not self.rate > 0:
            raise InvalidArgumentError("schedule rate must be positive")
        if self.interval < 1:
            raise InvalidArgumentError("schedule interval must be >= 1")

    @classmethod
    def parse(cls, value):
        """Build from a number, a dict, or a ``"kind:base:rate[:interval]"`` string."""
        if isinstance(value, Schedule):
            return value
        if isinstance(value, (int, float)):
            return cls("constant", float(value))
        if isinstance(value, dict):
            return cls(**value)
        if isinstance(value, str):
            parts = value.split(":")
            if len(parts) == 1:
                return cls("constant", float(parts[0]))
            kind, base = parts[0], float(parts[1])
            rate = float(parts[2]) if len(parts) > 2 else 1.0
            interval = int(parts[3]) if len(parts) > 3 else 1
            return cls(kind, base, rate, interval)
        raise InvalidArgumentError(f"cannot build a schedule from {value!r}")

    def to_dict(self):
        return {"kind": self.kind, "base": self.base, "rate": self.rate, "interval": self.interval}


def schedule_value(s, epoch):
    if epoch < 0:
        raise InvalidArgumentError("epoch must be >= 0")
    if s.kind == "constant":
        return s.base
    if s.kind == "exponential_decay":
        return s.base * s.rate ** epoch
    return s.base * s.rate ** (epoch // s.interval)


def schedule_count(s, epoch):
    """Integer-valued schedule (batch sizes): rounded, never below 1."""
    return max(1, int(math.floor(schedule_value(s, epoch) + 0.5)))
