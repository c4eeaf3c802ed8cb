from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, Iterable, Union

import numpy as np

from orcabehavior_hub.core.exceptions import InvalidArgumentError, MissingGradError
from orcabehavior_hub.nn.layers import Module
from orcabehavior_hub.nn.tensor import Tensor

ParamSource = Union[Module, Iterable[tuple[str, Tensor]], Iterable[Tensor]]


@dataclass
class AdamState:
    """Моменты по имени параметра, счётчик шагов и гиперпараметры Adam."""

    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: Dict[str, np.ndarray] = field(default_factory=dict)
    v: Dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not (0.0 <= self.beta1 < 1.0 and 0.0 <= self.beta2 < 1.0):
            raise InvalidArgumentError("beta1 и beta2 должны быть в [0, 1)")
        if not self.eps > 0:
            raise InvalidArgumentError("eps должен быть > 0")


@dataclass(frozen=True)
class LrSchedule:
    base_lr: float = 2e-4
    decay_factor: float = 10.0
    decay_every_epochs: int = 10

    def __post_init__(self) -> None:
        if not self.base_lr > 0:
            raise InvalidArgumentError(f"base_lr должен быть > 0, получено {self.base_lr}")  # noqa: E501
        if not self.decay_factor > 1:
            raise InvalidArgumentError(
                f"decay_factor должен быть > 1, получено {self.decay_factor}"
            )
        if int(self.decay_every_epochs) < 1:
            raise InvalidArgumentError("decay_every_epochs должен быть >= 1")


def lr_at(schedule: LrSchedule, epoch: int) -> float:
    """base_lr / decay_factor ** floor(epoch / decay_every_epochs)."""
    if int(epoch) < 0:
        raise InvalidArgumentError(f"epoch должен быть >= 0, получено {epoch}")
    steps = int(epoch) // int(schedule.decay_every_epochs)
    return float(schedule.base_lr / schedule.decay_factor ** steps)


def _named(params: ParamSource) -> list[tuple[str, Tensor]]:
    if isinstance(params, Module):
        return list(params.named_parameters())
    out: list[tuple[str, Tensor]] = []
    for i, item in enumerate(params):
        if isinstance(item, Tensor):
            out.append((item.name or f"param{i}", item))
        else:
            name, tensor = item
            out.append((str(name), tensor))
    return out


def adam_step(params: ParamSource, state: AdamState, lr: float) -> None:
    """
    Один шаг Adam с коррекцией смещения моментов (in-place по .data).
    Все градиенты проверяются до изменения параметров.
    """
    named = _named(params)
    for name, p in named:
        if p.grad is None:
            raise MissingGradError(name)

    state.step += 1
    t = state.step
    bc1 = 1.0 - state.beta1 ** t
    bc2 = 1.0 - state.beta2 ** t
    for name, p in named:
        g = p.grad.astype(np.float64)
        if name not in state.m:
            state.m[name] = np.zeros(p.shape, dtype=np.float64)
            state.v[name] = np.zeros(p.shape, dtype=np.float64)
        m, v = state.m[name], state.v[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        update = lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)
        p.data -= update.astype(p.data.dtype)
