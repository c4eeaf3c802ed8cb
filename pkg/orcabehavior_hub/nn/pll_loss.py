"""
Функция потерь для частичных меток.

Для каждого экземпляра берётся взвешенная сумма кросс-энтропий по меткам-
кандидатам; вес кандидата равен вероятности модели, перенормированной внутри
множества кандидатов. Метки вне множества вклада не дают. Результат
усредняется по батчу. Режим весов:
  frozen — веса пересчитываются на каждом шаге, но градиент через них не идёт;
  full   — градиент проходит и через веса.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Literal, Sequence

import numpy as np

from orcabehavior_hub.core.behaviors import N_BEHAVIORS, CandidateLabelSet, label_masks
from orcabehavior_hub.core.exceptions import InvalidArgumentError, ShapeMismatchError
from orcabehavior_hub.nn.tensor import Tensor

WeightsMode = Literal["frozen", "full"]
WEIGHTS_MODES = ("frozen", "full")

# логит-сдвиг для меток вне множества кандидатов (exp даёт ровно 0)
_MASKED_OFFSET = -1e30


def softmax(logits) -> np.ndarray:
    """Softmax по последней оси со сдвигом на максимум."""
    f = np.asarray(logits.data if isinstance(logits, Tensor) else logits, dtype=np.float64)  # noqa: E501
    z = f - f.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def masked_posterior(g, label_set: CandidateLabelSet) -> np.ndarray:
    """Вероятности кандидатов как есть, остальные обнулены."""
    return np.asarray(g, dtype=np.float64) * label_set.as_array()


def _checked_masks(label_sets: Sequence[CandidateLabelSet | int], batch: int) -> np.ndarray:  # noqa: E501
    masks = label_masks(label_sets)
    if masks.shape[0] != batch:
        raise ShapeMismatchError((batch,), (masks.shape[0],))
    empty = np.flatnonzero(masks.sum(axis=1) == 0)
    if empty.size:
        raise InvalidArgumentError(
            f"пустое множество меток у экземпляра #{int(empty[0])}"
        )
    return masks


def _mask_offsets(masks: np.ndarray, dtype) -> np.ndarray:
    return np.where(masks > 0, 0.0, _MASKED_OFFSET).astype(dtype)


def candidate_weights(logits, label_sets: Sequence[CandidateLabelSet | int]) -> np.ndarray:  # noqa: E501
    """
    Вероятность кандидата, делённая на сумму вероятностей всех кандидатов;
    для меток вне множества 0.
    Эквивалентно softmax, ограниченному множеством кандидатов.
    """
    f = np.asarray(logits.data if isinstance(logits, Tensor) else logits, dtype=np.float64)  # noqa: E501
    if f.ndim != 2 or f.shape[1] != N_BEHAVIORS:
        raise ShapeMismatchError(("B", N_BEHAVIORS), f.shape)
    masks = _checked_masks(label_sets, f.shape[0])
    return softmax(f + _mask_offsets(masks, np.float64)) * masks


@dataclass(frozen=True)
class PLLBatch:
    logits: Tensor
    label_sets: tuple[CandidateLabelSet | int, ...]

    def __post_init__(self) -> None:
        if self.logits.ndim != 2 or self.logits.shape[1] != N_BEHAVIORS:
            raise ShapeMismatchError(("B", N_BEHAVIORS), self.logits.shape)
        object.__setattr__(self, "label_sets", tuple(self.label_sets))
        _checked_masks(self.label_sets, self.logits.shape[0])

    @property
    def masks(self) -> np.ndarray:
        return label_masks(self.label_sets)

    def __len__(self) -> int:
        return self.logits.shape[0]


def pll_loss(batch: PLLBatch, weights_mode: WeightsMode = "frozen") -> Tensor:
    """Скалярный Tensor: среднее значение потерь по батчу."""
    if weights_mode not in WEIGHTS_MODES:
        raise InvalidArgumentError(
            f"weights_mode должен быть одним из {WEIGHTS_MODES}, получено {weights_mode!r}"  # noqa: E501
        )
    logits = batch.logits
    n = len(batch)
    log_g = logits.log_softmax(axis=1)
    if weights_mode == "frozen":
        w = Tensor(candidate_weights(logits, batch.label_sets).astype(logits.dtype))
    else:
        masks = batch.masks
        restricted = (logits + _mask_offsets(masks, logits.dtype)).log_softmax(axis=1)
        w = restricted.exp() * masks.astype(logits.dtype)
    return (w * log_g).sum() * (-1.0 / n)
