from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from orcabehavior_hub.core.behaviors import (
    N_BEHAVIORS,
    Behavior,
    CandidateLabelSet,
    label_masks,
)
from orcabehavior_hub.core.exceptions import InvalidArgumentError, ShapeMismatchError
from orcabehavior_hub.core.utils import ensure_parent_dir
from orcabehavior_hub.nn.pll_loss import softmax
from orcabehavior_hub.nn.tensor import Tensor

METRICS_HEADER = ("rep", "epoch", "train_loss", "test_loss", "test_acc")
BASELINE_KEYS = ("uniform_random",) + tuple(f"always_{b.name}" for b in Behavior)


def _logits_array(logits) -> np.ndarray:
    f = np.asarray(logits.data if isinstance(logits, Tensor) else logits, dtype=np.float64)  # noqa: E501
    if f.ndim != 2 or f.shape[1] != N_BEHAVIORS:
        raise ShapeMismatchError(("B", N_BEHAVIORS), f.shape)
    return f


def predicted_labels(logits) -> np.ndarray:
    """argmax по головам; при равенстве — наименьший индекс Behavior."""
    return np.argmax(_logits_array(logits), axis=1)


def candidate_set_correct(logits, label_sets: Sequence[CandidateLabelSet | int]) -> np.ndarray:  # noqa: E501
    pred = predicted_labels(logits)
    masks = label_masks(label_sets)
    if masks.shape[0] != pred.shape[0]:
        raise ShapeMismatchError((pred.shape[0],), (masks.shape[0],))
    return masks[np.arange(pred.shape[0]), pred] > 0


def candidate_set_accuracy(logits, label_sets: Sequence[CandidateLabelSet | int]) -> float:  # noqa: E501
    """Доля экземпляров, у которых argmax лежит в множестве кандидатов."""
    correct = candidate_set_correct(logits, label_sets)
    return float(correct.mean()) if correct.size else 0.0


def true_label_accuracy(logits, true_labels: Sequence[Behavior | int]) -> float:
    pred = predicted_labels(logits)
    truth = np.asarray([int(t) for t in true_labels])
    if truth.shape != pred.shape:
        raise ShapeMismatchError(pred.shape, truth.shape)
    return float((pred == truth).mean()) if truth.size else 0.0


# ---------- аналитические базовые линии ----------

def baseline_accuracies(counts: Mapping[CandidateLabelSet, int]) -> dict[str, float]:
    """
    Точность «угадывающих» стратегий (доли):
      always_b       = сумма count по комбинациям, содержащим b / total
      uniform_random = сумма count * |Y| / 4 / total
    """
    total = 0
    uniform = 0.0
    always = {b: 0 for b in Behavior}
    for label_set, n in counts.items():
        n = int(n)
        if n < 0:
            raise InvalidArgumentError(f"отрицательное число у {label_set}: {n}")
        total += n
        uniform += n * len(label_set) / N_BEHAVIORS
        for b in label_set:
            always[b] += n
    if total == 0:
        raise InvalidArgumentError("сумма счётчиков равна нулю")
    out = {"uniform_random": uniform / total}
    for b in Behavior:
        out[f"always_{b.name}"] = always[b] / total
    return out


def most_prevalent_baseline(counts: Mapping[CandidateLabelSet, int]) -> tuple[str, float]:  # noqa: E501
    """Лучшая из стратегий always_b (при равенстве — меньший индекс)."""
    table = baseline_accuracies(counts)
    best = max((f"always_{b.name}" for b in Behavior), key=lambda k: table[k])
    return best, table[best]


def percentile(values: Iterable[float], q: float) -> float:
    """Перцентиль с линейной интерполяцией между порядковыми статистиками."""
    arr = np.asarray(list(values), dtype=np.float64)
    if arr.size == 0:
        raise InvalidArgumentError("перцентиль от пустого набора")
    return float(np.percentile(arr, q, method="linear"))


# ---------- метрики прогонов ----------

@dataclass(frozen=True)
class EpochMetrics:
    """Точности в процентах; epoch 0 — оценка до обучения."""

    epoch: int
    train_loss: float
    test_loss: float
    test_accuracy: float
    true_accuracy: float | None = None

    def __post_init__(self) -> None:
        if not (0.0 <= self.test_accuracy <= 100.0):
            raise InvalidArgumentError(f"точность вне [0, 100]: {self.test_accuracy}")
        if self.train_loss < 0 or self.test_loss < 0:
            raise InvalidArgumentError("потери должны быть >= 0")


@dataclass
class RunMetrics:
    repetition_index: int
    seed: int
    epochs: list[EpochMetrics] = field(default_factory=list)

    @property
    def final(self) -> EpochMetrics:
        return self.epochs[-1]

    def series(self, name: str) -> np.ndarray:
        return np.asarray([getattr(e, name) for e in self.epochs], dtype=np.float64)


@dataclass(frozen=True)
class PredictionReport:
    instance_id: str
    percentages: tuple[float, float, float, float]
    label_set: CandidateLabelSet
    correct: bool

    def __post_init__(self) -> None:
        if len(self.percentages) != N_BEHAVIORS:
            raise ShapeMismatchError((N_BEHAVIORS,), (len(self.percentages),))
        if abs(sum(self.percentages) - 100.0) > 0.1:
            raise InvalidArgumentError(
                f"проценты в отчёте должны давать 100, получено {sum(self.percentages)}"
            )

    @property
    def predicted(self) -> Behavior:
        return Behavior(int(np.argmax(self.percentages)))

    def rows(self) -> list[tuple[str, str]]:
        """Строки в стиле «Class | Prediction»: T 49.5% ..."""
        return [(b.name, f"{p:.1f}%") for b, p in zip(Behavior, self.percentages)]


def report_from_logits(instance_id: str, logits_row, label_set: CandidateLabelSet) -> PredictionReport:  # noqa: E501
    f = np.asarray(logits_row, dtype=np.float64).reshape(1, N_BEHAVIORS)
    pct = 100.0 * softmax(f)[0]
    correct = bool(candidate_set_correct(f, [label_set])[0])
    return PredictionReport(instance_id, tuple(float(p) for p in pct), label_set, correct)  # noqa: E501


# ---------- файлы ----------

def format_metrics_rows(runs: Sequence[RunMetrics]) -> list[list[str]]:
    rows = []
    for run in runs:
        for e in run.epochs:
            rows.append([
                str(run.repetition_index),
                str(e.epoch),
                f"{e.train_loss:.6f}",
                f"{e.test_loss:.6f}",
                f"{e.test_accuracy:.4f}",
            ])
    return rows


def write_metrics_csv(path: str, runs: Sequence[RunMetrics]) -> None:
    """`rep,epoch,train_loss,test_loss,test_acc`; фиксированная точность записи."""
    ensure_parent_dir(path)
    with open(path, "w", encoding="utf-8", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(METRICS_HEADER)
        w.writerows(format_metrics_rows(runs))


def write_predictions_csv(path: str, reports: Sequence[PredictionReport]) -> None:
    ensure_parent_dir(path)
    with open(path, "w", encoding="utf-8", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["instance_id", "labels"] + [b.name for b in Behavior]
                   + ["predicted", "correct"])
        for r in reports:
            w.writerow(
                [r.instance_id, r.label_set.letters]
                + [f"{p:.2f}" for p in r.percentages]
                + [r.predicted.name, int(r.correct)]
            )
