"""
Протокол оценки: обучение по эпохам и Monte-Carlo кросс-валидация.

Повторность r: стратифицированное разбиение и инициализация модели
с зерном base_seed + r, перемешивание батчей — epoch_seed(seed, epoch).
Эпоха 0 — оценка необученной модели.
"""
from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Dict, Mapping, Sequence

import numpy as np

from orcabehavior_hub.core.behaviors import Behavior
from orcabehavior_hub.core.exceptions import InvalidArgumentError, ShapeMismatchError
from orcabehavior_hub.core.models import LabeledInstance, SplitPlan
from orcabehavior_hub.dataset.manifest import combination_counts
from orcabehavior_hub.dataset.splits import epoch_seed, make_batches, stratified_split
from orcabehavior_hub.evaluation.metrics import (
    EpochMetrics,
    PredictionReport,
    RunMetrics,
    baseline_accuracies,
    candidate_set_accuracy,
    most_prevalent_baseline,
    percentile,
    report_from_logits,
    true_label_accuracy,
)
from orcabehavior_hub.logging_config import get_logger
from orcabehavior_hub.nn.checkpoint import save_checkpoint
from orcabehavior_hub.nn.layers import ModelConfig, ResNetClassifier, forward
from orcabehavior_hub.nn.optim import AdamState, LrSchedule, adam_step, lr_at
from orcabehavior_hub.nn.pll_loss import WEIGHTS_MODES, PLLBatch, pll_loss
from orcabehavior_hub.nn.tensor import Tensor, no_grad

BAND_LOW, BAND_HIGH = 5.0, 95.0


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 30
    batch_size: int = 10
    schedule: LrSchedule = field(default_factory=LrSchedule)
    weights_mode: str = "frozen"
    eval_batch_size: int = 10
    test_fraction: float = 0.2

    def __post_init__(self) -> None:
        if int(self.epochs) < 0:
            raise InvalidArgumentError("epochs должен быть >= 0")
        if int(self.batch_size) < 1 or int(self.eval_batch_size) < 1:
            raise InvalidArgumentError("размер батча должен быть >= 1")
        if self.weights_mode not in WEIGHTS_MODES:
            raise InvalidArgumentError(
                f"weights_mode должен быть одним из {WEIGHTS_MODES}"
            )
        if not (0.0 < self.test_fraction < 1.0):
            raise InvalidArgumentError("test_fraction должен быть в (0, 1)")

    def to_dict(self) -> Dict[str, Any]:
        return {
            "epochs": int(self.epochs),
            "batch_size": int(self.batch_size),
            "base_lr": float(self.schedule.base_lr),
            "decay_factor": float(self.schedule.decay_factor),
            "decay_every_epochs": int(self.schedule.decay_every_epochs),
            "weights_mode": self.weights_mode,
            "eval_batch_size": int(self.eval_batch_size),
            "test_fraction": float(self.test_fraction),
        }


# ---------- данные -> тензоры ----------

def stack_images(instances: Sequence[LabeledInstance], dtype: str = "float32") -> np.ndarray:  # noqa: E501
    """[B x 1 x H x W], значения изображения / 255 -> [0, 1]."""
    if not instances:
        raise InvalidArgumentError("пустой набор экземпляров")
    shape = instances[0].image.shape
    for inst in instances:
        if inst.image.shape != shape:
            raise ShapeMismatchError(shape, inst.image.shape)
    stacked = np.stack([inst.image.values for inst in instances])[:, None, :, :]
    return (stacked / 255.0).astype(dtype)


def predict_logits(model: ResNetClassifier, x: np.ndarray, batch_size: int) -> np.ndarray:  # noqa: E501
    """Логиты без графа, батчами фиксированного размера в исходном порядке."""
    chunks = []
    with no_grad():
        for i in range(0, x.shape[0], int(batch_size)):
            chunks.append(forward(model, x[i:i + int(batch_size)]).data)
    return np.concatenate(chunks, axis=0)


def _evaluate(model: ResNetClassifier, x: np.ndarray, label_sets, cfg: TrainConfig,
              ) -> tuple[float, np.ndarray]:
    logits = predict_logits(model, x, cfg.eval_batch_size)
    with no_grad():
        loss = pll_loss(PLLBatch(Tensor(logits), label_sets), cfg.weights_mode)
    return float(loss.item()), logits


# ---------- одна повторность ----------

def _fit(instances: Sequence[LabeledInstance], split: SplitPlan,
         model_cfg: ModelConfig, train_cfg: TrainConfig,
         true_labels: Mapping[str, Behavior] | None = None,
         ) -> tuple[RunMetrics, ResNetClassifier]:
    log = get_logger()
    by_id = {inst.instance_id: inst for inst in instances}
    missing = [i for i in (*split.train_ids, *split.test_ids) if i not in by_id]
    if missing:
        raise InvalidArgumentError(f"в разбиении неизвестный instance_id '{missing[0]}'")  # noqa: E501
    if not split.train_ids or not split.test_ids:
        raise InvalidArgumentError("train и test должны быть непустыми")

    train_ids = list(split.train_ids)
    test_ids = list(split.test_ids)
    x_all = stack_images([by_id[i] for i in train_ids + test_ids], model_cfg.dtype)
    row = {iid: k for k, iid in enumerate(train_ids + test_ids)}
    x_train, x_test = x_all[: len(train_ids)], x_all[len(train_ids):]
    sets_train = [by_id[i].label_set for i in train_ids]
    sets_test = [by_id[i].label_set for i in test_ids]
    truth_test = [true_labels[i] for i in test_ids] if true_labels else None

    model = ResNetClassifier(model_cfg)
    state = AdamState()
    metrics = RunMetrics(split.repetition_index, split.seed)

    def record(epoch: int) -> None:
        train_loss, _ = _evaluate(model, x_train, sets_train, train_cfg)
        test_loss, logits = _evaluate(model, x_test, sets_test, train_cfg)
        acc = 100.0 * candidate_set_accuracy(logits, sets_test)
        true_acc = (100.0 * true_label_accuracy(logits, truth_test)
                    if truth_test is not None else None)
        metrics.epochs.append(EpochMetrics(epoch, train_loss, test_loss, acc, true_acc))
        log.info(
            f"CV: rep={split.repetition_index} epoch={epoch} "
            f"train_loss={train_loss:.4f} test_loss={test_loss:.4f} test_acc={acc:.2f}"
        )

    record(0)
    for epoch in range(int(train_cfg.epochs)):
        lr = lr_at(train_cfg.schedule, epoch)
        for batch_ids in make_batches(train_ids, train_cfg.batch_size,
                                      epoch_seed(split.seed, epoch)):
            idx = [row[i] for i in batch_ids]
            logits = forward(model, x_all[idx])
            loss = pll_loss(PLLBatch(logits, [by_id[i].label_set for i in batch_ids]),
                            train_cfg.weights_mode)
            model.zero_grad()
            loss.backward()
            adam_step(model, state, lr)
        record(epoch + 1)
    return metrics, model


def train_one_repetition(instances: Sequence[LabeledInstance], split: SplitPlan,
                         model_cfg: ModelConfig, train_cfg: TrainConfig,
                         true_labels: Mapping[str, Behavior] | None = None,
                         ) -> RunMetrics:
    metrics, _ = _fit(instances, split, model_cfg, train_cfg, true_labels)
    return metrics


@dataclass(frozen=True)
class RepetitionTask:
    instances: tuple[LabeledInstance, ...]
    split: SplitPlan
    model_cfg: ModelConfig
    train_cfg: TrainConfig
    true_labels: Dict[str, Behavior] | None = None
    checkpoint_path: str | None = None


def run_repetition(task: RepetitionTask) -> RunMetrics:
    """Точка входа воркера пула процессов (функция верхнего уровня)."""
    metrics, model = _fit(task.instances, task.split, task.model_cfg,
                          task.train_cfg, task.true_labels)
    if task.checkpoint_path:
        save_checkpoint(
            task.checkpoint_path, model,
            extra={"repetition": task.split.repetition_index,
                   "test_ids": list(task.split.test_ids)},
        )
    return metrics


# ---------- кросс-валидация ----------

@dataclass
class CrossValidationResult:
    runs: list[RunMetrics]
    baselines: dict[str, float]
    best_baseline: tuple[str, float]

    @property
    def n_reps(self) -> int:
        return len(self.runs)

    @property
    def n_epochs(self) -> int:
        return len(self.runs[0].epochs) - 1

    def final_accuracies(self) -> np.ndarray:
        return np.asarray([r.final.test_accuracy for r in self.runs])

    def band(self, name: str) -> Dict[str, np.ndarray]:
        """По эпохам: mean, p5, p95 метрики name по повторностям."""
        grid = np.stack([r.series(name) for r in self.runs])
        return {
            "mean": grid.mean(axis=0),
            "p5": np.percentile(grid, BAND_LOW, axis=0, method="linear"),
            "p95": np.percentile(grid, BAND_HIGH, axis=0, method="linear"),
        }

    def summary(self) -> Dict[str, Any]:
        finals = self.final_accuracies()
        name, value = self.best_baseline
        out: Dict[str, Any] = {
            "n_reps": self.n_reps,
            "epochs": self.n_epochs,
            "mean_accuracy": float(finals.mean()),
            "p5_accuracy": percentile(finals, BAND_LOW),
            "p95_accuracy": percentile(finals, BAND_HIGH),
            "mean_final_train_loss": float(np.mean([r.final.train_loss for r in self.runs])),  # noqa: E501
            "mean_final_test_loss": float(np.mean([r.final.test_loss for r in self.runs])),  # noqa: E501
            "best_baseline": name,
            "best_baseline_accuracy": 100.0 * value,
            "exceeds_baseline": bool(finals.mean() > 100.0 * value),
        }
        trues = [r.final.true_accuracy for r in self.runs]
        if all(t is not None for t in trues):
            out["mean_true_accuracy"] = float(np.mean(trues))
        return out

    def to_dict(self) -> Dict[str, Any]:
        per_epoch = {}
        for name in ("train_loss", "test_loss", "test_accuracy"):
            b = self.band(name)
            per_epoch[name] = {k: [round(float(x), 6) for x in v] for k, v in b.items()}
        return {
            "summary": self.summary(),
            "baselines": {k: 100.0 * v for k, v in self.baselines.items()},
            "per_epoch": per_epoch,
            "final_accuracies": [float(a) for a in self.final_accuracies()],
        }


def repetition_plans(instances: Sequence[LabeledInstance], n_reps: int,
                     base_seed: int, test_fraction: float) -> list[SplitPlan]:
    return [
        stratified_split(instances, test_fraction, base_seed + r, r)
        for r in range(int(n_reps))
    ]


def cross_validate(instances: Sequence[LabeledInstance], n_reps: int, base_seed: int,
                   model_cfg: ModelConfig, train_cfg: TrainConfig,
                   true_labels: Mapping[str, Behavior] | None = None,
                   jobs: int = 1, checkpoint_dir: str | None = None,
                   ) -> CrossValidationResult:
    """
    n_reps независимых стратифицированных разбиений; при jobs > 1 повторности
    идут в пуле процессов, результаты собираются в порядке повторностей.
    """
    if int(n_reps) < 1:
        raise InvalidArgumentError(f"n_reps должен быть >= 1, получено {n_reps}")
    instances = tuple(instances)
    truth = dict(true_labels) if true_labels else None
    tasks = [
        RepetitionTask(
            instances=instances,
            split=plan,
            model_cfg=model_cfg.with_seed(plan.seed),
            train_cfg=train_cfg,
            true_labels=truth,
            checkpoint_path=(
                os.path.join(checkpoint_dir, f"rep{plan.repetition_index:02d}.ckpt")
                if checkpoint_dir else None
            ),
        )
        for plan in repetition_plans(instances, n_reps, base_seed, train_cfg.test_fraction)  # noqa: E501
    ]
    workers = max(1, min(int(jobs), len(tasks)))
    if workers == 1:
        runs = [run_repetition(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            runs = list(ex.map(run_repetition, tasks))

    counts = combination_counts(inst.label_set for inst in instances)
    return CrossValidationResult(
        runs=runs,
        baselines=baseline_accuracies(counts),
        best_baseline=most_prevalent_baseline(counts),
    )


def predict_report(model: ResNetClassifier, instance: LabeledInstance) -> PredictionReport:  # noqa: E501
    x = stack_images([instance], model.config.dtype)
    logits = predict_logits(model, x, 1)[0]
    return report_from_logits(instance.instance_id, logits, instance.label_set)
