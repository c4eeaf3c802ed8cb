from __future__ import annotations

import os

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402

from orcabehavior_hub.core.utils import ensure_parent_dir  # noqa: E402
from orcabehavior_hub.evaluation.harness import CrossValidationResult  # noqa: E402

# фиксированная соль id элементов SVG: одинаковые данные -> одинаковые файлы
matplotlib.rcParams["svg.hashsalt"] = "orca-behavior-pll"

FIGURES = (
    ("train_loss", "train_loss.svg", "Потери на обучении"),
    ("test_loss", "test_loss.svg", "Потери на тесте"),
    ("test_accuracy", "test_accuracy.svg", "Точность на тесте, %"),
)


def plot_training_curves(result: CrossValidationResult, out_dir: str) -> list[str]:
    """
    Три SVG: среднее по повторностям и полоса 5–95 перцентилей.
    Кривые начинаются после первой эпохи обучения, ось эпох подписана с 0.
    """
    if result.n_epochs < 1:
        return []
    paths = []
    for metric, filename, title in FIGURES:
        band = result.band(metric)
        epochs = list(range(result.n_epochs))
        fig, ax = plt.subplots(figsize=(6.0, 4.0))
        ax.plot(epochs, band["mean"][1:], color="tab:blue", label="среднее")
        ax.fill_between(epochs, band["p5"][1:], band["p95"][1:],
                        color="tab:blue", alpha=0.2, label="5–95 перцентиль")
        ax.set_xlabel("эпоха")
        ax.set_ylabel(title)
        ax.set_title(f"{title} ({result.n_reps} повторностей)")
        ax.legend(loc="best")
        ax.grid(True, alpha=0.3)
        path = os.path.join(out_dir, filename)
        ensure_parent_dir(path)
        fig.savefig(path, format="svg", metadata={"Date": None})
        plt.close(fig)
        paths.append(path)
    return paths
