from __future__ import annotations

import argparse
import sys
from typing import List, Sequence

from prettytable import PrettyTable

from orcabehavior_hub.cli.run_config import RunConfig, build_run_config
from orcabehavior_hub.core import usecases as uc
from orcabehavior_hub.core.exceptions import (
    AudioFormatError,
    InvalidArgumentError,
    SourceProcessingError,
    UnsupportedEncodingError,
    ValidationError,
)
from orcabehavior_hub.dataset.synthetic import PROFILES
from orcabehavior_hub.evaluation.metrics import BASELINE_KEYS, PredictionReport
from orcabehavior_hub.infra.settings import SettingsLoader
from orcabehavior_hub.nn.pll_loss import WEIGHTS_MODES

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_IO = 2
EXIT_INTERNAL = 3

_VALIDATION_ERRORS = (
    ValidationError,
    InvalidArgumentError,
    AudioFormatError,
    UnsupportedEncodingError,
)


class _Parser(argparse.ArgumentParser):
    """Ошибки разбора флагов -> InvalidArgumentError (код 1), а не SystemExit(2)."""

    def error(self, message: str):
        raise InvalidArgumentError(f"{self.prog}: {message}")


def exit_code_for(error: BaseException) -> int:
    cause = error.cause if isinstance(error, SourceProcessingError) else error
    if isinstance(cause, _VALIDATION_ERRORS):
        return EXIT_VALIDATION
    if isinstance(cause, OSError):
        return EXIT_IO
    return EXIT_INTERNAL


# ---------- parser ----------

def build_parser() -> argparse.ArgumentParser:
    s = SettingsLoader()
    d = s.train_defaults()
    parser = _Parser(
        prog="project",
        description="Поведение косаток по спектрограммам: обучение с частичными "
                    "метками (T/F/S/M) и оценка кросс-валидацией.",
    )
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")

    # segment
    p = sub.add_parser("segment", help="нарезать записи на сегменты по энергии")
    p.add_argument("paths", nargs="+", help="WAV-файлы записей")
    p.add_argument("--out", required=True, help="каталог для CSV интервалов и WAV")
    p.add_argument("--no-segments", action="store_true",
                   help="писать только CSV интервалов, без WAV сегментов")
    p.add_argument("--encoding", default="pcm16", choices=("pcm16", "float32"),
                   help="кодировка WAV сегментов (по умолчанию pcm16)")

    # preprocess
    p = sub.add_parser("preprocess", help="манифест -> кэш спектрограмм")
    p.add_argument("--manifest", required=True,
                   help="CSV source_id,path,labels[,spans]")
    p.add_argument("--cache-dir", default=None,
                   help=f"каталог кэша (по умолчанию {s.cache_dir()}; "
                        f"переменная ORCA_PLL_CACHE_DIR)")
    p.add_argument("--pgm", action="store_true",
                   help="дополнительно сохранить PGM-превью каждого сегмента")

    # synth
    p = sub.add_parser("synth", help="синтетический корпус WAV + манифест")
    p.add_argument("--out", required=True, help="каталог корпуса")
    _add_synthetic_flags(p, d["seed"])
    p.add_argument("--encoding", default="pcm16", choices=("pcm16", "float32"),
                   help="кодировка WAV (по умолчанию pcm16)")

    # train
    p = sub.add_parser("train", help="обучение и оценка (кросс-валидация)")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--synthetic", action="store_true",
                     help="сгенерировать синтетический корпус в памяти")
    src.add_argument("--cache-dir", default=None,
                     help="кэш экземпляров после preprocess")
    p.add_argument("--truth", default=None,
                   help="CSV source_id,true_label (только для оценки)")
    _add_synthetic_flags(p, d["seed"])
    p.add_argument("--epochs", type=int, default=None,
                   help=f"число эпох (по умолчанию {d['epochs']}; "
                        f"график обучения показывает 30 эпох)")
    p.add_argument("--reps", type=int, default=None,
                   help=f"повторности кросс-валидации (по умолчанию {d['n_reps']}: "
                        f"20 повторностей)")
    p.add_argument("--batch-size", type=int, default=None,
                   help=f"размер мини-батча (по умолчанию {d['batch_size']}: "
                        f"мини-батчи по 10 экземпляров)")
    p.add_argument("--lr", type=float, default=None,
                   help=f"начальный шаг Adam (по умолчанию {d['base_lr']:g}; "
                        f"делится на {d['decay_factor']:g} каждые "
                        f"{d['decay_every_epochs']} эпох)")
    p.add_argument("--jobs", type=int, default=None,
                   help=f"процессов для повторностей (по умолчанию {d['jobs']})")
    p.add_argument("--weights-mode", default="frozen", choices=WEIGHTS_MODES,
                   help="веса кандидатов: frozen (константы) или full "
                        "(градиент и через веса); по умолчанию frozen")
    p.add_argument("--out", default=None,
                   help=f"каталог результатов (по умолчанию {s.output_dir()})")
    p.add_argument("--save-checkpoints", action="store_true",
                   help="сохранить веса каждой повторности в <out>/checkpoints")
    p.add_argument("--resnet34", action="store_true",
                   help="полная конфигурация ResNet-34 (медленно на CPU)")
    p.add_argument("--replicate-channels", action="store_true",
                   help="повторить серый канал до трёх, как у RGB-входа")

    # baseline
    p = sub.add_parser("baseline", help="точность угадывающих стратегий")
    grp = p.add_mutually_exclusive_group()
    grp.add_argument("--manifest", default=None, help="манифест корпуса")
    grp.add_argument("--counts", default=None, help="CSV labels,count")

    # report
    p = sub.add_parser("report", help="проценты по классам для экземпляров")
    p.add_argument("--checkpoint", required=True, help="файл весов (.ckpt)")
    p.add_argument("--cache-dir", default=None,
                   help=f"кэш экземпляров (по умолчанию {s.cache_dir()})")
    p.add_argument("--instance", action="append", default=None,
                   help="instance_id (можно несколько раз)")
    p.add_argument("--test-only", action="store_true",
                   help="только тестовые экземпляры повторности из чекпоинта")
    p.add_argument("--out", default=None, help="CSV с отчётами")
    return parser


def _add_synthetic_flags(p: argparse.ArgumentParser, seed: int) -> None:
    p.add_argument("--n-per-class", type=int, default=50,
                   help="клипов на класс (по умолчанию 50)")
    p.add_argument("--duration", type=float, default=1.0,
                   help="длительность клипа, с (по умолчанию 1.0)")
    p.add_argument("--profile", default="corpus", choices=PROFILES,
                   help="лишние метки: none, corpus (частоты комбинаций корпуса) "
                        "или random; по умолчанию corpus")
    p.add_argument("--superfluous-rate", type=float, default=0.3,
                   help="вероятность лишней метки для профиля random (0.3)")
    p.add_argument("--snr-db", type=float, default=20.0,
                   help="отношение сигнал/шум, дБ (по умолчанию 20)")
    p.add_argument("--seed", type=int, default=None,
                   help=f"зерно (по умолчанию {seed})")


# ---------- вывод ----------

def _kv_table(rows: Sequence[tuple[str, object]]) -> PrettyTable:
    t = PrettyTable(["Параметр", "Значение"])
    t.align["Параметр"] = "l"
    t.align["Значение"] = "r"
    for k, v in rows:
        t.add_row([k, f"{v:.2f}" if isinstance(v, float) else v])
    return t


def _baseline_table(baselines: dict) -> PrettyTable:
    t = PrettyTable(["Стратегия", "Точность, %"])
    t.align["Стратегия"] = "l"
    t.align["Точность, %"] = "r"
    for key in BASELINE_KEYS:
        t.add_row([key, f"{100.0 * baselines[key]:.1f}"])
    return t


def _report_table(report: PredictionReport) -> PrettyTable:
    t = PrettyTable(["Class", "Prediction"])
    t.align["Prediction"] = "r"
    for row in report.rows():
        t.add_row(list(row))
    return t


# ---------- подкоманды ----------

def cmd_segment(ns: argparse.Namespace, run: RunConfig) -> None:
    result = uc.segment_recordings(ns.paths, ns.out, run.segmentation,
                                   write_segments=not ns.no_segments,
                                   encoding=ns.encoding)
    t = PrettyTable(["source_id", "Сегментов"])
    for sid, n in result["per_source"].items():
        t.add_row([sid, n])
    print(t)
    print(f"Всего сегментов: {result['count']}. Результат: {result['out']}")


def cmd_preprocess(ns: argparse.Namespace, run: RunConfig) -> None:
    pad = float(SettingsLoader().get("PAD_VALUE", 0.0))
    result = uc.preprocess_manifest(ns.manifest, run.paths["cache_dir"],
                                    run.spectrogram, run.segmentation,
                                    pad_value=pad, write_pgm=run.export_pgm)
    print(_kv_table([
        ("источников", result["n_sources"]),
        ("экземпляров", result["count"]),
        ("пересчитано", len(result["recomputed"])),
        ("из кэша", len(result["cache_hits"])),
        ("длина сегмента, отсчётов", result["target_len"]),
    ]))
    print(f"Кэш: {result['out']}")


def cmd_synth(ns: argparse.Namespace, run: RunConfig) -> None:
    result = uc.synthesize_corpus(ns.out, run.synthetic, encoding=ns.encoding)
    print(f"Синтезировано клипов: {result['count']}. Манифест: {result['manifest']}")


def cmd_train(ns: argparse.Namespace, run: RunConfig) -> None:
    out_dir = ns.out or SettingsLoader().output_dir()
    instances, truth = uc.load_instances(
        cache_dir=ns.cache_dir,
        synthetic=run.synthetic,
        spec_cfg=run.spectrogram if run.synthetic else None,
        truth_path=ns.truth,
    )
    print(f"Экземпляров: {len(instances)}; повторностей: {run.n_reps}; "
          f"эпох: {run.train.epochs}")
    result = uc.train_evaluate(
        instances, truth, run.model, run.train, run.n_reps, run.seed, out_dir,
        jobs=run.jobs, save_checkpoints=run.save_checkpoints,
        run_echo={**run.to_dict(), "paths": {**run.paths, "out": out_dir}},
    )
    s = result["summary"]
    rows: List[tuple[str, object]] = [
        ("средняя точность, %", s["mean_accuracy"]),
        ("5-й перцентиль, %", s["p5_accuracy"]),
        ("95-й перцентиль, %", s["p95_accuracy"]),
        ("потери (обучение)", f"{s['mean_final_train_loss']:.4f}"),
        ("потери (тест)", f"{s['mean_final_test_loss']:.4f}"),
        (f"лучшая база ({s['best_baseline']}), %", s["best_baseline_accuracy"]),
        ("выше базы", "да" if s["exceeds_baseline"] else "нет"),
    ]
    if "mean_true_accuracy" in s:
        rows.append(("точность по истинной метке, %", s["mean_true_accuracy"]))
    print(_kv_table(rows))
    print(f"Метрики: {result['metrics_csv']}; сводка: {result['aggregate_json']}")


def cmd_baseline(ns: argparse.Namespace, run: RunConfig) -> None:
    result = uc.baseline_report(ns.manifest, ns.counts)
    print(f"Источник счётчиков: {result['source']} (экземпляров: {result['count']})")
    print(_baseline_table(result["baselines"]))


def cmd_report(ns: argparse.Namespace, run: RunConfig) -> None:
    result = uc.prediction_reports(ns.checkpoint, ns.cache_dir,
                                   instance_ids=ns.instance,
                                   test_only=ns.test_only, out_csv=ns.out)
    for r in result["reports"]:
        mark = "верно" if r.correct else "неверно"
        print(f"{r.instance_id} [{r.label_set.letters}] -> {r.predicted.name} ({mark})")
        print(_report_table(r))
    if result["out"]:
        print(f"Отчёты: {result['out']}")


COMMANDS = {
    "segment": cmd_segment,
    "preprocess": cmd_preprocess,
    "synth": cmd_synth,
    "train": cmd_train,
    "baseline": cmd_baseline,
    "report": cmd_report,
}


# ---------- MAIN ----------

def main(argv: Sequence[str] | None = None) -> int:
    try:
        ns = build_parser().parse_args(argv)
        run = build_run_config(ns)
        COMMANDS[ns.command](ns, run)
    except SystemExit as e:
        # --help
        return e.code if isinstance(e.code, int) else EXIT_OK
    except Exception as e:
        code = exit_code_for(e)
        if code == EXIT_IO and isinstance(e, OSError) and e.filename:
            print(f"Ошибка ввода-вывода: {e.filename}: {e.strerror or e}",
                  file=sys.stderr)
        else:
            print(f"Ошибка: {e}", file=sys.stderr)
        return code
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
