from __future__ import annotations

import csv
import os
from typing import Any, Dict, Iterable, List, Mapping, Sequence

from orcabehavior_hub.audio.segmenter import (
    extract_segments,
    segment_recording,
    write_spans_csv,
)
from orcabehavior_hub.audio.wav_io import read_wav, write_wav
from orcabehavior_hub.core.behaviors import CORPUS_COUNTS, Behavior
from orcabehavior_hub.core.exceptions import ValidationError
from orcabehavior_hub.core.models import (
    LabeledInstance,
    ManifestEntry,
    SegmentationConfig,
    SegmentSpan,
    SpectrogramConfig,
)
from orcabehavior_hub.core.utils import ensure_parent_dir, write_json
from orcabehavior_hub.dataset.cache import InstanceCache
from orcabehavior_hub.dataset.manifest import (
    combination_counts,
    load_counts,
    load_manifest,
    save_manifest,
)
from orcabehavior_hub.dataset.preprocess import ManifestPreprocessor, source_of
from orcabehavior_hub.dataset.synthetic import (
    SyntheticSpec,
    generate_synthetic_dataset,
    generate_synthetic_waveforms,
)
from orcabehavior_hub.decorators import log_action
from orcabehavior_hub.evaluation.harness import (
    TrainConfig,
    cross_validate,
    predict_report,
)
from orcabehavior_hub.evaluation.metrics import (
    baseline_accuracies,
    write_metrics_csv,
    write_predictions_csv,
)
from orcabehavior_hub.evaluation.plots import plot_training_curves
from orcabehavior_hub.nn.checkpoint import load_checkpoint
from orcabehavior_hub.nn.layers import ModelConfig

TRUTH_HEADER = ("source_id", "true_label")


# -------------------- SEGMENT --------------------

@log_action("SEGMENT", fields=("paths", "out_dir"))
def segment_recordings(paths: Sequence[str], out_dir: str, seg_cfg: SegmentationConfig,
                       write_segments: bool = True, encoding: str = "pcm16") -> dict:
    """
    Для каждой записи: <out_dir>/<stem>.spans.csv и (опционально)
    <out_dir>/<stem>/<stem>_NNN.wav с исходной частотой дискретизации.
    """
    per_source: Dict[str, int] = {}
    files: List[str] = []
    for path in paths:
        recording = read_wav(path)
        sid = recording.source_id
        spans = segment_recording(recording, seg_cfg)
        spans_path = os.path.join(out_dir, f"{sid}.spans.csv")
        write_spans_csv(spans_path, sid, spans)
        files.append(spans_path)
        if write_segments:
            for k, seg in enumerate(extract_segments(recording, spans)):
                seg_path = os.path.join(out_dir, sid, f"{sid}_{k:03d}.wav")
                write_wav(seg_path, seg, encoding)
                files.append(seg_path)
        per_source[sid] = len(spans)
    return {"count": sum(per_source.values()), "per_source": per_source,
            "files": files, "out": out_dir}


# -------------------- PREPROCESS --------------------

@log_action("PREPROCESS", fields=("manifest_path", "cache_dir"))
def preprocess_manifest(manifest_path: str, cache_dir: str | None,
                        spec_cfg: SpectrogramConfig, seg_cfg: SegmentationConfig,
                        pad_value: float = 0.0, write_pgm: bool = False) -> dict:
    entries = load_manifest(manifest_path)
    cache = InstanceCache(cache_dir)
    return ManifestPreprocessor(cache, spec_cfg, seg_cfg, pad_value, write_pgm).run(
        manifest_path, entries
    )


# -------------------- SYNTH --------------------

def write_truth(path: str, truth: Mapping[str, Behavior]) -> None:
    ensure_parent_dir(path)
    with open(path, "w", encoding="utf-8", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(TRUTH_HEADER)
        for sid in sorted(truth):
            w.writerow([sid, truth[sid].name])


def load_truth(path: str) -> Dict[str, Behavior]:
    if not os.path.exists(path):
        raise FileNotFoundError(path)
    out: Dict[str, Behavior] = {}
    with open(path, "r", encoding="utf-8", newline="") as f:
        reader = csv.DictReader(f)
        if any(c not in (reader.fieldnames or []) for c in TRUTH_HEADER):
            raise ValidationError(f"{path}: ожидался заголовок source_id,true_label")
        for row in reader:
            out[row["source_id"].strip()] = Behavior.from_letter(row["true_label"])
    return out


@log_action("SYNTH", fields=("out_dir",))
def synthesize_corpus(out_dir: str, spec: SyntheticSpec, encoding: str = "pcm16") -> dict:  # noqa: E501
    """
    WAV-файлы audio/<id>.wav, интервалы spans/<id>.csv (весь клип — один сегмент),
    manifest.csv и truth.csv со скрытыми истинными метками.
    """
    records = generate_synthetic_waveforms(spec)
    entries: List[ManifestEntry] = []
    for rec in records:
        sid = rec.instance_id
        wav_rel, spans_rel = f"audio/{sid}.wav", f"spans/{sid}.csv"
        write_wav(os.path.join(out_dir, wav_rel), rec.segment, encoding)
        write_spans_csv(os.path.join(out_dir, spans_rel), sid,
                        [SegmentSpan(0.0, rec.segment.duration_seconds)])
        entries.append(ManifestEntry(sid, wav_rel, rec.label_set, spans_rel))

    manifest_path = os.path.join(out_dir, "manifest.csv")
    save_manifest(manifest_path, entries)
    write_truth(os.path.join(out_dir, "truth.csv"),
                {r.instance_id: r.true_label for r in records})
    return {"count": len(records), "manifest": manifest_path, "out": out_dir}


# -------------------- TRAIN --------------------

def load_instances(cache_dir: str | None = None,
                   synthetic: SyntheticSpec | None = None,
                   spec_cfg: SpectrogramConfig | None = None,
                   truth_path: str | None = None,
                   ) -> tuple[List[LabeledInstance], Dict[str, Behavior] | None]:
    """Экземпляры из синтетики (в памяти) или из кэша; истинные метки — если есть."""
    if synthetic is not None:
        return generate_synthetic_dataset(synthetic, spec_cfg)
    instances = InstanceCache(cache_dir).load_instances()
    if not truth_path:
        return instances, None
    by_source = load_truth(truth_path)
    truth = {}
    for inst in instances:
        sid = source_of(inst.instance_id)
        if sid not in by_source:
            raise ValidationError(f"{truth_path}: нет истинной метки для '{sid}'")
        truth[inst.instance_id] = by_source[sid]
    return instances, truth


@log_action("TRAIN", fields=("n_reps", "seed", "out_dir"))
def train_evaluate(instances: Sequence[LabeledInstance],
                   truth: Mapping[str, Behavior] | None,
                   model_cfg: ModelConfig, train_cfg: TrainConfig,
                   n_reps: int, seed: int, out_dir: str, jobs: int = 1,
                   save_checkpoints: bool = False,
                   run_echo: Dict[str, Any] | None = None) -> dict:
    """metrics.csv, aggregate.json, три SVG-графика и (опц.) чекпоинты повторностей."""
    ckpt_dir = os.path.join(out_dir, "checkpoints") if save_checkpoints else None
    result = cross_validate(instances, n_reps, seed, model_cfg, train_cfg,
                            true_labels=truth, jobs=jobs, checkpoint_dir=ckpt_dir)
    metrics_path = os.path.join(out_dir, "metrics.csv")
    write_metrics_csv(metrics_path, result.runs)
    aggregate = result.to_dict()
    aggregate["run_config"] = run_echo or {}
    aggregate_path = os.path.join(out_dir, "aggregate.json")
    write_json(aggregate_path, aggregate)
    plots = plot_training_curves(result, out_dir)
    summary = result.summary()
    return {
        "mean_accuracy": round(summary["mean_accuracy"], 2),
        "summary": summary,
        "result": result,
        "metrics_csv": metrics_path,
        "aggregate_json": aggregate_path,
        "plots": plots,
        "out": out_dir,
    }


# -------------------- BASELINE --------------------

@log_action("BASELINE", fields=("manifest_path", "counts_path"))
def baseline_report(manifest_path: str | None = None,
                    counts_path: str | None = None) -> dict:
    """Счётчики комбинаций из манифеста, CSV счётчиков или (по умолчанию) корпуса."""
    if manifest_path:
        counts = combination_counts(e.label_set for e in load_manifest(manifest_path))
        source = manifest_path
    elif counts_path:
        counts = load_counts(counts_path)
        source = counts_path
    else:
        counts = dict(CORPUS_COUNTS)
        source = "corpus"
    return {
        "count": sum(counts.values()),
        "counts": counts,
        "baselines": baseline_accuracies(counts),
        "source": source,
    }


# -------------------- REPORT --------------------

@log_action("REPORT", fields=("checkpoint_path", "cache_dir"))
def prediction_reports(checkpoint_path: str, cache_dir: str | None,
                       instance_ids: Iterable[str] | None = None,
                       test_only: bool = False, out_csv: str | None = None) -> dict:
    model, extra = load_checkpoint(checkpoint_path)
    instances = InstanceCache(cache_dir).load_instances()
    wanted = set(instance_ids or [])
    if test_only:
        wanted |= set(extra.get("test_ids", []))
    if wanted:
        unknown = sorted(wanted - {i.instance_id for i in instances})
        if unknown:
            raise ValidationError(f"нет экземпляра '{unknown[0]}' в кэше")
        instances = [i for i in instances if i.instance_id in wanted]
    reports = [predict_report(model, inst) for inst in instances]
    if out_csv:
        write_predictions_csv(out_csv, reports)
    return {"count": len(reports), "reports": reports, "out": out_csv or ""}
