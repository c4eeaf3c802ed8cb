"""
Нарезка длинной записи на сегменты вокализаций:
  1) энергетический детектор активных кадров (замена ручного прослушивания);
  2) вокализации ближе merge_gap_s друг к другу сливаются в один сегмент;
  3) сегменты длительностью <= min_duration_s отбрасываются.
"""
from __future__ import annotations

import csv
import os
from typing import Iterable, Sequence

import numpy as np

from orcabehavior_hub.core.exceptions import InvalidArgumentError, ValidationError
from orcabehavior_hub.core.models import AudioSegment, SegmentationConfig, SegmentSpan
from orcabehavior_hub.core.utils import ensure_parent_dir

# допуск для строгих сравнений «меньше двух секунд» / «дольше половины секунды»
_TIME_EPS = 1e-9
NOISE_PERCENTILE = 10.0
SPANS_HEADER = ("source_id", "start_s", "end_s")


def frame_length(sample_rate: float, cfg: SegmentationConfig) -> int:
    return max(1, int(round(cfg.frame_s * sample_rate)))


def frame_seconds(cfg: SegmentationConfig, sample_rate: float | None = None) -> float:
    """Фактическая длительность кадра: frame_s, округлённая до целых отсчётов."""
    if sample_rate is None:
        return cfg.frame_s
    return frame_length(sample_rate, cfg) / sample_rate


def frame_energies_db(seg: AudioSegment, cfg: SegmentationConfig) -> np.ndarray:
    """RMS-энергия неперекрывающихся кадров в дБ (хвост короче кадра отбрасывается)."""
    flen = frame_length(seg.sample_rate, cfg)
    n_frames = len(seg) // flen
    if n_frames < 1:
        raise InvalidArgumentError(
            f"запись короче одного кадра ({len(seg)} < {flen} отсчётов)"
        )
    frames = seg.samples[: n_frames * flen].reshape(n_frames, flen)
    mean_sq = np.mean(frames * frames, axis=1)
    return 10.0 * np.log10(mean_sq + 1e-20)


def detect_active_frames(seg: AudioSegment, cfg: SegmentationConfig) -> np.ndarray:
    """
    Кадр активен, если его энергия в дБ строго выше
    (шумовой пол + threshold_db_above_noise), где пол — 10-й перцентиль энергий.
    """
    energies = frame_energies_db(seg, cfg)
    floor = float(np.percentile(energies, NOISE_PERCENTILE))
    return energies > floor + cfg.threshold_db_above_noise


def _runs(flags: Sequence[bool]) -> list[tuple[int, int]]:
    """Максимальные серии True: [(start_idx, end_idx_exclusive), ...]."""
    f = np.asarray(flags, dtype=bool).astype(np.int8)
    if f.size == 0:
        return []
    edges = np.diff(np.concatenate([[0], f, [0]]))
    starts = np.flatnonzero(edges == 1)
    ends = np.flatnonzero(edges == -1)
    return list(zip(starts.tolist(), ends.tolist()))


def merge_spans(spans: Iterable[SegmentSpan], cfg: SegmentationConfig) -> list[SegmentSpan]:  # noqa: E501
    """
    Правила сегментации на явных интервалах:
      - сортировка, слияние при зазоре строго меньше merge_gap_s
        (один проход по отсортированному списку уже даёт неподвижную точку);
      - затем отбрасываются интервалы длительностью <= min_duration_s.
    Порядок входа не важен, операция идемпотентна.
    """
    ordered = sorted(spans)
    merged: list[list[float]] = []
    for sp in ordered:
        if merged and sp.start_s - merged[-1][1] < cfg.merge_gap_s - _TIME_EPS:
            merged[-1][1] = max(merged[-1][1], sp.end_s)
        else:
            merged.append([sp.start_s, sp.end_s])
    return [
        SegmentSpan(s, e)
        for s, e in merged
        if (e - s) > cfg.min_duration_s + _TIME_EPS
    ]


def spans_from_flags(flags: Sequence[bool], cfg: SegmentationConfig,
                     sample_rate: float | None = None) -> list[SegmentSpan]:
    """Серии активных кадров -> интервалы (с) -> merge_spans."""
    step = frame_seconds(cfg, sample_rate)
    raw = [
        SegmentSpan(start * step, end * step)
        for start, end in _runs(flags)
    ]
    return merge_spans(raw, cfg)


def spans_to_flags(spans: Iterable[SegmentSpan], n_frames: int,
                   cfg: SegmentationConfig,
                   sample_rate: float | None = None) -> np.ndarray:
    """Обратное отображение: кадры, покрытые интервалами, помечаются активными."""
    step = frame_seconds(cfg, sample_rate)
    flags = np.zeros(int(n_frames), dtype=bool)
    for sp in spans:
        a = int(round(sp.start_s / step))
        b = int(round(sp.end_s / step))
        flags[max(a, 0):min(b, n_frames)] = True
    return flags


def segment_recording(recording: AudioSegment, cfg: SegmentationConfig) -> list[SegmentSpan]:  # noqa: E501
    return spans_from_flags(detect_active_frames(recording, cfg), cfg,
                            recording.sample_rate)


def extract_segments(recording: AudioSegment,
                     spans: Iterable[SegmentSpan]) -> list[AudioSegment]:
    """
    Точные срезы записи по интервалам; у каждого сегмента сохраняются
    source_id и offset_seconds (смещение с учётом offset самой записи).
    """
    sr = recording.sample_rate
    n = len(recording)
    out: list[AudioSegment] = []
    for sp in spans:
        a = int(round(sp.start_s * sr))
        b = int(round(sp.end_s * sr))
        if a < 0 or b > n or b <= a:
            raise InvalidArgumentError(
                f"интервал [{sp.start_s:g}, {sp.end_s:g}] с вне записи "
                f"'{recording.source_id}' длительностью {n / sr:g} с"
            )
        out.append(
            AudioSegment(
                recording.samples[a:b].copy(),
                sr,
                source_id=recording.source_id,
                offset_seconds=recording.offset_seconds + a / sr,
            )
        )
    return out


# ---------- CSV интервалов ----------

def write_spans_csv(path: str, source_id: str, spans: Iterable[SegmentSpan]) -> None:
    ensure_parent_dir(path)
    with open(path, "w", encoding="utf-8", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(SPANS_HEADER)
        for sp in spans:
            w.writerow([source_id, f"{sp.start_s:.6f}", f"{sp.end_s:.6f}"])


def read_spans_csv(path: str, source_id: str | None = None) -> list[SegmentSpan]:
    """
    Прочитать `source_id,start_s,end_s`. Если source_id задан — только его строки.
    Позволяет подставить размеченные вручную интервалы вместо детектора.
    """
    if not os.path.exists(path):
        raise FileNotFoundError(path)
    spans: list[SegmentSpan] = []
    with open(path, "r", encoding="utf-8", newline="") as f:
        reader = csv.DictReader(f)
        missing = set(SPANS_HEADER) - set(reader.fieldnames or ())
        if missing:
            raise ValidationError(
                f"{path}: нет колонок {', '.join(sorted(missing))}"
            )
        for lineno, row in enumerate(reader, start=2):
            if source_id is not None and row["source_id"].strip() != source_id:
                continue
            try:
                start, end = float(row["start_s"]), float(row["end_s"])
            except (TypeError, ValueError):
                raise ValidationError(f"{path}:{lineno}: start_s/end_s не числа")
            try:
                spans.append(SegmentSpan(start, end))
            except InvalidArgumentError as e:
                raise ValidationError(f"{path}:{lineno}: {e.reason}") from e
    return spans
