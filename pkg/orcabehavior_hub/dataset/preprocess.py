from __future__ import annotations

import os
from dataclasses import asdict, dataclass, field
from typing import Any, Dict, List

from orcabehavior_hub.audio.resampling import pad_to_length, resample
from orcabehavior_hub.audio.segmenter import (
    extract_segments,
    read_spans_csv,
    segment_recording,
)
from orcabehavior_hub.audio.spectrogram import export_pgm, waveform_to_image
from orcabehavior_hub.audio.wav_io import read_wav
from orcabehavior_hub.core.exceptions import SourceProcessingError, ValidationError
from orcabehavior_hub.core.models import (
    AudioSegment,
    ManifestEntry,
    SegmentationConfig,
    SpectrogramConfig,
)
from orcabehavior_hub.core.utils import sha256_file
from orcabehavior_hub.dataset.cache import InstanceCache, config_fingerprint
from orcabehavior_hub.dataset.manifest import resolve_path
from orcabehavior_hub.logging_config import get_logger


def instance_id_for(source_id: str, index: int) -> str:
    return f"{source_id}#{index:03d}"


def source_of(instance_id: str) -> str:
    """'rec01#002' -> 'rec01'."""
    return instance_id.split("#", 1)[0]


@dataclass
class _SourceState:
    entry: ManifestEntry
    wav_path: str
    spans_path: str | None
    mtime: float
    sha256: str
    spans_sha256: str | None
    fresh: bool
    lengths: List[int] = field(default_factory=list)
    segments: List[AudioSegment] | None = None


class ManifestPreprocessor:
    """
    Координатор обработки манифеста в кэш экземпляров.

    Поведение:
      - для каждого источника считает mtime и sha256 WAV (и CSV интервалов);
      - свежие источники берутся из индекса кэша без пересчёта;
      - остальные: чтение -> передискретизация -> сегменты (детектор или CSV);
      - все сегменты дополняются до общей длины (максимум по корпусу),
        затем строится нормализованная Мел-спектрограмма;
      - если общая длина или параметры изменились, пересчитывается всё;
      - ошибка любого источника -> SourceProcessingError с его source_id.
    """

    def __init__(self, cache: InstanceCache, spec_cfg: SpectrogramConfig,
                 seg_cfg: SegmentationConfig, pad_value: float = 0.0,
                 write_pgm: bool = False) -> None:
        self._cache = cache
        self._spec_cfg = spec_cfg
        self._seg_cfg = seg_cfg
        self._pad_value = float(pad_value)
        self._write_pgm = bool(write_pgm)
        self._log = get_logger()

    @property
    def fingerprint(self) -> str:
        return config_fingerprint({
            "spectrogram": self._spec_cfg.to_dict(),
            "segmentation": asdict(self._seg_cfg),
            "pad_value": self._pad_value,
            "pgm": self._write_pgm,
        })

    # --- стадии ---
    def _inspect(self, manifest_path: str, entry: ManifestEntry) -> _SourceState:
        wav_path = resolve_path(manifest_path, entry.path)
        spans_path = (resolve_path(manifest_path, entry.spans_path)
                      if entry.spans_path else None)
        state = _SourceState(
            entry=entry,
            wav_path=wav_path,
            spans_path=spans_path,
            mtime=os.path.getmtime(wav_path),
            sha256=sha256_file(wav_path),
            spans_sha256=sha256_file(spans_path) if spans_path else None,
            fresh=False,
        )
        state.fresh = self._cache.is_fresh(
            entry.source_id, entry.label_set.letters, state.mtime, state.sha256,
            state.spans_sha256, self.fingerprint,
        )
        if state.fresh:
            rec = self._cache.source_record(entry.source_id) or {}
            state.lengths = [int(s["n_samples"]) for s in rec.get("segments", [])]
        return state

    def _segment(self, state: _SourceState) -> None:
        sid = state.entry.source_id
        recording = resample(read_wav(state.wav_path, source_id=sid),
                             self._spec_cfg.sample_rate)
        if state.spans_path:
            spans = read_spans_csv(state.spans_path, source_id=sid)
        else:
            spans = segment_recording(recording, self._seg_cfg)
        state.segments = extract_segments(recording, spans)
        state.lengths = [len(s) for s in state.segments]

    def _render(self, state: _SourceState, target_len: int) -> None:
        sid = state.entry.source_id
        images = {}
        segments_meta = []
        for k, seg in enumerate(state.segments or []):
            iid = instance_id_for(sid, k)
            image = waveform_to_image(
                pad_to_length(seg, target_len, self._pad_value), self._spec_cfg
            )
            images[iid] = image.values
            if self._write_pgm:
                export_pgm(image, self._cache.pgm_path(iid))
            segments_meta.append({
                "instance_id": iid,
                "n_samples": len(seg),
                "offset_s": round(seg.offset_seconds, 6),
            })
        record: Dict[str, Any] = {
            "path": state.entry.path,
            "labels": state.entry.label_set.letters,
            "mtime": state.mtime,
            "sha256": state.sha256,
            "spans_sha256": state.spans_sha256,
        }
        self._cache.store_source(sid, {**record, "segments": segments_meta}, images)

    def _guarded(self, sid: str, func, *args):
        try:
            return func(*args)
        except SourceProcessingError:
            raise
        except Exception as e:
            self._log.error(f"Preprocess: {sid} ERROR: {e}")
            raise SourceProcessingError(sid, e) from e

    # --- public API ---
    def run(self, manifest_path: str, entries: List[ManifestEntry]) -> dict:
        self._log.info(f"Preprocess: start ({len(entries)} источников)")
        states: List[_SourceState] = []
        for entry in entries:
            state = self._guarded(entry.source_id, self._inspect, manifest_path, entry)
            if not state.fresh:
                self._guarded(entry.source_id, self._segment, state)
            states.append(state)

        lengths = [n for s in states for n in s.lengths]
        if not lengths:
            raise ValidationError("ни в одном источнике не найдено сегментов")
        target_len = max(max(lengths), int(self._spec_cfg.fft_size))

        full_rebuild = (self.fingerprint != self._cache.fingerprint
                        or target_len != self._cache.target_len)
        self._cache.begin(self.fingerprint, self._spec_cfg, target_len)

        recomputed, hits = [], []
        for state in states:
            sid = state.entry.source_id
            if state.fresh and not full_rebuild:
                hits.append(sid)
                self._log.info(f"Preprocess: {sid} cache hit")
                continue
            if state.segments is None:
                self._guarded(sid, self._segment, state)
            self._guarded(sid, self._render, state, target_len)
            recomputed.append(sid)
            self._log.info(f"Preprocess: {sid} OK ({len(state.lengths)} сегментов)")

        self._cache.retain_only(s.entry.source_id for s in states)
        pruned = self._cache.save()
        if pruned:
            self._log.info(f"Preprocess: удалено устаревших файлов кэша: {len(pruned)}")
        self._log.info("Preprocess: done")
        return {
            "count": len(lengths),
            "n_sources": len(states),
            "recomputed": recomputed,
            "cache_hits": hits,
            "target_len": target_len,
            "pruned": len(pruned),
            "out": self._cache.root,
        }
