from __future__ import annotations

from dataclasses import dataclass, field
from typing import Literal, Optional

import numpy as np

from orcabehavior_hub.core.behaviors import CandidateLabelSet
from orcabehavior_hub.core.exceptions import InvalidArgumentError, ValidationError

ScaleNote = Literal["power", "db", "normalized"]


class AudioSegment:
    """
    Моно-буфер отсчётов с частотой дискретизации и происхождением.

    Атрибуты:
      samples: np.ndarray (float64, 1-D, номинально в [-1, 1])
      sample_rate: float  # Гц, > 0
      source_id: str      # идентификатор исходной записи
      offset_seconds: float  # начало в исходной записи (с)

    Свойства:
      duration_seconds = len(samples) / sample_rate
    """

    __slots__ = ("_samples", "_sample_rate", "source_id", "offset_seconds")

    def __init__(
            self,
            samples,
            sample_rate: float,
            source_id: str = "",
            offset_seconds: float = 0.0,
    ) -> None:
        arr = np.asarray(samples, dtype=np.float64)
        if arr.ndim != 1:
            raise InvalidArgumentError(
                f"samples должен быть одномерным, получено ndim={arr.ndim}"
            )
        if arr.size == 0:
            raise InvalidArgumentError("samples не может быть пустым")
        try:
            sr = float(sample_rate)
        except Exception:
            raise InvalidArgumentError("sample_rate должен быть числом")
        if not sr > 0:
            raise InvalidArgumentError(f"sample_rate должен быть > 0 (получено {sr})")
        self._samples = arr
        self._sample_rate = sr
        self.source_id = str(source_id)
        self.offset_seconds = float(offset_seconds)

    @property
    def samples(self) -> np.ndarray:
        return self._samples

    @property
    def sample_rate(self) -> float:
        return self._sample_rate

    @property
    def duration_seconds(self) -> float:
        return len(self._samples) / self._sample_rate

    def __len__(self) -> int:
        return len(self._samples)

    def with_samples(self, samples, sample_rate: float | None = None) -> "AudioSegment":
        """Копия с новыми отсчётами (и, опционально, частотой); происхождение сохраняется."""  # noqa: E501
        return AudioSegment(
            samples,
            self._sample_rate if sample_rate is None else sample_rate,
            source_id=self.source_id,
            offset_seconds=self.offset_seconds,
        )

    def __repr__(self) -> str:
        return (
            f"<AudioSegment source={self.source_id!r} n={len(self)} "
            f"sr={self._sample_rate:g} offset={self.offset_seconds:g}s>"
        )


@dataclass(frozen=True)
class SpectrogramConfig:
    """
    Параметры спектрограммы. По умолчанию — блоки по 512 отсчётов без
    перекрытия при 21 900 Гц, 128 Мел-полос в [0, 10 950] Гц.
    """

    fft_size: int = 512
    hop: int = 512
    n_mels: int = 128
    fmin: float = 0.0
    fmax: float = 10_950.0
    sample_rate: float = 21_900.0

    def __post_init__(self) -> None:
        if int(self.fft_size) <= 0:
            raise InvalidArgumentError("fft_size должен быть > 0")
        if not (0 < int(self.hop) <= int(self.fft_size)):
            raise InvalidArgumentError("hop должен быть в (0, fft_size]")
        if int(self.n_mels) < 2:
            raise InvalidArgumentError("n_mels должен быть >= 2")
        if not (0 <= self.fmin < self.fmax <= self.sample_rate / 2):
            raise InvalidArgumentError(
                "ожидалось 0 <= fmin < fmax <= sample_rate/2 "
                f"(fmin={self.fmin}, fmax={self.fmax}, sr={self.sample_rate})"
            )

    @property
    def n_bins(self) -> int:
        return self.fft_size // 2 + 1

    def to_dict(self) -> dict:
        return {
            "fft_size": int(self.fft_size),
            "hop": int(self.hop),
            "n_mels": int(self.n_mels),
            "fmin": float(self.fmin),
            "fmax": float(self.fmax),
            "sample_rate": float(self.sample_rate),
        }


@dataclass(frozen=True)
class SpectrogramImage:
    """
    Сетка [n_rows x n_frames]. scale_note ∈ {power, db, normalized}.
    Для power/db/normalized после Мел-фильтров строки — Мел-полосы;
    stft_power возвращает линейные бины (n_rows = fft_size/2 + 1).
    """

    values: np.ndarray
    scale_note: ScaleNote
    config: SpectrogramConfig = field(default_factory=SpectrogramConfig)

    def __post_init__(self) -> None:
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 2:
            raise InvalidArgumentError(f"values должен быть 2-D (получено {v.ndim}-D)")
        if self.scale_note not in ("power", "db", "normalized"):
            raise InvalidArgumentError(f"неизвестный scale_note={self.scale_note!r}")
        if self.scale_note == "normalized" and v.size and (
                v.min() < 0.0 or v.max() > 255.0):
            raise InvalidArgumentError("нормализованные значения должны быть в [0, 255]")  # noqa: E501
        object.__setattr__(self, "values", v)

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape  # type: ignore[return-value]

    @property
    def n_frames(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class SegmentationConfig:
    """Правила сегментации и параметры энергетического детектора."""

    min_duration_s: float = 0.5
    merge_gap_s: float = 2.0
    frame_s: float = 0.05
    threshold_db_above_noise: float = 10.0

    def __post_init__(self) -> None:
        if not self.min_duration_s > 0:
            raise InvalidArgumentError("min_duration_s должен быть > 0")
        if not self.merge_gap_s >= 0:
            raise InvalidArgumentError("merge_gap_s должен быть >= 0")
        if not self.frame_s > 0:
            raise InvalidArgumentError("frame_s должен быть > 0")


@dataclass(frozen=True, order=True)
class SegmentSpan:
    start_s: float
    end_s: float

    def __post_init__(self) -> None:
        if not self.end_s > self.start_s:
            raise InvalidArgumentError(
                f"span: end_s ({self.end_s}) должен быть > start_s ({self.start_s})"
            )

    @property
    def duration_s(self) -> float:
        return self.end_s - self.start_s


@dataclass(frozen=True)
class ManifestEntry:
    """Строка манифеста: запись, путь к WAV, множество меток, опц. CSV интервалов."""

    source_id: str
    path: str
    label_set: CandidateLabelSet
    spans_path: Optional[str] = None

    def __post_init__(self) -> None:
        if not isinstance(self.source_id, str) or not self.source_id.strip():
            raise ValidationError("source_id должен быть непустой строкой")
        if not isinstance(self.path, str) or not self.path.strip():
            raise ValidationError(f"пустой путь у источника '{self.source_id}'")


@dataclass(frozen=True)
class LabeledInstance:
    """Экземпляр обучения: нормализованное изображение и множество кандидатов."""

    instance_id: str
    image: SpectrogramImage
    label_set: CandidateLabelSet

    def __post_init__(self) -> None:
        if self.image.scale_note != "normalized":
            raise ValidationError(
                f"экземпляр '{self.instance_id}': ожидалось нормализованное "
                f"изображение, получено scale_note={self.image.scale_note}"
            )


@dataclass(frozen=True)
class SplitPlan:
    """Разбиение train/test одной повторности кросс-валидации."""

    repetition_index: int
    train_ids: tuple[str, ...]
    test_ids: tuple[str, ...]
    seed: int

    def __post_init__(self) -> None:
        if set(self.train_ids) & set(self.test_ids):
            raise InvalidArgumentError("train и test пересекаются")
