"""
Звук -> нормализованное децибельное Мел-изображение:
  stft_power -> mel_filterbank -> to_db -> normalize_to_image.
"""
from __future__ import annotations

import struct
from functools import lru_cache

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.signal import get_window

from orcabehavior_hub.core.exceptions import InvalidArgumentError, ValidationError
from orcabehavior_hub.core.models import (
    AudioSegment,
    SpectrogramConfig,
    SpectrogramImage,
)
from orcabehavior_hub.core.utils import write_bytes

DB_FLOOR = -80.0
FLOOR_EPS = 1e-10
SPEC_MAGIC = b"SPEC1"


# ---------- Мел-шкала ----------

def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def frame_count(n_samples: int, cfg: SpectrogramConfig) -> int:
    """1 + floor((len - fft_size) / hop) для len >= fft_size, иначе 0."""
    if n_samples < cfg.fft_size:
        return 0
    return 1 + (n_samples - cfg.fft_size) // cfg.hop


@lru_cache(maxsize=8)
def _hann(fft_size: int) -> np.ndarray:
    w = get_window("hann", fft_size, fftbins=True)
    w.setflags(write=False)
    return w


# ---------- стадии ----------

def stft_power(seg: AudioSegment, cfg: SpectrogramConfig) -> SpectrogramImage:
    """
    Кадр t покрывает отсчёты [t*hop, t*hop + fft_size), окно Ханна,
    мощность |X_k|^2 для бинов 0..fft_size/2. Результат: [n_bins x n_frames].
    """
    n = len(seg)
    if n < cfg.fft_size:
        raise InvalidArgumentError(
            f"сегмент короче одного блока: {n} < fft_size={cfg.fft_size}"
        )
    frames = sliding_window_view(seg.samples, cfg.fft_size)[:: cfg.hop]
    spectrum = np.fft.rfft(frames * _hann(cfg.fft_size), axis=1)
    power = spectrum.real ** 2 + spectrum.imag ** 2
    return SpectrogramImage(power.T, "power", cfg)


def power_to_frame_energy(power_column: np.ndarray, fft_size: int) -> float:
    """
    Парсеваль для одностороннего спектра: бин 0 и Найквист — один раз,
    внутренние бины — дважды, всё делится на fft_size.
    Равно энергии оконного кадра sum((x*w)^2).
    """
    p = np.asarray(power_column, dtype=np.float64)
    interior_end = p.size - 1 if fft_size % 2 == 0 else p.size
    total = p[0] + 2.0 * p[1:interior_end].sum()
    if fft_size % 2 == 0:
        total += p[-1]
    return float(total / fft_size)


@lru_cache(maxsize=16)
def _filterbank_cached(cfg: SpectrogramConfig) -> np.ndarray:
    fft_freqs = np.fft.rfftfreq(cfg.fft_size, 1.0 / cfg.sample_rate)
    mel_points = np.linspace(hz_to_mel(cfg.fmin), hz_to_mel(cfg.fmax), cfg.n_mels + 2)
    hz_points = mel_to_hz(mel_points)

    lower = hz_points[:-2, None]
    center = hz_points[1:-1, None]
    upper = hz_points[2:, None]
    rising = (fft_freqs[None, :] - lower) / (center - lower)
    falling = (upper - fft_freqs[None, :]) / (upper - center)
    weights = np.maximum(0.0, np.minimum(rising, falling))
    weights.setflags(write=False)
    return weights


def mel_filterbank(cfg: SpectrogramConfig) -> np.ndarray:
    """
    Треугольные фильтры [n_mels x (fft_size/2 + 1)], пики равномерно по
    mel(f) = 2595*log10(1 + f/700) в [fmin, fmax], высота пика 1.
    Матрица общая и только для чтения.
    """
    return _filterbank_cached(cfg)


def empty_filter_rows(cfg: SpectrogramConfig) -> list[int]:
    """Мел-строки без единого положительного веса (узкие треугольники между бинами)."""
    fb = mel_filterbank(cfg)
    return [int(i) for i in np.flatnonzero(~(fb > 0).any(axis=1))]


def apply_mel(power: SpectrogramImage) -> SpectrogramImage:
    if power.scale_note != "power":
        raise ValidationError(f"ожидалась мощность, получено {power.scale_note}")
    fb = mel_filterbank(power.config)
    if power.values.shape[0] != fb.shape[1]:
        raise InvalidArgumentError(
            f"ожидалось {fb.shape[1]} линейных бинов, получено {power.values.shape[0]}"
        )
    return SpectrogramImage(fb @ power.values, "power", power.config)


def to_db(power_grid: SpectrogramImage) -> SpectrogramImage:
    """
    10*log10(max(p, eps)) - 10*log10(max по сетке); максимум -> 0 дБ,
    снизу отсечка -80 дБ.
    """
    if power_grid.scale_note != "power":
        raise ValidationError(
            f"to_db ожидает scale_note=power, получено {power_grid.scale_note}"
        )
    p = np.maximum(power_grid.values, FLOOR_EPS)
    db = 10.0 * np.log10(p) - 10.0 * np.log10(p.max())
    return SpectrogramImage(np.maximum(db, DB_FLOOR), "db", power_grid.config)


def normalize_to_image(db_grid: SpectrogramImage) -> SpectrogramImage:
    """Аффинно: min -> 0, max -> 255; постоянная сетка -> нули."""
    if db_grid.scale_note != "db":
        raise ValidationError(
            f"normalize_to_image ожидает scale_note=db, получено {db_grid.scale_note}"
        )
    v = db_grid.values
    lo, hi = float(v.min()), float(v.max())
    if hi <= lo:
        out = np.zeros_like(v)
    else:
        out = np.clip((v - lo) / (hi - lo) * 255.0, 0.0, 255.0)
    return SpectrogramImage(out, "normalized", db_grid.config)


def waveform_to_image(seg: AudioSegment, cfg: SpectrogramConfig) -> SpectrogramImage:
    """Композиция стадий: мощность -> Мел -> дБ -> [0, 255]."""
    if abs(seg.sample_rate - cfg.sample_rate) > 1e-9:
        raise InvalidArgumentError(
            f"частота сегмента {seg.sample_rate:g} Гц не совпадает с "
            f"конфигурацией {cfg.sample_rate:g} Гц: сначала вызовите resample()"
        )
    return normalize_to_image(to_db(apply_mel(stft_power(seg, cfg))))


# ---------- экспорт ----------

def export_pgm(image: SpectrogramImage, path: str) -> None:
    """Бинарный PGM (P5, maxval 255); верхняя строка — самая высокая Мел-полоса."""
    if image.scale_note != "normalized":
        raise ValidationError("PGM экспортируется только из нормализованного изображения")  # noqa: E501
    pixels = np.clip(np.rint(image.values[::-1]), 0, 255).astype(np.uint8)
    rows, cols = pixels.shape
    header = f"P5\n{cols} {rows}\n255\n".encode("ascii")
    write_bytes(path, header + pixels.tobytes())


def encode_spec_tensor(values: np.ndarray) -> bytes:
    """'SPEC1', u32 rows, u32 cols, далее float32 little-endian построчно."""
    arr = np.asarray(values)
    if arr.ndim != 2:
        raise InvalidArgumentError(f"SPEC1 хранит 2-D матрицы, получено {arr.ndim}-D")
    rows, cols = arr.shape
    return SPEC_MAGIC + struct.pack("<II", rows, cols) + arr.astype("<f4").tobytes()


def decode_spec_tensor(blob: bytes, offset: int = 0) -> tuple[np.ndarray, int]:
    """Разобрать SPEC1 начиная с offset. Возвращает (матрица float32, новый offset)."""
    head = offset + len(SPEC_MAGIC)
    if blob[offset:head] != SPEC_MAGIC:
        raise ValidationError("ожидалась сигнатура 'SPEC1'")
    if len(blob) < head + 8:
        raise ValidationError("усечённый заголовок SPEC1")
    rows, cols = struct.unpack("<II", blob[head:head + 8])
    start = head + 8
    end = start + 4 * rows * cols
    if len(blob) < end:
        raise ValidationError("усечённые данные SPEC1")
    arr = np.frombuffer(blob[start:end], dtype="<f4").reshape(rows, cols).copy()
    return arr, end


def write_spec_tensor(path: str, values: np.ndarray) -> None:
    write_bytes(path, encode_spec_tensor(values))


def read_spec_tensor(path: str) -> np.ndarray:
    with open(path, "rb") as f:
        arr, _ = decode_spec_tensor(f.read())
    return arr
