from __future__ import annotations

from fractions import Fraction
from functools import lru_cache

import numpy as np
from scipy.signal import firwin, resample_poly

from orcabehavior_hub.core.exceptions import InvalidArgumentError
from orcabehavior_hub.core.models import AudioSegment

# Kaiser windowed-sinc: beta=8, 64 перехода через ноль на более медленной частоте
KAISER_BETA = 8.0
ZERO_CROSSINGS = 64


def _rational_ratio(input_rate: float, target_rate: float) -> tuple[int, int]:
    ratio = Fraction(target_rate / input_rate).limit_denominator(10_000)
    if float(target_rate).is_integer() and float(input_rate).is_integer():
        ratio = Fraction(int(target_rate), int(input_rate))
    return ratio.numerator, ratio.denominator


@lru_cache(maxsize=32)
def _antialias_taps(up: int, down: int) -> np.ndarray:
    """Фильтр нижних частот для полифазной схемы; срез на меньшей из частот Найквиста."""  # noqa: E501
    max_rate = max(up, down)
    half_len = (ZERO_CROSSINGS // 2) * max_rate
    taps = firwin(2 * half_len + 1, 1.0 / max_rate, window=("kaiser", KAISER_BETA))
    taps.setflags(write=False)
    return taps


def resampled_length(n_samples: int, input_rate: float, target_rate: float) -> int:
    """round(len * target_rate / input_rate), половина — вверх."""
    return int(np.floor(n_samples * float(target_rate) / float(input_rate) + 0.5))


def resample(seg: AudioSegment, target_rate: float) -> AudioSegment:
    """
    Передискретизация с полосовым ограничением (полифазный windowed-sinc).
      - длина результата = round(len * target_rate / input_rate);
      - при совпадении частот возвращается побитовая копия.
    """
    try:
        target = float(target_rate)
    except Exception:
        raise InvalidArgumentError("target_rate должен быть числом")
    if not target > 0:
        raise InvalidArgumentError(f"target_rate должен быть > 0 (получено {target})")

    if target == seg.sample_rate:
        return seg.with_samples(seg.samples.copy())

    up, down = _rational_ratio(seg.sample_rate, target)
    out = resample_poly(seg.samples, up, down, window=np.array(_antialias_taps(up, down)))  # noqa: E501

    n_out = max(1, resampled_length(len(seg), seg.sample_rate, target))
    if len(out) >= n_out:
        out = out[:n_out]
    else:
        out = np.concatenate([out, np.zeros(n_out - len(out))])
    return seg.with_samples(out, sample_rate=target)


def pad_to_length(
        seg: AudioSegment,
        target_len: int,
        pad_value: float = 0.0,
) -> AudioSegment:
    """
    Дополнить сегмент константой до target_len, исходные отсчёты — по центру:
      слева floor((target_len - len) / 2), остаток справа.
    Усечение запрещено: target_len < len -> InvalidArgumentError.
    """
    n = len(seg)
    target_len = int(target_len)
    if target_len < n:
        raise InvalidArgumentError(
            f"target_len={target_len} меньше длины сегмента {n}: усечение запрещено"
        )
    if target_len == n:
        return seg.with_samples(seg.samples.copy())
    left = (target_len - n) // 2
    right = target_len - n - left
    out = np.pad(seg.samples, (left, right), mode="constant",
                 constant_values=float(pad_value))
    return seg.with_samples(out)
