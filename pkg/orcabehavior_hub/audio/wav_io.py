from __future__ import annotations

import os
import struct
from dataclasses import dataclass
from typing import Literal

import numpy as np

from orcabehavior_hub.core.exceptions import (
    AudioFormatError,
    InvalidArgumentError,
    UnsupportedEncodingError,
)
from orcabehavior_hub.core.models import AudioSegment
from orcabehavior_hub.core.utils import write_bytes

WAVE_FORMAT_PCM = 0x0001
WAVE_FORMAT_IEEE_FLOAT = 0x0003
WAVE_FORMAT_EXTENSIBLE = 0xFFFE

Encoding = Literal["pcm8", "pcm16", "pcm24", "float32"]

_ENCODINGS: dict[str, tuple[int, int]] = {
    "pcm8": (WAVE_FORMAT_PCM, 8),
    "pcm16": (WAVE_FORMAT_PCM, 16),
    "pcm24": (WAVE_FORMAT_PCM, 24),
    "float32": (WAVE_FORMAT_IEEE_FLOAT, 32),
}


@dataclass(frozen=True)
class WavFormat:
    """Содержимое чанка 'fmt ' (после разворачивания WAVE_FORMAT_EXTENSIBLE)."""

    format_tag: int
    channels: int
    sample_rate: int
    block_align: int
    bits_per_sample: int


# ------------------ чтение ------------------

def _parse_fmt(payload: bytes) -> WavFormat:
    if len(payload) < 16:
        raise AudioFormatError("fmt ", f"слишком короткий ({len(payload)} байт)")
    tag, channels, rate, _byte_rate, block_align, bits = struct.unpack(
        "<HHIIHH", payload[:16]
    )
    if tag == WAVE_FORMAT_EXTENSIBLE:
        # cbSize(2) validBits(2) channelMask(4) SubFormat GUID(16)
        if len(payload) < 40:
            raise AudioFormatError("fmt ", "усечённое расширение WAVE_FORMAT_EXTENSIBLE")  # noqa: E501
        tag = struct.unpack("<H", payload[24:26])[0]
    if channels < 1:
        raise AudioFormatError("fmt ", "число каналов должно быть >= 1")
    if rate <= 0:
        raise AudioFormatError("fmt ", "частота дискретизации должна быть > 0")
    if block_align != channels * ((bits + 7) // 8):
        raise AudioFormatError(
            "fmt ",
            f"block_align={block_align} не согласован с channels={channels}, "
            f"bits={bits}",
        )
    return WavFormat(tag, channels, rate, block_align, bits)


def _iter_chunks(blob: bytes):
    """Обходит чанки после заголовка RIFF/WAVE: (chunk_id, payload)."""
    pos = 12
    end = len(blob)
    while pos + 8 <= end:
        raw_id, size = struct.unpack("<4sI", blob[pos:pos + 8])
        chunk_id = raw_id.decode("latin-1")
        start = pos + 8
        if start + size > end:
            raise AudioFormatError(
                chunk_id,
                f"заявлено {size} байт, доступно {end - start}",
            )
        yield chunk_id, blob[start:start + size]
        # RIFF: чанки нечётной длины дополняются байтом-заполнителем
        pos = start + size + (size & 1)


def _decode_samples(data: bytes, fmt: WavFormat) -> np.ndarray:
    """Байты чанка 'data' -> float64 [frames x channels], целые масштабированы в [-1,1]."""  # noqa: E501
    tag, bits = fmt.format_tag, fmt.bits_per_sample
    usable = len(data) - len(data) % fmt.block_align
    data = data[:usable]
    if tag == WAVE_FORMAT_PCM and bits == 8:
        raw = np.frombuffer(data, dtype=np.uint8).astype(np.float64)
        flat = (raw - 128.0) / 128.0
    elif tag == WAVE_FORMAT_PCM and bits == 16:
        flat = np.frombuffer(data, dtype="<i2").astype(np.float64) / 32768.0
    elif tag == WAVE_FORMAT_PCM and bits == 24:
        b = np.frombuffer(data, dtype=np.uint8).reshape(-1, 3).astype(np.int32)
        vals = b[:, 0] | (b[:, 1] << 8) | (b[:, 2] << 16)
        vals = np.where(vals & 0x800000, vals - 0x1000000, vals)
        flat = vals.astype(np.float64) / 8_388_608.0
    elif tag == WAVE_FORMAT_IEEE_FLOAT and bits == 32:
        flat = np.frombuffer(data, dtype="<f4").astype(np.float64)
    else:
        raise UnsupportedEncodingError(tag, bits)
    return flat.reshape(-1, fmt.channels)


def read_wav(path: str, source_id: str | None = None) -> AudioSegment:
    """
    Прочитать RIFF/WAVE (PCM 8/16/24 или float32, 1+ каналов) в моно AudioSegment.
      - многоканальный звук сводится средним арифметическим по каналам;
      - целые отсчёты делятся на максимальный модуль типа (16 бит: 32768);
      - 'fmt ' обязан предшествовать 'data', прочие чанки пропускаются.
    """
    with open(path, "rb") as f:
        blob = f.read()

    if len(blob) < 12:
        raise AudioFormatError("RIFF", "файл слишком мал для заголовка RIFF/WAVE")
    riff, _size, wave = struct.unpack("<4sI4s", blob[:12])
    if riff != b"RIFF":
        raise AudioFormatError("RIFF", f"ожидалась сигнатура 'RIFF', получено {riff!r}")
    if wave != b"WAVE":
        raise AudioFormatError("RIFF", f"ожидался тип формы 'WAVE', получено {wave!r}")

    fmt: WavFormat | None = None
    frames: np.ndarray | None = None
    for chunk_id, payload in _iter_chunks(blob):
        if chunk_id == "fmt ":
            fmt = _parse_fmt(payload)
        elif chunk_id == "data":
            if fmt is None:
                raise AudioFormatError("data", "чанк 'data' встретился раньше 'fmt '")
            frames = _decode_samples(payload, fmt)
            break

    if fmt is None:
        raise AudioFormatError("fmt ", "чанк 'fmt ' не найден")
    if frames is None:
        raise AudioFormatError("data", "чанк 'data' не найден")
    if frames.shape[0] == 0:
        raise AudioFormatError("data", "нет ни одного отсчёта")

    mono = frames[:, 0] if fmt.channels == 1 else frames.mean(axis=1)
    sid = source_id if source_id is not None else os.path.splitext(
        os.path.basename(path))[0]
    return AudioSegment(mono, fmt.sample_rate, source_id=sid, offset_seconds=0.0)


# ------------------ запись ------------------

def _encode_samples(samples: np.ndarray, encoding: str) -> bytes:
    x = np.asarray(samples, dtype=np.float64)
    if encoding == "float32":
        return x.astype("<f4").tobytes()
    if encoding == "pcm8":
        q = np.clip(np.rint(x * 128.0), -128, 127).astype(np.int16) + 128
        return q.astype(np.uint8).tobytes()
    if encoding == "pcm16":
        return np.clip(np.rint(x * 32768.0), -32768, 32767).astype("<i2").tobytes()
    if encoding == "pcm24":
        q = np.clip(np.rint(x * 8_388_608.0), -8_388_608, 8_388_607).astype(np.int32)
        q = q & 0xFFFFFF
        b = np.stack([q & 0xFF, (q >> 8) & 0xFF, (q >> 16) & 0xFF], axis=1)
        return b.astype(np.uint8).tobytes()
    raise InvalidArgumentError(f"неизвестная кодировка записи {encoding!r}")


def encode_wav(seg: AudioSegment, encoding: Encoding = "pcm16") -> bytes:
    """Сериализовать моно-сегмент в байты RIFF/WAVE."""
    if encoding not in _ENCODINGS:
        raise InvalidArgumentError(f"неизвестная кодировка записи {encoding!r}")
    tag, bits = _ENCODINGS[encoding]
    rate = int(round(seg.sample_rate))
    if abs(rate - seg.sample_rate) > 1e-9:
        raise InvalidArgumentError(
            f"WAV хранит целую частоту дискретизации, получено {seg.sample_rate}"
        )
    block_align = (bits + 7) // 8
    data = _encode_samples(seg.samples, encoding)
    fmt_chunk = struct.pack(
        "<4sIHHIIHH", b"fmt ", 16, tag, 1, rate, rate * block_align, block_align, bits
    )
    pad = b"\x00" if len(data) & 1 else b""
    data_chunk = struct.pack("<4sI", b"data", len(data)) + data + pad
    body = b"WAVE" + fmt_chunk + data_chunk
    return struct.pack("<4sI", b"RIFF", len(body)) + body


def write_wav(path: str, seg: AudioSegment, encoding: Encoding = "pcm16") -> None:
    """Записать сегмент в WAV (атомарно). Квантование — к ближайшему с отсечением."""
    write_bytes(path, encode_wav(seg, encoding))
