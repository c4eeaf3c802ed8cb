"""
Чекпоинт модели:
  b"CKPT1" | u32 длина заголовка | заголовок JSON (UTF-8) | тензоры в SPEC1

Заголовок: {"model": ModelConfig.to_dict(), "parameters": [{"name", "shape"}],
"extra": {...}}. Тензор параметра формы (d0, d1, ...) хранится как SPEC1-матрица
d0 x prod(d1, ...); для float32-моделей сохранение/загрузка побитово точны.
"""
from __future__ import annotations

import json
import struct
from typing import Any, Dict

import numpy as np

from orcabehavior_hub.audio.spectrogram import decode_spec_tensor, encode_spec_tensor
from orcabehavior_hub.core.exceptions import ValidationError
from orcabehavior_hub.core.utils import write_bytes
from orcabehavior_hub.nn.layers import ModelConfig, ResNetClassifier

CKPT_MAGIC = b"CKPT1"


def encode_checkpoint(model: ResNetClassifier, extra: Dict[str, Any] | None = None) -> bytes:  # noqa: E501
    named = list(model.named_parameters())
    header = {
        "model": model.config.to_dict(),
        "parameters": [{"name": n, "shape": list(p.shape)} for n, p in named],
        "extra": extra or {},
    }
    head = json.dumps(header, sort_keys=True).encode("utf-8")
    parts = [CKPT_MAGIC, struct.pack("<I", len(head)), head]
    for _, p in named:
        rows = p.shape[0] if p.ndim else 1
        parts.append(encode_spec_tensor(p.data.reshape(rows, -1)))
    return b"".join(parts)


def decode_checkpoint(blob: bytes) -> tuple[ResNetClassifier, Dict[str, Any]]:
    if blob[: len(CKPT_MAGIC)] != CKPT_MAGIC:
        raise ValidationError("ожидалась сигнатура 'CKPT1'")
    start = len(CKPT_MAGIC)
    if len(blob) < start + 4:
        raise ValidationError("усечённый заголовок CKPT1")
    (head_len,) = struct.unpack("<I", blob[start:start + 4])
    offset = start + 4 + head_len
    try:
        header = json.loads(blob[start + 4:offset].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise ValidationError(f"битый JSON-заголовок чекпоинта: {e}") from e

    model = ResNetClassifier(ModelConfig.from_dict(header.get("model", {})))
    expected = [(d["name"], tuple(d["shape"])) for d in header.get("parameters", [])]
    actual = [(n, p.shape) for n, p in model.named_parameters()]
    if expected != actual:
        raise ValidationError("набор параметров чекпоинта не совпадает с архитектурой")

    for name, p in model.named_parameters():
        values, offset = decode_spec_tensor(blob, offset)
        if values.size != p.size:
            raise ValidationError(f"размер параметра '{name}' не совпадает с заголовком")  # noqa: E501
        p.data = values.reshape(p.shape).astype(p.data.dtype)
    return model, dict(header.get("extra", {}))


def save_checkpoint(path: str, model: ResNetClassifier,
                    extra: Dict[str, Any] | None = None) -> None:
    write_bytes(path, encode_checkpoint(model, extra))


def load_checkpoint(path: str) -> tuple[ResNetClassifier, Dict[str, Any]]:
    with open(path, "rb") as f:
        return decode_checkpoint(f.read())


def parameters_equal(a: ResNetClassifier, b: ResNetClassifier) -> bool:
    pa, pb = list(a.named_parameters()), list(b.named_parameters())
    return len(pa) == len(pb) and all(
        na == nb and np.array_equal(x.data, y.data) for (na, x), (nb, y) in zip(pa, pb)
    )
