from __future__ import annotations

import hashlib
import json
import math
import os
import tempfile
import time
from typing import Any

__all__ = [
    "read_json",
    "write_json",
    "write_bytes",
    "ensure_parent_dir",
    "sha256_file",
    "round_half_up",
    "utc_iso_now",
]


def utc_iso_now() -> str:
    """Текущее UTC-время в ISO без миллисекунд: 'YYYY-MM-DDTHH:MM:SS'."""
    return time.strftime("%Y-%m-%dT%H:%M:%S", time.gmtime())


def round_half_up(x: float) -> int:
    """Округление «половина вверх»: 24.8 -> 25, 1.4 -> 1, 2.5 -> 3."""
    return int(math.floor(x + 0.5 + 1e-12))


def ensure_parent_dir(path: str) -> None:
    """Создаёт родительскую директорию для файла, если её нет."""
    d = os.path.dirname(path) or "."
    os.makedirs(d, exist_ok=True)


def sha256_file(path: str, chunk_size: int = 1 << 20) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for block in iter(lambda: f.read(chunk_size), b""):
            h.update(block)
    return h.hexdigest()


def read_json(path: str, default: Any = None) -> Any:
    """Безопасное чтение JSON. При отсутствии или битом файле вернёт default."""
    try:
        with open(path, "r", encoding="utf-8") as f:
            return json.load(f)
    except FileNotFoundError:
        return default
    except json.JSONDecodeError:
        return default


def _atomic_replace(path: str, writer, mode: str) -> None:
    ensure_parent_dir(path)
    dir_ = os.path.dirname(path) or "."
    fd, tmp = tempfile.mkstemp(prefix=".tmp_", dir=dir_)
    try:
        kwargs = {"encoding": "utf-8"} if "b" not in mode else {}
        with os.fdopen(fd, mode, **kwargs) as f:
            writer(f)
        os.replace(tmp, path)  # атомарная подмена
    finally:
        # если os.replace не сработал — tmp уберётся здесь
        if os.path.exists(tmp) and os.path.isfile(tmp):
            try:
                os.remove(tmp)
            except OSError:
                pass


def write_json(path: str, data: Any, *, atomic: bool = True) -> None:
    """
    Запись JSON. По умолчанию — атомарно (tmp → rename) в той же директории.
    Ключи сортируются, чтобы повторный запуск давал побайтно тот же файл.
    """
    def _dump(f):
        json.dump(data, f, ensure_ascii=False, indent=2, sort_keys=True)
        f.write("\n")

    if not atomic:
        ensure_parent_dir(path)
        with open(path, "w", encoding="utf-8") as f:
            _dump(f)
        return
    _atomic_replace(path, _dump, "w")


def write_bytes(path: str, payload: bytes) -> None:
    """Атомарная запись бинарного файла."""
    _atomic_replace(path, lambda f: f.write(payload), "wb")
