from __future__ import annotations

import hashlib
import json
import os
from typing import Any, Dict, Iterable

import numpy as np

from orcabehavior_hub.audio.spectrogram import read_spec_tensor, write_spec_tensor
from orcabehavior_hub.core.behaviors import CandidateLabelSet
from orcabehavior_hub.core.exceptions import ValidationError
from orcabehavior_hub.core.models import (
    LabeledInstance,
    SpectrogramConfig,
    SpectrogramImage,
)
from orcabehavior_hub.core.utils import read_json, utc_iso_now, write_json
from orcabehavior_hub.infra.settings import SettingsLoader

INDEX_FILE = "index.json"
TENSOR_DIR = "tensors"
PGM_DIR = "pgm"
INDEX_VERSION = 1


def config_fingerprint(payload: Dict[str, Any]) -> str:
    """sha256 от канонического JSON параметров обработки."""
    blob = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


def safe_name(instance_id: str) -> str:
    return "".join(c if c.isalnum() or c in "-_." else "_" for c in instance_id)


class InstanceCache:
    """
    Кэш экземпляров обучения на диске.

    Структура каталога:
      <root>/index.json         — индекс (см. ниже)
      <root>/tensors/<id>.spec  — нормализованные изображения в SPEC1
      <root>/pgm/<id>.pgm       — опциональные превью

    Формат index.json:
    {
      "version": 1,
      "fingerprint": "<sha256 параметров>",
      "spectrogram": {...SpectrogramConfig...},
      "target_len": 43800,
      "updated_at": "2025-10-09T10:35:00",
      "sources": {
        "rec01": {
          "path": "audio/rec01.wav", "labels": "TF",
          "mtime": 1728469200.0, "sha256": "...", "spans_sha256": null,
          "segments": [{"instance_id": "rec01#000", "n_samples": 21900,
                        "offset_s": 12.5, "tensor": "tensors/rec01_000.spec"}]
        }
      }
    }
    Источник считается свежим, если совпадают mtime, sha256 и fingerprint.
    """

    def __init__(self, root: str | None = None) -> None:
        self._root = root or SettingsLoader().cache_dir()
        self._index: Dict[str, Any] = self._read_index()

    # --- internal ---
    def _read_index(self) -> Dict[str, Any]:
        data = read_json(self.index_path, default={})
        if not isinstance(data, dict) or data.get("version") != INDEX_VERSION:
            data = {}
        data.setdefault("version", INDEX_VERSION)
        data.setdefault("fingerprint", "")
        data.setdefault("sources", {})
        return data

    # --- paths ---
    @property
    def root(self) -> str:
        return self._root

    @property
    def index_path(self) -> str:
        return os.path.join(self._root, INDEX_FILE)

    def tensor_path(self, instance_id: str) -> str:
        return os.path.join(self._root, TENSOR_DIR, safe_name(instance_id) + ".spec")

    def pgm_path(self, instance_id: str) -> str:
        return os.path.join(self._root, PGM_DIR, safe_name(instance_id) + ".pgm")

    # --- index state ---
    @property
    def fingerprint(self) -> str:
        return str(self._index.get("fingerprint", ""))

    @property
    def target_len(self) -> int | None:
        v = self._index.get("target_len")
        return int(v) if v is not None else None

    def source_ids(self) -> list[str]:
        return sorted(self._index["sources"])

    def source_record(self, source_id: str) -> Dict[str, Any] | None:
        rec = self._index["sources"].get(source_id)
        return rec if isinstance(rec, dict) else None

    def is_fresh(self, source_id: str, labels: str, mtime: float, sha256: str,
                 spans_sha256: str | None, fingerprint: str) -> bool:
        rec = self.source_record(source_id)
        if rec is None or fingerprint != self.fingerprint:
            return False
        if rec.get("labels") != labels:
            return False
        if rec.get("sha256") != sha256 or rec.get("spans_sha256") != spans_sha256:
            return False
        if abs(float(rec.get("mtime", -1.0)) - float(mtime)) > 1e-6:
            return False
        return all(
            os.path.exists(os.path.join(self._root, s["tensor"]))
            for s in rec.get("segments", [])
        )

    def begin(self, fingerprint: str, spec_cfg: SpectrogramConfig,
              target_len: int) -> None:
        """Новый проход обработки: при смене параметров старые записи сбрасываются."""
        if fingerprint != self.fingerprint or target_len != self.target_len:
            self._index["sources"] = {}
        self._index["fingerprint"] = fingerprint
        self._index["spectrogram"] = spec_cfg.to_dict()
        self._index["target_len"] = int(target_len)

    def store_source(self, source_id: str, record: Dict[str, Any],
                     images: Dict[str, np.ndarray]) -> None:
        """Сохранить тензоры сегментов источника и обновить запись индекса."""
        segments = []
        for seg in record.get("segments", []):
            iid = seg["instance_id"]
            path = self.tensor_path(iid)
            write_spec_tensor(path, images[iid])
            segments.append({**seg, "tensor": os.path.relpath(path, self._root)})
        self._index["sources"][source_id] = {**record, "segments": segments}

    def retain_only(self, source_ids: Iterable[str]) -> None:
        keep = set(source_ids)
        for sid in list(self._index["sources"]):
            if sid not in keep:
                del self._index["sources"][sid]

    def referenced_files(self) -> set[str]:
        """Пути (относительно root) тензоров и превью, на которые ссылается индекс."""
        out: set[str] = set()
        for rec in self._index["sources"].values():
            for seg in rec.get("segments", []):
                out.add(os.path.normpath(seg["tensor"]))
                out.add(os.path.relpath(self.pgm_path(seg["instance_id"]), self._root))
        return out

    def prune_files(self) -> list[str]:
        """Удалить тензоры и превью, которых больше нет в индексе."""
        keep = self.referenced_files()
        removed: list[str] = []
        for sub in (TENSOR_DIR, PGM_DIR):
            folder = os.path.join(self._root, sub)
            if not os.path.isdir(folder):
                continue
            for name in sorted(os.listdir(folder)):
                rel = os.path.join(sub, name)
                if rel not in keep and os.path.isfile(os.path.join(folder, name)):
                    os.remove(os.path.join(folder, name))
                    removed.append(rel)
        return removed

    def save(self) -> list[str]:
        """Записать индекс и убрать осиротевшие файлы; вернуть удалённые пути."""
        self._index["updated_at"] = utc_iso_now()
        write_json(self.index_path, self._index, atomic=True)
        return self.prune_files()

    # --- чтение ---
    def spectrogram_config(self) -> SpectrogramConfig:
        cfg = self._index.get("spectrogram")
        if not isinstance(cfg, dict):
            raise ValidationError(f"{self.index_path}: нет параметров спектрограммы")
        return SpectrogramConfig(**cfg)

    def load_instances(self) -> list[LabeledInstance]:
        """Все экземпляры кэша в порядке (source_id, instance_id)."""
        if not self._index["sources"]:
            raise ValidationError(f"кэш '{self._root}' пуст: сначала выполните preprocess")  # noqa: E501
        cfg = self.spectrogram_config()
        out: list[LabeledInstance] = []
        for sid in self.source_ids():
            rec = self._index["sources"][sid]
            label_set = CandidateLabelSet.from_letters(rec["labels"])
            for seg in rec.get("segments", []):
                values = read_spec_tensor(os.path.join(self._root, seg["tensor"]))
                image = SpectrogramImage(np.clip(values, 0.0, 255.0), "normalized", cfg)
                out.append(LabeledInstance(seg["instance_id"], image, label_set))
        return out
