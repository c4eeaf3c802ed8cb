from __future__ import annotations

import csv
import os
from collections import Counter
from typing import Iterable, Mapping

from orcabehavior_hub.core.behaviors import CandidateLabelSet
from orcabehavior_hub.core.exceptions import ValidationError
from orcabehavior_hub.core.models import ManifestEntry
from orcabehavior_hub.core.utils import ensure_parent_dir

MANIFEST_HEADER = ("source_id", "path", "labels")
OPTIONAL_COLUMNS = ("spans",)
COUNTS_HEADER = ("labels", "count")


def load_manifest(path: str) -> list[ManifestEntry]:
    """
    CSV с заголовком `source_id,path,labels[,spans]`; labels — буквы из TFSM.
    Ошибки валидации: пустые метки, неизвестная буква, повтор source_id,
    пустой манифест. Относительные пути остаются как есть
    (разрешаются относительно каталога манифеста в resolve_path()).
    """
    if not os.path.exists(path):
        raise FileNotFoundError(path)
    entries: list[ManifestEntry] = []
    seen: set[str] = set()
    with open(path, "r", encoding="utf-8", newline="") as f:
        reader = csv.DictReader(f)
        fields = [c.strip() for c in (reader.fieldnames or [])]
        missing = [c for c in MANIFEST_HEADER if c not in fields]
        if missing:
            raise ValidationError(
                f"{path}: в заголовке нет колонок {', '.join(missing)}"
            )
        for lineno, raw in enumerate(reader, start=2):
            row = {(k or "").strip(): (v or "").strip() for k, v in raw.items()}
            sid = row.get("source_id", "")
            labels = row.get("labels", "")
            if not labels:
                raise ValidationError(f"{path}:{lineno}: пустое поле labels у '{sid}'")
            if sid in seen:
                raise ValidationError(f"{path}:{lineno}: повторный source_id '{sid}'")
            try:
                label_set = CandidateLabelSet.from_letters(labels)
            except ValidationError as e:
                raise ValidationError(f"{path}:{lineno}: {e.reason}") from e
            try:
                entry = ManifestEntry(
                    source_id=sid,
                    path=row.get("path", ""),
                    label_set=label_set,
                    spans_path=row.get("spans") or None,
                )
            except ValidationError as e:
                raise ValidationError(f"{path}:{lineno}: {e.reason}") from e
            seen.add(sid)
            entries.append(entry)
    if not entries:
        raise ValidationError(f"{path}: манифест пуст")
    return entries


def save_manifest(path: str, entries: Iterable[ManifestEntry]) -> None:
    entries = list(entries)
    with_spans = any(e.spans_path for e in entries)
    header = list(MANIFEST_HEADER) + (["spans"] if with_spans else [])
    ensure_parent_dir(path)
    with open(path, "w", encoding="utf-8", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(header)
        for e in entries:
            row = [e.source_id, e.path, e.label_set.letters]
            if with_spans:
                row.append(e.spans_path or "")
            w.writerow(row)


def resolve_path(manifest_path: str, entry_path: str) -> str:
    """Путь из манифеста: абсолютный — как есть, относительный — от каталога манифеста."""  # noqa: E501
    if os.path.isabs(entry_path):
        return entry_path
    return os.path.normpath(os.path.join(os.path.dirname(manifest_path), entry_path))


def combination_counts(
        label_sets: Iterable[CandidateLabelSet],
) -> dict[CandidateLabelSet, int]:
    """Гистограмма комбинаций меток (ключи упорядочены по маске)."""
    c = Counter(label_sets)
    return {k: c[k] for k in sorted(c)}


def load_counts(path: str) -> dict[CandidateLabelSet, int]:
    """CSV `labels,count` (например, строки таблицы частот корпуса)."""
    if not os.path.exists(path):
        raise FileNotFoundError(path)
    counts: dict[CandidateLabelSet, int] = {}
    with open(path, "r", encoding="utf-8", newline="") as f:
        reader = csv.DictReader(f)
        fields = [c.strip() for c in (reader.fieldnames or [])]
        if any(c not in fields for c in COUNTS_HEADER):
            raise ValidationError(f"{path}: ожидался заголовок labels,count")
        for lineno, raw in enumerate(reader, start=2):
            row = {(k or "").strip(): (v or "").strip() for k, v in raw.items()}
            try:
                ls = CandidateLabelSet.from_letters(row.get("labels", ""))
                n = int(row.get("count", ""))
            except ValueError:
                raise ValidationError(f"{path}:{lineno}: count должен быть целым")
            except ValidationError as e:
                raise ValidationError(f"{path}:{lineno}: {e.reason}") from e
            if n < 0:
                raise ValidationError(f"{path}:{lineno}: отрицательное число")
            counts[ls] = counts.get(ls, 0) + n
    if not counts:
        raise ValidationError(f"{path}: нет ни одной строки")
    return counts


def save_counts(path: str, counts: Mapping[CandidateLabelSet, int]) -> None:
    ensure_parent_dir(path)
    with open(path, "w", encoding="utf-8", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(COUNTS_HEADER)
        for ls, n in counts.items():
            w.writerow([ls.letters, int(n)])
