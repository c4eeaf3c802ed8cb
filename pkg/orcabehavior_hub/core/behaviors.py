from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum
from typing import Iterable, Iterator

import numpy as np

from orcabehavior_hub.core.exceptions import ValidationError


class Behavior(IntEnum):
    """
    Поведение касаток. Индексы фиксированы и совпадают с головами сети:
      T=0 (traveling), F=1 (foraging), S=2 (socializing), M=3 (milling/resting)
    """

    T = 0
    F = 1
    S = 2
    M = 3

    @property
    def title(self) -> str:
        return _TITLES[self]

    @classmethod
    def from_letter(cls, letter: str) -> "Behavior":
        if not isinstance(letter, str) or len(letter.strip()) != 1:
            raise ValidationError(f"ожидалась одна буква поведения, получено {letter!r}")  # noqa: E501
        c = letter.strip().upper()
        try:
            return cls[c]
        except KeyError:
            codes = ", ".join(b.name for b in cls)
            raise ValidationError(
                f"неизвестное поведение '{c}' (поддерживаются: {codes})"
            ) from None


_TITLES = {
    Behavior.T: "traveling",
    Behavior.F: "foraging",
    Behavior.S: "socializing",
    Behavior.M: "milling/resting",
}

N_BEHAVIORS = len(Behavior)
_FULL_MASK = (1 << N_BEHAVIORS) - 1


@dataclass(frozen=True, order=True)
class CandidateLabelSet:
    """
    Множество кандидатных меток как 4-битная маска над Behavior.
    Пустое множество запрещено: у каждого экземпляра есть хотя бы один кандидат.
    """

    mask: int

    def __post_init__(self) -> None:
        if not isinstance(self.mask, (int, np.integer)):
            raise ValidationError("mask должен быть целым числом")
        if not (0 < int(self.mask) <= _FULL_MASK):
            raise ValidationError(
                f"множество меток должно быть непустым подмножеством TFSM "
                f"(mask={self.mask})"
            )
        object.__setattr__(self, "mask", int(self.mask))

    # --- конструкторы ---
    @classmethod
    def from_letters(cls, letters: str) -> "CandidateLabelSet":
        """'TF' -> {T,F}. Регистр и порядок букв не важны, пробелы/запятые игнорируются."""  # noqa: E501
        if not isinstance(letters, str):
            raise ValidationError("поле меток должно быть строкой")
        cleaned = letters.replace(",", "").replace(" ", "").replace("{", "")
        cleaned = cleaned.replace("}", "")
        if not cleaned:
            raise ValidationError("пустое поле меток")
        return cls.of(Behavior.from_letter(ch) for ch in cleaned)

    @classmethod
    def of(cls, behaviors: Iterable[Behavior | int]) -> "CandidateLabelSet":
        mask = 0
        for b in behaviors:
            mask |= 1 << int(Behavior(int(b)))
        return cls(mask)

    @classmethod
    def full(cls) -> "CandidateLabelSet":
        return cls(_FULL_MASK)

    # --- запросы ---
    def __contains__(self, item: object) -> bool:
        try:
            idx = int(item)  # type: ignore[arg-type]
        except (TypeError, ValueError):
            return False
        return 0 <= idx < N_BEHAVIORS and bool(self.mask >> idx & 1)

    def __iter__(self) -> Iterator[Behavior]:
        return (b for b in Behavior if self.mask >> int(b) & 1)

    def __len__(self) -> int:
        return bin(self.mask).count("1")

    @property
    def letters(self) -> str:
        """Канонический вид: буквы в порядке T, F, S, M."""
        return "".join(b.name for b in self)

    def as_array(self, dtype=np.float64) -> np.ndarray:
        """Маска длины 4: 1.0 для кандидатов, 0.0 иначе."""
        return np.array(
            [1.0 if b in self else 0.0 for b in Behavior], dtype=dtype
        )

    def __str__(self) -> str:
        return "{" + ", ".join(b.name for b in self) + "}"

    def __repr__(self) -> str:
        return f"<CandidateLabelSet {self}>"


# Число сегментов по комбинациям меток в исходном корпусе
CORPUS_COUNTS: dict[CandidateLabelSet, int] = {
    CandidateLabelSet.from_letters("T"): 124,
    CandidateLabelSet.from_letters("FS"): 122,
    CandidateLabelSet.from_letters("TS"): 7,
    CandidateLabelSet.from_letters("TF"): 95,
    CandidateLabelSet.from_letters("TFM"): 112,
    CandidateLabelSet.from_letters("TFSM"): 58,
}


def label_masks(label_sets: Iterable[CandidateLabelSet | int]) -> np.ndarray:
    """
    Матрица масок [B x 4] (float64).
    Принимает CandidateLabelSet или «сырые» int-маски (последние не валидируются,
    чтобы функции потерь могли сами сообщить о пустом множестве).
    """
    rows = []
    for ls in label_sets:
        m = ls.mask if isinstance(ls, CandidateLabelSet) else int(ls)
        rows.append([float(m >> i & 1) for i in range(N_BEHAVIORS)])
    return np.asarray(rows, dtype=np.float64).reshape(-1, N_BEHAVIORS)
