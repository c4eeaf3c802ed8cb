import numpy as np
import pytest

from orcabehavior_hub.core.behaviors import (
    CORPUS_COUNTS,
    Behavior,
    CandidateLabelSet,
    label_masks,
)
from orcabehavior_hub.core.exceptions import ValidationError


def test_behavior_indices_are_fixed():
    assert [(b.name, int(b)) for b in Behavior] == [("T", 0), ("F", 1), ("S", 2), ("M", 3)]  # noqa: E501
    assert Behavior.from_letter(" m ") is Behavior.M


@pytest.mark.parametrize("letter", ["X", "", "TF", None])
def test_bad_behavior_letter(letter):
    with pytest.raises(ValidationError):
        Behavior.from_letter(letter)


def test_label_set_from_letters_is_canonical():
    ls = CandidateLabelSet.from_letters("m, t f")
    assert ls.letters == "TFM"
    assert ls.mask == 0b1011
    assert len(ls) == 3
    assert Behavior.S not in ls
    assert 0 in ls
    assert str(ls) == "{T, F, M}"
    assert ls.as_array().tolist() == [1.0, 1.0, 0.0, 1.0]


@pytest.mark.parametrize("mask", [0, 16, -1])
def test_label_set_must_be_nonempty_subset(mask):
    with pytest.raises(ValidationError):
        CandidateLabelSet(mask)


@pytest.mark.parametrize("letters", ["", "TQ", ","])
def test_label_set_rejects_bad_letters(letters):
    with pytest.raises(ValidationError):
        CandidateLabelSet.from_letters(letters)


def test_label_masks_accepts_raw_ints():
    m = label_masks([CandidateLabelSet.from_letters("TS"), 0])
    assert m.shape == (2, 4)
    assert m[0].tolist() == [1.0, 0.0, 1.0, 0.0]
    assert not m[1].any()


def test_corpus_counts():
    assert sum(CORPUS_COUNTS.values()) == 518
    assert CORPUS_COUNTS[CandidateLabelSet.full()] == 58
    assert np.isclose(sum(len(k) * v for k, v in CORPUS_COUNTS.items()), 1_140)
