import os

import numpy as np
import pytest

from orcabehavior_hub.audio.segmenter import write_spans_csv
from orcabehavior_hub.audio.wav_io import write_wav
from orcabehavior_hub.core.behaviors import CandidateLabelSet
from orcabehavior_hub.core.exceptions import (
    AudioFormatError,
    SourceProcessingError,
    ValidationError,
)
from orcabehavior_hub.core.models import (
    AudioSegment,
    ManifestEntry,
    SegmentationConfig,
    SegmentSpan,
    SpectrogramConfig,
)
from orcabehavior_hub.dataset.cache import InstanceCache
from orcabehavior_hub.dataset.manifest import save_manifest
from orcabehavior_hub.dataset.preprocess import (
    ManifestPreprocessor,
    instance_id_for,
    source_of,
)

from .conftest import SR, bursts


def _source(root, sid, seconds, spans, seed=0, sample_rate=SR):
    rng = np.random.default_rng(seed)
    x = rng.normal(0, 0.05, int(seconds * sample_rate))
    write_wav(str(root / "audio" / f"{sid}.wav"), AudioSegment(x, sample_rate))
    write_spans_csv(str(root / "spans" / f"{sid}.csv"), sid,
                    [SegmentSpan(a, b) for a, b in spans])
    return ManifestEntry(sid, f"audio/{sid}.wav", CandidateLabelSet.from_letters("TF"),
                         f"spans/{sid}.csv")


def _run(root, entries, **kwargs):
    manifest = str(root / "manifest.csv")
    save_manifest(manifest, entries)
    cache = InstanceCache(str(root / "cache"))
    pre = ManifestPreprocessor(cache, SpectrogramConfig(), SegmentationConfig(), **kwargs)
    return pre.run(manifest, entries), cache


def test_instance_ids():
    assert instance_id_for("rec01", 2) == "rec01#002"
    assert source_of("rec01#002") == "rec01"


def test_preprocess_pads_to_longest_segment(tmp_path):
    entries = [_source(tmp_path, "a", 3.0, [(0.0, 1.0), (1.5, 2.0)]),
               _source(tmp_path, "b", 2.0, [(0.0, 2.0)], seed=1)]
    summary, _ = _run(tmp_path, entries)
    assert summary["count"] == 3
    assert summary["target_len"] == 2 * SR
    assert summary["recomputed"] == ["a", "b"]

    instances = InstanceCache(str(tmp_path / "cache")).load_instances()
    assert [i.instance_id for i in instances] == ["a#000", "a#001", "b#000"]
    frames = 1 + (2 * SR - 512) // 512
    assert all(i.image.shape == (128, frames) for i in instances)
    assert all(i.label_set.letters == "TF" for i in instances)


def test_second_run_hits_cache(tmp_path):
    entries = [_source(tmp_path, "a", 2.0, [(0.0, 1.0)]),
               _source(tmp_path, "b", 2.0, [(0.5, 1.5)], seed=1)]
    _run(tmp_path, entries)
    summary, _ = _run(tmp_path, entries)
    assert summary["recomputed"] == []
    assert summary["cache_hits"] == ["a", "b"]


def test_changed_source_is_recomputed_alone(tmp_path):
    entries = [_source(tmp_path, "a", 2.0, [(0.0, 1.0)]),
               _source(tmp_path, "b", 2.0, [(0.5, 1.5)], seed=1)]
    _run(tmp_path, entries)
    _source(tmp_path, "b", 2.0, [(0.5, 1.5)], seed=99)
    summary, _ = _run(tmp_path, entries)
    assert summary["recomputed"] == ["b"]
    assert summary["cache_hits"] == ["a"]


def test_changed_labels_invalidate_source(tmp_path):
    entries = [_source(tmp_path, "a", 2.0, [(0.0, 1.0)])]
    _run(tmp_path, entries)
    relabeled = [ManifestEntry("a", entries[0].path, CandidateLabelSet.from_letters("S"),  # noqa: E501
                               entries[0].spans_path)]
    summary, cache = _run(tmp_path, relabeled)
    assert summary["recomputed"] == ["a"]
    assert cache.load_instances()[0].label_set.letters == "S"


def test_longer_segment_forces_full_rebuild(tmp_path):
    entries = [_source(tmp_path, "a", 3.0, [(0.0, 1.0)]),
               _source(tmp_path, "b", 3.0, [(0.0, 1.0)], seed=1)]
    _run(tmp_path, entries)
    _source(tmp_path, "b", 3.0, [(0.0, 2.5)], seed=1)
    summary, cache = _run(tmp_path, entries)
    assert summary["recomputed"] == ["a", "b"]
    assert cache.target_len == int(2.5 * SR)


def test_dropped_source_leaves_index(tmp_path):
    entries = [_source(tmp_path, "a", 2.0, [(0.0, 1.0)]),
               _source(tmp_path, "b", 2.0, [(0.0, 1.0)], seed=1)]
    _run(tmp_path, entries)
    _, cache = _run(tmp_path, entries[:1])
    assert cache.source_ids() == ["a"]


def _cache_files(cache):
    out = set()
    for sub in ("tensors", "pgm"):
        folder = os.path.join(cache.root, sub)
        if os.path.isdir(folder):
            out |= {os.path.join(sub, name) for name in os.listdir(folder)}
    return out


def test_rebuild_removes_unreferenced_files(tmp_path):
    entries = [_source(tmp_path, "a", 2.0, [(0.0, 1.0)]),
               _source(tmp_path, "b", 6.0, [(0.0, 1.0), (4.0, 5.0)], seed=1)]
    _, cache = _run(tmp_path, entries, write_pgm=True)
    assert len(_cache_files(cache)) == 6

    _source(tmp_path, "b", 6.0, [(0.0, 1.0)], seed=1)
    summary, cache = _run(tmp_path, entries[1:], write_pgm=True)
    assert summary["pruned"] == 4
    files = _cache_files(cache)
    assert files == {os.path.join("tensors", "b_000.spec"),
                     os.path.join("pgm", "b_000.pgm")}
    assert {f for f in files if f.startswith("tensors")} == {
        os.path.normpath(s["tensor"]) for s in cache.source_record("b")["segments"]}


def test_source_at_other_rate_is_resampled(tmp_path):
    entries = [_source(tmp_path, "a", 1.0, [(0.0, 1.0)], sample_rate=44_100)]
    summary, _ = _run(tmp_path, entries)
    assert summary["target_len"] == SR


def test_energy_detector_without_spans(tmp_path):
    write_wav(str(tmp_path / "r.wav"),
              AudioSegment(bursts(8.0, [(1.0, 2.0), (5.0, 6.0)]), SR))
    entry = ManifestEntry("r", "r.wav", CandidateLabelSet.from_letters("M"))
    summary, _ = _run(tmp_path, [entry])
    assert summary["count"] == 2


def test_pgm_preview(tmp_path):
    entries = [_source(tmp_path, "a", 1.0, [(0.0, 1.0)])]
    _, cache = _run(tmp_path, entries, write_pgm=True)
    assert os.path.exists(cache.pgm_path("a#000"))


def test_corrupt_source_is_named(tmp_path):
    entries = [_source(tmp_path, "a", 1.0, [(0.0, 1.0)])]
    (tmp_path / "audio" / "bad.wav").write_bytes(b"not a wav at all")
    entries.append(ManifestEntry("bad", "audio/bad.wav",
                                 CandidateLabelSet.from_letters("T")))
    with pytest.raises(SourceProcessingError) as err:
        _run(tmp_path, entries)
    assert err.value.source_id == "bad"
    assert isinstance(err.value.cause, AudioFormatError)


def test_missing_source_file(tmp_path):
    entry = ManifestEntry("x", "audio/x.wav", CandidateLabelSet.from_letters("T"))
    with pytest.raises(SourceProcessingError) as err:
        _run(tmp_path, [entry])
    assert isinstance(err.value.cause, FileNotFoundError)


def test_no_segments_anywhere(tmp_path):
    write_wav(str(tmp_path / "quiet.wav"), AudioSegment(np.zeros(SR * 2), SR))
    entry = ManifestEntry("q", "quiet.wav", CandidateLabelSet.from_letters("T"))
    with pytest.raises(ValidationError):
        _run(tmp_path, [entry])


def test_empty_cache_cannot_be_loaded(tmp_path):
    with pytest.raises(ValidationError):
        InstanceCache(str(tmp_path / "empty")).load_instances()
