import json
import os

import numpy as np
import pytest

from orcabehavior_hub.cli.interface import (
    EXIT_INTERNAL,
    EXIT_IO,
    EXIT_OK,
    EXIT_VALIDATION,
    build_parser,
    exit_code_for,
    main,
)
from orcabehavior_hub.cli.run_config import build_run_config
from orcabehavior_hub.core.exceptions import (
    AudioFormatError,
    SourceProcessingError,
    ValidationError,
)

SYNTH_FLAGS = ["--profile", "none", "--n-per-class", "3", "--duration", "0.1"]


def test_exit_codes():
    assert exit_code_for(ValidationError("x")) == EXIT_VALIDATION
    assert exit_code_for(FileNotFoundError(2, "нет", "a.wav")) == EXIT_IO
    assert exit_code_for(RuntimeError("boom")) == EXIT_INTERNAL
    wrapped = SourceProcessingError("s1", AudioFormatError("RIFF", "битый"))
    assert exit_code_for(wrapped) == EXIT_VALIDATION
    assert exit_code_for(SourceProcessingError("s1", PermissionError("x"))) == EXIT_IO


def test_help_exits_zero(capsys):
    assert main(["--help"]) == EXIT_OK
    assert "train" in capsys.readouterr().out


@pytest.mark.parametrize("argv", [
    [],
    ["train", "--bogus"],
    ["train"],
    ["baseline", "--manifest", "a.csv", "--counts", "b.csv"],
    ["train", "--synthetic", "--weights-mode", "soft"],
])
def test_bad_flags_are_validation_errors(argv, capsys):
    assert main(argv) == EXIT_VALIDATION
    assert "Ошибка:" in capsys.readouterr().err


def test_baseline_prints_corpus_table(capsys):
    assert main(["baseline"]) == EXIT_OK
    out = capsys.readouterr().out
    for value in ("55.0", "76.4", "74.7", "36.1", "32.8"):
        assert value in out
    assert "518" in out


def test_empty_manifest_is_rejected(tmp_path, capsys):
    manifest = tmp_path / "m.csv"
    manifest.write_text("source_id,path,labels\n", encoding="utf-8")
    assert main(["baseline", "--manifest", str(manifest)]) == EXIT_VALIDATION
    assert "манифест пуст" in capsys.readouterr().err


def test_segment_missing_file_is_io_error(tmp_path, capsys):
    missing = str(tmp_path / "nope.wav")
    assert main(["segment", missing, "--out", str(tmp_path / "o")]) == EXIT_IO
    assert "nope.wav" in capsys.readouterr().err


def test_segment_silence_writes_header_only(tmp_path, wav_writer):
    path = wav_writer("quiet.wav", np.zeros(21_900 * 3))
    out = tmp_path / "o"
    assert main(["segment", path, "--out", str(out)]) == EXIT_OK
    lines = (out / "quiet.spans.csv").read_text(encoding="utf-8").splitlines()
    assert len(lines) == 1


def test_corrupt_source_names_it(tmp_path, capsys):
    (tmp_path / "bad.wav").write_bytes(b"not a wav at all")
    manifest = tmp_path / "m.csv"
    manifest.write_text("source_id,path,labels\nbad,bad.wav,T\n", encoding="utf-8")
    code = main(["preprocess", "--manifest", str(manifest),
                 "--cache-dir", str(tmp_path / "c")])
    assert code == EXIT_VALIDATION
    assert "'bad'" in capsys.readouterr().err


def test_train_synthetic_writes_metrics(tmp_path, capsys):
    out = tmp_path / "run"
    argv = ["train", "--synthetic", *SYNTH_FLAGS, "--epochs", "1", "--reps", "2",
            "--batch-size", "4", "--out", str(out)]
    assert main(argv) == EXIT_OK
    rows = (out / "metrics.csv").read_text(encoding="utf-8").splitlines()
    assert rows[0] == "rep,epoch,train_loss,test_loss,test_acc"
    assert len(rows) == 5
    aggregate = json.loads((out / "aggregate.json").read_text(encoding="utf-8"))
    assert aggregate["run_config"]["train"]["epochs"] == 1
    assert aggregate["run_config"]["synthetic"]["n_per_class"] == 3
    assert "always_T" in capsys.readouterr().out


def test_run_config_layers_flags_over_config_file(tmp_path):
    (tmp_path / "config.json").write_text(
        json.dumps({"EPOCHS": 7, "BASE_LR": 0.001, "N_REPS": 3}), encoding="utf-8")
    ns = build_parser().parse_args(["train", "--synthetic", "--lr", "0.01"])
    run = build_run_config(ns)
    assert run.train.epochs == 7
    assert run.train.schedule.base_lr == 0.01
    assert run.n_reps == 3
    assert run.model.stage_widths == (16, 32, 64)
    assert run.synthetic.superfluous_profile == "corpus"


def test_synthetic_run_keeps_spectrogram_settings(tmp_path):
    (tmp_path / "config.json").write_text(
        json.dumps({"N_MELS": 64, "FFT_SIZE": 1024, "HOP": 256, "FMAX": 8000.0}),
        encoding="utf-8")
    run = build_run_config(build_parser().parse_args(["train", "--synthetic"]))
    assert run.spectrogram.n_mels == 64
    assert run.spectrogram.fft_size == 1024
    assert run.spectrogram.hop == 256
    assert run.spectrogram.fmax == 8000.0
    assert run.spectrogram.sample_rate == run.synthetic.sample_rate


def test_synthetic_run_clamps_fmax_to_nyquist(tmp_path):
    (tmp_path / "config.json").write_text(
        json.dumps({"SAMPLE_RATE": 44100.0, "FMAX": 22050.0, "N_MELS": 96}),
        encoding="utf-8")
    run = build_run_config(build_parser().parse_args(["train", "--synthetic"]))
    assert run.spectrogram.sample_rate == 21_900.0
    assert run.spectrogram.fmax == 10_950.0
    assert run.spectrogram.n_mels == 96


def test_run_config_resnet34_and_cache_default(tmp_path):
    ns = build_parser().parse_args(["train", "--cache-dir", "c", "--resnet34",
                                    "--replicate-channels", "--seed", "9"])
    run = build_run_config(ns)
    assert run.model.stage_widths == (64, 128, 256, 512)
    assert run.model.replicate_channels
    assert run.model.seed == 9
    assert run.synthetic is None

    ns = build_parser().parse_args(["preprocess", "--manifest", "m.csv"])
    assert build_run_config(ns).paths["cache_dir"] == str(tmp_path / "cache")


@pytest.mark.slow
def test_end_to_end_pipeline(tmp_path, capsys):
    corpus, cache, run = (str(tmp_path / n) for n in ("corpus", "cache", "run"))
    assert main(["synth", "--out", corpus, *SYNTH_FLAGS, "--seed", "1"]) == EXIT_OK
    manifest = os.path.join(corpus, "manifest.csv")
    assert main(["preprocess", "--manifest", manifest, "--cache-dir", cache]) == EXIT_OK
    assert main(["train", "--cache-dir", cache,
                 "--truth", os.path.join(corpus, "truth.csv"),
                 "--epochs", "1", "--reps", "1", "--batch-size", "4",
                 "--save-checkpoints", "--out", run]) == EXIT_OK
    ckpt = os.path.join(run, "checkpoints", "rep00.ckpt")
    report = str(tmp_path / "pred.csv")
    assert main(["report", "--checkpoint", ckpt, "--cache-dir", cache,
                 "--test-only", "--out", report]) == EXIT_OK
    with open(report, encoding="utf-8") as f:
        assert len(f.read().splitlines()) == 5
    out = capsys.readouterr().out
    assert "Prediction" in out
    # повторный preprocess берёт всё из кэша
    assert main(["preprocess", "--manifest", manifest, "--cache-dir", cache]) == EXIT_OK
