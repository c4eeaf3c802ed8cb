import math
import os

import numpy as np
import pytest

from orcabehavior_hub.core.behaviors import CandidateLabelSet
from orcabehavior_hub.core.exceptions import InvalidArgumentError, ShapeMismatchError
from orcabehavior_hub.core.models import LabeledInstance, SpectrogramImage, SplitPlan
from orcabehavior_hub.dataset.synthetic import SyntheticSpec, generate_synthetic_dataset
from orcabehavior_hub.evaluation.harness import (
    TrainConfig,
    cross_validate,
    predict_report,
    repetition_plans,
    stack_images,
    train_one_repetition,
)
from orcabehavior_hub.evaluation.metrics import write_metrics_csv
from orcabehavior_hub.nn.checkpoint import load_checkpoint
from orcabehavior_hub.nn.layers import ModelConfig
from orcabehavior_hub.nn.optim import LrSchedule

SMALL = ModelConfig(stem_width=4, stage_widths=(4, 8), blocks_per_stage=(1, 1))


@pytest.fixture(scope="module")
def corpus():
    spec = SyntheticSpec(n_per_class=3, duration_s=0.1, superfluous_profile="none",
                         seed=2)
    return generate_synthetic_dataset(spec)


def _cfg(epochs=1, lr=2e-4, **kwargs):
    return TrainConfig(epochs=epochs, batch_size=4,
                       schedule=LrSchedule(base_lr=lr), **kwargs)


def test_stack_images_scales_to_unit_range():
    img = SpectrogramImage(np.full((2, 3), 255.0), "normalized")
    x = stack_images([LabeledInstance("a", img, CandidateLabelSet(1))] * 2)
    assert x.shape == (2, 1, 2, 3)
    assert x.dtype == np.float32
    assert np.all(x == 1.0)


def test_stack_images_rejects_ragged_and_empty():
    a = LabeledInstance("a", SpectrogramImage(np.zeros((2, 3)), "normalized"),
                        CandidateLabelSet(1))
    b = LabeledInstance("b", SpectrogramImage(np.zeros((2, 4)), "normalized"),
                        CandidateLabelSet(1))
    with pytest.raises(ShapeMismatchError):
        stack_images([a, b])
    with pytest.raises(InvalidArgumentError):
        stack_images([])


def test_train_config_validation():
    with pytest.raises(InvalidArgumentError):
        TrainConfig(weights_mode="soft")
    with pytest.raises(InvalidArgumentError):
        TrainConfig(batch_size=0)
    with pytest.raises(InvalidArgumentError):
        TrainConfig(test_fraction=1.0)


def test_untrained_model_scores(corpus):
    instances, truth = corpus
    split = repetition_plans(instances, 1, 0, 0.2)[0]
    run = train_one_repetition(instances, split, SMALL, _cfg(epochs=0), truth)
    first = run.epochs[0]
    assert len(run.epochs) == 1
    assert first.train_loss == pytest.approx(math.log(4.0), abs=1e-5)
    assert first.test_loss == pytest.approx(math.log(4.0), abs=1e-5)
    # одна тестовая запись на класс, argmax нулевых логитов = T
    assert len(split.test_ids) == 4
    assert first.test_accuracy == pytest.approx(25.0)
    assert first.true_accuracy == pytest.approx(25.0)


def test_split_with_unknown_ids_is_rejected(corpus):
    instances, _ = corpus
    bad = SplitPlan(0, ("nope",), (instances[0].instance_id,), 0)
    with pytest.raises(InvalidArgumentError):
        train_one_repetition(instances, bad, SMALL, _cfg())


def test_cross_validation_shapes_and_determinism(corpus, tmp_path):
    instances, truth = corpus
    ckpt_dir = str(tmp_path / "ckpt")
    a = cross_validate(instances, 2, 5, SMALL, _cfg(), truth, checkpoint_dir=ckpt_dir)
    b = cross_validate(instances, 2, 5, SMALL, _cfg(), truth)
    assert a.n_reps == 2
    assert a.n_epochs == 1
    for ra, rb in zip(a.runs, b.runs):
        assert ra.seed == rb.seed
        assert np.array_equal(ra.series("train_loss"), rb.series("train_loss"))
        assert np.array_equal(ra.series("test_accuracy"), rb.series("test_accuracy"))
    assert [r.repetition_index for r in a.runs] == [0, 1]
    assert [r.seed for r in a.runs] == [5, 6]

    summary = a.summary()
    assert summary["best_baseline"] == "always_T"
    assert summary["best_baseline_accuracy"] == pytest.approx(25.0)
    assert "mean_true_accuracy" in summary
    d = a.to_dict()
    assert len(d["per_epoch"]["test_accuracy"]["mean"]) == 2
    assert d["baselines"]["uniform_random"] == pytest.approx(25.0)

    model, extra = load_checkpoint(os.path.join(ckpt_dir, "rep01.ckpt"))
    plans = repetition_plans(instances, 2, 5, 0.2)
    assert extra["repetition"] == 1
    assert extra["test_ids"] == list(plans[1].test_ids)
    assert model.config.seed == 6


def test_predict_report(corpus):
    instances, _ = corpus
    from orcabehavior_hub.nn.layers import ResNetClassifier

    report = predict_report(ResNetClassifier(SMALL), instances[0])
    assert report.instance_id == instances[0].instance_id
    assert sum(report.percentages) == pytest.approx(100.0)


def test_cross_validation_requires_repetitions(corpus):
    with pytest.raises(InvalidArgumentError):
        cross_validate(corpus[0], 0, 0, SMALL, _cfg())


@pytest.mark.slow
def test_parallel_repetitions_match_sequential(corpus):
    instances, truth = corpus
    seq = cross_validate(instances, 2, 1, SMALL, _cfg(epochs=2), truth, jobs=1)
    par = cross_validate(instances, 2, 1, SMALL, _cfg(epochs=2), truth, jobs=2)
    for a, b in zip(seq.runs, par.runs):
        assert np.array_equal(a.series("train_loss"), b.series("train_loss"))
        assert np.array_equal(a.series("test_loss"), b.series("test_loss"))


@pytest.mark.slow
def test_training_reduces_loss():
    spec = SyntheticSpec(n_per_class=6, duration_s=0.1, superfluous_profile="random",
                         superfluous_rate=0.3, seed=8)
    instances, truth = generate_synthetic_dataset(spec)
    split = repetition_plans(instances, 1, 0, 0.2)[0]
    run = train_one_repetition(instances, split, SMALL, _cfg(epochs=8, lr=3e-3), truth)
    losses = run.series("train_loss")
    assert losses[-1] < losses[0]


@pytest.mark.slow
def test_synthetic_corpus_run_beats_baseline_and_recovers_truth():
    spec = SyntheticSpec(n_per_class=50, duration_s=1.0, superfluous_profile="corpus",
                         snr_db=20.0, seed=0)
    instances, truth = generate_synthetic_dataset(spec)
    assert len(instances) == 200
    result = cross_validate(instances, 5, 0, ModelConfig(), TrainConfig(epochs=20),
                            truth, jobs=min(5, os.cpu_count() or 1))
    summary = result.summary()
    assert summary["n_reps"] == 5
    assert summary["epochs"] == 20
    assert summary["mean_accuracy"] > summary["best_baseline_accuracy"]
    assert summary["mean_true_accuracy"] >= 90.0


@pytest.mark.slow
def test_metrics_file_is_reproducible(corpus, tmp_path):
    instances, truth = corpus
    paths = []
    for name in ("a", "b"):
        result = cross_validate(instances, 2, 3, SMALL, _cfg(epochs=2), truth)
        path = tmp_path / name / "metrics.csv"
        write_metrics_csv(str(path), result.runs)
        paths.append(path)
    assert paths[0].read_bytes() == paths[1].read_bytes()
