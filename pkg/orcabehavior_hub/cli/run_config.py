from __future__ import annotations

import argparse
from dataclasses import asdict, dataclass, field, replace
from typing import Any, Dict

from orcabehavior_hub.core.models import SegmentationConfig, SpectrogramConfig
from orcabehavior_hub.dataset.synthetic import SyntheticSpec
from orcabehavior_hub.evaluation.harness import TrainConfig
from orcabehavior_hub.infra.settings import SettingsLoader
from orcabehavior_hub.nn.layers import ModelConfig
from orcabehavior_hub.nn.optim import LrSchedule


@dataclass(frozen=True)
class RunConfig:
    """
    Итоговая конфигурация запуска: _DEFAULTS ← config.json ← флаги.
    Сохраняется в aggregate.json, чтобы прогон можно было повторить.
    """

    subcommand: str
    paths: Dict[str, str] = field(default_factory=dict)
    spectrogram: SpectrogramConfig = field(default_factory=SpectrogramConfig)
    segmentation: SegmentationConfig = field(default_factory=SegmentationConfig)
    model: ModelConfig | None = None
    train: TrainConfig | None = None
    n_reps: int = 20
    seed: int = 0
    jobs: int = 1
    synthetic: SyntheticSpec | None = None
    save_checkpoints: bool = False
    export_pgm: bool = False

    def to_dict(self) -> Dict[str, Any]:
        return {
            "subcommand": self.subcommand,
            "paths": dict(self.paths),
            "spectrogram": self.spectrogram.to_dict(),
            "segmentation": asdict(self.segmentation),
            "model": self.model.to_dict() if self.model else None,
            "train": self.train.to_dict() if self.train else None,
            "n_reps": int(self.n_reps),
            "seed": int(self.seed),
            "jobs": int(self.jobs),
            "synthetic": asdict(self.synthetic) if self.synthetic else None,
            "save_checkpoints": bool(self.save_checkpoints),
            "export_pgm": bool(self.export_pgm),
        }


def _pick(value, default):
    return default if value is None else value


def synthetic_spec_from_args(ns: argparse.Namespace, seed: int) -> SyntheticSpec:
    return SyntheticSpec(
        n_per_class=ns.n_per_class,
        duration_s=ns.duration,
        superfluous_profile=ns.profile,
        superfluous_rate=ns.superfluous_rate,
        snr_db=ns.snr_db,
        seed=seed,
    )


def build_run_config(ns: argparse.Namespace) -> RunConfig:
    """Собрать RunConfig из разобранных флагов подкоманды и SettingsLoader."""
    settings = SettingsLoader()
    defaults = settings.train_defaults()
    seed = int(_pick(getattr(ns, "seed", None), defaults["seed"]))
    spec_cfg = settings.spectrogram_config()
    seg_cfg = settings.segmentation_config()

    paths = {
        key: str(getattr(ns, key))
        for key in ("manifest", "counts", "cache_dir", "out", "truth", "checkpoint")
        if getattr(ns, key, None)
    }
    if ns.command == "preprocess" and "cache_dir" not in paths:
        paths["cache_dir"] = settings.cache_dir()

    if ns.command == "synth":
        return RunConfig(subcommand="synth", paths=paths, spectrogram=spec_cfg,
                         segmentation=seg_cfg, seed=seed,
                         synthetic=synthetic_spec_from_args(ns, seed))

    if ns.command != "train":
        return RunConfig(subcommand=ns.command, paths=paths, spectrogram=spec_cfg,
                         segmentation=seg_cfg, seed=seed,
                         export_pgm=bool(getattr(ns, "pgm", False)))

    schedule = LrSchedule(
        base_lr=float(_pick(ns.lr, defaults["base_lr"])),
        decay_factor=float(defaults["decay_factor"]),
        decay_every_epochs=int(defaults["decay_every_epochs"]),
    )
    batch_size = int(_pick(ns.batch_size, defaults["batch_size"]))
    train_cfg = TrainConfig(
        epochs=int(_pick(ns.epochs, defaults["epochs"])),
        batch_size=batch_size,
        schedule=schedule,
        weights_mode=ns.weights_mode,
        eval_batch_size=batch_size,
        test_fraction=float(defaults["test_fraction"]),
    )
    overrides = {"replicate_channels": bool(ns.replicate_channels), "seed": seed}
    model_cfg = (ModelConfig.resnet34_like(**overrides) if ns.resnet34
                 else ModelConfig(**overrides))
    synthetic = synthetic_spec_from_args(ns, seed) if ns.synthetic else None
    if synthetic is not None:
        spec_cfg = replace(spec_cfg, sample_rate=synthetic.sample_rate,
                           fmax=min(spec_cfg.fmax, synthetic.sample_rate / 2.0))
    return RunConfig(
        subcommand="train",
        paths=paths,
        spectrogram=spec_cfg,
        segmentation=seg_cfg,
        model=model_cfg,
        train=train_cfg,
        n_reps=int(_pick(ns.reps, defaults["n_reps"])),
        seed=seed,
        jobs=int(_pick(ns.jobs, defaults["jobs"])),
        synthetic=synthetic,
        save_checkpoints=bool(ns.save_checkpoints),
    )
