"""
Синтетический корпус для частичных меток (PLL) настольного масштаба.

Каждый класс звучит по-своему (с гармониками, джиттером и белым шумом):
  T — восходящий чирп, F — нисходящий чирп,
  S — импульсный тон, M — ровный тон.
Истинная метка всегда входит в множество кандидатов; лишние метки
добавляются по профилю superfluous_profile. Истинные метки возвращаются
отдельно и используются только для оценки.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Literal, Mapping

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import maximum_flow

from orcabehavior_hub.audio.spectrogram import waveform_to_image
from orcabehavior_hub.core.behaviors import CORPUS_COUNTS, Behavior, CandidateLabelSet
from orcabehavior_hub.core.exceptions import InvalidArgumentError
from orcabehavior_hub.core.models import (
    AudioSegment,
    LabeledInstance,
    SpectrogramConfig,
)
from orcabehavior_hub.logging_config import get_logger

SuperfluousProfile = Literal["none", "corpus", "random"]
PROFILES = ("none", "corpus", "random")

_FADE_S = 0.01


@dataclass(frozen=True)
class SyntheticSpec:
    n_per_class: int = 50
    duration_s: float = 1.0
    sample_rate: float = 21_900.0
    superfluous_profile: SuperfluousProfile = "corpus"
    superfluous_rate: float = 0.3  # только для профиля random
    snr_db: float = 20.0
    seed: int = 0

    def __post_init__(self) -> None:
        if int(self.n_per_class) < 1:
            raise InvalidArgumentError("n_per_class должен быть >= 1")
        if not self.duration_s > 0:
            raise InvalidArgumentError("duration_s должен быть > 0")
        if not self.sample_rate > 0:
            raise InvalidArgumentError("sample_rate должен быть > 0")
        if self.superfluous_profile not in PROFILES:
            raise InvalidArgumentError(
                f"неизвестный профиль '{self.superfluous_profile}' "
                f"(доступны: {', '.join(PROFILES)})"
            )
        if not (0.0 <= self.superfluous_rate <= 1.0):
            raise InvalidArgumentError("superfluous_rate должен быть в [0, 1]")
        if not np.isfinite(self.snr_db):
            raise InvalidArgumentError("snr_db должен быть конечным")


@dataclass(frozen=True)
class SyntheticRecord:
    instance_id: str
    segment: AudioSegment
    label_set: CandidateLabelSet
    true_label: Behavior


# ---------- распределение множеств меток ----------

def apportion(weights: Mapping[CandidateLabelSet, int], total: int) -> dict[CandidateLabelSet, int]:  # noqa: E501
    """Метод наибольших остатков: целые квоты с суммой total, пропорциональные весам."""
    keys = list(weights)
    w = np.array([float(weights[k]) for k in keys])
    exact = w / w.sum() * total
    quotas = np.floor(exact).astype(int)
    remainder = total - int(quotas.sum())
    # устойчивая сортировка: при равных остатках — порядок таблицы
    order = np.argsort(-(exact - quotas), kind="stable")
    for i in order[:remainder]:
        quotas[i] += 1
    return {k: int(q) for k, q in zip(keys, quotas)}


def _allocate_by_flow(quotas: Mapping[CandidateLabelSet, int],
                      n_per_class: int) -> dict[tuple[CandidateLabelSet, Behavior], int] | None:  # noqa: E501
    """
    Точное распределение: сколько экземпляров класса b получают множество Y.
    Транспортная задача source -> Y -> b -> sink, целочисленный максимальный поток.
    None, если квоты несовместимы с равными классами.
    """
    combos = list(quotas)
    n_c = len(combos)
    sink = n_c + len(Behavior) + 1
    size = sink + 1
    cap = np.zeros((size, size), dtype=np.int32)
    for i, ls in enumerate(combos, start=1):
        cap[0, i] = quotas[ls]
        for b in ls:
            cap[i, n_c + 1 + int(b)] = quotas[ls]
    for b in Behavior:
        cap[n_c + 1 + int(b), sink] = n_per_class

    result = maximum_flow(csr_matrix(cap), 0, sink)
    total = sum(quotas.values())
    if int(result.flow_value) < total:
        return None
    flow = result.flow.toarray()
    out: dict[tuple[CandidateLabelSet, Behavior], int] = {}
    for i, ls in enumerate(combos, start=1):
        for b in ls:
            f = int(flow[i, n_c + 1 + int(b)])
            if f > 0:
                out[(ls, b)] = f
    return out


def _corpus_conditional(true_label: Behavior, rng: np.random.Generator) -> CandidateLabelSet:  # noqa: E501
    options = [(ls, n) for ls, n in CORPUS_COUNTS.items() if true_label in ls]
    p = np.array([n for _, n in options], dtype=np.float64)
    idx = int(rng.choice(len(options), p=p / p.sum()))
    return options[idx][0]


def assign_label_sets(spec: SyntheticSpec,
                      rng: np.random.Generator) -> list[tuple[Behavior, CandidateLabelSet]]:  # noqa: E501
    """Пары (истинный класс, множество кандидатов) для всех 4*n_per_class экземпляров."""  # noqa: E501
    n = int(spec.n_per_class)
    pairs: list[tuple[Behavior, CandidateLabelSet]] = []
    if spec.superfluous_profile == "none":
        for b in Behavior:
            pairs.extend((b, CandidateLabelSet.of([b])) for _ in range(n))
    elif spec.superfluous_profile == "random":
        for b in Behavior:
            for _ in range(n):
                extra = [o for o in Behavior
                         if o != b and rng.random() < spec.superfluous_rate]
                pairs.append((b, CandidateLabelSet.of([b, *extra])))
    else:
        quotas = apportion(CORPUS_COUNTS, n * len(Behavior))
        alloc = _allocate_by_flow(quotas, n)
        if alloc is None:
            get_logger().info(
                f"Synthetic: corpus quotas infeasible for n_per_class={n}, "
                "falling back to conditional sampling"
            )
            for b in Behavior:
                pairs.extend((b, _corpus_conditional(b, rng)) for _ in range(n))
        else:
            for (ls, b), count in alloc.items():
                pairs.extend((b, ls) for _ in range(count))
            pairs.sort(key=lambda p: (int(p[0]), p[1].mask))
    order = rng.permutation(len(pairs))
    return [pairs[i] for i in order]


# ---------- сигналы ----------

def _harmonic_stack(phase: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    amps = (1.0, 0.5, 0.25)
    out = np.zeros_like(phase)
    for k, a in enumerate(amps, start=1):
        out += a * np.sin(k * phase + rng.uniform(0, 2 * np.pi))
    return out


def _class_signal(label: Behavior, t: np.ndarray, duration: float,
                  rng: np.random.Generator) -> np.ndarray:
    if label == Behavior.T:
        f_start = rng.uniform(500.0, 700.0)
        f_end = f_start * rng.uniform(2.5, 3.0)
    elif label == Behavior.F:
        f_start = rng.uniform(1500.0, 2000.0)
        f_end = f_start / rng.uniform(2.5, 3.0)
    else:
        f_start = f_end = rng.uniform(800.0, 1200.0)
    # мгновенная частота линейна по времени -> фаза квадратична
    phase = 2 * np.pi * (f_start * t + (f_end - f_start) * t * t / (2 * duration))
    sig = _harmonic_stack(phase, rng)
    if label == Behavior.S:
        rate = rng.uniform(6.0, 9.0)
        gate = np.sin(2 * np.pi * rate * t + rng.uniform(0, 2 * np.pi)) > 0
        sig = sig * gate
    return sig


def _fade(n: int, sr: float) -> np.ndarray:
    k = max(1, min(n // 2, int(_FADE_S * sr)))
    env = np.ones(n)
    ramp = np.linspace(0.0, 1.0, k, endpoint=False)
    env[:k] = ramp
    env[n - k:] = ramp[::-1]
    return env


def synth_waveform(label: Behavior, spec: SyntheticSpec,
                   rng: np.random.Generator, source_id: str = "") -> AudioSegment:
    """Одна запись класса label: сигнатура + белый шум с заданным SNR (дБ)."""
    n = max(1, int(round(spec.duration_s * spec.sample_rate)))
    t = np.arange(n) / spec.sample_rate
    sig = _class_signal(label, t, spec.duration_s, rng) * _fade(n, spec.sample_rate)
    peak = np.max(np.abs(sig))
    if peak > 0:
        sig = sig * (0.5 * rng.uniform(0.6, 1.0) / peak)
    rms = float(np.sqrt(np.mean(sig * sig)))
    noise_std = rms / (10.0 ** (spec.snr_db / 20.0)) if rms > 0 else 1e-4
    x = np.clip(sig + rng.normal(0.0, noise_std, size=n), -1.0, 1.0)
    return AudioSegment(x, spec.sample_rate, source_id=source_id)


def generate_synthetic_waveforms(spec: SyntheticSpec) -> list[SyntheticRecord]:
    rng = np.random.default_rng(spec.seed)
    pairs = assign_label_sets(spec, rng)
    width = max(4, len(str(len(pairs))))
    records = []
    for idx, (true_label, label_set) in enumerate(pairs):
        iid = f"syn-{idx:0{width}d}"
        seg = synth_waveform(true_label, spec, rng, source_id=iid)
        records.append(SyntheticRecord(iid, seg, label_set, true_label))
    return records


def generate_synthetic_dataset(
        spec: SyntheticSpec,
        cfg: SpectrogramConfig | None = None,
) -> tuple[list[LabeledInstance], dict[str, Behavior]]:
    """
    (экземпляры с нормализованными изображениями, скрытые истинные метки).
    Частота дискретизации спектрограммы берётся из spec.sample_rate.
    """
    if cfg is None:
        cfg = SpectrogramConfig(sample_rate=spec.sample_rate,
                                fmax=spec.sample_rate / 2.0)
    instances: list[LabeledInstance] = []
    truth: dict[str, Behavior] = {}
    for rec in generate_synthetic_waveforms(spec):
        image = waveform_to_image(rec.segment, cfg)
        instances.append(LabeledInstance(rec.instance_id, image, rec.label_set))
        truth[rec.instance_id] = rec.true_label
    return instances, truth
