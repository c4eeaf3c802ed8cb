"""
Четырёхголовая остаточная CNN:
  stem conv 3x3 -> ReLU -> avg-pool -> остаточные стадии
  -> глобальное среднее -> полносвязная голова на 4 поведения.

Блок: conv-ReLU-conv + (тождество | проекция 1x1 со страйдом), затем ReLU.
Первая свёртка каждой стадии, кроме первой, уменьшает карту вдвое.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, replace
from typing import Any, Dict, Iterator

import numpy as np

from orcabehavior_hub.core.behaviors import N_BEHAVIORS
from orcabehavior_hub.core.exceptions import InvalidArgumentError, ShapeMismatchError
from orcabehavior_hub.nn.tensor import Tensor, avg_pool2d, conv2d, global_avg_pool

_DTYPES = ("float32", "float64")


@dataclass(frozen=True)
class ModelConfig:
    input_channels: int = 1
    stem_width: int = 16
    stage_widths: tuple[int, ...] = (16, 32, 64)
    blocks_per_stage: tuple[int, ...] = (2, 2, 2)
    stem_pool: int = 2
    n_classes: int = N_BEHAVIORS
    seed: int = 0
    replicate_channels: bool = False  # моно-изображение -> 3 одинаковых канала
    dtype: str = "float32"
    zero_init_head: bool = True  # необученная модель даёт ровно 25% на класс

    def __post_init__(self) -> None:
        object.__setattr__(self, "stage_widths", tuple(int(w) for w in self.stage_widths))  # noqa: E501
        object.__setattr__(
            self, "blocks_per_stage", tuple(int(b) for b in self.blocks_per_stage)
        )
        if int(self.n_classes) != N_BEHAVIORS:
            raise InvalidArgumentError(
                f"сеть четырёхголовая: n_classes должен быть {N_BEHAVIORS}, "
                f"получено {self.n_classes}"
            )
        if int(self.input_channels) != 1:
            raise InvalidArgumentError("спектрограмма монохромна: input_channels = 1")
        if not self.stage_widths or len(self.stage_widths) != len(self.blocks_per_stage):  # noqa: E501
            raise InvalidArgumentError(
                "stage_widths и blocks_per_stage должны быть непустыми и одной длины"
            )
        if min(self.stage_widths) < 1 or int(self.stem_width) < 1:
            raise InvalidArgumentError("ширины слоёв должны быть >= 1")
        if min(self.blocks_per_stage) < 1:
            raise InvalidArgumentError("в каждой стадии должен быть хотя бы один блок")
        if int(self.stem_pool) < 1:
            raise InvalidArgumentError("stem_pool должен быть >= 1")
        if self.dtype not in _DTYPES:
            raise InvalidArgumentError(f"dtype должен быть одним из {_DTYPES}")

    @classmethod
    def resnet34_like(cls, **overrides: Any) -> "ModelConfig":
        """Форма ResNet-34: стадии 64/128/256/512 по 3/4/6/3 блока."""
        base = dict(
            stem_width=64,
            stage_widths=(64, 128, 256, 512),
            blocks_per_stage=(3, 4, 6, 3),
        )
        base.update(overrides)
        return cls(**base)

    @property
    def conv_input_channels(self) -> int:
        return 3 if self.replicate_channels else int(self.input_channels)

    def with_seed(self, seed: int) -> "ModelConfig":
        return replace(self, seed=int(seed))

    def to_dict(self) -> Dict[str, Any]:
        d = asdict(self)
        d["stage_widths"] = list(self.stage_widths)
        d["blocks_per_stage"] = list(self.blocks_per_stage)
        return d

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "ModelConfig":
        known = {k: v for k, v in data.items() if k in cls.__dataclass_fields__}
        return cls(**known)


# ---------- модули ----------

class Module:
    """Контейнер параметров с фиксированным порядком обхода."""

    def __init__(self) -> None:
        self._params: Dict[str, Tensor] = {}
        self._children: Dict[str, Module] = {}

    def add_param(self, name: str, tensor: Tensor) -> Tensor:
        tensor.requires_grad = True
        tensor.name = name
        self._params[name] = tensor
        return tensor

    def add_child(self, name: str, module: "Module") -> "Module":
        self._children[name] = module
        return module

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Tensor]]:
        for name, p in self._params.items():
            yield prefix + name, p
        for name, child in self._children.items():
            yield from child.named_parameters(prefix + name + ".")

    def parameters(self) -> list[Tensor]:
        return [p for _, p in self.named_parameters()]

    def n_parameters(self) -> int:
        return int(sum(p.size for p in self.parameters()))

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.grad = None

    def forward(self, x: Tensor) -> Tensor:
        raise NotImplementedError

    def __call__(self, x: Tensor) -> Tensor:
        return self.forward(x)


def _he_normal(rng: np.random.Generator, shape: tuple[int, ...], fan_in: int,
               dtype: str) -> np.ndarray:
    return (rng.standard_normal(shape) * np.sqrt(2.0 / fan_in)).astype(dtype)


class Conv2d(Module):
    def __init__(self, in_channels: int, out_channels: int, kernel: int,
                 rng: np.random.Generator, stride: int = 1, padding: int = 0,
                 dtype: str = "float32") -> None:
        super().__init__()
        self.stride = int(stride)
        self.padding = int(padding)
        shape = (out_channels, in_channels, kernel, kernel)
        fan_in = in_channels * kernel * kernel
        self.weight = self.add_param("weight", Tensor(_he_normal(rng, shape, fan_in, dtype)))  # noqa: E501
        self.bias = self.add_param("bias", Tensor(np.zeros(out_channels, dtype=dtype)))

    def forward(self, x: Tensor) -> Tensor:
        return conv2d(x, self.weight, self.bias, self.stride, self.padding)


class Linear(Module):
    def __init__(self, in_features: int, out_features: int,
                 rng: np.random.Generator, zero_init: bool = False,
                 dtype: str = "float32") -> None:
        super().__init__()
        if zero_init:
            w = np.zeros((in_features, out_features), dtype=dtype)
        else:
            w = (rng.standard_normal((in_features, out_features))
                 * np.sqrt(1.0 / in_features)).astype(dtype)
        self.weight = self.add_param("weight", Tensor(w))
        self.bias = self.add_param("bias", Tensor(np.zeros(out_features, dtype=dtype)))

    def forward(self, x: Tensor) -> Tensor:
        return x @ self.weight + self.bias


class ResidualBlock(Module):
    def __init__(self, in_channels: int, out_channels: int,
                 rng: np.random.Generator, stride: int = 1,
                 dtype: str = "float32") -> None:
        super().__init__()
        self.conv1 = self.add_child(
            "conv1", Conv2d(in_channels, out_channels, 3, rng, stride, 1, dtype)
        )
        self.conv2 = self.add_child(
            "conv2", Conv2d(out_channels, out_channels, 3, rng, 1, 1, dtype)
        )
        self.projection: Conv2d | None = None
        if stride != 1 or in_channels != out_channels:
            self.projection = self.add_child(
                "projection", Conv2d(in_channels, out_channels, 1, rng, stride, 0, dtype)  # noqa: E501
            )

    def forward(self, x: Tensor) -> Tensor:
        out = self.conv2(self.conv1(x).relu())
        skip = x if self.projection is None else self.projection(x)
        return (out + skip).relu()


class ResNetClassifier(Module):
    """Параметры создаются в фиксированном порядке из np.random.default_rng(seed)."""

    def __init__(self, config: ModelConfig | None = None) -> None:
        super().__init__()
        self.config = config or ModelConfig()
        cfg = self.config
        rng = np.random.default_rng(cfg.seed)
        self.stem = self.add_child(
            "stem",
            Conv2d(cfg.conv_input_channels, cfg.stem_width, 3, rng, 1, 1, cfg.dtype),
        )
        self.blocks: list[ResidualBlock] = []
        in_ch = cfg.stem_width
        for s, (width, n_blocks) in enumerate(zip(cfg.stage_widths, cfg.blocks_per_stage)):  # noqa: E501
            for b in range(n_blocks):
                stride = 2 if (s > 0 and b == 0) else 1
                block = ResidualBlock(in_ch, width, rng, stride, cfg.dtype)
                self.blocks.append(self.add_child(f"stage{s}.block{b}", block))
                in_ch = width
        self.head = self.add_child(
            "head",
            Linear(in_ch, cfg.n_classes, rng, zero_init=cfg.zero_init_head,
                   dtype=cfg.dtype),
        )

    def forward(self, x: Tensor) -> Tensor:
        cfg = self.config
        if cfg.replicate_channels:
            x = x * np.ones((1, 3, 1, 1), dtype=cfg.dtype)
        h = self.stem(x).relu()
        h = avg_pool2d(h, cfg.stem_pool)
        for block in self.blocks:
            h = block(h)
        return self.head(global_avg_pool(h))


def forward(model: ResNetClassifier, batch) -> Tensor:
    """
    batch: [B x 1 x H x W] (Tensor или массив) -> логиты [B x 4].
    Несовпадение формы -> ShapeMismatchError.
    """
    x = batch if isinstance(batch, Tensor) else Tensor(np.asarray(batch, dtype=model.config.dtype))  # noqa: E501
    cfg = model.config
    if x.ndim != 4 or x.shape[1] != cfg.input_channels:
        raise ShapeMismatchError(("B", cfg.input_channels, "H", "W"), x.shape)
    if x.shape[0] < 1 or min(x.shape[2], x.shape[3]) < cfg.stem_pool:
        raise ShapeMismatchError(("B>=1", 1, f">={cfg.stem_pool}", f">={cfg.stem_pool}"), x.shape)  # noqa: E501
    if x.dtype != np.dtype(cfg.dtype):
        x = Tensor(x.data.astype(cfg.dtype)) if not x.requires_grad else x
    return model(x)
