from __future__ import annotations

from collections import defaultdict
from typing import Sequence

import numpy as np

from orcabehavior_hub.core.exceptions import InvalidArgumentError
from orcabehavior_hub.core.models import LabeledInstance, SplitPlan
from orcabehavior_hub.core.utils import round_half_up


def stratum_test_size(n: int, test_fraction: float) -> int:
    """
    round_half_up(n * fraction); при n >= 2 ни одна сторона не остаётся пустой
    (в test хотя бы 1, в train хотя бы 1).
    """
    k = round_half_up(n * test_fraction)
    if n >= 2:
        k = min(max(k, 1), n - 1)
    return k


def stratified_split(
        instances: Sequence[LabeledInstance],
        test_fraction: float,
        seed: int,
        repetition_index: int = 0,
) -> SplitPlan:
    """
    Страты — точные комбинации меток. Внутри страты: перемешивание
    (np.random.default_rng(seed)), первые round(n*fraction) уходят в test.
    Детерминировано по seed.
    """
    if not (0.0 < float(test_fraction) < 1.0):
        raise InvalidArgumentError(
            f"test_fraction должен быть в (0, 1), получено {test_fraction}"
        )
    strata: dict[int, list[str]] = defaultdict(list)
    seen: set[str] = set()
    for inst in instances:
        if inst.instance_id in seen:
            raise InvalidArgumentError(f"повторный instance_id '{inst.instance_id}'")
        seen.add(inst.instance_id)
        strata[inst.label_set.mask].append(inst.instance_id)

    rng = np.random.default_rng(seed)
    train: list[str] = []
    test: list[str] = []
    for mask in sorted(strata):
        ids = sorted(strata[mask])
        order = rng.permutation(len(ids))
        shuffled = [ids[i] for i in order]
        k = stratum_test_size(len(ids), float(test_fraction))
        test.extend(shuffled[:k])
        train.extend(shuffled[k:])

    return SplitPlan(
        repetition_index=int(repetition_index),
        train_ids=tuple(train),
        test_ids=tuple(test),
        seed=int(seed),
    )


def make_batches(ids: Sequence[str], batch_size: int, seed: int) -> list[list[str]]:
    """Перемешать (seed) и нарезать подряд по batch_size; короткий хвост сохраняется."""
    if int(batch_size) < 1:
        raise InvalidArgumentError(f"batch_size должен быть >= 1, получено {batch_size}")  # noqa: E501
    ids = list(ids)
    order = np.random.default_rng(seed).permutation(len(ids))
    shuffled = [ids[i] for i in order]
    bs = int(batch_size)
    return [shuffled[i:i + bs] for i in range(0, len(shuffled), bs)]


def epoch_seed(base_seed: int, epoch: int) -> int:
    """Отдельное зерно перемешивания на каждую эпоху повторности."""
    return int(np.random.SeedSequence([int(base_seed), int(epoch)]).generate_state(1)[0])  # noqa: E501
