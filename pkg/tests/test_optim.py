import numpy as np
import pytest

from orcabehavior_hub.core.exceptions import InvalidArgumentError, MissingGradError
from orcabehavior_hub.nn.optim import AdamState, LrSchedule, adam_step, lr_at
from orcabehavior_hub.nn.tensor import Tensor


@pytest.mark.parametrize("epoch, expected", [
    (0, 2e-4), (9, 2e-4), (10, 2e-5), (19, 2e-5), (20, 2e-6), (29, 2e-6),
])
def test_step_decay(epoch, expected):
    assert lr_at(LrSchedule(), epoch) == pytest.approx(expected)


@pytest.mark.parametrize("kwargs", [
    {"base_lr": 0.0}, {"decay_factor": 1.0}, {"decay_every_epochs": 0},
])
def test_schedule_validation(kwargs):
    with pytest.raises(InvalidArgumentError):
        LrSchedule(**kwargs)


def test_negative_epoch():
    with pytest.raises(InvalidArgumentError):
        lr_at(LrSchedule(), -1)


def test_first_step_moves_by_lr_against_gradient_sign():
    p = Tensor(np.array([1.0, -2.0, 0.5]), requires_grad=True, name="w")
    p.grad = np.array([0.3, -4.0, 2.0])
    adam_step([p], AdamState(), lr=0.01)
    assert np.allclose(p.data, [0.99, -1.99, 0.49], atol=1e-8)


def test_matches_reference_recurrence():
    rng = np.random.default_rng(2)
    p = Tensor(rng.standard_normal(5), requires_grad=True, name="w")
    ref = p.data.copy()
    m = np.zeros(5)
    v = np.zeros(5)
    state = AdamState()
    for t in range(1, 6):
        g = rng.standard_normal(5)
        p.grad = g
        adam_step([("w", p)], state, lr=0.05)
        m = 0.9 * m + 0.1 * g
        v = 0.999 * v + 0.001 * g * g
        ref -= 0.05 * (m / (1 - 0.9 ** t)) / (np.sqrt(v / (1 - 0.999 ** t)) + 1e-8)
    assert state.step == 5
    assert np.allclose(p.data, ref, rtol=1e-12, atol=1e-12)


def test_missing_gradient_leaves_everything_untouched():
    a = Tensor(np.ones(2), requires_grad=True, name="a")
    b = Tensor(np.ones(2), requires_grad=True, name="b")
    a.grad = np.ones(2)
    state = AdamState()
    with pytest.raises(MissingGradError) as err:
        adam_step([a, b], state, lr=0.1)
    assert err.value.name == "b"
    assert state.step == 0
    assert np.array_equal(a.data, np.ones(2))


def test_minimizes_quadratic():
    x = Tensor(np.zeros(3), requires_grad=True, name="x")
    target = np.array([3.0, -1.0, 0.5])
    state = AdamState()
    for _ in range(1_000):
        x.zero_grad()
        ((x - target) * (x - target)).sum().backward()
        adam_step([x], state, lr=0.1)
    assert np.allclose(x.data, target, atol=0.05)


def test_float32_parameters_stay_float32():
    p = Tensor(np.ones(2, dtype=np.float32), requires_grad=True, name="p")
    p.grad = np.ones(2, dtype=np.float32)
    adam_step([p], AdamState(), lr=0.1)
    assert p.data.dtype == np.float32


@pytest.mark.parametrize("kwargs", [{"beta1": 1.0}, {"beta2": -0.1}, {"eps": 0.0}])
def test_state_validation(kwargs):
    with pytest.raises(InvalidArgumentError):
        AdamState(**kwargs)
