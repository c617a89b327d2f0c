import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from advreg.errors import InvalidArgumentError, NumericalAbort
from advreg.optimizer import AdamState, Schedule, adam_step, schedule_count, schedule_value, sgd_step


def scalar_adam(theta, grads, lr, b1, b2, eps):
    m = v = 0.0
    for t, g in enumerate(grads, start=1):
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        theta -= lr * (m / (1 - b1 ** t)) / (math.sqrt(v / (1 - b2 ** t)) + eps)
    return theta


def test_first_step_moves_by_lr():
    p, _ = adam_step(AdamState(lr=0.1), np.array([1.0, -2.0]), np.array([3.0, -0.5]))
    np.testing.assert_allclose(p, [0.9, -1.9], rtol=1e-7)


@pytest.mark.parametrize("b1, b2", [(0.9, 0.999), (0.5, 0.9), (0.0, 0.9)])
def test_matches_scalar_oracle(rng, b1, b2):
    G = rng.normal(size=(200, 4))
    state = AdamState(lr=1e-2, beta1=b1, beta2=b2)
    p = np.zeros(4)
    for g in G:
        p, state = adam_step(state, p, g)
    assert state.step == 200
    want = [scalar_adam(0.0, G[:, i], 1e-2, b1, b2, 1e-8) for i in range(4)]
    np.testing.assert_allclose(p, want, rtol=1e-12, atol=1e-15)


def test_adam_minimizes_quadratic():
    state = AdamState(lr=0.05)
    p = np.array([3.0, -4.0])
    for _ in range(2000):
        p, state = adam_step(state, p, 2 * p)
    assert np.linalg.norm(p) < 1e-2


def test_non_finite_gradient_aborts():
    with pytest.raises(NumericalAbort):
        adam_step(AdamState(), np.zeros(2), np.array([np.nan, 0.0]))
    with pytest.raises(FloatingPointError):
        sgd_step(0.1, np.zeros(2), np.array([np.inf, 0.0]))


def test_shape_mismatch():
    with pytest.raises(InvalidArgumentError):
        adam_step(AdamState(), np.zeros(2), np.zeros(3))


@pytest.mark.parametrize("kw", [dict(beta1=1.0), dict(beta2=-0.1), dict(eps=0.0)])
def test_bad_hyperparameters(kw):
    with pytest.raises(InvalidArgumentError):
        AdamState(**kw)


def test_sgd():
    np.testing.assert_allclose(sgd_step(0.5, [1.0, 1.0], [2.0, -2.0]), [0.0, 2.0])


def test_schedules():
    assert schedule_value(Schedule("constant", 0.1), 99) == 0.1
    assert schedule_value(Schedule("exponential_decay", 1.0, 0.5), 3) == 0.125
    s = Schedule("step_decay", 1.0, 0.1, 10)
    assert [schedule_value(s, e) for e in (0, 9, 10, 25)] == pytest.approx([1, 1, 0.1, 0.01])


def test_growing_batch_schedule():
    s = Schedule("step_decay", 64, 2.0, 100)
    assert [schedule_count(s, e) for e in (0, 99, 100, 250)] == [64, 64, 128, 256]
    assert schedule_count(Schedule("exponential_decay", 1.0, 0.1), 5) == 1


@pytest.mark.parametrize("text, want", [
    ("0.01", Schedule("constant", 0.01)),
    ("exponential_decay:0.02:0.99", Schedule("exponential_decay", 0.02, 0.99)),
    ("step_decay:64:2:50", Schedule("step_decay", 64, 2.0, 50)),
])
def test_parse(text, want):
    assert Schedule.parse(text) == want
    assert Schedule.parse(want.to_dict()) == want


@pytest.mark.parametrize("bad", ["linear:1", "constant:-1", "step_decay:1:0.5:0", [1, 2]])
def test_parse_rejects(bad):
    with pytest.raises((InvalidArgumentError, ValueError)):
        Schedule.parse(bad)


@settings(max_examples=200, deadline=None)
@given(st.floats(1e-6, 10), st.floats(0.5, 1.0), st.integers(0, 1000))
def test_decay_is_monotone(base, rate, epoch):
    s = Schedule("exponential_decay", base, rate)
    assert schedule_value(s, epoch + 1) <= schedule_value(s, epoch)
