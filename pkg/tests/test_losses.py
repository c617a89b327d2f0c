import numpy as np
import pytest

from advreg import critic as C
from advreg.errors import InvalidArgumentError
from advreg.geometry import RigidTransform
from advreg.losses import (
    Interpolates,
    critic_loss,
    critic_loss_full,
    generator_loss,
    gradient_penalty,
    make_interpolates,
)


@pytest.fixture
def net():
    return C.init_critic(rng=np.random.default_rng(3))


def test_critic_loss_zero_on_identical_batches(net, rng):
    X = rng.normal(size=(16, 3))
    assert critic_loss(net, X, X) == 0.0


def test_critic_loss_sign(net, rng):
    T, M = rng.normal(size=(8, 3)), rng.normal(size=(8, 3))
    expected = -(np.mean(C.forward(net, T)) - np.mean(C.forward(net, M)))
    assert critic_loss(net, T, M) == pytest.approx(expected, rel=1e-14)


def test_penalty_of_linear_critic_is_known():
    # f(x) = 2 * x_0, a single linear layer: ||grad|| = 2, penalty = 1
    lin = C.CriticNet((3, 1, 1), np.array([2.0, 0, 0, 0, 1.0, 0.0]))
    # a hidden ReLU unit is needed; keep it active everywhere used below
    X = np.abs(np.random.default_rng(0).normal(size=(5, 3))) + 1.0
    assert gradient_penalty(lin, X) == pytest.approx(1.0, abs=1e-14)


def test_interpolates_lie_on_segments(rng):
    T, M = rng.normal(size=(10, 3)), rng.normal(size=(12, 3))
    I = make_interpolates(T, M, rng)
    assert len(I) == 10
    assert np.all((I.alpha >= 0) & (I.alpha < 1))
    np.testing.assert_allclose(I.points, I.alpha[:, None] * T + (1 - I.alpha[:, None]) * M[:10])


def test_full_loss_gradient_matches_finite_differences(net, rng):
    T, M = rng.normal(size=(6, 3)), rng.normal(size=(6, 3))
    I = make_interpolates(T, M, rng)
    value, g = critic_loss_full(net, T, M, 10.0, interpolates=I)

    def loss(p):
        n = net.with_params(p)
        return critic_loss(n, T, M) + 10.0 * gradient_penalty(n, I)

    assert value == pytest.approx(loss(net.params), rel=1e-12)
    h = 1e-6
    for i in rng.choice(net.n_params, 60, replace=False):
        p = net.params.copy()
        p[i] += h
        up = loss(p)
        p[i] -= 2 * h
        fd = (up - loss(p)) / (2 * h)
        assert g.flat[i] == pytest.approx(fd, rel=1e-5, abs=1e-7)


def test_full_loss_without_penalty_needs_no_rng(net, rng):
    T, M = rng.normal(size=(4, 3)), rng.normal(size=(4, 3))
    value, _ = critic_loss_full(net, T, M, 0.0)
    assert value == pytest.approx(critic_loss(net, T, M))


def test_negative_penalty_weight_rejected(net, rng):
    with pytest.raises(InvalidArgumentError):
        critic_loss_full(net, rng.normal(size=(2, 3)), rng.normal(size=(2, 3)), -1.0)


@pytest.mark.parametrize("scale, shift", [(1.0, None), (1.7, np.array([0.3, -0.2, 0.1]))])
def test_generator_gradient_matches_finite_differences(net, scale, shift):
    for seed in range(50):
        rng = np.random.default_rng(seed)
        X = rng.normal(size=(8, 3))
        t = RigidTransform(rng.normal(size=3), rng.normal(size=3) * 0.3)
        value, grad = generator_loss(net, X, t, scale, shift)

        def loss(p):
            moved = RigidTransform.from_params(p).apply(X) * scale
            if shift is not None:
                moved = moved + shift
            return -np.mean(C.forward(net, moved))

        assert value == pytest.approx(loss(t.params), rel=1e-12)
        h = 1e-6
        fd = np.array([(loss(t.params + h * e) - loss(t.params - h * e)) / (2 * h) for e in np.eye(6)])
        np.testing.assert_allclose(grad, fd, rtol=1e-5, atol=1e-7)


def test_bad_batch_shape(net):
    with pytest.raises(InvalidArgumentError):
        critic_loss(net, np.zeros((3, 2)), np.zeros((3, 3)))


def test_interpolates_dataclass():
    I = Interpolates(np.zeros((2, 3)), np.zeros(2))
    assert len(I) == 2
