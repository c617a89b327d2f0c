"""Finite-difference and metric checks runnable from an installed package."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import critic as C
from .geometry import RigidTransform, angular_distance, d_transform_d_params, exp_map
from .losses import critic_loss, critic_loss_full, generator_loss, gradient_penalty, make_interpolates

H = 1e-6
N_SEEDS = 8


@dataclass
class CheckResult:
    name: str
    max_error: float
    tolerance: float

    @property
    def passed(self):
        return bool(self.max_error <= self.tolerance)


def _rel(a, b):
    a, b = np.asarray(a), np.asarray(b)
    return float(np.max(np.abs(a - b) / (1.0 + np.abs(b))))


def _central(f, x, idx):
    out = np.empty(len(idx))
    for j, i in enumerate(idx):
        xp, xm = x.copy(), x.copy()
        xp[i] += H
        xm[i] -= H
        out[j] = (f(xp) - f(xm)) / (2 * H)
    return out


def _rng(seed):
    return np.random.default_rng([20240601, seed])


def check_transform_jacobian():
    worst = 0.0
    for s in range(N_SEEDS):
        rng = _rng(s)
        t = RigidTransform(rng.normal(size=3), rng.normal(size=3))
        p = rng.normal(size=3)
        J = d_transform_d_params(t, p)
        for k in range(3):
            fd = _central(lambda q: RigidTransform.from_params(q).apply(p)[k], t.params, range(6))
            worst = max(worst, _rel(J[k], fd))
    return worst


def check_exp_map_orthogonality():
    worst = 0.0
    rng = _rng(100)
    for _ in range(200):
        R = exp_map(rng.normal(size=3) * 3)
        worst = max(worst, np.max(np.abs(R.T @ R - np.eye(3))), abs(np.linalg.det(R) - 1))
    return worst


def _quat(w):
    th = np.linalg.norm(w)
    if th == 0:
        return np.array([1.0, 0, 0, 0])
    return np.concatenate([[np.cos(th / 2)], np.sin(th / 2) * w / th])


def check_metric_quaternion():
    worst = 0.0
    rng = _rng(101)
    for _ in range(200):
        a, b = rng.normal(size=3), rng.normal(size=3)
        ref = 2 * np.arccos(min(1.0, abs(_quat(a) @ _quat(b))))
        worst = max(worst, abs(angular_distance(exp_map(a), exp_map(b)) - ref))
    return worst


def check_metric_angle():
    worst = 0.0
    rng = _rng(102)
    for th in np.append(rng.uniform(0, np.pi, 200), [0.0, np.pi]):
        axis = rng.normal(size=3)
        w = axis / np.linalg.norm(axis) * th
        worst = max(worst, abs(angular_distance(np.eye(3), exp_map(w)) - th))
    return worst


def check_critic_input_gradient():
    worst = 0.0
    for s in range(N_SEEDS):
        rng = _rng(s)
        net = C.init_critic(rng=rng)
        x = rng.normal(size=3)
        worst = max(worst, _rel(C.grad_input(net, x), _central(lambda y: C.forward(net, y), x, range(3))))
    return worst


def check_critic_parameter_gradient():
    worst = 0.0
    for s in range(N_SEEDS):
        rng = _rng(s)
        net = C.init_critic(rng=rng)
        X = rng.normal(size=(5, 3))
        c = rng.normal(size=5)
        g = C.backward_params(net, X, c).flat
        idx = rng.choice(net.n_params, 30, replace=False)
        fd = _central(lambda p: float(c @ C.forward(net.with_params(p), X)), net.params, idx)
        worst = max(worst, _rel(g[idx], fd))
    return worst


def check_gradient_penalty():
    worst = 0.0
    for s in range(N_SEEDS):
        rng = _rng(s)
        net = C.init_critic(rng=rng)
        X = rng.normal(size=(4, 3))
        g = C.backward_gp(net, X).flat

        def pen(p):
            G = C.grad_input(net.with_params(p), X)
            return float(np.sum((np.linalg.norm(G, axis=1) - 1) ** 2))

        idx = rng.choice(net.n_params, 30, replace=False)
        worst = max(worst, _rel(g[idx], _central(pen, net.params, idx)))
    return worst


def check_critic_loss():
    worst = 0.0
    for s in range(N_SEEDS):
        rng = _rng(s)
        net = C.init_critic(rng=rng)
        T, M = rng.normal(size=(6, 3)), rng.normal(size=(6, 3))
        interp = make_interpolates(T, M, rng)
        _, g = critic_loss_full(net, T, M, 10.0, interpolates=interp)

        def loss(p):
            n = net.with_params(p)
            return critic_loss(n, T, M) + 10.0 * gradient_penalty(n, interp)

        idx = rng.choice(net.n_params, 30, replace=False)
        worst = max(worst, _rel(g.flat[idx], _central(loss, net.params, idx)))
    return worst


def check_generator_loss():
    worst = 0.0
    for s in range(N_SEEDS):
        rng = _rng(s)
        net = C.init_critic(rng=rng)
        X = rng.normal(size=(8, 3))
        t = RigidTransform(rng.normal(size=3), rng.normal(size=3) * 0.3)
        _, g = generator_loss(net, X, t)
        fd = _central(lambda q: -np.mean(C.forward(net, RigidTransform.from_params(q).apply(X))),
                      t.params, range(6))
        worst = max(worst, _rel(g, fd))
    return worst


CHECKS = [
    ("geometry.transform_jacobian", check_transform_jacobian, 1e-6),
    ("geometry.exp_map_orthogonality", check_exp_map_orthogonality, 1e-9),
    ("metric.quaternion_geodesic", check_metric_quaternion, 1e-9),
    ("metric.exp_map_angle", check_metric_angle, 1e-9),
    ("critic.input_gradient", check_critic_input_gradient, 1e-5),
    ("critic.parameter_gradient", check_critic_parameter_gradient, 1e-5),
    ("critic.gradient_penalty", check_gradient_penalty, 1e-5),
    ("losses.critic_loss", check_critic_loss, 1e-5),
    ("losses.generator_loss", check_generator_loss, 1e-5),
]


def run_selfcheck():
    return [CheckResult(name, float(fn()), tol) for name, fn, tol in CHECKS]
