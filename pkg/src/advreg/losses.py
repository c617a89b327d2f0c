"""Adversarial objectives for the critic and the rigid-transform generator.

Batches are ``(n, 3)`` arrays. ``target`` samples come from the fixed cloud,
``moved`` samples are source points after the current transform.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import critic as C
from .errors import InvalidArgumentError
from .geometry import exp_map, right_jacobian


@dataclass(frozen=True)
class Interpolates:
    """Mixed points ``alpha * target + (1 - alpha) * moved``, one alpha per pair."""

    points: np.ndarray
    alpha: np.ndarray

    def __len__(self):
        return len(self.alpha)


def _check_batch(batch, name):
    batch = np.asarray(batch, dtype=np.float64)
    if batch.ndim == 1 and batch.shape[0] == 3:
        batch = batch[None, :]
    if batch.ndim != 2 or batch.shape[1] != 3:
        raise InvalidArgumentError(f"{name} batch must be (n, 3), got {batch.shape}")
    if len(batch) == 0:
        raise InvalidArgumentError(f"{name} batch is empty")
    return batch


def critic_loss(net, target_batch, moved_batch):
    """``-(mean f(target) - mean f(moved))``."""
    target_batch = _check_batch(target_batch, "target")
    moved_batch = _check_batch(moved_batch, "moved")
    return -(C.forward(net, target_batch).mean() - C.forward(net, moved_batch).mean())


def make_interpolates(target_batch, moved_batch, rng):
    target_batch = _check_batch(target_batch, "target")
    moved_batch = _check_batch(moved_batch, "moved")
    k = min(len(target_batch), len(moved_batch))
    alpha = rng.random(k)
    a = alpha[:, None]
    pts = a * target_batch[:k] + (1.0 - a) * moved_batch[:k]
    return Interpolates(pts, alpha)


def gradient_penalty(net, interpolates):
    pts = interpolates.points if isinstance(interpolates, Interpolates) else interpolates
    pts = _check_batch(pts, "interpolate")
    g = C.grad_input(net, pts)
    return float(np.mean((np.linalg.norm(g, axis=1) - 1.0) ** 2))


def critic_loss_full(net, target_batch, moved_batch, lam, rng=None, interpolates=None):
    """Critic loss plus ``lam`` times the gradient penalty, with its parameter gradient.

    Pass ``interpolates`` to freeze the mixing coefficients; otherwise they
    are drawn from ``rng``.
    """
    if lam < 0:
        raise InvalidArgumentError(f"penalty weight must be >= 0, got {lam}")
    target_batch = _check_batch(target_batch, "target")
    moved_batch = _check_batch(moved_batch, "moved")
    n, m = len(target_batch), len(moved_batch)
    f_t, g_t = C.forward_and_backward(net, target_batch, np.full(n, -1.0 / n))
    f_m, g_m = C.forward_and_backward(net, moved_batch, np.full(m, 1.0 / m))
    value = -(f_t.mean() - f_m.mean())
    grad = g_t.flat + g_m.flat
    if lam > 0:
        if interpolates is None:
            interpolates = make_interpolates(target_batch, moved_batch, rng)
        k = len(interpolates)
        pen, g_gp = C.penalty_value_and_grad(net, interpolates.points, lam / k)
        value = value + lam * pen.mean()
        grad = grad + g_gp.flat
    return float(value), C.CriticGradients(net, grad)


def generator_loss(net, source_batch, transform, scale=1.0, shift=None):
    """``-mean f(scale * M(x) + shift)`` and its gradient w.r.t. the 6 transform parameters.

    ``scale``/``shift`` are the batch augmentation used during the rotation
    phase; the defaults give the plain loss.
    """
    source_batch = _check_batch(source_batch, "source")
    m = len(source_batch)
    R = exp_map(transform.rotation_vector)
    moved = source_batch @ R.T + transform.translation
    if scale != 1.0:
        moved = moved * scale
    if shift is not None:
        moved = moved + shift
    f = C.forward(net, moved)
    g = C.grad_input(net, moved)
    grad = np.empty(6)
    g_sum = g.sum(axis=0)
    grad[3:] = -scale * g_sum / m
    # rotation block: J_rot(p)^T c = J_r^T (p x R^T c)
    acc = np.cross(source_batch, g @ R).sum(axis=0)
    grad[:3] = -scale * (right_jacobian(transform.rotation_vector).T @ acc) / m
    return float(-f.mean()), grad
