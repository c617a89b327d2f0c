"""SO(3)/SE(3) helpers: Rodrigues exponential map, rigid transforms,
parameter Jacobians and the angular-distance error metric."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidArgumentError

SMALL_ANGLE = 1e-8
_ROT_TOL = 1e-6


def _as_vec3(v, name="vector"):
    v = np.asarray(v, dtype=np.float64)
    if v.shape != (3,):
        raise InvalidArgumentError(f"{name} must have shape (3,), got {v.shape}")
    if not np.all(np.isfinite(v)):
        raise InvalidArgumentError(f"{name} must be finite, got {v}")
    return v


def skew(v):
    """Cross-product matrix ``[v]x`` so that ``skew(v) @ w == cross(v, w)``."""
    x, y, z = v
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def _rodrigues_coeffs(theta):
    # sin(t)/t, (1-cos t)/t^2, (t - sin t)/t^3
    if theta < SMALL_ANGLE:
        t2 = theta * theta
        return 1.0 - t2 / 6.0, 0.5 - t2 / 24.0, 1.0 / 6.0 - t2 / 120.0
    s, c = np.sin(theta), np.cos(theta)
    return s / theta, (1.0 - c) / theta**2, (theta - s) / theta**3


def exp_map(omega):
    """Rotation matrix for the rotation vector ``omega`` (axis * angle)."""
    omega = _as_vec3(omega, "omega")
    theta = float(np.linalg.norm(omega))
    a, b, _ = _rodrigues_coeffs(theta)
    K = skew(omega)
    return np.eye(3) + a * K + b * (K @ K)


def right_jacobian(omega):
    """Right Jacobian of SO(3) at ``omega``."""
    omega = np.asarray(omega, dtype=np.float64)
    theta = float(np.linalg.norm(omega))
    _, b, c = _rodrigues_coeffs(theta)
    K = skew(omega)
    return np.eye(3) - b * K + c * (K @ K)


def canonicalize_rotation_vector(omega):
    """Equivalent rotation vector with magnitude in ``[0, pi]``."""
    omega = _as_vec3(omega, "omega")
    theta = float(np.linalg.norm(omega))
    if theta == 0.0:
        return omega.copy()
    axis = omega / theta
    wrapped = np.fmod(theta, 2.0 * np.pi)
    if wrapped > np.pi:
        return -axis * (2.0 * np.pi - wrapped)
    return axis * wrapped


def is_rotation(R, tol=_ROT_TOL):
    R = np.asarray(R, dtype=np.float64)
    if R.shape != (3, 3) or not np.all(np.isfinite(R)):
        return False
    return bool(
        np.max(np.abs(R.T @ R - np.eye(3))) < tol and abs(np.linalg.det(R) - 1.0) < tol
    )


def angular_distance(R_gt, R):
    """Rotation error in radians, ``2 asin(||R_gt - R||_F / sqrt(8))``.

    Lies in ``[0, pi]``. Raises :class:`InvalidArgumentError` if either input
    is not a rotation.
    """
    R_gt = np.asarray(R_gt, dtype=np.float64)
    R = np.asarray(R, dtype=np.float64)
    if not is_rotation(R_gt) or not is_rotation(R):
        raise InvalidArgumentError("angular_distance expects two rotation matrices")
    # Same quantity as the chord formula, but evaluated as atan2(sin, cos) of
    # the relative rotation: asin loses ~sqrt(eps) near a half turn.
    M = R_gt.T @ R
    sin_t = 0.5 * np.linalg.norm([M[2, 1] - M[1, 2], M[0, 2] - M[2, 0], M[1, 0] - M[0, 1]])
    cos_t = 0.5 * (np.trace(M) - 1.0)
    return float(np.arctan2(sin_t, cos_t))


def rotation_log(R):
    """Rotation vector of a rotation matrix (inverse of :func:`exp_map`)."""
    R = np.asarray(R, dtype=np.float64)
    cos_t = min(max((np.trace(R) - 1.0) / 2.0, -1.0), 1.0)
    theta = np.arccos(cos_t)
    w = np.array([R[2, 1] - R[1, 2], R[0, 2] - R[2, 0], R[1, 0] - R[0, 1]])
    if theta < 1e-6:
        return 0.5 * w
    if np.pi - theta < 1e-4:
        # near pi the antisymmetric part vanishes; use the symmetric part
        B = 0.5 * (R + np.eye(3))
        k = int(np.argmax(np.diag(B)))
        axis = B[:, k] / np.sqrt(max(B[k, k], 1e-300))
        axis /= np.linalg.norm(axis)
        if np.dot(axis, w) < 0:
            axis = -axis
        return axis * theta
    return w * (theta / (2.0 * np.sin(theta)))


@dataclass(frozen=True)
class RigidTransform:
    """Rotation vector plus translation: ``x -> exp_map(rotation_vector) x + translation``."""

    rotation_vector: np.ndarray = field(default_factory=lambda: np.zeros(3))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        object.__setattr__(self, "rotation_vector", _as_vec3(self.rotation_vector, "rotation_vector"))
        object.__setattr__(self, "translation", _as_vec3(self.translation, "translation"))

    @classmethod
    def identity(cls):
        return cls(np.zeros(3), np.zeros(3))

    @classmethod
    def from_params(cls, params):
        params = np.asarray(params, dtype=np.float64)
        return cls(params[:3].copy(), params[3:6].copy())

    @classmethod
    def from_matrix(cls, R, t=(0.0, 0.0, 0.0)):
        return cls(rotation_log(R), np.asarray(t, dtype=np.float64))

    @property
    def params(self):
        return np.concatenate([self.rotation_vector, self.translation])

    @property
    def rotation(self):
        return exp_map(self.rotation_vector)

    def homogeneous(self):
        T = np.eye(4)
        T[:3, :3] = self.rotation
        T[:3, 3] = self.translation
        return T

    def apply(self, points):
        """Transform a single point ``(3,)`` or an ``(N, 3)`` array."""
        return apply_transform(self, points)

    def compose(self, other):
        """``self ∘ other``: apply ``other`` first."""
        R1, R2 = self.rotation, other.rotation
        return RigidTransform.from_matrix(R1 @ R2, R1 @ other.translation + self.translation)

    def inverse(self):
        Rt = self.rotation.T
        return RigidTransform(-self.rotation_vector, -Rt @ self.translation)

    def canonical(self):
        return RigidTransform(canonicalize_rotation_vector(self.rotation_vector), self.translation)


def apply_transform(t, p):
    p = np.asarray(p, dtype=np.float64)
    return p @ t.rotation.T + t.translation


def d_transform_d_params(t, p):
    """Jacobian (3x6) of ``t.apply(p)`` w.r.t. ``[rotation_vector, translation]``."""
    p = _as_vec3(p, "p")
    R = t.rotation
    J = np.empty((3, 6))
    J[:, :3] = -R @ skew(p) @ right_jacobian(t.rotation_vector)
    J[:, 3:] = np.eye(3)
    return J


def rotation_vector_vjp(omega, points, cotangents):
    """``sum_i J_rot(p_i)^T c_i`` for the rotation block of the transform Jacobian.

    Uses ``J_rot(p)^T c = J_r^T (p x R^T c)`` so the batch costs one cross
    product per point.
    """
    R = exp_map(omega)
    local = np.asarray(cotangents) @ R  # rows are R^T c_i
    acc = np.cross(np.asarray(points), local).sum(axis=0)
    return right_jacobian(omega).T @ acc
