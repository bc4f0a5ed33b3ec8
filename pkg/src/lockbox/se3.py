"""Rigid transforms and the SE(3) exponential map.

Twists are ordered (angular, linear): ``[wx, wy, wz, vx, vy, vz]``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

LOG_MARGIN = 1e-6
_SMALL = 1e-6


class LogSingularity(ValueError):
    pass


@dataclass(frozen=True)
class RigidPose:
    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "rotation", np.asarray(self.rotation, dtype=float).reshape(3, 3))
        object.__setattr__(self, "translation", np.asarray(self.translation, dtype=float).reshape(3))

    @classmethod
    def identity(cls) -> RigidPose:
        return cls(np.eye(3), np.zeros(3))

    @classmethod
    def from_translation(cls, t) -> RigidPose:
        return cls(np.eye(3), t)

    @classmethod
    def from_matrix(cls, m) -> RigidPose:
        m = np.asarray(m, dtype=float)
        return cls(m[:3, :3], m[:3, 3])

    def matrix(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] = self.rotation
        m[:3, 3] = self.translation
        return m

    def __matmul__(self, other: RigidPose) -> RigidPose:
        return RigidPose(self.rotation @ other.rotation, self.rotation @ other.translation + self.translation)

    def inverse(self) -> RigidPose:
        rt = self.rotation.T
        return RigidPose(rt, -rt @ self.translation)

    def apply(self, p) -> np.ndarray:
        return self.rotation @ np.asarray(p, dtype=float) + self.translation

    def orthonormalized(self) -> RigidPose:
        u, _, vt = np.linalg.svd(self.rotation)
        r = u @ vt
        if np.linalg.det(r) < 0:
            u[:, -1] *= -1
            r = u @ vt
        return RigidPose(r, self.translation)

    def is_valid(self, tol: float = 1e-9) -> bool:
        r = self.rotation
        return (
            bool(np.all(np.isfinite(r)) and np.all(np.isfinite(self.translation)))
            and np.allclose(r.T @ r, np.eye(3), atol=tol)
            and abs(np.linalg.det(r) - 1.0) < tol
        )


def skew(w) -> np.ndarray:
    x, y, z = w
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def _coefficients(theta: float) -> tuple[float, float, float]:
    """sin(t)/t, (1-cos t)/t^2, (t - sin t)/t^3 with series near zero."""
    if theta < _SMALL:
        t2 = theta * theta
        return 1.0 - t2 / 6.0, 0.5 - t2 / 24.0, 1.0 / 6.0 - t2 / 120.0
    s, c = np.sin(theta), np.cos(theta)
    return s / theta, (1.0 - c) / theta**2, (theta - s) / theta**3


def so3_exp(w) -> np.ndarray:
    w = np.asarray(w, dtype=float)
    theta = float(np.linalg.norm(w))
    a, b, _ = _coefficients(theta)
    W = skew(w)
    return np.eye(3) + a * W + b * (W @ W)


def so3_log(r) -> np.ndarray:
    r = np.asarray(r, dtype=float)
    cos = np.clip((np.trace(r) - 1.0) / 2.0, -1.0, 1.0)
    theta = float(np.arccos(cos))
    if theta > np.pi - LOG_MARGIN:
        raise LogSingularity(f"rotation angle {theta:.9f} too close to pi")
    vee = np.array([r[2, 1] - r[1, 2], r[0, 2] - r[2, 0], r[1, 0] - r[0, 1]])
    if theta < _SMALL:
        # sin(t)/t -> 1; keep the second-order term for round-trip accuracy.
        return 0.5 * vee * (1.0 + theta * theta / 6.0)
    return theta / (2.0 * np.sin(theta)) * vee


def exp_twist(xi) -> RigidPose:
    xi = np.asarray(xi, dtype=float)
    w, v = xi[:3], xi[3:]
    theta = float(np.linalg.norm(w))
    a, b, c = _coefficients(theta)
    W = skew(w)
    W2 = W @ W
    R = np.eye(3) + a * W + b * W2
    V = np.eye(3) + b * W + c * W2
    return RigidPose(R, V @ v)


def log_pose(pose: RigidPose) -> np.ndarray:
    w = so3_log(pose.rotation)
    theta = float(np.linalg.norm(w))
    W = skew(w)
    if theta < _SMALL:
        d = 1.0 / 12.0 + theta * theta / 720.0
    else:
        d = (1.0 - theta * np.sin(theta) / (2.0 * (1.0 - np.cos(theta)))) / theta**2
    v_inv = np.eye(3) - 0.5 * W + d * (W @ W)
    return np.concatenate([w, v_inv @ pose.translation])


def se3_log(pose_a: RigidPose, pose_b: RigidPose) -> np.ndarray:
    """Body-frame twist taking ``pose_a`` to ``pose_b``."""
    return log_pose(pose_a.inverse() @ pose_b)


def se3_exp(pose: RigidPose, delta) -> RigidPose:
    return pose @ exp_twist(delta)


def rotation_about(axis, angle: float) -> np.ndarray:
    axis = np.asarray(axis, dtype=float)
    return so3_exp(axis / np.linalg.norm(axis) * angle)


def grasp_pose_from_handle(handle: RigidPose, handle_to_grasp: RigidPose) -> RigidPose:
    return handle @ handle_to_grasp


def handle_to_grasp(handle: RigidPose, grasp: RigidPose) -> RigidPose:
    """Relative transform learned from one demonstrated grasp."""
    return handle.inverse() @ grasp
