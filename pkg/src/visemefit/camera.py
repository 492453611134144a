"""Rigid pose and pinhole projection.

Quaternions are scalar-last (x, y, z, w). Pixel coordinates put the center of
pixel (row r, column c) at (x=c, y=r); the principal point is given in those
units.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DataError, NumericError


def quat_normalize(q) -> np.ndarray:
    q = np.asarray(q, dtype=np.float64).reshape(4)
    n = float(np.linalg.norm(q))
    if n == 0.0 or not np.isfinite(n):
        raise NumericError("cannot normalize a zero or non-finite quaternion")
    return q / n


def quat_to_matrix(q) -> np.ndarray:
    """Rotation matrix for a unit quaternion (x, y, z, w)."""
    x, y, z, w = q
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)],
            [2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)],
            [2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)],
        ]
    )


def quat_rotation_jacobians(q) -> np.ndarray:
    """d(rotation matrix)/dq for a unit quaternion, shape (4, 3, 3).

    Entries of the rotation matrix are quadratic in q, so each slice is the
    corresponding linear form. Valid at unit norm; callers account for the
    normalization chain separately.
    """
    x, y, z, w = q
    dx = np.array([[0, 2 * y, 2 * z], [2 * y, -4 * x, -2 * w], [2 * z, 2 * w, -4 * x]], dtype=np.float64)
    dy = np.array([[-4 * y, 2 * x, 2 * w], [2 * x, 0, 2 * z], [-2 * w, 2 * z, -4 * y]], dtype=np.float64)
    dz = np.array([[-4 * z, -2 * w, 2 * x], [2 * w, -4 * z, 2 * y], [2 * x, 2 * y, 0]], dtype=np.float64)
    dw = np.array([[0, -2 * z, 2 * y], [2 * z, 0, -2 * x], [-2 * y, 2 * x, 0]], dtype=np.float64)
    return np.stack([dx, dy, dz, dw])


@dataclass(frozen=True)
class Pose:
    """Rigid transform plus pinhole intrinsics (f, cx, cy) in pixels."""

    rotation: np.ndarray
    translation: np.ndarray
    intrinsics: tuple[float, float, float]

    def __post_init__(self):
        q = np.asarray(self.rotation, dtype=np.float64).reshape(4).copy()
        t = np.asarray(self.translation, dtype=np.float64).reshape(3).copy()
        if not (np.isfinite(q).all() and np.isfinite(t).all()):
            raise DataError("pose components must be finite")
        f, cx, cy = self.intrinsics
        if not f > 0:
            raise DataError(f"focal length must be positive, got {f}")
        q.setflags(write=False)
        t.setflags(write=False)
        object.__setattr__(self, "rotation", q)
        object.__setattr__(self, "translation", t)
        object.__setattr__(self, "intrinsics", (float(f), float(cx), float(cy)))


def identity_pose(intrinsics) -> Pose:
    return Pose(
        rotation=np.array([0.0, 0.0, 0.0, 1.0]),
        translation=np.zeros(3),
        intrinsics=intrinsics,
    )


def transform_points(points, pose: Pose) -> np.ndarray:
    """Apply the rigid transform (camera frame), shape-preserving over (..., 3)."""
    p = np.asarray(points, dtype=np.float64)
    R = quat_to_matrix(quat_normalize(pose.rotation))
    return p @ R.T + pose.translation


def project(points, pose: Pose) -> np.ndarray:
    """Pinhole projection of one point (3,) or many (N, 3) to pixels.

    Raises NumericError if any transformed point has non-positive depth.
    """
    p = np.asarray(points, dtype=np.float64)
    single = p.ndim == 1
    X = transform_points(p.reshape(-1, 3), pose)
    z = X[:, 2]
    if np.any(z <= 0.0):
        bad = int(np.argmax(z <= 0.0))
        raise NumericError(f"behind-camera vertex at index {bad} (depth {z[bad]:.6g})")
    f, cx, cy = pose.intrinsics
    out = np.empty((len(X), 2))
    out[:, 0] = f * X[:, 0] / z + cx
    out[:, 1] = f * X[:, 1] / z + cy
    return out[0] if single else out
