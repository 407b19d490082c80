"""Rotation, quaternion and rigid-transform primitives.

Conventions used throughout the package:

* rotation matrices are 3x3, orthogonal within 1e-9, det = +1;
* quaternions are stored scalar-first ``[qs, qx, qy, qz]``, Hamilton
  product, canonicalized to ``qs >= 0``;
* the 4x4 left/right product matrices act on the vector-first layout
  ``[qv, qs]`` (the layout the Davenport eigenvector solve uses).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

ORTHOGONALITY_TOL = 1e-9


def _as_vec3(v) -> np.ndarray:
    v = np.asarray(v, dtype=float).reshape(3)
    if not np.all(np.isfinite(v)):
        raise ValueError("vector has non-finite components")
    return v


def check_rotation(r: np.ndarray, tol: float = ORTHOGONALITY_TOL) -> np.ndarray:
    """Validate that ``r`` is a proper rotation matrix and return it."""
    r = np.asarray(r, dtype=float).reshape(3, 3)
    if np.max(np.abs(r @ r.T - np.eye(3))) > tol:
        raise ValueError("matrix is not orthogonal")
    if abs(np.linalg.det(r) - 1.0) > tol:
        raise ValueError("matrix determinant is not +1")
    return r


@dataclass(frozen=True)
class Transform:
    """Rigid transform: ``p_out = rotation @ p_in + translation``."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "rotation", check_rotation(self.rotation))
        object.__setattr__(self, "translation", _as_vec3(self.translation))

    def apply(self, p) -> np.ndarray:
        return self.rotation @ _as_vec3(p) + self.translation

    @staticmethod
    def identity() -> "Transform":
        return Transform(np.eye(3), np.zeros(3))


def compose(a: Transform, b: Transform) -> Transform:
    """a then b applied from the right: ``compose(a, b).apply(p) == a.apply(b.apply(p))``."""
    return Transform(a.rotation @ b.rotation, a.rotation @ b.translation + a.translation)


def inverse(a: Transform) -> Transform:
    rt = a.rotation.T
    return Transform(rt, -rt @ a.translation)


def skew(v) -> np.ndarray:
    """Skew-symmetric matrix with ``skew(v) @ w == cross(v, w)``."""
    x, y, z = _as_vec3(v)
    return np.array([
        [0.0, -z, y],
        [z, 0.0, -x],
        [-y, x, 0.0],
    ])


def exp_so3(phi) -> np.ndarray:
    """Rodrigues exponential of a rotation vector (radians)."""
    phi = _as_vec3(phi)
    theta = np.linalg.norm(phi)
    k = skew(phi)
    if theta < 1e-8:
        # second-order Taylor expansion, exact to machine precision here
        return np.eye(3) + k + 0.5 * (k @ k)
    return (
        np.eye(3)
        + (np.sin(theta) / theta) * k
        + ((1.0 - np.cos(theta)) / theta**2) * (k @ k)
    )


def log_so3(r: np.ndarray) -> np.ndarray:
    """Matrix logarithm of a rotation, returned as a 3x3 skew matrix."""
    return skew(log_so3_vec(r))


def log_so3_vec(r: np.ndarray) -> np.ndarray:
    """Axis-angle vector of a rotation matrix."""
    r = np.asarray(r, dtype=float).reshape(3, 3)
    cos_theta = np.clip((np.trace(r) - 1.0) / 2.0, -1.0, 1.0)
    theta = np.arccos(cos_theta)
    if theta < 1e-8:
        return 0.5 * _vee(r - r.T)
    if np.pi - theta < 1e-6:
        # the (theta / 2 sin theta) form is singular here; recover the axis
        # from the quaternion instead
        q = rotation_to_quat(r)
        qv = q[1:]
        n = np.linalg.norm(qv)
        if n < 1e-12:
            return np.zeros(3)
        angle = 2.0 * np.arctan2(n, q[0])
        return angle * qv / n
    return (theta / (2.0 * np.sin(theta))) * _vee(r - r.T)


def _vee(m: np.ndarray) -> np.ndarray:
    return np.array([m[2, 1], m[0, 2], m[1, 0]])


# --- quaternions (scalar-first storage, Hamilton product) -------------------


def quat_canonicalize(q) -> np.ndarray:
    q = np.asarray(q, dtype=float).reshape(4)
    q = q / np.linalg.norm(q)
    if q[0] < 0.0:
        q = -q
    return q


def quat_mul(p, q) -> np.ndarray:
    """Hamilton product p * q, scalar-first."""
    ps, pv = p[0], np.asarray(p[1:], dtype=float)
    qs, qv = q[0], np.asarray(q[1:], dtype=float)
    s = ps * qs - pv @ qv
    v = ps * qv + qs * pv + np.cross(pv, qv)
    return np.concatenate(([s], v))


def quat_conj(q) -> np.ndarray:
    q = np.asarray(q, dtype=float).reshape(4)
    return np.concatenate(([q[0]], -q[1:]))


def quat_to_rotation(q) -> np.ndarray:
    """Rotation matrix of a unit quaternion (Hamilton, active)."""
    q = np.asarray(q, dtype=float).reshape(4)
    qs, qv = q[0], q[1:]
    return (
        (qs * qs - qv @ qv) * np.eye(3)
        + 2.0 * np.outer(qv, qv)
        + 2.0 * qs * skew(qv)
    )


def rotation_to_quat(r: np.ndarray) -> np.ndarray:
    """Quaternion of a rotation matrix, canonicalized (qs >= 0).

    Shepperd-style branch selection keeps the extraction well conditioned
    for all rotation angles.
    """
    r = np.asarray(r, dtype=float).reshape(3, 3)
    tr = np.trace(r)
    if tr > 0.0:
        s = np.sqrt(tr + 1.0) * 2.0
        q = np.array([
            0.25 * s,
            (r[2, 1] - r[1, 2]) / s,
            (r[0, 2] - r[2, 0]) / s,
            (r[1, 0] - r[0, 1]) / s,
        ])
    elif r[0, 0] >= r[1, 1] and r[0, 0] >= r[2, 2]:
        s = np.sqrt(1.0 + r[0, 0] - r[1, 1] - r[2, 2]) * 2.0
        q = np.array([
            (r[2, 1] - r[1, 2]) / s,
            0.25 * s,
            (r[0, 1] + r[1, 0]) / s,
            (r[0, 2] + r[2, 0]) / s,
        ])
    elif r[1, 1] >= r[2, 2]:
        s = np.sqrt(1.0 + r[1, 1] - r[0, 0] - r[2, 2]) * 2.0
        q = np.array([
            (r[0, 2] - r[2, 0]) / s,
            (r[0, 1] + r[1, 0]) / s,
            0.25 * s,
            (r[1, 2] + r[2, 1]) / s,
        ])
    else:
        s = np.sqrt(1.0 + r[2, 2] - r[0, 0] - r[1, 1]) * 2.0
        q = np.array([
            (r[1, 0] - r[0, 1]) / s,
            (r[0, 2] + r[2, 0]) / s,
            (r[1, 2] + r[2, 1]) / s,
            0.25 * s,
        ])
    return quat_canonicalize(q)


def _vec_first(q) -> np.ndarray:
    q = np.asarray(q, dtype=float).reshape(4)
    return np.concatenate((q[1:], q[:1]))


def vec_first_to_scalar_first(q4) -> np.ndarray:
    q4 = np.asarray(q4, dtype=float).reshape(4)
    return np.concatenate((q4[3:], q4[:3]))


def quat_left_matrix(q) -> np.ndarray:
    """4x4 matrix with ``L(p) @ vec_first(q) == vec_first(p * q)``."""
    q = np.asarray(q, dtype=float).reshape(4)
    qs, qv = q[0], q[1:]
    m = np.empty((4, 4))
    m[:3, :3] = qs * np.eye(3) + skew(qv)
    m[:3, 3] = qv
    m[3, :3] = -qv
    m[3, 3] = qs
    return m


def quat_right_matrix(q) -> np.ndarray:
    """4x4 matrix with ``R(p) @ vec_first(q) == vec_first(q * p)``."""
    q = np.asarray(q, dtype=float).reshape(4)
    qs, qv = q[0], q[1:]
    m = np.empty((4, 4))
    m[:3, :3] = qs * np.eye(3) - skew(qv)
    m[:3, 3] = qv
    m[3, :3] = -qv
    m[3, 3] = qs
    return m


def geodesic_distance(r_a: np.ndarray, r_b: np.ndarray) -> float:
    """Angle in radians of the relative rotation between two matrices."""
    return float(np.linalg.norm(log_so3_vec(np.asarray(r_a).T @ np.asarray(r_b))))
