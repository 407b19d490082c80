"""Rotation estimation from paired absolute poses.

Two routes are provided: a Kabsch/Horn point-set alignment used for
initialization, and the Davenport Q-method eigenvector solve used for the
online refinement. Both minimize the same Frobenius objective
``sum_i || R @ R_b_i - R_l_i ||_F^2`` on noise-free data.

Sign note: with the attitude-profile matrix ``delta = sum R_b_i @ R_l_i.T``
and the Hamilton quaternion-to-rotation map used in :mod:`lidarcal.geom`,
the off-diagonal block of the 4x4 eigensystem matrix is
``[d23-d32, d31-d13, d12-d21]`` (1-indexed). This is the sign for which the
eigenvector solve agrees with Kabsch on noise-free data; the unit tests
pin it against the opposite candidate.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import AmbiguousAttitude, DegenerateGeometry
from .geom import (
    Transform,
    check_rotation,
    quat_canonicalize,
    vec_first_to_scalar_first,
)

EIGENGAP_TOL = 1e-9
COLLINEAR_TOL = 1e-9


@dataclass(frozen=True)
class DavenportAccumulator:
    """Running sum ``delta = sum_i R_b_i @ R_l_i.T`` over accepted pose pairs."""

    delta: np.ndarray
    count: int

    def __post_init__(self):
        delta = np.asarray(self.delta, dtype=float).reshape(3, 3)
        if not np.all(np.isfinite(delta)):
            raise ValueError("accumulator matrix has non-finite entries")
        if self.count < 0:
            raise ValueError("count must be non-negative")
        object.__setattr__(self, "delta", delta)

    @staticmethod
    def empty() -> "DavenportAccumulator":
        return DavenportAccumulator(np.zeros((3, 3)), 0)


@dataclass(frozen=True)
class DavenportMatrix:
    k: np.ndarray

    def __post_init__(self):
        k = np.asarray(self.k, dtype=float).reshape(4, 4)
        if np.max(np.abs(k - k.T)) > 1e-12:
            raise ValueError("matrix must be symmetric")
        object.__setattr__(self, "k", k)


def accumulate(acc: DavenportAccumulator, r_b, r_l) -> DavenportAccumulator:
    r_b = check_rotation(r_b)
    r_l = check_rotation(r_l)
    return DavenportAccumulator(acc.delta + r_b @ r_l.T, acc.count + 1)


def davenport_k(acc: DavenportAccumulator, lambda_sign: float = 1.0) -> DavenportMatrix:
    """Assemble the symmetric 4x4 eigensystem matrix from the accumulator.

    ``lambda_sign`` flips the off-diagonal block; it exists only so the unit
    tests can demonstrate that the default (+1) is the consistent choice.
    """
    if acc.count < 1:
        raise ValueError("accumulator is empty")
    d = acc.delta
    gamma = d.T + d
    mu = np.trace(d)
    lam = lambda_sign * np.array([
        d[1, 2] - d[2, 1],
        d[2, 0] - d[0, 2],
        d[0, 1] - d[1, 0],
    ])
    k = np.empty((4, 4))
    k[:3, :3] = gamma - mu * np.eye(3)
    k[:3, 3] = lam
    k[3, :3] = lam
    k[3, 3] = mu
    return DavenportMatrix(k)


def solve_qmethod(k: DavenportMatrix):
    """Max-eigenvalue eigenvector of the 4x4 matrix.

    Returns ``(q, lambda_max)`` with ``q`` scalar-first and canonicalized;
    the optimal alignment cost equals ``-lambda_max``.
    """
    eigvals, eigvecs = np.linalg.eigh(k.k)
    lambda_max = float(eigvals[-1])
    if lambda_max - float(eigvals[-2]) < EIGENGAP_TOL:
        raise AmbiguousAttitude(
            "two largest eigenvalues coincide; rotation not uniquely determined"
        )
    q = quat_canonicalize(vec_first_to_scalar_first(eigvecs[:, -1]))
    return q, lambda_max


def kabsch_align(points_b, points_l) -> Transform:
    """Least-squares rigid alignment ``min sum || R @ b_i + t - l_i ||^2``."""
    pb = np.asarray(points_b, dtype=float).reshape(-1, 3)
    pl = np.asarray(points_l, dtype=float).reshape(-1, 3)
    if pb.shape != pl.shape or pb.shape[0] < 3:
        raise ValueError("need equal-length point sets with at least 3 points")
    cb = pb.mean(axis=0)
    cl = pl.mean(axis=0)
    h = (pb - cb).T @ (pl - cl)
    u, s, vt = np.linalg.svd(h)
    if s[1] <= COLLINEAR_TOL * max(s[0], 1e-300):
        raise DegenerateGeometry("point sets are collinear")
    d = np.sign(np.linalg.det(vt.T @ u.T))
    r = vt.T @ np.diag([1.0, 1.0, d]) @ u.T
    return Transform(r, cl - r @ cb)
