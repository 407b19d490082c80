"""Hand-eye solvers over relative pose pairs.

Both solvers recover the fixed transform X in ``motion_a @ X = X @ motion_b``
from pairs of relative motions taken over the same time window: the rotation
from the nullspace of stacked quaternion product-matrix differences, the
translation from a bounded least-squares on
``(R_a_rel - I) t = R* t_b_rel - t_a_rel``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateMotion, SingularSystem
from .geom import (
    Transform,
    check_rotation,
    compose,
    inverse,
    quat_canonicalize,
    quat_left_matrix,
    quat_right_matrix,
    rotation_to_quat,
    vec_first_to_scalar_first,
)
from .lsq import Bounds, LinearSystem, solve_bvls

DEGENERACY_RATIO = 1e-3
UNOBSERVABLE_RATIO = 1e-6


@dataclass(frozen=True)
class RelativePosePair:
    """Relative motions of the two rigidly-linked frames over one window.

    ``motion_a`` is the frame on the left of the sought transform (lidar for
    lidar-IMU, base for base-lidar), ``motion_b`` the frame on the right.
    """

    motion_a: Transform
    motion_b: Transform


@dataclass(frozen=True)
class HandEyeDiagnostics:
    smallest_singular: float
    second_smallest_singular: float
    pair_count: int


@dataclass(frozen=True)
class TranslationObservability:
    """Directions of the translation left unconstrained by the motion.

    Unobservable directions are pinned to the midpoint of the bounds; each
    entry is a unit vector in the solve frame.
    """

    unobservable_directions: list = field(default_factory=list)

    @property
    def fully_observable(self) -> bool:
        return not self.unobservable_directions


def pairs_from_pose_streams(poses_a, poses_b) -> list[RelativePosePair]:
    """Consecutive relative motions, each expressed in the earlier frame."""
    if len(poses_a) != len(poses_b):
        raise ValueError("streams must have equal length")
    pairs = []
    for prev_a, next_a, prev_b, next_b in zip(poses_a, poses_a[1:], poses_b, poses_b[1:]):
        pairs.append(RelativePosePair(
            compose(inverse(prev_a), next_a),
            compose(inverse(prev_b), next_b),
        ))
    return pairs


def solve_rotation_handeye(pairs, degeneracy_threshold: float = DEGENERACY_RATIO):
    """Nullspace rotation solve over stacked relative-rotation constraints.

    Returns ``(q, diagnostics)`` with ``q`` the canonical scalar-first unit
    quaternion of X. Raises :class:`DegenerateMotion` when the stacked
    matrix has a nullspace of dimension > 1 (rotation axes insufficiently
    varied).
    """
    if len(pairs) < 2:
        raise ValueError("need at least 2 relative pose pairs")
    blocks = []
    for p in pairs:
        q_a = rotation_to_quat(p.motion_a.rotation)
        q_b = rotation_to_quat(p.motion_b.rotation)
        blocks.append(quat_left_matrix(q_a) - quat_right_matrix(q_b))
    a = np.vstack(blocks)
    _, s, vt = np.linalg.svd(a)
    diag = HandEyeDiagnostics(float(s[-1]), float(s[-2]), len(pairs))
    if s[0] <= 0.0 or s[-2] < degeneracy_threshold * s[0]:
        raise DegenerateMotion(
            "relative rotations span too few axes for a unique hand-eye solution"
        )
    q = quat_canonicalize(vec_first_to_scalar_first(vt[-1]))
    return q, diag


def solve_translation_handeye(pairs, r_star, bounds: Bounds):
    """Bounded translation solve given the previously recovered rotation.

    Returns ``(t, observability)``. Directions along which the stacked
    ``R_a_rel - I`` carries no information (pure translation, planar motion)
    are pinned to the bounds midpoint and reported; if no direction is
    observable the system is singular.
    """
    if len(pairs) < 3:
        raise ValueError("need at least 3 relative pose pairs")
    r_star = check_rotation(r_star)
    rows = []
    rhs = []
    for p in pairs:
        rows.append(p.motion_a.rotation - np.eye(3))
        rhs.append(r_star @ p.motion_b.translation - p.motion_a.translation)
    a = np.vstack(rows)
    b = np.concatenate(rhs)

    normal = a.T @ a
    eigvals, eigvecs = np.linalg.eigh(normal)
    max_eig = float(eigvals[-1])
    null_mask = eigvals < UNOBSERVABLE_RATIO * max(max_eig, 0.0)
    if max_eig <= 0.0 or np.all(null_mask):
        raise SingularSystem("relative motions carry no translation information")

    midpoint = 0.5 * (bounds.lower + bounds.upper)
    null_dirs = [eigvecs[:, i].copy() for i in np.flatnonzero(null_mask)]
    if null_dirs:
        # pin the blind directions to the prior (bounds midpoint) by adding
        # one synthetic measurement row per direction
        weight = np.sqrt(max_eig)
        extra_rows = [weight * v for v in null_dirs]
        extra_rhs = [weight * float(v @ midpoint) for v in null_dirs]
        a = np.vstack([a, np.vstack(extra_rows)])
        b = np.concatenate([b, np.array(extra_rhs)])

    x = solve_bvls(LinearSystem(a, b, np.eye(1)), bounds)
    return x, TranslationObservability(null_dirs)
