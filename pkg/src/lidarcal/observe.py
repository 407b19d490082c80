"""Observability gating from paired angular-velocity streams.

A batch of synchronized gyro samples from the base unit and from the
sensor-embedded IMU determines the relative orientation up to the axes the
motion actually excites. The Fisher information of that estimation problem
is a 3x3 matrix over the rotation tangent space; its smallest singular
value is the gate statistic. With an isotropic gyro covariance the
singular values do not depend on the linearization point, which makes the
gate decision robust to a poor current rotation estimate.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InsufficientExcitation, NotConverged, SingularSystem
from .geom import check_rotation, exp_so3, skew
from .lsq import gauss_newton_step

ALIGN_STEP_TOL = 1e-10
ALIGN_FAIL_TOL = 1e-6


@dataclass(frozen=True)
class RateBatch:
    """Synchronized angular velocities of base (GNSS unit) and sensor IMU."""

    omega_base: np.ndarray
    omega_sensor: np.ndarray
    timestamps: np.ndarray
    sigma_gyro: np.ndarray

    def __post_init__(self):
        ob = np.asarray(self.omega_base, dtype=float).reshape(-1, 3)
        os_ = np.asarray(self.omega_sensor, dtype=float).reshape(-1, 3)
        ts = np.asarray(self.timestamps, dtype=float).reshape(-1)
        sg = np.asarray(self.sigma_gyro, dtype=float).reshape(3, 3)
        if not (ob.shape[0] == os_.shape[0] == ts.shape[0] >= 1):
            raise ValueError("streams must have equal nonzero length")
        if np.any(np.diff(ts) <= 0.0):
            raise ValueError("timestamps must be strictly increasing")
        if np.any(np.linalg.eigvalsh(sg) <= 0.0):
            raise ValueError("gyro covariance must be positive definite")
        object.__setattr__(self, "omega_base", ob)
        object.__setattr__(self, "omega_sensor", os_)
        object.__setattr__(self, "timestamps", ts)
        object.__setattr__(self, "sigma_gyro", sg)

    def __len__(self):
        return self.omega_base.shape[0]


@dataclass(frozen=True)
class GateDecision:
    accepted: bool
    min_singular: float
    singular_values: np.ndarray
    r_bi_estimate: np.ndarray

    def __post_init__(self):
        sv = np.asarray(self.singular_values, dtype=float).reshape(3)
        if np.any(np.diff(sv) > 0.0) or np.any(sv < 0.0):
            raise ValueError("singular values must be nonnegative and descending")
        object.__setattr__(self, "singular_values", sv)
        object.__setattr__(self, "r_bi_estimate", check_rotation(self.r_bi_estimate))


def _stacked_residual_jacobian(batch: RateBatch, r_hat: np.ndarray):
    res = (batch.omega_base @ r_hat.T - batch.omega_sensor).reshape(-1)
    jac = np.vstack([-r_hat @ skew(w) for w in batch.omega_base])
    return res, jac


def align_angular_rates(batch: RateBatch, r_init, max_iters: int = 50) -> np.ndarray:
    """Gauss-Newton on the rotation manifold for ``R w_base ~= w_sensor``.

    Multiplicative update ``R <- R @ exp_so3(dx)``; orthogonality holds by
    construction.
    """
    if len(batch) < 3:
        raise ValueError("need at least 3 samples")
    r_hat = check_rotation(r_init)
    if not np.any(np.linalg.norm(batch.omega_base, axis=1) > 0.0):
        raise InsufficientExcitation("all angular rates are zero")
    step = np.inf
    for _ in range(max_iters):
        res, jac = _stacked_residual_jacobian(batch, r_hat)
        try:
            dx, _ = gauss_newton_step(lambda _x: res, lambda _x: jac,
                                      np.zeros(3), batch.sigma_gyro)
        except SingularSystem as exc:
            raise InsufficientExcitation(
                "rate information matrix is singular; motion under-excites rotation"
            ) from exc
        r_hat = r_hat @ exp_so3(dx)
        step = float(np.linalg.norm(dx))
        if step < ALIGN_STEP_TOL:
            return r_hat
    if step > ALIGN_FAIL_TOL:
        raise NotConverged(f"alignment stalled with step {step:.3e}")
    return r_hat


def fisher_information(batch: RateBatch, r_hat) -> np.ndarray:
    """Sum of per-sample ``J.T @ sigma_inv @ J`` over the batch; symmetric PSD."""
    r_hat = check_rotation(r_hat)
    sigma_inv = np.linalg.inv(batch.sigma_gyro)
    info = np.zeros((3, 3))
    for w in batch.omega_base:
        j = -r_hat @ skew(w)
        info += j.T @ sigma_inv @ j
    return 0.5 * (info + info.T)


def gate_batch(batch: RateBatch, r_hat, epsilon: float) -> GateDecision:
    """Accept the batch iff the smallest Fisher singular value reaches epsilon.

    For accepted batches the returned rotation is refined by
    :func:`align_angular_rates` (falling back to ``r_hat`` if refinement
    fails); rejected batches echo ``r_hat``.
    """
    if epsilon <= 0.0:
        raise ValueError("epsilon must be positive")
    r_hat = check_rotation(r_hat)
    info = fisher_information(batch, r_hat)
    svals = np.linalg.svd(info, compute_uv=False)
    accepted = bool(svals[-1] >= epsilon)
    estimate = r_hat
    if accepted:
        try:
            estimate = align_angular_rates(batch, r_hat)
        except (InsufficientExcitation, NotConverged):
            estimate = r_hat
    return GateDecision(accepted, float(svals[-1]), svals, estimate)
