"""Online calibration loop: association, gating, conditional updates, metrics.

The loop consumes two absolute pose streams (vehicle base from GNSS, lidar
from odometry) plus the two raw gyro streams, chunks the associated pose
pairs into fixed-size batches, and only lets a batch touch the estimate
when its angular-rate Fisher information clears the gate. Rotation comes
from the Davenport eigenvector solve over all accepted pairs, translation
from a bounded solve around the CAD prior; each is adopted only when it
improves the respective normalized cost.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import (
    AmbiguousAttitude,
    DegenerateGeometry,
    InsufficientData,
    NotStatic,
    SingularSystem,
)
from .geom import Transform, check_rotation, compose, inverse, log_so3_vec, quat_to_rotation
from .handeye import RelativePosePair, pairs_from_pose_streams, solve_translation_handeye
from .lsq import Bounds, LinearSystem, solve_bvls
from .observe import GateDecision, RateBatch, gate_batch
from .qmethod import (
    DavenportAccumulator,
    accumulate,
    davenport_k,
    kabsch_align,
    solve_qmethod,
)

GRAVITY_MAGNITUDE = 9.81


@dataclass(frozen=True)
class TimedPose:
    t: float
    pose: Transform
    frame_tag: str = "base"


@dataclass(frozen=True)
class PosePair:
    base: TimedPose
    lidar: TimedPose
    dt: float


@dataclass(frozen=True)
class BatchConfig:
    batch_size_n: int
    beta: float
    epsilon: float
    bounds: Bounds
    max_association_gap: float
    translation_backend: str = "absolute"
    cad_prior: np.ndarray = field(default_factory=lambda: np.zeros(3))
    gyro_std: float = 0.01

    def __post_init__(self):
        if self.batch_size_n < 3:
            raise ValueError("batch_size_n must be at least 3")
        if self.beta <= 0.0 or self.epsilon <= 0.0:
            raise ValueError("beta and epsilon must be positive")
        if self.translation_backend not in ("hand_eye", "absolute"):
            raise ValueError("translation_backend must be 'hand_eye' or 'absolute'")
        if self.gyro_std <= 0.0:
            raise ValueError("gyro_std must be positive")
        object.__setattr__(self, "cad_prior",
                           np.asarray(self.cad_prior, dtype=float).reshape(3))

    @property
    def sigma_gyro(self) -> np.ndarray:
        return self.gyro_std**2 * np.eye(3)


@dataclass(frozen=True)
class GateLogEntry:
    batch_index: int
    accepted: bool
    min_singular: float
    note: str = ""


@dataclass(frozen=True)
class CalibrationState:
    extrinsic: Transform
    accepted_pairs: tuple = ()
    davenport: DavenportAccumulator = field(default_factory=DavenportAccumulator.empty)
    cost_history: tuple = ()
    converged: bool = False
    gate_log: tuple = ()

    @staticmethod
    def initial(extrinsic: Transform) -> "CalibrationState":
        return CalibrationState(extrinsic=extrinsic)


@dataclass
class CalibrationReport:
    final_extrinsic: Transform
    converged: bool
    iterations: int
    cost_history: list
    gate_log: list
    config: dict
    seed: int | None = None
    delta_t: float | None = None
    delta_r: float | None = None


def normalize_to_initial(poses) -> list:
    """Left-compose every pose with the inverse of the first one."""
    if not poses:
        raise ValueError("empty pose stream")
    first_inv = inverse(poses[0].pose)
    return [replace(p, pose=compose(first_inv, p.pose)) for p in poses]


def gravity_align_init(static_accels) -> tuple[float, float]:
    """Roll and pitch (radians) from averaged static specific force."""
    accels = np.asarray(static_accels, dtype=float).reshape(-1, 3)
    if accels.shape[0] < 10:
        raise ValueError("need at least 10 static samples")
    mags = np.linalg.norm(accels, axis=1)
    if abs(float(np.mean(mags)) - GRAVITY_MAGNITUDE) > 0.2 * GRAVITY_MAGNITUDE:
        raise ValueError("mean specific force is not near gravity")
    if float(np.std(mags)) > 0.5:
        raise NotStatic("accelerometer magnitude varies too much for a static capture")
    g = accels.mean(axis=0)
    roll = math.atan2(g[1], g[2])
    pitch = math.atan2(-g[0], math.hypot(g[1], g[2]))
    return roll, pitch


def associate_poses(base_stream, lidar_stream, max_gap: float) -> list[PosePair]:
    """Greedy nearest-timestamp pairing; each base pose used at most once."""
    pairs = []
    base_times = np.array([p.t for p in base_stream])
    used_up_to = 0
    for lp in lidar_stream:
        idx = int(np.searchsorted(base_times, lp.t))
        candidates = [i for i in (idx - 1, idx) if used_up_to <= i < len(base_stream)]
        if not candidates:
            continue
        # ties go to the earlier base pose
        best = min(candidates, key=lambda i: (abs(base_times[i] - lp.t), i))
        gap = float(base_times[best] - lp.t)
        if abs(gap) > max_gap:
            continue
        pairs.append(PosePair(base_stream[best], lp, gap))
        used_up_to = best + 1
    return pairs


def pose_error(extrinsic: Transform, pairs) -> tuple[float, float]:
    """Normalized pose-consistency cost ``(total, rotation_only)``.

    Per pair the cost is the squared Frobenius norm of the log of the
    rotation residual plus the squared translation residual; the batch
    value is ``sqrt(sum) / N``.
    """
    if not pairs:
        raise ValueError("no pose pairs")
    r, t = extrinsic.rotation, extrinsic.translation
    total = 0.0
    rot_total = 0.0
    for p in pairs:
        rb, tb = p.base.pose.rotation, p.base.pose.translation
        rl, tl = p.lidar.pose.rotation, p.lidar.pose.translation
        theta_vec = log_so3_vec(r @ rb @ rl.T)
        xi_rot = 2.0 * float(theta_vec @ theta_vec)  # ||log(R)||_F^2 = 2 theta^2
        resid = r @ tb + t - tl
        total += xi_rot + float(resid @ resid)
        rot_total += xi_rot
    n = len(pairs)
    return math.sqrt(total) / n, math.sqrt(rot_total) / n


def _solve_translation(extrinsic_rot, pairs, cfg: BatchConfig) -> np.ndarray:
    if cfg.translation_backend == "absolute":
        rows = np.tile(np.eye(3), (len(pairs), 1))
        rhs = np.concatenate([
            p.lidar.pose.translation - extrinsic_rot @ p.base.pose.translation
            for p in pairs
        ])
        return solve_bvls(LinearSystem(rows, rhs, np.eye(3)), cfg.bounds)
    base_poses = [p.base.pose for p in pairs]
    lidar_poses = [p.lidar.pose for p in pairs]
    rel = pairs_from_pose_streams(base_poses, lidar_poses)
    t, _obs = solve_translation_handeye(rel, extrinsic_rot, cfg.bounds)
    return t


def step_batch(state: CalibrationState, batch_pairs, rate_batch: RateBatch,
               cfg: BatchConfig) -> CalibrationState:
    """One batch of the online loop; returns the successor state.

    Rejected or degenerate batches leave everything but the gate log
    untouched.
    """
    if len(batch_pairs) != cfg.batch_size_n:
        raise ValueError("batch size does not match config")
    index = len(state.gate_log)
    r_bi_hat = state.extrinsic.rotation.T
    decision = gate_batch(rate_batch, r_bi_hat, cfg.epsilon)
    if not decision.accepted:
        entry = GateLogEntry(index, False, decision.min_singular, "gate rejected")
        return replace(state, gate_log=state.gate_log + (entry,))

    new_pairs = state.accepted_pairs + tuple(batch_pairs)
    dav = state.davenport
    for p in batch_pairs:
        dav = accumulate(dav, p.base.pose.rotation, p.lidar.pose.rotation)
    try:
        q, _lam = solve_qmethod(davenport_k(dav))
    except AmbiguousAttitude:
        entry = GateLogEntry(index, False, decision.min_singular,
                             "ambiguous attitude; batch skipped")
        return replace(state, gate_log=state.gate_log + (entry,))
    r_hat = quat_to_rotation(q)

    extrinsic = state.extrinsic
    cost_history = state.cost_history
    _, r_err_old = pose_error(extrinsic, new_pairs)
    _, r_err_new = pose_error(Transform(r_hat, extrinsic.translation), new_pairs)
    # slack absorbs float dust when both errors sit at machine precision
    if r_err_new <= r_err_old * (1.0 + 1e-9) + 1e-12:
        candidate = Transform(r_hat, extrinsic.translation)
        try:
            t_hat = _solve_translation(r_hat, new_pairs, cfg)
        except SingularSystem:
            t_hat = None
        if t_hat is not None:
            base_total, _ = pose_error(candidate, new_pairs)
            with_t = Transform(r_hat, t_hat)
            cand_total, _ = pose_error(with_t, new_pairs)
            if cand_total <= base_total * (1.0 + 1e-9) + 1e-12:
                candidate = with_t
        total, rot = pose_error(candidate, new_pairs)
        # adopt only if the normalized cost does not regress past the last
        # recorded value, so the cost history stays non-increasing even when
        # a batch of inconsistent pairs slips through the gate
        prev_total = cost_history[-1][1] if cost_history else math.inf
        if total <= prev_total * (1.0 + 1e-9) + 1e-12:
            extrinsic = candidate
            cost_history = cost_history + ((index, total, rot),)

    total, _ = pose_error(extrinsic, new_pairs)
    entry = GateLogEntry(index, True, decision.min_singular)
    return CalibrationState(
        extrinsic=extrinsic,
        accepted_pairs=new_pairs,
        davenport=dav,
        cost_history=cost_history,
        converged=total < cfg.beta,
        gate_log=state.gate_log + (entry,),
    )


def make_rate_batch(base_rates, sensor_rates, t_start: float, t_end: float,
                    sigma_gyro, max_gap: float) -> RateBatch | None:
    """Pair the gyro streams inside a time window; None if too sparse."""
    base_times = np.array([s.t for s in base_rates])
    omega_sensor = []
    omega_base = []
    timestamps = []
    for s in sensor_rates:
        if not t_start <= s.t <= t_end:
            continue
        idx = int(np.searchsorted(base_times, s.t))
        candidates = [i for i in (idx - 1, idx) if 0 <= i < len(base_rates)]
        if not candidates:
            continue
        best = min(candidates, key=lambda i: abs(base_times[i] - s.t))
        if abs(base_times[best] - s.t) > max_gap:
            continue
        omega_sensor.append(s.omega)
        omega_base.append(base_rates[best].omega)
        timestamps.append(s.t)
    if len(timestamps) < 3:
        return None
    return RateBatch(np.array(omega_base), np.array(omega_sensor),
                     np.array(timestamps), sigma_gyro)


def run_calibration(base_stream, lidar_stream, base_rates, sensor_rates,
                    cfg: BatchConfig) -> CalibrationReport:
    """Full online loop over successive non-overlapping batches.

    The base stream is normalized to its initial pose (the lidar odometry
    stream is already expressed relative to its own start). The initial
    rotation comes from aligning the first batch of translation pairs, the
    initial translation from the CAD prior.
    """
    if not base_stream or not lidar_stream:
        raise InsufficientData("empty pose stream")
    base_stream = normalize_to_initial(list(base_stream))
    pairs = associate_poses(base_stream, list(lidar_stream), cfg.max_association_gap)
    n = cfg.batch_size_n
    if len(pairs) < n:
        raise InsufficientData(
            f"only {len(pairs)} associated pose pairs; need a full batch of {n}"
        )

    try:
        init = kabsch_align(
            [p.base.pose.translation for p in pairs[:n]],
            [p.lidar.pose.translation for p in pairs[:n]],
        )
        r0 = init.rotation
    except DegenerateGeometry:
        r0 = np.eye(3)
    state = CalibrationState.initial(Transform(r0, cfg.cad_prior))

    iterations = 0
    for start in range(0, len(pairs) - n + 1, n):
        batch = pairs[start:start + n]
        t0 = min(batch[0].base.t, batch[0].lidar.t)
        t1 = max(batch[-1].base.t, batch[-1].lidar.t)
        rate_batch = make_rate_batch(base_rates, sensor_rates, t0, t1,
                                     cfg.sigma_gyro, cfg.max_association_gap)
        if rate_batch is None:
            entry = GateLogEntry(len(state.gate_log), False, 0.0, "no rate data")
            state = replace(state, gate_log=state.gate_log + (entry,))
        else:
            state = step_batch(state, batch, rate_batch, cfg)
        iterations += 1
        if state.converged:
            break

    return CalibrationReport(
        final_extrinsic=state.extrinsic,
        converged=state.converged,
        iterations=iterations,
        cost_history=list(state.cost_history),
        gate_log=list(state.gate_log),
        config={
            "batch_size": cfg.batch_size_n,
            "beta": cfg.beta,
            "epsilon": cfg.epsilon,
            "translation_backend": cfg.translation_backend,
            "max_association_gap_s": cfg.max_association_gap,
        },
    )


def metric_delta_t(t_hat, t_gt) -> float:
    """Translation error: one third of the Euclidean residual norm."""
    d = np.asarray(t_hat, dtype=float) - np.asarray(t_gt, dtype=float)
    return float(np.linalg.norm(d)) / 3.0


def metric_delta_r(r_hat, r_gt) -> float:
    """Rotation error in degrees: angle of the relative rotation."""
    rel = np.asarray(r_hat, dtype=float).T @ np.asarray(r_gt, dtype=float)
    c = np.clip(0.5 * (np.trace(rel) - 1.0), -1.0, 1.0)
    return math.degrees(math.acos(c))


def optimal_rotation_noise(r_bl, r_b, r_l) -> np.ndarray:
    """Stationary base-rotation noise of the noisy alignment objective."""
    r_bl = check_rotation(r_bl)
    r_b = check_rotation(r_b)
    r_l = check_rotation(r_l)
    return -0.5 * (r_b - r_bl.T @ r_l)


def optimal_translation_noise(r_bl, t_bl, r_b_rel, t_b_rel, t_l_rel) -> np.ndarray:
    """Stationary base-translation noise of the noisy hand-eye objective."""
    r_bl = check_rotation(r_bl)
    r_b_rel = check_rotation(r_b_rel)
    t_bl = np.asarray(t_bl, dtype=float).reshape(3)
    t_b_rel = np.asarray(t_b_rel, dtype=float).reshape(3)
    t_l_rel = np.asarray(t_l_rel, dtype=float).reshape(3)
    return -0.5 * ((r_b_rel - np.eye(3)) @ t_bl - (r_bl @ t_l_rel - t_b_rel))
