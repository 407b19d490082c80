"""Deterministic scenario simulator used as the round-trip oracle.

Trajectories follow a planar unicycle with an optional smooth roll/pitch
excitation; all kinematics are evaluated analytically so the generated
poses and rates agree to machine precision rather than to an integrator's
step error. Tilt uses a sin^2 envelope per segment, so orientation and
angular rate are continuous across segment joints.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .geom import Transform, compose, exp_so3, inverse
from .imu_preint import ImuSample
from .pipeline import TimedPose

TILT_FREQ_ROLL = 0.4    # Hz
TILT_FREQ_PITCH = 0.275  # Hz
DEFAULT_S_CURVE_TILT = 0.1  # rad

SEGMENT_KINDS = ("straight", "arc", "figure_eight", "s_curve")


@dataclass(frozen=True)
class Segment:
    kind: str
    duration: float
    speed: float
    yaw_rate: float = 0.0
    roll_pitch_excitation: float = 0.0

    def __post_init__(self):
        if self.kind not in SEGMENT_KINDS:
            raise ValueError(f"unknown segment kind {self.kind!r}")
        if self.duration <= 0.0:
            raise ValueError("segment duration must be positive")


@dataclass(frozen=True)
class ScenarioSpec:
    segments: tuple
    pose_rate: float
    imu_rate: float
    gravity: np.ndarray = field(default_factory=lambda: np.array([0.0, 0.0, -9.81]))

    def __post_init__(self):
        if not self.segments:
            raise ValueError("need at least one segment")
        if self.pose_rate <= 0.0 or self.imu_rate <= 0.0:
            raise ValueError("rates must be positive")
        if self.imu_rate < self.pose_rate:
            raise ValueError("imu_rate must be at least pose_rate")
        object.__setattr__(self, "segments", tuple(self.segments))
        object.__setattr__(self, "gravity",
                           np.asarray(self.gravity, dtype=float).reshape(3))


@dataclass(frozen=True)
class NoiseModel:
    gyro_std: float = 0.0
    accel_std: float = 0.0
    gyro_bias: np.ndarray = field(default_factory=lambda: np.zeros(3))
    pose_rot_std: float = 0.0
    pose_trans_std: float = 0.0
    seed: int = 0

    def __post_init__(self):
        for name in ("gyro_std", "accel_std", "pose_rot_std", "pose_trans_std"):
            if getattr(self, name) < 0.0:
                raise ValueError(f"{name} must be non-negative")
        object.__setattr__(self, "gyro_bias",
                           np.asarray(self.gyro_bias, dtype=float).reshape(3))


@dataclass(frozen=True)
class GeneratedScenario:
    base_poses: list
    base_rates: list
    lidar_poses: list
    lidar_rates: list
    ground_truth_extrinsic: Transform
    pose_model: str


@dataclass(frozen=True)
class _Piece:
    """One analytic arc: start time/pose/heading plus constant controls."""

    t0: float
    duration: float
    speed: float
    yaw_rate: float
    tilt: float
    p0: np.ndarray
    psi0: float


def _expand_segments(segments) -> list:
    pieces = []
    for seg in segments:
        if seg.kind == "straight":
            pieces.append((seg.duration, seg.speed, 0.0, seg.roll_pitch_excitation))
        elif seg.kind == "arc":
            pieces.append((seg.duration, seg.speed, seg.yaw_rate,
                           seg.roll_pitch_excitation))
        else:
            # figure-eight and s-curve are two mirrored arcs; the s-curve
            # always tilts so all three rotation axes are excited
            tilt = seg.roll_pitch_excitation
            if seg.kind == "s_curve" and tilt == 0.0:
                tilt = DEFAULT_S_CURVE_TILT
            half = seg.duration / 2.0
            pieces.append((half, seg.speed, seg.yaw_rate, tilt))
            pieces.append((half, seg.speed, -seg.yaw_rate, tilt))
    return pieces


def _build_pieces(spec: ScenarioSpec) -> list[_Piece]:
    pieces = []
    t = 0.0
    p = np.zeros(3)
    psi = 0.0
    for duration, speed, yaw_rate, tilt in _expand_segments(spec.segments):
        pieces.append(_Piece(t, duration, speed, yaw_rate, tilt, p.copy(), psi))
        p = _position(pieces[-1], duration)
        psi = psi + yaw_rate * duration
        t += duration
    return pieces


def _position(piece: _Piece, u: float) -> np.ndarray:
    v, w, psi0 = piece.speed, piece.yaw_rate, piece.psi0
    if abs(w) < 1e-12:
        d = v * u * np.array([math.cos(psi0), math.sin(psi0), 0.0])
    else:
        d = (v / w) * np.array([
            math.sin(psi0 + w * u) - math.sin(psi0),
            -math.cos(psi0 + w * u) + math.cos(psi0),
            0.0,
        ])
    return piece.p0 + d


def _tilt(piece: _Piece, u: float):
    """Roll, pitch and their rates at local time u (sin^2 envelope)."""
    a, big_t = piece.tilt, piece.duration
    if a == 0.0:
        return 0.0, 0.0, 0.0, 0.0
    env = math.sin(math.pi * u / big_t) ** 2
    denv = (math.pi / big_t) * math.sin(2.0 * math.pi * u / big_t)
    wr = 2.0 * math.pi * TILT_FREQ_ROLL
    wp = 2.0 * math.pi * TILT_FREQ_PITCH
    roll = a * env * math.sin(wr * u)
    pitch = a * env * math.sin(wp * u)
    roll_rate = a * (denv * math.sin(wr * u) + env * wr * math.cos(wr * u))
    pitch_rate = a * (denv * math.sin(wp * u) + env * wp * math.cos(wp * u))
    return roll, pitch, roll_rate, pitch_rate


def _rot_zyx(psi: float, theta: float, phi: float) -> np.ndarray:
    cz, sz = math.cos(psi), math.sin(psi)
    cy, sy = math.cos(theta), math.sin(theta)
    cx, sx = math.cos(phi), math.sin(phi)
    rz = np.array([[cz, -sz, 0.0], [sz, cz, 0.0], [0.0, 0.0, 1.0]])
    ry = np.array([[cy, 0.0, sy], [0.0, 1.0, 0.0], [-sy, 0.0, cy]])
    rx = np.array([[1.0, 0.0, 0.0], [0.0, cx, -sx], [0.0, sx, cx]])
    return rz @ ry @ rx


def _state_at(pieces, t: float, gravity):
    piece = pieces[-1]
    for p in pieces:
        if t < p.t0 + p.duration:
            piece = p
            break
    u = min(max(t - piece.t0, 0.0), piece.duration)
    pos = _position(piece, u)
    psi = piece.psi0 + piece.yaw_rate * u
    roll, pitch, roll_rate, pitch_rate = _tilt(piece, u)
    rot = _rot_zyx(psi, pitch, roll)

    # body rates from ZYX Euler-angle kinematics
    psid = piece.yaw_rate
    omega = np.array([
        roll_rate - psid * math.sin(pitch),
        pitch_rate * math.cos(roll) + psid * math.cos(pitch) * math.sin(roll),
        psid * math.cos(pitch) * math.cos(roll) - pitch_rate * math.sin(roll),
    ])

    a_world = piece.speed * psid * np.array([-math.sin(psi), math.cos(psi), 0.0])
    f_body = rot.T @ (a_world - gravity)
    return Transform(rot, pos), omega, f_body


def generate_base_trajectory(spec: ScenarioSpec):
    """Sample the analytic base trajectory; returns (poses, imu samples)."""
    pieces = _build_pieces(spec)
    total = sum(p.duration for p in pieces)

    poses = []
    n_pose = int(math.floor(total * spec.pose_rate))
    for k in range(n_pose + 1):
        t = k / spec.pose_rate
        pose, _, _ = _state_at(pieces, t, spec.gravity)
        poses.append(TimedPose(t, pose, "base"))

    rates = []
    n_imu = int(math.floor(total * spec.imu_rate))
    for k in range(n_imu + 1):
        t = k / spec.imu_rate
        _, omega, f_body = _state_at(pieces, t, spec.gravity)
        rates.append(ImuSample(t, omega, f_body))
    return poses, rates


def derive_lidar_stream(base_poses, base_rates, extrinsic: Transform, model: str):
    """Exact lidar streams for a given extrinsic under one of two pose models.

    ``common_frame``: lidar poses share the base frame, ``T_l = X T_b``.
    ``sensor_frame``: lidar odometry starts at identity in its own frame,
    ``T_l = X^-1 T_b X``, which satisfies the relative hand-eye relation.
    Angular rates rotate into the sensor frame in both models; the lever
    arm's effect on specific force is not modeled (accelerations are not
    consumed downstream).
    """
    if model not in ("common_frame", "sensor_frame"):
        raise ValueError(f"unknown pose model {model!r}")
    x_inv = inverse(extrinsic)
    lidar_poses = []
    for tp in base_poses:
        if model == "common_frame":
            pose = compose(extrinsic, tp.pose)
        else:
            pose = compose(compose(x_inv, tp.pose), extrinsic)
        lidar_poses.append(TimedPose(tp.t, pose, "lidar"))
    r_t = extrinsic.rotation.T
    lidar_rates = [ImuSample(s.t, r_t @ s.omega, r_t @ s.accel) for s in base_rates]
    return lidar_poses, lidar_rates


def generate_scenario(spec: ScenarioSpec, extrinsic: Transform, model: str,
                      noise: NoiseModel | None = None) -> GeneratedScenario:
    base_poses, base_rates = generate_base_trajectory(spec)
    lidar_poses, lidar_rates = derive_lidar_stream(base_poses, base_rates,
                                                   extrinsic, model)
    scenario = GeneratedScenario(base_poses, base_rates, lidar_poses, lidar_rates,
                                 extrinsic, model)
    if noise is not None:
        scenario = corrupt(scenario, noise)
    return scenario


def _corrupt_rates(rng, samples, noise: NoiseModel):
    out = []
    for s in samples:
        omega = s.omega + noise.gyro_bias + rng.normal(0.0, 1.0, 3) * noise.gyro_std
        accel = s.accel + rng.normal(0.0, 1.0, 3) * noise.accel_std
        out.append(ImuSample(s.t, omega, accel))
    return out


def _corrupt_poses(rng, poses, noise: NoiseModel):
    out = []
    for tp in poses:
        rot = tp.pose.rotation @ exp_so3(rng.normal(0.0, 1.0, 3) * noise.pose_rot_std)
        trans = tp.pose.translation + rng.normal(0.0, 1.0, 3) * noise.pose_trans_std
        out.append(replace(tp, pose=Transform(rot, trans)))
    return out


def corrupt(scenario: GeneratedScenario, noise: NoiseModel) -> GeneratedScenario:
    """Seeded corruption of every stream; ground truth is untouched."""
    rng = np.random.default_rng(noise.seed)
    return GeneratedScenario(
        base_poses=_corrupt_poses(rng, scenario.base_poses, noise),
        base_rates=_corrupt_rates(rng, scenario.base_rates, noise),
        lidar_poses=_corrupt_poses(rng, scenario.lidar_poses, noise),
        lidar_rates=_corrupt_rates(rng, scenario.lidar_rates, noise),
        ground_truth_extrinsic=scenario.ground_truth_extrinsic,
        pose_model=scenario.pose_model,
    )
