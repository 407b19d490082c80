"""CSV / config / report file formats.

Pose files use the common trajectory convention ``t,x,y,z,qx,qy,qz,qw``
(quaternion scalar-last on disk; scalar-first in memory). All floats are
written with 17 significant digits so write-then-read is lossless.
"""

from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np

from .errors import NonMonotonicTime, NonUnitQuaternion, ParseError
from .geom import Transform, quat_canonicalize, quat_to_rotation, rotation_to_quat
from .imu_preint import ImuSample
from .lsq import Bounds
from .pipeline import BatchConfig, CalibrationReport, TimedPose
from .sim import NoiseModel, ScenarioSpec, Segment

POSE_HEADER = "# t x y z qx qy qz qw"
IMU_HEADER = "# t wx wy wz ax ay az"

UNIT_NORM_WARN = 1e-6
UNIT_NORM_FAIL = 1e-3


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def write_pose_csv(path, poses) -> None:
    lines = [POSE_HEADER]
    for tp in poses:
        q = rotation_to_quat(tp.pose.rotation)
        t = tp.pose.translation
        lines.append(",".join(
            _fmt(v) for v in (tp.t, t[0], t[1], t[2], q[1], q[2], q[3], q[0])
        ))
    Path(path).write_text("\n".join(lines) + "\n")


def read_pose_csv(path, frame_tag: str = "base") -> list:
    poses = []
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        fields = line.split(",")
        if len(fields) != 8:
            raise ParseError(f"expected 8 fields, got {len(fields)}", line=lineno)
        try:
            vals = [float(f) for f in fields]
        except ValueError as exc:
            raise ParseError(str(exc), line=lineno) from exc
        t, x, y, z, qx, qy, qz, qw = vals
        q = np.array([qw, qx, qy, qz])
        norm = float(np.linalg.norm(q))
        if abs(norm - 1.0) > UNIT_NORM_FAIL:
            raise NonUnitQuaternion(f"quaternion norm {norm} too far from 1",
                                    line=lineno)
        q = quat_canonicalize(q)
        poses.append(TimedPose(t, Transform(quat_to_rotation(q), [x, y, z]),
                               frame_tag))
    return poses


def write_imu_csv(path, samples) -> None:
    lines = [IMU_HEADER]
    for s in samples:
        lines.append(",".join(
            _fmt(v) for v in (s.t, *s.omega, *s.accel)
        ))
    Path(path).write_text("\n".join(lines) + "\n")


def read_imu_csv(path) -> list:
    samples = []
    last_t = -math.inf
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        fields = line.split(",")
        if len(fields) != 7:
            raise ParseError(f"expected 7 fields, got {len(fields)}", line=lineno)
        try:
            vals = [float(f) for f in fields]
        except ValueError as exc:
            raise ParseError(str(exc), line=lineno) from exc
        if vals[0] <= last_t:
            raise NonMonotonicTime(f"line {lineno}: timestamps must increase")
        last_t = vals[0]
        samples.append(ImuSample(vals[0], vals[1:4], vals[4:7]))
    return samples


# --- flat key = value config ------------------------------------------------

CONFIG_KEYS = {
    "batch_size", "beta", "epsilon", "bound_radius_m", "cad_prior_t",
    "max_association_gap_s", "translation_backend", "gyro_std", "seed",
}

CONFIG_DEFAULTS = {
    "batch_size": 50,
    "beta": 0.01,
    "epsilon": 1.0,
    "bound_radius_m": 0.3,
    "cad_prior_t": np.zeros(3),
    "max_association_gap_s": 0.05,
    "translation_backend": "absolute",
    "gyro_std": 0.01,
    "seed": 0,
}


def _parse_kv(path) -> dict:
    entries = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ParseError("expected 'key = value'", line=lineno)
        key, value = (part.strip() for part in line.split("=", 1))
        entries[key] = value
    return entries


def read_config(path) -> dict:
    """Parse the calibration config; unknown keys are an error."""
    entries = _parse_kv(path)
    unknown = set(entries) - CONFIG_KEYS
    if unknown:
        raise ParseError(f"unknown config keys: {sorted(unknown)}")
    cfg = dict(CONFIG_DEFAULTS)
    for key, value in entries.items():
        try:
            if key in ("batch_size", "seed"):
                cfg[key] = int(value)
            elif key == "translation_backend":
                cfg[key] = value
            elif key == "cad_prior_t":
                cfg[key] = np.array([float(v) for v in value.split(",")])
                if cfg[key].shape != (3,):
                    raise ValueError("cad_prior_t needs 3 components")
            else:
                cfg[key] = float(value)
        except ValueError as exc:
            raise ParseError(f"bad value for {key}: {value!r}") from exc
    return cfg


def batch_config_from_dict(cfg: dict) -> BatchConfig:
    return BatchConfig(
        batch_size_n=cfg["batch_size"],
        beta=cfg["beta"],
        epsilon=cfg["epsilon"],
        bounds=Bounds.around(cfg["cad_prior_t"], cfg["bound_radius_m"]),
        max_association_gap=cfg["max_association_gap_s"],
        translation_backend=cfg["translation_backend"],
        cad_prior=cfg["cad_prior_t"],
        gyro_std=cfg["gyro_std"],
    )


# --- scenario / noise description files (JSON) ------------------------------


def read_scenario_json(path) -> tuple[ScenarioSpec, Transform]:
    """Scenario file: segments, rates, and the ground-truth extrinsic."""
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON: {exc}") from exc
    try:
        segments = tuple(
            Segment(
                kind=seg["kind"],
                duration=float(seg["duration"]),
                speed=float(seg["speed"]),
                yaw_rate=float(seg.get("yaw_rate", 0.0)),
                roll_pitch_excitation=float(seg.get("roll_pitch_excitation", 0.0)),
            )
            for seg in doc["segments"]
        )
        spec = ScenarioSpec(
            segments=segments,
            pose_rate=float(doc["pose_rate"]),
            imu_rate=float(doc["imu_rate"]),
            gravity=np.asarray(doc.get("gravity", [0.0, 0.0, -9.81]), dtype=float),
        )
        ext = doc["extrinsic"]
        rpy = [math.radians(a) for a in ext.get("rpy_deg", [0.0, 0.0, 0.0])]
        from .sim import _rot_zyx

        extrinsic = Transform(_rot_zyx(rpy[2], rpy[1], rpy[0]),
                              np.asarray(ext["translation"], dtype=float))
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"bad scenario file: {exc}") from exc
    return spec, extrinsic


def read_noise_json(path) -> NoiseModel:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON: {exc}") from exc
    try:
        return NoiseModel(
            gyro_std=float(doc.get("gyro_std", 0.0)),
            accel_std=float(doc.get("accel_std", 0.0)),
            gyro_bias=np.asarray(doc.get("gyro_bias", [0.0, 0.0, 0.0]), dtype=float),
            pose_rot_std=float(doc.get("pose_rot_std", 0.0)),
            pose_trans_std=float(doc.get("pose_trans_std", 0.0)),
            seed=int(doc.get("seed", 0)),
        )
    except (TypeError, ValueError) as exc:
        raise ParseError(f"bad noise file: {exc}") from exc


# --- calibration reports ----------------------------------------------------


def write_report(path, report: CalibrationReport) -> None:
    """Flat key = value report plus a cost-history CSV sidecar."""
    q = rotation_to_quat(report.final_extrinsic.rotation)
    t = report.final_extrinsic.translation
    lines = [
        "# calibration report",
        f"converged = {str(report.converged).lower()}",
        f"iterations = {report.iterations}",
        "extrinsic = " + ",".join(
            _fmt(v) for v in (t[0], t[1], t[2], q[1], q[2], q[3], q[0])
        ),
        f"batches_accepted = {sum(1 for e in report.gate_log if e.accepted)}",
    ]
    if report.seed is not None:
        lines.append(f"seed = {report.seed}")
    for key in sorted(report.config):
        lines.append(f"config.{key} = {report.config[key]}")
    for e in report.gate_log:
        status = "accepted" if e.accepted else "rejected"
        lines.append(f"gate.{e.batch_index} = {status},{_fmt(e.min_singular)}")
    Path(path).write_text("\n".join(lines) + "\n")

    history = ["index,total_error,rotation_error"]
    for index, total, rot in report.cost_history:
        history.append(f"{index},{_fmt(total)},{_fmt(rot)}")
    Path(str(path) + ".history.csv").write_text("\n".join(history) + "\n")


def read_report_extrinsic(path) -> tuple[Transform, bool]:
    """Recover the final extrinsic and convergence flag from a report file."""
    entries = _parse_kv(path)
    if "extrinsic" not in entries:
        raise ParseError("report has no extrinsic entry")
    vals = [float(v) for v in entries["extrinsic"].split(",")]
    if len(vals) != 7:
        raise ParseError("extrinsic entry must have 7 components")
    x, y, z, qx, qy, qz, qw = vals
    q = quat_canonicalize([qw, qx, qy, qz])
    converged = entries.get("converged", "false") == "true"
    return Transform(quat_to_rotation(q), [x, y, z]), converged
