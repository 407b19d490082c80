"""Pydantic request/response models for the calibration service."""

from __future__ import annotations

from pydantic import BaseModel, Field


class SimulateRequest(BaseModel):
    scenario_path: str
    noise_path: str | None = None
    out_dir: str
    pose_model: str = Field(default="common_frame",
                            pattern="^(common_frame|sensor_frame)$")
    seed: int | None = None


class SimulateResponse(BaseModel):
    base_poses: str
    lidar_poses: str
    base_imu: str
    lidar_imu: str
    ground_truth: str


class CalibrateRequest(BaseModel):
    base_poses: str
    lidar_poses: str
    base_imu: str
    lidar_imu: str
    config: str
    report: str


class CostEntry(BaseModel):
    index: int
    total_error: float
    rotation_error: float


class GateEntry(BaseModel):
    batch_index: int
    accepted: bool
    min_singular: float


class CalibrateResponse(BaseModel):
    converged: bool
    iterations: int
    batches_accepted: int
    extrinsic_translation: list[float]
    extrinsic_quaternion_wxyz: list[float]
    cost_history: list[CostEntry]
    gate_log: list[GateEntry]
    report_path: str


class GateInspectRequest(BaseModel):
    base_imu: str
    lidar_imu: str
    config: str


class GateInspectResponse(BaseModel):
    batches: list[GateEntry]
    csv: str


class EvaluateRequest(BaseModel):
    report: str
    ground_truth: str


class EvaluateResponse(BaseModel):
    delta_t_m: float
    delta_r_deg: float
    converged: bool
