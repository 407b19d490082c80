"""Observability-gated online lidar-to-vehicle extrinsic calibration."""

from .errors import (
    AmbiguousAttitude,
    CalibrationError,
    DegenerateGeometry,
    DegenerateMotion,
    EmptyWindow,
    InsufficientData,
    InsufficientExcitation,
    NonMonotonicTime,
    NonUnitQuaternion,
    NotConverged,
    NotStatic,
    ParseError,
    SingularSystem,
)
from .geom import Transform, compose, exp_so3, inverse, log_so3, log_so3_vec
from .imu_preint import ImuSample, PreintegratedDelta, preintegrate
from .pipeline import (
    BatchConfig,
    CalibrationReport,
    CalibrationState,
    TimedPose,
    metric_delta_r,
    metric_delta_t,
    run_calibration,
    step_batch,
)
from .sim import GeneratedScenario, NoiseModel, ScenarioSpec, Segment, generate_scenario

__version__ = "0.1.0"

__all__ = [
    "AmbiguousAttitude",
    "BatchConfig",
    "CalibrationError",
    "CalibrationReport",
    "CalibrationState",
    "DegenerateGeometry",
    "DegenerateMotion",
    "EmptyWindow",
    "GeneratedScenario",
    "ImuSample",
    "InsufficientData",
    "InsufficientExcitation",
    "NoiseModel",
    "NonMonotonicTime",
    "NonUnitQuaternion",
    "NotConverged",
    "NotStatic",
    "ParseError",
    "PreintegratedDelta",
    "ScenarioSpec",
    "Segment",
    "SingularSystem",
    "TimedPose",
    "Transform",
    "compose",
    "exp_so3",
    "generate_scenario",
    "inverse",
    "log_so3",
    "log_so3_vec",
    "metric_delta_r",
    "metric_delta_t",
    "preintegrate",
    "run_calibration",
    "step_batch",
    "__version__",
]
