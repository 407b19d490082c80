"""FastAPI service wrapping the calibration core.

Each endpoint mirrors one CLI subcommand and works on files local to the
host running the service; the CLI is a thin client of this app.
"""

from __future__ import annotations

import math
from dataclasses import replace
from pathlib import Path

import numpy as np
from fastapi import FastAPI, HTTPException

from .. import fileio
from ..errors import CalibrationError
from ..geom import rotation_to_quat
from ..observe import RateBatch, fisher_information
from ..pipeline import (
    TimedPose,
    make_rate_batch,
    metric_delta_r,
    metric_delta_t,
    run_calibration,
)
from ..sim import generate_scenario
from .schemas import (
    CalibrateRequest,
    CalibrateResponse,
    CostEntry,
    EvaluateRequest,
    EvaluateResponse,
    GateEntry,
    GateInspectRequest,
    GateInspectResponse,
    SimulateRequest,
    SimulateResponse,
)


def create_app() -> FastAPI:
    app = FastAPI(title="lidarcal", version="0.1.0")

    @app.get("/health")
    def health():
        return {"status": "ok"}

    @app.post("/simulate", response_model=SimulateResponse)
    def simulate(req: SimulateRequest) -> SimulateResponse:
        try:
            spec, extrinsic = fileio.read_scenario_json(req.scenario_path)
            noise = fileio.read_noise_json(req.noise_path) if req.noise_path else None
            if noise is not None and req.seed is not None:
                noise = replace(noise, seed=req.seed)
            scenario = generate_scenario(spec, extrinsic, req.pose_model, noise)
        except FileNotFoundError as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from exc
        except (CalibrationError, ValueError) as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from exc
        out = Path(req.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        paths = SimulateResponse(
            base_poses=str(out / "base_poses.csv"),
            lidar_poses=str(out / "lidar_poses.csv"),
            base_imu=str(out / "base_imu.csv"),
            lidar_imu=str(out / "lidar_imu.csv"),
            ground_truth=str(out / "ground_truth.csv"),
        )
        fileio.write_pose_csv(paths.base_poses, scenario.base_poses)
        fileio.write_pose_csv(paths.lidar_poses, scenario.lidar_poses)
        fileio.write_imu_csv(paths.base_imu, scenario.base_rates)
        fileio.write_imu_csv(paths.lidar_imu, scenario.lidar_rates)
        fileio.write_pose_csv(
            paths.ground_truth,
            [TimedPose(0.0, scenario.ground_truth_extrinsic, "extrinsic")],
        )
        return paths

    @app.post("/calibrate", response_model=CalibrateResponse)
    def calibrate(req: CalibrateRequest) -> CalibrateResponse:
        try:
            base_poses = fileio.read_pose_csv(req.base_poses, "base")
            lidar_poses = fileio.read_pose_csv(req.lidar_poses, "lidar")
            base_imu = fileio.read_imu_csv(req.base_imu)
            lidar_imu = fileio.read_imu_csv(req.lidar_imu)
            cfg_dict = fileio.read_config(req.config)
            cfg = fileio.batch_config_from_dict(cfg_dict)
            report = run_calibration(base_poses, lidar_poses, base_imu,
                                     lidar_imu, cfg)
        except FileNotFoundError as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from exc
        except (CalibrationError, ValueError) as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from exc
        report.seed = cfg_dict["seed"]
        fileio.write_report(req.report, report)
        q = rotation_to_quat(report.final_extrinsic.rotation)
        return CalibrateResponse(
            converged=report.converged,
            iterations=report.iterations,
            batches_accepted=sum(1 for e in report.gate_log if e.accepted),
            extrinsic_translation=[float(v)
                                   for v in report.final_extrinsic.translation],
            extrinsic_quaternion_wxyz=[float(v) for v in q],
            cost_history=[CostEntry(index=i, total_error=t, rotation_error=r)
                          for i, t, r in report.cost_history],
            gate_log=[GateEntry(batch_index=e.batch_index, accepted=e.accepted,
                                min_singular=e.min_singular)
                      for e in report.gate_log],
            report_path=req.report,
        )

    @app.post("/gate-inspect", response_model=GateInspectResponse)
    def gate_inspect(req: GateInspectRequest) -> GateInspectResponse:
        try:
            base_imu = fileio.read_imu_csv(req.base_imu)
            lidar_imu = fileio.read_imu_csv(req.lidar_imu)
            cfg_dict = fileio.read_config(req.config)
            cfg = fileio.batch_config_from_dict(cfg_dict)
            paired = make_rate_batch(base_imu, lidar_imu, -math.inf, math.inf,
                                     cfg.sigma_gyro, cfg.max_association_gap)
        except FileNotFoundError as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from exc
        except (CalibrationError, ValueError) as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from exc
        entries = []
        if paired is not None:
            n = cfg.batch_size_n
            for k in range(len(paired) // n):
                chunk = RateBatch(
                    paired.omega_base[k * n:(k + 1) * n],
                    paired.omega_sensor[k * n:(k + 1) * n],
                    paired.timestamps[k * n:(k + 1) * n],
                    paired.sigma_gyro,
                )
                svals = np.linalg.svd(fisher_information(chunk, np.eye(3)),
                                      compute_uv=False)
                entries.append(GateEntry(
                    batch_index=k,
                    accepted=bool(svals[-1] >= cfg.epsilon),
                    min_singular=float(svals[-1]),
                ))
        csv_lines = ["batch_index,min_singular,accepted"]
        for e in entries:
            csv_lines.append(
                f"{e.batch_index},{format(e.min_singular, '.17g')},{int(e.accepted)}"
            )
        return GateInspectResponse(batches=entries, csv="\n".join(csv_lines) + "\n")

    @app.post("/evaluate", response_model=EvaluateResponse)
    def evaluate(req: EvaluateRequest) -> EvaluateResponse:
        try:
            estimate, converged = fileio.read_report_extrinsic(req.report)
            gt_poses = fileio.read_pose_csv(req.ground_truth, "extrinsic")
        except FileNotFoundError as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from exc
        except (CalibrationError, ValueError) as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from exc
        if not gt_poses:
            raise HTTPException(status_code=400, detail="empty ground-truth file")
        gt = gt_poses[0].pose
        return EvaluateResponse(
            delta_t_m=metric_delta_t(estimate.translation, gt.translation),
            delta_r_deg=metric_delta_r(estimate.rotation, gt.rotation),
            converged=converged,
        )

    return app


app = create_app()
