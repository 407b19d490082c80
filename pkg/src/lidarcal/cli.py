"""Command-line interface.

Every subcommand is a thin HTTP client of the service app. By default the
requests run against an in-process ASGI transport, so no server needs to
be running; pass ``--server URL`` to talk to a remote instance instead.
"""

from __future__ import annotations

import sys

import click
import httpx

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_NOT_CONVERGED = 2


def _client(server: str | None) -> httpx.Client:
    if server:
        return httpx.Client(base_url=server, timeout=300.0)
    import warnings

    with warnings.catch_warnings():
        warnings.simplefilter("ignore", DeprecationWarning)
        from fastapi.testclient import TestClient

    from .service.app import create_app

    return TestClient(create_app())


def _post(server: str | None, route: str, payload: dict) -> dict:
    try:
        with _client(server) as client:
            resp = client.post(route, json=payload)
    except httpx.HTTPError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(EXIT_ERROR)
    if resp.status_code != 200:
        try:
            detail = resp.json().get("detail", resp.text)
        except ValueError:
            detail = resp.text
        click.echo(f"error: {detail}", err=True)
        sys.exit(EXIT_ERROR)
    return resp.json()


server_option = click.option("--server", default=None, metavar="URL",
                             help="Calibration service URL (default: in-process).")


@click.group()
def main():
    """Online lidar-to-vehicle extrinsic calibration toolkit."""


@main.command()
@click.option("--scenario", required=True, type=click.Path())
@click.option("--noise", default=None, type=click.Path())
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--pose-model", default="common-frame",
              type=click.Choice(["common-frame", "sensor-frame"]))
@click.option("--seed", default=None, type=int)
@server_option
def simulate(scenario, noise, out_dir, pose_model, seed, server):
    """Generate a synthetic dataset (pose + IMU CSVs and ground truth)."""
    body = _post(server, "/simulate", {
        "scenario_path": scenario,
        "noise_path": noise,
        "out_dir": out_dir,
        "pose_model": pose_model.replace("-", "_"),
        "seed": seed,
    })
    for key in ("base_poses", "lidar_poses", "base_imu", "lidar_imu",
                "ground_truth"):
        click.echo(f"{key}: {body[key]}")


@main.command()
@click.option("--base-poses", required=True, type=click.Path())
@click.option("--lidar-poses", required=True, type=click.Path())
@click.option("--base-imu", required=True, type=click.Path())
@click.option("--lidar-imu", required=True, type=click.Path())
@click.option("--config", required=True, type=click.Path())
@click.option("--report", required=True, type=click.Path())
@server_option
def calibrate(base_poses, lidar_poses, base_imu, lidar_imu, config, report,
              server):
    """Run the online calibration loop and write a report file."""
    body = _post(server, "/calibrate", {
        "base_poses": base_poses,
        "lidar_poses": lidar_poses,
        "base_imu": base_imu,
        "lidar_imu": lidar_imu,
        "config": config,
        "report": report,
    })
    click.echo(f"converged: {str(body['converged']).lower()}")
    click.echo(f"iterations: {body['iterations']}")
    click.echo(f"batches_accepted: {body['batches_accepted']}")
    t = body["extrinsic_translation"]
    q = body["extrinsic_quaternion_wxyz"]
    click.echo(f"translation: {t[0]:.6f},{t[1]:.6f},{t[2]:.6f}")
    click.echo(f"quaternion_wxyz: {q[0]:.6f},{q[1]:.6f},{q[2]:.6f},{q[3]:.6f}")
    click.echo(f"report: {body['report_path']}")
    if not body["converged"]:
        sys.exit(EXIT_NOT_CONVERGED)


@main.command("gate-inspect")
@click.option("--base-imu", required=True, type=click.Path())
@click.option("--lidar-imu", required=True, type=click.Path())
@click.option("--config", required=True, type=click.Path())
@server_option
def gate_inspect(base_imu, lidar_imu, config, server):
    """Print per-batch minimum Fisher singular values as CSV."""
    body = _post(server, "/gate-inspect", {
        "base_imu": base_imu,
        "lidar_imu": lidar_imu,
        "config": config,
    })
    click.echo(body["csv"], nl=False)


@main.command()
@click.option("--report", required=True, type=click.Path())
@click.option("--ground-truth", required=True, type=click.Path())
@server_option
def evaluate(report, ground_truth, server):
    """Print translation and rotation error against a ground-truth file."""
    body = _post(server, "/evaluate", {
        "report": report,
        "ground_truth": ground_truth,
    })
    click.echo(f"delta_t_m: {body['delta_t_m']:.6f}")
    click.echo(f"delta_r_deg: {body['delta_r_deg']:.6f}")
    click.echo(f"converged: {str(body['converged']).lower()}")


@main.command()
@click.option("--host", default="127.0.0.1")
@click.option("--port", default=8000, type=int)
def serve(host, port):
    """Run the calibration service with uvicorn."""
    import uvicorn

    uvicorn.run("lidarcal.service.app:app", host=host, port=port)


if __name__ == "__main__":
    main()
