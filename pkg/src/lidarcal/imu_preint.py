"""IMU preintegration: compound raw samples into relative motion deltas.

Gravity is integrated as part of the specific force; callers that need
gravity-free deltas must subtract it (or work with rotation only).
Constant biases are expected to be removed by the caller beforehand.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import EmptyWindow, NonMonotonicTime
from .geom import check_rotation, exp_so3


@dataclass(frozen=True)
class ImuSample:
    """One inertial measurement: body-frame angular velocity and specific force."""

    t: float
    omega: np.ndarray
    accel: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "omega", np.asarray(self.omega, dtype=float).reshape(3))
        object.__setattr__(self, "accel", np.asarray(self.accel, dtype=float).reshape(3))


@dataclass(frozen=True)
class PreintegratedDelta:
    d_rot: np.ndarray
    d_vel: np.ndarray
    d_pos: np.ndarray
    duration: float

    def __post_init__(self):
        object.__setattr__(self, "d_rot", check_rotation(self.d_rot))
        if self.duration < 0.0:
            raise ValueError("duration must be non-negative")


def preintegrate(samples, t_i: float, t_j: float) -> PreintegratedDelta:
    """Integrate samples with ``t in [t_i, t_j)`` under a zero-order hold.

    The per-sample interval is the gap to the next sample; the last interval
    extends to ``t_j``.
    """
    if not t_i < t_j:
        raise ValueError("t_i must be strictly before t_j")
    times = np.array([s.t for s in samples], dtype=float)
    if np.any(np.diff(times) <= 0.0):
        raise NonMonotonicTime("IMU samples must be strictly time-ordered")
    in_window = [s for s in samples if t_i <= s.t < t_j]
    if not in_window:
        raise EmptyWindow(f"no IMU samples in [{t_i}, {t_j})")

    d_rot = np.eye(3)
    d_vel = np.zeros(3)
    d_pos = np.zeros(3)
    for k, s in enumerate(in_window):
        t_next = in_window[k + 1].t if k + 1 < len(in_window) else t_j
        dt = t_next - s.t
        d_pos = d_pos + d_vel * dt + 0.5 * (d_rot @ s.accel) * dt**2
        d_vel = d_vel + (d_rot @ s.accel) * dt
        d_rot = d_rot @ exp_so3(s.omega * dt)
    return PreintegratedDelta(d_rot, d_vel, d_pos, t_j - in_window[0].t)
