"""PD corrective-force law with an optional no-error zone and gain ramp.

The force pulls the end-effector toward a desired point (the closest point on
the reference during tracking, or the start point during the return phase)
whenever assistance is enabled and the error exceeds the zone radius.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import geometry

# Physical devices clamp output; unbounded force destabilizes the tracker.
FORCE_LIMIT = 10.0


@dataclass(frozen=True)
class Gains:
    kp: float = 4.0       # N/m
    kd: float = 0.001     # N*s/m
    ramp_time: float = 0.0  # s; 0 disables ramping

    def __post_init__(self):
        if self.kp < 0 or self.kd < 0 or self.ramp_time < 0:
            raise ValueError("gains and ramp_time must be non-negative")


@dataclass(frozen=True)
class AssistCommand:
    enabled: bool
    target_mode: str = "closest_point"  # or "start_point" during the return phase
    zone_radius: float = 0.0

    def __post_init__(self):
        if self.zone_radius < 0:
            raise ValueError("zone_radius must be >= 0")
        if self.target_mode not in ("closest_point", "start_point"):
            raise ValueError(f"unknown target_mode {self.target_mode!r}")


def _ramp_fraction(enabled: bool, t_since_toggle: float, ramp_time: float) -> float:
    if ramp_time == 0.0:
        return 1.0 if enabled else 0.0
    if enabled:
        return min(1.0, t_since_toggle / ramp_time)
    return max(0.0, 1.0 - t_since_toggle / ramp_time)


def _gated(raw: np.ndarray, d: float, zone_radius: float, fraction: float) -> np.ndarray:
    # zone_radius == 0 means "no zone": gating is delegated to the on/off action.
    if (zone_radius > 0.0 and d <= zone_radius) or fraction <= 0.0:
        return np.zeros(3)
    u = fraction * raw
    norm = float(np.linalg.norm(u))
    if norm > FORCE_LIMIT:
        u *= FORCE_LIMIT / norm
    return u


def assist_force(
    x,
    x_dot,
    x_d,
    gains: Gains,
    cmd: AssistCommand,
    t_since_toggle: float = math.inf,
) -> np.ndarray:
    """Corrective force kp*(x_d - x) - kd*x_dot, gated and optionally ramped.

    Inside the no-error zone (d <= zone_radius) the force is exactly zero.
    With ramping enabled the gain fraction rises linearly from 0 to 1 after an
    enable toggle and decays symmetrically after a disable, so the force stays
    continuous across toggles.
    """
    x = np.asarray(x, dtype=float)
    x_dot = np.asarray(x_dot, dtype=float)
    x_d = np.asarray(x_d, dtype=float)
    d = float(np.linalg.norm(x_d - x))
    fraction = _ramp_fraction(cmd.enabled, t_since_toggle, gains.ramp_time)
    raw = gains.kp * (x_d - x) - gains.kd * x_dot
    return _gated(raw, d, cmd.zone_radius, fraction)


class RampState:
    """Slope-limited gain fraction owned by the session loop.

    Unlike the stateless ramp (which assumes toggling from a fully settled
    state), this tracks the current level so mid-ramp toggles stay continuous.
    """

    def __init__(self, ramp_time: float):
        self.ramp_time = ramp_time
        self.level = 0.0

    def update(self, enabled: bool, dt: float) -> float:
        if self.ramp_time == 0.0:
            self.level = 1.0 if enabled else 0.0
        else:
            step = dt / self.ramp_time
            target = 1.0 if enabled else 0.0
            if self.level < target:
                self.level = min(target, self.level + step)
            else:
                self.level = max(target, self.level - step)
        return self.level


def ramped_force(x, x_dot, x_d, gains: Gains, cmd: AssistCommand, level: float) -> np.ndarray:
    """Force using an externally tracked ramp level (see :class:`RampState`)."""
    x = np.asarray(x, dtype=float)
    x_dot = np.asarray(x_dot, dtype=float)
    x_d = np.asarray(x_d, dtype=float)
    d = float(np.linalg.norm(x_d - x))
    raw = gains.kp * (x_d - x) - gains.kd * x_dot
    return _gated(raw, d, cmd.zone_radius, level)


def target_point(traj: geometry.Trajectory, x, mode: str) -> np.ndarray:
    """Desired point: closest point on the curve, or the start point."""
    if mode == "closest_point":
        return geometry.closest_point(traj, x).x_l
    if mode == "start_point":
        return np.asarray(traj.start_point, dtype=float)
    raise ValueError(f"unknown target_mode {mode!r}")
