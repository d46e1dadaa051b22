"""Synthetic patient dynamics, rule-based assistance demonstrators, and the
closed-loop 30 Hz session runner.

The patient is a noisy second-order tracker pulled toward the reference curve,
with Poisson-scheduled attention lapses (pull suspended) and full stops.  The
demonstrator policies are deterministic functions of the observable state
history, so their behavior is learnable from logged windows; any residual
imitation error indicates a modeling bug rather than label noise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, asdict
from typing import Callable, Optional, Sequence

import numpy as np

from . import TICK_DT, TICK_RATE
from .controller import AssistCommand, Gains, RampState, ramped_force
from .features import StateVector, state_from_projection
from .geometry import WORKSPACE_HALF, Trajectory, closest_point
from .session import RealtimePredictor, SessionLog, TickRecord

COMPLETION_RADIUS = 0.005  # m; reaching this close to an endpoint flips the phase
PROGRESS_GUARD = 0.5       # min curve-parameter progress before the end check arms
LAPSE_DURATION = (0.5, 2.0)  # s, uniform
PAUSE_DURATION = (0.5, 2.0)  # s, uniform


@dataclass(frozen=True)
class PatientModel:
    """Synthetic tracker parameters.  ``lookahead`` is the arc-length preview
    of the pull target along the curve; 0 pulls straight at the closest point
    (no self-driven progress along the trajectory)."""

    mass: float = 1.0
    k_s: float = 25.0
    damping: float = 10.0
    noise_std: float = 0.0
    lapse_rate: float = 0.0
    lapse_drift: float = 0.0  # m/s^2; wander acceleration while a lapse is active
    pause_rate: float = 0.0
    lookahead: float = 0.0
    return_gain_frac: float = 0.3
    seed: int = 0

    def __post_init__(self):
        for name in ("mass", "k_s", "damping", "noise_std", "lapse_rate", "lapse_drift",
                     "pause_rate", "lookahead", "return_gain_frac"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if self.mass == 0:
            raise ValueError("mass must be > 0")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class TherapistPolicy:
    """Rule-based demonstrator.  ``threshold_dwell`` enables assistance after
    the error has exceeded e_on for t_dwell and releases it after the error
    has stayed below e_off for t_release (hysteresis).  ``assist_too_often``
    is the same machine, conventionally configured with a tiny e_on and
    near-zero dwell.  ``assist_on_stop`` keys on sustained low speed instead
    of error.  ``assist_on_return`` forces assistance whenever the subject is
    navigating back to the start point."""

    kind: str = "threshold_dwell"
    e_on: float = 0.02
    e_off: float = 0.01
    t_dwell: float = 0.5
    t_release: float = 0.5
    v_stop: float = 0.005
    assist_on_return: bool = False

    def __post_init__(self):
        if self.kind not in ("threshold_dwell", "assist_too_often", "assist_on_stop"):
            raise ValueError(f"unknown policy kind {self.kind!r}")
        if self.e_off > self.e_on:
            raise ValueError("hysteresis requires e_off <= e_on")
        if self.t_dwell < 0 or self.t_release < 0:
            raise ValueError("dwell/release must be >= 0")

    def to_dict(self) -> dict:
        return asdict(self)


class Patient:
    """Runtime patient state: owns the RNG and the lapse/pause schedule.

    The schedule depends only on the RNG and elapsed time, never on position,
    so same-seed runs stay draw-aligned regardless of the assistance applied.
    """

    def __init__(self, model: PatientModel, seed: Optional[int] = None):
        self.model = model
        self.rng = np.random.default_rng(model.seed if seed is None else seed)
        self.t = 0.0
        self.lapse_until = -1.0
        self.pause_until = -1.0
        self.lapse_bias = np.zeros(3)

    @property
    def lapsed(self) -> bool:
        return self.t < self.lapse_until

    @property
    def paused(self) -> bool:
        return self.t < self.pause_until

    def _advance_schedule(self, dt: float) -> None:
        m = self.model
        if m.lapse_rate > 0 and not self.lapsed:
            if self.rng.random() < 1.0 - math.exp(-m.lapse_rate * dt):
                self.lapse_until = self.t + self.rng.uniform(*LAPSE_DURATION)
                direction = self.rng.normal(0.0, 1.0, 3)
                norm = float(np.linalg.norm(direction))
                direction = direction / norm if norm > 0 else np.array([1.0, 0.0, 0.0])
                self.lapse_bias = direction * m.lapse_drift * self.rng.uniform(0.5, 1.0)
        if m.pause_rate > 0 and not self.paused:
            if self.rng.random() < 1.0 - math.exp(-m.pause_rate * dt):
                self.pause_until = self.t + self.rng.uniform(*PAUSE_DURATION)


def patient_step(
    patient: Patient,
    x,
    x_dot,
    traj: Trajectory,
    u_assist,
    dt: float = TICK_DT,
    phase: str = "tracking",
    cp=None,
):
    """Advance the patient one tick with semi-implicit Euler integration.

    Tracking: pulled toward the curve (or a point ``lookahead`` meters further
    along it).  Returning: pulled toward the start point at reduced gain.
    Lapses suspend the pull; pauses zero the velocity and leave only the
    assistance force acting.  Positions clamp to the workspace cube.
    """
    m = patient.model
    x = np.asarray(x, dtype=float)
    x_dot = np.asarray(x_dot, dtype=float)
    u_assist = np.asarray(u_assist, dtype=float)

    patient._advance_schedule(dt)

    if patient.paused:
        x_dot = np.zeros(3)
        accel = u_assist / m.mass
    else:
        if phase == "tracking":
            if cp is None:
                cp = closest_point(traj, x)
            if m.lookahead > 0:
                target = traj.point_at_arclen(traj.arclen_at(cp.u) + m.lookahead)
            else:
                target = cp.x_l
            gain = m.k_s
        else:
            target = traj.start_point
            gain = m.k_s * m.return_gain_frac
        if patient.lapsed:
            # attention lapse: pull suspended, hand wanders off with a bias
            pull = patient.lapse_bias
        else:
            pull = gain * (target - x)
        noise = patient.rng.normal(0.0, m.noise_std, 3) if m.noise_std > 0 else np.zeros(3)
        accel = pull - m.damping * x_dot + u_assist / m.mass + noise

    v_new = x_dot + accel * dt
    x_new = x + v_new * dt
    clamped = np.clip(x_new, -WORKSPACE_HALF, WORKSPACE_HALF)
    v_new = np.where(clamped == x_new, v_new, 0.0)
    patient.t += dt
    return clamped, v_new


def _ticks(seconds: float) -> int:
    return max(1, int(round(seconds * TICK_RATE)))


class PhaseTracker:
    """Tracking/returning phase protocol shared by the simulator and the
    interactive service: tracking ends within 5 mm of the curve end once at
    least half the curve parameter has been covered; a return ends within
    5 mm of the start."""

    def __init__(self, traj: Trajectory):
        self.traj = traj
        self.phase = "tracking"
        self._max_u = 0.0

    def update(self, x_new, u_seen: float) -> str:
        if self.phase == "tracking":
            self._max_u = max(self._max_u, u_seen)
            if (
                self._max_u >= PROGRESS_GUARD
                and float(np.linalg.norm(np.asarray(x_new) - self.traj.end_point)) < COMPLETION_RADIUS
            ):
                self.phase = "returning"
        else:
            if float(np.linalg.norm(np.asarray(x_new) - self.traj.start_point)) < COMPLETION_RADIUS:
                self.phase = "tracking"
                self._max_u = 0.0
        return self.phase


def therapist_action(policy: TherapistPolicy, history: Sequence[StateVector], prev_action: int) -> int:
    """Demonstrator decision for the newest tick.

    ``history`` includes the current tick as its last element; dwell windows
    are evaluated over the ticks strictly before it, so a condition must have
    persisted for the full dwell before the switch happens.
    """
    if len(history) == 0:
        raise ValueError("need at least one tick of history")
    current = history[-1]
    if policy.assist_on_return and current.is_track == 0:
        return 1

    k_on = _ticks(policy.t_dwell)
    k_off = _ticks(policy.t_release)

    if policy.kind in ("threshold_dwell", "assist_too_often"):
        if prev_action == 0:
            window = history[-k_on - 1 : -1]
            on = len(window) == k_on and all(s.e > policy.e_on for s in window)
            return 1 if on else 0
        window = history[-k_off - 1 : -1]
        off = len(window) == k_off and all(s.e < policy.e_off for s in window)
        return 0 if off else 1

    # assist_on_stop: on after sustained near-zero speed, off as soon as the
    # subject moves again
    if prev_action == 0:
        window = history[-k_on - 1 : -1]
        on = len(window) == k_on and all(s.v < policy.v_stop for s in window)
        return 1 if on else 0
    return 0 if (len(history) >= 2 and history[-2].v >= policy.v_stop) else 1


def run_closed_loop(
    traj: Trajectory,
    patient_model: PatientModel,
    assist_source: str,
    duration: float,
    seed: int,
    gains: Optional[Gains] = None,
    policy: Optional[TherapistPolicy] = None,
    model=None,
    shadow_policy: Optional[TherapistPolicy] = None,
    corrector: Optional[Callable] = None,
    label_noise: float = 0.0,
    scenario_name: Optional[str] = None,
) -> SessionLog:
    """Run one fixed-step 30 Hz session and return its log.

    Per tick: project onto the curve, assemble the state, decide the action
    (policy, model, or none; model decisions start after the 29-tick warm-up
    with assistance off), compute the gated PD force, step the patient, log.
    Tracking flips to a return phase within 5 mm of the curve end (after at
    least half the curve has been covered) and back within 5 mm of the start.

    A ``shadow_policy`` is evaluated on the same history without influencing
    the run and logged as ground truth.  A ``corrector`` may override model
    decisions; overridden ticks are flagged and keep the raw model action.
    """
    if duration < 2.0:
        raise ValueError("duration must be >= 2 s")
    if assist_source not in ("none", "policy", "model"):
        raise ValueError(f"unknown assist_source {assist_source!r}")
    if assist_source == "policy" and policy is None:
        raise ValueError("assist_source='policy' requires a policy")
    if assist_source == "model" and model is None:
        raise ValueError("assist_source='model' requires a model")

    gains = gains or Gains()
    seq = np.random.SeedSequence(seed)
    patient_seed, noise_seed = seq.spawn(2)
    patient = Patient(patient_model, seed=patient_seed)
    noise_rng = np.random.default_rng(noise_seed)
    predictor = RealtimePredictor(model) if model is not None else None

    n_ticks = int(round(duration * TICK_RATE))
    x = np.array(traj.start_point, dtype=float)
    x_dot = np.zeros(3)
    phases = PhaseTracker(traj)
    ramp = RampState(gains.ramp_time)
    history: list[StateVector] = []
    prev_action = 0
    prev_shadow = 0
    ticks: list[TickRecord] = []

    for i in range(n_ticks):
        phase = phases.phase
        cp = closest_point(traj, x)
        state = state_from_projection(traj, x, x_dot, cp, phase)
        history.append(state)

        model_action = None
        override = False
        if assist_source == "none":
            action = 0
            source = "none"
        elif assist_source == "policy":
            action = therapist_action(policy, history, prev_action)
            prev_action = action
            if label_noise > 0 and noise_rng.random() < label_noise:
                action = 1 - action
            source = "demonstrator"
        else:
            action = predictor.feed(state)
            model_action = action
            source = "model"
            if corrector is not None:
                corrected = corrector(i, state, phase, action)
                if corrected is not None and corrected != action:
                    action = corrected
                    override = True
                    source = "override"

        shadow = None
        if shadow_policy is not None:
            shadow = therapist_action(shadow_policy, history, prev_shadow)
            prev_shadow = shadow

        x_d = cp.x_l if phase == "tracking" else np.asarray(traj.start_point)
        cmd = AssistCommand(
            enabled=bool(action),
            target_mode="closest_point" if phase == "tracking" else "start_point",
        )
        level = ramp.update(bool(action), TICK_DT)
        u = ramped_force(x, x_dot, x_d, gains, cmd, level)

        ticks.append(
            TickRecord(
                t=i * TICK_DT,
                state=state,
                action=action,
                source=source,
                x=x.copy(),
                x_dot=x_dot.copy(),
                x_l=np.asarray(cp.x_l, dtype=float),
                u=np.asarray(u, dtype=float),
                shadow_action=shadow,
                override=override,
                model_action=model_action if override else None,
            )
        )

        x, x_dot = patient_step(patient, x, x_dot, traj, u, TICK_DT, phase, cp=cp)
        phases.update(x, cp.u)

    header = {
        "curve": traj.spec.to_dict(),
        "gains": {"kp": gains.kp, "kd": gains.kd, "ramp_time": gains.ramp_time},
        "action_source": assist_source,
        "seed": seed,
        "duration": duration,
        "created_at": None,
        "protocol": {
            "rate": TICK_RATE,
            "completion_radius": COMPLETION_RADIUS,
            "progress_guard": PROGRESS_GUARD,
        },
        "patient": patient_model.to_dict(),
        "policy": policy.to_dict() if policy else None,
        "shadow_policy": shadow_policy.to_dict() if shadow_policy else None,
        "label_noise": label_noise,
        "scenario": scenario_name,
    }
    return SessionLog(header=header, ticks=ticks)
