"""Frozen scenario configurations and the scenario/1 JSON format.

A scenario bundles everything a headless session needs: the reference curve,
the synthetic patient, an optional demonstrator policy, gains, duration, and
the seed.  The named presets here are the tuned configurations used by the
acceptance experiments; ``demo-data`` regenerates them on disk.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional

from .controller import Gains
from .geometry import CurveSpec, make_trajectory, preset_spec
from .lstm import TrainConfig
from .simulation import PatientModel, TherapistPolicy, run_closed_loop

SCENARIO_SCHEMA = "scenario/1"


@dataclass
class Scenario:
    name: str
    curve: CurveSpec
    patient: PatientModel
    policy: Optional[TherapistPolicy]
    duration: float
    seed: int
    gains: Gains = field(default_factory=Gains)
    label_noise: float = 0.0
    train: TrainConfig = field(default_factory=TrainConfig)
    hidden_size: int = 100

    def to_dict(self) -> dict:
        return {
            "schema": SCENARIO_SCHEMA,
            "name": self.name,
            "curve": self.curve.to_dict(),
            "patient": self.patient.to_dict(),
            "policy": self.policy.to_dict() if self.policy else None,
            "duration": self.duration,
            "seed": self.seed,
            "gains": {"kp": self.gains.kp, "kd": self.gains.kd, "ramp_time": self.gains.ramp_time},
            "label_noise": self.label_noise,
            "train": self.train.to_dict(),
            "hidden_size": self.hidden_size,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Scenario":
        if d.get("schema") != SCENARIO_SCHEMA:
            raise ValueError(f"scenario schema mismatch: expected {SCENARIO_SCHEMA!r}, got {d.get('schema')!r}")
        return cls(
            name=d["name"],
            curve=CurveSpec.from_dict(d["curve"]),
            patient=PatientModel(**d["patient"]),
            policy=TherapistPolicy(**d["policy"]) if d.get("policy") else None,
            duration=float(d["duration"]),
            seed=int(d["seed"]),
            gains=Gains(**d.get("gains", {})),
            label_noise=float(d.get("label_noise", 0.0)),
            train=TrainConfig.from_dict(d["train"]) if d.get("train") else TrainConfig(),
            hidden_size=int(d.get("hidden_size", 100)),
        )

    def save(self, path: str) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)

    @classmethod
    def load(cls, path: str) -> "Scenario":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def run_scenario(
    scenario: Scenario,
    assist_source: str = "policy",
    model=None,
    shadow: bool = False,
    corrector=None,
    seed: Optional[int] = None,
):
    """Run one closed-loop session for a scenario.

    ``shadow=True`` logs the scenario policy's decisions as ground truth while
    the model (or nothing) drives the assistance.
    """
    traj = make_trajectory(scenario.curve)
    return run_closed_loop(
        traj,
        scenario.patient,
        assist_source,
        scenario.duration,
        seed=scenario.seed if seed is None else seed,
        gains=scenario.gains,
        policy=scenario.policy if assist_source == "policy" else None,
        model=model,
        shadow_policy=scenario.policy if shadow else None,
        corrector=corrector,
        label_noise=scenario.label_noise,
        scenario_name=scenario.name,
    )


# ---------------------------------------------------------------------------
# frozen presets (tuned once against the acceptance experiments)


def _tracking_patient(seed: int, pause_rate: float = 0.0) -> PatientModel:
    return PatientModel(
        mass=0.3,
        k_s=25.0,
        damping=10.0,
        noise_std=0.08,
        lapse_rate=0.4,
        lapse_drift=0.5,
        pause_rate=pause_rate,
        lookahead=0.02,
        return_gain_frac=0.8,
        seed=seed,
    )


DEFAULT_POLICY = TherapistPolicy(
    kind="threshold_dwell", e_on=0.015, e_off=0.009, t_dwell=0.4, t_release=0.4
)

ASSIST_TOO_OFTEN_POLICY = TherapistPolicy(
    kind="assist_too_often", e_on=0.004, e_off=0.002, t_dwell=0.1, t_release=0.2
)

LARGER_ERROR_POLICY = TherapistPolicy(
    kind="threshold_dwell", e_on=0.022, e_off=0.012, t_dwell=0.3, t_release=0.3
)

ASSIST_ON_STOP_POLICY = TherapistPolicy(
    kind="assist_on_stop", v_stop=0.005, t_dwell=0.3, t_release=0.0
)

RETURN_ASSIST_POLICY = TherapistPolicy(
    kind="threshold_dwell", e_on=0.015, e_off=0.009, t_dwell=0.4, t_release=0.4,
    assist_on_return=True,
)


def build_scenarios() -> dict:
    """All frozen scenario presets, keyed by name."""
    fast_train = TrainConfig(epochs=120, seed=0)
    scenarios = {
        "default": Scenario(
            name="default",
            curve=preset_spec("helix"),
            patient=_tracking_patient(seed=7),
            policy=DEFAULT_POLICY,
            duration=120.0,
            seed=7,
        ),
        "imitation-test": Scenario(
            name="imitation-test",
            curve=preset_spec("lissajous"),
            patient=_tracking_patient(seed=21),
            policy=DEFAULT_POLICY,
            duration=120.0,
            seed=21,
        ),
        "realtime": Scenario(
            name="realtime",
            curve=preset_spec("lissajous"),
            patient=_tracking_patient(seed=101),
            policy=DEFAULT_POLICY,
            duration=120.0,
            seed=101,
        ),
        "dagger-return": Scenario(
            name="dagger-return",
            curve=preset_spec("helix"),
            patient=_tracking_patient(seed=11),
            policy=RETURN_ASSIST_POLICY,
            duration=90.0,
            seed=11,
            train=fast_train,
        ),
        "assist-too-often": Scenario(
            name="assist-too-often",
            curve=preset_spec("helix"),
            patient=_tracking_patient(seed=13),
            policy=ASSIST_TOO_OFTEN_POLICY,
            duration=90.0,
            seed=13,
            train=fast_train,
        ),
        "assist-on-stop": Scenario(
            name="assist-on-stop",
            curve=preset_spec("helix"),
            patient=_tracking_patient(seed=17, pause_rate=0.15),
            policy=ASSIST_ON_STOP_POLICY,
            duration=90.0,
            seed=17,
            train=fast_train,
        ),
    }
    return scenarios


def get_scenario(name: str) -> Scenario:
    scenarios = build_scenarios()
    try:
        return scenarios[name]
    except KeyError:
        raise ValueError(
            f"unknown scenario {name!r}; available: {', '.join(sorted(scenarios))}"
        ) from None


def load_scenario(source: str) -> Scenario:
    """Resolve a CLI scenario argument: ``preset:<name>`` or a JSON file."""
    if source.startswith("preset:"):
        return get_scenario(source.split(":", 1)[1])
    return Scenario.load(source)


def write_all(out_dir: str) -> list:
    """Regenerate every frozen scenario file; returns the written paths."""
    import os

    os.makedirs(out_dir, exist_ok=True)
    paths = []
    for name, scenario in sorted(build_scenarios().items()):
        path = os.path.join(out_dir, f"{name}.json")
        scenario.save(path)
        paths.append(path)
    return paths
