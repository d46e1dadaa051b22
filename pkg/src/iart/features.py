"""Per-tick local state vectors, feature scaling, and sliding-window datasets.

The 7 features logged at every 30 Hz tick are the signed per-axis tracking
error, its magnitude, the curvature radius at the closest reference point, the
end-effector speed, and a tracking/returning flag.  Overlapping 30-sample
windows of scaled features (stride 1, so consecutive windows share 29 rows)
are the classifier's inputs; each window is labeled by its final tick's action.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .geometry import ClosestPoint, Trajectory, closest_point, curvature_radius_at

FEATURE_NAMES = ("e_x", "e_y", "e_z", "e", "r_c", "v", "is_track")
N_FEATURES = 7
WINDOW = 30
RC_INDEX = FEATURE_NAMES.index("r_c")
IS_TRACK_INDEX = FEATURE_NAMES.index("is_track")
SCALE_FLOOR = 1e-8


@dataclass(frozen=True)
class StateVector:
    """Local state at one tick.  Errors point from the end-effector toward
    the curve (x_l - x), so the corrective force direction equals the error
    direction."""

    e_x: float
    e_y: float
    e_z: float
    e: float
    r_c: float
    v: float
    is_track: int

    def as_array(self) -> np.ndarray:
        return np.array(
            [self.e_x, self.e_y, self.e_z, self.e, self.r_c, self.v, float(self.is_track)]
        )

    @classmethod
    def from_array(cls, a) -> "StateVector":
        a = np.asarray(a, dtype=float)
        return cls(*a[:6], int(round(a[6])))


@dataclass(frozen=True)
class StateActionPair:
    t: float
    state: StateVector
    action: int
    source: str = "demonstrator"  # demonstrator | model | override


def build_state(traj: Trajectory, x, x_dot, phase: str) -> StateVector:
    """Assemble the state vector for position ``x`` and velocity ``x_dot``."""
    cp = closest_point(traj, x)
    return state_from_projection(traj, x, x_dot, cp, phase)


def state_from_projection(
    traj: Trajectory, x, x_dot, cp: ClosestPoint, phase: str
) -> StateVector:
    """Same as :func:`build_state` with a precomputed closest-point query."""
    x = np.asarray(x, dtype=float)
    x_dot = np.asarray(x_dot, dtype=float)
    e_vec = cp.x_l - x
    return StateVector(
        e_x=float(e_vec[0]),
        e_y=float(e_vec[1]),
        e_z=float(e_vec[2]),
        e=float(np.linalg.norm(e_vec)),
        r_c=curvature_radius_at(traj, cp.u),
        v=float(np.linalg.norm(x_dot)),
        is_track=1 if phase == "tracking" else 0,
    )


@dataclass
class FeatureScaler:
    """Per-feature affine transform fitted on training data.

    The curvature radius is log-transformed before scaling since its raw range
    spans (mm, 10 m].  Columns that were constant in training (std below the
    floor) carry no information; they are mapped to zero for every input so an
    unseen value cannot blow up the scaled range.  ``is_track`` is always left
    unscaled.
    """

    shift: np.ndarray
    scale: np.ndarray
    informative: np.ndarray  # bool per feature; False -> column output is 0
    enabled: bool = True

    @classmethod
    def identity(cls) -> "FeatureScaler":
        return cls(
            shift=np.zeros(N_FEATURES),
            scale=np.ones(N_FEATURES),
            informative=np.ones(N_FEATURES, dtype=bool),
            enabled=False,
        )

    def _pre(self, raw: np.ndarray) -> np.ndarray:
        out = np.array(raw, dtype=float)
        out[..., RC_INDEX] = np.log(np.maximum(out[..., RC_INDEX], 1e-12))
        return out

    def transform(self, raw) -> np.ndarray:
        raw = np.asarray(raw, dtype=float)
        if not self.enabled:
            return raw.copy()
        out = (self._pre(raw) - self.shift) / self.scale
        out[..., ~self.informative] = 0.0
        return out

    def inverse(self, scaled) -> np.ndarray:
        scaled = np.asarray(scaled, dtype=float)
        if not self.enabled:
            return scaled.copy()
        out = scaled * self.scale + self.shift
        out[..., RC_INDEX] = np.exp(out[..., RC_INDEX])
        return out

    def to_dict(self) -> dict:
        return {
            "shift": self.shift.tolist(),
            "scale": self.scale.tolist(),
            "informative": self.informative.astype(int).tolist(),
            "enabled": self.enabled,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FeatureScaler":
        return cls(
            shift=np.asarray(d["shift"], dtype=float),
            scale=np.asarray(d["scale"], dtype=float),
            informative=np.asarray(d["informative"], dtype=bool),
            enabled=bool(d["enabled"]),
        )


def states_matrix(pairs: Sequence[StateActionPair]) -> np.ndarray:
    return np.stack([p.state.as_array() for p in pairs])


def actions_vector(pairs: Sequence[StateActionPair]) -> np.ndarray:
    return np.array([p.action for p in pairs], dtype=float)


def fit_scaler(pairs: Sequence[StateActionPair], enabled: bool = True) -> FeatureScaler:
    """Fit a z-score scaler on recorded pairs (mean shift, std scale)."""
    if len(pairs) == 0:
        raise ValueError("cannot fit a scaler on an empty session")
    if not enabled:
        return FeatureScaler.identity()
    raw = states_matrix(pairs)
    pre = FeatureScaler.identity()._pre(raw)
    shift = pre.mean(axis=0)
    std = pre.std(axis=0)
    informative = std > SCALE_FLOOR
    scale = np.maximum(std, SCALE_FLOOR)
    # is_track is already {0, 1}: leave untouched
    shift[IS_TRACK_INDEX] = 0.0
    scale[IS_TRACK_INDEX] = 1.0
    informative[IS_TRACK_INDEX] = True
    return FeatureScaler(shift=shift, scale=scale, informative=informative)


@dataclass
class WindowDataset:
    """Stacked scaled windows with labels and per-sample weights."""

    windows: np.ndarray  # (N, WINDOW, 7)
    labels: np.ndarray   # (N,)
    weights: np.ndarray  # (N,)
    scaler: FeatureScaler

    def __len__(self) -> int:
        return len(self.windows)


def make_windows(
    pairs: Sequence[StateActionPair], scaler: FeatureScaler, window: int = WINDOW
) -> WindowDataset:
    """Build the overlapping window dataset from one session's pairs.

    One window per tick index i >= window-1, covering ticks [i-window+1, i],
    labeled with the action at tick i and weight 1.
    """
    n = len(pairs)
    if n < window:
        raise ValueError(f"session too short: {n} ticks, need at least {window}")
    scaled = scaler.transform(states_matrix(pairs))
    view = np.lib.stride_tricks.sliding_window_view(scaled, (window, scaled.shape[1]))
    windows = view[:, 0].copy()
    labels = actions_vector(pairs)[window - 1 :].copy()
    return WindowDataset(
        windows=windows,
        labels=labels,
        weights=np.ones(len(labels)),
        scaler=scaler,
    )
