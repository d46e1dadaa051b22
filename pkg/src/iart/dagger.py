"""Iterative retraining from overridden decisions.

A session run under the current model may carry overrides (from a scripted
corrector or the interactive UI).  Each override becomes a training window
ending at the overridden tick, labeled with the corrected action and weighted
beta (so its squared loss counts beta^2 against the base data).  The override
windows are appended to the persistent aggregated dataset, which only ever
grows, and the model is retrained from a fresh initialization with its
original training configuration.
"""

from __future__ import annotations

import base64
import hashlib
import json
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .features import WINDOW, FeatureScaler, WindowDataset, StateVector
from .lstm import LstmModel, TrainConfig, train
from .session import SessionLog
from .simulation import TherapistPolicy, therapist_action
from .scenarios import Scenario, run_scenario

AGGDATA_SCHEMA = "aggdata/1"

DEFAULT_BETA = 20.0


@dataclass
class OverrideRecord:
    session_id: str
    tick_index: int
    model_action: int
    corrected_action: int
    source: str  # "scripted" or "ui"
    window_rows: np.ndarray  # (WINDOW, 7) raw unscaled states ending at the tick

    def __post_init__(self):
        if self.corrected_action == self.model_action:
            raise ValueError("override must change the action")


@dataclass
class AggregatedDataset:
    """Base windows (weight 1) plus override windows (weight beta)."""

    windows: np.ndarray
    labels: np.ndarray
    weights: np.ndarray
    scaler: FeatureScaler
    beta: float = DEFAULT_BETA
    iteration: int = 1
    keys: list = field(default_factory=list)  # "base" or (session_id, tick)

    def __len__(self) -> int:
        return len(self.windows)

    @classmethod
    def from_base(cls, base: WindowDataset, beta: float = DEFAULT_BETA) -> "AggregatedDataset":
        return cls(
            windows=np.array(base.windows),
            labels=np.array(base.labels),
            weights=np.array(base.weights),
            scaler=base.scaler,
            beta=beta,
            iteration=1,
            keys=["base"] * len(base.windows),
        )


def extract_overrides(log: SessionLog, session_id: Optional[str] = None) -> list:
    """Collect override records from a session log.

    Overridden ticks during the warm-up (first 29 ticks) have no full window
    and are dropped with a warning.
    """
    sid = session_id or f"seed{log.header.get('seed')}-{log.header.get('scenario')}"
    records = []
    dropped = 0
    raw_states = np.stack([tk.state.as_array() for tk in log.ticks]) if log.ticks else None
    for idx, tk in enumerate(log.ticks):
        if not tk.override:
            continue
        if idx < WINDOW - 1:
            dropped += 1
            continue
        model_action = tk.model_action if tk.model_action is not None else 1 - tk.action
        records.append(
            OverrideRecord(
                session_id=sid,
                tick_index=idx,
                model_action=int(model_action),
                corrected_action=int(tk.action),
                source="scripted",
                window_rows=raw_states[idx - WINDOW + 1 : idx + 1].copy(),
            )
        )
    if dropped:
        warnings.warn(f"dropped {dropped} override(s) inside the {WINDOW - 1}-tick warm-up")
    return records


def aggregate(
    base, overrides: Sequence[OverrideRecord], beta: float = DEFAULT_BETA
) -> AggregatedDataset:
    """Append override windows to the dataset with weight beta.

    Base windows keep weight 1 and their labels.  Duplicate overrides of the
    same (session, tick) keep only the latest record.
    """
    if beta <= 0:
        raise ValueError("beta must be > 0")
    if isinstance(base, AggregatedDataset):
        agg = AggregatedDataset(
            windows=base.windows,
            labels=base.labels,
            weights=base.weights,
            scaler=base.scaler,
            beta=beta,
            iteration=base.iteration + 1,
            keys=list(base.keys),
        )
    else:
        agg = AggregatedDataset.from_base(base, beta)

    deduped: dict = {}
    for rec in overrides:
        deduped[(rec.session_id, rec.tick_index)] = rec
    if not deduped:
        return agg

    # a re-correction of a previously aggregated tick replaces the old record
    keep = np.ones(len(agg.windows), dtype=bool)
    for i, key in enumerate(agg.keys):
        if key != "base" and tuple(key) in deduped:
            keep[i] = False

    new_windows = np.stack([agg.scaler.transform(rec.window_rows) for rec in deduped.values()])
    new_labels = np.array([rec.corrected_action for rec in deduped.values()], dtype=float)
    new_keys = [list(k) for k in deduped.keys()]

    return AggregatedDataset(
        windows=np.concatenate([agg.windows[keep], new_windows]),
        labels=np.concatenate([agg.labels[keep], new_labels]),
        weights=np.concatenate([agg.weights[keep], np.full(len(new_labels), beta)]),
        scaler=agg.scaler,
        beta=beta,
        iteration=agg.iteration,
        keys=[k for k, m in zip(agg.keys, keep) if m] + new_keys,
    )


def dagger_iterate(
    model: LstmModel,
    scenario: Scenario,
    corrector: Callable,
    base,
    beta: float = DEFAULT_BETA,
    config: Optional[TrainConfig] = None,
    session_seed: Optional[int] = None,
):
    """One retraining iteration.

    Runs a closed-loop session under ``model`` with the corrector applied,
    extracts the overridden ticks, aggregates them into the dataset, and
    retrains from a fresh initialization with the model's original training
    configuration.  With no overrides the model is returned unchanged.

    Returns (model', aggregated_dataset, session_log, n_overrides).
    """
    log = run_scenario(
        scenario,
        assist_source="model",
        model=model,
        corrector=corrector,
        seed=scenario.seed + 1000 if session_seed is None else session_seed,
    )
    overrides = extract_overrides(log)
    if not overrides:
        agg = base if isinstance(base, AggregatedDataset) else AggregatedDataset.from_base(base, beta)
        return model, agg, log, 0

    agg = aggregate(base, overrides, beta)
    if config is None:
        config = TrainConfig.from_dict(model.meta["train_config"])
    hidden = model.meta.get("hidden_size", model.params.hidden_size)
    new_model = train(agg, config, hidden_size=hidden)
    return new_model, agg, log, len(overrides)


# ---------------------------------------------------------------------------
# scripted correctors


class TargetPolicyCorrector:
    """Overrides the model wherever a target rule-based policy disagrees.

    The corrector sees states in tick order, so it maintains the policy's
    history exactly as a live demonstrator would.
    """

    def __init__(self, policy: TherapistPolicy):
        self.policy = policy
        self.history: list[StateVector] = []
        self.prev = 0

    def __call__(self, tick_index, state, phase, model_action):
        self.history.append(state)
        desired = therapist_action(self.policy, self.history, self.prev)
        self.prev = desired
        return desired if desired != model_action else None


def return_off_corrector(tick_index, state, phase, model_action):
    """Suppress assistance during the return-to-start phase."""
    if phase == "returning" and model_action == 1:
        return 0
    return None


def make_corrector(spec: str):
    """Build a corrector from its CLI name.

    ``return-off`` or ``target-policy:{json policy fields}``.
    """
    if spec == "return-off":
        return return_off_corrector
    if spec.startswith("target-policy:"):
        params = json.loads(spec.split(":", 1)[1])
        return TargetPolicyCorrector(TherapistPolicy(**params))
    raise ValueError(f"unknown corrector {spec!r}")


# ---------------------------------------------------------------------------
# aggregated dataset persistence


def _encode(a: np.ndarray) -> dict:
    arr = np.ascontiguousarray(np.asarray(a, dtype=np.float64))
    return {"shape": list(arr.shape), "data": base64.b64encode(arr.tobytes()).decode("ascii")}


def _decode(d: dict) -> np.ndarray:
    return np.frombuffer(base64.b64decode(d["data"]), dtype=np.float64).reshape(d["shape"]).copy()


def save_aggregated(agg: AggregatedDataset, path: str) -> None:
    payload = {
        "schema": AGGDATA_SCHEMA,
        "beta": agg.beta,
        "iteration": agg.iteration,
        "keys": agg.keys,
        "scaler": agg.scaler.to_dict(),
        "arrays": {
            "windows": _encode(agg.windows),
            "labels": _encode(agg.labels),
            "weights": _encode(agg.weights),
        },
    }
    payload["checksum"] = hashlib.sha256(
        json.dumps({k: payload[k] for k in ("schema", "beta", "iteration", "keys", "scaler", "arrays")},
                   sort_keys=True, separators=(",", ":")).encode()
    ).hexdigest()
    with open(path, "w") as fh:
        json.dump(payload, fh)


def load_aggregated(path: str) -> AggregatedDataset:
    with open(path) as fh:
        payload = json.load(fh)
    if payload.get("schema") != AGGDATA_SCHEMA:
        raise ValueError(f"aggdata schema mismatch: {payload.get('schema')!r}")
    expected = payload.pop("checksum", None)
    actual = hashlib.sha256(
        json.dumps(payload, sort_keys=True, separators=(",", ":")).encode()
    ).hexdigest()
    if expected != actual:
        raise ValueError(f"aggdata checksum mismatch in {path}")
    return AggregatedDataset(
        windows=_decode(payload["arrays"]["windows"]),
        labels=_decode(payload["arrays"]["labels"]),
        weights=_decode(payload["arrays"]["weights"]),
        scaler=FeatureScaler.from_dict(payload["scaler"]),
        beta=float(payload["beta"]),
        iteration=int(payload["iteration"]),
        keys=[k if k == "base" else list(k) for k in payload["keys"]],
    )
