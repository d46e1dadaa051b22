"""Session records: the JSONL log format and the online prediction loop.

A session log is one header line followed by one line per 30 Hz tick.  Every
numeric field round-trips losslessly (shortest round-trip decimal form).  The
same format is written by the headless simulator and the interactive service,
so downstream tools are source-agnostic.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .features import StateVector, StateActionPair, WINDOW
from .lstm import LstmModel, forward

SESSION_SCHEMA = "session/1"


class SessionFormatError(ValueError):
    """Malformed or wrong-schema session file."""


@dataclass
class TickRecord:
    t: float
    state: StateVector
    action: int
    source: str
    x: np.ndarray
    x_dot: np.ndarray
    x_l: np.ndarray
    u: np.ndarray
    shadow_action: Optional[int] = None
    override: bool = False
    model_action: Optional[int] = None

    def to_json_obj(self) -> dict:
        obj = {
            "t": self.t,
            "s": list(self.state.as_array()),
            "a": int(self.action),
            "src": self.source,
            "x": list(map(float, self.x)),
            "xd": list(map(float, self.x_dot)),
            "xl": list(map(float, self.x_l)),
            "u": list(map(float, self.u)),
        }
        if self.shadow_action is not None:
            obj["shadow"] = int(self.shadow_action)
        if self.override:
            obj["ov"] = True
        if self.model_action is not None:
            obj["ma"] = int(self.model_action)
        return obj

    @classmethod
    def from_json_obj(cls, obj: dict) -> "TickRecord":
        return cls(
            t=float(obj["t"]),
            state=StateVector.from_array(obj["s"]),
            action=int(obj["a"]),
            source=obj["src"],
            x=np.array(obj["x"], dtype=float),
            x_dot=np.array(obj["xd"], dtype=float),
            x_l=np.array(obj["xl"], dtype=float),
            u=np.array(obj["u"], dtype=float),
            shadow_action=obj.get("shadow"),
            override=bool(obj.get("ov", False)),
            model_action=obj.get("ma"),
        )


@dataclass
class SessionLog:
    header: dict
    ticks: list

    def pairs(self) -> list:
        """StateActionPairs view of the log, for the feature pipeline."""
        return [
            StateActionPair(t=tk.t, state=tk.state, action=tk.action, source=tk.source)
            for tk in self.ticks
        ]

    def actions(self) -> np.ndarray:
        return np.array([tk.action for tk in self.ticks], dtype=int)

    def shadow_actions(self) -> np.ndarray:
        return np.array(
            [tk.shadow_action if tk.shadow_action is not None else -1 for tk in self.ticks],
            dtype=int,
        )


def write_log(log: SessionLog, path: str) -> None:
    with open(path, "w") as fh:
        fh.write(json.dumps({"schema": SESSION_SCHEMA, **log.header}) + "\n")
        for tick in log.ticks:
            fh.write(json.dumps(tick.to_json_obj()) + "\n")


def read_log(path: str) -> SessionLog:
    with open(path) as fh:
        first = fh.readline()
        if not first:
            raise SessionFormatError(f"{path}: empty file")
        try:
            header = json.loads(first)
        except json.JSONDecodeError as exc:
            raise SessionFormatError(f"{path}:1: malformed header: {exc}") from exc
        if not isinstance(header, dict) or header.get("schema") != SESSION_SCHEMA:
            raise SessionFormatError(
                f"{path}:1: expected schema {SESSION_SCHEMA!r}, got {header.get('schema') if isinstance(header, dict) else first[:40]!r}"
            )
        header.pop("schema")
        ticks = []
        for lineno, line in enumerate(fh, start=2):
            if not line.strip():
                continue
            try:
                ticks.append(TickRecord.from_json_obj(json.loads(line)))
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise SessionFormatError(f"{path}:{lineno}: malformed tick: {exc}") from exc
    return SessionLog(header=header, ticks=ticks)


class RealtimePredictor:
    """Ring buffer of the last 30 scaled states; returns the model decision
    once full and the fail-safe 0 during the 29-tick warm-up."""

    def __init__(self, model: LstmModel, window: int = WINDOW):
        self.model = model
        self.window = window
        self._rows = np.zeros((window, len(model.scaler.shift)))
        self._count = 0
        self.last_probability: Optional[float] = None

    def feed(self, state: StateVector) -> int:
        row = self.model.scaler.transform(state.as_array())
        idx = self._count % self.window
        self._rows[idx] = row
        self._count += 1
        if self._count < self.window:
            self.last_probability = None
            return 0
        start = self._count % self.window
        win = np.concatenate([self._rows[start:], self._rows[:start]], axis=0)
        self.last_probability = forward(self.model.params, win)
        return 1 if self.last_probability > 0.5 else 0

    def reset(self) -> None:
        self._count = 0
        self.last_probability = None


def realtime_predictor(model: LstmModel) -> RealtimePredictor:
    return RealtimePredictor(model)


def replay_agreement(log: SessionLog, model: LstmModel) -> dict:
    """Run the online predictor over a recorded session and compare with the
    logged actions after warm-up."""
    predictor = RealtimePredictor(model)
    decisions = [predictor.feed(tk.state) for tk in log.ticks]
    logged = [tk.action for tk in log.ticks]
    post = range(WINDOW - 1, len(log.ticks))
    matches = sum(1 for i in post if decisions[i] == logged[i])
    total = max(1, len(log.ticks) - (WINDOW - 1))
    return {
        "n_ticks": len(log.ticks),
        "compared": len(log.ticks) - (WINDOW - 1),
        "agreement": matches / total,
        "decisions": decisions,
    }
