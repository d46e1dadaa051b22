"""Realtime session service for the browser companion.

One WebSocket connection drives one session.  The client streams pointer
positions; the server integrates a guided cursor (pointer spring plus the
assistance force at reduced mass), runs the 30 Hz session loop, and emits
``tick`` frames.  In demonstrate mode the client toggles assistance (the
therapist key); in realtime mode a trained model decides and the client may
override.  Logs are schema-identical to the headless simulator's, so every
downstream tool works on either.

In lockstep mode (used by tests and scripted clients) the loop advances
exactly one tick per pointer message instead of following wall time.
"""

from __future__ import annotations

import asyncio
import json
import os
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from fastapi import FastAPI, WebSocket, WebSocketDisconnect
from fastapi.responses import HTMLResponse
from fastapi.staticfiles import StaticFiles

from . import TICK_DT, TICK_RATE
from .controller import AssistCommand, Gains, RampState, ramped_force
from .features import state_from_projection
from .geometry import WORKSPACE_HALF, closest_point, load_curve_spec, make_trajectory
from .scenarios import Scenario
from .session import RealtimePredictor, SessionLog, TickRecord, write_log
from .simulation import PhaseTracker

# guided-cursor dynamics: strong pointer spring, reduced mass for the assist
POINTER_GAIN = 120.0
POINTER_DAMPING = 18.0
GUIDED_MASS = 0.25

MODES = ("demonstrate", "realtime", "dagger")


class ProtocolError(ValueError):
    pass


@dataclass
class LiveSession:
    """State of one connected session; owned by a single handler/loop."""

    mode: str
    traj: object
    gains: Gains
    duration: float
    lockstep: bool
    model: Optional[object] = None
    seed: int = 0
    x: np.ndarray = None
    x_dot: np.ndarray = None
    pointer: np.ndarray = None
    manual_depth: Optional[float] = None
    assist_toggle: bool = False
    override_action: Optional[int] = None
    predictor: Optional[RealtimePredictor] = None
    phases: PhaseTracker = None
    ramp: RampState = None
    tick_index: int = 0
    ticks: list = field(default_factory=list)
    ref_id: str = ""
    done: bool = False

    @property
    def n_ticks_target(self) -> int:
        return int(round(self.duration * TICK_RATE))


def _make_session(msg: dict, model, default_duration: float = 60.0) -> LiveSession:
    mode = msg.get("mode", "demonstrate")
    if mode not in MODES:
        raise ProtocolError(f"unknown mode {mode!r}")
    if msg.get("scenario"):
        scenario = Scenario.from_dict(msg["scenario"])
        curve = scenario.curve
        gains = scenario.gains
        duration = scenario.duration
    else:
        curve_ref = msg.get("curve", "preset:helix")
        curve = load_curve_spec(curve_ref)
        gains = Gains()
        duration = float(msg.get("duration", default_duration))
    if msg.get("duration"):
        duration = float(msg["duration"])
    if mode in ("realtime", "dagger") and model is None:
        raise ProtocolError(f"mode {mode!r} requires a loaded model (serve --model)")
    traj = make_trajectory(curve)
    session = LiveSession(
        mode=mode,
        traj=traj,
        gains=gains,
        duration=duration,
        lockstep=bool(msg.get("lockstep", False)),
        model=model,
        seed=int(msg.get("seed", 0)),
        x=np.array(traj.start_point, dtype=float),
        x_dot=np.zeros(3),
        pointer=np.array(traj.start_point, dtype=float),
        predictor=RealtimePredictor(model) if model is not None and mode != "demonstrate" else None,
        phases=PhaseTracker(traj),
        ramp=RampState(gains.ramp_time),
        ref_id=f"curve-{abs(hash(curve.to_json())) % 10**8:08d}",
    )
    return session


def _polyline(traj, max_points: int = 400) -> list:
    stride = max(1, len(traj.positions) // max_points)
    pts = traj.positions[::stride]
    if not np.array_equal(pts[-1], traj.positions[-1]):
        pts = np.vstack([pts, traj.positions[-1]])
    return [[float(c) for c in p] for p in pts]


def _apply_pointer(session: LiveSession, coords) -> None:
    p = np.asarray(coords, dtype=float)
    if p.ndim != 1 or len(p) not in (2, 3) or not np.all(np.isfinite(p)):
        raise ProtocolError(f"pointer must be a finite 2- or 3-vector, got {coords!r}")
    xy = np.clip(p[:2], -WORKSPACE_HALF, WORKSPACE_HALF)
    if len(p) == 3:
        session.manual_depth = float(np.clip(p[2], -WORKSPACE_HALF, WORKSPACE_HALF))
        z = session.manual_depth
    elif session.manual_depth is not None:
        z = session.manual_depth
    else:
        # default depth: follow the curve's z at the closest (x, y)
        d2 = np.einsum(
            "ij,ij->i",
            session.traj.positions[:, :2] - xy,
            session.traj.positions[:, :2] - xy,
        )
        z = float(session.traj.positions[int(np.argmin(d2)), 2])
    session.pointer = np.array([xy[0], xy[1], z])


def _advance_tick(session: LiveSession) -> dict:
    """Compute one 30 Hz tick from the freshest pointer; returns the wire frame."""
    traj = session.traj
    x, x_dot = session.x, session.x_dot
    phase = session.phases.phase
    cp = closest_point(traj, x)
    state = state_from_projection(traj, x, x_dot, cp, phase)

    probability = None
    model_action = None
    override = False
    if session.mode == "demonstrate":
        action = 1 if session.assist_toggle else 0
        source = "demonstrator"
    else:
        model_action = session.predictor.feed(state)
        probability = session.predictor.last_probability
        action = model_action
        source = "model"
        if session.override_action is not None:
            if session.override_action == model_action:
                session.override_action = None  # model caught up; override released
            else:
                action = session.override_action
                override = True
                source = "override"

    x_d = cp.x_l if phase == "tracking" else np.asarray(traj.start_point)
    cmd = AssistCommand(
        enabled=bool(action),
        target_mode="closest_point" if phase == "tracking" else "start_point",
    )
    level = session.ramp.update(bool(action), TICK_DT)
    u = ramped_force(x, x_dot, x_d, session.gains, cmd, level)

    session.ticks.append(
        TickRecord(
            t=session.tick_index * TICK_DT,
            state=state,
            action=action,
            source=source,
            x=x.copy(),
            x_dot=x_dot.copy(),
            x_l=np.asarray(cp.x_l, dtype=float),
            u=np.asarray(u, dtype=float),
            override=override,
            model_action=model_action if override else None,
        )
    )

    # guided cursor: spring to the pointer plus the assistance force
    accel = (
        POINTER_GAIN * (session.pointer - x)
        - POINTER_DAMPING * x_dot
        + u / GUIDED_MASS
    )
    x_dot = x_dot + accel * TICK_DT
    x = x + x_dot * TICK_DT
    clamped = np.clip(x, -WORKSPACE_HALF, WORKSPACE_HALF)
    x_dot = np.where(clamped == x, x_dot, 0.0)
    session.x, session.x_dot = clamped, x_dot
    session.phases.update(session.x, cp.u)

    frame = {
        "type": "tick",
        "t": session.tick_index * TICK_DT,
        "x": [float(c) for c in session.x],
        "x_l": [float(c) for c in cp.x_l],
        "ref": session.ref_id,
        "e": state.e,
        "v": state.v,
        "assist": int(action),
        "P": probability,
        "phase": phase,
    }
    session.tick_index += 1
    if session.tick_index >= session.n_ticks_target:
        session.done = True
    return frame


def _finalize(session: LiveSession, data_dir: str) -> dict:
    os.makedirs(data_dir, exist_ok=True)
    stamp = time.strftime("%Y%m%d-%H%M%S")
    path = os.path.join(data_dir, f"session-{stamp}-{session.mode}.jsonl")
    actions = [t.action for t in session.ticks]
    header = {
        "curve": session.traj.spec.to_dict(),
        "gains": {
            "kp": session.gains.kp,
            "kd": session.gains.kd,
            "ramp_time": session.gains.ramp_time,
        },
        "action_source": session.mode,
        "seed": session.seed,
        "duration": session.tick_index * TICK_DT,
        "created_at": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
        "protocol": {"rate": TICK_RATE, "transport": "ws"},
        "patient": None,
        "policy": None,
        "label_noise": 0.0,
        "scenario": None,
    }
    log = SessionLog(header=header, ticks=session.ticks)
    write_log(log, path)
    return {
        "type": "session_end",
        "summary": {
            "n_ticks": len(session.ticks),
            "percent_time_on": float(np.mean(actions)) if actions else 0.0,
            "overrides": int(sum(1 for t in session.ticks if t.override)),
            "log_path": path,
        },
    }


def create_app(model_path: Optional[str] = None, data_dir: str = ".", static_dir: Optional[str] = None) -> FastAPI:
    app = FastAPI(title="iart realtime service")
    model = None
    if model_path:
        from . import lstm

        model = lstm.load(model_path)

    if static_dir is None:
        candidate = os.path.join(os.getcwd(), "frontend", "dist")
        static_dir = candidate if os.path.isdir(candidate) else None

    @app.websocket("/ws")
    async def ws_endpoint(ws: WebSocket):
        await ws.accept()
        session: Optional[LiveSession] = None
        live_task: Optional[asyncio.Task] = None

        async def send(obj):
            await ws.send_text(json.dumps(obj))

        async def live_loop():
            next_t = time.monotonic()
            while session is not None and not session.done:
                next_t += TICK_DT
                frame = _advance_tick(session)
                # backpressure: always compute, send the freshest frame only
                try:
                    await asyncio.wait_for(send(frame), timeout=TICK_DT)
                except asyncio.TimeoutError:
                    pass
                delay = next_t - time.monotonic()
                if delay > 0:
                    await asyncio.sleep(delay)
            if session is not None and session.done:
                await send(_finalize(session, data_dir))

        try:
            while True:
                raw = await ws.receive_text()
                try:
                    msg = json.loads(raw)
                except json.JSONDecodeError:
                    await send({"type": "error", "message": "malformed JSON frame"})
                    continue
                mtype = msg.get("type")
                try:
                    if mtype == "start":
                        if session is not None:
                            raise ProtocolError("session already started")
                        session = _make_session(msg, model)
                        await send(
                            {
                                "type": "started",
                                "mode": session.mode,
                                "ref": session.ref_id,
                                "polyline": _polyline(session.traj),
                                "workspace": WORKSPACE_HALF,
                                "duration": session.duration,
                                "lockstep": session.lockstep,
                            }
                        )
                        if not session.lockstep:
                            live_task = asyncio.create_task(live_loop())
                    elif mtype == "pointer":
                        if session is None:
                            raise ProtocolError("no session; send start first")
                        _apply_pointer(session, msg.get("x"))
                        if session.lockstep and not session.done:
                            frame = _advance_tick(session)
                            await send(frame)
                            if session.done:
                                await send(_finalize(session, data_dir))
                    elif mtype == "toggle_assist":
                        if session is None:
                            raise ProtocolError("no session; send start first")
                        if session.mode != "demonstrate":
                            raise ProtocolError("toggle_assist is only valid in demonstrate mode")
                        session.assist_toggle = not session.assist_toggle
                    elif mtype == "override":
                        if session is None:
                            raise ProtocolError("no session; send start first")
                        if session.mode == "demonstrate":
                            raise ProtocolError("override is only valid in realtime/dagger mode")
                        action = int(msg.get("action", 0))
                        if action not in (0, 1):
                            raise ProtocolError("override action must be 0 or 1")
                        session.override_action = action
                    elif mtype == "stop":
                        if session is not None and not session.done:
                            session.done = True
                            if live_task:
                                await live_task
                                live_task = None
                            else:
                                await send(_finalize(session, data_dir))
                        break
                    else:
                        raise ProtocolError(f"unknown message type {mtype!r}")
                except ProtocolError as exc:
                    await send({"type": "error", "message": str(exc)})
        except WebSocketDisconnect:
            pass
        finally:
            if live_task:
                live_task.cancel()
            if session is not None and session.ticks and not session.done:
                # client went away: persist the partial log
                _finalize(session, data_dir)

    @app.get("/health")
    async def health():
        return {"ok": True, "model": model_path}

    if static_dir:
        app.mount("/", StaticFiles(directory=static_dir, html=True), name="ui")
    else:

        @app.get("/")
        async def index():
            return HTMLResponse(
                "<html><body><h3>iart realtime service</h3>"
                "<p>No UI bundle found. Build the frontend (frontend/dist) or "
                "connect a client to <code>/ws</code>.</p></body></html>"
            )

    return app


def serve(port: int = 8732, model_path: Optional[str] = None, data_dir: str = ".", static_dir: Optional[str] = None) -> None:
    import uvicorn

    app = create_app(model_path=model_path, data_dir=data_dir, static_dir=static_dir)
    uvicorn.run(app, host="127.0.0.1", port=port, log_level="warning")
