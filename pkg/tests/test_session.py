import json
import time

import numpy as np
import pytest

from iart import geometry as geo
from iart import lstm
from iart import session as ses
from iart.features import StateVector, fit_scaler, make_windows
from iart.lstm import LstmModel, TrainConfig, init_params
from iart.session import (
    RealtimePredictor,
    SessionFormatError,
    read_log,
    replay_agreement,
    write_log,
)
from iart.simulation import PatientModel, TherapistPolicy, run_closed_loop

LINE = geo.make_trajectory(geo.CurveSpec("line", {"p1": [-0.08, 0, 0], "p2": [0.08, 0, 0]}))


def sample_log(duration=5.0, seed=0, policy=True):
    m = PatientModel(
        mass=0.3, k_s=25.0, damping=10.0, noise_std=0.08, lapse_rate=0.4,
        lapse_drift=0.5, lookahead=0.02, return_gain_frac=0.8, seed=seed,
    )
    pol = TherapistPolicy(e_on=0.015, e_off=0.009, t_dwell=0.4, t_release=0.4) if policy else None
    return run_closed_loop(
        LINE, m, "policy" if policy else "none", duration, seed=seed, policy=pol
    )


# ---------------------------------------------------------------------------
# log round trip


def test_write_read_round_trip(tmp_path):
    log = sample_log()
    path = tmp_path / "s.jsonl"
    write_log(log, str(path))
    again = read_log(str(path))
    assert again.header == json.loads(json.dumps(log.header))
    assert len(again.ticks) == len(log.ticks)
    for a, b in zip(log.ticks, again.ticks):
        assert a.t == b.t
        assert a.state == b.state
        assert a.action == b.action
        assert np.array_equal(a.x, b.x)
        assert np.array_equal(a.x_dot, b.x_dot)
        assert np.array_equal(a.x_l, b.x_l)
        assert np.array_equal(a.u, b.u)
        assert a.override == b.override


def test_line_count(tmp_path):
    log = sample_log(duration=120.0)
    path = tmp_path / "s.jsonl"
    write_log(log, str(path))
    assert len(path.read_text().strip().splitlines()) == 3601


def test_missing_header_rejected(tmp_path):
    path = tmp_path / "bad.jsonl"
    path.write_text('{"t": 0.0}\n')
    with pytest.raises(SessionFormatError, match="schema"):
        read_log(str(path))


def test_malformed_tick_line_number(tmp_path):
    log = sample_log(duration=2.0)
    path = tmp_path / "s.jsonl"
    write_log(log, str(path))
    lines = path.read_text().splitlines()
    lines[3] = "{broken"
    path.write_text("\n".join(lines) + "\n")
    with pytest.raises(SessionFormatError, match=":4"):
        read_log(str(path))


def test_header_curve_rebuilds_consistent_projection(tmp_path):
    log = sample_log(duration=4.0, seed=5)
    spec = geo.CurveSpec.from_dict(log.header["curve"])
    traj = geo.make_trajectory(spec)
    for tk in log.ticks[::13]:
        cp = geo.closest_point(traj, tk.x)
        assert np.linalg.norm(cp.x_l - tk.x_l) < 1e-4


def test_recomputed_features_match_log():
    from iart.features import build_state

    log = sample_log(duration=4.0, seed=6)
    traj = geo.make_trajectory(geo.CurveSpec.from_dict(log.header["curve"]))
    for tk in log.ticks[::7]:
        phase = "tracking" if tk.state.is_track else "returning"
        s = build_state(traj, tk.x, tk.x_dot, phase)
        assert np.allclose(s.as_array(), tk.state.as_array(), atol=1e-9)


# ---------------------------------------------------------------------------
# realtime predictor


def toy_model(seed=0):
    ds_log = sample_log(duration=10.0, seed=seed)
    pairs = ds_log.pairs()
    scaler = fit_scaler(pairs)
    ds = make_windows(pairs, scaler)
    return lstm.train(ds, TrainConfig(epochs=3, seed=1), hidden_size=10), ds_log


def test_warm_up_is_off():
    model, log = toy_model()
    pred = RealtimePredictor(model)
    outs = [pred.feed(tk.state) for tk in log.ticks[:29]]
    assert outs == [0] * 29


def test_online_matches_offline_windows():
    model, log = toy_model(seed=3)
    pairs = log.pairs()
    ds = make_windows(pairs, model.scaler)
    offline = [lstm.predict(model, w) for w in ds.windows]
    pred = RealtimePredictor(model)
    online = [pred.feed(tk.state) for tk in log.ticks]
    assert online[29:] == offline
    assert online[:29] == [0] * 29


def test_replay_agreement_runs():
    model, log = toy_model(seed=4)
    out = replay_agreement(log, model)
    assert 0.0 <= out["agreement"] <= 1.0
    assert out["compared"] == len(log.ticks) - 29


def test_predictor_latency_hidden_100():
    params = init_params(hidden_size=100, input_size=7, seed=0)
    from iart.features import FeatureScaler

    model = LstmModel(params=params, scaler=FeatureScaler.identity(), meta={})
    pred = RealtimePredictor(model)
    s = StateVector(0.01, 0.0, 0.0, 0.01, 1.0, 0.05, 1)
    for _ in range(35):
        pred.feed(s)
    t0 = time.perf_counter()
    n = 50
    for _ in range(n):
        pred.feed(s)
    per_call = (time.perf_counter() - t0) / n
    assert per_call < 0.010
