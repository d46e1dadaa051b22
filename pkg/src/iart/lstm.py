"""Single-hidden-layer LSTM binary classifier, built from scratch.

Cell update per step, with z = [h, x] the concatenated recurrent/input vector:

    c_hat = tanh(w_c z + b_c)
    c'    = sigmoid(w_f z + b_f) * c + sigmoid(w_i z + b_i) * c_hat
    h'    = sigmoid(w_o z + b_o) * tanh(c')

Independent forget/input gates, no peepholes.  A sigmoid head on the final
hidden state yields the assistance probability P(A); the decision threshold is
0.5 with ties mapping to "off" (the fail-safe).  Training minimizes the mean
squared weighted residual (w * (P - a))^2 over windows with exact
backpropagation through time and Adam updates.  All math is float64.
"""

from __future__ import annotations

import base64
import hashlib
import json
import math
from dataclasses import dataclass, field

import numpy as np
from threadpoolctl import threadpool_limits

from .features import N_FEATURES, FeatureScaler, WindowDataset


def _sigmoid(x, out=None):
    """1 / (1 + exp(-x)).  Overflow in exp saturates cleanly to 0."""
    x = np.asarray(x, dtype=float)
    if out is None:
        out = np.empty_like(x)
    with np.errstate(over="ignore"):
        np.multiply(x, -1.0, out=out)
        np.exp(out, out=out)
        out += 1.0
        np.reciprocal(out, out=out)
    return out


def _backward_step_numpy(ch, gates, tc, c_prev, d_h, d_c, d_pre):
    """Per-step backward elementwise block.  ``gates`` holds [f, i, o] after
    the sigmoid; writes gate pre-activation gradients into d_pre (order:
    candidate, f, i, o) and updates d_c in place.  c_prev is None on the first
    step (zero initial cell)."""
    n = d_h.shape[1]
    f, i, o = gates[:, :n], gates[:, n : 2 * n], gates[:, 2 * n :]
    d_pre[:, 3 * n :] = d_h * tc * o * (1.0 - o)
    d_c += d_h * o * (1.0 - tc * tc)
    if c_prev is not None:
        d_pre[:, n : 2 * n] = d_c * c_prev * f * (1.0 - f)
    else:
        d_pre[:, n : 2 * n] = 0.0
    d_pre[:, 2 * n : 3 * n] = d_c * ch * i * (1.0 - i)
    d_pre[:, :n] = d_c * i * (1.0 - ch * ch)
    d_c *= f


_BWD_KERNEL = None


def _get_backward_step():
    """Numba-compiled backward elementwise block when available (the per-step
    dispatch overhead of the numpy version dominates training otherwise);
    falls back to the numpy implementation with identical per-element math."""
    global _BWD_KERNEL
    if _BWD_KERNEL is not None:
        return _BWD_KERNEL
    try:
        import numba
    except ImportError:
        _BWD_KERNEL = _backward_step_numpy
        return _BWD_KERNEL

    @numba.njit(cache=True)
    def kernel(ch, gates, tc, c_prev, d_h, d_c, d_pre, has_prev):
        batch, n = d_h.shape
        for b in range(batch):
            for k in range(n):
                dh = d_h[b, k]
                tck = tc[b, k]
                ok = gates[b, 2 * n + k]
                d_pre[b, 3 * n + k] = dh * tck * ok * (1.0 - ok)
                dc = d_c[b, k] + dh * ok * (1.0 - tck * tck)
                fk = gates[b, k]
                if has_prev:
                    d_pre[b, n + k] = dc * c_prev[b, k] * fk * (1.0 - fk)
                else:
                    d_pre[b, n + k] = 0.0
                ik = gates[b, n + k]
                chk = ch[b, k]
                d_pre[b, 2 * n + k] = dc * chk * ik * (1.0 - ik)
                d_pre[b, k] = dc * ik * (1.0 - chk * chk)
                d_c[b, k] = dc * fk

    def wrapper(ch, gates, tc, c_prev, d_h, d_c, d_pre):
        has_prev = c_prev is not None
        if not has_prev:
            c_prev = d_c  # unused placeholder with matching shape
        kernel(ch, gates, tc, c_prev, d_h, d_c, d_pre, has_prev)

    _BWD_KERNEL = wrapper
    return _BWD_KERNEL


MODEL_SCHEMA = "iart-model/1"

# fixed tensor order for Adam state and serialization
_TENSOR_KEYS = ("w_c", "w_f", "w_i", "w_o", "b_c", "b_f", "b_i", "b_o", "w_y", "b_y")


class ModelFormatError(ValueError):
    """Corrupt or unreadable model file."""


class ModelVersionError(ModelFormatError):
    """Model file carries an unsupported schema tag."""


class TrainingDivergedError(RuntimeError):
    pass


@dataclass
class LstmParams:
    """All learnable tensors.  Gate weight matrices are (n, n + input)."""

    w_c: np.ndarray
    w_f: np.ndarray
    w_i: np.ndarray
    w_o: np.ndarray
    b_c: np.ndarray
    b_f: np.ndarray
    b_i: np.ndarray
    b_o: np.ndarray
    w_y: np.ndarray
    b_y: float

    @property
    def hidden_size(self) -> int:
        return self.w_c.shape[0]

    @property
    def input_size(self) -> int:
        return self.w_c.shape[1] - self.w_c.shape[0]

    def as_dict(self) -> dict:
        return {k: getattr(self, k) for k in _TENSOR_KEYS}

    def copy(self) -> "LstmParams":
        return LstmParams(
            **{k: (np.array(v) if isinstance(v, np.ndarray) else float(v)) for k, v in self.as_dict().items()}
        )


@dataclass
class CellState:
    h: np.ndarray
    c: np.ndarray

    @classmethod
    def zeros(cls, hidden_size: int) -> "CellState":
        return cls(h=np.zeros(hidden_size), c=np.zeros(hidden_size))


@dataclass
class TrainConfig:
    epochs: int = 400
    batch_size: int = 32
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0
    shuffle: bool = True

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")

    def to_dict(self) -> dict:
        return {
            "epochs": self.epochs,
            "batch_size": self.batch_size,
            "learning_rate": self.learning_rate,
            "beta1": self.beta1,
            "beta2": self.beta2,
            "eps": self.eps,
            "seed": self.seed,
            "shuffle": self.shuffle,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        return cls(**d)


@dataclass
class LstmModel:
    params: LstmParams
    scaler: FeatureScaler
    meta: dict = field(default_factory=dict)


def init_params(hidden_size: int = 100, input_size: int = N_FEATURES, seed: int = 0) -> LstmParams:
    """Deterministic initialization: gate weights uniform in +-1/sqrt(n+d),
    forget bias +1 (preserves memory early in training), other biases zero."""
    rng = np.random.default_rng(seed)
    m = hidden_size + input_size
    bound = 1.0 / math.sqrt(m)

    def w():
        return rng.uniform(-bound, bound, size=(hidden_size, m))

    return LstmParams(
        w_c=w(),
        w_f=w(),
        w_i=w(),
        w_o=w(),
        b_c=np.zeros(hidden_size),
        b_f=np.full(hidden_size, 1.0),
        b_i=np.zeros(hidden_size),
        b_o=np.zeros(hidden_size),
        w_y=rng.uniform(-1.0 / math.sqrt(hidden_size), 1.0 / math.sqrt(hidden_size), size=hidden_size),
        b_y=0.0,
    )


def step(params: LstmParams, state: CellState, x) -> CellState:
    """One cell update for a single (scaled) input vector."""
    x = np.asarray(x, dtype=float)
    if x.shape != (params.input_size,):
        raise ValueError(f"input shape {x.shape}, expected ({params.input_size},)")
    if state.h.shape != (params.hidden_size,):
        raise ValueError(f"state shape {state.h.shape}, expected ({params.hidden_size},)")
    z = np.concatenate([state.h, x])
    c_hat = np.tanh(params.w_c @ z + params.b_c)
    f = _sigmoid(params.w_f @ z + params.b_f)
    i = _sigmoid(params.w_i @ z + params.b_i)
    o = _sigmoid(params.w_o @ z + params.b_o)
    c_new = f * state.c + i * c_hat
    h_new = o * np.tanh(c_new)
    return CellState(h=h_new, c=c_new)


def forward(params: LstmParams, window) -> float:
    """Assistance probability for one window: 30 steps from zero state, then
    a sigmoid readout of the final hidden state."""
    window = np.asarray(window, dtype=float)
    if window.ndim != 2 or window.shape[1] != params.input_size:
        raise ValueError(f"window shape {window.shape}, expected (T, {params.input_size})")
    state = CellState.zeros(params.hidden_size)
    for t in range(window.shape[0]):
        state = step(params, state, window[t])
    return float(_sigmoid(float(params.w_y @ state.h + params.b_y)))


_WORKSPACES: dict = {}


def _workspace(batch: int, steps: int, n: int, m: int, backward: bool = False) -> dict:
    """Reusable training buffers; fresh multi-MB allocations per batch cost
    more in page faults than the math itself.  Single-threaded use only."""
    key = (batch, steps, n, m)
    ws = _WORKSPACES.get(key)
    if ws is None:
        if len(_WORKSPACES) >= 8:
            _WORKSPACES.clear()
        ws = {
            "z_all": np.zeros((steps, batch, m)),
            "pre": np.empty((steps, batch, 4 * n)),
            "c_all": np.empty((steps, batch, n)),
            "tc_all": np.empty((steps, batch, n)),
            "h_final": np.empty((batch, n)),
            "scratch": np.empty((batch, n)),
        }
        _WORKSPACES[key] = ws
    if backward and "d_pre_all" not in ws:
        ws.update(
            d_pre_all=np.empty((steps, batch, 4 * n)),
            d_z=np.empty((batch, m)),
            d_h=np.empty((batch, n)),
            d_c=np.empty((batch, n)),
        )
    return ws


def _forward_pass(params: LstmParams, windows: np.ndarray):
    """Batched forward with full activation cache, written with preallocated
    buffers since this is the training hot loop."""
    batch, steps, d = windows.shape
    n = params.hidden_size
    m = n + d
    # single stacked weight; matmul uses the transposed view without a copy
    w_all = np.concatenate([params.w_c, params.w_f, params.w_i, params.w_o], axis=0)
    b_all = np.concatenate([params.b_c, params.b_f, params.b_i, params.b_o])
    w_all_t = w_all.T

    ws = _workspace(batch, steps, n, m)
    z_all = ws["z_all"]                    # [h_{t-1}, x_t] rows
    z_all[0, :, :n] = 0.0
    pre = ws["pre"]                        # activations: tanh cand | sigmoid f, i, o
    c_all = ws["c_all"]
    tc_all = ws["tc_all"]
    h_final = ws["h_final"]
    scratch = ws["scratch"]

    for t in range(steps):
        z = z_all[t]
        z[:, n:] = windows[:, t, :]
        p = pre[t]
        np.matmul(z, w_all_t, out=p)
        p += b_all
        ch = p[:, :n]
        np.tanh(ch, out=ch)
        g = p[:, n:]
        _sigmoid(g, out=g)
        f, i, o = p[:, n : 2 * n], p[:, 2 * n : 3 * n], p[:, 3 * n :]
        c = c_all[t]
        np.multiply(i, ch, out=c)
        if t > 0:
            np.multiply(f, c_all[t - 1], out=scratch)
            c += scratch
        np.tanh(c, out=tc_all[t])
        h_out = z_all[t + 1][:, :n] if t + 1 < steps else h_final
        np.multiply(o, tc_all[t], out=h_out)

    probs = _sigmoid(h_final @ params.w_y + params.b_y)
    return probs, h_final, (z_all, pre, c_all, tc_all, w_all)


def forward_batch(params: LstmParams, windows: np.ndarray, chunk: int = 512) -> np.ndarray:
    """Vectorized forward over a batch of windows (B, T, d).

    Large batches are processed in chunks to bound the activation memory.
    """
    windows = np.ascontiguousarray(windows, dtype=float)
    if windows.ndim != 3 or windows.shape[2] != params.input_size:
        raise ValueError(f"windows shape {windows.shape}, expected (B, T, {params.input_size})")
    if len(windows) <= chunk:
        probs, _, _ = _forward_pass(params, windows)
        return probs
    return np.concatenate(
        [_forward_pass(params, windows[i : i + chunk])[0] for i in range(0, len(windows), chunk)]
    )


def _weighted_loss(probs, labels, weights) -> float:
    res = (weights * (probs - labels)) ** 2
    # canonical summation order: permutation of the batch cannot change the sum
    return float(np.sort(res).sum() / len(res))


def loss_and_gradients(params: LstmParams, windows, labels, weights):
    """Exact BPTT gradients of the mean squared weighted residual.

    Sample weights multiply the residual, so a weight of beta scales that
    sample's squared-error contribution by beta^2.
    """
    windows = np.ascontiguousarray(windows, dtype=float)
    labels = np.asarray(labels, dtype=float)
    weights = np.asarray(weights, dtype=float)
    if len(windows) == 0:
        raise ValueError("empty batch")
    batch, steps, d = windows.shape
    n = params.hidden_size
    m = n + d

    probs, h_final, cache = _forward_pass(params, windows)
    z_all, pre, c_all, tc_all, w_all = cache
    loss = _weighted_loss(probs, labels, weights)

    d_prob = 2.0 * (weights**2) * (probs - labels) / batch
    d_score = d_prob * probs * (1.0 - probs)
    g_wy = h_final.T @ d_score
    g_by = float(d_score.sum())

    backward_step = _get_backward_step()
    ws = _workspace(batch, steps, n, m, backward=True)
    d_h = ws["d_h"]
    np.outer(d_score, params.w_y, out=d_h)
    d_c = ws["d_c"]
    d_c[:] = 0.0
    d_pre_all = ws["d_pre_all"]  # order: candidate, f, i, o
    d_z = ws["d_z"]

    for t in range(steps - 1, -1, -1):
        p = pre[t]
        c_prev = c_all[t - 1] if t > 0 else None
        backward_step(p[:, :n], p[:, n:], tc_all[t], c_prev, d_h, d_c, d_pre_all[t])
        np.matmul(d_pre_all[t], w_all, out=d_z)
        d_h[:] = d_z[:, :n]

    # one fused reduction over (steps * batch) rows for the weight gradients
    flat_pre = d_pre_all.reshape(steps * batch, 4 * n)
    g_w_all = flat_pre.T @ z_all.reshape(steps * batch, m)
    g_b_all = flat_pre.sum(axis=0)

    grads = LstmParams(
        w_c=g_w_all[:n],
        w_f=g_w_all[n : 2 * n],
        w_i=g_w_all[2 * n : 3 * n],
        w_o=g_w_all[3 * n :],
        b_c=g_b_all[:n],
        b_f=g_b_all[n : 2 * n],
        b_i=g_b_all[2 * n : 3 * n],
        b_o=g_b_all[3 * n :],
        w_y=g_wy,
        b_y=g_by,
    )
    return loss, grads


class _Adam:
    def __init__(self, config: TrainConfig):
        self.cfg = config
        self.t = 0
        self.m = {}
        self.v = {}

    def update(self, params: LstmParams, grads: LstmParams) -> None:
        self.t += 1
        cfg = self.cfg
        bc1 = 1.0 - cfg.beta1**self.t
        bc2 = 1.0 - cfg.beta2**self.t
        for key in _TENSOR_KEYS:
            g = np.asarray(getattr(grads, key), dtype=float)
            if key not in self.m:
                self.m[key] = np.zeros_like(g)
                self.v[key] = np.zeros_like(g)
            self.m[key] = cfg.beta1 * self.m[key] + (1.0 - cfg.beta1) * g
            self.v[key] = cfg.beta2 * self.v[key] + (1.0 - cfg.beta2) * g * g
            stepv = cfg.learning_rate * (self.m[key] / bc1) / (np.sqrt(self.v[key] / bc2) + cfg.eps)
            if key == "b_y":
                params.b_y = float(params.b_y - stepv)
            else:
                arr = getattr(params, key)
                arr -= stepv


def train(
    dataset: WindowDataset,
    config: TrainConfig = None,
    hidden_size: int = 100,
) -> LstmModel:
    """Train from a fresh deterministic initialization.

    Runs epochs x ceil(N / batch_size) Adam updates over seeded-shuffled
    batches; identical dataset + config yield bit-identical parameters.
    """
    config = config or TrainConfig()
    n_samples = len(dataset)
    if n_samples == 0:
        raise ValueError("empty dataset")
    rng = np.random.default_rng(config.seed)
    params = init_params(hidden_size=hidden_size, input_size=dataset.windows.shape[2], seed=config.seed)
    adam = _Adam(config)

    windows = np.ascontiguousarray(dataset.windows, dtype=float)
    labels = np.asarray(dataset.labels, dtype=float)
    weights = np.asarray(dataset.weights, dtype=float)

    last_loss = math.nan
    # single BLAS thread: faster on these small matrices and keeps reduction
    # order independent of the host's thread count
    with threadpool_limits(limits=1, user_api="blas"):
        for epoch in range(config.epochs):
            order = rng.permutation(n_samples) if config.shuffle else np.arange(n_samples)
            for start in range(0, n_samples, config.batch_size):
                idx = order[start : start + config.batch_size]
                loss, grads = loss_and_gradients(params, windows[idx], labels[idx], weights[idx])
                if not math.isfinite(loss):
                    raise TrainingDivergedError(
                        f"non-finite loss at epoch {epoch}, batch {start // config.batch_size}"
                    )
                adam.update(params, grads)
                last_loss = loss

    meta = {
        "hidden_size": hidden_size,
        "input_size": int(dataset.windows.shape[2]),
        "window": int(dataset.windows.shape[1]),
        "n_windows": int(n_samples),
        "final_loss": last_loss,
        "train_config": config.to_dict(),
    }
    return LstmModel(params=params, scaler=dataset.scaler, meta=meta)


def predict(model: LstmModel, window) -> int:
    """1 if P(A) > 0.5 else 0; an exact 0.5 tie maps to off."""
    return 1 if forward(model.params, window) > 0.5 else 0


# ---------------------------------------------------------------------------
# persistence


def _encode_tensor(a) -> dict:
    arr = np.ascontiguousarray(np.asarray(a, dtype=np.float64))
    return {
        "shape": list(arr.shape),
        "data": base64.b64encode(arr.tobytes()).decode("ascii"),
    }


def _decode_tensor(d: dict) -> np.ndarray:
    raw = base64.b64decode(d["data"])
    return np.frombuffer(raw, dtype=np.float64).reshape(d["shape"]).copy()


def _payload_checksum(payload: dict) -> str:
    canon = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode("utf-8")).hexdigest()


def save(model: LstmModel, path: str) -> None:
    payload = {
        "schema": MODEL_SCHEMA,
        "hyper": model.meta,
        "tensors": {k: _encode_tensor(v) for k, v in model.params.as_dict().items()},
        "scaler": model.scaler.to_dict(),
    }
    payload["checksum"] = _payload_checksum({k: payload[k] for k in ("schema", "hyper", "tensors", "scaler")})
    with open(path, "w") as fh:
        json.dump(payload, fh)


def load(path: str) -> LstmModel:
    try:
        with open(path) as fh:
            payload = json.load(fh)
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise ModelFormatError(f"corrupt model file {path}: {exc}") from exc
    if payload.get("schema") != MODEL_SCHEMA:
        raise ModelVersionError(
            f"model schema mismatch: expected {MODEL_SCHEMA!r}, got {payload.get('schema')!r}"
        )
    expected = payload.get("checksum")
    actual = _payload_checksum({k: payload[k] for k in ("schema", "hyper", "tensors", "scaler")})
    if expected != actual:
        raise ModelFormatError(f"checksum mismatch in {path}")
    tensors = {k: _decode_tensor(v) for k, v in payload["tensors"].items()}
    params = LstmParams(
        **{k: tensors[k] for k in _TENSOR_KEYS if k != "b_y"},
        b_y=float(tensors["b_y"]) if tensors["b_y"].shape == () else float(tensors["b_y"][0]),
    )
    return LstmModel(
        params=params,
        scaler=FeatureScaler.from_dict(payload["scaler"]),
        meta=payload["hyper"],
    )
