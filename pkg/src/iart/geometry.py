"""Parametric 3D reference curves with closest-point and curvature queries.

A declarative :class:`CurveSpec` builds into an immutable :class:`Trajectory`
carrying a dense sample table (position, tangent, curvature radius, cumulative
arc length) plus exact analytic evaluators used to refine queries below table
resolution.  Six curve families are supported: line, circle, helix, lissajous,
figure8 and a seeded composite spline.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np
from scipy.interpolate import CubicSpline

# Straight segments have unbounded curvature radius; cap keeps the feature finite.
R_CAP = 10.0
MIN_CURVATURE_RADIUS = 1e-4
# Workspace is a 0.2 m cube centered at the origin.
WORKSPACE_HALF = 0.1
# Adjacent table samples must be closer than this along the arc.
MAX_SAMPLE_SPACING = 1e-3
_TARGET_SPACING = 5e-4

CURVESPEC_SCHEMA = "curvespec/1"

FAMILIES = ("line", "circle", "helix", "lissajous", "figure8", "spline")


class CurveSpecError(ValueError):
    """Invalid or degenerate curve parameters."""


@dataclass(frozen=True)
class CurveSpec:
    """Declarative description of a reference curve.

    ``params`` holds family-specific values in meters; ``seed`` only matters
    for randomized families (spline).  The same spec always builds the same
    trajectory, bit for bit.
    """

    family: str
    params: dict
    seed: int = 0

    def to_dict(self) -> dict:
        return {
            "schema": CURVESPEC_SCHEMA,
            "family": self.family,
            "params": _jsonable(self.params),
            "seed": int(self.seed),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CurveSpec":
        if d.get("schema") != CURVESPEC_SCHEMA:
            raise CurveSpecError(
                f"schema: expected {CURVESPEC_SCHEMA!r}, got {d.get('schema')!r}"
            )
        return cls(family=d["family"], params=dict(d["params"]), seed=int(d.get("seed", 0)))

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "CurveSpec":
        return cls.from_dict(json.loads(text))


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, np.ndarray)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    return obj


class ClosestPoint(NamedTuple):
    x_l: np.ndarray  # closest point on the curve, m
    u: float         # curve parameter of the closest point
    d: float         # Euclidean distance, m


@dataclass(frozen=True)
class Trajectory:
    """Immutable sampled curve; safe to share across readers."""

    spec: CurveSpec
    u: np.ndarray                 # (N,) strictly increasing in [0, 1]
    positions: np.ndarray         # (N, 3)
    tangents: np.ndarray          # (N, 3) unit norm
    curvature_radius: np.ndarray  # (N,) in (0, R_CAP]
    cum_length: np.ndarray        # (N,) cumulative arc length, m
    total_length: float
    start_point: np.ndarray       # first point of the curve
    end_point: np.ndarray         # last point of the curve
    _pos: Callable = field(repr=False, compare=False)
    _d1: Callable = field(repr=False, compare=False)
    _d2: Callable = field(repr=False, compare=False)

    def position_at(self, u) -> np.ndarray:
        """Exact curve position at parameter ``u``."""
        u = np.clip(np.asarray(u, dtype=float), 0.0, 1.0)
        return self._pos(u)

    def arclen_at(self, u: float) -> float:
        return float(np.interp(u, self.u, self.cum_length))

    def point_at_arclen(self, s: float) -> np.ndarray:
        """Curve point at arc length ``s`` from the start (clamped to the ends)."""
        s = min(max(float(s), 0.0), self.total_length)
        u = float(np.interp(s, self.cum_length, self.u))
        return self._pos(np.asarray(u))


def _vec3(params: dict, key: str, default=None) -> np.ndarray:
    if key not in params:
        if default is None:
            raise CurveSpecError(f"{key}: missing required parameter")
        return np.asarray(default, dtype=float)
    v = np.asarray(params[key], dtype=float)
    if v.shape != (3,) or not np.all(np.isfinite(v)):
        raise CurveSpecError(f"{key}: expected a finite 3-vector, got {params[key]!r}")
    return v


def _scalar(params: dict, key: str, default=None, positive=False, nonneg=False) -> float:
    if key not in params:
        if default is None:
            raise CurveSpecError(f"{key}: missing required parameter")
        x = float(default)
    else:
        x = float(params[key])
    if not math.isfinite(x):
        raise CurveSpecError(f"{key}: must be finite, got {x}")
    if positive and x <= 0:
        raise CurveSpecError(f"{key}: must be > 0, got {x}")
    if nonneg and x < 0:
        raise CurveSpecError(f"{key}: must be >= 0, got {x}")
    return x


def _evaluators(spec: CurveSpec):
    """Return vectorized (pos, d1, d2) evaluators over the parameter t in [0, 1]."""
    p = spec.params
    fam = spec.family
    if fam == "line":
        p1 = _vec3(p, "p1")
        p2 = _vec3(p, "p2")
        if np.allclose(p1, p2):
            raise CurveSpecError("p2: degenerate line, p1 == p2")
        d = p2 - p1

        def pos(t):
            return p1 + np.multiply.outer(t, d)

        def d1(t):
            return np.broadcast_to(d, np.shape(t) + (3,)).copy()

        def d2(t):
            return np.zeros(np.shape(t) + (3,))

        return pos, d1, d2

    if fam == "circle":
        center = _vec3(p, "center", (0.0, 0.0, 0.0))
        radius = _scalar(p, "radius", positive=True)
        normal = _vec3(p, "normal", (0.0, 0.0, 1.0))
        nn = np.linalg.norm(normal)
        if nn == 0:
            raise CurveSpecError("normal: must be nonzero")
        n = normal / nn
        ref = np.array([1.0, 0.0, 0.0]) if abs(n[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
        a = ref - np.dot(ref, n) * n
        a /= np.linalg.norm(a)
        b = np.cross(n, a)
        w = 2.0 * math.pi

        def pos(t):
            th = w * np.asarray(t)
            return center + radius * (np.multiply.outer(np.cos(th), a) + np.multiply.outer(np.sin(th), b))

        def d1(t):
            th = w * np.asarray(t)
            return radius * w * (np.multiply.outer(-np.sin(th), a) + np.multiply.outer(np.cos(th), b))

        def d2(t):
            th = w * np.asarray(t)
            return radius * w * w * (np.multiply.outer(-np.cos(th), a) + np.multiply.outer(-np.sin(th), b))

        return pos, d1, d2

    if fam == "helix":
        radius = _scalar(p, "radius", positive=True)
        pitch = _scalar(p, "pitch", nonneg=True)  # z advance per radian
        turns = _scalar(p, "turns", positive=True)
        center = _vec3(p, "center", (0.0, 0.0, 0.0))
        w = 2.0 * math.pi * turns

        def pos(t):
            th = w * np.asarray(t)
            return center + np.stack(
                [radius * np.cos(th), radius * np.sin(th), pitch * th], axis=-1
            )

        def d1(t):
            th = w * np.asarray(t)
            return w * np.stack(
                [-radius * np.sin(th), radius * np.cos(th), np.full_like(th, pitch)], axis=-1
            )

        def d2(t):
            th = w * np.asarray(t)
            return w * w * np.stack(
                [-radius * np.cos(th), -radius * np.sin(th), np.zeros_like(th)], axis=-1
            )

        return pos, d1, d2

    if fam == "lissajous":
        amp = _vec3(p, "amplitude")
        freq = _vec3(p, "freq", (1.0, 2.0, 3.0))
        phase = _vec3(p, "phase", (0.0, 0.0, 0.0))
        cycles = _scalar(p, "cycles", 1.0, positive=True)
        if np.linalg.norm(amp) == 0:
            raise CurveSpecError("amplitude: must be nonzero")
        if np.any(freq <= 0):
            raise CurveSpecError("freq: components must be > 0")
        w = 2.0 * math.pi * cycles * freq

        def pos(t):
            th = np.multiply.outer(np.asarray(t), w) + phase
            return amp * np.sin(th)

        def d1(t):
            th = np.multiply.outer(np.asarray(t), w) + phase
            return amp * w * np.cos(th)

        def d2(t):
            th = np.multiply.outer(np.asarray(t), w) + phase
            return -amp * w * w * np.sin(th)

        return pos, d1, d2

    if fam == "figure8":
        amp = _vec3(p, "amplitude")
        if np.any(amp[:2] <= 0):
            raise CurveSpecError("amplitude: x and y components must be > 0")
        w = 2.0 * math.pi

        def pos(t):
            th = w * np.asarray(t)
            return np.stack(
                [
                    amp[0] * np.sin(th),
                    amp[1] * np.sin(th) * np.cos(th),
                    amp[2] * np.cos(th),
                ],
                axis=-1,
            )

        def d1(t):
            th = w * np.asarray(t)
            return w * np.stack(
                [
                    amp[0] * np.cos(th),
                    amp[1] * np.cos(2.0 * th),
                    -amp[2] * np.sin(th),
                ],
                axis=-1,
            )

        def d2(t):
            th = w * np.asarray(t)
            return w * w * np.stack(
                [
                    -amp[0] * np.sin(th),
                    -2.0 * amp[1] * np.sin(2.0 * th),
                    -amp[2] * np.cos(th),
                ],
                axis=-1,
            )

        return pos, d1, d2

    if fam == "spline":
        n_points = int(_scalar(p, "n_points", 6))
        scale = _scalar(p, "scale", 0.08, positive=True)
        if n_points < 4:
            raise CurveSpecError(f"n_points: need at least 4, got {n_points}")
        if scale > WORKSPACE_HALF:
            raise CurveSpecError(f"scale: exceeds workspace half-extent {WORKSPACE_HALF}")
        rng = np.random.default_rng(spec.seed)
        pts = rng.uniform(-scale, scale, size=(n_points, 3))
        spl = CubicSpline(np.linspace(0.0, 1.0, n_points), pts, axis=0, bc_type="natural")
        dspl = spl.derivative(1)
        ddspl = spl.derivative(2)
        return (lambda t: spl(t)), (lambda t: dspl(t)), (lambda t: ddspl(t))

    raise CurveSpecError(f"family: unknown curve family {fam!r}")


def make_trajectory(spec: CurveSpec) -> Trajectory:
    """Build the dense sample table for a curve spec.

    Raises :class:`CurveSpecError` for invalid parameters or degenerate curves.
    """
    pos_f, d1_f, d2_f = _evaluators(spec)

    probe = np.linspace(0.0, 1.0, 4097)
    speeds = np.linalg.norm(d1_f(probe), axis=-1)
    max_speed = float(np.max(speeds))
    if max_speed == 0.0 or not math.isfinite(max_speed):
        raise CurveSpecError("params: degenerate curve with zero extent")

    n = max(801, int(math.ceil(max_speed / _TARGET_SPACING)) + 1)
    for _ in range(4):
        u = np.linspace(0.0, 1.0, n)
        positions = np.asarray(pos_f(u), dtype=float)
        chords = np.linalg.norm(np.diff(positions, axis=0), axis=1)
        if float(np.max(chords)) <= MAX_SAMPLE_SPACING:
            break
        n *= 2
    else:
        raise CurveSpecError("params: could not reach required sample density")

    d1 = np.asarray(d1_f(u), dtype=float)
    d2 = np.asarray(d2_f(u), dtype=float)
    speed = np.linalg.norm(d1, axis=1)
    # Zero-speed samples (stationary parameter points) inherit the neighbor tangent.
    bad = speed < 1e-12
    safe_speed = np.where(bad, 1.0, speed)
    tangents = d1 / safe_speed[:, None]
    if np.any(bad):
        idx = np.flatnonzero(bad)
        good = np.flatnonzero(~bad)
        if good.size == 0:
            raise CurveSpecError("params: curve has no well-defined direction")
        nearest = good[np.searchsorted(good, idx).clip(max=good.size - 1)]
        tangents[idx] = tangents[nearest]

    cross = np.cross(d1, d2)
    kappa = np.linalg.norm(cross, axis=1) / np.maximum(safe_speed**3, 1e-300)
    with np.errstate(divide="ignore"):
        r_c = np.where(kappa > 1.0 / R_CAP, 1.0 / np.maximum(kappa, 1e-300), R_CAP)
    r_c = np.clip(r_c, MIN_CURVATURE_RADIUS, R_CAP)

    cum = np.concatenate([[0.0], np.cumsum(chords)])
    total = float(cum[-1])

    return Trajectory(
        spec=spec,
        u=u,
        positions=positions,
        tangents=tangents,
        curvature_radius=r_c,
        cum_length=cum,
        total_length=total,
        start_point=positions[0].copy(),
        end_point=positions[-1].copy(),
        _pos=lambda t: np.asarray(pos_f(t), dtype=float),
        _d1=lambda t: np.asarray(d1_f(t), dtype=float),
        _d2=lambda t: np.asarray(d2_f(t), dtype=float),
    )


def _golden_section(f, lo: float, hi: float, iters: int = 48):
    """Minimize a unimodal scalar function on [lo, hi]."""
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(iters):
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = f(d)
    return (c, fc) if fc < fd else (d, fd)


def closest_point(traj: Trajectory, x) -> ClosestPoint:
    """Closest point on the curve to ``x``: global search over the sample
    table, then golden-section refinement within the winning segment.

    Ties between equally close samples resolve toward smaller ``u``.
    """
    x = np.asarray(x, dtype=float)
    diff = traj.positions - x
    d2 = np.einsum("ij,ij->i", diff, diff)
    i = int(np.argmin(d2))
    n = len(traj.u)
    lo = traj.u[i - 1] if i > 0 else traj.u[0]
    hi = traj.u[i + 1] if i < n - 1 else traj.u[-1]

    def f(t):
        q = traj._pos(np.asarray(t)) - x
        return float(np.dot(q, q))

    best_u, best_d2 = traj.u[i], float(d2[i])
    if hi > lo:
        t_star, f_star = _golden_section(f, float(lo), float(hi))
        if f_star < best_d2:
            best_u, best_d2 = t_star, f_star

    x_l = traj._pos(np.asarray(best_u))
    return ClosestPoint(x_l=np.asarray(x_l, dtype=float), u=float(best_u), d=math.sqrt(best_d2))


def curvature_radius_at(traj: Trajectory, u: float) -> float:
    """Interpolated curvature radius at parameter ``u`` in [0, 1]."""
    u = float(u)
    if not 0.0 <= u <= 1.0:
        raise ValueError(f"u out of range [0, 1]: {u}")
    return float(np.interp(u, traj.u, traj.curvature_radius))


# ---------------------------------------------------------------------------
# Named presets: curves sized for the 0.2 m workspace cube.

def preset_spec(name: str) -> CurveSpec:
    presets = {
        "line": CurveSpec("line", {"p1": [-0.08, -0.05, -0.02], "p2": [0.08, 0.05, 0.02]}),
        "circle": CurveSpec("circle", {"center": [0.0, 0.0, 0.0], "radius": 0.07}),
        "helix": CurveSpec(
            "helix", {"radius": 0.055, "pitch": 0.012, "turns": 2.0, "center": [0.0, 0.0, -0.075]}
        ),
        "lissajous": CurveSpec(
            "lissajous",
            {
                "amplitude": [0.08, 0.06, 0.05],
                "freq": [1.0, 2.0, 1.0],
                "phase": [1.5707963267948966, 0.0, 3.141592653589793],
                "cycles": 0.5,
            },
        ),
        "figure8": CurveSpec("figure8", {"amplitude": [0.08, 0.09, 0.04]}),
        "spline": CurveSpec("spline", {"n_points": 6, "scale": 0.08}, seed=7),
    }
    try:
        return presets[name]
    except KeyError:
        raise CurveSpecError(f"preset: unknown curve preset {name!r}") from None


def load_curve_spec(source: str) -> CurveSpec:
    """Resolve a CLI curve argument: ``preset:<name>`` or a JSON file path."""
    if source.startswith("preset:"):
        return preset_spec(source.split(":", 1)[1])
    with open(source) as fh:
        return CurveSpec.from_json(fh.read())
