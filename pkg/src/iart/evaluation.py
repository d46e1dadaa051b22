"""Session metrics: classification rates, time-on, switch statistics, and the
paired / Welch t-tests used to compare assistance behaviors.

p-values use the exact t-distribution CDF through the regularized incomplete
beta function rather than a normal approximation; the reference comparisons
run at single-digit degrees of freedom where the approximation is poor.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field, asdict
from typing import Optional, Sequence

import numpy as np
from scipy.special import betainc

from .features import WINDOW
from .session import SessionLog

REPORT_SCHEMA = "report/1"


@dataclass
class TTestResult:
    t: float
    df: float
    p: float
    degenerate: bool = False


@dataclass
class MetricsReport:
    accuracy: Optional[float]
    tnr: Optional[float]  # assist-off recall
    tpr: Optional[float]  # assist-on recall
    n_ticks: int
    percent_time_on: dict = field(default_factory=dict)
    switch_counts: dict = field(default_factory=dict)
    transitions: dict = field(default_factory=dict)  # source -> list of (e, v)

    def to_dict(self) -> dict:
        return {"schema": REPORT_SCHEMA, **asdict(self)}


def classification_metrics(predicted: Sequence[int], truth: Sequence[int]) -> MetricsReport:
    """Accuracy plus per-class recalls.  A class absent from the truth is
    reported as None (not applicable) rather than zero."""
    predicted = np.asarray(predicted, dtype=int)
    truth = np.asarray(truth, dtype=int)
    if predicted.shape != truth.shape:
        raise ValueError(f"length mismatch: {predicted.shape} vs {truth.shape}")
    n = len(truth)
    if n == 0:
        return MetricsReport(accuracy=None, tnr=None, tpr=None, n_ticks=0)
    matches = predicted == truth
    accuracy = float(matches.mean())
    neg = truth == 0
    pos = truth == 1
    tnr = float(matches[neg].mean()) if neg.any() else None
    tpr = float(matches[pos].mean()) if pos.any() else None
    return MetricsReport(accuracy=accuracy, tnr=tnr, tpr=tpr, n_ticks=n)


def percent_time_on(actions: Sequence[int]) -> float:
    actions = np.asarray(actions, dtype=float)
    if len(actions) == 0:
        raise ValueError("empty action sequence")
    return float(actions.mean())


def _two_sided_p(t: float, df: float) -> float:
    """P(|T| >= t) for Student's t with df degrees of freedom."""
    if df <= 0:
        return float("nan")
    if math.isinf(t):
        return 0.0
    x = df / (df + t * t)
    return float(betainc(df / 2.0, 0.5, x))


def paired_t_test(a: Sequence[float], b: Sequence[float]) -> TTestResult:
    """Two-sided paired-difference t-test with df = n - 1."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError("paired test requires equal-length vectors")
    n = len(a)
    if n < 2:
        raise ValueError("paired test requires at least 2 pairs")
    d = a - b
    sd = float(d.std(ddof=1))
    mean = float(d.mean())
    if sd == 0.0:
        t = 0.0 if mean == 0.0 else math.copysign(math.inf, mean)
        return TTestResult(t=t, df=n - 1, p=1.0 if mean == 0.0 else 0.0, degenerate=True)
    t = mean / (sd / math.sqrt(n))
    return TTestResult(t=t, df=n - 1, p=_two_sided_p(t, n - 1))


def welch_t_test(a: Sequence[float], b: Sequence[float]) -> TTestResult:
    """Two-sided Welch's t-test with Welch-Satterthwaite degrees of freedom."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if len(a) < 2 or len(b) < 2:
        raise ValueError("Welch test requires at least 2 samples per group")
    va = float(a.var(ddof=1))
    vb = float(b.var(ddof=1))
    na, nb = len(a), len(b)
    se2 = va / na + vb / nb
    mean_diff = float(a.mean() - b.mean())
    if se2 == 0.0:
        t = 0.0 if mean_diff == 0.0 else math.copysign(math.inf, mean_diff)
        return TTestResult(t=t, df=na + nb - 2, p=1.0 if mean_diff == 0.0 else 0.0, degenerate=True)
    t = mean_diff / math.sqrt(se2)
    df = se2**2 / ((va / na) ** 2 / (na - 1) + (vb / nb) ** 2 / (nb - 1))
    return TTestResult(t=t, df=df, p=_two_sided_p(t, df))


def switch_transitions(actions: Sequence[int], states) -> tuple[list, int]:
    """(error, speed) sampled at every off-to-on tick, plus the total count of
    switches in either direction."""
    actions = np.asarray(actions, dtype=int)
    if len(actions) != len(states):
        raise ValueError("actions and states must align")
    changes = np.flatnonzero(np.diff(actions) != 0) + 1
    on_ticks = [int(i) for i in changes if actions[i] == 1]
    transitions = [(float(states[i].e), float(states[i].v)) for i in on_ticks]
    return transitions, int(len(changes))


def session_report(log: SessionLog, truth_source: str = "shadow") -> MetricsReport:
    """Full report for a recorded session.

    ``truth_source='shadow'`` scores the applied actions against the logged
    shadow ground truth; ``'self'`` skips classification and reports only the
    behavioral statistics.  Classification is restricted to post-warm-up ticks.
    """
    actions = log.actions()
    states = [tk.state for tk in log.ticks]
    start = WINDOW - 1

    if truth_source == "shadow":
        shadow = log.shadow_actions()
        if np.any(shadow < 0):
            raise ValueError("log carries no shadow ground truth")
        report = classification_metrics(actions[start:], shadow[start:])
    elif truth_source == "self":
        report = MetricsReport(accuracy=None, tnr=None, tpr=None, n_ticks=len(actions))
    else:
        raise ValueError(f"unknown truth_source {truth_source!r}")

    report.percent_time_on["applied"] = percent_time_on(actions)
    trans, switches = switch_transitions(actions, states)
    report.transitions["applied"] = trans
    report.switch_counts["applied"] = switches
    if truth_source == "shadow":
        shadow = log.shadow_actions()
        report.percent_time_on["shadow"] = percent_time_on(shadow)
        s_trans, s_switches = switch_transitions(shadow, states)
        report.transitions["shadow"] = s_trans
        report.switch_counts["shadow"] = s_switches
    return report


def write_report(report: MetricsReport, path: str) -> None:
    with open(path, "w") as fh:
        json.dump(report.to_dict(), fh, indent=2)


def boxplot_stats(values: Sequence[float]) -> dict:
    """Quartiles, Tukey 1.5*IQR whiskers, and outliers for one distribution."""
    values = np.sort(np.asarray(values, dtype=float))
    if len(values) == 0:
        raise ValueError("empty distribution")
    q1, med, q3 = np.percentile(values, [25, 50, 75])
    iqr = q3 - q1
    lo_fence = q1 - 1.5 * iqr
    hi_fence = q3 + 1.5 * iqr
    inside = values[(values >= lo_fence) & (values <= hi_fence)]
    return {
        "n": int(len(values)),
        "q1": float(q1),
        "median": float(med),
        "q3": float(q3),
        "whisker_low": float(inside.min()),
        "whisker_high": float(inside.max()),
        "outliers": [float(v) for v in values[(values < lo_fence) | (values > hi_fence)]],
    }


def write_boxplot_csv(path: str, distributions: dict) -> None:
    """One row per labeled distribution; data file for external plotting."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["label", "n", "q1", "median", "q3", "whisker_low", "whisker_high", "outliers"])
        for label, values in distributions.items():
            st = boxplot_stats(values)
            writer.writerow(
                [label, st["n"], st["q1"], st["median"], st["q3"],
                 st["whisker_low"], st["whisker_high"], ";".join(str(v) for v in st["outliers"])]
            )
