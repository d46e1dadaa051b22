"""Learned when-to-assist trajectory tracking.

Closed-loop 30 Hz tracking simulator, a from-scratch LSTM classifier that
imitates an assistance demonstrator, weighted dataset-aggregation retraining,
and the evaluation toolkit around them.
"""

TICK_RATE = 30
TICK_DT = 1.0 / TICK_RATE

__version__ = "0.1.0"
