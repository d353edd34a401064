"""
Minute-level utilization predictors.

A prediction is a clamped weighted sum of the last p observed utilizations. The lms kinds adapt the weights with a
normalized LMS step after every observed minute; lms_cusum additionally resets its history depth to 1 when the
prediction error jumps past an adaptive threshold, then grows it back one minute at a time.
"""
import logging
logger = logging.getLogger('sleepscale')

import math
from typing import NamedTuple

import numpy as np
import pandas as pd

from .errors import OutOfOrderUpdate, RangeError


KINDS = ('naive', 'moving_average', 'lms', 'lms_cusum', 'offline')


class PredictionRecord(NamedTuple):
    t: int
    predicted: float
    actual: float
    error: float
    reset: bool


class Predictor:
    """
    Single-owner predictor state.

    Parameters
    ----------
    kind : str
        naive (last minute), moving_average (uniform 1/hist weights, fixed), lms, lms_cusum, or offline (told the
        true value; a lower bound for the others).
    hist : int
        Maximum history depth.
    step : float
        Normalized LMS adaptation rate.
    eps : float
        Regularizer of the normalized step.
    threshold_k : float
        The change test fires when the error exceeds max(threshold_k * sqrt(ewma variance), floor).
    decay : float
        EWMA decay of the error statistics.
    floor : float
    retain_weights : bool
        On depth growth keep the adapted weights and append a zero weight instead of spreading sum(v) uniformly.
    """

    def __init__(self, kind='lms_cusum', hist=10, step=0.5, eps=1e-6, threshold_k=3.0, decay=0.9, floor=0.05,
                 retain_weights=False):
        if kind not in KINDS:
            raise RangeError(f'Unknown predictor "{kind}". It should be one of [{", ".join(KINDS)}]')
        if hist < 1:
            raise RangeError(f'History depth must be at least 1, got {hist}')
        if not 0 < decay < 1:
            raise RangeError(f'EWMA decay must be within (0, 1), got {decay}')

        self.kind = kind
        self.hist = int(hist)
        self.step = step
        self.eps = eps
        self.threshold_k = threshold_k
        self.decay = decay
        self.floor = floor
        self.retain_weights = retain_weights

        self.p = 1 if kind in ('naive', 'offline') else self.hist
        self.v = np.full(self.p, 1.0 / self.p)
        self.ewma_mean = 0.0
        self.ewma_var = 0.0
        self.t = 0
        self._pending = None

    @property
    def adaptive(self):
        return self.kind in ('lms', 'lms_cusum')

    def _inputs(self, history):
        """(rho(t-1), ..., rho(t-p)), padded with the oldest value when the history is shorter than p."""
        history = np.asarray(history, dtype=float)
        if not len(history):
            raise RangeError('A prediction needs at least one observed minute.')
        recent = history[::-1][:self.p]
        if len(recent) < self.p:
            recent = np.concatenate([recent, np.full(self.p - len(recent), recent[-1])])
        return recent

    def _weighted(self, x):
        raw = float(np.dot(self.v, x))
        value = min(max(raw, 0.0), 1.0)
        if value != raw:
            logger.debug(f'Prediction {raw:.4f} clamped to {value:.4f}')
        return value

    def predict(self, history, truth=None):
        """
        Predicts the next minute's utilization from the observed history (oldest first).

        Parameters
        ----------
        history : array-like
        truth : float, optional
            The actual value; required by the offline kind, ignored by the others.

        Returns
        -------
        float
            In [0, 1].
        """
        if self.kind == 'offline':
            if truth is None:
                raise RangeError('The offline predictor needs the true utilization.')
            x = self._inputs(history) if len(history) else np.zeros(1)
            value = min(max(float(truth), 0.0), 1.0)
        else:
            x = self._inputs(history)
            value = self._weighted(x)
        self.t = len(history)
        self._pending = (x, value)
        return value

    def forecast(self, history, steps):
        """Iterates the current weights on their own forecasts for `steps` minutes; the state is not changed."""
        history = list(np.asarray(history, dtype=float))
        values = []
        for _ in range(steps):
            value = self._weighted(self._inputs(history))
            values.append(value)
            history.append(value)
        return values

    def _change_detected(self, error):
        threshold = max(self.threshold_k * math.sqrt(self.ewma_var), self.floor)
        return error > threshold

    def _track_error(self, error):
        diff = error - self.ewma_mean
        self.ewma_mean += (1.0 - self.decay) * diff
        self.ewma_var = self.decay * (self.ewma_var + (1.0 - self.decay) * diff ** 2)

    def update(self, actual):
        """
        Feeds the true utilization of the minute last predicted.

        Returns
        -------
        PredictionRecord
        """
        if self._pending is None:
            raise OutOfOrderUpdate(f'Utilization for minute {self.t} was given without a prediction for it.')
        x, predicted = self._pending
        self._pending = None

        e = float(actual) - predicted
        error = abs(e)
        reset = False

        if self.adaptive:
            if self.kind == 'lms_cusum' and self._change_detected(error):
                reset = True
                logger.debug(f'Change detected at minute {self.t} (error {error:.4f}); history depth reset to 1')
                self.v = np.array([self.v.sum()])
                self.p = 1
            else:
                self.v = self.v + self.step * e * x / (np.dot(x, x) + self.eps)
                if self.kind == 'lms_cusum':
                    self._grow()
            self._track_error(error)

        return PredictionRecord(self.t, predicted, float(actual), error, reset)

    def _grow(self):
        p = min(self.p + 1, self.hist)
        if self.retain_weights:
            self.v = np.concatenate([self.v, np.zeros(p - self.p)])
        else:
            self.v = np.full(p, self.v.sum() / p)
        self.p = p


def run_series(kind, trace, **params):
    """
    Streams predict/update over a trace, starting at its second minute.

    Parameters
    ----------
    kind : str
    trace : UtilizationTrace
    **params
        Predictor parameters.

    Returns
    -------
    list of PredictionRecord
        t is the trace's minute index.
    """
    predictor = Predictor(kind, **params)
    rho = trace.rho
    records = []
    for t in range(1, len(rho)):
        predictor.predict(rho[:t], truth=rho[t])
        record = predictor.update(rho[t])
        records.append(record._replace(t=int(trace.minutes[t])))
    return records


def mean_absolute_error(records, warmup=0):
    errors = [r.error for r in records[warmup:]]
    return float(np.mean(errors)) if errors else math.nan


def records_frame(records):
    """Records as `minute,predicted,actual,error,reset` rows."""
    frame = pd.DataFrame(records, columns=PredictionRecord._fields)
    return frame.rename(columns={'t': 'minute'})
