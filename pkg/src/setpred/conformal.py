"""Inductive conformal prediction baseline.

Nonconformity of a labeled example is 1 - P(y | x). A held-out
calibration set yields a sorted score table; at prediction time each
candidate class y receives the smoothed p-value

    p(y) = (#{alpha_i >= 1 - P(y | x)} + 1) / (n + 1)

and the predicted set keeps the classes with p(y) > epsilon. The +1
smoothing gives the standard finite-sample validity guarantee under
exchangeability. Sets may be empty for large epsilon; they are
reported as-is (size 0, recall 0) rather than patched.

The ``model`` argument of both operations is either a LinearModel or
any callable mapping an (n, D) matrix to an (n, K) row-stochastic
matrix, which lets the true generating posterior be plugged in for
validity experiments.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import sparse

from .data import Dataset, SparseVector
from .errors import EmptyCalibration, InvalidParams
from .linear import LinearModel


@dataclass(frozen=True)
class CalibrationTable:
    """Sorted (ascending) nonconformity scores of the calibration set."""

    scores: np.ndarray

    def __post_init__(self):
        scores = np.sort(np.asarray(self.scores, dtype=np.float64))
        if scores.size == 0:
            raise EmptyCalibration("calibration table is empty")
        object.__setattr__(self, "scores", scores)

    @property
    def n(self) -> int:
        return self.scores.size


def _proba_matrix(model, X) -> np.ndarray:
    if isinstance(model, LinearModel):
        return model.predict_proba_batch(X)
    return np.asarray(model(X), dtype=np.float64)


def icp_calibrate(model, calib_data: Dataset) -> CalibrationTable:
    """Score a held-out calibration set (disjoint from training data)."""
    if calib_data.n_examples == 0:
        raise EmptyCalibration("no calibration examples")
    probs = _proba_matrix(model, calib_data.X)
    hit = probs[np.arange(calib_data.n_examples), calib_data.y]
    return CalibrationTable(1.0 - hit)


def p_values(model, table: CalibrationTable, X) -> np.ndarray:
    """Smoothed conformal p-value of every class for every row of X."""
    probs = _proba_matrix(model, X)
    nonconf = 1.0 - probs
    geq = table.n - np.searchsorted(table.scores, nonconf, side="left")
    return (geq + 1.0) / (table.n + 1.0)


def icp_predict(model, table: CalibrationTable, x, epsilon: float) -> np.ndarray:
    """Classes whose p-value exceeds epsilon; possibly empty."""
    if isinstance(x, SparseVector):
        if not isinstance(model, LinearModel):
            raise InvalidParams("sparse single-vector input needs a LinearModel")
        x = x.to_dense(model.n_features)
    if not sparse.issparse(x):
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    return icp_predict_batch(model, table, x, epsilon)[0]


def icp_predict_batch(model, table: CalibrationTable, X, epsilon: float) -> list[np.ndarray]:
    pv = p_values(model, table, X)
    return [np.flatnonzero(row > epsilon) for row in pv]
