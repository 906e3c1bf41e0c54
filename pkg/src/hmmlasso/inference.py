"""State decoding, multi-step forecasting, and forecast scoring.

Forecasts propagate the filtered state distribution at the end of the
training sequence through the transition matrix, without conditioning on
any test-period outcome: pi_hat_h = sum_i (phi Gamma^h)_i * sigmoid(eta_i).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from ._kernels import backward_scaled, forward_scaled, viterbi_path
from .model import ModelError, emission_probs, stationary_distribution


@dataclass(frozen=True)
class StateDecoding:
    """Viterbi path (1-based state labels) and smoothed probabilities."""

    player_id: str
    viterbi: np.ndarray
    smoothed: np.ndarray


@dataclass(frozen=True)
class ForecastRecord:
    horizon: int
    prob: float
    outcome: int

    def __post_init__(self):
        if not 0.0 < self.prob < 1.0:
            raise ValueError(f"predicted probability {self.prob} outside (0,1)")
        if self.outcome not in (0, 1):
            raise ValueError(f"outcome must be 0 or 1, got {self.outcome}")
        if self.horizon < 1:
            raise ValueError("horizon is 1-based")


def _forward(seq, params):
    delta = stationary_distribution(params.tpm)
    p = emission_probs(seq, params)
    ahat, c = forward_scaled(delta, params.tpm, p)
    if np.any(c <= 0.0):
        raise ModelError("sequence has zero likelihood under these parameters")
    return delta, p, ahat, c


def decode(seq, params):
    """Most-likely state path and per-time smoothed state probabilities.

    Viterbi runs in log space with ties broken toward the lower state
    index; smoothing multiplies the scaled forward and backward variables.
    """
    delta, p, ahat, c = _forward(seq, params)
    with np.errstate(divide="ignore"):
        path = viterbi_path(np.log(delta), np.log(params.tpm), np.log(p))
    smoothed = ahat * backward_scaled(params.tpm, p, c)
    return StateDecoding(player_id=seq.player_id, viterbi=path + 1,
                         smoothed=smoothed)


def filtered_last(seq, params):
    """Filtered state distribution after the last training observation."""
    return _forward(seq, params)[2][-1]


def forecast(seq_train, covariates_test, params):
    """Predicted success probabilities for each test row, in order.

    The filtered distribution is pushed h steps through the transition
    matrix and mixed with the state-wise logistic probabilities.
    """
    return forecast_from(filtered_last(seq_train, params),
                         covariates_test, params)


def forecast_from(phi, covariates_test, params):
    """Forecast given an already-computed filtered state distribution."""
    x = np.asarray(covariates_test, dtype=np.float64)
    if x.ndim != 2:
        raise ModelError("test covariates must be a 2-d array")
    if x.shape[0] < 1:
        raise ModelError("need at least one forecast row")
    if x.shape[1] != params.slopes.size:
        raise ModelError(
            f"test covariates have {x.shape[1]} columns, model has {params.slopes.size}"
        )
    phi = np.asarray(phi, dtype=np.float64)
    if phi.shape != (params.intercepts.size,):
        raise ModelError("filtered distribution has the wrong length")
    state_probs = expit(params.intercepts[None, :] + (x @ params.slopes)[:, None])
    out = np.empty(x.shape[0])
    cur = phi
    for h in range(x.shape[0]):
        cur = cur @ params.tpm
        out[h] = cur @ state_probs[h]
    return out


def make_records(probs, outcomes):
    """Pair predicted probabilities with realized outcomes, horizons 1..H."""
    probs = np.asarray(probs, dtype=float)
    outcomes = np.asarray(outcomes)
    if probs.shape != outcomes.shape:
        raise ValueError("probs and outcomes must have equal length")
    return [ForecastRecord(horizon=h + 1, prob=float(p), outcome=int(y))
            for h, (p, y) in enumerate(zip(probs, outcomes))]


def brier_score(records):
    """Mean squared distance between forecast and outcome; lower is better."""
    if len(records) == 0:
        raise ValueError("no forecast records")
    return float(np.mean([(r.prob - r.outcome) ** 2 for r in records]))


def avg_pred_prob(records):
    """Mean probability assigned to the realized outcome; higher is better."""
    if len(records) == 0:
        raise ValueError("no forecast records")
    return float(np.mean([r.prob if r.outcome == 1 else 1.0 - r.prob
                          for r in records]))
