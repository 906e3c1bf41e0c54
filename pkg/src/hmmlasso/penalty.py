"""Smooth L1 penalty approximation and the penalized log-likelihood.

The L1 norm |b| is replaced by a smooth surrogate so a gradient-based
optimizer can be used. Two surrogates are supported:

* ``smooth``  -- sqrt(b^2 + c), symmetric and everywhere differentiable
  (the default; within sqrt(c) of |b|).
* ``literal`` -- sqrt((b + c)^2) = |b + c|, kept for fidelity testing; it is
  asymmetric and still non-differentiable at b = -c.

Only slope coefficients flagged in the model spec's penalized_mask are
penalized; intercepts and transition parameters never are.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import total_loglik

MODES = ("smooth", "literal")


@dataclass(frozen=True)
class PenaltyConfig:
    """Tuning parameter lam >= 0, smoothing constant c > 0, surrogate mode."""

    lam: float
    c: float = 1e-5
    mode: str = "smooth"

    def __post_init__(self):
        if self.lam < 0:
            raise ValueError(f"lam must be >= 0, got {self.lam}")
        if self.c <= 0:
            raise ValueError(f"c must be > 0, got {self.c}")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")


def l1_smooth(beta, config):
    """Smooth surrogate for |beta| (vectorized over beta)."""
    beta = np.asarray(beta, dtype=float)
    if config.mode == "smooth":
        out = np.sqrt(beta * beta + config.c)
    else:
        out = np.abs(beta + config.c)
    return float(out) if out.ndim == 0 else out


def l1_smooth_grad(beta, config):
    """Derivative of l1_smooth with respect to beta."""
    beta = np.asarray(beta, dtype=float)
    if config.mode == "smooth":
        out = beta / np.sqrt(beta * beta + config.c)
    else:
        out = np.sign(beta + config.c)
    return float(out) if out.ndim == 0 else out


def penalty_term(slopes, config, spec):
    """lam * sum of the surrogate over penalized slopes; exactly 0 when lam = 0."""
    if config.lam == 0.0:
        return 0.0
    masked = np.asarray(slopes, dtype=float)[spec.penalized_mask]
    return float(config.lam * np.sum(l1_smooth(masked, config)))


def penalized_loglik(data, params, config, spec):
    """total_loglik minus the penalty term of the masked slopes."""
    return total_loglik(data, params) - penalty_term(params.slopes, config, spec)
