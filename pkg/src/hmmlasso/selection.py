"""Tuning-parameter grid, information criteria, and path-based selection.

The regularization path is fitted over a descending log-spaced lambda grid
with warm starts, one relaxed refit per grid point, and AIC/BIC computed
from the unpenalized log-likelihood. Effective degrees of freedom count the
active slopes plus the always-estimated intercepts and transition
parameters; that constant offset leaves selection unchanged but makes the
absolute criterion values comparable across model sizes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .fit import FitConfig, FitError, FitResult, fit, relaxed_refit
from .model import ModelError, ModelSpec, SequenceSet
from .penalty import PenaltyConfig

SCHEMES = ("MLE", "LASSO-AIC", "LASSO-BIC", "relaxed-AIC", "relaxed-BIC")


class SelectionError(RuntimeError):
    """No usable grid point for the requested scheme."""


@dataclass(frozen=True)
class LambdaGrid:
    """Strictly descending, non-negative tuning parameters.

    make_grid produces the log-spaced version; a degenerate single-point
    grid (for example (0.0,) to reduce the path to an unpenalized fit) is
    also accepted here.
    """

    values: tuple

    def __post_init__(self):
        vals = tuple(float(v) for v in self.values)
        object.__setattr__(self, "values", vals)
        if len(vals) == 0:
            raise ValueError("empty grid")
        if any(v < 0 for v in vals):
            raise ValueError("lambda values must be non-negative")
        if any(a <= b for a, b in zip(vals, vals[1:])):
            raise ValueError("lambda values must be strictly descending")

    def __len__(self):
        return len(self.values)


def make_grid(length=50, lam_max=5000.0, lam_min=1e-4):
    """Geometric grid of `length` values from lam_max down to lam_min."""
    if length < 2:
        raise ValueError("grid length must be >= 2")
    if not lam_max > lam_min > 0:
        raise ValueError("need lam_max > lam_min > 0")
    values = np.geomspace(lam_max, lam_min, int(length))
    values[0], values[-1] = lam_max, lam_min
    return LambdaGrid(tuple(values))


def information_criteria(loglik, df, n_obs):
    """(AIC, BIC) from an unpenalized log-likelihood and a parameter count."""
    if not n_obs >= 1:
        raise ValueError("n_obs must be >= 1")
    if df < 0:
        raise ValueError("df must be >= 0")
    aic = -2.0 * loglik + 2.0 * df
    bic = -2.0 * loglik + math.log(n_obs) * df
    return aic, bic


@dataclass(frozen=True)
class PathPoint:
    """One grid point: the penalized fit, its relaxed refit, and criteria.

    df counts |active_set| + N intercepts + N(N-1) transition parameters;
    the relaxed stage estimates the same number of parameters, so its
    criteria reuse df with the refitted log-likelihood. A stage that raised
    or failed the gradient tolerance is unusable for selection.
    """

    lam: float
    lasso: Optional[FitResult]
    relaxed: Optional[FitResult]
    df: int
    aic: float
    bic: float
    relaxed_aic: float
    relaxed_bic: float

    @property
    def lasso_ok(self):
        return self.lasso is not None and self.lasso.converged

    @property
    def relaxed_ok(self):
        return self.lasso_ok and self.relaxed is not None and self.relaxed.converged


@dataclass(frozen=True)
class PathResult:
    points: tuple
    n_obs: int


def _free_params(spec):
    n = spec.n_states
    return n + n * (n - 1)


def fit_path(data, spec, grid, config=FitConfig(), penalty_c=1e-5,
             penalty_mode="smooth"):
    """Fit the LASSO stage at every grid value, warm-starting downward,
    with a relaxed refit per point.

    A point whose optimization raises is recorded with empty stages and NaN
    criteria rather than aborting the path; selection skips such points.
    """
    if len(grid) == 0:
        raise ValueError("empty grid")
    points = []
    warm = None
    for lam in grid.values:
        pen = PenaltyConfig(lam=lam, c=penalty_c, mode=penalty_mode)
        try:
            res = fit(data, spec, pen, config, init=warm)
            warm = res.params
        except (FitError, ModelError):
            points.append(PathPoint(lam=lam, lasso=None, relaxed=None,
                                    df=_free_params(spec), aic=math.nan,
                                    bic=math.nan, relaxed_aic=math.nan,
                                    relaxed_bic=math.nan))
            continue
        df = int(res.active_set.size) + _free_params(spec)
        aic, bic = information_criteria(res.loglik, df, data.n_obs)
        try:
            rel = relaxed_refit(data, spec, res, config)
            raic, rbic = information_criteria(rel.loglik, df, data.n_obs)
        except (FitError, ModelError):
            rel, raic, rbic = None, math.nan, math.nan
        points.append(PathPoint(lam=lam, lasso=res, relaxed=rel, df=df,
                                aic=aic, bic=bic, relaxed_aic=raic,
                                relaxed_bic=rbic))
    return PathResult(points=tuple(points), n_obs=data.n_obs)


@dataclass(frozen=True)
class Selection:
    scheme: str
    lam: float
    index: int
    result: FitResult
    criterion: float


def select(path, scheme):
    """Pick the usable grid point minimizing the scheme's criterion.

    Relaxed schemes rank by the refit's criterion and return the refit;
    ties go to the larger lambda. The MLE scheme requires a lambda=0 point
    (a single-point path counts as trivially selected for any scheme).
    """
    if scheme not in SCHEMES:
        raise SelectionError(f"unknown scheme {scheme!r}, expected one of {SCHEMES}")
    order = sorted(range(len(path.points)),
                   key=lambda i: -path.points[i].lam)

    relaxed = scheme.startswith("relaxed")

    def usable(pt):
        return pt.relaxed_ok if relaxed else pt.lasso_ok

    candidates = [i for i in order if usable(path.points[i])]
    if not candidates:
        raise SelectionError(f"no converged grid points for scheme {scheme}")

    if scheme == "MLE":
        if len(path.points) == 1:
            i = candidates[0]
            return Selection(scheme, path.points[i].lam, i,
                             path.points[i].lasso, math.nan)
        zero = [i for i in candidates if path.points[i].lam == 0.0]
        if not zero:
            raise SelectionError("MLE scheme needs a lambda = 0 grid point")
        i = zero[0]
        return Selection(scheme, 0.0, i, path.points[i].lasso, math.nan)

    def criterion(pt):
        if scheme == "LASSO-AIC":
            return pt.aic
        if scheme == "LASSO-BIC":
            return pt.bic
        if scheme == "relaxed-AIC":
            return pt.relaxed_aic
        return pt.relaxed_bic

    best_i = candidates[0]
    for i in candidates[1:]:
        if criterion(path.points[i]) < criterion(path.points[best_i]):
            best_i = i
    pt = path.points[best_i]
    result = pt.relaxed if relaxed else pt.lasso
    return Selection(scheme, pt.lam, best_i, result, float(criterion(pt)))
