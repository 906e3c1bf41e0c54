"""Penalized maximum-likelihood fitting in working parameters.

The optimizer is L-BFGS-B on the unconstrained working vector (transition
parameters and intercepts box-bounded at +/-25 to keep degenerate fits
finite, slopes free). The gradient of the log-likelihood is computed
analytically from one forward-backward pass per sequence:

* emission part: smoothed state probabilities times logistic residuals,
* transition part: summed pairwise transition posteriors,
* initial-distribution part: implicit differentiation of the stationary
  vector through the linear system that defines it.

The penalty gradient is added on the slope block. A finite-difference
gradient mode is available for cross-checking.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize
from scipy.special import expit

from ._kernels import backward_scaled, forward_scaled
from .model import ModelError, ModelSpec, Params, SequenceSet, stationary_distribution
from .penalty import PenaltyConfig, l1_smooth_grad, penalty_term

logger = logging.getLogger(__name__)

BAD_OBJECTIVE = 1e30
# central differences: truncation grows as step^2, roundoff shrinks as
# eps*|objective|/step; for log-likelihoods of order 10..1e4 the balance
# point sits near 1e-5, and 1e-7 lets roundoff swamp small coordinates
FD_STEP = 1e-5


class FitError(RuntimeError):
    """Optimization could not produce any finite-objective result."""


@dataclass(frozen=True)
class FitConfig:
    """Optimizer settings; all tolerances strictly positive."""

    max_iterations: int = 2000
    gradient_mode: str = "analytic"
    convergence_tol: float = 1e-6
    n_random_starts: int = 5
    nonzero_threshold: float = 1e-3
    seed: int = 0
    param_cap: float = 25.0

    def __post_init__(self):
        if self.max_iterations < 1 or self.n_random_starts < 1:
            raise ValueError("max_iterations and n_random_starts must be >= 1")
        if min(self.convergence_tol, self.nonzero_threshold, self.param_cap) <= 0:
            raise ValueError("tolerances must be positive")
        if self.gradient_mode not in ("analytic", "central-finite-difference"):
            raise ValueError(f"unknown gradient_mode {self.gradient_mode!r}")


@dataclass(frozen=True)
class FitResult:
    """One optimum: canonicalized parameters plus fit diagnostics.

    active_set holds the 0-based indices of slopes whose magnitude exceeds
    the non-zero threshold; loglik is the unpenalized log-likelihood at the
    optimum. at_boundary flags working parameters pinned at the +/-cap box.
    """

    lam: float
    params: Params
    loglik: float
    penalized_loglik: float
    converged: bool
    active_set: np.ndarray
    n_starts_agreeing: int
    at_boundary: bool
    grad_max_norm: float


class WorkingObjective:
    """Negative penalized log-likelihood and gradient on the working vector."""

    def __init__(self, data, spec, penalty):
        if len(data) == 0:
            raise ModelError("empty SequenceSet")
        if data.n_covariates != spec.n_covariates:
            raise ModelError(
                f"data has {data.n_covariates} covariates, spec expects {spec.n_covariates}"
            )
        self.spec = spec
        self.penalty = penalty
        self._seqs = [(s.outcomes.astype(np.float64), s.covariates) for s in data]
        # upper bound on the log-likelihood slope curvature (logistic variance <= 1/4)
        self._slope_curv_bound = 0.25 * sum((x * x).sum(axis=0) for _, x in self._seqs)

    def _emissions(self, y, x, intercepts, slopes):
        eta = intercepts[None, :] + (x @ slopes)[:, None]
        pi = expit(eta)
        p = np.where(y[:, None] == 1.0, pi, 1.0 - pi)
        return pi, p

    def value(self, w):
        """Objective only (forward passes, no gradient)."""
        params = Params.from_working(w, self.spec)
        delta = stationary_distribution(params.tpm)
        ll = 0.0
        for y, x in self._seqs:
            _, p = self._emissions(y, x, params.intercepts, params.slopes)
            _, c = forward_scaled(delta, params.tpm, p)
            if np.any(c <= 0.0):
                return BAD_OBJECTIVE
            ll += np.log(c).sum()
        return -ll + penalty_term(params.slopes, self.penalty, self.spec)

    def value_and_grad(self, w):
        """Objective and its analytic gradient, one forward-backward pass."""
        spec = self.spec
        n, k = spec.n_states, spec.n_covariates
        params = Params.from_working(w, spec)
        tpm, intercepts, slopes = params.tpm, params.intercepts, params.slopes
        delta = stationary_distribution(tpm)

        ll = 0.0
        g_intercepts = np.zeros(n)
        g_slopes = np.zeros(k)
        v_pair = np.zeros((n, n))
        r_init = np.zeros(n)
        for y, x in self._seqs:
            pi, p = self._emissions(y, x, intercepts, slopes)
            ahat, c = forward_scaled(delta, tpm, p)
            if np.any(c <= 0.0):
                return BAD_OBJECTIVE, np.zeros_like(w)
            ll += np.log(c).sum()
            bhat = backward_scaled(tpm, p, c)
            u = ahat * bhat
            resid = u * (y[:, None] - pi)
            g_intercepts += resid.sum(axis=0)
            g_slopes += x.T @ resid.sum(axis=1)
            if len(y) > 1:
                wgt = p * bhat / c[:, None]
                v_pair += tpm * (ahat[:-1].T @ wgt[1:])
            r_init += p[0] * bhat[0] / c[0]

        grad = np.empty_like(w)
        pos = n * (n - 1)
        if n > 1:
            g_trans = v_pair - tpm * v_pair.sum(axis=1, keepdims=True)
            m = np.eye(n) - tpm + np.ones((n, n))
            q = np.linalg.solve(m, r_init)
            g_init = delta[:, None] * tpm * (q[None, :] - (tpm @ q)[:, None])
            g_tpm = g_trans + g_init
            off = ~np.eye(n, dtype=bool)
            grad[:pos] = -g_tpm[off]
        grad[pos:pos + n] = -g_intercepts
        grad[pos + n:] = -g_slopes
        if self.penalty.lam > 0.0:
            gpen = np.zeros(k)
            mask = spec.penalized_mask
            gpen[mask] = self.penalty.lam * l1_smooth_grad(slopes[mask], self.penalty)
            grad[pos + n:] += gpen
        return -ll + penalty_term(slopes, self.penalty, spec), grad

    def fd_grad(self, w, step=FD_STEP):
        """Central finite-difference gradient of value()."""
        g = np.empty_like(w)
        for i in range(w.size):
            wp, wm = w.copy(), w.copy()
            wp[i] += step
            wm[i] -= step
            g[i] = (self.value(wp) - self.value(wm)) / (2.0 * step)
        return g


def _bounds(spec, cap):
    n = spec.n_states
    fixed = n * (n - 1) + n
    return [(-cap, cap)] * fixed + [(None, None)] * spec.n_covariates


def _projected_grad(w, g, bounds):
    pg = np.array(g, dtype=float)
    for i, (lo, hi) in enumerate(bounds):
        if lo is not None and w[i] <= lo + 1e-12:
            pg[i] = min(g[i], 0.0)
        elif hi is not None and w[i] >= hi - 1e-12:
            pg[i] = max(g[i], 0.0)
    return pg


def _random_starts(data, spec, config):
    """Perturbed starts: intercepts around the empirical logit, persistent
    transition matrices with diagonals in [0.7, 0.95], slopes at zero."""
    rng = np.random.default_rng(config.seed)
    n, k = spec.n_states, spec.n_covariates
    total = sum(s.outcomes.sum() for s in data)
    rate = np.clip(total / data.n_obs, 1e-3, 1.0 - 1e-3)
    base = np.log(rate / (1.0 - rate))
    starts = []
    for _ in range(config.n_random_starts):
        intercepts = base + rng.uniform(-1.0, 1.0, size=n)
        w_tpm = []
        for _ in range(n):
            diag = rng.uniform(0.7, 0.95)
            off = (1.0 - diag) / max(n - 1, 1)
            w_tpm.extend([np.log(off / diag)] * (n - 1))
        starts.append(np.concatenate([w_tpm, intercepts, np.zeros(k)]))
    return starts


def _minimize_one(obj, w0, config, bounds):
    if config.gradient_mode == "analytic":
        fun, jac = obj.value_and_grad, True
    else:
        fun, jac = obj.value, obj.fd_grad
    options = dict(maxiter=config.max_iterations,
                   maxfun=5 * config.max_iterations,
                   ftol=1e-15, gtol=0.5 * config.convergence_tol)
    res = minimize(fun, w0, jac=jac, method="L-BFGS-B", bounds=bounds,
                   options=options)
    best_x = res.x
    # L-BFGS-B stalls before the gradient is flat whenever the remaining
    # objective decrease is below the float resolution of f: stiff penalty
    # curvature at large lambda, or near-flat state-separation directions.
    # Newton-type polish steps on the analytic gradient still converge
    # there, so alternate them with Hessian-memory restarts.
    for _ in range(3):
        best_x = _polish(obj, best_x, bounds, config)
        _, g = obj.value_and_grad(best_x)
        if np.max(np.abs(_projected_grad(best_x, g, bounds))) < config.convergence_tol:
            break
        res = minimize(fun, best_x, jac=jac, method="L-BFGS-B", bounds=bounds,
                       options=options)
        best_x = res.x
    return best_x, obj.value_and_grad(best_x)[0]


def _polish(obj, x, bounds, config):
    nb = obj.spec.n_states ** 2
    pos = nb  # slopes start right after the transition/intercept block
    newton_on_slopes = not (obj.penalty.lam > 0.0 and obj.penalty.mode != "smooth")
    for _ in range(4):
        x = _slope_polish(obj, x, bounds, config)
        x, snapped = _bound_snap(obj, x, bounds, config)
        _, g = obj.value_and_grad(x)
        pg = _projected_grad(x, g, bounds)
        if np.max(np.abs(pg)) < config.convergence_tol:
            break
        improved = snapped
        block = np.flatnonzero(pg[:nb] != 0.0)
        if block.size:
            x, moved = _block_newton(obj, x, bounds, config, block)
            improved |= moved
        if newton_on_slopes:
            idx = _stalled_slopes(obj, x, bounds, config, pos)
            if idx.size:
                x, moved = _block_newton(obj, x, bounds, config, idx)
                improved |= moved
        if not improved:
            break
    return x


def _bound_snap(obj, x, bounds, config, reach=3.0):
    """Pin coordinates that are escaping toward a box bound.

    A coordinate whose optimum is the bound itself (degenerate transition
    probabilities, a state emptying out) approaches it along an
    exponentially flattening gradient, too slowly for any finite step
    count, and finite-difference curvature there is pure noise. Within
    reach of the box and pushing outward, the monotone tail means the
    constrained optimum is the bound, so jump straight to it; the
    projected gradient then vanishes. Kept only if the global projected
    gradient shrinks and the objective does not measurably rise.
    """
    f0, g = obj.value_and_grad(x)
    pg = _projected_grad(x, g, bounds)
    pg_norm = np.max(np.abs(pg))
    if pg_norm < config.convergence_tol:
        return x, False
    trial = x.copy()
    moved = False
    for i, (lo, hi) in enumerate(bounds):
        if np.abs(pg[i]) > 10.0 * config.convergence_tol:
            continue  # still genuinely moving, not a flat tail
        if lo is not None and g[i] > 0.0 and 0.0 < x[i] - lo <= reach:
            trial[i] = lo
            moved = True
        elif hi is not None and g[i] < 0.0 and 0.0 < hi - x[i] <= reach:
            trial[i] = hi
            moved = True
    if not moved:
        return x, False
    f_t, g_t = obj.value_and_grad(trial)
    if f_t <= f0 + 1e-9 * max(1.0, abs(f0)) and \
            np.max(np.abs(_projected_grad(trial, g_t, bounds))) < pg_norm:
        return trial, True
    return x, False


def _stalled_slopes(obj, x, bounds, config, pos, cap=40):
    """Slope coordinates still violating the tolerance, worst first."""
    _, g = obj.value_and_grad(x)
    pg = _projected_grad(x, g, bounds)[pos:]
    bad = np.flatnonzero(np.abs(pg) >= 0.25 * config.convergence_tol)
    if bad.size > cap:
        bad = bad[np.argsort(-np.abs(pg[bad]), kind="stable")[:cap]]
        bad.sort()
    return pos + bad


def _block_newton(obj, x, bounds, config, idx):
    """One damped Newton step on the working coordinates in idx.

    The block Hessian comes from central differences of the analytic
    gradient, so the step stays accurate where the objective itself is
    flat to machine precision. Accepted only if it shrinks the projected
    gradient max-norm; backtracks, then gives up, otherwise.
    """
    m = idx.size
    f0, g = obj.value_and_grad(x)
    pg = _projected_grad(x, g, bounds)
    pg_norm = np.max(np.abs(pg))
    if np.max(np.abs(pg[idx])) < 0.25 * config.convergence_tol:
        return x, False
    hess = np.empty((m, m))
    for j, col in enumerate(idx):
        # wide enough that differencing the gradient beats its absolute
        # noise even where the curvature has decayed to ~1e-6
        d = 1e-4 * max(1.0, abs(x[col]))
        xp, xm = x.copy(), x.copy()
        xp[col] += d
        xm[col] -= d
        hess[:, j] = (obj.value_and_grad(xp)[1][idx]
                      - obj.value_and_grad(xm)[1][idx]) / (2.0 * d)
    hess = 0.5 * (hess + hess.T)
    # Jacobi scaling: curvatures in one block can span 1e-6..1e2 (decaying
    # transition directions next to dense emission directions), and without
    # it the finite-difference noise of the stiff rows drowns the soft ones
    diag = np.abs(np.diag(hess))
    scale = 1.0 / np.sqrt(np.maximum(diag, 1e-12 * max(1.0, diag.max())))
    scaled = hess * scale[None, :] * scale[:, None]
    # truncated eigen-solve: step only along directions with solid positive
    # curvature, so flat valleys (unidentified transition combinations) and
    # noise directions contribute nothing instead of a runaway component
    try:
        eigval, eigvec = np.linalg.eigh(scaled)
    except np.linalg.LinAlgError:
        return x, False
    cut = 1e-6 * np.max(np.abs(eigval)) if eigval.size else 0.0
    inv = np.where(eigval > cut, 1.0 / np.maximum(eigval, np.finfo(float).tiny), 0.0)
    step = scale * (eigvec @ (inv * (eigvec.T @ (scale * g[idx]))))
    if not np.all(np.isfinite(step)):
        return x, False
    norm = np.max(np.abs(step))
    if norm > 1.0:
        step *= 1.0 / norm
    lo = np.array([bounds[i][0] if bounds[i][0] is not None else -np.inf
                   for i in idx])
    hi = np.array([bounds[i][1] if bounds[i][1] is not None else np.inf
                   for i in idx])
    allowance = 1e-9 * max(1.0, abs(f0))  # objective noise floor, keeps
    for scale in (1.0, 0.5, 0.25, 0.125, 0.0625):  # saddle capture out
        trial = x.copy()
        trial[idx] = np.clip(trial[idx] - scale * step, lo, hi)
        f_t, g_t = obj.value_and_grad(trial)
        if f_t <= f0 + allowance and \
                np.max(np.abs(_projected_grad(trial, g_t, bounds))) < pg_norm:
            return trial, True
    return x, False


def _slope_polish(obj, w, bounds, config):
    """Newton steps on the slope block with the exact penalty curvature.

    At large lambda the penalty Hessian near zero is lam/sqrt(c), so the
    objective is flat to machine precision long before the gradient is;
    line-search methods stall there. The 1-d curvature of the smooth
    penalty is known in closed form and dominates the (bounded) data
    curvature, which makes the damped diagonal step a contraction.
    """
    pen, spec = obj.penalty, obj.spec
    if spec.n_covariates == 0 or (pen.lam > 0.0 and pen.mode != "smooth"):
        return w
    pos = spec.n_states * spec.n_states  # slopes start after tpm + intercepts
    x = w.copy()
    _, g = obj.value_and_grad(x)
    pg = _projected_grad(x, g, bounds)
    damping = 1.0
    for _ in range(100):
        gs = pg[pos:]
        if np.max(np.abs(pg)) < 0.5 * config.convergence_tol or \
                np.max(np.abs(gs)) < 0.25 * config.convergence_tol:
            break
        beta = x[pos:]
        curv = np.zeros_like(beta)
        if pen.lam > 0.0:
            mask = spec.penalized_mask
            curv[mask] = pen.lam * pen.c / (beta[mask] ** 2 + pen.c) ** 1.5
        denom = curv + obj._slope_curv_bound
        # a zero-variance (all-zero) column has no curvature and no
        # gradient; leave its coefficient where it is
        step = np.divide(gs, denom, out=np.zeros_like(gs), where=denom > 0.0)
        np.clip(step, -0.1, 0.1, out=step)
        trial = x.copy()
        trial[pos:] = beta - damping * step
        _, g_t = obj.value_and_grad(trial)
        pg_t = _projected_grad(trial, g_t, bounds)
        # per-coordinate steps ignore cross-coordinate coupling, which can
        # turn the sweep into an oscillation on correlated designs; accept
        # only gradient-shrinking sweeps and damp after any rejection
        if np.max(np.abs(pg_t)) <= np.max(np.abs(pg)):
            x, pg = trial, pg_t
            damping = min(1.0, 1.5 * damping)
        else:
            damping *= 0.5
            if damping < 1e-3:
                break
    return x


def fit(data, spec, penalty, config=FitConfig(), init=None):
    """Maximize the penalized log-likelihood; best optimum across starts.

    With init=None, config.n_random_starts perturbed starting points are
    tried and the best penalized objective wins; with an explicit init the
    single optimization is warm-started there. States are relabeled so the
    intercepts come out in descending order.
    """
    obj = WorkingObjective(data, spec, penalty)
    bounds = _bounds(spec, config.param_cap)
    if init is not None:
        starts = [np.clip(init.to_working(),
                          [lo if lo is not None else -np.inf for lo, _ in bounds],
                          [hi if hi is not None else np.inf for _, hi in bounds])]
    else:
        starts = _random_starts(data, spec, config)

    solutions = []
    for w0 in starts:
        if not np.isfinite(obj.value(w0)) or obj.value(w0) >= BAD_OBJECTIVE:
            continue
        solutions.append(_minimize_one(obj, w0, config, bounds))
    if not solutions:
        raise FitError("objective non-finite at every starting point")

    fvals = np.array([f for _, f in solutions])
    best_i = int(np.argmin(fvals))
    w_best, f_best = solutions[best_i]
    n_agree = int(np.sum(fvals - f_best <= 1e-6 * max(1.0, abs(f_best))))

    f_final, g_final = obj.value_and_grad(w_best)
    pg_norm = float(np.max(np.abs(_projected_grad(w_best, g_final, bounds))))
    converged = pg_norm < config.convergence_tol
    if not converged:
        logger.warning("fit did not reach gradient tolerance: max |pg| = %.3g", pg_norm)

    params = Params.from_working(w_best, spec).canonical()
    pen = penalty_term(params.slopes, penalty, spec)
    loglik = -f_final + pen
    cap = config.param_cap
    n_bounded = spec.n_states * spec.n_states  # tpm working + intercepts
    at_boundary = bool(np.any(np.abs(w_best[:n_bounded]) >= cap - 1e-6))
    active = np.flatnonzero(np.abs(params.slopes) > config.nonzero_threshold)
    return FitResult(
        lam=penalty.lam,
        params=params,
        loglik=float(loglik),
        penalized_loglik=float(-f_final),
        converged=converged,
        active_set=active,
        n_starts_agreeing=n_agree,
        at_boundary=at_boundary,
        grad_max_norm=pg_norm,
    )


def relaxed_refit(data, spec, first_stage, config=FitConfig()):
    """Unpenalized refit restricted to the first stage's active slopes.

    Slopes outside the active set are fixed at exactly zero; the restricted
    model is warm-started at the first-stage estimates and the refitted
    coefficients are embedded back into the full-length slope vector.
    """
    active = np.asarray(first_stage.active_set, dtype=int)
    restricted = SequenceSet(tuple(
        type(s)(player_id=s.player_id, outcomes=s.outcomes,
                covariates=s.covariates[:, active])
        for s in data
    ))
    spec_r = ModelSpec(n_states=spec.n_states, n_covariates=active.size)
    init = Params(tpm=first_stage.params.tpm,
                  intercepts=first_stage.params.intercepts,
                  slopes=first_stage.params.slopes[active])
    res = fit(restricted, spec_r, PenaltyConfig(lam=0.0), config, init=init)
    slopes = np.zeros(spec.n_covariates)
    slopes[active] = res.params.slopes
    params = Params(tpm=res.params.tpm, intercepts=res.params.intercepts,
                    slopes=slopes)
    return FitResult(
        lam=0.0,
        params=params,
        loglik=res.loglik,
        penalized_loglik=res.penalized_loglik,
        converged=res.converged,
        active_set=np.flatnonzero(np.abs(slopes) > config.nonzero_threshold),
        n_starts_agreeing=res.n_starts_agreeing,
        at_boundary=res.at_boundary,
        grad_max_norm=res.grad_max_norm,
    )
