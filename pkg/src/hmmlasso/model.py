"""Markov-switching Bernoulli-logit model: types and exact likelihood.

The observation model is a logistic regression whose intercept switches with
a latent N-state Markov chain while the slope coefficients are shared across
states. Likelihoods are evaluated with the scaled forward algorithm; the
initial state distribution is the stationary distribution of the transition
matrix.

Convention note: for a row-stochastic transition matrix G, "stationary"
throughout this package means the left eigenvector, i.e. the probability
vector d solving d' G = d'. This is the distribution a row-stochastic chain
converges to, and it is what every report and likelihood here uses.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from ._kernels import forward_scaled

ROW_SUM_TOL = 1e-8


class ModelError(ValueError):
    """Invalid model inputs (shapes, stochasticity, reducible chains)."""


def inv_logit(eta):
    """Logistic function 1 / (1 + exp(-eta)), stable for large |eta|."""
    return expit(eta)


@dataclass(frozen=True)
class ModelSpec:
    """Dimensions and penalization structure of a switching logistic model.

    penalized_mask marks which slope coefficients enter the L1 penalty;
    intercepts and transition parameters are never penalized. A spec with
    n_states = 1 degrades to plain logistic regression.
    """

    n_states: int
    n_covariates: int
    penalized_mask: np.ndarray = None

    def __post_init__(self):
        if self.n_states < 1:
            raise ModelError(f"n_states must be >= 1, got {self.n_states}")
        if self.n_covariates < 0:
            raise ModelError(f"n_covariates must be >= 0, got {self.n_covariates}")
        mask = self.penalized_mask
        if mask is None:
            mask = np.ones(self.n_covariates, dtype=bool)
        else:
            mask = np.asarray(mask, dtype=bool).copy()
            if mask.shape != (self.n_covariates,):
                raise ModelError(
                    f"penalized_mask has shape {mask.shape}, expected ({self.n_covariates},)"
                )
        mask.setflags(write=False)
        object.__setattr__(self, "penalized_mask", mask)

    @property
    def n_working(self):
        """Length of the working parameter vector."""
        n = self.n_states
        return n * (n - 1) + n + self.n_covariates


@dataclass(frozen=True)
class Params:
    """Full parameter set: transition matrix, per-state intercepts, shared slopes.

    The working representation is unconstrained: each transition row is
    mapped through a multinomial logit with the diagonal entry as reference
    category, intercepts and slopes are passed through unchanged. Layout of
    the working vector: the N*(N-1) off-diagonal transition parameters in
    row-major order, then the N intercepts, then the K slopes.
    """

    tpm: np.ndarray
    intercepts: np.ndarray
    slopes: np.ndarray

    def __post_init__(self):
        tpm = np.array(self.tpm, dtype=float)
        intercepts = np.array(self.intercepts, dtype=float)
        slopes = np.array(self.slopes, dtype=float)
        n = intercepts.shape[0] if intercepts.ndim == 1 else -1
        if tpm.ndim != 2 or tpm.shape[0] != tpm.shape[1] or tpm.shape[0] != n:
            raise ModelError(
                f"tpm shape {tpm.shape} does not match {n} intercept(s)"
            )
        if slopes.ndim != 1:
            raise ModelError("slopes must be a 1-d array")
        if not (np.all(np.isfinite(tpm)) and np.all(tpm >= 0.0) and np.all(tpm <= 1.0)):
            raise ModelError("tpm entries must be probabilities in [0, 1]")
        row_sums = tpm.sum(axis=1)
        if np.max(np.abs(row_sums - 1.0)) > ROW_SUM_TOL:
            raise ModelError(f"tpm rows must sum to 1, got sums {row_sums}")
        # normalize away sub-tolerance row-sum noise so downstream linear
        # algebra sees an exactly stochastic matrix
        tpm = tpm / row_sums[:, None]
        if not np.all(np.isfinite(intercepts)) or not np.all(np.isfinite(slopes)):
            raise ModelError("intercepts and slopes must be finite")
        for a in (tpm, intercepts, slopes):
            a.setflags(write=False)
        object.__setattr__(self, "tpm", tpm)
        object.__setattr__(self, "intercepts", intercepts)
        object.__setattr__(self, "slopes", slopes)

    @property
    def n_states(self):
        return self.intercepts.shape[0]

    @property
    def n_covariates(self):
        return self.slopes.shape[0]

    def to_working(self):
        """Map to the unconstrained working vector (requires tpm entries > 0)."""
        n = self.n_states
        if np.any(self.tpm <= 0.0):
            raise ModelError("to_working requires strictly positive tpm entries")
        parts = []
        for i in range(n):
            row = self.tpm[i]
            off = [np.log(row[j] / row[i]) for j in range(n) if j != i]
            parts.extend(off)
        return np.concatenate([np.asarray(parts, dtype=float).reshape(-1),
                               self.intercepts, self.slopes])

    @classmethod
    def from_working(cls, w, spec):
        """Inverse of to_working for a given ModelSpec."""
        w = np.asarray(w, dtype=float)
        if w.shape != (spec.n_working,):
            raise ModelError(
                f"working vector has shape {w.shape}, expected ({spec.n_working},)"
            )
        n, k = spec.n_states, spec.n_covariates
        tpm = np.empty((n, n))
        pos = 0
        for i in range(n):
            e = np.exp(w[pos:pos + n - 1])
            z = 1.0 + e.sum()
            row = np.empty(n)
            row[i] = 1.0 / z
            idx = [j for j in range(n) if j != i]
            row[idx] = e / z
            tpm[i] = row
            pos += n - 1
        intercepts = w[pos:pos + n]
        slopes = w[pos + n:pos + n + k]
        return cls(tpm=tpm, intercepts=intercepts, slopes=slopes)

    def canonical(self):
        """Relabel states so intercepts are in descending order (state 1 = highest)."""
        order = np.argsort(-self.intercepts, kind="stable")
        if np.array_equal(order, np.arange(self.n_states)):
            return self
        return Params(
            tpm=self.tpm[np.ix_(order, order)],
            intercepts=self.intercepts[order],
            slopes=self.slopes,
        )

    def permute_states(self, order):
        """Relabel states by the given permutation (new state i = old order[i])."""
        order = np.asarray(order)
        return Params(
            tpm=self.tpm[np.ix_(order, order)],
            intercepts=self.intercepts[order],
            slopes=self.slopes,
        )


@dataclass(frozen=True)
class Sequence:
    """One binary outcome series with aligned covariate rows."""

    player_id: str
    outcomes: np.ndarray
    covariates: np.ndarray

    def __post_init__(self):
        y = np.asarray(self.outcomes)
        x = np.asarray(self.covariates, dtype=float)
        if y.ndim != 1 or y.shape[0] < 1:
            raise ModelError(f"sequence {self.player_id!r}: needs at least one outcome")
        if not np.all((y == 0) | (y == 1)):
            raise ModelError(f"sequence {self.player_id!r}: outcomes must be 0/1")
        if x.ndim != 2 or x.shape[0] != y.shape[0]:
            raise ModelError(
                f"sequence {self.player_id!r}: covariate rows {x.shape} "
                f"do not match {y.shape[0]} outcomes"
            )
        if not np.all(np.isfinite(x)):
            raise ModelError(f"sequence {self.player_id!r}: covariates must be finite")
        y = y.astype(np.int8)
        y.setflags(write=False)
        x = np.ascontiguousarray(x)
        x.setflags(write=False)
        object.__setattr__(self, "outcomes", y)
        object.__setattr__(self, "covariates", x)

    def __len__(self):
        return self.outcomes.shape[0]


@dataclass(frozen=True)
class SequenceSet:
    """Collection of independent sequences sharing one covariate layout."""

    sequences: tuple

    def __post_init__(self):
        seqs = tuple(self.sequences)
        if seqs:
            k = seqs[0].covariates.shape[1]
            for s in seqs:
                if s.covariates.shape[1] != k:
                    raise ModelError("all sequences must share the covariate count")
        object.__setattr__(self, "sequences", seqs)

    def __len__(self):
        return len(self.sequences)

    def __iter__(self):
        return iter(self.sequences)

    @property
    def n_obs(self):
        return sum(len(s) for s in self.sequences)

    @property
    def n_covariates(self):
        if not self.sequences:
            raise ModelError("empty SequenceSet has no covariate count")
        return self.sequences[0].covariates.shape[1]


def linear_predictor(state, x, params):
    """eta for the given 1-based state: its intercept plus the shared slope term."""
    x = np.asarray(x, dtype=float)
    if x.shape != (params.n_covariates,):
        raise ModelError(
            f"covariate vector has shape {x.shape}, expected ({params.n_covariates},)"
        )
    if not 1 <= state <= params.n_states:
        raise ModelError(f"state {state} outside 1..{params.n_states}")
    return float(params.intercepts[state - 1] + x @ params.slopes)


def _stationary_state_reduction(p):
    """Stationary vector by state reduction, or None when inapplicable.

    The recursion only adds nonnegative products, so every entry keeps
    full relative accuracy even when the chain is nearly degenerate and
    the linear-system route loses most of its digits to conditioning.
    Returns None when a state has no path to lower-indexed states (a
    structural zero the reduction cannot eliminate) or a probability
    ratio leaves float range; those cases go to the direct solve.
    """
    p = p.copy()
    n = p.shape[0]
    for k in range(n - 1, 0, -1):
        s = p[k, :k].sum()
        if not s > 0.0:
            return None
        p[:k, k] /= s
        p[:k, :k] += p[:k, k, None] * p[k, None, :k]
    x = np.empty(n)
    x[0] = 1.0
    for k in range(1, n):
        x[k] = x[:k] @ p[:k, k]
    total = x.sum()
    if not np.all(np.isfinite(x)) or not 0.0 < total < np.inf:
        return None
    return x / total


def stationary_distribution(tpm):
    """Stationary probability vector of a row-stochastic matrix.

    Prefers the subtraction-free state-reduction scheme, which stays
    entrywise accurate for nearly degenerate chains; matrices it cannot
    reduce fall back to solving d'(I - G + U) = 1' (U the all-ones
    matrix). Chains without a unique stationary distribution (multiple
    closed classes) are rejected.
    """
    g = np.asarray(tpm, dtype=float)
    if g.ndim != 2 or g.shape[0] != g.shape[1]:
        raise ModelError(f"tpm must be square, got shape {g.shape}")
    if not np.all(np.isfinite(g)) or np.any(g < 0.0) or np.any(g > 1.0):
        raise ModelError("tpm entries must be probabilities in [0, 1]")
    row_sums = g.sum(axis=1)
    if np.max(np.abs(row_sums - 1.0)) > ROW_SUM_TOL:
        raise ModelError(f"tpm rows must sum to 1, got sums {row_sums}")
    g = g / row_sums[:, None]
    n = g.shape[0]
    delta = _stationary_state_reduction(g)
    if delta is not None:
        return delta
    m = np.eye(n) - g + np.ones((n, n))
    try:
        delta = np.linalg.solve(m.T, np.ones(n))
    except np.linalg.LinAlgError as exc:
        raise ModelError("no unique stationary distribution (reducible chain)") from exc
    residual = np.max(np.abs(delta @ g - delta))
    if not np.all(np.isfinite(delta)) or residual > 1e-10 or np.any(delta < -1e-12):
        raise ModelError("no unique stationary distribution (reducible chain)")
    delta = np.clip(delta, 0.0, None)
    return delta / delta.sum()


def emission_probs(seq, params):
    """(T, N) matrix of P(y_t | s_t = j) under the fitted success curve."""
    eta = params.intercepts[None, :] + (seq.covariates @ params.slopes)[:, None]
    pi = expit(eta)
    y = seq.outcomes[:, None]
    return np.where(y == 1, pi, 1.0 - pi)


def sequence_loglik(seq, params):
    """Exact log-likelihood of one sequence via the scaled forward algorithm.

    The initial distribution is the stationary distribution of the transition
    matrix; per-step normalizers are accumulated in log space, so arbitrarily
    long sequences do not underflow. Returns -inf if the model assigns the
    data zero probability.
    """
    delta = stationary_distribution(params.tpm)
    p = emission_probs(seq, params)
    _, c = forward_scaled(delta, params.tpm, p)
    if np.any(c <= 0.0):
        return -np.inf
    return float(np.log(c).sum())


def total_loglik(data, params):
    """Sum of per-sequence log-likelihoods (sequences are independent)."""
    if len(data) == 0:
        raise ModelError("empty SequenceSet")
    return float(sum(sequence_loglik(s, params) for s in data))
