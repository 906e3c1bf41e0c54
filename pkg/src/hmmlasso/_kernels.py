"""Numba kernels for the sequential recursions (forward, backward, Viterbi).

Everything here works on plain float64 arrays; probability-space recursions
use per-step rescaling so that sequences up to T ~ 1e6 neither underflow nor
overflow. Callers precompute emission probabilities and log-probabilities.
"""

from __future__ import annotations

import numpy as np
from numba import njit


@njit(cache=True)
def forward_scaled(delta, tpm, p):
    """Scaled forward recursion.

    delta: (N,) initial distribution, tpm: (N, N) row-stochastic,
    p: (T, N) per-step emission probabilities P(y_t | s_t = j).

    Returns (ahat, c): ahat[t] is the normalized forward vector (the filtered
    state distribution given y_{1..t}) and c[t] the per-step normalizer, so
    that log-likelihood = sum(log c). If some c[t] hits zero the remaining
    steps are filled with c = 0 and a uniform ahat; the caller must check.
    """
    T, N = p.shape
    ahat = np.empty((T, N))
    c = np.empty(T)
    s = 0.0
    for j in range(N):
        v = delta[j] * p[0, j]
        ahat[0, j] = v
        s += v
    c[0] = s
    if s <= 0.0:
        for t in range(T):
            c[t] = 0.0
            for j in range(N):
                ahat[t, j] = 1.0 / N
        return ahat, c
    for j in range(N):
        ahat[0, j] /= s
    for t in range(1, T):
        s = 0.0
        for j in range(N):
            acc = 0.0
            for i in range(N):
                acc += ahat[t - 1, i] * tpm[i, j]
            v = acc * p[t, j]
            ahat[t, j] = v
            s += v
        c[t] = s
        if s <= 0.0:
            for u in range(t, T):
                c[u] = 0.0
                for j in range(N):
                    ahat[u, j] = 1.0 / N
            return ahat, c
        for j in range(N):
            ahat[t, j] /= s
    return ahat, c


@njit(cache=True)
def backward_scaled(tpm, p, c):
    """Scaled backward recursion matching the normalizers from forward_scaled.

    Returns bhat with bhat[T-1] = 1 and
    bhat[t, i] = sum_j tpm[i, j] * p[t+1, j] * bhat[t+1, j] / c[t+1],
    so that the smoothed state probabilities are ahat * bhat.
    """
    T, N = p.shape
    bhat = np.empty((T, N))
    for j in range(N):
        bhat[T - 1, j] = 1.0
    for t in range(T - 2, -1, -1):
        for i in range(N):
            acc = 0.0
            for j in range(N):
                acc += tpm[i, j] * p[t + 1, j] * bhat[t + 1, j]
            bhat[t, i] = acc / c[t + 1]
    return bhat


@njit(cache=True)
def viterbi_path(log_delta, log_tpm, log_p):
    """Most probable state path; ties break toward the lower state index."""
    T, N = log_p.shape
    score = np.empty((T, N))
    back = np.zeros((T, N), dtype=np.int64)
    for j in range(N):
        score[0, j] = log_delta[j] + log_p[0, j]
    for t in range(1, T):
        for j in range(N):
            best = score[t - 1, 0] + log_tpm[0, j]
            arg = 0
            for i in range(1, N):
                cand = score[t - 1, i] + log_tpm[i, j]
                if cand > best:
                    best = cand
                    arg = i
            score[t, j] = best + log_p[t, j]
            back[t, j] = arg
    path = np.empty(T, dtype=np.int64)
    best = score[T - 1, 0]
    arg = 0
    for j in range(1, N):
        if score[T - 1, j] > best:
            best = score[T - 1, j]
            arg = j
    path[T - 1] = arg
    for t in range(T - 2, -1, -1):
        path[t] = back[t + 1, path[t + 1]]
    return path
