import numpy as np
import pytest

from hmmlasso.model import Params, Sequence, SequenceSet


def random_tpm(rng, n):
    """Strictly positive row-stochastic matrix with a persistent diagonal."""
    raw = rng.uniform(0.2, 1.0, size=(n, n)) + 2.0 * np.eye(n)
    return raw / raw.sum(axis=1, keepdims=True)


def random_params(rng, n_states, n_covariates, slope_scale=0.8):
    return Params(
        tpm=random_tpm(rng, n_states),
        intercepts=rng.uniform(-1.5, 1.5, size=n_states),
        slopes=rng.uniform(-slope_scale, slope_scale, size=n_covariates),
    )


def random_sequence(rng, t, n_covariates, player_id="p"):
    return Sequence(
        player_id=player_id,
        outcomes=rng.integers(0, 2, size=t),
        covariates=rng.uniform(-2.0, 2.0, size=(t, n_covariates)),
    )


def random_data(rng, n_seqs, t, n_covariates):
    return SequenceSet(tuple(
        random_sequence(rng, t, n_covariates, player_id=f"p{i}")
        for i in range(n_seqs)
    ))


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
