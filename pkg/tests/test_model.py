import itertools
import math

import numpy as np
import pytest
from scipy.special import expit

from hmmlasso.model import (
    ModelError,
    ModelSpec,
    Params,
    Sequence,
    SequenceSet,
    inv_logit,
    linear_predictor,
    sequence_loglik,
    stationary_distribution,
    total_loglik,
)

from conftest import random_params, random_sequence, random_tpm


def enumerated_loglik(seq, params):
    """Likelihood by brute-force summation over every state path."""
    delta = stationary_distribution(params.tpm)
    t, n = len(seq), params.n_states
    eta = params.intercepts[None, :] + (seq.covariates @ params.slopes)[:, None]
    pi = expit(eta)
    p = np.where(seq.outcomes[:, None] == 1, pi, 1.0 - pi)
    total = 0.0
    for path in itertools.product(range(n), repeat=t):
        prob = delta[path[0]] * p[0, path[0]]
        for step in range(1, t):
            prob *= params.tpm[path[step - 1], path[step]] * p[step, path[step]]
        total += prob
    return math.log(total)


class TestInvLogit:
    def test_zero_gives_half(self):
        assert inv_logit(0.0) == 0.5

    def test_inverse_identity(self):
        assert inv_logit(np.log(0.75 / 0.25)) == pytest.approx(0.75, abs=1e-12)

    def test_deeply_negative_intercept(self):
        assert inv_logit(-14.50) == pytest.approx(5.03e-7, rel=2e-3)

    def test_extreme_arguments_stay_in_unit_interval(self):
        assert inv_logit(700.0) == 1.0
        assert inv_logit(-700.0) > 0.0
        assert inv_logit(-700.0) < 1e-300


class TestLinearPredictor:
    def test_zero_covariates_isolate_intercept(self):
        params = Params(tpm=[[0.9, 0.1], [0.2, 0.8]], intercepts=[1.25, -0.5],
                        slopes=[0.3, -0.7])
        assert linear_predictor(1, [0.0, 0.0], params) == 1.25
        assert linear_predictor(2, [0.0, 0.0], params) == -0.5

    def test_scenario_cold_intercept(self):
        cold = float(expit(0.35))
        params = Params(tpm=[[0.9, 0.1], [0.1, 0.9]],
                        intercepts=[float(expit(0.75)), cold],
                        slopes=np.zeros(3))
        assert linear_predictor(2, np.zeros(3), params) == pytest.approx(
            0.5866, abs=5e-5)

    def test_signal_slope_sum(self):
        slopes = np.zeros(50)
        slopes[:3] = (0.5, 0.7, -0.8)
        x = np.zeros(50)
        x[:3] = 1.0
        params = Params(tpm=[[0.9, 0.1], [0.1, 0.9]], intercepts=[0.0, 0.0],
                        slopes=slopes)
        assert linear_predictor(1, x, params) == pytest.approx(0.4, abs=1e-12)

    def test_dimension_mismatch_rejected(self):
        params = Params(tpm=[[1.0]], intercepts=[0.0], slopes=[0.1, 0.2])
        with pytest.raises(ModelError):
            linear_predictor(1, [1.0], params)

    def test_state_out_of_range_rejected(self):
        params = Params(tpm=[[1.0]], intercepts=[0.0], slopes=[0.1])
        with pytest.raises(ModelError):
            linear_predictor(2, [1.0], params)
        with pytest.raises(ModelError):
            linear_predictor(0, [1.0], params)


class TestStationaryDistribution:
    def test_symmetric_chain_is_uniform(self):
        delta = stationary_distribution(np.array([[0.9, 0.1], [0.1, 0.9]]))
        assert np.max(np.abs(delta - 0.5)) < 1e-12

    def test_reported_two_state_value(self):
        delta = stationary_distribution(np.array([[0.978, 0.022], [0.680, 0.320]]))
        assert abs(delta[0] - 0.969) < 5e-4
        assert abs(delta[1] - 0.031) < 5e-4

    def test_three_state_fixed_point(self, rng):
        tpm = random_tpm(rng, 3)
        delta = stationary_distribution(tpm)
        assert np.max(np.abs(delta @ tpm - delta)) < 1e-12
        assert delta.sum() == pytest.approx(1.0, abs=1e-12)

    def test_fixed_point_many_sizes(self, rng):
        for n in (1, 2, 4, 6):
            for _ in range(5):
                tpm = random_tpm(rng, n)
                delta = stationary_distribution(tpm)
                assert np.max(np.abs(delta @ tpm - delta)) < 1e-12
                assert np.all(delta >= 0.0)

    def test_near_degenerate_chain_keeps_relative_accuracy(self):
        # off-diagonals this small make the usual linear system lose ~9
        # digits to conditioning; the ratio delta_1/delta_2 must still be
        # b/a to full precision
        a, b = 8.3e-10, 4.5e-10
        delta = stationary_distribution(np.array([[1.0 - a, a], [b, 1.0 - b]]))
        expected = np.array([b, a]) / (a + b)
        assert np.max(np.abs(delta / expected - 1.0)) < 1e-12

    def test_periodic_chain(self):
        delta = stationary_distribution(np.array([[0.0, 1.0], [1.0, 0.0]]))
        assert np.max(np.abs(delta - 0.5)) < 1e-15

    def test_unichain_with_transient_state(self):
        delta = stationary_distribution(np.array([[0.5, 0.5], [0.0, 1.0]]))
        assert np.allclose(delta, [0.0, 1.0], atol=1e-12)

    def test_two_closed_classes_rejected(self):
        with pytest.raises(ModelError):
            stationary_distribution(np.eye(2))

    def test_non_stochastic_rejected(self):
        with pytest.raises(ModelError):
            stationary_distribution(np.array([[0.5, 0.4], [0.1, 0.9]]))
        with pytest.raises(ModelError):
            stationary_distribution(np.array([[1.1, -0.1], [0.5, 0.5]]))

    def test_row_rescaling_noise_absorbed(self, rng):
        tpm = random_tpm(rng, 3)
        noisy = tpm * (1.0 + 1e-14)
        assert np.max(np.abs(stationary_distribution(noisy)
                             - stationary_distribution(tpm))) < 1e-12


class TestSequenceLoglik:
    def test_single_step_mixture_collapses(self):
        seq = Sequence(player_id="p", outcomes=[1], covariates=np.zeros((1, 0)))
        params = Params(tpm=[[0.9, 0.1], [0.1, 0.9]], intercepts=[0.0, 0.0],
                        slopes=np.zeros(0))
        assert sequence_loglik(seq, params) == pytest.approx(math.log(0.5),
                                                             abs=1e-12)

    def test_certain_model_has_zero_loglik(self):
        # intercepts so extreme that pi is 1 to machine precision, with
        # outcomes all 1: the model is certain and the log-likelihood is 0
        seq = Sequence(player_id="p", outcomes=[1, 1, 1],
                       covariates=np.zeros((3, 0)))
        params = Params(tpm=[[0.5, 0.5], [0.5, 0.5]], intercepts=[60.0, 60.0],
                        slopes=np.zeros(0))
        assert sequence_loglik(seq, params) == pytest.approx(0.0, abs=1e-12)

    def test_matches_enumeration_small_case(self, rng):
        params = random_params(rng, 2, 3)
        seq = random_sequence(rng, 3, 3)
        assert sequence_loglik(seq, params) == pytest.approx(
            enumerated_loglik(seq, params), rel=1e-12)

    def test_matches_enumeration_across_shapes(self, rng):
        for n_states, t in ((2, 2), (2, 5), (2, 8), (3, 2), (3, 5), (3, 8)):
            for _ in range(3):
                params = random_params(rng, n_states, 2)
                seq = random_sequence(rng, t, 2)
                expected = enumerated_loglik(seq, params)
                assert sequence_loglik(seq, params) == pytest.approx(
                    expected, rel=1e-10), (n_states, t)

    def test_state_relabeling_invariance(self, rng):
        params = random_params(rng, 3, 2)
        seq = random_sequence(rng, 60, 2)
        base = sequence_loglik(seq, params)
        for order in itertools.permutations(range(3)):
            permuted = params.permute_states(np.array(order))
            assert sequence_loglik(seq, permuted) == pytest.approx(base,
                                                                   abs=1e-10)

    def test_long_sequence_does_not_underflow(self, rng):
        params = random_params(rng, 2, 1)
        seq = random_sequence(rng, 20000, 1)
        value = sequence_loglik(seq, params)
        assert math.isfinite(value)
        assert value < 0.0


class TestTotalLoglik:
    def test_single_sequence_equals_sequence_loglik(self, rng):
        params = random_params(rng, 2, 2)
        seq = random_sequence(rng, 15, 2)
        assert total_loglik(SequenceSet((seq,)), params) == pytest.approx(
            sequence_loglik(seq, params), abs=1e-12)

    def test_duplicated_sequence_doubles(self, rng):
        params = random_params(rng, 2, 2)
        seq = random_sequence(rng, 15, 2)
        single = sequence_loglik(seq, params)
        both = total_loglik(SequenceSet((seq, seq)), params)
        assert both == pytest.approx(2.0 * single, rel=1e-12)

    def test_sum_over_panel(self, rng):
        params = random_params(rng, 2, 2)
        seqs = [random_sequence(rng, int(rng.integers(5, 30)), 2, f"p{i}")
                for i in range(40)]
        expected = sum(sequence_loglik(s, params) for s in seqs)
        assert total_loglik(SequenceSet(tuple(seqs)), params) == pytest.approx(
            expected, abs=1e-10)

    def test_order_invariance(self, rng):
        params = random_params(rng, 2, 2)
        seqs = [random_sequence(rng, 12, 2, f"p{i}") for i in range(7)]
        forward_order = total_loglik(SequenceSet(tuple(seqs)), params)
        reverse_order = total_loglik(SequenceSet(tuple(reversed(seqs))), params)
        assert forward_order == pytest.approx(reverse_order, abs=1e-10)

    def test_empty_set_rejected(self):
        params = Params(tpm=[[1.0]], intercepts=[0.0], slopes=np.zeros(0))
        with pytest.raises(ModelError):
            total_loglik(SequenceSet(()), params)

    def test_single_state_equals_plain_logistic(self, rng):
        slopes = np.array([0.6, -0.4])
        params = Params(tpm=[[1.0]], intercepts=[0.3], slopes=slopes)
        seq = random_sequence(rng, 200, 2)
        eta = 0.3 + seq.covariates @ slopes
        pi = expit(eta)
        y = seq.outcomes
        bernoulli = float(np.sum(np.where(y == 1, np.log(pi), np.log1p(-pi))))
        assert total_loglik(SequenceSet((seq,)), params) == pytest.approx(
            bernoulli, abs=1e-12)


class TestParams:
    def test_working_round_trip(self, rng):
        for n, k in ((1, 0), (2, 3), (3, 4)):
            spec = ModelSpec(n_states=n, n_covariates=k)
            params = random_params(rng, n, k)
            back = Params.from_working(params.to_working(), spec)
            assert np.max(np.abs(back.tpm - params.tpm)) < 1e-10
            assert np.max(np.abs(back.intercepts - params.intercepts)) < 1e-10
            if k:
                assert np.max(np.abs(back.slopes - params.slopes)) < 1e-10

    def test_working_round_trip_other_direction(self, rng):
        spec = ModelSpec(n_states=2, n_covariates=2)
        w = rng.uniform(-2.0, 2.0, size=spec.n_working)
        again = Params.from_working(w, spec).to_working()
        assert np.max(np.abs(again - w)) < 1e-10

    def test_row_sums_validated(self):
        with pytest.raises(ModelError):
            Params(tpm=[[0.7, 0.2], [0.1, 0.9]], intercepts=[0.0, 0.0],
                   slopes=np.zeros(1))

    def test_non_finite_rejected(self):
        with pytest.raises(ModelError):
            Params(tpm=[[0.9, 0.1], [0.1, 0.9]], intercepts=[np.inf, 0.0],
                   slopes=np.zeros(1))
        with pytest.raises(ModelError):
            Params(tpm=[[0.9, 0.1], [0.1, 0.9]], intercepts=[0.0, 0.0],
                   slopes=[np.nan])

    def test_tpm_intercept_shape_mismatch(self):
        with pytest.raises(ModelError):
            Params(tpm=[[0.9, 0.1], [0.1, 0.9]], intercepts=[0.0],
                   slopes=np.zeros(1))

    def test_canonical_orders_intercepts_descending(self):
        params = Params(tpm=[[0.6, 0.4], [0.3, 0.7]], intercepts=[-1.0, 2.0],
                        slopes=[0.5])
        canon = params.canonical()
        assert np.all(np.diff(canon.intercepts) <= 0)
        assert canon.intercepts[0] == 2.0
        assert canon.tpm[0, 0] == 0.7
        assert canon.tpm[0, 1] == 0.3

    def test_canonical_is_idempotent(self, rng):
        params = random_params(rng, 3, 2)
        once = params.canonical()
        twice = once.canonical()
        assert np.array_equal(once.tpm, twice.tpm)
        assert np.array_equal(once.intercepts, twice.intercepts)


class TestModelSpec:
    def test_default_mask_penalizes_every_slope(self):
        spec = ModelSpec(n_states=2, n_covariates=4)
        assert spec.penalized_mask.shape == (4,)
        assert spec.penalized_mask.all()

    def test_mask_length_validated(self):
        with pytest.raises(ModelError):
            ModelSpec(n_states=2, n_covariates=3,
                      penalized_mask=np.array([True, False]))

    def test_degenerate_dimensions_rejected(self):
        with pytest.raises(ModelError):
            ModelSpec(n_states=0, n_covariates=1)
        with pytest.raises(ModelError):
            ModelSpec(n_states=2, n_covariates=-1)

    def test_working_length(self):
        assert ModelSpec(n_states=2, n_covariates=5).n_working == 2 + 2 + 5
        assert ModelSpec(n_states=3, n_covariates=0).n_working == 6 + 3


class TestSequenceValidation:
    def test_non_binary_outcomes_rejected(self):
        with pytest.raises(ModelError):
            Sequence(player_id="p", outcomes=[0, 2], covariates=np.zeros((2, 1)))

    def test_row_count_mismatch_rejected(self):
        with pytest.raises(ModelError):
            Sequence(player_id="p", outcomes=[0, 1], covariates=np.zeros((3, 1)))

    def test_non_finite_covariates_rejected(self):
        with pytest.raises(ModelError):
            Sequence(player_id="p", outcomes=[0, 1],
                     covariates=np.array([[0.0], [np.inf]]))

    def test_mixed_covariate_widths_rejected(self, rng):
        a = random_sequence(rng, 4, 2, "a")
        b = random_sequence(rng, 4, 3, "b")
        with pytest.raises(ModelError):
            SequenceSet((a, b))
