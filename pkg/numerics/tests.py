import math

import numpy as np
import numpy.testing as npt
import pytest

from core.exceptions import InvalidConfigError, InvalidInputError, ShapeError
from numerics.kernels import (
    Activation,
    activate,
    check_distribution,
    dropout_mask,
    log_softmax,
    matvec,
    one_hot,
    sample_categorical,
    sigmoid,
    softmax,
)
from numerics.rng import RngState


class TestRngState:
    def test_first_word_matches_splitmix64_reference(self):
        assert int(RngState(0).next_u64(1)[0]) == 0xE220A8397B1DCDAF

    def test_draws_are_a_function_of_seed_and_counter(self):
        first = RngState(42).random(5)
        again = RngState(42).random(5)
        npt.assert_array_equal(first, again)

        rng = RngState(42)
        rng.random(3)
        npt.assert_array_equal(rng.random(2), RngState(42, counter=3).random(2))

    def test_counter_advances_once_per_draw(self):
        rng = RngState(7)
        rng.random(4)
        rng.below(10)
        assert rng.counter == 5

    def test_floats_in_unit_interval(self):
        values = RngState(3).random(10_000)
        assert values.min() >= 0.0
        assert values.max() < 1.0
        assert abs(values.mean() - 0.5) < 0.02

    def test_fork_does_not_advance_parent_and_streams_differ(self):
        rng = RngState(11)
        child_a = rng.fork(0)
        child_b = rng.fork(1)
        assert rng.counter == 0
        assert child_a.seed != child_b.seed
        assert rng.fork(0) == child_a

    def test_permutation_is_a_permutation(self):
        order = RngState(5).permutation(50)
        assert sorted(order.tolist()) == list(range(50))

    def test_rejects_out_of_range_seed(self):
        with pytest.raises(InvalidConfigError):
            RngState(-1)
        with pytest.raises(InvalidConfigError):
            RngState(2**64)

    def test_below_rejects_empty_range(self):
        with pytest.raises(InvalidInputError):
            RngState(0).below(0)


class TestActivations:
    def test_sigmoid_known_values(self):
        npt.assert_allclose(sigmoid(np.array([0.0])), [0.5])
        assert activate(Activation.SIGMOID, [50.0])[0] == pytest.approx(1.0, abs=1e-15)
        assert activate("sigmoid", [-50.0])[0] == pytest.approx(0.0, abs=1e-15)

    def test_sigmoid_symmetry(self):
        x = np.linspace(-30, 30, 121)
        npt.assert_allclose(sigmoid(x) + sigmoid(-x), 1.0, atol=1e-15)

    def test_tanh_matches_numpy(self):
        x = np.linspace(-3, 3, 13)
        npt.assert_allclose(activate(Activation.TANH, x), np.tanh(x))

    def test_non_finite_input_rejected(self):
        with pytest.raises(InvalidInputError):
            activate(Activation.TANH, [0.0, np.nan])


class TestSoftmax:
    def test_uniform_on_equal_logits(self):
        npt.assert_allclose(softmax([2.0, 2.0, 2.0, 2.0]), [0.25] * 4)

    def test_large_logits_do_not_overflow(self):
        dist = softmax([1000.0, 0.0])
        assert dist[0] == pytest.approx(1.0)
        assert np.all(np.isfinite(dist))

    def test_shift_invariance(self):
        logits = np.array([0.1, -2.0, 3.5, 0.0])
        npt.assert_allclose(softmax(logits), softmax(logits + 123.0), atol=1e-15)

    def test_sums_to_one(self):
        dist = softmax(RngState(9).uniform(-20, 20, 100))
        assert dist.sum() == pytest.approx(1.0, abs=1e-12)
        assert np.all(dist > 0)

    def test_two_large_logits_exact(self):
        e = math.e
        npt.assert_allclose(softmax([1000.0, 1001.0]), [1.0 / (1.0 + e), e / (1.0 + e)], rtol=1e-14)

    def test_sums_to_one_over_large_vocabulary(self):
        dist = softmax(RngState(10).uniform(-50, 50, 10_000))
        assert abs(dist.sum() - 1.0) <= 1e-12

    def test_log_softmax_agrees(self):
        logits = np.array([0.5, 1.5, -0.25])
        npt.assert_allclose(log_softmax(logits), np.log(softmax(logits)), atol=1e-14)

    def test_log_softmax_stays_finite_where_softmax_underflows(self):
        assert softmax([0.0, -2000.0])[1] == 0.0
        npt.assert_allclose(log_softmax([0.0, -2000.0]), [0.0, -2000.0], atol=1e-12)

    def test_empty_and_non_finite_rejected(self):
        with pytest.raises(InvalidInputError):
            softmax([])
        with pytest.raises(InvalidInputError):
            softmax([1.0, np.inf])


class TestLinearAlgebra:
    def test_matvec(self):
        npt.assert_array_equal(matvec(np.array([[1.0, 2.0], [3.0, 4.0]]), np.array([1.0, -1.0])), [-1.0, -1.0])

    def test_matvec_is_linear(self):
        rng = RngState(12)
        for _ in range(20):
            w = rng.uniform(-2, 2, (4, 7))
            x, y = rng.uniform(-2, 2, 7), rng.uniform(-2, 2, 7)
            a, b = rng.uniform(-3, 3, 2)
            expected = a * matvec(w, x) + b * matvec(w, y)
            npt.assert_allclose(matvec(w, a * x + b * y), expected, atol=1e-12)

    def test_matvec_shape_mismatch(self):
        with pytest.raises(ShapeError):
            matvec(np.ones((2, 3)), np.ones(2))

    def test_one_hot(self):
        npt.assert_array_equal(one_hot(2, 4), [0.0, 0.0, 1.0, 0.0])


class TestSampleCategorical:
    def test_degenerate_distribution(self):
        rng = RngState(0)
        assert all(sample_categorical(np.array([0.0, 1.0, 0.0]), rng) == 1 for _ in range(20))

    def test_consumes_exactly_one_draw(self):
        rng = RngState(4)
        sample_categorical(np.array([0.2, 0.3, 0.5]), rng)
        assert rng.counter == 1

    def test_deterministic_given_state(self):
        dist = np.array([0.1, 0.2, 0.3, 0.4])
        first = [sample_categorical(dist, rng) for rng in [RngState(8)] for _ in range(30)]
        second = [sample_categorical(dist, rng) for rng in [RngState(8)] for _ in range(30)]
        assert first == second

    def test_frequencies_follow_distribution(self):
        dist = np.array([0.1, 0.6, 0.3])
        rng = RngState(123)
        counts = np.bincount([sample_categorical(dist, rng) for _ in range(20_000)], minlength=3)
        npt.assert_allclose(counts / counts.sum(), dist, atol=0.015)

    def test_unnormalized_rejected(self):
        with pytest.raises(InvalidInputError):
            sample_categorical(np.array([0.5, 0.6]), RngState(0))

    def test_check_distribution_rejects_negative(self):
        with pytest.raises(InvalidInputError):
            check_distribution(np.array([1.5, -0.5]))


class TestDropoutMask:
    def test_rate_zero_is_identity_and_draws_nothing(self):
        rng = RngState(1)
        npt.assert_array_equal(dropout_mask(6, 0.0, rng), np.ones(6))
        assert rng.counter == 0

    def test_survivors_scaled(self):
        mask = dropout_mask(1000, 0.25, RngState(2))
        assert set(np.unique(mask).tolist()) <= {0.0, 1.0 / 0.75}
        assert math.isclose(mask.mean(), 1.0, abs_tol=0.1)

    @pytest.mark.parametrize("rate", [-0.1, 1.0, 1.5])
    def test_invalid_rate(self, rate):
        with pytest.raises(InvalidConfigError):
            dropout_mask(3, rate, RngState(0))
