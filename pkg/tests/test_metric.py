"""Unit and property tests for the pattern-cardinality metrics."""

import math

import numpy as np
import pytest

from swapnas.metric import (
    ActivationCapture,
    ContractViolationError,
    RegularisationParams,
    binarise_indicator,
    regularisation_factor,
    regularised_swap_score,
    standard_pattern_cardinality,
    swap_score,
)


def naive_row_count(bits: np.ndarray) -> int:
    """Deduplicate full row tuples in a plain set; the reference oracle."""
    return len({tuple(int(b) for b in row) for row in bits})


def naive_col_count(bits: np.ndarray) -> int:
    return naive_row_count(np.asarray(bits).T)


class TestBinariseIndicator:
    def test_zero_stays_zero(self):
        assert binarise_indicator(0.0) == 0

    def test_positive_maps_to_one(self):
        assert binarise_indicator(3.7) == 1

    def test_no_epsilon_threshold(self):
        # Underflow-small positives still count as active.
        assert binarise_indicator(1e-300) == 1

    def test_negative_rejected(self):
        with pytest.raises(ContractViolationError):
            binarise_indicator(-0.1)

    def test_non_finite_rejected(self):
        with pytest.raises(ContractViolationError):
            binarise_indicator(float("nan"))


class TestActivationCapture:
    def test_round_trip(self):
        rng = np.random.default_rng(1)
        bits = (rng.random((13, 11)) < 0.5).astype(np.uint8)
        cap = ActivationCapture.from_bits(bits)
        assert cap.n_values == 13
        assert cap.n_samples == 11
        assert np.array_equal(cap.bits(), bits)

    def test_pad_bits_are_normalised(self):
        # Garbage in the pad bits of the final byte must not affect equality.
        packed = np.array([[0b10100000], [0b10100111]], dtype=np.uint8)
        cap = ActivationCapture(packed, n_samples=3)
        assert np.array_equal(cap.packed_rows[0], cap.packed_rows[1])
        assert swap_score(cap) == 1

    def test_transpose_is_involutive(self):
        rng = np.random.default_rng(2)
        bits = (rng.random((9, 5)) < 0.5).astype(np.uint8)
        cap = ActivationCapture.from_bits(bits)
        assert np.array_equal(cap.transpose().transpose().bits(), bits)

    def test_rejects_non_binary_entries(self):
        with pytest.raises(ContractViolationError):
            ActivationCapture.from_bits(np.array([[0, 2]]))

    def test_rejects_zero_samples(self):
        with pytest.raises(ContractViolationError):
            ActivationCapture.from_bits(np.zeros((3, 0)))


class TestStandardPatternCardinality:
    def test_low_dimensional_batch_with_duplicates(self):
        # Five samples over seven values, one duplicated column pair: 4 patterns.
        columns = np.array(
            [
                [1, 0, 1, 1, 0, 0, 1],
                [0, 0, 1, 0, 1, 1, 0],
                [1, 1, 0, 1, 0, 1, 1],
                [0, 1, 1, 0, 1, 0, 0],
                [0, 0, 1, 0, 1, 1, 0],  # repeats the second sample
            ],
            dtype=np.uint8,
        )
        cap = ActivationCapture.from_bits(columns.T)
        assert cap.bits().shape == (7, 5)
        assert standard_pattern_cardinality(cap) == 4

    def test_higher_dimensional_batch_hits_sample_bound(self):
        # Same shape, all five columns distinct: the count reaches S = 5.
        cols = np.array(
            [
                [1, 0, 1, 1, 0],
                [0, 0, 1, 0, 1],
                [1, 1, 0, 1, 1],
                [0, 1, 1, 0, 0],
                [1, 0, 0, 1, 1],
                [0, 0, 1, 1, 0],
                [1, 1, 1, 0, 1],
            ],
            dtype=np.uint8,
        )
        cap = ActivationCapture.from_bits(cols)
        assert standard_pattern_cardinality(cap) == 5

    def test_identical_samples_collapse_to_one(self):
        bits = np.tile(np.array([[1], [0], [1]], dtype=np.uint8), (1, 6))
        assert standard_pattern_cardinality(ActivationCapture.from_bits(bits)) == 1

    def test_empty_capture_rejected(self):
        cap = ActivationCapture(np.zeros((0, 1), dtype=np.uint8), n_samples=4)
        with pytest.raises(ContractViolationError):
            standard_pattern_cardinality(cap)


class TestSwapScore:
    def test_all_zero_capture(self):
        cap = ActivationCapture.from_bits(np.zeros((10, 4), dtype=np.uint8))
        assert swap_score(cap) == 1

    def test_identical_samples_bound(self):
        rng = np.random.default_rng(3)
        col = (rng.random((50, 1)) < 0.5).astype(np.uint8)
        cap = ActivationCapture.from_bits(np.tile(col, (1, 8)))
        assert swap_score(cap) <= 2

    def test_matches_naive_oracle_on_fixed_instance(self):
        rng = np.random.default_rng(4018)
        bits = (rng.random((40, 8)) < 0.5).astype(np.uint8)
        cap = ActivationCapture.from_bits(bits)
        assert swap_score(cap) == naive_row_count(bits) == 36

    def test_matches_naive_oracle_on_random_sweep(self):
        rng = np.random.default_rng(5)
        for _ in range(200):
            v = int(rng.integers(1, 70))
            s = int(rng.integers(1, 20))
            bits = (rng.random((v, s)) < rng.uniform(0.1, 0.9)).astype(np.uint8)
            cap = ActivationCapture.from_bits(bits)
            assert swap_score(cap) == naive_row_count(bits)
            assert standard_pattern_cardinality(cap) == naive_col_count(bits)

    def test_wide_captures_use_multiword_path(self):
        rng = np.random.default_rng(6)
        bits = (rng.random((30, 100)) < 0.5).astype(np.uint8)
        cap = ActivationCapture.from_bits(bits)
        assert swap_score(cap) == naive_row_count(bits)
        assert standard_pattern_cardinality(cap) == naive_col_count(bits)


class TestCardinalityProperties:
    def test_bounds(self):
        rng = np.random.default_rng(7)
        for _ in range(100):
            v = int(rng.integers(1, 40))
            s = int(rng.integers(1, 12))
            bits = (rng.random((v, s)) < 0.5).astype(np.uint8)
            cap = ActivationCapture.from_bits(bits)
            assert 1 <= standard_pattern_cardinality(cap) <= min(s, 2**v)
            assert 1 <= swap_score(cap) <= min(v, 2**s)

    def test_duplicating_a_sample_keeps_swap_score(self):
        rng = np.random.default_rng(8)
        for _ in range(50):
            bits = (rng.random((20, 6)) < 0.5).astype(np.uint8)
            col = int(rng.integers(6))
            grown = np.concatenate([bits, bits[:, col : col + 1]], axis=1)
            assert swap_score(ActivationCapture.from_bits(grown)) == swap_score(
                ActivationCapture.from_bits(bits)
            )

    def test_duplicating_a_value_keeps_standard_count(self):
        rng = np.random.default_rng(9)
        for _ in range(50):
            bits = (rng.random((20, 6)) < 0.5).astype(np.uint8)
            row = int(rng.integers(20))
            grown = np.concatenate([bits, bits[row : row + 1, :]], axis=0)
            assert standard_pattern_cardinality(
                ActivationCapture.from_bits(grown)
            ) == standard_pattern_cardinality(ActivationCapture.from_bits(bits))

    def test_transpose_duality(self):
        rng = np.random.default_rng(10)
        for _ in range(50):
            bits = (rng.random((15, 7)) < 0.5).astype(np.uint8)
            cap = ActivationCapture.from_bits(bits)
            assert swap_score(cap) == standard_pattern_cardinality(cap.transpose())


class TestRegularisation:
    def test_factor_is_one_at_centre(self):
        params = RegularisationParams(mu=2.0, sigma=0.5)
        assert regularisation_factor(2.0, params) == 1.0

    def test_factor_e_inverse_one_width_away(self):
        params = RegularisationParams(mu=2.0, sigma=0.49)
        value = regularisation_factor(2.0 + math.sqrt(0.49), params)
        assert value == pytest.approx(math.exp(-1), rel=1e-12)
        assert value == pytest.approx(0.367879, abs=1e-6)

    def test_tiny_centre_crushes_large_models(self):
        params = RegularisationParams(mu=0.3, sigma=0.3)
        value = regularisation_factor(5.0, params)
        assert value == pytest.approx(math.exp(-(4.7**2) / 0.3), rel=1e-12)
        assert value == pytest.approx(1.1e-32, rel=0.05)

    def test_symmetry_about_centre(self):
        params = RegularisationParams(mu=3.0, sigma=1.7)
        for d in np.linspace(0.01, 4.0, 100):
            left = regularisation_factor(3.0 - d, params)
            right = regularisation_factor(3.0 + d, params)
            assert left == pytest.approx(right, rel=1e-12)

    def test_strictly_decreasing_in_distance(self):
        params = RegularisationParams(mu=1.0, sigma=2.0)
        values = [regularisation_factor(1.0 + d, params) for d in np.linspace(0.0, 10.0, 50)]
        assert all(a > b for a, b in zip(values, values[1:]))

    def test_non_decreasing_in_sigma(self):
        for theta in (0.2, 1.5, 9.0):
            values = [
                regularisation_factor(theta, RegularisationParams(mu=1.0, sigma=sg))
                for sg in np.linspace(0.1, 20.0, 40)
            ]
            assert all(a <= b for a, b in zip(values, values[1:]))

    def test_invalid_params_rejected(self):
        with pytest.raises(ContractViolationError):
            RegularisationParams(mu=1.0, sigma=0.0)
        with pytest.raises(ContractViolationError):
            RegularisationParams(mu=-1.0, sigma=1.0)

    def test_regularised_score_examples(self):
        params = RegularisationParams(mu=0.7, sigma=0.25)
        assert regularised_swap_score(100, 0.7, params) == 100.0
        assert regularised_swap_score(0, 123.4, params) == 0.0
        value = regularised_swap_score(1000, 0.7 + math.sqrt(0.25), params)
        assert value == pytest.approx(1000 * math.exp(-1), rel=1e-12)
        assert value == pytest.approx(367.879, abs=1e-3)

    def test_regularised_never_exceeds_raw(self):
        rng = np.random.default_rng(11)
        for _ in range(100):
            params = RegularisationParams(mu=rng.uniform(0.1, 5), sigma=rng.uniform(0.1, 5))
            raw = int(rng.integers(0, 1000))
            assert regularised_swap_score(raw, rng.uniform(0.01, 10), params) <= raw
