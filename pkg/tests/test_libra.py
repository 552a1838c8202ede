import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from irnet.errors import DegenerateWeightsError, DimensionError, DomainError
from irnet.libra import (
    LN2,
    bernoulli_entropy,
    binarize_activations,
    brute_force_shift,
    entropy_from_fraction,
    libra_pb,
    quantization_error,
    shift_scale,
    sign_binarize,
    standardize,
    standardize_channels,
)


class TestStandardize:
    def test_hand_example(self):
        out = standardize([1.0, 2.0, 3.0])
        expected = (np.array([1.0, 2.0, 3.0]) - 2.0) / math.sqrt(2.0 / 3.0)
        np.testing.assert_allclose(out.values, expected, atol=1e-12)
        np.testing.assert_allclose(out.values, [-1.2247, 0.0, 1.2247], atol=1e-4)
        assert out.source_mean == 2.0

    def test_already_standard(self):
        assert standardize([-1.0, 1.0]).values.tolist() == [-1.0, 1.0]

    def test_constant_is_error(self):
        with pytest.raises(DegenerateWeightsError):
            standardize([5.0, 5.0, 5.0])

    def test_too_small(self):
        with pytest.raises(DimensionError):
            standardize([1.0])

    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.floats(-1e3, 1e3, allow_nan=False), min_size=2, max_size=200))
    def test_zero_mean_unit_std(self, xs):
        w = np.array(xs)
        if np.std(w - w.mean()) < 1e-6:
            return
        v = standardize(w).values
        assert abs(v.mean()) <= 1e-10
        assert abs(v.std() - 1.0) <= 1e-10

    def test_channel_error_names_channel(self):
        w = np.random.default_rng(0).normal(size=(3, 4))
        w[1] = 2.0
        with pytest.raises(DegenerateWeightsError) as info:
            standardize_channels(w, layer="conv3")
        assert info.value.channel == 1
        assert info.value.layer == "conv3"


class TestSign:
    def test_zero_maps_to_plus_one(self):
        assert sign_binarize([-0.5, 0.0, 2.0]).tolist() == [-1.0, 1.0, 1.0]

    def test_all_negative(self):
        assert sign_binarize([-3.0, -1e-300]).tolist() == [-1.0, -1.0]

    @given(st.lists(st.floats(-10, 10, allow_nan=False), min_size=1, max_size=50))
    def test_idempotent(self, xs):
        s = sign_binarize(xs)
        assert np.array_equal(sign_binarize(s), s)

    def test_activations(self):
        assert binarize_activations([0.1, -0.1, 0.0]).tolist() == [1.0, -1.0, 1.0]
        ht = np.clip(np.array([-0.3, 0.2, 0.99]), -1, 1)
        assert set(np.abs(binarize_activations(ht)).tolist()) == {1.0}

    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.floats(0.01, 10), min_size=1, max_size=40))
    def test_symmetric_inputs_sum_to_zero(self, mags):
        # w = {+m_i} U {-m_i} is mean zero with exactly balanced signs
        m = np.array(mags)
        w = np.concatenate([m, -m])
        assert sign_binarize(standardize(w).values).sum() == 0


class TestShift:
    def test_unit(self):
        assert shift_scale([1.0, 1.0, 1.0, 1.0]) == 0
        assert brute_force_shift([1.0, 1.0, 1.0, 1.0]) == 0

    def test_two(self):
        assert shift_scale([2.0, -2.0]) == 1
        assert brute_force_shift([2.0, -2.0]) == 1

    def test_mixed(self):
        v = [0.3, -0.9, 1.2, -0.6]
        assert shift_scale(v) == 0
        assert brute_force_shift(v) == 0

    def test_round_half_even(self):
        # exponents that land exactly on .5 in floating point
        for e, expected in ((2.5, 2), (1.5, 2), (-1.5, -2)):
            v = np.full(4, 2.0**e)
            assert math.log2(2.0**e) == e
            assert shift_scale(v) == expected

    def test_zero_norm(self):
        with pytest.raises(DegenerateWeightsError):
            shift_scale([0.0, 0.0])
        with pytest.raises(DegenerateWeightsError):
            brute_force_shift([0.0, 0.0])

    def test_brute_force_ties_go_to_smaller_abs(self):
        # mean|v| = 0.75 = 1.5 * 2**-1: s=-1 and s=0 tie exactly
        v = np.array([0.75, -0.75])
        err = lambda s: np.sum((v - np.sign(v) * 2.0**s) ** 2)
        assert err(-1) == err(0)
        assert brute_force_shift(v) == 0

    def test_against_oracle_gaussian(self):
        rng = np.random.default_rng(11)
        agree = 0
        trials = 500
        for _ in range(trials):
            v = standardize(rng.normal(size=256))
            s, sb = shift_scale(v), brute_force_shift(v)
            assert abs(s - sb) <= 1
            agree += s == sb
        assert agree / trials >= 0.95

    @settings(max_examples=100, deadline=None)
    @given(st.lists(st.floats(-100, 100, allow_nan=False), min_size=2, max_size=64))
    def test_within_one_of_oracle(self, xs):
        v = np.array(xs)
        if np.sum(np.abs(v)) < 1e-3 or np.max(np.abs(v)) > 2.0**7:
            return
        assert abs(shift_scale(v) - brute_force_shift(v)) <= 1


class TestLibraPB:
    def test_two_element(self):
        b = libra_pb(np.array([1.0, -1.0]))
        assert b.signs.tolist() == [1.0, -1.0]
        assert b.shift.tolist() == [0]
        assert b.reconstruct().tolist() == [1.0, -1.0]

    def test_three_element(self):
        b = libra_pb(np.array([1.0, 2.0, 3.0]))
        assert b.signs.tolist() == [-1.0, 1.0, 1.0]
        v = standardize([1.0, 2.0, 3.0]).values
        assert np.mean(np.abs(v)) == pytest.approx(0.8165, abs=1e-4)
        assert b.shift.tolist() == [shift_scale(v)] == [0]
        assert brute_force_shift(v) == 0

    def test_constant(self):
        with pytest.raises(DegenerateWeightsError):
            libra_pb(np.array([5.0, 5.0, 5.0]))

    def test_per_channel(self):
        rng = np.random.default_rng(4)
        w = rng.normal(size=(6, 3, 3, 3)) * np.arange(1, 7)[:, None, None, None]
        b = libra_pb(w)
        assert b.channel_count == 6
        assert b.signs.shape == w.shape
        for c in range(6):
            v = standardize(w[c]).values
            assert b.shift[c] == shift_scale(v)
            assert np.array_equal(b.signs[c], sign_binarize(v))

    def test_gaussian_entropy_near_max(self):
        rng = np.random.default_rng(5)
        w = rng.normal(0.3, 1.0, size=(8, 1024))
        assert bernoulli_entropy(libra_pb(w).signs).ratio >= 0.99

    def test_latent_not_mutated(self):
        w = np.random.default_rng(6).normal(size=(4, 9))
        before = w.copy()
        libra_pb(w)
        assert np.array_equal(w, before)


class TestEntropy:
    def test_all_plus(self):
        r = bernoulli_entropy(np.ones(10))
        assert r.p_hat == 1.0 and r.entropy_nats == 0.0

    def test_half(self):
        r = bernoulli_entropy(np.array([1.0, -1.0] * 8))
        assert r.entropy_nats == pytest.approx(LN2, abs=1e-15)
        assert r.ratio == pytest.approx(1.0)

    def test_point_two(self):
        b = np.array([1.0] * 2 + [-1.0] * 8)
        expected = -0.2 * math.log(0.2) - 0.8 * math.log(0.8)
        assert bernoulli_entropy(b).entropy_nats == pytest.approx(expected, abs=1e-12)
        assert expected == pytest.approx(0.5004, abs=1e-4)

    def test_non_binary(self):
        with pytest.raises(DomainError):
            bernoulli_entropy(np.array([1.0, 0.0]))

    def test_fraction_range(self):
        with pytest.raises(DomainError):
            entropy_from_fraction(1.5)

    @given(st.lists(st.booleans(), min_size=1, max_size=300))
    def test_bounded_and_flip_symmetric(self, bits):
        b = np.where(np.array(bits), 1.0, -1.0)
        h = bernoulli_entropy(b).entropy_nats
        assert 0.0 <= h <= LN2 + 1e-12
        assert bernoulli_entropy(-b).entropy_nats == pytest.approx(h, abs=1e-15)


class TestQuantizationError:
    def test_zero(self):
        x = np.array([0.3, -2.0])
        assert quantization_error(x, x) == 0.0

    def test_simple(self):
        assert quantization_error([0.5], [1.0]) == 0.25

    def test_shape_mismatch(self):
        with pytest.raises(DimensionError):
            quantization_error([1.0, 2.0], [1.0])

    def test_shift_beats_neighbours(self):
        rng = np.random.default_rng(8)
        wins = 0
        for _ in range(200):
            v = standardize(rng.normal(size=1024)).values
            b = sign_binarize(v)
            s = shift_scale(v)
            j = lambda t: quantization_error(v, b * 2.0**t)
            wins += j(s) <= min(j(s - 1), j(s + 1))
        assert wins / 200 >= 0.95

    def test_oracle_shift_never_worse_than_sign_only(self):
        rng = np.random.default_rng(9)
        for scale in (0.1, 3.0, 9.0):
            v = rng.normal(size=128) * scale
            sb = brute_force_shift(v)
            b = sign_binarize(v)
            assert quantization_error(v, b * 2.0**sb) <= quantization_error(v, b)
