"""Genotype mapping: bit lengths, decoding, encoding, population sizing."""

import math

import numpy as np
import pytest

from ecsqp.encoding import (
    Chromosome,
    EncodingSpec,
    VariableSpec,
    compute_bit_length,
    decode,
    decode_batch,
    encode,
    min_population_size,
    random_bits,
)


def bits(text: str) -> Chromosome:
    return Chromosome(np.array([int(c) for c in text], dtype=np.uint8))


class TestComputeBitLength:
    def test_worked_range(self):
        # 1000 grid cells fit in 10 bits: 2^9 <= 1000 <= 2^10
        assert compute_bit_length(-5.0, 5.0, 0.01) == 10

    def test_single_interval_pins_one_bit(self):
        assert compute_bit_length(0.0, 1.0, 1.0) == 1

    def test_wide_range(self):
        # smallest l with 2^l >= 100000, confirmed by brute force
        ratio = 100000
        expected = next(l for l in range(1, 64) if 2**l >= ratio)
        assert compute_bit_length(-500.0, 500.0, 0.01) == expected == 17

    def test_exact_power_takes_smaller_length(self):
        assert compute_bit_length(-5.12, 5.12, 0.01) == 10  # ratio exactly 1024

    def test_both_inequality_sides_hold(self):
        rng = np.random.default_rng(7)
        for _ in range(200):
            lo = rng.uniform(-100, 0)
            hi = lo + rng.uniform(0.5, 300)
            p = rng.uniform(1e-4, 0.5)
            l = compute_bit_length(lo, hi, p)
            ratio = (hi - lo) / p
            assert ratio <= 2**l
            if l > 1:
                assert 2 ** (l - 1) <= ratio

    def test_domain_errors(self):
        with pytest.raises(ValueError):
            compute_bit_length(1.0, 1.0, 0.1)
        with pytest.raises(ValueError):
            compute_bit_length(0.0, 1.0, 0.0)
        with pytest.raises(ValueError):
            compute_bit_length(2.0, 1.0, 0.1)


class TestMinPopulationSize:
    @pytest.mark.parametrize(
        "length,confidence,expected",
        [(200, 0.999, 19), (10, 0.999, 15), (1, 0.5, 2)],
    )
    def test_direct_evaluation(self, length, confidence, expected):
        direct = math.ceil(1.0 + math.log2(length / -math.log(confidence)))
        assert direct == expected
        assert min_population_size(length, confidence) == expected

    def test_preconditions(self):
        with pytest.raises(ValueError):
            min_population_size(0, 0.5)
        with pytest.raises(ValueError):
            min_population_size(10, 1.0)


class TestDecode:
    def test_worked_example_follows_mapping_formula(self):
        # 1011000010 encodes the integer 706; the range map places it at
        # -5 + 10/1023 * 706.  (A published version of this example prints
        # -4.37, which actually corresponds to the integer 64.)
        spec = EncodingSpec.for_bounds([-5.0], [5.0], 0.01)
        c = bits("1011000010")
        assert int("1011000010", 2) == 706
        expected = -5.0 + 10.0 / 1023.0 * 706
        assert decode(c, spec)[0] == pytest.approx(expected, abs=1e-12)
        assert decode(bits("0001000000"), spec)[0] == pytest.approx(-4.37, abs=0.005)

    def test_all_zero_hits_lower_bound(self):
        spec = EncodingSpec.for_bounds([-5.0, -500.0], [5.0, 500.0], 0.01)
        x = decode(Chromosome(np.zeros(spec.total_length, dtype=np.uint8)), spec)
        assert x[0] == -5.0 and x[1] == -500.0

    def test_all_one_hits_upper_bound(self):
        spec = EncodingSpec.for_bounds([-5.0, -500.0], [5.0, 500.0], 0.01)
        x = decode(Chromosome(np.ones(spec.total_length, dtype=np.uint8)), spec)
        assert x[0] == 5.0 and x[1] == 500.0

    def test_length_mismatch(self):
        spec = EncodingSpec.for_bounds([-5.0], [5.0], 0.01)
        with pytest.raises(ValueError):
            decode(bits("101"), spec)

    def test_batch_agrees_with_single(self, rng):
        spec = EncodingSpec.for_bounds([-15.0, 0.0, -5.0], [30.0, 2.0, 5.0], 0.01)
        mat = random_bits(spec.total_length, 50, rng)
        batch = decode_batch(mat, spec)
        for i in range(50):
            np.testing.assert_array_equal(batch[i], decode(Chromosome(mat[i]), spec))

    def test_monotone_in_integer_code(self):
        spec = EncodingSpec.for_bounds([2.0], [7.0], 0.01)
        l = spec.variables[0].bit_length
        codes = np.arange(2**l)
        mat = ((codes[:, None] >> np.arange(l - 1, -1, -1)) & 1).astype(np.uint8)
        values = decode_batch(mat, spec)[:, 0]
        assert np.all(np.diff(values) > 0)


class TestEncode:
    def test_lower_bounds_give_all_zero(self):
        spec = EncodingSpec.for_bounds([-5.0, -1.0], [5.0, 4.0], 0.01)
        c = encode([-5.0, -1.0], spec)
        assert not c.bits.any()

    def test_round_trip_is_exact(self, rng):
        # encode is the exact inverse of decode on every grid point
        spec = EncodingSpec.for_bounds([-5.0, -500.0], [5.0, 500.0], [0.01, 0.01])
        for _ in range(1000):
            c = Chromosome(random_bits(spec.total_length, 1, rng)[0])
            assert encode(decode(c, spec), spec) == c

    def test_midpoint_ties_round_down(self):
        spec = EncodingSpec(variables=(VariableSpec(0.0, 3.0, 1.0, bit_length=2),))
        # grid {0, 1, 2, 3}; 1.5 sits exactly between codes 1 and 2
        assert encode([1.5], spec) == bits("01")

    def test_nearest_grid_point_error_bound(self, rng):
        spec = EncodingSpec.for_bounds([-5.0], [5.0], 0.01)
        step = spec.variables[0].grid_step
        for _ in range(300):
            x = rng.uniform(-5.0, 5.0)
            back = decode(encode([x], spec), spec)[0]
            assert abs(back - x) <= step / 2 + 1e-12
            assert abs(back - x) <= 0.01 / 2 + 1e-12  # step is below the precision here

    def test_clamps_marginal_overshoot_only(self):
        spec = EncodingSpec.for_bounds([0.0], [1.0], 0.01)
        assert decode(encode([1.005], spec), spec)[0] == 1.0
        with pytest.raises(ValueError):
            encode([1.5], spec)


class TestSpecs:
    def test_total_length_sums_fields(self):
        spec = EncodingSpec.for_bounds([-5.0, -500.0], [5.0, 500.0], 0.01)
        assert spec.total_length == 10 + 17
        assert spec.dimension == 2

    def test_variable_spec_validates_bit_length(self):
        with pytest.raises(ValueError):
            VariableSpec(0.0, 1.0, 0.01, bit_length=3)  # needs 7

    def test_chromosome_rejects_non_binary(self):
        with pytest.raises(ValueError):
            Chromosome(np.array([0, 2, 1], dtype=np.uint8))
