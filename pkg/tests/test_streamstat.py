import math
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ratescope.streamstat import (
    FilterKernel,
    InsufficientDataError,
    OnlineMoments,
    SampleWindow,
    convolve_valid,
    gaussian_kernel,
    log_kernel,
    quantile95,
    update_moments,
)

# Direct evaluation of the kernel formulas (mpmath, 30 digits).
GAUSS_W0 = 0.3989422804014327
GAUSS_W1 = 0.24197072451914337
GAUSS_W2 = 0.05399096651318806
GAUSS_SUM = 0.9908656624660956
LOG_W0 = -3.1915382432114614
LOG_W1 = 1.2957831963165132
LOG_SUM = -0.5999718505784349


def brute_force_convolve(values, kernel):
    r = kernel.radius
    out = []
    for i in range(r, len(values) - r):
        out.append(
            sum(values[i + x] * kernel.weights[x + r] for x in range(-r, r + 1))
        )
    return out


class TestGaussianKernel:
    def test_unnormalized_values(self):
        k = gaussian_kernel(2, normalize=False)
        assert k.weights[2] == pytest.approx(GAUSS_W0, abs=1e-12)
        assert k.weights[1] == k.weights[3] == pytest.approx(GAUSS_W1, abs=1e-12)
        assert k.weights[0] == k.weights[4] == pytest.approx(GAUSS_W2, abs=1e-12)
        assert k.weight_sum == pytest.approx(GAUSS_SUM, abs=1e-12)

    def test_normalized_sums_to_one(self):
        k = gaussian_kernel(2, normalize=True)
        assert k.weight_sum == pytest.approx(1.0, abs=1e-12)
        raw = gaussian_kernel(2, normalize=False)
        for w, u in zip(k.weights, raw.weights):
            assert w == pytest.approx(u / GAUSS_SUM, rel=1e-12)

    def test_radius_zero_rejected(self):
        with pytest.raises(ValueError):
            gaussian_kernel(0)


class TestLogKernel:
    def test_values(self):
        k = log_kernel(0.5, 1)
        assert k.weights[1] == pytest.approx(LOG_W0, abs=1e-9)
        assert k.weights[0] == k.weights[2] == pytest.approx(LOG_W1, abs=1e-9)

    def test_constant_response_is_weight_sum_times_constant(self):
        k = log_kernel(0.5, 1)
        c = 42.0
        out = convolve_valid([c] * 10, k)
        for v in out:
            assert v == pytest.approx(c * LOG_SUM, rel=1e-12)

    def test_bad_args(self):
        with pytest.raises(ValueError):
            log_kernel(0.0, 1)
        with pytest.raises(ValueError):
            log_kernel(0.5, 0)


class TestConvolveValid:
    def test_constant_preserved_by_normalized_gaussian(self):
        k = gaussian_kernel(2, normalize=True)
        out = convolve_valid([100.0] * 10, k)
        assert len(out) == 6
        for v in out:
            assert v == pytest.approx(100.0, abs=1e-9)

    def test_window_too_small_gives_empty(self):
        k = gaussian_kernel(2)
        assert convolve_valid([1.0, 2.0, 3.0, 4.0], k) == []

    def test_matches_brute_force(self):
        k = gaussian_kernel(2)
        vals = [1.0, 2.0, 3.0, 4.0, 5.0]
        assert convolve_valid(vals, k) == pytest.approx(
            brute_force_convolve(vals, k), abs=1e-12
        )

    @given(
        st.lists(st.floats(-1e6, 1e6), min_size=5, max_size=64),
        st.integers(1, 3),
    )
    @settings(max_examples=200)
    def test_brute_force_oracle_property(self, vals, radius):
        k = gaussian_kernel(radius)
        got = convolve_valid(vals, k)
        want = brute_force_convolve(vals, k)
        assert got == pytest.approx(want, abs=1e-9)

    def test_linearity(self):
        rng = random.Random(5)
        k = gaussian_kernel(2)
        s1 = [rng.uniform(0, 100) for _ in range(20)]
        s2 = [rng.uniform(0, 100) for _ in range(20)]
        a, b = 2.5, -1.25
        combo = [a * x + b * y for x, y in zip(s1, s2)]
        want = [
            a * u + b * v
            for u, v in zip(convolve_valid(s1, k), convolve_valid(s2, k))
        ]
        assert convolve_valid(combo, k) == pytest.approx(want, rel=1e-10)

    def test_shift_equivariance(self):
        rng = random.Random(7)
        k = gaussian_kernel(2)
        s = [rng.uniform(0, 100) for _ in range(21)]
        shifted = s[1:]
        assert convolve_valid(s, k)[1:] == pytest.approx(
            convolve_valid(shifted, k), rel=1e-12
        )

    def test_log_of_affine_sequence_constant_response(self):
        k = log_kernel(0.5, 1)
        a, b = 3.0, 17.0
        seq = [a * i + b for i in range(12)]
        out = convolve_valid(seq, k)
        # symmetric kernel kills the linear term; response is value * sum
        for i, v in enumerate(out, start=1):
            assert v == pytest.approx(seq[i] * LOG_SUM, rel=1e-9)

    def test_smoothing_contracts_dispersion(self):
        rng = random.Random(11)
        k = gaussian_kernel(2, normalize=True)
        for _ in range(50):
            vals = [rng.gauss(100, 25) for _ in range(40)]
            raw = OnlineMoments()
            raw.update_many(vals)
            filt = OnlineMoments()
            filt.update_many(convolve_valid(vals, k))
            assert filt.variance <= raw.variance


class TestOnlineMoments:
    def test_single_value(self):
        m = OnlineMoments()
        m = update_moments(m, 7.0)
        assert (m.n, m.mean, m.m2) == (1, 7.0, 0.0)

    def test_known_stream(self):
        m = OnlineMoments()
        m.update_many([2, 4, 4, 4, 5, 5, 7, 9])
        assert m.mean == pytest.approx(5.0)
        assert m.variance_population == pytest.approx(4.0)
        assert m.variance == pytest.approx(32.0 / 7.0)

    def test_matches_two_pass_oracle(self):
        rng = random.Random(3)
        vals = [rng.gauss(50, 12) for _ in range(5000)]
        m = OnlineMoments()
        m.update_many(vals)
        mean = sum(vals) / len(vals)
        var = sum((x - mean) ** 2 for x in vals) / (len(vals) - 1)
        assert m.mean == pytest.approx(mean, rel=1e-9)
        assert m.variance == pytest.approx(var, rel=1e-9)

    def test_numerical_stability_large_offset(self):
        rng = random.Random(9)
        vals = [1e9 + rng.gauss(0, 1) for _ in range(100_000)]
        m = OnlineMoments()
        m.update_many(vals)
        mean = math.fsum(vals) / len(vals)
        var = math.fsum((x - mean) ** 2 for x in vals) / (len(vals) - 1)
        assert m.variance == pytest.approx(var, rel=1e-6)

    @given(
        st.lists(st.floats(-1e6, 1e6), min_size=2, max_size=200),
        st.integers(1, 199),
    )
    @settings(max_examples=100)
    def test_merge_equals_concatenation(self, vals, cut):
        cut = min(cut, len(vals) - 1)
        left, right = OnlineMoments(), OnlineMoments()
        left.update_many(vals[:cut])
        right.update_many(vals[cut:])
        whole = OnlineMoments()
        whole.update_many(vals)
        merged = left.merge(right)
        assert merged.n == whole.n
        assert merged.mean == pytest.approx(whole.mean, rel=1e-9, abs=1e-9)
        assert merged.m2 == pytest.approx(whole.m2, rel=1e-9, abs=1e-6)

    def test_variance_needs_two(self):
        m = OnlineMoments()
        m.update(1.0)
        with pytest.raises(InsufficientDataError):
            _ = m.variance


class TestQuantile95:
    def test_formula(self):
        m = OnlineMoments(n=100, mean=100.0, m2=99 * 100.0)  # stddev 10
        assert quantile95(m) == pytest.approx(100.0 + 1.64485 * 10.0)

    def test_zero_spread(self):
        m = OnlineMoments()
        m.update_many([5.0, 5.0, 5.0])
        assert quantile95(m) == 5.0

    def test_against_analytic_gaussian_percentile(self):
        rng = random.Random(17)
        m = OnlineMoments()
        m.update_many(rng.gauss(50, 5) for _ in range(10_000))
        assert quantile95(m) == pytest.approx(58.224, rel=0.01)

    def test_insufficient(self):
        with pytest.raises(InsufficientDataError):
            quantile95(OnlineMoments())


class TestSampleWindow:
    def test_sliding_and_filtered_size(self):
        w = SampleWindow(8)
        k = gaussian_kernel(2)
        for i in range(4):
            w.push(float(i))
        assert w.filtered(k) == []
        for i in range(4, 12):
            w.push(float(i))
        assert len(w) == 8 and w.full
        assert w.values() == [float(i) for i in range(4, 12)]
        assert len(w.filtered(k)) == 8 - 4

    def test_bad_size(self):
        with pytest.raises(ValueError):
            SampleWindow(0)

    def test_kernel_length_validated(self):
        with pytest.raises(ValueError):
            FilterKernel(radius=2, weights=(1.0, 2.0), normalized=False)
