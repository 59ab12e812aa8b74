import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pica.errors import DegenerateInputError, ParameterError
from pica.metrics import SDR_CAP_DB, align, cosine_distance, sdr, summarize
from pica.signal import generate_mixing_matrix, generate_sources


@pytest.fixture(scope="module")
def truth():
    return generate_sources(4, 8000, seed=13)


class TestAlign:
    def test_identity(self, truth):
        a = align(truth, truth)
        assert a.permutation == (0, 1, 2, 3)
        np.testing.assert_allclose(a.scales, 1.0)

    def test_swap_and_negate(self, truth):
        est = truth[[1, 0, 2, 3]].copy()
        est[2] *= -1
        a = align(est, truth)
        assert a.permutation == (1, 0, 2, 3)
        np.testing.assert_allclose(a.scales, [1, 1, -1, 1])

    def test_near_identity_remix(self, truth, rng):
        Q, _ = np.linalg.qr(np.eye(4) + 1e-3 * rng.standard_normal((4, 4)))
        Q = Q * np.sign(np.diag(Q))
        assert align(Q @ truth, truth).permutation == (0, 1, 2, 3)

    def test_too_many_sources(self, rng):
        X = rng.standard_normal((9, 50))
        with pytest.raises(ParameterError):
            align(X, X)

    def test_zero_variance(self, truth):
        est = truth.copy()
        est[1] = 0.0
        with pytest.raises(DegenerateInputError):
            align(est, truth)


class TestSDR:
    def test_exact_match_capped(self, truth):
        per, mean = sdr(truth, truth)
        np.testing.assert_array_equal(per, SDR_CAP_DB)
        assert mean == SDR_CAP_DB

    def test_orthogonal_residual_20db(self, truth, rng):
        est = truth.copy()
        for i, s in enumerate(truth):
            e = rng.standard_normal(s.size)
            e -= (e @ s) / (s @ s) * s
            e *= math.sqrt((s @ s) / 100) / np.linalg.norm(e)
            est[i] = s + e
        per, _ = sdr(est, truth)
        np.testing.assert_allclose(per, 20.0, atol=1e-9)

    def test_pure_rescale_capped(self, truth):
        per, _ = sdr(3 * truth, truth)
        np.testing.assert_array_equal(per, SDR_CAP_DB)

    @given(st.integers(0, 2**31 - 1))
    @settings(max_examples=30, deadline=None)
    def test_permutation_and_scale_invariance(self, seed):
        rng = np.random.default_rng(seed)
        S = generate_sources(4, 4000, seed=seed % 1000)
        est = S + 0.05 * rng.standard_normal(S.shape)
        base, _ = sdr(est, S)
        perm = rng.permutation(4)
        scales = rng.uniform(0.1, 10, 4) * rng.choice([-1, 1], 4)
        moved, _ = sdr(est[perm] * scales[perm, None], S)
        np.testing.assert_allclose(moved, base, atol=1e-9)


class TestCosineDistance:
    def test_inverse_is_zero(self):
        A = generate_mixing_matrix(4, seed=2)
        assert cosine_distance(np.linalg.inv(A), A) == pytest.approx(0.0, abs=1e-12)

    def test_negated_inverse_is_zero(self):
        A = generate_mixing_matrix(4, seed=2)
        assert cosine_distance(-np.linalg.inv(A), A) == pytest.approx(0.0, abs=1e-12)

    def test_row_scaled_permuted_inverse_is_zero(self):
        A = generate_mixing_matrix(4, seed=3)
        W = np.diag([2.0, -0.5, 3.0, 1.0]) @ np.linalg.inv(A)[[2, 0, 3, 1]]
        assert cosine_distance(W, A) == pytest.approx(0.0, abs=1e-12)

    def test_frobenius_orthogonal_is_one(self):
        # A = I, so the target is I; an off-diagonal W has zero inner product.
        W = np.array([[0.0, 1.0], [1.0, 0.0]])
        assert cosine_distance(W, np.eye(2), align_rows=False) == pytest.approx(1.0)

    def test_range(self, rng):
        A = generate_mixing_matrix(3, seed=0)
        for _ in range(20):
            d = cosine_distance(rng.standard_normal((3, 3)), A)
            assert 0.0 <= d <= 2.0

    @given(st.integers(0, 2**31 - 1))
    @settings(max_examples=30, deadline=None)
    def test_self_distance_zero(self, seed):
        M = np.random.default_rng(seed).standard_normal((4, 4))
        if np.linalg.cond(M) > 1e8:
            return
        assert cosine_distance(np.linalg.inv(M), M) == pytest.approx(0.0, abs=1e-9)


class TestSummarize:
    def test_single_value(self):
        s = summarize([5.0])
        assert (s.mean, s.ci95_low, s.ci95_high, s.count) == (5.0, 5.0, 5.0, 1)

    def test_one_two_three(self):
        # stderr = 1 / sqrt(3); half width = 1.96 / sqrt(3) = 1.131607...
        s = summarize([1, 2, 3])
        assert s.mean == pytest.approx(2.0)
        assert s.ci95_low == pytest.approx(0.868393, abs=1e-6)
        assert s.ci95_high == pytest.approx(3.131607, abs=1e-6)

    def test_all_equal_zero_width(self):
        s = summarize([4.2] * 7)
        assert s.ci95_low == s.ci95_high == pytest.approx(4.2)

    def test_empty(self):
        with pytest.raises(ParameterError):
            summarize([])

    def test_width_scales_with_inverse_sqrt_count(self):
        rng = np.random.default_rng(0)
        ratios = []
        for _ in range(50):
            a = summarize(rng.standard_normal(100))
            b = summarize(rng.standard_normal(400))
            ratios.append((a.ci95_high - a.ci95_low) / (b.ci95_high - b.ci95_low))
        assert np.mean(ratios) == pytest.approx(2.0, rel=0.15)
