"""Tests for the categorical simplex geometry.

The sparsemax checks use an independent brute-force oracle: the projection's
KKT conditions force the solution to be an equality-constrained least-squares
point on some support, so enumerating all 2^K - 1 supports and keeping the
feasible candidate closest to s is exact.
"""

import itertools

import mpmath
import numpy as np
import pytest
from numpy.testing import assert_allclose

from latentgrad.simplex import (
    argmax_onehot,
    softmax,
    softmax_vjp,
    sparsemax,
    sparsemax_vjp,
)


def project_simplex_bruteforce(s):
    """Exact simplex projection by exhaustive search over supports."""
    s = np.asarray(s, dtype=np.float64)
    best, best_dist = None, np.inf
    for r in range(1, s.size + 1):
        for support in itertools.combinations(range(s.size), r):
            idx = list(support)
            p = np.zeros_like(s)
            p[idx] = s[idx] - (s[idx].sum() - 1.0) / r
            if np.any(p[idx] < 0):
                continue
            dist = np.sum((p - s) ** 2)
            if dist < best_dist:
                best, best_dist = p, dist
    return best


def central_diff_jacobian(f, x, step=1e-5):
    n = x.size
    out_dim = f(x).size
    jac = np.zeros((out_dim, n))
    for j in range(n):
        e = np.zeros_like(x)
        e[j] = step
        jac[:, j] = (f(x + e) - f(x - e)) / (2 * step)
    return jac


class TestArgmaxOnehot:
    def test_unique_max(self):
        assert_allclose(argmax_onehot([0.0, 0.0, 5.0]), [0, 0, 1])

    def test_tie_breaks_to_lowest_index(self):
        assert_allclose(argmax_onehot([2.0, 2.0, 0.0]), [1, 0, 0])

    def test_negative_scores(self):
        assert_allclose(argmax_onehot([-1.0, -3.0]), [1, 0])

    def test_rejects_non_finite(self):
        with pytest.raises(ValueError):
            argmax_onehot([np.nan, 0.0])
        with pytest.raises(ValueError):
            argmax_onehot([np.inf, 0.0])

    def test_shift_invariance(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            s = rng.normal(size=rng.integers(2, 8))
            c = rng.normal()
            assert_allclose(argmax_onehot(s), argmax_onehot(s + c))

    def test_is_vertex(self):
        rng = np.random.default_rng(1)
        for _ in range(50):
            z = argmax_onehot(rng.normal(size=5))
            assert z.sum() == 1.0
            assert set(np.unique(z)) <= {0.0, 1.0}


class TestSoftmax:
    def test_uniform_on_constant(self):
        assert_allclose(softmax([0.0, 0.0, 0.0]), np.full(3, 1 / 3))

    def test_saturation_is_stable(self):
        assert_allclose(softmax([1000.0, 0.0]), [1.0, 0.0], atol=1e-12)

    def test_closed_form_two_scores(self):
        # softmax([1, 2]) = [1/(1+e), e/(1+e)]
        e = np.e
        assert_allclose(softmax([1.0, 2.0]), [1 / (1 + e), e / (1 + e)], rtol=1e-15)

    def test_matches_arbitrary_precision(self):
        """Cross-check against a 50-digit mpmath evaluation."""
        rng = np.random.default_rng(2)
        with mpmath.workdps(50):
            for _ in range(20):
                s = rng.normal(scale=5.0, size=rng.integers(2, 7))
                es = [mpmath.e**v for v in s]
                tot = mpmath.fsum(es)
                expected = np.array([float(v / tot) for v in es])
                assert_allclose(softmax(s), expected, rtol=1e-14)

    def test_simplex_invariants(self):
        rng = np.random.default_rng(3)
        for _ in range(100):
            p = softmax(rng.normal(scale=10.0, size=rng.integers(2, 12)))
            assert np.all(p >= 0)
            assert abs(p.sum() - 1.0) < 1e-9


class TestSparsemax:
    def test_spec_example(self):
        assert_allclose(sparsemax([0.8, 0.6, 0.1]), [0.6, 0.4, 0.0], atol=1e-15)

    def test_large_margin_gives_vertex(self):
        assert_allclose(sparsemax([5.0, 0.0, 0.0]), [1.0, 0.0, 0.0])

    def test_symmetry(self):
        for c in (-3.0, 0.0, 0.25, 7.0):
            assert_allclose(sparsemax([c, c]), [0.5, 0.5])

    def test_matches_bruteforce_projection(self):
        """Projection equals the exhaustive-support oracle on random vectors."""
        rng = np.random.default_rng(4)
        for _ in range(200):
            s = rng.normal(scale=rng.uniform(0.1, 3.0), size=rng.integers(2, 6))
            assert_allclose(sparsemax(s), project_simplex_bruteforce(s), atol=1e-8)

    def test_margin_above_one_is_vertex(self):
        rng = np.random.default_rng(5)
        for _ in range(50):
            s = rng.normal(size=6)
            i = rng.integers(6)
            s[i] = np.delete(s, i).max() + 1.0 + rng.uniform(0.01, 2.0)
            expected = np.zeros(6)
            expected[i] = 1.0
            assert_allclose(sparsemax(s), expected)

    def test_simplex_invariants(self):
        rng = np.random.default_rng(6)
        for _ in range(100):
            p = sparsemax(rng.normal(scale=10.0, size=rng.integers(2, 12)))
            assert np.all(p >= 0)
            assert abs(p.sum() - 1.0) < 1e-9


class TestSoftmaxVjp:
    def test_annihilates_constants(self):
        assert_allclose(softmax_vjp([0.0, 0.0], [1.0, 1.0]), [0.0, 0.0], atol=1e-15)

    def test_closed_form(self):
        assert_allclose(softmax_vjp([0.0, 0.0], [1.0, 0.0]), [0.25, -0.25])

    def test_zero_cotangent(self):
        rng = np.random.default_rng(7)
        s = rng.normal(size=5)
        assert_allclose(softmax_vjp(s, np.zeros(5)), np.zeros(5))

    def test_rejects_length_mismatch(self):
        with pytest.raises(ValueError):
            softmax_vjp([0.0, 0.0], [1.0, 0.0, 0.0])

    def test_matches_finite_differences(self):
        rng = np.random.default_rng(8)
        for _ in range(30):
            k = rng.integers(2, 7)
            s = rng.normal(scale=2.0, size=k)
            g = rng.normal(size=k)
            jac = central_diff_jacobian(softmax, s)
            expected = jac.T @ g
            got = softmax_vjp(s, g)
            assert_allclose(got, expected, rtol=1e-4, atol=1e-7)


class TestSparsemaxVjp:
    def test_constant_cotangent_full_support(self):
        assert_allclose(sparsemax_vjp([0.1, 0.0, -0.1], [3.0, 3.0, 3.0]), np.zeros(3))

    def test_spec_example(self):
        # support {0, 1}: centered cotangent on the support, zero outside
        assert_allclose(sparsemax_vjp([0.8, 0.6, 0.1], [1.0, 0.0, 7.0]), [0.5, -0.5, 0.0])

    def test_singleton_support_is_zero(self):
        assert_allclose(sparsemax_vjp([5.0, 0.0, 0.0], [1.0, 2.0, 3.0]), np.zeros(3))

    def test_matches_finite_differences_at_stable_support(self):
        """FD check at points whose support is unchanged under the FD step."""
        rng = np.random.default_rng(9)
        checked = 0
        while checked < 30:
            k = rng.integers(2, 7)
            s = rng.normal(scale=2.0, size=k)
            p = sparsemax(s)
            active = p > 0
            # skip points too close to a support change
            if np.any(p[active] < 1e-3):
                continue
            g = rng.normal(size=k)
            jac = central_diff_jacobian(sparsemax, s)
            assert_allclose(sparsemax_vjp(s, g), jac.T @ g, rtol=1e-4, atol=1e-7)
            checked += 1
