import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from etlwatch.errors import ContractViolationError, NumericalError
from etlwatch.numerics import SeededRng, finite_diff_grad, matvec

finite_floats = st.floats(min_value=-1e6, max_value=1e6, allow_nan=False)


class TestMatvec:
    def test_identity(self):
        out = matvec(np.eye(2), np.array([3.0, -2.0]))
        np.testing.assert_array_equal(out, [3.0, -2.0])

    def test_zero_matrix(self):
        out = matvec(np.zeros((3, 2)), np.array([1.7, -4.2]))
        np.testing.assert_array_equal(out, [0.0, 0.0, 0.0])

    def test_hand_expansion(self):
        # [[1,2],[3,4]] @ [1,1]: rows give 1+2=3 and 3+4=7
        out = matvec(np.array([[1.0, 2.0], [3.0, 4.0]]), np.array([1.0, 1.0]))
        np.testing.assert_array_equal(out, [3.0, 7.0])

    def test_dimension_mismatch_names_both_shapes(self):
        with pytest.raises(ContractViolationError, match=r"2x3.*length 2"):
            matvec(np.zeros((2, 3)), np.zeros(2))

    @given(
        st.integers(min_value=1, max_value=5),
        st.integers(min_value=1, max_value=5),
        st.floats(min_value=-100, max_value=100),
        st.floats(min_value=-100, max_value=100),
        st.randoms(use_true_random=False),
    )
    def test_linearity(self, rows, cols, a, b, rnd):
        m = np.array([[rnd.uniform(-10, 10) for _ in range(cols)] for _ in range(rows)])
        u = np.array([rnd.uniform(-10, 10) for _ in range(cols)])
        v = np.array([rnd.uniform(-10, 10) for _ in range(cols)])
        left = matvec(m, a * u + b * v)
        right = a * matvec(m, u) + b * matvec(m, v)
        np.testing.assert_allclose(left, right, rtol=1e-12, atol=1e-9)


class TestFiniteDiffGrad:
    def test_square(self):
        grad = finite_diff_grad(lambda x: x[0] ** 2, np.array([3.0]), h=1e-5)
        assert grad[0] == pytest.approx(6.0, abs=1e-6)

    def test_constant_function(self):
        grad = finite_diff_grad(lambda x: 4.5, np.array([1.0, -2.0, 0.3]))
        np.testing.assert_array_equal(grad, np.zeros(3))

    def test_product(self):
        # f = x0*x1 has gradient (x1, x0)
        grad = finite_diff_grad(lambda x: x[0] * x[1], np.array([2.0, 5.0]), h=1e-5)
        np.testing.assert_allclose(grad, [5.0, 2.0], atol=1e-6)

    def test_nonfinite_probe_reports_index(self):
        def f(x):
            return float("inf") if x[1] > 1.0 else x[0]

        with pytest.raises(NumericalError, match="index 1"):
            finite_diff_grad(f, np.array([0.0, 1.0]))

    def test_rejects_nonpositive_step(self):
        with pytest.raises(ContractViolationError):
            finite_diff_grad(lambda x: 0.0, np.array([1.0]), h=0.0)

    @given(st.randoms(use_true_random=False), st.integers(min_value=1, max_value=6))
    @settings(max_examples=30)
    def test_matches_analytic_gradient_on_quadratics(self, rnd, n):
        a = np.array([[rnd.uniform(-2, 2) for _ in range(n)] for _ in range(n)])
        b = np.array([rnd.uniform(-2, 2) for _ in range(n)])
        c = rnd.uniform(-2, 2)
        x = np.array([rnd.uniform(-2, 2) for _ in range(n)])

        def f(v):
            return float(v @ a @ v + b @ v + c)

        analytic = (a + a.T) @ x + b
        approx = finite_diff_grad(f, x, h=1e-5)
        denom = np.maximum(np.abs(analytic), 1.0)
        assert np.max(np.abs(approx - analytic) / denom) < 1e-6


class TestSeededRng:
    def test_identical_seeds_give_identical_streams(self):
        a, b = SeededRng(42), SeededRng(42)
        assert [a.next_u64() for _ in range(100)] == [b.next_u64() for _ in range(100)]

    def test_first_draws_are_distinct(self):
        rng = SeededRng(42)
        assert rng.uniform() != rng.uniform()

    def test_different_seeds_differ(self):
        assert SeededRng(1).next_u64() != SeededRng(2).next_u64()

    def test_uniform_stays_in_range(self):
        rng = SeededRng(9)
        for _ in range(1000):
            value = rng.uniform(-2.0, 3.0)
            assert -2.0 <= value < 3.0

    def test_uniform_rejects_bad_bounds(self):
        with pytest.raises(ContractViolationError):
            SeededRng(0).uniform(1.0, 1.0)

    def test_law_of_large_numbers(self):
        # 1e5 draws on [0,1): sample mean within [0.49, 0.51]
        rng = SeededRng(123)
        mean = sum(rng.uniform() for _ in range(100_000)) / 100_000
        assert 0.49 <= mean <= 0.51

    def test_shuffled_indices_is_permutation(self):
        perm = SeededRng(5).shuffled_indices(50)
        assert sorted(perm.tolist()) == list(range(50))

    def test_index_bounds(self):
        rng = SeededRng(3)
        assert all(0 <= rng.index(7) < 7 for _ in range(200))
        with pytest.raises(ContractViolationError):
            rng.index(0)
