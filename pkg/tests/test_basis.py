import numpy as np
import pytest
from hypothesis import given, strategies as st

from neoc.errors import BasisError
from neoc.services.basis import (
    default_order,
    expr_function,
    gauss_grid,
    inner_product,
    monomial_basis,
    parse_basis_spec,
    quadratic_basis,
)
from neoc.services.expr import evaluate, parse

PENDULUM_SPEC = [(2, 0), (1, 1), (0, 2), (4, 0), (3, 1), (2, 2), (1, 3), (0, 4)]


def _make_grid(order=5, lo=-1.0, hi=1.0):
    return gauss_grid(([lo], [hi]), order)


class TestMonomialBasis:
    def test_even_scalar_basis(self):
        basis = monomial_basis(1, [2, 4, 6, 8, 10])
        assert basis.size == 5
        assert basis.max_degree == 10
        assert basis.spec() == "2;4;6;8;10"

    def test_two_dimensional(self):
        basis = monomial_basis(2, PENDULUM_SPEC)
        assert basis.size == 8
        assert basis.dim == 2

    def test_constant_function_rejected(self):
        with pytest.raises(BasisError, match="constant"):
            monomial_basis(1, [0])

    def test_duplicate_rejected(self):
        with pytest.raises(BasisError, match="duplicate"):
            monomial_basis(1, [2, 4, 2])

    def test_negative_exponent_rejected(self):
        with pytest.raises(BasisError, match="negative"):
            monomial_basis(2, [(2, -1)])

    def test_wrong_arity(self):
        with pytest.raises(BasisError, match="expected 2"):
            monomial_basis(2, [(2,)])

    def test_degree_one_warns(self, caplog):
        monomial_basis(1, [1, 2])
        assert "non-smooth" in caplog.text

    def test_vanishes_at_origin(self):
        basis = monomial_basis(2, PENDULUM_SPEC)
        values, grads = basis.evaluate(np.zeros((1, 2)))
        np.testing.assert_array_equal(values, 0.0)
        np.testing.assert_array_equal(grads, 0.0)

    def test_evaluate_matches_expressions(self):
        basis = monomial_basis(2, PENDULUM_SPEC)
        rng = np.random.default_rng(3)
        pts = rng.uniform(-1, 1, (50, 2))
        values, grads = basis.evaluate(pts)
        for j, (psi, grad) in enumerate(zip(basis.functions, basis.gradients)):
            b = {"x1": pts[:, 0], "x2": pts[:, 1]}
            np.testing.assert_allclose(values[:, j], evaluate(psi, b), rtol=1e-13, atol=1e-15)
            for i in range(2):
                np.testing.assert_allclose(grads[:, j, i], evaluate(grad[i], b) * np.ones(50), rtol=1e-13, atol=1e-15)

    def test_gradients_match_finite_differences(self):
        basis = monomial_basis(2, PENDULUM_SPEC)
        rng = np.random.default_rng(11)
        pts = rng.uniform(-1, 1, (50, 2))
        _, grads = basis.evaluate(pts)
        h = 1e-6
        for i in range(2):
            step = np.zeros(2)
            step[i] = h
            up, _ = basis.evaluate(pts + step)
            down, _ = basis.evaluate(pts - step)
            np.testing.assert_allclose(grads[:, :, i], (up - down) / (2 * h), atol=1e-7)

    def test_hessian_at_origin(self):
        H = monomial_basis(2, PENDULUM_SPEC).hessian_origin()
        np.testing.assert_array_equal(H[0], [[2, 0], [0, 0]])
        np.testing.assert_array_equal(H[1], [[0, 1], [1, 0]])
        np.testing.assert_array_equal(H[2], [[0, 0], [0, 2]])
        np.testing.assert_array_equal(H[3:], 0.0)

    def test_quadratic_basis(self):
        basis = quadratic_basis(4)
        assert basis.size == 10
        assert basis.max_degree == 2

    def test_default_order(self):
        assert default_order(monomial_basis(1, [2, 4, 6, 8, 10])) == 12
        assert default_order(quadratic_basis(3)) == 4


class TestParseBasisSpec:
    def test_scalar(self):
        assert parse_basis_spec("2;4;6", 1) == [(2,), (4,), (6,)]

    def test_vector(self):
        assert parse_basis_spec("2 0; 1 1;0 2", 2) == [(2, 0), (1, 1), (0, 2)]

    def test_bad_entry(self):
        with pytest.raises(BasisError, match="bad multi-index"):
            parse_basis_spec("2;x", 1)

    def test_wrong_length(self):
        with pytest.raises(BasisError, match="entries"):
            parse_basis_spec("2 0 1", 2)

    def test_empty(self):
        with pytest.raises(BasisError):
            parse_basis_spec(" ; ", 1)


class TestGaussGrid:
    def test_weights_sum_to_length(self):
        grid = _make_grid(5)
        assert grid.size == 5
        assert grid.weights.sum() == pytest.approx(2.0, abs=1e-14)

    def test_square(self):
        grid = gauss_grid(([-1, -1], [1, 1]), 4)
        assert grid.size == 16
        assert grid.volume == pytest.approx(4.0)
        assert grid.weights.sum() == pytest.approx(4.0, abs=1e-13)

    def test_nodes_strictly_inside(self):
        grid = gauss_grid(([-1, 0], [1, 2]), 6)
        assert np.all(grid.nodes > grid.lo) and np.all(grid.nodes < grid.hi)
        assert np.all(grid.weights > 0)

    def test_integrates_square(self):
        assert _make_grid(5).integrate(_make_grid(5).nodes[:, 0] ** 2) == pytest.approx(2 / 3, abs=1e-14)

    @given(order=st.integers(2, 12), k=st.integers(0, 23))
    def test_exact_for_monomials(self, order, k):
        if k > 2 * order - 1:
            return
        grid = _make_grid(order)
        exact = 0.0 if k % 2 else 2.0 / (k + 1)
        value = grid.integrate(grid.nodes[:, 0] ** k)
        assert abs(value - exact) <= 1e-13 * max(1.0, abs(exact))

    @given(
        lo=st.floats(-3, 0, exclude_max=True),
        width=st.floats(0.1, 4),
        k=st.integers(0, 7),
    )
    def test_exact_on_shifted_interval(self, lo, width, k):
        hi = lo + width
        grid = _make_grid(4, lo, hi)
        exact = (hi ** (k + 1) - lo ** (k + 1)) / (k + 1)
        value = grid.integrate(grid.nodes[:, 0] ** k)
        assert value == pytest.approx(exact, rel=1e-12, abs=1e-12)

    def test_order_too_small(self):
        with pytest.raises(BasisError):
            _make_grid(1)

    def test_node_limit(self):
        with pytest.raises(BasisError, match="exceed"):
            gauss_grid(([0] * 7, [1] * 7), 8)


class TestInnerProduct:
    def test_x_x(self):
        x = lambda pts: pts[:, 0]
        assert inner_product(x, x, _make_grid(5)) == pytest.approx(0.666666666666667, abs=1e-15)

    def test_odd_integrand(self):
        grid = _make_grid(5)
        assert abs(inner_product(lambda p: p[:, 0], lambda p: p[:, 0] ** 2, grid)) <= 1e-15

    def test_even_powers(self):
        grid = _make_grid(4)
        x2 = expr_function(parse("x1^2"), 1)
        x4 = expr_function(parse("x1^4"), 1)
        assert inner_product(x2, x4, grid) == pytest.approx(2 / 7, rel=1e-14)

    def test_arrays_accepted(self):
        grid = _make_grid(3)
        assert inner_product(np.ones(3), np.ones(3), grid) == pytest.approx(2.0)

    def test_non_finite_names_node(self):
        grid = _make_grid(3)
        with pytest.raises(BasisError, match="node 1"):
            inner_product(lambda p: 1.0 / p[:, 0], np.ones(3), grid)


class TestGram:
    def test_tabulate_is_cached(self):
        basis = monomial_basis(1, [2, 4])
        grid = _make_grid(6)
        assert basis.tabulate(grid) is basis.tabulate(grid)

    def test_gram_entries(self):
        basis = monomial_basis(1, [2, 4])
        gram = basis.gram(_make_grid(6))
        np.testing.assert_allclose(gram, [[2 / 5, 2 / 7], [2 / 7, 2 / 9]], rtol=1e-13)

    def test_independence_on_adequate_grid(self):
        cond = monomial_basis(1, [2, 4, 6, 8, 10]).check_independence(_make_grid(12))
        assert cond < 1e12

    def test_dependent_on_coarse_grid(self):
        basis = monomial_basis(1, [2, 4, 6, 8, 10])
        with pytest.raises(BasisError, match="dependent"):
            basis.check_independence(_make_grid(2))
