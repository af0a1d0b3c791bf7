import numpy as np
import pytest
from hypothesis import given, strategies as st

from neoc.errors import NonPositiveValueError, ProblemValidationError, SingularSystemError
from neoc.services import sensitivity
from neoc.services.basis import default_order, gauss_grid, monomial_basis
from neoc.services.hjb import eval_value
from neoc.services.laws import expr_law, reference_adjustment, reference_law
from neoc.services.problem import load_problem
from neoc.services.sensitivity import (
    NeocLaw,
    estimate_M,
    homotopy_neoc,
    min_steps,
    neoc_adjustment,
    neoc_law,
    perturbation_sweep,
    recalculate,
    suggest_steps,
    value_change,
    value_sensitivity,
    value_sensitivity_integrand,
    weight_sensitivity,
)
from neoc.services.sim import grid_points, trajectory_integral
from tests.conftest import builtin_setup, initial_law, solved

# xdot = -x + u, cost u^2 + (a^2 + 2a) x^2: optimal value a x^2, law -a x
LINEAR_IN_ALPHA = """
[dims]
state = 1
control = 1
params = 1

[dynamics]
f1 = -x1
g11 = 1

[cost]
m = (a1^2 + 2*a1)*x1^2
R = 1

[domain]
lo = -1
hi = 1

[params]
names = a1
nominal = 1
"""


def _make_linear_setup():
    problem = load_problem(LINEAR_IN_ALPHA, name="linear_in_alpha")
    basis = monomial_basis(1, [2, 4])
    grid = gauss_grid((problem.lo, problem.hi), default_order(basis))
    return problem, basis, grid, expr_law(problem, ["-x1"])


@pytest.fixture(scope="module")
def scalar_sens(scalar_solution):
    return weight_sensitivity(scalar_solution)


class TestWeightSensitivity:
    def test_shape(self, scalar_sens):
        assert scalar_sens.J_w_alpha.shape == (5, 1)
        assert np.isfinite(scalar_sens.cond)
        np.testing.assert_array_equal(scalar_sens.alpha, [1.0])

    @pytest.mark.parametrize(
        "name",
        ["scalar_siso", "bilinear", "cartpole_lqr", pytest.param("pendulum", marks=pytest.mark.slow)],
    )
    def test_matches_finite_difference_of_weights(self, name):
        base = solved(name)
        sens = weight_sensitivity(base)
        h = 1e-4
        for l in range(base.alpha.size):
            up, down = base.alpha.copy(), base.alpha.copy()
            up[l] += h
            down[l] -= h
            fd = (solved(name, tuple(up)).weights - solved(name, tuple(down)).weights) / (2 * h)
            tol = 1e-4 * (1 + np.linalg.norm(base.weights) + np.linalg.norm(fd))
            assert np.abs(sens.J_w_alpha[:, l] - fd).max() <= tol, base.problem.alpha_names[l]

    def test_value_sensitivity_matches_finite_difference(self, scalar_solution, scalar_sens):
        h = 1e-4
        x = np.array([0.7])
        up = eval_value(solved("scalar_siso", (1.0 + h,)), x)
        down = eval_value(solved("scalar_siso", (1.0 - h,)), x)
        assert value_sensitivity(scalar_solution, scalar_sens, x)[0] == pytest.approx((up - down) / (2 * h), abs=1e-5)

    def test_value_change_is_linear(self, scalar_solution, scalar_sens):
        x = np.array([0.5])
        xi = value_sensitivity(scalar_solution, scalar_sens, x)[0]
        assert value_change(scalar_solution, scalar_sens, x, [0.3]) == pytest.approx(0.3 * xi)


class TestNeocLaw:
    def test_scalar_adjustment_at_one(self, scalar_solution, scalar_sens):
        du = neoc_adjustment(scalar_solution, scalar_sens, np.array([1.0]), [0.5])
        assert du[0] == pytest.approx(0.125, abs=1e-2)

    def test_scalar_adjustment_tracks_closed_form(self, scalar_solution, scalar_sens, line_points):
        du = neoc_adjustment(scalar_solution, scalar_sens, line_points, [0.5])
        exact = reference_adjustment(scalar_solution.problem, line_points, [0.5])
        assert np.abs(du - exact).max() <= 1e-2

    def test_bilinear_adjustment_at_one(self, bilinear_solution):
        sens = weight_sensitivity(bilinear_solution)
        du = neoc_adjustment(bilinear_solution, sens, np.array([1.0]), [0.2])
        assert du[0] == pytest.approx(-0.2121, abs=3e-2)

    def test_zero_perturbation_is_base_law(self, pendulum_solution):
        sens = weight_sensitivity(pendulum_solution)
        pts = grid_points(pendulum_solution.problem.lo, pendulum_solution.problem.hi, 21)
        law = neoc_law(pendulum_solution, sens, [0.0, 0.0])
        np.testing.assert_array_equal(law.batch(pts), pendulum_solution.law().batch(pts))

    def test_adjustment_is_linear_in_delta(self, scalar_solution, scalar_sens, line_points):
        one = neoc_adjustment(scalar_solution, scalar_sens, line_points, [0.2])
        two = neoc_adjustment(scalar_solution, scalar_sens, line_points, [0.4])
        np.testing.assert_allclose(two, 2 * one, rtol=1e-12, atol=1e-15)

    def test_error_against_closed_form(self, scalar_solution, scalar_sens, line_points):
        problem = scalar_solution.problem
        u_ne = NeocLaw(scalar_solution, scalar_sens, [0.5]).batch(line_points)
        u_exact = reference_law(problem, alpha=[1.5]).batch(line_points)
        assert np.abs(u_ne - u_exact).max() == pytest.approx(0.023, abs=5e-3)

    def test_error_against_recalculated_law(self, scalar_solution, scalar_sens, line_points):
        problem, basis, grid = builtin_setup("scalar_siso")
        recalc = recalculate(problem, basis, grid, [1.5], base=scalar_solution)
        u_ne = NeocLaw(scalar_solution, scalar_sens, [0.5]).batch(line_points)
        assert np.abs(u_ne - recalc.law().batch(line_points)).max() == pytest.approx(0.023, abs=5e-3)

    def test_wrong_delta_length(self, pendulum_solution):
        sens = weight_sensitivity(pendulum_solution)
        with pytest.raises(ProblemValidationError, match="param_dim"):
            NeocLaw(pendulum_solution, sens, [0.1])

    def test_describe(self, scalar_solution, scalar_sens):
        info = NeocLaw(scalar_solution, scalar_sens, [0.5]).describe()
        assert info["kind"] == "NeocLaw"
        assert info["delta_alpha"] == [0.5]
        assert info["base"]["kind"] == "GalerkinLaw"
        assert len(info["J_w_alpha"]) == 5


class TestErrorScaling:
    def test_error_grows_quadratically(self, scalar_solution, line_points):
        problem, basis, grid = builtin_setup("scalar_siso")
        deltas = [[0.05], [0.1], [0.2]]
        rows = perturbation_sweep(problem, basis, grid, scalar_solution, deltas, line_points)
        assert [r.delta_alpha for r in rows] == deltas
        for small, large in zip(rows, rows[1:]):
            assert 3.4 <= large.sup / small.sup <= 4.6
        for r in rows:
            assert 0 < r.rms <= r.sup

    @pytest.mark.slow
    def test_pendulum_error_small(self, pendulum_solution):
        problem, basis, grid = builtin_setup("pendulum")
        pts = grid_points(problem.lo, problem.hi, 21)
        (row,) = perturbation_sweep(problem, basis, grid, pendulum_solution, [[-0.2, 0.2]], pts)
        recalc = recalculate(problem, basis, grid, [0.8, 1.2], base=pendulum_solution)
        assert row.sup < 0.1 * np.abs(recalc.law().batch(pts)).max()


class TestValueSensitivityIntegral:
    @pytest.mark.slow
    @pytest.mark.parametrize("x0", [0.3, 0.6, 1.0])
    def test_matches_closed_loop_integral(self, scalar_solution, scalar_sens, x0):
        s = scalar_solution
        x0 = np.array([x0])
        integral = trajectory_integral(
            s.problem, s.alpha, s.law(), x0, value_sensitivity_integrand(s), decay_tol=1e-7
        )
        xi = value_sensitivity(s, scalar_sens, x0)
        assert abs(integral[0] - xi[0]) <= max(2e-2, 0.05 * abs(xi[0]))


class TestStepCount:
    def test_examples(self):
        assert min_steps(2.0, 1.0, 1.0) == 1
        assert min_steps(2.0, 5.0, 0.25) == 100
        assert min_steps(1.0, [3.0, 4.0], 0.5) == 25

    @pytest.mark.parametrize("M, eps", [(0.0, 1.0), (-1.0, 1.0), (1.0, 0.0)])
    def test_rejects_non_positive(self, M, eps):
        with pytest.raises(ValueError):
            min_steps(M, 1.0, eps)

    @given(
        M=st.floats(1e-3, 1e3),
        delta=st.floats(-10, 10),
        eps=st.floats(1e-3, 10),
    )
    def test_smallest_sufficient_count(self, M, delta, eps):
        n = min_steps(M, delta, eps)
        bound = M * delta**2 / (2 * eps)
        assert n >= 1
        assert n >= bound * (1 - 1e-12)
        assert n == 1 or n - 1 < bound

    def test_estimate_on_closed_form_problem(self):
        problem, basis, grid = builtin_setup("scalar_siso")
        M = estimate_M(problem, basis, grid, initial_law("scalar_siso"), ([1.0], [1.5]), points=np.linspace(-1, 1, 41)[:, None])
        # |d2u/dalpha2| peaks at x = 1, alpha = 1.125 among the interior samples
        assert M == pytest.approx(0.190, rel=0.1)

    def test_linear_in_alpha_needs_one_step(self):
        problem, basis, grid, u0 = _make_linear_setup()
        M = estimate_M(problem, basis, grid, u0, ([0.8], [1.2]))
        assert M < 1e-3
        assert suggest_steps(problem, basis, grid, u0, ([0.8], [1.2]), [0.5], 0.01) == 1

    def test_degenerate_range(self):
        problem, basis, grid, u0 = _make_linear_setup()
        with pytest.raises(ProblemValidationError, match="degenerate"):
            estimate_M(problem, basis, grid, u0, ([1.0], [1.0]))


class TestRecalculate:
    def test_needs_a_starting_law(self):
        problem, basis, grid = builtin_setup("scalar_siso")
        with pytest.raises(ValueError):
            recalculate(problem, basis, grid, [1.5])

    def test_warm_start_matches_cold_start(self, scalar_solution):
        problem, basis, grid = builtin_setup("scalar_siso")
        warm = recalculate(problem, basis, grid, [1.2], base=scalar_solution)
        cold = recalculate(problem, basis, grid, [1.2], u0=initial_law("scalar_siso"))
        np.testing.assert_allclose(warm.weights, cold.weights, atol=1e-7)


class TestHomotopy:
    def test_single_step_is_neoc(self, scalar_solution, scalar_sens, line_points):
        problem, basis, grid = builtin_setup("scalar_siso")
        result = homotopy_neoc(problem, basis, grid, scalar_solution, [0.5], 1)
        expected = neoc_law(scalar_solution, scalar_sens, [0.5]).batch(line_points)
        np.testing.assert_allclose(result.law.batch(line_points), expected, rtol=1e-13, atol=1e-15)
        assert len(result.steps) == 1

    def test_zero_perturbation_keeps_base(self, scalar_solution, line_points):
        problem, basis, grid = builtin_setup("scalar_siso")
        result = homotopy_neoc(problem, basis, grid, scalar_solution, [0.0], 5)
        np.testing.assert_array_equal(result.weights, scalar_solution.weights)
        np.testing.assert_array_equal(result.law.batch(line_points), scalar_solution.law().batch(line_points))
        assert [s.step for s in result.steps] == [1, 2, 3, 4, 5]

    def test_rejects_zero_steps(self, scalar_solution):
        problem, basis, grid = builtin_setup("scalar_siso")
        with pytest.raises(ValueError):
            homotopy_neoc(problem, basis, grid, scalar_solution, [0.5], 0)

    def test_last_step_reaches_target(self, scalar_solution):
        problem, basis, grid = builtin_setup("scalar_siso")
        result = homotopy_neoc(problem, basis, grid, scalar_solution, [0.5], 4)
        assert result.steps[-1].alpha == pytest.approx([1.5])

    def test_polish_at_least_as_accurate(self, scalar_solution, line_points):
        problem, basis, grid = builtin_setup("scalar_siso")
        target = recalculate(problem, basis, grid, [1.5], base=scalar_solution).law().batch(line_points)
        plain = homotopy_neoc(problem, basis, grid, scalar_solution, [0.5], 5)
        polished = homotopy_neoc(problem, basis, grid, scalar_solution, [0.5], 5, polish=True)
        err_plain = np.abs(plain.law.batch(line_points) - target).max()
        err_polished = np.abs(polished.law.batch(line_points) - target).max()
        assert err_polished <= err_plain
        assert polished.law.name == "homotopy"

    def test_singular_step_reports_progress(self, scalar_solution, monkeypatch):
        problem, basis, grid = builtin_setup("scalar_siso")
        real = sensitivity.weight_sensitivity
        calls = {"n": 0}

        def failing(*args, **kwargs):
            calls["n"] += 1
            if calls["n"] == 2:
                raise SingularSystemError("sensitivity system is singular")
            return real(*args, **kwargs)

        monkeypatch.setattr(sensitivity, "weight_sensitivity", failing)
        with pytest.raises(SingularSystemError, match="step 2") as exc:
            homotopy_neoc(problem, basis, grid, scalar_solution, [0.5], 3)
        assert exc.value.diagnostics["step"] == 2
        assert len(exc.value.diagnostics["steps"]) == 1

    def test_polish_failure_reports_step(self, scalar_solution, monkeypatch):
        problem, basis, grid = builtin_setup("scalar_siso")
        real = sensitivity.galerkin_step
        calls = {"n": 0}

        def failing(*args, **kwargs):
            calls["n"] += 1
            if calls["n"] == 3:
                raise NonPositiveValueError("policy evaluation produced non-positive value", {"min_value": -1.0})
            return real(*args, **kwargs)

        monkeypatch.setattr(sensitivity, "galerkin_step", failing)
        with pytest.raises(NonPositiveValueError, match="step 3") as exc:
            homotopy_neoc(problem, basis, grid, scalar_solution, [0.5], 4, polish=True)
        assert exc.value.diagnostics["step"] == 3
        assert exc.value.diagnostics["min_value"] == -1.0
        assert len(exc.value.diagnostics["steps"]) == 2

    @pytest.mark.slow
    def test_more_steps_reduce_error(self, scalar_solution, line_points):
        problem, basis, grid = builtin_setup("scalar_siso")
        target = recalculate(problem, basis, grid, [6.0], base=scalar_solution).law().batch(line_points)
        errors = []
        for n in (1, 10, 50, 100):
            law = homotopy_neoc(problem, basis, grid, scalar_solution, [5.0], n).law
            errors.append(np.abs(law.batch(line_points) - target).max())
        assert all(b < a for a, b in zip(errors, errors[1:]))
        assert errors[-1] < 0.1 * errors[0]
