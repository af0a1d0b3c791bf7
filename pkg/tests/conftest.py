from functools import lru_cache

import numpy as np
import pytest

from neoc.services.basis import default_order, gauss_grid, monomial_basis, parse_basis_spec
from neoc.services.hjb import HjbSolution, policy_iteration
from neoc.services.laws import ControlLaw, LinearGain, expr_law
from neoc.services.lqr import lqr_problem, stabilizing_gain
from neoc.services.problem import builtin, catalog, load_problem

SCALAR_LQ = """
[dims]
state = 1
control = 1
params = 1

[dynamics]
f1 = -a*x1
g11 = 1

[cost]
m = x1^2
R = 1

[domain]
lo = -1
hi = 1

[params]
names = a
nominal = 1
"""


def builtin_setup(name: str):
    """Problem, catalog basis and default-order grid for a builtin."""
    problem = builtin(name)
    basis = monomial_basis(problem.state_dim, parse_basis_spec(catalog()[name].basis, problem.state_dim))
    grid = gauss_grid((problem.lo, problem.hi), default_order(basis))
    return problem, basis, grid


def initial_law(name: str) -> ControlLaw:
    problem = builtin(name)
    entry = catalog()[name]
    if entry.u0:
        return expr_law(problem, entry.u0)
    A, B, _ = lqr_problem(problem).matrices()
    return LinearGain(stabilizing_gain(A, B), name="u0")


@lru_cache(maxsize=None)
def solved(name: str, alpha: tuple[float, ...] | None = None) -> HjbSolution:
    """Converged policy iteration for a builtin, memoised across the whole session."""
    problem, basis, grid = builtin_setup(name)
    return policy_iteration(problem, None if alpha is None else np.array(alpha), basis, grid, initial_law(name))


@pytest.fixture(scope="session")
def scalar_solution() -> HjbSolution:
    return solved("scalar_siso")


@pytest.fixture(scope="session")
def bilinear_solution() -> HjbSolution:
    return solved("bilinear")


@pytest.fixture(scope="session")
def pendulum_solution() -> HjbSolution:
    return solved("pendulum")


@pytest.fixture(scope="session")
def cartpole_solution() -> HjbSolution:
    return solved("cartpole_lqr")


@pytest.fixture(scope="session")
def scalar_lq():
    """xdot = -x + u with cost u^2 + x^2; P = sqrt(2) - 1."""
    return load_problem(SCALAR_LQ, name="scalar_lq")


@pytest.fixture
def line_points() -> np.ndarray:
    return np.linspace(-1.0, 1.0, 201)[:, None]
