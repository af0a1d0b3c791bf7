"""Galerkin policy iteration on the steady-state Hamilton–Jacobi equation.

Each step solves the projected policy-evaluation equation

    A w = b,  A[j, i] = <∇ψ_iᵀ (f + g u), ψ_j>,  b[j] = -<uᵀRu + m, ψ_j>

and improves the law with u = -½ R⁻¹ gᵀ J_Ψᵀ w.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from neoc.config import settings
from neoc.errors import (
    DivergenceError,
    MonotonicityError,
    NonPositiveValueError,
    ProblemValidationError,
    SingularSystemError,
)
from neoc.services.basis import BasisSet, QuadratureGrid
from neoc.services.laws import AdjustedLaw, ControlLaw, ExprLaw, GalerkinLaw, LinearGain  # noqa: F401
from neoc.services.problem import ProblemSpec, derived_fields

logger = logging.getLogger(__name__)


@dataclass
class HjbOptions:
    max_iter: int = field(default_factory=lambda: settings.max_iter)
    tol_w: float = field(default_factory=lambda: settings.tol_w)
    tol_res: float = field(default_factory=lambda: settings.tol_res)
    monotone_slack: float = field(default_factory=lambda: settings.monotone_slack)
    monotone_abort_after: int = field(default_factory=lambda: settings.monotone_abort_after)
    check_admissibility: bool = True


@dataclass
class HjbSolution:
    problem: ProblemSpec
    basis: BasisSet
    grid: QuadratureGrid
    alpha: np.ndarray
    weights: np.ndarray
    iterations: int
    converged: bool
    history: list[np.ndarray] = field(default_factory=list)
    weight_changes: list[float] = field(default_factory=list)
    residual_norms: list[float] = field(default_factory=list)
    diagnostics: dict = field(default_factory=dict)

    def law(self, name: str = "galerkin") -> GalerkinLaw:
        return GalerkinLaw(self.problem, self.basis, self.weights, self.alpha, name=name)

    def value_at_nodes(self, weights: np.ndarray | None = None) -> np.ndarray:
        psi, _ = self.basis.tabulate(self.grid)
        return psi.T @ (self.weights if weights is None else weights)

    def summary(self) -> dict:
        return {
            "weights": self.weights.tolist(),
            "alpha": self.alpha.tolist(),
            "iterations": self.iterations,
            "converged": self.converged,
            "weight_changes": self.weight_changes,
            "residual_norms": self.residual_norms,
            "monotonicity_violations": self.diagnostics.get("monotonicity_violations", []),
        }


# ── Assembly ──

def closed_loop_matrix(basis: BasisSet, grid: QuadratureGrid, drift: np.ndarray) -> np.ndarray:
    """M[j, i] = <∇ψ_iᵀ drift, ψ_j> for a drift field sampled at the nodes (K, n)."""
    psi, grads = basis.tabulate(grid)
    directional = np.einsum("ink,kn->ik", grads, drift)
    return (psi * grid.weights) @ directional.T


def project(basis: BasisSet, grid: QuadratureGrid, values: np.ndarray) -> np.ndarray:
    """<v, ψ_j> for node values v of shape (K,) or (K, q)."""
    psi, _ = basis.tabulate(grid)
    return (psi * grid.weights) @ values


def galerkin_system(problem: ProblemSpec, alpha, basis: BasisSet, grid: QuadratureGrid, law: ControlLaw):
    alpha = problem.alpha_nominal if alpha is None else np.asarray(alpha, dtype=float)
    f, g, m = problem.fields(grid.nodes, alpha)
    U = law.batch(grid.nodes)
    drift = f + np.einsum("knp,kp->kn", g, U)
    running = np.einsum("kp,pq,kq->k", U, problem.R, U) + m
    return closed_loop_matrix(basis, grid, drift), -project(basis, grid, running)


def solve_dense(A: np.ndarray, rhs: np.ndarray, what: str) -> np.ndarray:
    """LU solve with a condition-number gate; rhs may hold several columns."""
    cond = float(np.linalg.cond(A))
    if not np.isfinite(cond) or cond > settings.cond_limit:
        raise SingularSystemError(
            f"{what} is singular or ill-conditioned (cond {cond:.3e}); "
            "check that the law is admissible or change the basis or domain",
            {"cond": cond},
        )
    solution = linalg.lu_solve(linalg.lu_factor(A), rhs)
    if not np.all(np.isfinite(solution)):
        raise SingularSystemError(f"{what} produced non-finite weights", {"cond": cond})
    return solution


def galerkin_step(
    problem: ProblemSpec,
    alpha,
    basis: BasisSet,
    grid: QuadratureGrid,
    law: ControlLaw,
    tol_res: float | None = None,
) -> np.ndarray:
    A, b = galerkin_system(problem, alpha, basis, grid, law)
    w = solve_dense(A, b, "Galerkin system")
    tol_res = settings.tol_res if tol_res is None else tol_res
    residual = float(np.linalg.norm(A @ w - b))
    if residual > tol_res * max(float(np.linalg.norm(b)), 1e-300):
        logger.warning("Galerkin solve residual %.3e exceeds tol_res relative to |b|", residual)
    psi, _ = basis.tabulate(grid)
    phi = psi.T @ w
    floor = -1e-6 * (1.0 + float(np.abs(phi).max()))
    if phi.min() < floor:
        k = int(np.argmin(phi))
        raise NonPositiveValueError(
            "policy evaluation produced non-positive value",
            {"node": grid.nodes[k].tolist(), "value": float(phi[k]), "law": law.name},
        )
    return w


# ── Policy iteration ──

def _monotonicity_excess(phi_old: np.ndarray, phi_new: np.ndarray, slack: float) -> float:
    excess = phi_new - phi_old - slack * (1.0 + np.abs(phi_old))
    return float(excess.max())


def policy_iteration(
    problem: ProblemSpec,
    alpha,
    basis: BasisSet,
    grid: QuadratureGrid,
    u0: ControlLaw,
    opts: HjbOptions | None = None,
) -> HjbSolution:
    opts = opts or HjbOptions()
    alpha = problem.alpha_nominal if alpha is None else np.asarray(alpha, dtype=float)
    basis.check_independence(grid)
    if opts.check_admissibility:
        from neoc.services.sim import require_admissible

        require_admissible(problem, alpha, u0)

    psi, _ = basis.tabulate(grid)
    law: ControlLaw = u0
    w_prev = None
    phi_prev = None
    history, changes, residuals, violations = [], [], [], []
    consecutive = 0
    converged = False
    iteration = 0

    for iteration in range(1, opts.max_iter + 1):
        w = galerkin_step(problem, alpha, basis, grid, law, opts.tol_res)
        if np.abs(w).max() > settings.divergence_limit:
            raise DivergenceError(
                f"weights diverged at iteration {iteration} (|w| = {np.abs(w).max():.3e})",
                {"iteration": iteration},
            )
        history.append(w)
        phi = psi.T @ w
        law = GalerkinLaw(problem, basis, w, alpha)
        residuals.append(float(np.linalg.norm(_projected_residual(problem, alpha, basis, grid, w))))

        if phi_prev is not None and iteration >= 3:
            excess = _monotonicity_excess(phi_prev, phi, opts.monotone_slack)
            if excess > 0:
                violations.append({"iteration": iteration, "excess": excess})
                logger.warning("Value increased at iteration %d by up to %.3e", iteration, excess)
            total_prev, total = grid.weights @ phi_prev, grid.weights @ phi
            if total > total_prev + opts.monotone_slack * (1.0 + abs(total_prev)):
                consecutive += 1
                if consecutive > opts.monotone_abort_after:
                    raise MonotonicityError(
                        f"value failed to decrease for {consecutive} consecutive iterations",
                        {"iteration": iteration, "violations": violations},
                    )
            else:
                consecutive = 0

        if w_prev is not None:
            change = float(np.abs(w - w_prev).max())
            changes.append(change)
            logger.debug("Iteration %d: |dw| = %.3e, residual = %.3e", iteration, change, residuals[-1])
            if change <= opts.tol_w:
                converged = True
                break
        w_prev, phi_prev = w, phi

    if converged:
        logger.info("Policy iteration converged after %d iterations", iteration)
    else:
        logger.warning("Policy iteration stopped at max_iter=%d without reaching tol_w", opts.max_iter)
    return HjbSolution(
        problem=problem,
        basis=basis,
        grid=grid,
        alpha=alpha,
        weights=history[-1],
        iterations=iteration,
        converged=converged,
        history=history,
        weight_changes=changes,
        residual_norms=residuals,
        diagnostics={"monotonicity_violations": violations},
    )


# ── Evaluation ──

def _require_inside(s: HjbSolution, x: np.ndarray, extrapolate: bool) -> None:
    if not extrapolate and not s.problem.contains(x):
        raise ProblemValidationError("x inside the domain", f"x = {np.ravel(x).tolist()}; pass extrapolate=True")


def eval_value(s: HjbSolution, x, extrapolate: bool = False):
    x = np.asarray(x, dtype=float)
    _require_inside(s, x, extrapolate)
    values, _ = s.basis.evaluate(np.atleast_2d(x))
    out = values @ s.weights
    return float(out[0]) if x.ndim == 1 else out


def eval_control(s: HjbSolution, x, extrapolate: bool = False) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    _require_inside(s, x, extrapolate)
    out = s.law().batch(np.atleast_2d(x))
    return out[0] if x.ndim == 1 else out


def _hjb_residual_batch(problem: ProblemSpec, alpha, basis: BasisSet, weights, points) -> np.ndarray:
    points = np.atleast_2d(points)
    f, g, m = problem.fields(points, alpha)
    _, grads = basis.evaluate(points)
    grad = np.einsum("kjn,j->kn", grads, weights)
    gT_grad = np.einsum("knp,kn->kp", g, grad)
    quad = np.einsum("kp,pq,kq->k", gT_grad, problem.R_inv, gT_grad)
    return np.einsum("kn,kn->k", grad, f) + m - 0.25 * quad


def hjb_residual(s: HjbSolution, x, weights=None):
    """η = ∇φ̂ᵀf + m - ¼ ∇φ̂ᵀ g R⁻¹ gᵀ ∇φ̂; accepts a point or a batch."""
    x = np.asarray(x, dtype=float)
    w = s.weights if weights is None else weights
    out = _hjb_residual_batch(s.problem, s.alpha, s.basis, w, x)
    return float(out[0]) if x.ndim == 1 else out


def _projected_residual(problem, alpha, basis, grid, weights) -> np.ndarray:
    eta = _hjb_residual_batch(problem, alpha, basis, weights, grid.nodes)
    return project(basis, grid, eta)


def projected_residual(s: HjbSolution, weights=None) -> np.ndarray:
    """<η, ψ_j> for every basis function."""
    w = s.weights if weights is None else weights
    return _projected_residual(s.problem, s.alpha, s.basis, s.grid, w)


def closed_loop_linearization(s: HjbSolution) -> np.ndarray:
    """∂f/∂x(0) - ½ g(0) R⁻¹ g(0)ᵀ ∇²φ̂(0)."""
    A, B, _ = derived_fields(s.problem).origin_terms(s.alpha)
    hessian = np.einsum("jab,j->ab", s.basis.hessian_origin(), s.weights)
    return A - 0.5 * B @ s.problem.R_inv @ B.T @ hessian


def is_hurwitz(M: np.ndarray, margin: float = 0.0) -> bool:
    return bool(np.linalg.eigvals(M).real.max() < -margin)
