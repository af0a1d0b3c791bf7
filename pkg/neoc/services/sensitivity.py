"""Parametric sensitivity of the converged Galerkin weights and the NEOC law built from it."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np

from neoc.config import settings
from neoc.errors import ProblemValidationError, SolverError
from neoc.services.basis import BasisSet, QuadratureGrid
from neoc.services.hjb import (
    HjbOptions,
    HjbSolution,
    closed_loop_matrix,
    galerkin_step,
    policy_iteration,
    project,
    solve_dense,
)
from neoc.services.laws import ControlLaw, GalerkinLaw
from neoc.services.problem import DerivedProblem, ProblemSpec, derived_fields

logger = logging.getLogger(__name__)


@dataclass
class SensitivityResult:
    J_w_alpha: np.ndarray  # (N, q)
    solution: HjbSolution
    cond: float

    @property
    def alpha(self) -> np.ndarray:
        return self.solution.alpha


def weight_sensitivity(
    s: HjbSolution, d: DerivedProblem | None = None, grid: QuadratureGrid | None = None
) -> SensitivityResult:
    """Solve M ∂w/∂α_l = c_l for every parameter component.

    M is the Galerkin matrix of the converged closed loop f + g u*(w); c_l collects the
    explicit α-derivatives of f, m and g in the projected HJ equation.
    """
    p = s.problem
    d = d or derived_fields(p)
    grid = grid or s.grid
    nodes = grid.nodes
    f, g, _ = p.fields(nodes, s.alpha)
    df, dg, dm = d.fields(nodes, s.alpha)
    _, grads = s.basis.evaluate(nodes)
    grad = np.einsum("kjn,j->kn", grads, s.weights)
    u = -0.5 * np.einsum("knp,kn->kp", g, grad) @ p.R_inv.T

    M = closed_loop_matrix(s.basis, grid, f + np.einsum("knp,kp->kn", g, u))
    gT_grad = np.einsum("knp,kn->kp", g, grad)
    drift_term = np.einsum("kn,knl->kl", grad, df)
    gain_term = np.einsum("kn,klnp,pq,kq->kl", grad, dg, p.R_inv, gT_grad)
    c = project(s.basis, grid, -drift_term - dm + 0.5 * gain_term)

    cond = float(np.linalg.cond(M))
    J = solve_dense(M, c, "sensitivity system")
    logger.debug("Weight sensitivity at alpha=%s: cond(M) = %.3e", s.alpha.tolist(), cond)
    return SensitivityResult(J.reshape(s.basis.size, p.param_dim), s, cond)


def _delta(problem: ProblemSpec, delta_alpha) -> np.ndarray:
    delta = np.atleast_1d(np.asarray(delta_alpha, dtype=float))
    if delta.shape != (problem.param_dim,):
        raise ProblemValidationError(
            "delta_alpha length matches param_dim", f"got {delta.size}, expected {problem.param_dim}"
        )
    return delta


def _adjustment_batch(s: HjbSolution, sens: SensitivityResult, d: DerivedProblem, points, delta) -> np.ndarray:
    p = s.problem
    points = np.atleast_2d(points)
    _, g, _ = p.fields(points, s.alpha)
    _, dg, _ = d.fields(points, s.alpha)
    _, grads = s.basis.evaluate(points)
    grad_w = np.einsum("kjn,j->kn", grads, s.weights)
    grad_dw = np.einsum("kjn,j->kn", grads, sens.J_w_alpha @ delta)
    term = np.einsum("knp,kn->kp", g, grad_dw) + np.einsum("klnp,kn,l->kp", dg, grad_w, delta)
    return -0.5 * term @ p.R_inv.T


def neoc_adjustment(s: HjbSolution, sens: SensitivityResult, x, delta_alpha, d: DerivedProblem | None = None):
    """δu = -½ R⁻¹ (gᵀ J_Ψᵀ J_wα δα + Σ_l ∂g_lᵀ J_Ψᵀ w δα_l) at a point or batch."""
    d = d or derived_fields(s.problem)
    delta = _delta(s.problem, delta_alpha)
    x = np.asarray(x, dtype=float)
    out = _adjustment_batch(s, sens, d, x, delta)
    return out[0] if x.ndim == 1 else out


class NeocLaw(ControlLaw):
    """u_NE = u*(x, ᾱ) + δu(x, ᾱ, δα)."""

    def __init__(self, s: HjbSolution, sens: SensitivityResult, delta_alpha, d: DerivedProblem | None = None, name: str = "neoc"):
        self.solution = s
        self.sens = sens
        self.derived = d or derived_fields(s.problem)
        self.delta_alpha = _delta(s.problem, delta_alpha)
        self.base = s.law()
        self.name = name

    def adjustment(self, points: np.ndarray) -> np.ndarray:
        return _adjustment_batch(self.solution, self.sens, self.derived, points, self.delta_alpha)

    def batch(self, points: np.ndarray) -> np.ndarray:
        points = np.atleast_2d(points)
        return self.base.batch(points) + self.adjustment(points)

    def describe(self) -> dict:
        return {
            **super().describe(),
            "base": self.base.describe(),
            "delta_alpha": self.delta_alpha.tolist(),
            "J_w_alpha": self.sens.J_w_alpha.tolist(),
        }


def neoc_law(s: HjbSolution, sens: SensitivityResult, delta_alpha, d: DerivedProblem | None = None) -> NeocLaw:
    return NeocLaw(s, sens, delta_alpha, d)


def value_sensitivity(s: HjbSolution, sens: SensitivityResult, x) -> np.ndarray:
    """ξ̂(x) = J_wαᵀ Ψ(x)."""
    x = np.asarray(x, dtype=float)
    values, _ = s.basis.evaluate(np.atleast_2d(x))
    out = values @ sens.J_w_alpha
    return out[0] if x.ndim == 1 else out


def value_change(s: HjbSolution, sens: SensitivityResult, x, delta_alpha):
    return value_sensitivity(s, sens, x) @ _delta(s.problem, delta_alpha)


def value_sensitivity_integrand(s: HjbSolution, d: DerivedProblem | None = None):
    """∇φ̂ᵀ(∂f_l + ∂g_l u) + ∂m_l, the integrand whose closed-loop integral is ξ."""
    d = d or derived_fields(s.problem)

    def integrand(states: np.ndarray, controls: np.ndarray) -> np.ndarray:
        df, dg, dm = d.fields(states, s.alpha)
        _, grads = s.basis.evaluate(states)
        grad = np.einsum("kjn,j->kn", grads, s.weights)
        drift = df + np.einsum("klnp,kp->knl", dg, controls)
        return np.einsum("kn,knl->kl", grad, drift) + dm

    return integrand


# ── Step-count estimate ──

def min_steps(M_est: float, delta_alpha, epsilon: float) -> int:
    if M_est <= 0 or epsilon <= 0:
        raise ValueError("min_steps needs M_est > 0 and epsilon > 0")
    norm_sq = float(np.sum(np.square(np.atleast_1d(delta_alpha))))
    return max(1, math.ceil(M_est * norm_sq / (2.0 * epsilon)))


def recalculate(
    problem: ProblemSpec,
    basis: BasisSet,
    grid: QuadratureGrid,
    alpha,
    u0: ControlLaw | None = None,
    base: HjbSolution | None = None,
    opts: HjbOptions | None = None,
) -> HjbSolution:
    """Full policy iteration at a new α, warm-started from a base solution when no u0 is given."""
    alpha = np.asarray(alpha, dtype=float)
    if u0 is None:
        if base is None:
            raise ValueError("recalculate needs u0 or a base solution")
        u0 = GalerkinLaw(problem, basis, base.weights, alpha, name="warm-start")
    return policy_iteration(problem, alpha, basis, grid, u0, opts)


def estimate_M(
    problem: ProblemSpec,
    basis: BasisSet,
    grid: QuadratureGrid,
    u0: ControlLaw,
    alpha_range,
    points: np.ndarray | None = None,
    samples: int | None = None,
    opts: HjbOptions | None = None,
) -> float:
    """max over x and sampled α of |∂²u/∂α_l²| by second central differences along each axis."""
    from neoc.services.sim import grid_points

    lo, hi = (np.atleast_1d(np.asarray(b, dtype=float)) for b in alpha_range)
    samples = samples or settings.alpha_samples
    if samples < 3:
        raise ValueError("estimate_M needs at least 3 samples per axis")
    if lo.shape != (problem.param_dim,) or hi.shape != lo.shape:
        raise ProblemValidationError("alpha_range matches param_dim")
    axes = np.flatnonzero(hi - lo > 0)
    if axes.size == 0:
        raise ProblemValidationError("degenerate alpha_range")
    points = grid_points(problem.lo, problem.hi) if points is None else np.atleast_2d(points)
    mid = 0.5 * (lo + hi)
    best = 0.0
    for l in axes:
        h = (hi[l] - lo[l]) / (samples - 1)
        controls = []
        for i in range(samples):
            alpha = mid.copy()
            alpha[l] = lo[l] + i * h
            try:
                s = policy_iteration(problem, alpha, basis, grid, u0, opts)
            except SolverError as e:
                raise type(e)(f"solve failed at alpha={alpha.tolist()}: {e}", e.diagnostics) from e
            controls.append(s.law().batch(points))
        for i in range(1, samples - 1):
            second = (controls[i + 1] - 2 * controls[i] + controls[i - 1]) / h**2
            best = max(best, float(np.abs(second).max()))
    logger.info("Estimated M = %.4g over alpha in [%s, %s]", best, lo.tolist(), hi.tolist())
    return best


def suggest_steps(problem, basis, grid, u0, alpha_range, delta_alpha, epsilon, opts=None) -> int:
    M = estimate_M(problem, basis, grid, u0, alpha_range, opts=opts)
    if M <= 0:
        return 1
    return min_steps(M, delta_alpha, epsilon)


# ── Homotopy ──

@dataclass
class HomotopyStep:
    step: int
    alpha: list[float]
    cond: float
    weight_change: float


@dataclass
class HomotopyResult:
    law: ControlLaw
    steps: list[HomotopyStep] = field(default_factory=list)
    weights: np.ndarray | None = None


def _aborted(e: SolverError, k: int, alpha: np.ndarray, steps: list[HomotopyStep]) -> SolverError:
    """The same error class, tagged with the failing step and the steps completed before it."""
    return type(e)(
        f"homotopy aborted at step {k} (alpha={alpha.tolist()}): {e}",
        {**e.diagnostics, "step": k, "alpha": alpha.tolist(), "steps": [vars(s) for s in steps]},
    )


def homotopy_neoc(
    problem: ProblemSpec,
    basis: BasisSet,
    grid: QuadratureGrid,
    base: HjbSolution,
    delta_alpha,
    N_steps: int,
    polish: bool = False,
) -> HomotopyResult:
    """Split δα into N equal pieces and follow the weights with one linear solve per piece.

    Predictor-only: the first N-1 pieces move (w, α) along J_wα; the last piece is the
    NEOC law at the reached point, so N=1 is plain NEOC. With polish, each piece is
    followed by one Galerkin step and the result is the Galerkin law at ᾱ+δα.
    """
    if N_steps < 1:
        raise ValueError("N_steps must be >= 1")
    delta = _delta(problem, delta_alpha)
    piece = delta / N_steps
    d = derived_fields(problem)
    current = base
    steps: list[HomotopyStep] = []
    last = N_steps if polish else N_steps - 1

    for k in range(1, last + 1):
        try:
            sens = weight_sensitivity(current, d, grid)
            w = current.weights + sens.J_w_alpha @ piece
            alpha = current.alpha + piece
            if polish:
                w = galerkin_step(problem, alpha, basis, grid, GalerkinLaw(problem, basis, w, alpha))
        except SolverError as e:
            raise _aborted(e, k, current.alpha, steps) from e
        steps.append(HomotopyStep(k, alpha.tolist(), sens.cond, float(np.abs(w - current.weights).max())))
        logger.debug("Homotopy step %d/%d: alpha=%s", k, N_steps, alpha.tolist())
        current = replace(current, weights=w, alpha=alpha)

    if polish:
        return HomotopyResult(GalerkinLaw(problem, basis, current.weights, current.alpha, name="homotopy"), steps, current.weights)
    try:
        sens = weight_sensitivity(current, d, grid)
    except SolverError as e:
        raise _aborted(e, N_steps, current.alpha, steps) from e
    steps.append(HomotopyStep(N_steps, (current.alpha + piece).tolist(), sens.cond, 0.0))
    law = NeocLaw(current, sens, piece, d, name="homotopy")
    return HomotopyResult(law, steps, current.weights)


# ── Error-vs-perturbation sweep ──

@dataclass
class SweepRow:
    delta_alpha: list[float]
    sup: float
    rms: float


def perturbation_sweep(
    problem: ProblemSpec,
    basis: BasisSet,
    grid: QuadratureGrid,
    base: HjbSolution,
    deltas,
    points: np.ndarray,
    u0: ControlLaw | None = None,
    opts: HjbOptions | None = None,
) -> list[SweepRow]:
    """sup and RMS of u_NE - u_recalc on the points for each δα."""
    sens = weight_sensitivity(base)
    rows = []
    for delta_alpha in deltas:
        delta = _delta(problem, delta_alpha)
        recalc = recalculate(problem, basis, grid, base.alpha + delta, u0, base, opts)
        diff = np.abs(neoc_law(base, sens, delta).batch(points) - recalc.law().batch(points))
        rows.append(SweepRow(delta.tolist(), float(diff.max()), float(np.sqrt(np.mean(diff**2)))))
        logger.info("delta=%s: sup error %.4g", delta.tolist(), rows[-1].sup)
    return rows
