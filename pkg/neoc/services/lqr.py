"""Linear-quadratic special case: Kleinman iteration, Lyapunov solves, Riccati sensitivity.

Gains follow the convention u = -K x throughout.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from neoc.config import settings
from neoc.errors import AdmissibilityError, SingularSystemError, StallError
from neoc.services.expr import const, simplify
from neoc.services.problem import LqrProblem, ProblemSpec, derived_fields

logger = logging.getLogger(__name__)


@dataclass
class AssumptionReport:
    n: int
    controllability_rank: int
    observability_rank: int

    @property
    def controllable(self) -> bool:
        return self.controllability_rank == self.n

    @property
    def observable(self) -> bool:
        return self.observability_rank == self.n

    @property
    def passed(self) -> bool:
        return self.controllable and self.observable

    def messages(self) -> list[str]:
        out = []
        if not self.controllable:
            out.append(f"controllability rank {self.controllability_rank} < {self.n}")
        if not self.observable:
            out.append(f"observability rank {self.observability_rank} < {self.n}")
        return out


@dataclass
class RiccatiSolution:
    P: np.ndarray
    K: np.ndarray
    E: np.ndarray
    iterations: int
    residual: float = 0.0
    monotone_violations: list[int] = field(default_factory=list)


def _rank(M: np.ndarray) -> int:
    sv = linalg.svdvals(M)
    if sv.size == 0 or sv[0] == 0:
        return 0
    return int(np.sum(sv > settings.rank_tol * sv[0]))


def psd_sqrt(Q: np.ndarray) -> np.ndarray:
    vals, vecs = np.linalg.eigh(0.5 * (Q + Q.T))
    return (vecs * np.sqrt(np.clip(vals, 0.0, None))) @ vecs.T


def controllability_matrix(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    blocks = [B]
    for _ in range(A.shape[0] - 1):
        blocks.append(A @ blocks[-1])
    return np.hstack(blocks)


def check_assumptions(lp: LqrProblem, alpha=None) -> AssumptionReport:
    A, B, Q = lp.matrices(alpha)
    C = psd_sqrt(Q)
    observability = controllability_matrix(A.T, C.T).T
    return AssumptionReport(A.shape[0], _rank(controllability_matrix(A, B)), _rank(observability))


def is_hurwitz(M: np.ndarray) -> bool:
    return bool(np.linalg.eigvals(M).real.max() < 0)


def lyap_solve(E: np.ndarray, F: np.ndarray) -> np.ndarray:
    """Symmetric X with EᵀX + XE + F = 0, solved over the n(n+1)/2 upper-triangular unknowns."""
    E = np.atleast_2d(np.asarray(E, dtype=float))
    F = np.atleast_2d(np.asarray(F, dtype=float))
    if not is_hurwitz(E):
        raise SingularSystemError(
            "Lyapunov operator is not uniquely solvable: E is not Hurwitz",
            {"eigenvalues": np.linalg.eigvals(E).tolist()},
        )
    n = E.shape[0]
    rows, cols = np.triu_indices(n)
    L = np.empty((rows.size, rows.size))
    for col, (a, b) in enumerate(zip(rows, cols)):
        X = np.zeros((n, n))
        X[a, b] = X[b, a] = 1.0
        L[:, col] = (E.T @ X + X @ E)[rows, cols]
    rhs = -0.5 * (F + F.T)[rows, cols]
    x = linalg.solve(L, rhs)
    X = np.zeros((n, n))
    X[rows, cols] = x
    X[cols, rows] = x
    return X


def stabilizing_gain(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """K0 with A - B K0 Hurwitz: zero for Hurwitz A, otherwise the Bass construction."""
    p = B.shape[1]
    eig = np.linalg.eigvals(A)
    if eig.real.max() < 0:
        return np.zeros((p, A.shape[0]))
    beta = max(0.0, -eig.real.min()) + 1.0
    shifted = -(A + beta * np.eye(A.shape[0]))
    W = lyap_solve(shifted.T, 2.0 * B @ B.T)
    try:
        K0 = B.T @ np.linalg.inv(W)
    except np.linalg.LinAlgError:
        raise AdmissibilityError("no stabilizing gain found: (A, B) is not controllable") from None
    if not is_hurwitz(A - B @ K0):
        raise AdmissibilityError("no stabilizing gain found for the Kleinman iteration")
    return K0


def care_residual(A, B, Q, R, P) -> float:
    return float(np.linalg.norm(A.T @ P + P @ A - P @ B @ np.linalg.solve(R, B.T) @ P + Q))


def care_solve(lp: LqrProblem, alpha=None, K0: np.ndarray | None = None) -> RiccatiSolution:
    """Kleinman iteration: a Lyapunov solve per step until P stops changing."""
    A, B, Q = lp.matrices(alpha)
    R = lp.R
    K = stabilizing_gain(A, B) if K0 is None else np.atleast_2d(np.asarray(K0, dtype=float))
    if not is_hurwitz(A - B @ K):
        raise AdmissibilityError("initial gain K0 is not stabilizing")

    P_prev = None
    violations = []
    for it in range(1, settings.kleinman_max_iter + 1):
        E = A - B @ K
        P = lyap_solve(E, Q + K.T @ R @ K)
        P = 0.5 * (P + P.T)
        K = np.linalg.solve(R, B.T @ P)
        if P_prev is not None:
            if np.linalg.eigvalsh(P_prev - P).min() < -1e-9 * max(1.0, np.abs(P).max()):
                violations.append(it)
            change = float(np.linalg.norm(P - P_prev))
            logger.debug("Kleinman iteration %d: |dP| = %.3e", it, change)
            if change <= settings.kleinman_tol * max(1.0, float(np.linalg.norm(P))):
                E = A - B @ K
                logger.info("Kleinman iteration converged after %d steps", it)
                return RiccatiSolution(P, K, E, it, care_residual(A, B, Q, R, P), violations)
        P_prev = P
    raise StallError(
        f"Kleinman iteration did not converge in {settings.kleinman_max_iter} steps",
        {"last_change": float(np.linalg.norm(P - P_prev))},
    )


def riccati_sensitivity(lp: LqrProblem, sol: RiccatiSolution, alpha=None, l: int = 0) -> np.ndarray:
    """∂P/∂α_l from the Lyapunov equation obtained by differentiating the Riccati equation."""
    _, B, _ = lp.matrices(alpha)
    dA, dB, dQ = lp.derivatives(alpha)[l]
    P, R_inv = sol.P, np.linalg.inv(lp.R)
    F = dA.T @ P + P @ dA - P @ dB @ R_inv @ B.T @ P - P @ B @ R_inv @ dB.T @ P + dQ
    return lyap_solve(sol.E, F)


def neoc_gain(lp: LqrProblem, sol: RiccatiSolution, sens: list[np.ndarray], delta_alpha, alpha=None) -> np.ndarray:
    """K_NE = K + R⁻¹ Σ_l (∂B_lᵀ P + Bᵀ ∂P_l) δα_l."""
    delta = np.atleast_1d(np.asarray(delta_alpha, dtype=float))
    if len(sens) != delta.size or delta.size != len(lp.alpha_names):
        raise ValueError(f"need one dP/dalpha per parameter ({len(lp.alpha_names)}), got {len(sens)} and {delta.size}")
    _, B, _ = lp.matrices(alpha)
    derivs = lp.derivatives(alpha)
    dK = sum(
        (np.linalg.solve(lp.R, derivs[l][1].T @ sol.P + B.T @ sens[l]) * delta[l] for l in range(delta.size)),
        np.zeros_like(sol.K),
    )
    return sol.K + dK


def linearize(problem: ProblemSpec, alpha=None) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(∂f/∂x(0), g(0), ½∇²m(0)) at α."""
    A, B, H = derived_fields(problem).origin_terms(alpha)
    return A, B, 0.5 * H


def lqr_problem(problem: ProblemSpec) -> LqrProblem:
    """The [lqr] data of a problem, or its symbolic linearization at the origin."""
    if problem.lqr is not None:
        return problem.lqr
    d = derived_fields(problem)
    half = const(0.5)
    return LqrProblem(
        A=d.df_dx_origin,
        B=d.g_origin,
        Q=tuple(tuple(simplify(half * e) for e in row) for row in d.m_hessian_origin),
        R=problem.R,
        alpha_names=problem.alpha_names,
        alpha_nominal=problem.alpha_nominal,
    )


@dataclass
class GainsReport:
    K_nom: np.ndarray
    K_neoc: np.ndarray
    K_recal: np.ndarray | None
    P: np.ndarray
    dP: list[np.ndarray]
    assumptions: AssumptionReport
    neoc_closed_loop_hurwitz: bool

    def summary(self) -> dict:
        return {
            "K_nom": self.K_nom.tolist(),
            "K_neoc": self.K_neoc.tolist(),
            "K_recal": None if self.K_recal is None else self.K_recal.tolist(),
            "P": self.P.tolist(),
            "dP_dalpha": [x.tolist() for x in self.dP],
            "controllability_rank": self.assumptions.controllability_rank,
            "observability_rank": self.assumptions.observability_rank,
            "neoc_closed_loop_hurwitz": self.neoc_closed_loop_hurwitz,
        }


def gains_report(lp: LqrProblem, delta_alpha, alpha=None, recalc: bool = False) -> GainsReport:
    alpha = lp.alpha_nominal if alpha is None else np.asarray(alpha, dtype=float)
    delta = np.atleast_1d(np.asarray(delta_alpha, dtype=float))
    sol = care_solve(lp, alpha)
    dP = [riccati_sensitivity(lp, sol, alpha, l) for l in range(len(lp.alpha_names))]
    K_neoc = neoc_gain(lp, sol, dP, delta, alpha)
    K_recal = care_solve(lp, alpha + delta).K if recalc else None
    A_hat, B_hat, _ = lp.matrices(alpha + delta)
    return GainsReport(
        K_nom=sol.K,
        K_neoc=K_neoc,
        K_recal=K_recal,
        P=sol.P,
        dP=dP,
        assumptions=check_assumptions(lp, alpha),
        neoc_closed_loop_hurwitz=is_hurwitz(A_hat - B_hat @ K_neoc),
    )
