"""Feedback laws u(x). Every law maps a batch of states (K, n) to controls (K, p)."""
from __future__ import annotations

import logging
from abc import ABC, abstractmethod
from typing import Callable, Sequence

import numpy as np

from neoc.errors import ProblemError, ProblemValidationError
from neoc.services.basis import BasisSet
from neoc.services.expr import Expr, compile_exprs, diff, free_symbols, parse, to_string
from neoc.services.problem import ProblemSpec

logger = logging.getLogger(__name__)


class ControlLaw(ABC):
    name: str = "law"

    @abstractmethod
    def batch(self, points: np.ndarray) -> np.ndarray:
        """Controls (K, p) at states (K, n)."""

    def __call__(self, x) -> np.ndarray:
        return self.batch(np.atleast_2d(np.asarray(x, dtype=float)))[0]

    def describe(self) -> dict:
        return {"kind": type(self).__name__, "name": self.name}


class GalerkinLaw(ControlLaw):
    """u = -½ R⁻¹ g(x,α)ᵀ J_Ψ(x)ᵀ w."""

    def __init__(self, problem: ProblemSpec, basis: BasisSet, weights, alpha=None, name: str = "galerkin"):
        self.problem = problem
        self.basis = basis
        self.weights = np.asarray(weights, dtype=float)
        self.alpha = problem.alpha_nominal if alpha is None else np.asarray(alpha, dtype=float)
        self.name = name

    def value_gradient(self, points: np.ndarray) -> np.ndarray:
        _, grads = self.basis.evaluate(points)
        return np.einsum("kjn,j->kn", grads, self.weights)

    def batch(self, points: np.ndarray) -> np.ndarray:
        points = np.atleast_2d(points)
        _, g, _ = self.problem.fields(points, self.alpha)
        grad = self.value_gradient(points)
        return -0.5 * np.einsum("knp,kn->kp", g, grad) @ self.problem.R_inv.T

    def describe(self) -> dict:
        return {
            **super().describe(),
            "basis": self.basis.spec(),
            "weights": self.weights.tolist(),
            "alpha": self.alpha.tolist(),
        }


class LinearGain(ControlLaw):
    """u = -K x."""

    def __init__(self, K, name: str = "linear"):
        self.K = np.atleast_2d(np.asarray(K, dtype=float))
        self.name = name

    def batch(self, points: np.ndarray) -> np.ndarray:
        return -np.atleast_2d(points) @ self.K.T

    def describe(self) -> dict:
        return {**super().describe(), "K": self.K.tolist()}


class ExprLaw(ControlLaw):
    """A law written as expressions in x1..xn and the parameter names, bound at alpha."""

    def __init__(self, problem: ProblemSpec, exprs: Sequence[Expr], alpha=None, name: str = "expr"):
        if len(exprs) != problem.control_dim:
            raise ProblemValidationError(
                "law has one expression per control", f"got {len(exprs)}, expected {problem.control_dim}"
            )
        self.problem = problem
        self.exprs = tuple(exprs)
        self.alpha = problem.alpha_nominal if alpha is None else np.asarray(alpha, dtype=float)
        self.name = name
        unknown = set().union(*(free_symbols(e) for e in self.exprs)) - set(problem.symbols)
        if unknown:
            raise ProblemError(f"law uses unknown symbol(s) {', '.join(sorted(unknown))}")
        self._compiled = compile_exprs(self.exprs, problem.symbols)
        at_origin = self.batch(np.zeros((1, problem.state_dim)))[0]
        if not np.all(np.isfinite(at_origin)) or np.any(np.abs(at_origin) > 1e-12):
            raise ProblemValidationError("u(0) = 0", f"u(0) = {at_origin.tolist()}")

    def batch(self, points: np.ndarray) -> np.ndarray:
        points = np.atleast_2d(points)
        values = self._compiled(*points.T, *self.alpha)
        return values.T

    def describe(self) -> dict:
        return {**super().describe(), "exprs": [to_string(e) for e in self.exprs]}


class AdjustedLaw(ControlLaw):
    """base(x) + adjustment(x)."""

    def __init__(self, base: ControlLaw, adjustment: Callable[[np.ndarray], np.ndarray], name: str = "adjusted"):
        self.base = base
        self.adjustment = adjustment
        self.name = name

    def batch(self, points: np.ndarray) -> np.ndarray:
        points = np.atleast_2d(points)
        return self.base.batch(points) + self.adjustment(points)

    def describe(self) -> dict:
        return {**super().describe(), "base": self.base.describe()}


def expr_law(problem: ProblemSpec, texts: Sequence[str], alpha=None, name: str = "u0") -> ExprLaw:
    """Parse one expression per control component ('-5*x1', ...)."""
    return ExprLaw(problem, [parse(t) for t in texts], alpha=alpha, name=name)


def reference_law(problem: ProblemSpec, alpha=None) -> ExprLaw:
    if problem.reference is None:
        raise ProblemError(f"problem {problem.name} has no [reference] law")
    return ExprLaw(problem, problem.reference, alpha=alpha, name="reference")


def reference_adjustment(problem: ProblemSpec, points: np.ndarray, delta_alpha, alpha=None) -> np.ndarray:
    """First-order α-variation Σ_l ∂u_ref/∂α_l δα_l of the reference law, shape (K, p)."""
    if problem.reference is None:
        raise ProblemError(f"problem {problem.name} has no [reference] law")
    alpha = problem.alpha_nominal if alpha is None else np.asarray(alpha, dtype=float)
    delta = np.atleast_1d(np.asarray(delta_alpha, dtype=float))
    points = np.atleast_2d(points)
    exprs = [diff(u, a) for a in problem.alpha_names for u in problem.reference]
    values = compile_exprs(exprs, problem.symbols)(*points.T, *alpha)
    p = problem.control_dim
    slopes = values.reshape(problem.param_dim, p, -1)  # (q, p, K)
    return np.einsum("lpk,l->kp", slopes, delta)
