"""Monomial bases and tensor-product Gauss–Legendre quadrature on a box."""
from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Sequence

import numpy as np

from neoc.config import settings
from neoc.errors import BasisError
from neoc.services.expr import Expr, Var, compile_exprs, const, diff, simplify

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class QuadratureGrid:
    nodes: np.ndarray  # (K, n)
    weights: np.ndarray  # (K,)
    order: int
    lo: np.ndarray
    hi: np.ndarray

    @property
    def size(self) -> int:
        return self.weights.size

    @property
    def dim(self) -> int:
        return self.nodes.shape[1]

    @property
    def volume(self) -> float:
        return float(np.prod(self.hi - self.lo))

    def integrate(self, values: np.ndarray) -> np.ndarray:
        """Σ w_k v_k over the leading node axis."""
        return np.tensordot(self.weights, values, axes=(0, 0))


@dataclass(frozen=True, eq=False)
class BasisSet:
    exponents: np.ndarray  # (N, n) integer multi-indices
    functions: tuple[Expr, ...]
    gradients: tuple[tuple[Expr, ...], ...]  # N × n
    _tables: dict = field(default_factory=dict, repr=False)

    @property
    def size(self) -> int:
        return self.exponents.shape[0]

    @property
    def dim(self) -> int:
        return self.exponents.shape[1]

    @property
    def max_degree(self) -> int:
        return int(self.exponents.sum(axis=1).max())

    def spec(self) -> str:
        return ";".join(" ".join(str(k) for k in row) for row in self.exponents)

    def evaluate(self, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Values (K, N) and gradients (K, N, n) at a batch of points (K, n)."""
        points = np.atleast_2d(np.asarray(points, dtype=float))
        E = self.exponents
        base = points[:, None, :]
        powers = base ** E  # (K, N, n); 0**0 == 1
        lowered = np.where(E > 0, E - 1, 0)
        dpowers = E * base ** lowered
        values = powers.prod(axis=2)
        grads = np.empty(powers.shape)
        for i in range(self.dim):
            others = np.delete(powers, i, axis=2).prod(axis=2)
            grads[:, :, i] = dpowers[:, :, i] * others
        return values, grads

    def tabulate(self, grid: QuadratureGrid) -> tuple[np.ndarray, np.ndarray]:
        """Cached (values N×K, gradients N×n×K) on the grid nodes."""
        table = self._tables.get(grid)
        if table is None:
            values, grads = self.evaluate(grid.nodes)
            table = (values.T.copy(), grads.transpose(1, 2, 0).copy())
            self._tables[grid] = table
        return table

    def gram(self, grid: QuadratureGrid) -> np.ndarray:
        values, _ = self.tabulate(grid)
        return (values * grid.weights) @ values.T

    def check_independence(self, grid: QuadratureGrid) -> float:
        cond = float(np.linalg.cond(self.gram(grid)))
        if not np.isfinite(cond) or cond >= settings.cond_limit:
            raise BasisError(
                f"basis is numerically dependent on this grid (Gram condition {cond:.3e}); "
                "raise the quadrature order or drop basis functions"
            )
        return cond

    def hessian_origin(self) -> np.ndarray:
        """∂²ψ_j/∂x∂x at the origin, shape (N, n, n); only degree-2 monomials contribute."""
        H = np.zeros((self.size, self.dim, self.dim))
        for j, row in enumerate(self.exponents):
            if row.sum() != 2:
                continue
            idx = np.flatnonzero(row)
            if idx.size == 1:
                H[j, idx[0], idx[0]] = 2.0
            else:
                H[j, idx[0], idx[1]] = H[j, idx[1], idx[0]] = 1.0
        return H

    @cached_property
    def compiled(self):
        names = [f"x{i + 1}" for i in range(self.dim)]
        return compile_exprs(self.functions, names)


def _monomial(row: Sequence[int]) -> Expr:
    term: Expr = const(1.0)
    for i, k in enumerate(row):
        if k == 0:
            continue
        factor = Var(f"x{i + 1}") if k == 1 else Var(f"x{i + 1}") ** const(float(k))
        term = term * factor
    return simplify(term)


def monomial_basis(n: int, spec: Sequence[Sequence[int] | int]) -> BasisSet:
    if n < 1:
        raise BasisError("state dimension must be >= 1")
    rows = []
    for item in spec:
        row = (int(item),) if np.isscalar(item) else tuple(int(k) for k in item)
        if len(row) != n:
            raise BasisError(f"multi-index {row} has {len(row)} entries, expected {n}")
        if any(k < 0 for k in row):
            raise BasisError(f"multi-index {row} has a negative exponent")
        if sum(row) == 0:
            raise BasisError("constant basis function (zero multi-index) violates psi(0) = 0")
        rows.append(row)
    if not rows:
        raise BasisError("empty basis")
    if len(set(rows)) != len(rows):
        dup = next(r for r in rows if rows.count(r) > 1)
        raise BasisError(f"duplicate multi-index {dup}")
    if any(sum(r) == 1 for r in rows):
        logger.warning("Degree-1 basis functions make the control law non-smooth at the origin")
    functions = tuple(_monomial(r) for r in rows)
    gradients = tuple(tuple(diff(psi, f"x{i + 1}") for i in range(n)) for psi in functions)
    return BasisSet(np.array(rows, dtype=int), functions, gradients)


def parse_basis_spec(text: str, n: int) -> list[tuple[int, ...]]:
    """'2;4;6' or '2 0;1 1;0 2' -> list of multi-indices."""
    out = []
    for chunk in text.split(";"):
        chunk = chunk.replace(",", " ").strip()
        if not chunk:
            continue
        try:
            row = tuple(int(tok) for tok in chunk.split())
        except ValueError:
            raise BasisError(f"bad multi-index '{chunk}'") from None
        if len(row) != n:
            raise BasisError(f"multi-index '{chunk}' has {len(row)} entries, expected {n}")
        out.append(row)
    if not out:
        raise BasisError("empty basis spec")
    return out


def quadratic_basis(n: int) -> BasisSet:
    """All degree-2 monomials; exact for quadratic value functions."""
    rows = []
    for i in range(n):
        for j in range(i, n):
            row = [0] * n
            row[i] += 1
            row[j] += 1
            rows.append(tuple(row))
    return monomial_basis(n, rows)


def default_order(basis: BasisSet) -> int:
    return basis.max_degree + 2


def gauss_grid(domain: tuple[Sequence[float], Sequence[float]], order: int) -> QuadratureGrid:
    lo, hi = (np.atleast_1d(np.asarray(b, dtype=float)) for b in domain)
    if order < 2:
        raise BasisError("quadrature order must be >= 2")
    if lo.shape != hi.shape or np.any(lo >= hi):
        raise BasisError("domain needs lo < hi on every axis")
    n = lo.size
    if float(order) ** n > settings.quad_node_limit:
        raise BasisError(f"{order}^{n} quadrature nodes exceed the limit of {settings.quad_node_limit}")
    x, w = np.polynomial.legendre.leggauss(order)
    half = (hi - lo) / 2.0
    mid = (hi + lo) / 2.0
    axes_x = [mid[i] + half[i] * x for i in range(n)]
    axes_w = [half[i] * w for i in range(n)]
    nodes = np.array(list(itertools.product(*axes_x)))
    weights = np.array([np.prod(c) for c in itertools.product(*axes_w)])
    return QuadratureGrid(nodes, weights, order, lo, hi)


def inner_product(
    a: Callable[[np.ndarray], np.ndarray] | np.ndarray,
    b: Callable[[np.ndarray], np.ndarray] | np.ndarray,
    grid: QuadratureGrid,
) -> float:
    """Σ_k w_k a(x_k) b(x_k); callables receive the (K, n) node array."""
    va = np.asarray(a(grid.nodes) if callable(a) else a, dtype=float)
    vb = np.asarray(b(grid.nodes) if callable(b) else b, dtype=float)
    product = va * vb
    bad = np.flatnonzero(~np.isfinite(product))
    if bad.size:
        k = int(bad[0])
        raise BasisError(f"integrand not finite at node {k} ({grid.nodes[k].tolist()})")
    return float(grid.weights @ product)


def expr_function(e: Expr, n: int) -> Callable[[np.ndarray], np.ndarray]:
    """Wrap a state-only Expr as a callable on (K, n) point batches."""
    names = [f"x{i + 1}" for i in range(n)]
    compiled = compile_exprs([e], names)
    return lambda points: compiled(*np.atleast_2d(points).T)[0]


def warn_if_nonpolynomial(problem, order: int) -> None:
    if not problem.is_polynomial():
        logger.warning(
            "Problem %s has non-polynomial terms; order-%d quadrature is not exact, "
            "raise --quad-order if results look noisy",
            problem.name, order,
        )
