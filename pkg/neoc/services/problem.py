"""Parameterised optimal control problems: file format, validation, builtin catalog."""
from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass, field
from functools import cached_property, lru_cache
from pathlib import Path

import numpy as np
from scipy import linalg

from neoc.config import settings
from neoc.errors import (
    ExprError,
    NonDifferentiableError,
    ProblemError,
    ProblemFormatError,
    ProblemValidationError,
)
from neoc.services.expr import (
    SYMBOL_RE,
    ZERO,
    Expr,
    Var,
    compile_exprs,
    diff,
    evaluate,
    free_symbols,
    has_kinks,
    parse,
    simplify,
    substitute,
    to_string,
)

logger = logging.getLogger(__name__)

DATA_DIR = Path(__file__).parent.parent / "data"

SECTIONS = ("dims", "dynamics", "cost", "domain", "params", "lqr", "reference")
_INDEXED_KEY = re.compile(r"([fgABQu])(\d+)(?:_(\d+))?\Z")


@dataclass(frozen=True, eq=False)
class LqrProblem:
    """Linear-quadratic data A(α), B(α), Q(α) as expression matrices in α only."""

    A: tuple[tuple[Expr, ...], ...]
    B: tuple[tuple[Expr, ...], ...]
    Q: tuple[tuple[Expr, ...], ...]
    R: np.ndarray
    alpha_names: tuple[str, ...]
    alpha_nominal: np.ndarray

    @property
    def state_dim(self) -> int:
        return len(self.A)

    @property
    def control_dim(self) -> int:
        return self.R.shape[0]

    @cached_property
    def _compiled(self):
        flat = [e for mat in (self.A, self.B, self.Q) for row in mat for e in row]
        return compile_exprs(flat, self.alpha_names)

    def matrices(self, alpha=None) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        alpha = self.alpha_nominal if alpha is None else np.asarray(alpha, dtype=float)
        n, p = self.state_dim, self.control_dim
        values = self._compiled(*alpha)
        A = values[: n * n].reshape(n, n)
        B = values[n * n : n * n + n * p].reshape(n, p)
        Q = values[n * n + n * p :].reshape(n, n)
        return A, B, Q

    @cached_property
    def _compiled_derivatives(self):
        flat = [
            diff(e, name)
            for name in self.alpha_names
            for mat in (self.A, self.B, self.Q)
            for row in mat
            for e in row
        ]
        return compile_exprs(flat, self.alpha_names)

    def derivatives(self, alpha=None) -> list[tuple[np.ndarray, np.ndarray, np.ndarray]]:
        """(∂A/∂α_l, ∂B/∂α_l, ∂Q/∂α_l) for every parameter component l."""
        alpha = self.alpha_nominal if alpha is None else np.asarray(alpha, dtype=float)
        n, p = self.state_dim, self.control_dim
        size = 2 * n * n + n * p
        values = self._compiled_derivatives(*alpha)
        out = []
        for l in range(len(self.alpha_names)):
            block = values[l * size : (l + 1) * size]
            out.append((
                block[: n * n].reshape(n, n),
                block[n * n : n * n + n * p].reshape(n, p),
                block[n * n + n * p :].reshape(n, n),
            ))
        return out


@dataclass(frozen=True, eq=False)
class ProblemSpec:
    name: str
    state_dim: int
    control_dim: int
    param_dim: int
    f: tuple[Expr, ...]
    g: tuple[tuple[Expr, ...], ...]
    m: Expr
    R: np.ndarray
    lo: np.ndarray
    hi: np.ndarray
    alpha_nominal: np.ndarray
    alpha_names: tuple[str, ...]
    spread: np.ndarray
    lqr: LqrProblem | None = None
    reference: tuple[Expr, ...] | None = None

    @property
    def state_names(self) -> tuple[str, ...]:
        return tuple(f"x{i + 1}" for i in range(self.state_dim))

    @property
    def symbols(self) -> tuple[str, ...]:
        return self.state_names + self.alpha_names

    @property
    def radius(self) -> float:
        return float(np.linalg.norm(np.maximum(np.abs(self.lo), np.abs(self.hi))))

    @cached_property
    def R_inv(self) -> np.ndarray:
        return np.linalg.inv(self.R)

    @cached_property
    def _compiled(self):
        flat = list(self.f) + [e for row in self.g for e in row] + [self.m]
        return compile_exprs(flat, self.symbols)

    def contains(self, points: np.ndarray, tol: float = 1e-12) -> bool:
        points = np.atleast_2d(points)
        return bool(np.all(points >= self.lo - tol) and np.all(points <= self.hi + tol))

    def fields(self, points: np.ndarray, alpha=None) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """f (K,n), g (K,n,p) and m (K,) at a batch of points of shape (K,n)."""
        alpha = self.alpha_nominal if alpha is None else np.asarray(alpha, dtype=float)
        points = np.atleast_2d(points)
        n, p = self.state_dim, self.control_dim
        values = self._compiled(*points.T, *alpha)
        f = values[:n].T
        g = values[n : n + n * p].reshape(n, p, -1).transpose(2, 0, 1)
        m = values[-1]
        return f, g, m

    def bindings(self, x, alpha=None) -> dict[str, float]:
        alpha = self.alpha_nominal if alpha is None else alpha
        out = {name: float(v) for name, v in zip(self.state_names, np.ravel(x))}
        out.update({name: float(v) for name, v in zip(self.alpha_names, np.ravel(alpha))})
        return out

    def is_polynomial(self) -> bool:
        from neoc.services.expr import is_polynomial

        exprs = list(self.f) + [e for row in self.g for e in row] + [self.m]
        return all(is_polynomial(e) for e in exprs)


@dataclass(frozen=True)
class ParamPerturbation:
    delta_alpha: np.ndarray
    box: np.ndarray | None = None

    @classmethod
    def for_problem(cls, problem: ProblemSpec, delta, box=None) -> ParamPerturbation:
        delta = np.atleast_1d(np.asarray(delta, dtype=float))
        if delta.shape != (problem.param_dim,):
            raise ProblemValidationError(
                "delta_alpha length matches param_dim",
                f"got {delta.size}, expected {problem.param_dim}",
            )
        if box is not None:
            box = np.asarray(box, dtype=float)
            if np.any(np.abs(delta) > box):
                raise ProblemValidationError("delta_alpha within perturbation box")
        return cls(delta, box)


@dataclass(frozen=True, eq=False)
class DerivedProblem:
    """Symbolic α- and x-derivatives needed by the sensitivity and LQR paths."""

    problem: ProblemSpec
    df_dalpha: tuple[tuple[Expr, ...], ...]  # n × q
    dg_dalpha: tuple[tuple[tuple[Expr, ...], ...], ...]  # q × (n × p)
    dm_dalpha: tuple[Expr, ...]  # q
    df_dx_origin: tuple[tuple[Expr, ...], ...]  # n × n, in α only
    g_origin: tuple[tuple[Expr, ...], ...]  # n × p, in α only
    m_hessian_origin: tuple[tuple[Expr, ...], ...]  # n × n, in α only
    nonsmooth: bool = False

    @cached_property
    def _compiled(self):
        p = self.problem
        flat = (
            [e for row in self.df_dalpha for e in row]
            + [e for mat in self.dg_dalpha for row in mat for e in row]
            + list(self.dm_dalpha)
        )
        return compile_exprs(flat, p.symbols)

    def fields(self, points: np.ndarray, alpha=None) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """∂f/∂α (K,n,q), ∂g/∂α (K,q,n,p) and ∂m/∂α (K,q) at a batch of points."""
        p = self.problem
        alpha = p.alpha_nominal if alpha is None else np.asarray(alpha, dtype=float)
        points = np.atleast_2d(points)
        n, m, q = p.state_dim, p.control_dim, p.param_dim
        values = self._compiled(*points.T, *alpha)
        df = values[: n * q].reshape(n, q, -1).transpose(2, 0, 1)
        dg = values[n * q : n * q + q * n * m].reshape(q, n, m, -1).transpose(3, 0, 1, 2)
        dm = values[n * q + q * n * m :].T
        return df, dg, dm

    @cached_property
    def _compiled_origin(self):
        flat = (
            [e for row in self.df_dx_origin for e in row]
            + [e for row in self.g_origin for e in row]
            + [e for row in self.m_hessian_origin for e in row]
        )
        return compile_exprs(flat, self.problem.alpha_names)

    def origin_terms(self, alpha=None) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(∂f/∂x(0), g(0), ∇²m(0)) at α."""
        p = self.problem
        alpha = p.alpha_nominal if alpha is None else np.asarray(alpha, dtype=float)
        n, m = p.state_dim, p.control_dim
        values = self._compiled_origin(*alpha)
        return (
            values[: n * n].reshape(n, n),
            values[n * n : n * n + n * m].reshape(n, m),
            values[n * n + n * m :].reshape(n, n),
        )


# ── Problem-file parsing ──

def _read_sections(text: str) -> dict[str, dict[str, tuple[str, int]]]:
    sections: dict[str, dict[str, tuple[str, int]]] = {}
    current = None
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            if not line.endswith("]"):
                raise ProblemFormatError(f"malformed section header '{line}'", lineno)
            current = line[1:-1].strip()
            if current not in SECTIONS:
                raise ProblemFormatError(f"unknown section [{current}]", lineno)
            if current in sections:
                raise ProblemFormatError(f"duplicate section [{current}]", lineno)
            sections[current] = {}
            continue
        if current is None:
            raise ProblemFormatError("key outside of any section", lineno)
        if "=" not in line:
            raise ProblemFormatError(f"expected 'key = value', got '{line}'", lineno)
        key, value = (part.strip() for part in line.split("=", 1))
        if len(value) >= 2 and value[0] == value[-1] and value[0] in "\"'":
            value = value[1:-1].strip()
        if key in sections[current]:
            raise ProblemFormatError(f"duplicate key '{key}'", lineno)
        sections[current][key] = (value, lineno)
    return sections


def _numbers(value: str, lineno: int, key: str) -> np.ndarray:
    try:
        return np.array([float(tok) for tok in value.split()], dtype=float)
    except ValueError:
        raise ProblemFormatError(f"{key}: expected space-separated reals", lineno) from None


def _matrix(value: str, lineno: int, key: str) -> np.ndarray:
    rows = [_numbers(row, lineno, key) for row in value.split(";") if row.strip()]
    if not rows or len({len(r) for r in rows}) != 1:
        raise ProblemFormatError(f"{key}: ragged matrix literal", lineno)
    return np.vstack(rows)


def _indices(key: str, letter: str, shape: tuple[int, ...], lineno: int) -> tuple[int, ...]:
    match = _INDEXED_KEY.match(key)
    if match is None or match.group(1) != letter:
        raise ProblemFormatError(f"unknown key '{key}'", lineno)
    digits, second = match.group(2), match.group(3)
    if len(shape) == 1:
        if second is not None:
            raise ProblemFormatError(f"unknown key '{key}'", lineno)
        index = (int(digits),)
    elif second is not None:
        index = (int(digits), int(second))
    elif len(digits) == 2:
        index = (int(digits[0]), int(digits[1]))
    else:
        raise ProblemFormatError(f"'{key}': write two-index keys as {letter}ij or {letter}i_j", lineno)
    if any(i < 1 or i > size for i, size in zip(index, shape)):
        raise ProblemFormatError(f"dimension mismatch: '{key}' outside {shape}", lineno)
    return tuple(i - 1 for i in index)


def _expr(value: str, lineno: int, key: str, allowed: set[str]) -> Expr:
    try:
        tree = parse(value)
    except ExprError as e:
        raise ProblemFormatError(f"{key}: {e}", lineno) from e
    unknown = free_symbols(tree) - allowed
    if unknown:
        raise ProblemFormatError(f"{key}: unknown symbol(s) {', '.join(sorted(unknown))}", lineno)
    return tree


def _required(section: dict, key: str, name: str) -> tuple[str, int]:
    if key not in section:
        raise ProblemFormatError(f"missing key '{key}' in [{name}]")
    return section[key]


def _expr_matrix(entries, letter, shape, allowed, name, default_zero: bool):
    cells: dict[tuple[int, ...], Expr] = {}
    for key, (value, lineno) in entries.items():
        index = _indices(key, letter, shape, lineno)
        cells[index] = _expr(value, lineno, key, allowed)
    if len(shape) == 1:
        keys = [(i,) for i in range(shape[0])]
    else:
        keys = [(i, j) for i in range(shape[0]) for j in range(shape[1])]
    if not default_zero:
        missing = [k for k in keys if k not in cells]
        if missing:
            label = letter + "".join(str(i + 1) for i in missing[0])
            raise ProblemFormatError(f"dimension mismatch: [{name}] is missing {label}")
    if len(shape) == 1:
        return tuple(cells.get(k, ZERO) for k in keys)
    return tuple(tuple(cells.get((i, j), ZERO) for j in range(shape[1])) for i in range(shape[0]))


def load_problem(config_text: str, name: str = "") -> ProblemSpec:
    """Parse and validate a problem file."""
    sections = _read_sections(config_text)
    for required in ("dims", "cost", "domain", "params"):
        if required not in sections:
            raise ProblemFormatError(f"missing section [{required}]")
    if "dynamics" not in sections and "lqr" not in sections:
        raise ProblemFormatError("missing section [dynamics] (or [lqr])")

    dims = sections["dims"]
    unknown = set(dims) - {"state", "control", "params"}
    if unknown:
        key = sorted(unknown)[0]
        raise ProblemFormatError(f"unknown key '{key}'", dims[key][1])
    try:
        n, p, q = (int(_required(dims, k, "dims")[0]) for k in ("state", "control", "params"))
    except ValueError:
        raise ProblemFormatError("[dims] entries must be integers") from None
    if min(n, p, q) < 1:
        raise ProblemFormatError("[dims] entries must be >= 1")

    params = sections["params"]
    unknown = set(params) - {"names", "nominal", "spread"}
    if unknown:
        key = sorted(unknown)[0]
        raise ProblemFormatError(f"unknown key '{key}'", params[key][1])
    names_value, names_line = _required(params, "names", "params")
    alpha_names = tuple(names_value.split())
    state_names = tuple(f"x{i + 1}" for i in range(n))
    if len(alpha_names) != q:
        raise ProblemFormatError(f"dimension mismatch: {len(alpha_names)} names for {q} params", names_line)
    for sym in alpha_names:
        if not SYMBOL_RE.match(sym) or sym in state_names:
            raise ProblemFormatError(f"invalid parameter name '{sym}'", names_line)
    if len(set(alpha_names)) != q:
        raise ProblemFormatError("duplicate parameter names", names_line)
    nominal = _numbers(*_required(params, "nominal", "params"), "nominal")
    if nominal.size != q:
        raise ProblemFormatError(f"dimension mismatch: nominal has {nominal.size} entries", params["nominal"][1])
    if "spread" in params:
        spread = _numbers(*params["spread"], "spread")
        if spread.size != q or np.any(spread < 0):
            raise ProblemFormatError("spread must hold q non-negative reals", params["spread"][1])
    else:
        spread = np.maximum(0.1 * np.abs(nominal), 0.1)

    domain = sections["domain"]
    unknown = set(domain) - {"lo", "hi"}
    if unknown:
        key = sorted(unknown)[0]
        raise ProblemFormatError(f"unknown key '{key}'", domain[key][1])
    lo = _numbers(*_required(domain, "lo", "domain"), "lo")
    hi = _numbers(*_required(domain, "hi", "domain"), "hi")
    if lo.size != n or hi.size != n:
        raise ProblemFormatError(f"dimension mismatch: domain bounds need {n} entries")

    cost = sections["cost"]
    unknown = set(cost) - {"m", "R"}
    if unknown:
        key = sorted(unknown)[0]
        raise ProblemFormatError(f"unknown key '{key}'", cost[key][1])
    R = _matrix(*_required(cost, "R", "cost"), "R")
    if R.shape != (p, p):
        raise ProblemFormatError(f"dimension mismatch: R is {R.shape}, expected ({p}, {p})", cost["R"][1])

    allowed = set(state_names) | set(alpha_names)
    lqr = None
    if "lqr" in sections:
        entries = sections["lqr"]
        by_letter = {letter: {k: v for k, v in entries.items() if k[:1] == letter} for letter in "ABQ"}
        stray = set(entries) - {k for group in by_letter.values() for k in group}
        if stray:
            key = sorted(stray)[0]
            raise ProblemFormatError(f"unknown key '{key}'", entries[key][1])
        lqr = LqrProblem(
            A=_expr_matrix(by_letter["A"], "A", (n, n), set(alpha_names), "lqr", True),
            B=_expr_matrix(by_letter["B"], "B", (n, p), set(alpha_names), "lqr", True),
            Q=_expr_matrix(by_letter["Q"], "Q", (n, n), set(alpha_names), "lqr", True),
            R=R,
            alpha_names=alpha_names,
            alpha_nominal=nominal,
        )

    if "dynamics" in sections:
        entries = sections["dynamics"]
        f_entries = {k: v for k, v in entries.items() if k.startswith("f")}
        g_entries = {k: v for k, v in entries.items() if k.startswith("g")}
        stray = set(entries) - set(f_entries) - set(g_entries)
        if stray:
            key = sorted(stray)[0]
            raise ProblemFormatError(f"unknown key '{key}'", entries[key][1])
        f = _expr_matrix(f_entries, "f", (n,), allowed, "dynamics", False)
        g = _expr_matrix(g_entries, "g", (n, p), allowed, "dynamics", False)
    else:
        x = [Var(s) for s in state_names]
        f = tuple(simplify(sum((lqr.A[i][j] * x[j] for j in range(n)), ZERO)) for i in range(n))
        g = lqr.B

    if "m" in cost:
        m = _expr(*cost["m"], "m", allowed)
    elif lqr is not None:
        x = [Var(s) for s in state_names]
        m = simplify(sum((lqr.Q[i][j] * x[i] * x[j] for i in range(n) for j in range(n)), ZERO))
    else:
        raise ProblemFormatError("missing key 'm' in [cost]")

    reference = None
    if "reference" in sections:
        reference = _expr_matrix(sections["reference"], "u", (p,), allowed, "reference", False)

    spec = ProblemSpec(
        name=name,
        state_dim=n,
        control_dim=p,
        param_dim=q,
        f=f,
        g=g,
        m=m,
        R=R,
        lo=lo,
        hi=hi,
        alpha_nominal=nominal,
        alpha_names=alpha_names,
        spread=spread,
        lqr=lqr,
        reference=reference,
    )
    validate(spec)
    logger.debug("Loaded problem %s (n=%d, p=%d, q=%d)", name or "<text>", n, p, q)
    return spec


def load_problem_file(path: str | Path) -> ProblemSpec:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise ProblemError(f"cannot read problem file {path}: {e.strerror}") from e
    return load_problem(text, name=path.stem)


# ── Validation ──

def positivity_grid(problem: ProblemSpec) -> np.ndarray:
    """Sample grid for the m > 0 gate, origin removed."""
    n = problem.state_dim
    per_axis = min(settings.positivity_pts, int(np.floor(settings.positivity_cap ** (1.0 / n) + 1e-9)))
    axes = [np.linspace(lo, hi, per_axis) for lo, hi in zip(problem.lo, problem.hi)]
    mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, n)
    return mesh[np.linalg.norm(mesh, axis=1) > 1e-12]


def validate(problem: ProblemSpec) -> None:
    if np.any(problem.lo >= problem.hi):
        raise ProblemValidationError("domain lo < hi violated")
    if not np.allclose(problem.R, problem.R.T, rtol=0, atol=1e-12):
        raise ProblemValidationError("R not symmetric")
    try:
        linalg.cholesky(problem.R, lower=True)
    except linalg.LinAlgError:
        raise ProblemValidationError("R not positive definite") from None

    origin = np.zeros((1, problem.state_dim))
    rng = np.random.default_rng(settings.seed)
    samples = [problem.alpha_nominal] + [
        problem.alpha_nominal + rng.uniform(-1.0, 1.0, problem.param_dim) * problem.spread
        for _ in range(8)
    ]
    for alpha in samples:
        for i, fi in enumerate(problem.f):
            try:
                value = evaluate(fi, problem.bindings(origin[0], alpha))
            except ExprError as e:
                raise ProblemValidationError("f(0,alpha) != 0", f"f{i + 1}: {e}") from e
            if abs(value) > 1e-12:
                raise ProblemValidationError(
                    "f(0,alpha) != 0", f"f{i + 1}(0) = {value:.3e} at alpha={alpha.tolist()}"
                )

    try:
        m0 = evaluate(problem.m, problem.bindings(origin[0]))
        _, _, m_grid = problem.fields(positivity_grid(problem))
    except ExprError as e:
        raise ProblemValidationError("m evaluable on the domain", str(e)) from e
    if abs(m0) > 1e-12:
        raise ProblemValidationError("m(0,alpha) = 0", f"m(0) = {m0:.3e}")
    if not np.all(np.isfinite(m_grid)):
        raise ProblemValidationError("m evaluable on the domain", "non-finite values")
    if problem.lqr is not None:
        # quadratic costs from [lqr] only need Q PSD; detectability is checked in lqr
        if m_grid.min() < -1e-12:
            raise ProblemValidationError("m(x,alpha) >= 0", f"min sample {m_grid.min():.3e}")
    elif m_grid.min() <= 0:
        raise ProblemValidationError("m(x,alpha) > 0 away from the origin", f"min sample {m_grid.min():.3e}")


# ── Derived fields ──

def _hessian_origin(e: Expr, names: tuple[str, ...]) -> tuple[tuple[Expr, ...], ...]:
    zero = {s: 0.0 for s in names}
    return tuple(
        tuple(substitute(diff(diff(e, a), b), zero) for b in names)
        for a in names
    )


@lru_cache(maxsize=32)
def derived_fields(problem: ProblemSpec) -> DerivedProblem:
    """All derivatives the sensitivity and LQR code consumes, as expression trees."""
    x_names, a_names = problem.state_names, problem.alpha_names
    zero = {s: 0.0 for s in x_names}
    try:
        df_dalpha = tuple(tuple(diff(fi, a) for a in a_names) for fi in problem.f)
        dg_dalpha = tuple(
            tuple(tuple(diff(gij, a) for gij in row) for row in problem.g)
            for a in a_names
        )
        dm_dalpha = tuple(diff(problem.m, a) for a in a_names)
        df_dx_origin = tuple(
            tuple(substitute(diff(fi, xj), zero) for xj in x_names) for fi in problem.f
        )
        m_hessian = _hessian_origin(problem.m, x_names)
    except NonDifferentiableError:
        raise
    g_origin = tuple(tuple(substitute(gij, zero) for gij in row) for row in problem.g)
    exprs = list(problem.f) + [e for row in problem.g for e in row] + [problem.m]
    nonsmooth = any(has_kinks(e) for e in exprs)
    if nonsmooth:
        logger.warning("Problem %s contains abs/sgn; derivatives hold almost everywhere", problem.name)
    return DerivedProblem(
        problem=problem,
        df_dalpha=df_dalpha,
        dg_dalpha=dg_dalpha,
        dm_dalpha=dm_dalpha,
        df_dx_origin=df_dx_origin,
        g_origin=g_origin,
        m_hessian_origin=m_hessian,
        nonsmooth=nonsmooth,
    )


# ── Builtin catalog ──

@dataclass(frozen=True)
class CatalogEntry:
    name: str
    file: str
    description: str
    basis: str | None
    u0: tuple[str, ...] | None
    delta: tuple[float, ...] = field(default_factory=tuple)


@lru_cache(maxsize=1)
def catalog() -> dict[str, CatalogEntry]:
    with open(DATA_DIR / "builtins.json", "r", encoding="utf-8") as f:
        raw = json.load(f)
    return {
        name: CatalogEntry(
            name=name,
            file=item["file"],
            description=item["description"],
            basis=item.get("basis"),
            u0=tuple(item["u0"]) if item.get("u0") else None,
            delta=tuple(item.get("delta") or ()),
        )
        for name, item in raw.items()
    }


@lru_cache(maxsize=None)
def builtin(name: str) -> ProblemSpec:
    entries = catalog()
    if name not in entries:
        raise ProblemError(f"unknown builtin '{name}'; valid names: {', '.join(sorted(entries))}")
    text = (DATA_DIR / entries[name].file).read_text(encoding="utf-8")
    return load_problem(text, name=name)


def describe(problem: ProblemSpec) -> dict:
    """Plain-data description used in JSON artifacts."""
    return {
        "name": problem.name,
        "state_dim": problem.state_dim,
        "control_dim": problem.control_dim,
        "param_dim": problem.param_dim,
        "f": [to_string(e) for e in problem.f],
        "g": [[to_string(e) for e in row] for row in problem.g],
        "m": to_string(problem.m),
        "R": problem.R.tolist(),
        "domain": {"lo": problem.lo.tolist(), "hi": problem.hi.tolist()},
        "alpha_names": list(problem.alpha_names),
        "alpha_nominal": problem.alpha_nominal.tolist(),
    }
