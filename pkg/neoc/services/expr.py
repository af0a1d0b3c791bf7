"""Scalar expression trees: parse, evaluate, differentiate, simplify, print and compile.

Grammar (the problem-file contract)::

    expr    := term (('+' | '-') term)*
    term    := ('-' | '+') term | product      leading sign negates the whole product
    product := factor (('*' | '/') factor)*
    factor  := ('-' | '+') factor | power
    power   := atom [('^' | '**') factor]      right associative
    atom    := NUMBER | NAME '(' expr ')' | NAME | '(' expr ')'

so ``-alpha*x`` is ``neg(mul(alpha, x))`` while ``a*-b`` is ``mul(a, neg(b))`` and
``-x^2`` is ``neg(pow(x, 2))``. Constants stored in a tree are never negative.
"""
from __future__ import annotations

import logging
import math
import re
from dataclasses import dataclass
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from neoc.errors import (
    ExprDomainError,
    ExprSyntaxError,
    NonDifferentiableError,
    UnboundSymbolError,
    UnknownFunctionError,
)

logger = logging.getLogger(__name__)

FUNCTIONS = ("sin", "cos", "exp", "sqrt", "abs", "sgn")
KINKS = frozenset({"abs", "sgn"})
SYMBOL_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_]*\Z")


class Expr:
    __slots__ = ()

    def __add__(self, other) -> Expr:
        return Binary("+", self, as_expr(other))

    def __radd__(self, other) -> Expr:
        return Binary("+", as_expr(other), self)

    def __sub__(self, other) -> Expr:
        return Binary("-", self, as_expr(other))

    def __rsub__(self, other) -> Expr:
        return Binary("-", as_expr(other), self)

    def __mul__(self, other) -> Expr:
        return Binary("*", self, as_expr(other))

    def __rmul__(self, other) -> Expr:
        return Binary("*", as_expr(other), self)

    def __truediv__(self, other) -> Expr:
        return Binary("/", self, as_expr(other))

    def __rtruediv__(self, other) -> Expr:
        return Binary("/", as_expr(other), self)

    def __pow__(self, other) -> Expr:
        return Binary("^", self, as_expr(other))

    def __neg__(self) -> Expr:
        return Unary("neg", self)

    def __str__(self) -> str:
        return to_string(self)


@dataclass(frozen=True, slots=True)
class Const(Expr):
    value: float


@dataclass(frozen=True, slots=True)
class Var(Expr):
    name: str


@dataclass(frozen=True, slots=True)
class Unary(Expr):
    op: str  # "neg" or one of FUNCTIONS
    arg: Expr


@dataclass(frozen=True, slots=True)
class Binary(Expr):
    op: str  # one of + - * / ^
    left: Expr
    right: Expr


ZERO = Const(0.0)
ONE = Const(1.0)


def const(value: float) -> Expr:
    """Build a constant, keeping the tree free of negative literals."""
    value = float(value)
    if value < 0:
        return Unary("neg", Const(-value))
    return Const(abs(value))  # folds -0.0


def as_expr(value) -> Expr:
    if isinstance(value, Expr):
        return value
    if isinstance(value, str):
        return Var(value)
    return const(value)


# ── Parsing ──

_TOKEN_RE = re.compile(
    r"(?P<ws>\s+)"
    r"|(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<name>[A-Za-z_][A-Za-z0-9_]*)"
    r"|(?P<op>\*\*|[-+*/^(),])"
)


@dataclass(frozen=True, slots=True)
class _Token:
    kind: str  # num | name | op | eof
    text: str
    offset: int


def _tokenize(text: str) -> list[_Token]:
    tokens = []
    pos = 0
    while pos < len(text):
        match = _TOKEN_RE.match(text, pos)
        if match is None:
            raise ExprSyntaxError(_byte_offset(text, pos), "a number, name or operator", text)
        kind = match.lastgroup
        if kind != "ws":
            tokens.append(_Token(kind, match.group(), _byte_offset(text, pos)))
        pos = match.end()
    tokens.append(_Token("eof", "", _byte_offset(text, len(text))))
    return tokens


def _byte_offset(text: str, index: int) -> int:
    return len(text[:index].encode("utf-8"))


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.tokens = _tokenize(text)
        self.pos = 0

    @property
    def tok(self) -> _Token:
        return self.tokens[self.pos]

    def _accept(self, *ops: str) -> _Token | None:
        tok = self.tok
        if tok.kind == "op" and tok.text in ops:
            self.pos += 1
            return tok
        return None

    def _fail(self, expected: str):
        raise ExprSyntaxError(self.tok.offset, expected, self.text)

    def parse(self) -> Expr:
        tree = self.expr()
        if self.tok.kind != "eof":
            self._fail("an operator or end of input")
        return tree

    def expr(self) -> Expr:
        node = self.term()
        while (tok := self._accept("+", "-")) is not None:
            node = Binary(tok.text, node, self.term())
        return node

    def term(self) -> Expr:
        if self._accept("-"):
            return Unary("neg", self.term())
        if self._accept("+"):
            return self.term()
        return self.product()

    def product(self) -> Expr:
        node = self.factor()
        while (tok := self._accept("*", "/")) is not None:
            node = Binary(tok.text, node, self.factor())
        return node

    def factor(self) -> Expr:
        if self._accept("-"):
            return Unary("neg", self.factor())
        if self._accept("+"):
            return self.factor()
        return self.power()

    def power(self) -> Expr:
        base = self.atom()
        if self._accept("^", "**"):
            return Binary("^", base, self.factor())
        return base

    def atom(self) -> Expr:
        tok = self.tok
        if tok.kind == "num":
            self.pos += 1
            value = float(tok.text)
            if not math.isfinite(value):
                raise ExprSyntaxError(tok.offset, "a finite number", self.text)
            return Const(value)
        if tok.kind == "name":
            self.pos += 1
            if self._accept("("):
                if tok.text not in FUNCTIONS:
                    raise UnknownFunctionError(tok.text, tok.offset)
                arg = self.expr()
                if not self._accept(")"):
                    self._fail("')'")
                return Unary(tok.text, arg)
            return Var(tok.text)
        if self._accept("("):
            inner = self.expr()
            if not self._accept(")"):
                self._fail("')'")
            return inner
        self._fail("a number, variable or '('")


def parse(text: str) -> Expr:
    return _Parser(text).parse()


# ── Printing ──

def _format_number(value: float) -> str:
    if value.is_integer() and value < 1e15:
        return str(int(value))
    return repr(value)


def to_string(e: Expr) -> str:
    """Print with the fewest parentheses that still parse back to the same tree."""
    return _fmt(e, "top")


def _fmt(e: Expr, ctx: str) -> str:
    if isinstance(e, Const):
        return _format_number(e.value)
    if isinstance(e, Var):
        return e.name
    if isinstance(e, Unary):
        if e.op != "neg":
            return f"{e.op}({_fmt(e.arg, 'top')})"
        text = "-" + _fmt(e.arg, "neg")
        if ctx in ("mul_left", "mul_right", "pow_base", "pow_exp"):
            return f"({text})"
        return text
    if e.op in "+-":
        text = f"{_fmt(e.left, 'add_left')} {e.op} {_fmt(e.right, 'add_right')}"
        return text if ctx in ("top", "add_left") else f"({text})"
    if e.op in "*/":
        text = f"{_fmt(e.left, 'mul_left')}{e.op}{_fmt(e.right, 'mul_right')}"
        return f"({text})" if ctx in ("mul_right", "pow_base", "pow_exp") else text
    text = f"{_fmt(e.left, 'pow_base')}^{_fmt(e.right, 'pow_exp')}"
    return f"({text})" if ctx == "pow_base" else text


# ── Inspection ──

def free_symbols(e: Expr) -> frozenset[str]:
    if isinstance(e, Var):
        return frozenset({e.name})
    if isinstance(e, Const):
        return frozenset()
    if isinstance(e, Unary):
        return free_symbols(e.arg)
    return free_symbols(e.left) | free_symbols(e.right)


def substitute(e: Expr, mapping: Mapping[str, Expr | float]) -> Expr:
    """Replace variables by expressions or numbers, then simplify."""
    replacements = {k: as_expr(v) for k, v in mapping.items()}
    return simplify(_subst(e, replacements))


def _subst(e: Expr, mapping: Mapping[str, Expr]) -> Expr:
    if isinstance(e, Var):
        return mapping.get(e.name, e)
    if isinstance(e, Const):
        return e
    if isinstance(e, Unary):
        return Unary(e.op, _subst(e.arg, mapping))
    return Binary(e.op, _subst(e.left, mapping), _subst(e.right, mapping))


def has_kinks(e: Expr) -> bool:
    if isinstance(e, Unary):
        return e.op in KINKS or has_kinks(e.arg)
    if isinstance(e, Binary):
        return has_kinks(e.left) or has_kinks(e.right)
    return False


def is_polynomial(e: Expr) -> bool:
    if isinstance(e, (Const, Var)):
        return True
    if isinstance(e, Unary):
        if e.op == "neg":
            return is_polynomial(e.arg)
        return not free_symbols(e.arg)
    if e.op in "+-*":
        return is_polynomial(e.left) and is_polynomial(e.right)
    if e.op == "/":
        return is_polynomial(e.left) and not free_symbols(e.right)
    exponent = _const_value(simplify(e.right))
    return (
        is_polynomial(e.left)
        and exponent is not None
        and exponent >= 0
        and float(exponent).is_integer()
    )


# ── Evaluation ──

def evaluate(e: Expr, bindings: Mapping[str, float | np.ndarray]):
    """Evaluate in IEEE double precision; array bindings evaluate element-wise."""
    values = {k: np.asarray(v, dtype=float) for k, v in bindings.items()}
    with np.errstate(all="ignore"):
        result = _eval(e, values)
    result = np.asarray(result, dtype=float)
    return float(result) if result.ndim == 0 else result


def _eval(e: Expr, env: Mapping[str, np.ndarray]):
    if isinstance(e, Const):
        return np.float64(e.value)
    if isinstance(e, Var):
        try:
            return env[e.name]
        except KeyError:
            raise UnboundSymbolError(e.name) from None
    if isinstance(e, Unary):
        v = _eval(e.arg, env)
        if e.op == "neg":
            return -v
        if e.op == "sqrt":
            if np.any(v < 0):
                raise ExprDomainError("sqrt of negative value", to_string(e))
            return np.sqrt(v)
        return _UNARY_NUMPY[e.op](v)
    left = _eval(e.left, env)
    right = _eval(e.right, env)
    if e.op == "+":
        return left + right
    if e.op == "-":
        return left - right
    if e.op == "*":
        return left * right
    if e.op == "/":
        if np.any(right == 0):
            raise ExprDomainError("division by zero", to_string(e))
        return left / right
    if np.any((left == 0) & (right < 0)):
        raise ExprDomainError("division by zero", to_string(e))
    if np.any((left < 0) & (np.floor(right) != right)):
        raise ExprDomainError("negative base with fractional exponent", to_string(e))
    return np.power(left, right)


_UNARY_NUMPY: dict[str, Callable] = {
    "sin": np.sin,
    "cos": np.cos,
    "exp": np.exp,
    "abs": np.abs,
    "sgn": np.sign,
}


# ── Simplification ──

def _const_value(e: Expr) -> float | None:
    if isinstance(e, Const):
        return e.value
    if isinstance(e, Unary) and e.op == "neg" and isinstance(e.arg, Const):
        return -e.arg.value
    return None


def _fold(e: Expr) -> Expr:
    try:
        value = evaluate(e, {})
    except ExprDomainError:
        return e
    if not math.isfinite(value):
        return e
    return const(value)


def simplify(e: Expr) -> Expr:
    """Constant folding and 0/1 identity elimination; never changes a value."""
    if isinstance(e, (Const, Var)):
        return e
    if isinstance(e, Unary):
        arg = simplify(e.arg)
        if e.op == "neg":
            if isinstance(arg, Unary) and arg.op == "neg":
                return arg.arg
            if _const_value(arg) == 0:
                return ZERO
            return Unary("neg", arg)
        if _const_value(arg) is not None:
            return _fold(Unary(e.op, arg))
        return Unary(e.op, arg)

    left, right = simplify(e.left), simplify(e.right)
    cl, cr = _const_value(left), _const_value(right)
    if cl is not None and cr is not None:
        return _fold(Binary(e.op, left, right))
    op = e.op
    if op == "+":
        if cl == 0:
            return right
        if cr == 0:
            return left
        if isinstance(right, Unary) and right.op == "neg":
            return Binary("-", left, right.arg)
    elif op == "-":
        if cr == 0:
            return left
        if cl == 0:
            return simplify(Unary("neg", right))
        if isinstance(right, Unary) and right.op == "neg":
            return Binary("+", left, right.arg)
    elif op == "*":
        if cl == 0 or cr == 0:
            return ZERO
        if cl == 1:
            return right
        if cr == 1:
            return left
        if cl == -1:
            return simplify(Unary("neg", right))
        if cr == -1:
            return simplify(Unary("neg", left))
    elif op == "/":
        if cr == 1:
            return left
        if cl == 0:
            return ZERO
    elif op == "^":
        if cr == 1:
            return left
        if cr == 0 or cl == 1:
            return ONE
    return Binary(op, left, right)


# ── Differentiation ──

def diff(e: Expr, symbol: str) -> Expr:
    """Symbolic derivative, constant-folded.

    abs and sgn differentiate almost everywhere (sgn' = 0, abs' = sgn); a warning is
    logged and `has_kinks` on the input reports the flag.
    """
    if has_kinks(e) and symbol in free_symbols(e):
        logger.warning("Derivative of '%s' wrt %s is valid almost everywhere only", to_string(e), symbol)
    return simplify(_d(e, symbol))


def _d(e: Expr, s: str) -> Expr:
    if s not in free_symbols(e):
        return ZERO
    if isinstance(e, Var):
        return ONE
    if isinstance(e, Unary):
        du = _d(e.arg, s)
        u = e.arg
        if e.op == "neg":
            return Unary("neg", du)
        if e.op == "sin":
            return Unary("cos", u) * du
        if e.op == "cos":
            return Unary("neg", Unary("sin", u)) * du
        if e.op == "exp":
            return Unary("exp", u) * du
        if e.op == "sqrt":
            return du / (Const(2.0) * Unary("sqrt", u))
        if e.op == "abs":
            return Unary("sgn", u) * du
        return ZERO  # sgn
    u, v = e.left, e.right
    if e.op == "+":
        return _d(u, s) + _d(v, s)
    if e.op == "-":
        return _d(u, s) - _d(v, s)
    if e.op == "*":
        return _d(u, s) * v + u * _d(v, s)
    if e.op == "/":
        return (_d(u, s) * v - u * _d(v, s)) / Binary("^", v, Const(2.0))
    if s not in free_symbols(v):
        return v * Binary("^", u, simplify(v - ONE)) * _d(u, s)
    base = _const_value(simplify(u))
    if base is not None and base > 0:
        return e * const(math.log(base)) * _d(v, s)
    raise NonDifferentiableError(to_string(e), s)


# ── Compilation ──

_NUMPY_CALL = {
    "sin": "np.sin",
    "cos": "np.cos",
    "exp": "np.exp",
    "sqrt": "np.sqrt",
    "abs": "np.abs",
    "sgn": "np.sign",
}


def _code(e: Expr, names: Mapping[str, str]) -> str:
    if isinstance(e, Const):
        return repr(e.value)
    if isinstance(e, Var):
        try:
            return names[e.name]
        except KeyError:
            raise UnboundSymbolError(e.name) from None
    if isinstance(e, Unary):
        inner = _code(e.arg, names)
        if e.op == "neg":
            return f"(-{inner})"
        return f"{_NUMPY_CALL[e.op]}({inner})"
    left, right = _code(e.left, names), _code(e.right, names)
    if e.op == "^":
        return f"np.power({left}, {right})"
    return f"({left} {e.op} {right})"


class CompiledExprs:
    """A batch of expressions turned into one numpy function of `symbols`.

    Calling it with scalars returns shape (len(exprs),); with arrays of a common
    broadcast shape S it returns (len(exprs),) + S. No domain checks are made:
    invalid operations produce nan/inf for the caller to detect.
    """

    def __init__(self, exprs: Sequence[Expr], symbols: Sequence[str]):
        self.exprs = tuple(exprs)
        self.symbols = tuple(symbols)
        names = {sym: f"_a{i}" for i, sym in enumerate(self.symbols)}
        args = ", ".join(names[s] for s in self.symbols)
        body = ", ".join(_code(e, names) for e in self.exprs)
        source = f"def _compiled({args}):\n    return ({body}{',' if self.exprs else ''})\n"
        namespace = {"np": np}
        exec(compile(source, "<neoc-expr>", "exec"), namespace)
        self._fn = namespace["_compiled"]
        self.source = source

    def __call__(self, *args) -> np.ndarray:
        arrays = [np.asarray(a, dtype=float) for a in args]
        shape = np.broadcast_shapes(*(a.shape for a in arrays)) if arrays else ()
        out = np.empty((len(self.exprs),) + shape)
        with np.errstate(all="ignore"):
            for i, value in enumerate(self._fn(*arrays)):
                out[i] = value
        return out


def compile_exprs(exprs: Iterable[Expr], symbols: Sequence[str]) -> CompiledExprs:
    return CompiledExprs(list(exprs), symbols)
