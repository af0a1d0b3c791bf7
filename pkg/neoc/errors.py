"""Exception hierarchy shared by the services and the CLI handlers."""


class NeocError(Exception):
    pass


# ── Expressions ──

class ExprError(NeocError, ValueError):
    pass


class ExprSyntaxError(ExprError):
    def __init__(self, offset: int, expected: str, text: str = ""):
        self.offset = offset
        self.expected = expected
        self.text = text
        super().__init__(f"syntax error at offset {offset}: expected {expected}")


class UnknownFunctionError(ExprError):
    def __init__(self, name: str, offset: int):
        self.name = name
        self.offset = offset
        super().__init__(f"unknown function '{name}' at offset {offset}")


class UnboundSymbolError(ExprError):
    def __init__(self, name: str):
        self.name = name
        super().__init__(f"unbound variable '{name}'")


class ExprDomainError(ExprError, ArithmeticError):
    def __init__(self, message: str, subexpression: str):
        self.subexpression = subexpression
        super().__init__(f"{message} in '{subexpression}'")


class NonDifferentiableError(ExprError):
    def __init__(self, subexpression: str, symbol: str):
        self.subexpression = subexpression
        self.symbol = symbol
        super().__init__(f"cannot differentiate '{subexpression}' with respect to {symbol}")


# ── Problems and bases ──

class ProblemError(NeocError, ValueError):
    pass


class ProblemFormatError(ProblemError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        prefix = f"line {line}: " if line is not None else ""
        super().__init__(prefix + message)


class ProblemValidationError(ProblemError):
    def __init__(self, invariant: str, detail: str = ""):
        self.invariant = invariant
        super().__init__(invariant + (f" ({detail})" if detail else ""))


class BasisError(NeocError, ValueError):
    pass


# ── Solvers ──

class SolverError(NeocError, RuntimeError):
    def __init__(self, message: str, diagnostics: dict | None = None):
        self.diagnostics = diagnostics or {}
        super().__init__(message)


class SingularSystemError(SolverError):
    pass


class DivergenceError(SolverError):
    pass


class MonotonicityError(SolverError):
    pass


class NonPositiveValueError(SolverError):
    pass


class AdmissibilityError(SolverError):
    pass


class StallError(SolverError):
    pass


class SimulationError(NeocError, RuntimeError):
    def __init__(self, message: str, step: int):
        self.step = step
        super().__init__(f"{message} at step {step}")


class UsageError(NeocError):
    pass
