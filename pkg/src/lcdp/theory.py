"""Built-in theory of integers and booleans.

Covers interpretation of ground theory terms, values, calculation steps and
their exhaustive normal form, logical constraints, and the `respects`
judgement for rules and dependency pairs.

div and mod follow the SMT-LIB convention (remainder in [0, |divisor|)) so
internal evaluation and solver answers agree.  Division or modulo by zero is
not a calculation redex: the subterm stays unevaluated and any constraint
forced to evaluate it does not hold.
"""

from __future__ import annotations

from typing import Iterable, Optional, Union

from .kernel import (
    App,
    BOOL,
    FunctionSymbol,
    INT,
    Position,
    Sym,
    Term,
    Var,
    app,
    arrow,
    free_vars,
    is_ground,
    spine,
)

Value = Union[int, bool]


class EvaluationError(Exception):
    """Raised when a term cannot be interpreted (not ground, not theory, partial)."""


class EvaluationStuck(EvaluationError):
    """Raised when evaluation hits division or modulo by zero."""


# ---------------------------------------------------------------------------
# Built-in symbols

_III = arrow(INT, INT, INT)
_IIB = arrow(INT, INT, BOOL)
_BBB = arrow(BOOL, BOOL, BOOL)

PLUS = FunctionSymbol("+", _III, theory=True)
MINUS = FunctionSymbol("-", _III, theory=True)
TIMES = FunctionSymbol("*", _III, theory=True)
DIV = FunctionSymbol("div", _III, theory=True)
MOD = FunctionSymbol("mod", _III, theory=True)
LT = FunctionSymbol("<", _IIB, theory=True)
LE = FunctionSymbol("<=", _IIB, theory=True)
GT = FunctionSymbol(">", _IIB, theory=True)
GE = FunctionSymbol(">=", _IIB, theory=True)
EQ = FunctionSymbol("=", _IIB, theory=True)
NE = FunctionSymbol("!=", _IIB, theory=True)
AND = FunctionSymbol("/\\", _BBB, theory=True)
OR = FunctionSymbol("\\/", _BBB, theory=True)
NOT = FunctionSymbol("not", arrow(BOOL, BOOL), theory=True)
TRUE_SYM = FunctionSymbol("true", BOOL, theory=True, value=True)
FALSE_SYM = FunctionSymbol("false", BOOL, theory=True, value=False)

BUILTIN_SYMBOLS: dict[str, FunctionSymbol] = {
    f.name: f
    for f in (PLUS, MINUS, TIMES, DIV, MOD, LT, LE, GT, GE, EQ, NE, AND, OR, NOT, TRUE_SYM, FALSE_SYM)
}

COMPARISONS = {LT, LE, GT, GE, EQ, NE}

TRUE = Sym(TRUE_SYM)
FALSE = Sym(FALSE_SYM)


def int_sym(n: int) -> FunctionSymbol:
    return FunctionSymbol(str(n), INT, theory=True, value=n)


def int_val(n: int) -> Sym:
    return Sym(int_sym(n))


def value_term(v: Value) -> Sym:
    if isinstance(v, bool):
        return TRUE if v else FALSE
    return int_val(v)


def is_value(t: Term) -> bool:
    return isinstance(t, Sym) and t.symbol.is_value


def value_of(t: Term) -> Value:
    """The scalar behind a value symbol."""
    if not is_value(t):
        raise EvaluationError(f"not a value: {t!r}")
    v = t.symbol.value
    if v is None:
        raise EvaluationError(f"value symbol {t!r} has no interpretation payload")
    return v


# ---------------------------------------------------------------------------
# Constraint construction helpers

def mk_not(t: Term) -> Term:
    return app(Sym(NOT), t)


def mk_and(*ts: Term) -> Term:
    parts = [t for t in ts if t != TRUE]
    if not parts:
        return TRUE
    out = parts[0]
    for t in parts[1:]:
        out = app(Sym(AND), out, t)
    return out


def mk_or(*ts: Term) -> Term:
    parts = [t for t in ts if t != FALSE]
    if not parts:
        return FALSE
    out = parts[0]
    for t in parts[1:]:
        out = app(Sym(OR), out, t)
    return out


def mk_eq(a: Term, b: Term) -> Term:
    return app(Sym(EQ), a, b)


def conjuncts(t: Term) -> list[Term]:
    """Flatten nested /\\ into its top-level conjuncts."""
    h, args = spine(t)
    if isinstance(h, Sym) and h.symbol == AND and len(args) == 2:
        return conjuncts(args[0]) + conjuncts(args[1])
    return [t]


# ---------------------------------------------------------------------------
# Interpretation


def euclid_div(a: int, b: int) -> int:
    if b == 0:
        raise EvaluationStuck("division by zero")
    r = a % abs(b)
    return (a - r) // b


def euclid_mod(a: int, b: int) -> int:
    if b == 0:
        raise EvaluationStuck("modulo by zero")
    return a % abs(b)


def _apply_symbol(f: FunctionSymbol, args: list[Value]) -> Value:
    if f == PLUS:
        return args[0] + args[1]
    if f == MINUS:
        return args[0] - args[1]
    if f == TIMES:
        return args[0] * args[1]
    if f == DIV:
        return euclid_div(args[0], args[1])
    if f == MOD:
        return euclid_mod(args[0], args[1])
    if f == LT:
        return args[0] < args[1]
    if f == LE:
        return args[0] <= args[1]
    if f == GT:
        return args[0] > args[1]
    if f == GE:
        return args[0] >= args[1]
    if f == EQ:
        return args[0] == args[1]
    if f == NE:
        return args[0] != args[1]
    if f == AND:
        return args[0] and args[1]
    if f == OR:
        return args[0] or args[1]
    if f == NOT:
        return not args[0]
    raise EvaluationError(f"no interpretation for symbol {f.name}")


def interpret(t: Term) -> Value:
    """Interpretation of a ground theory term of base type.

    Raises EvaluationError for non-ground/non-theory/partial input and
    EvaluationStuck on division or modulo by zero.
    """
    from .kernel import Sort as _Sort

    if isinstance(t, Var):
        raise EvaluationError(f"term is not ground: {t!r}")
    h, args = spine(t)
    if not isinstance(h, Sym):
        raise EvaluationError(f"term is not ground: {t!r}")
    f = h.symbol
    if not f.theory:
        raise EvaluationError(f"not a theory symbol: {f.name}")
    if not isinstance(t.type, _Sort):
        raise EvaluationError(f"partial application has no value: {t!r}")
    if f.is_value:
        return value_of(h)
    return _apply_symbol(f, [interpret(a) for a in args])


_STUCK = object()


def eval3(t: Term) -> Union[Value, object]:
    """Three-valued evaluation: a Value, or the stuck marker on zero division."""
    try:
        return interpret(t)
    except EvaluationStuck:
        return _STUCK


def is_stuck(result: object) -> bool:
    return result is _STUCK


# ---------------------------------------------------------------------------
# Calculation steps


def is_kappa_redex(t: Term) -> bool:
    """f v1...vn with f a calculation symbol, n > 0, all vi values, base type,
    and an equal-valued value exists (no zero division)."""
    from .kernel import Sort as _Sort

    if not isinstance(t, App) or not isinstance(t.type, _Sort):
        return False
    h, args = spine(t)
    if not (isinstance(h, Sym) and h.symbol.theory and not h.symbol.is_value):
        return False
    if not args or not all(is_value(a) for a in args):
        return False
    try:
        interpret(t)
    except EvaluationStuck:
        return False
    except EvaluationError:
        return False
    return True


def kappa_redexes(t: Term) -> list[Position]:
    """Positions of calculation redexes, leftmost-outermost order."""
    out: list[Position] = []

    def walk(u: Term, pos: Position) -> None:
        if is_kappa_redex(u):
            out.append(pos)
            return  # arguments are values; nothing inside
        _, args = spine(u)
        for i, a in enumerate(args, start=1):
            walk(a, pos + (i,))

    walk(t, ())
    return out


def kappa_normalize(t: Term) -> Term:
    """The unique exhaustive result of calculation steps (bottom-up)."""
    if isinstance(t, (Var, Sym)):
        return t
    h, args = spine(t)
    norm = app(h, *[kappa_normalize(a) for a in args])
    if is_kappa_redex(norm):
        return value_term(interpret(norm))
    return norm


# ---------------------------------------------------------------------------
# Theory terms and constraints


def is_theory_term(t: Term, allowed_vars: Optional[Iterable[Var]] = None) -> bool:
    """Every symbol is a theory symbol and free variables lie in allowed_vars.

    With allowed_vars=None any variable is permitted (the plain notion of a
    theory term).
    """
    allowed = None if allowed_vars is None else frozenset(allowed_vars)
    for u in _leaves(t):
        if isinstance(u, Sym):
            if not u.symbol.theory:
                return False
        else:
            if allowed is not None and u not in allowed:
                return False
    return True


def _leaves(t: Term) -> Iterable[Term]:
    if isinstance(t, App):
        yield from _leaves(t.fn)
        yield from _leaves(t.arg)
    else:
        yield t


def theory_sorted_vars(t: Term) -> bool:
    from .kernel import Sort as _Sort

    return all(isinstance(v.type, _Sort) and v.type.is_theory for v in free_vars(t))


def is_constraint(t: Term) -> bool:
    """A theory term of type Bool whose variables all have theory sorts."""
    return t.type == BOOL and is_theory_term(t) and theory_sorted_vars(t)


def constraint_holds(t: Term) -> bool:
    """Ground truth of a constraint: normalizes to true (stuck is not true)."""
    if not is_ground(t):
        raise EvaluationError(f"constraint is not ground: {t!r}")
    return eval3(t) is True


def respects(sigma, obj) -> bool:
    """Whether sigma respects a rewrite rule or an SDP.

    Rules require sigma(x) to be a *value* for x in Var(phi) u (Var(rhs) \\
    Var(lhs)); SDPs require sigma(x) to be a *ground theory term* for x in the
    L component.  Both require the instantiated constraint to hold.
    """
    phi = obj.constraint
    if hasattr(obj, "lvars"):  # SDP
        required = obj.lvars
        for x in required:
            if not (is_ground(sigma[x]) and is_theory_term(sigma[x])):
                return False
    else:  # rewrite rule
        required = frozenset(free_vars(phi)) | (free_vars(obj.rhs) - free_vars(obj.lhs))
        for x in required:
            if not is_value(sigma[x]):
                return False
    inst = sigma.apply(phi)
    if not is_ground(inst):
        raise EvaluationError(f"constraint instance not ground: {inst!r}")
    return eval3(inst) is True
