"""Syntactic substrate: sorts, simple types, signatures and applicative terms.

Terms are immutable trees of symbol leaves, variable leaves and application
nodes.  Every node is well-typed by construction; the type of each node is
computed once, bottom-up, when the node is built.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator, Mapping, Optional, Union


class TermTypeError(Exception):
    """Raised when an ill-typed application is constructed."""


class SignatureError(Exception):
    """Raised on inconsistent declarations in a signature."""


# ---------------------------------------------------------------------------
# Sorts and simple types


@dataclass(frozen=True)
class Sort:
    name: str
    is_theory: bool = False

    def __repr__(self) -> str:
        return self.name


@dataclass(frozen=True)
class Arrow:
    dom: "Type"
    cod: "Type"

    def __repr__(self) -> str:
        d = repr(self.dom)
        if isinstance(self.dom, Arrow):
            d = f"({d})"
        return f"{d} -> {self.cod!r}"


Type = Union[Sort, Arrow]

INT = Sort("Int", is_theory=True)
BOOL = Sort("Bool", is_theory=True)


def arrow(*types: Type) -> Type:
    """Right-associative arrow builder: arrow(A, B, C) is A -> (B -> C)."""
    if not types:
        raise ValueError("arrow needs at least one type")
    result = types[-1]
    for t in reversed(types[:-1]):
        result = Arrow(t, result)
    return result


def arg_types(t: Type) -> list[Type]:
    out = []
    while isinstance(t, Arrow):
        out.append(t.dom)
        t = t.cod
    return out


def result_sort(t: Type) -> Sort:
    while isinstance(t, Arrow):
        t = t.cod
    return t


def is_theory_type(t: Type) -> bool:
    """True iff every domain along the spine and the final codomain are theory sorts."""
    while isinstance(t, Arrow):
        if not (isinstance(t.dom, Sort) and t.dom.is_theory):
            return False
        t = t.cod
    return t.is_theory


# ---------------------------------------------------------------------------
# Function symbols and terms


@dataclass(frozen=True)
class FunctionSymbol:
    name: str
    type: Type
    theory: bool = False
    hidden: bool = False
    # Interpretation payload for value symbols (integer/boolean literals).
    value: Union[int, bool, None] = None

    @property
    def is_value(self) -> bool:
        return self.theory and isinstance(self.type, Sort)

    @property
    def arity(self) -> int:
        return len(arg_types(self.type))

    def __repr__(self) -> str:
        return self.name


@dataclass(frozen=True)
class Sym:
    symbol: FunctionSymbol

    @property
    def type(self) -> Type:
        return self.symbol.type

    def __repr__(self) -> str:
        return self.symbol.name


@dataclass(frozen=True)
class Var:
    name: str
    type: Type

    def __repr__(self) -> str:
        return self.name


@dataclass(frozen=True)
class App:
    fn: "Term"
    arg: "Term"
    type: Type = field(init=False, compare=False)

    def __post_init__(self) -> None:
        ft = self.fn.type
        if not isinstance(ft, Arrow):
            raise TermTypeError(f"cannot apply non-function term {self.fn!r} : {ft!r}")
        if ft.dom != self.arg.type:
            raise TermTypeError(
                f"domain mismatch applying {self.fn!r}: expected {ft.dom!r}, "
                f"got {self.arg!r} : {self.arg.type!r}"
            )
        object.__setattr__(self, "type", ft.cod)

    def __repr__(self) -> str:
        h, args = spine(self)
        inner = " ".join(_repr_arg(a) for a in args)
        return f"{h!r} {inner}"


def _repr_arg(t: "Term") -> str:
    if isinstance(t, App):
        return f"({t!r})"
    return repr(t)


Term = Union[Sym, Var, App]


def app(head: Term, *args: Term) -> Term:
    t = head
    for a in args:
        t = App(t, a)
    return t


def sym(symbol: FunctionSymbol) -> Sym:
    return Sym(symbol)


def type_of(t: Term) -> Type:
    return t.type


def spine(t: Term) -> tuple[Term, list[Term]]:
    """Decompose into (head, arguments): h a1 ... an with h not an App."""
    args: list[Term] = []
    while isinstance(t, App):
        args.append(t.arg)
        t = t.fn
    args.reverse()
    return t, args


def head_symbol(t: Term) -> Optional[FunctionSymbol]:
    h, _ = spine(t)
    return h.symbol if isinstance(h, Sym) else None


def free_vars(t: Term) -> frozenset[Var]:
    if isinstance(t, Var):
        return frozenset((t,))
    if isinstance(t, Sym):
        return frozenset()
    return free_vars(t.fn) | free_vars(t.arg)


def is_ground(t: Term) -> bool:
    return not free_vars(t)


def subterms(t: Term) -> list[Term]:
    """All maximally applied subterms, leftmost-outermost, duplicates removed.

    For h a1 ... an the result is the whole term followed by the subterms of
    each argument; head prefixes (h a1 ... ak for k < n, including bare h for
    n > 0) are not subterms.
    """
    out: list[Term] = []
    seen: set[Term] = set()

    def walk(u: Term) -> None:
        if u not in seen:
            seen.add(u)
            out.append(u)
        _, args = spine(u)
        for a in args:
            walk(a)

    walk(t)
    return out


def proper_subterms(t: Term) -> list[Term]:
    return [u for u in subterms(t) if u != t]


def is_subterm(s: Term, t: Term) -> bool:
    """s |> t or s = t, per the maximally-applied subterm relation."""
    return t in subterms(s)


def is_proper_subterm(s: Term, t: Term) -> bool:
    return s != t and t in subterms(s)


def is_pattern(t: Term) -> bool:
    """True iff every subterm is a variable or a symbol-headed application."""
    for u in subterms(t):
        if isinstance(u, Var):
            continue
        h, _ = spine(u)
        if not isinstance(h, Sym):
            return False
    return True


# ---------------------------------------------------------------------------
# Positions (argument paths) for step descriptors


Position = tuple[int, ...]


def subterm_at(t: Term, pos: Position) -> Term:
    for i in pos:
        _, args = spine(t)
        t = args[i - 1]
    return t


def replace_at(t: Term, pos: Position, new: Term) -> Term:
    if not pos:
        return new
    h, args = spine(t)
    i = pos[0]
    args = list(args)
    args[i - 1] = replace_at(args[i - 1], pos[1:], new)
    return app(h, *args)


# ---------------------------------------------------------------------------
# Substitutions


class Substitution(Mapping[Var, Term]):
    """Finite type-preserving map from variables to terms.

    Variables outside the domain map to themselves.
    """

    def __init__(self, mapping: Optional[Mapping[Var, Term]] = None):
        m = dict(mapping or {})
        for v, t in m.items():
            if v.type != t.type:
                raise TermTypeError(f"substitution not type-preserving at {v!r}: {t!r}")
        # Identity bindings are dropped so equal substitutions compare equal.
        self._map = {v: t for v, t in m.items() if t != v}

    def __getitem__(self, v: Var) -> Term:
        return self._map.get(v, v)

    def __iter__(self) -> Iterator[Var]:
        return iter(self._map)

    def __len__(self) -> int:
        return len(self._map)

    def __eq__(self, other: object) -> bool:
        return isinstance(other, Substitution) and self._map == other._map

    def __hash__(self) -> int:
        return hash(frozenset(self._map.items()))

    def __repr__(self) -> str:
        inner = ", ".join(f"{v!r} := {t!r}" for v, t in sorted(self._map.items(), key=lambda p: p[0].name))
        return f"[{inner}]"

    def apply(self, t: Term) -> Term:
        if isinstance(t, Sym):
            return t
        if isinstance(t, Var):
            return self[t]
        return App(self.apply(t.fn), self.apply(t.arg))

    def compose(self, other: "Substitution") -> "Substitution":
        """self then other: (self;other)(x) = other.apply(self(x))."""
        out = {v: other.apply(t) for v, t in self._map.items()}
        for v, t in other._map.items():
            out.setdefault(v, t)
        return Substitution(out)


EMPTY_SUBST = Substitution()


def apply_subst(t: Term, sigma: Substitution) -> Term:
    return sigma.apply(t)


# ---------------------------------------------------------------------------
# Signatures


class Signature:
    """Sorts and typed function symbols; Int and Bool are always present."""

    def __init__(self) -> None:
        self.sorts: dict[str, Sort] = {INT.name: INT, BOOL.name: BOOL}
        self.symbols: dict[str, FunctionSymbol] = {}

    def declare_sort(self, name: str, is_theory: bool = False) -> Sort:
        existing = self.sorts.get(name)
        if existing is not None:
            if existing.is_theory != is_theory:
                raise SignatureError(f"sort {name} redeclared with different theory status")
            return existing
        s = Sort(name, is_theory)
        self.sorts[name] = s
        return s

    def declare(self, symbol: FunctionSymbol) -> FunctionSymbol:
        existing = self.symbols.get(symbol.name)
        if existing is not None:
            if existing != symbol:
                raise SignatureError(f"symbol {symbol.name} redeclared with a different type")
            return existing
        if symbol.theory and not is_theory_type(symbol.type):
            raise SignatureError(f"theory symbol {symbol.name} must have a theory type")
        self.symbols[symbol.name] = symbol
        return symbol

    def lookup(self, name: str) -> Optional[FunctionSymbol]:
        return self.symbols.get(name)

    @property
    def hidden_symbols(self) -> frozenset[FunctionSymbol]:
        return frozenset(f for f in self.symbols.values() if f.hidden)

    def fresh_sort_name(self, base: str) -> str:
        name = base
        n = 0
        while name in self.sorts:
            n += 1
            name = f"{base}_{n}"
        return name
