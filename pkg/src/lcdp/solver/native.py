"""Built-in decision procedure for integer/boolean constraints.

The analyzer normally talks to an external SMT solver; this module is the
default backend when none is configured.  It is sound but incomplete:

  * unsat is only reported when a Fourier-Motzkin / gcd argument proves
    rational or integer infeasibility of every branch;
  * sat is only reported with a model that the term evaluator has verified;
  * everything else is unknown.

mod and div occurrences are abstracted into fresh unknowns, axiomatized with
the SMT-LIB bounds (remainder in [0, |divisor|)) under a case split on the
divisor sign, and exactly linked to their quotient when the divisor is a
literal.  Products of two non-constant terms are abstracted without axioms,
which keeps unsat sound and leaves sat to model verification.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Optional, Union

from ..kernel import App, Sort, Substitution, Sym, Term, Var, free_vars, is_ground, spine
from ..theory import (
    AND,
    DIV,
    EQ,
    FALSE_SYM,
    GE,
    GT,
    LE,
    LT,
    MINUS,
    MOD,
    NE,
    NOT,
    OR,
    PLUS,
    TIMES,
    TRUE_SYM,
    Value,
)

Verifier = Callable[[dict[Var, Value]], bool]


class Budget:
    def __init__(self, nodes: int = 60000, verify_calls: int = 400):
        self.nodes = nodes
        self.verify_calls = verify_calls

    def spend_node(self) -> bool:
        self.nodes -= 1
        return self.nodes >= 0

    def spend_verify(self) -> bool:
        self.verify_calls -= 1
        return self.verify_calls >= 0


class _OutOfBudget(Exception):
    pass


# ---------------------------------------------------------------------------
# Linear expressions over term-keyed unknowns

Key = Term  # a Var, or an opaque App (mod/div application, nonlinear product)


@dataclass
class Lin:
    coeffs: dict[Key, int] = field(default_factory=dict)
    const: int = 0

    def copy(self) -> "Lin":
        return Lin(dict(self.coeffs), self.const)

    def add(self, other: "Lin", factor: int = 1) -> "Lin":
        out = self.copy()
        for k, c in other.coeffs.items():
            n = out.coeffs.get(k, 0) + factor * c
            if n == 0:
                out.coeffs.pop(k, None)
            else:
                out.coeffs[k] = n
        out.const += factor * other.const
        return out

    def scale(self, factor: int) -> "Lin":
        if factor == 0:
            return Lin()
        return Lin({k: c * factor for k, c in self.coeffs.items()}, self.const * factor)

    def substitute(self, key: Key, value_lin: "Lin") -> "Lin":
        c = self.coeffs.get(key)
        if c is None:
            return self
        out = self.copy()
        del out.coeffs[key]
        return out.add(value_lin, c)

    def is_const(self) -> bool:
        return not self.coeffs

    def normalized(self) -> "Lin":
        """Divide an inequality lhs by the gcd of its coefficients (floor const)."""
        if not self.coeffs:
            return self
        g = 0
        for c in self.coeffs.values():
            g = math.gcd(g, abs(c))
        if g <= 1:
            return self
        return Lin({k: c // g for k, c in self.coeffs.items()}, math.floor(Fraction(self.const, g)))

    def __repr__(self) -> str:
        parts = [f"{c}*{k!r}" for k, c in self.coeffs.items()]
        parts.append(str(self.const))
        return " + ".join(parts)


def const_lin(n: int) -> Lin:
    return Lin({}, n)


# ---------------------------------------------------------------------------
# Formulas (negation normal form)

# ("and", [..]) | ("or", [..]) | ("ge", lin) | ("eq", lin) | ("ne", lin)
# | ("bvar", Var, bool) | ("bconst", bool)
Formula = tuple


class _Context:
    """Collects opaque subterms (mod/div/nonlinear) discovered while parsing."""

    def __init__(self) -> None:
        self.divpairs: dict[tuple[Term, Term], tuple[Lin, Lin]] = {}

    def linify(self, t: Term) -> Lin:
        if isinstance(t, Var):
            return Lin({t: 1})
        if isinstance(t, Sym):
            v = t.symbol.value
            if isinstance(v, bool) or v is None:
                raise ValueError(f"non-integer leaf in arithmetic context: {t!r}")
            return const_lin(v)
        h, args = spine(t)
        f = h.symbol if isinstance(h, Sym) else None
        if f == PLUS:
            return self.linify(args[0]).add(self.linify(args[1]))
        if f == MINUS:
            return self.linify(args[0]).add(self.linify(args[1]), -1)
        if f == TIMES:
            a, b = self.linify(args[0]), self.linify(args[1])
            if a.is_const():
                return b.scale(a.const)
            if b.is_const():
                return a.scale(b.const)
            return Lin({t: 1})  # nonlinear product: opaque, no axioms
        if f in (DIV, MOD):
            a, b = self.linify(args[0]), self.linify(args[1])
            self.divpairs.setdefault((args[0], args[1]), (a, b))
            return Lin({t: 1})
        raise ValueError(f"cannot linearize {t!r}")


def _cmp_formula(f, a: Lin, b: Lin) -> Formula:
    # integer tightening: a < b  <=>  b - a - 1 >= 0
    if f == LT:
        return ("ge", b.add(a, -1).add(const_lin(1), -1))
    if f == LE:
        return ("ge", b.add(a, -1))
    if f == GT:
        return ("ge", a.add(b, -1).add(const_lin(1), -1))
    if f == GE:
        return ("ge", a.add(b, -1))
    if f == EQ:
        return ("eq", a.add(b, -1))
    if f == NE:
        return ("ne", a.add(b, -1))
    raise ValueError(f"not a comparison: {f}")


_NEG_CMP = {LT: GE, LE: GT, GT: LE, GE: LT, EQ: NE, NE: EQ}


def parse_formula(t: Term, ctx: _Context, positive: bool = True) -> Formula:
    h, args = spine(t)
    f = h.symbol if isinstance(h, Sym) else None
    if isinstance(h, Var) and not args:
        return ("bvar", h, positive)
    if f == TRUE_SYM:
        return ("bconst", positive)
    if f == FALSE_SYM:
        return ("bconst", not positive)
    if f == NOT:
        return parse_formula(args[0], ctx, not positive)
    if f == AND:
        sub = [parse_formula(a, ctx, positive) for a in args]
        return ("and" if positive else "or", sub)
    if f == OR:
        sub = [parse_formula(a, ctx, positive) for a in args]
        return ("or" if positive else "and", sub)
    if f in _NEG_CMP:
        op = f if positive else _NEG_CMP[f]
        return _cmp_formula(op, ctx.linify(args[0]), ctx.linify(args[1]))
    raise ValueError(f"unsupported constraint shape: {t!r}")


# ---------------------------------------------------------------------------
# Fourier-Motzkin over rationals (sound for integer unsat)

_FM_CAP = 3000


def _fm_infeasible(ges: list[Lin]) -> Optional[bool]:
    """True if the system {lin >= 0} has no rational solution, False if it has
    one, None if the elimination blew past its size cap."""
    work = [g.normalized() for g in ges]
    for g in work:
        if g.is_const() and g.const < 0:
            return True
    keys = sorted({k for g in work for k in g.coeffs}, key=repr)
    for key in keys:
        pos = [g for g in work if g.coeffs.get(key, 0) > 0]
        neg = [g for g in work if g.coeffs.get(key, 0) < 0]
        rest = [g for g in work if g.coeffs.get(key, 0) == 0]
        if len(pos) * len(neg) + len(rest) > _FM_CAP:
            return None
        new = rest
        for p in pos:
            for n in neg:
                comb = p.scale(-n.coeffs[key]).add(n, p.coeffs[key]).normalized()
                if comb.is_const():
                    if comb.const < 0:
                        return True
                else:
                    new.append(comb)
        work = new
    for g in work:
        if g.is_const() and g.const < 0:
            return True
    return False


def _shadow(ges: list[Lin], key: Key) -> tuple[Optional[int], Optional[int], bool]:
    """Integer interval implied for key after eliminating all other unknowns.

    Returns (lo, hi, feasible); lo/hi are None when unbounded.
    """
    work = [g for g in ges]
    others = sorted({k for g in work for k in g.coeffs if k != key}, key=repr)
    for other in others:
        pos = [g for g in work if g.coeffs.get(other, 0) > 0]
        neg = [g for g in work if g.coeffs.get(other, 0) < 0]
        rest = [g for g in work if g.coeffs.get(other, 0) == 0]
        if len(pos) * len(neg) + len(rest) > _FM_CAP:
            return (None, None, True)  # give up: unconstrained view
        new = rest
        for p in pos:
            for n in neg:
                new.append(p.scale(-n.coeffs[other]).add(n, p.coeffs[other]).normalized())
        work = new
    lo: Optional[int] = None
    hi: Optional[int] = None
    for g in work:
        c = g.coeffs.get(key, 0)
        if c == 0:
            if g.const < 0:
                return (None, None, False)
        elif c > 0:  # c*key + d >= 0  =>  key >= -d/c
            bound = math.ceil(Fraction(-g.const, c))
            lo = bound if lo is None else max(lo, bound)
        else:  # key <= d/|c|
            bound = math.floor(Fraction(g.const, -c))
            hi = bound if hi is None else min(hi, bound)
    if lo is not None and hi is not None and lo > hi:
        return (lo, hi, False)
    return (lo, hi, True)


# ---------------------------------------------------------------------------
# The solver


@dataclass
class NativeResult:
    status: str  # "sat" | "unsat" | "unknown"
    model: Optional[dict[Var, Value]] = None
    reason: str = ""


class NativeSolver:
    def __init__(self, query: Term, verifier: Verifier, budget: Optional[Budget] = None):
        self.query = query
        self.verifier = verifier
        self.budget = budget or Budget()
        self.ctx = _Context()
        self.unknown_seen = False
        fv = free_vars(query)
        self.int_vars = sorted(
            (v for v in fv if isinstance(v.type, Sort) and v.type.name == "Int"),
            key=lambda v: v.name,
        )
        self.bool_vars = sorted(
            (v for v in fv if isinstance(v.type, Sort) and v.type.name == "Bool"),
            key=lambda v: v.name,
        )
        consts = [1]

        def collect_consts(t: Term) -> None:
            if isinstance(t, Sym) and isinstance(t.symbol.value, int) and not isinstance(t.symbol.value, bool):
                consts.append(abs(t.symbol.value))
            elif isinstance(t, App):
                collect_consts(t.fn)
                collect_consts(t.arg)

        collect_consts(query)
        self.range_clip = max(8, max(consts) + 2)

    # -- entry point --------------------------------------------------------

    def solve(self) -> NativeResult:
        try:
            formula = parse_formula(self.query, self.ctx)
        except ValueError as e:
            return NativeResult("unknown", reason=f"unsupported constraint: {e}")
        try:
            model = self._search(formula, {}, [], [], [])
        except _OutOfBudget:
            return NativeResult("unknown", reason="search budget exhausted")
        if model is not None:
            return NativeResult("sat", model=model)
        if self.unknown_seen:
            return NativeResult("unknown", reason="incomplete: feasible branch without verified model")
        return NativeResult("unsat")

    # -- DPLL-style splitting with unit propagation -------------------------

    def _search(
        self,
        formula: Formula,
        bools: dict[Var, bool],
        ges: list[Lin],
        eqs: list[Lin],
        nes: list[Lin],
    ) -> Optional[dict[Var, Value]]:
        if not self.budget.spend_node():
            raise _OutOfBudget()
        units: list[Formula] = []
        rest = self._flatten(formula, units)
        if rest is None:
            return None  # contradiction among constants
        bools = dict(bools)
        ges, eqs, nes = list(ges), list(eqs), list(nes)
        int_assign: dict[Key, Lin] = {}
        for u in units:
            kind = u[0]
            if kind == "bvar":
                _, v, pol = u
                if bools.get(v, pol) != pol:
                    return None
                bools[v] = pol
            elif kind == "ge":
                ges.append(u[1])
            elif kind == "eq":
                eqs.append(u[1])
                single = self._as_assignment(u[1])
                if single is not None:
                    int_assign[single[0]] = single[1]
            elif kind == "ne":
                nes.append(u[1])
        if int_assign and rest is not None and rest[0] != "bconst":
            rest = self._substitute_formula(rest, int_assign)
            if rest is None:
                return None
        # quick infeasibility probe on the accumulated literals
        probe = ges + [e for eq in eqs for e in (eq, eq.scale(-1))]
        if probe and _fm_infeasible(probe) is True:
            return None
        if rest is not None and rest[0] == "or":
            for disjunct in rest[1]:
                m = self._search(disjunct, bools, ges, eqs, nes)
                if m is not None:
                    return m
            return None
        if rest is not None and rest[0] == "and":
            # only constants remain inside (flatten pulled out the rest)
            pass
        return self._arith_leaf(bools, ges, eqs, nes)

    def _flatten(self, formula: Formula, units: list[Formula]) -> Optional[Formula]:
        """Pull conjunct literals out; return residual or-formula, a bconst
        tuple, or None for a constant contradiction."""
        kind = formula[0]
        if kind == "bconst":
            return None if not formula[1] else ("and", [])
        if kind in ("bvar", "ge", "eq", "ne"):
            units.append(formula)
            return ("and", [])
        if kind == "or":
            live = []
            for d in formula[1]:
                if d[0] == "bconst":
                    if d[1]:
                        return ("and", [])  # disjunction trivially true
                    continue
                live.append(d)
            if not live:
                return None
            if len(live) == 1:
                return self._flatten(live[0], units)
            return ("or", live)
        # and-node
        residuals = []
        for part in formula[1]:
            r = self._flatten(part, units)
            if r is None:
                return None
            if r[0] == "or":
                residuals.append(r)
            elif r[0] == "and" and r[1]:
                residuals.append(r)
        if not residuals:
            return ("and", [])
        if len(residuals) == 1:
            return residuals[0]
        return self._split_first(residuals)

    def _split_first(self, residuals: list[Formula]) -> Formula:
        """Several or-groups remain: branch on the first, keep the rest nested."""
        first = residuals[0]
        rest = residuals[1:]
        if first[0] == "or":
            return ("or", [("and", [d] + rest) for d in first[1]])
        return ("and", residuals)

    def _as_assignment(self, eq: Lin) -> Optional[tuple[Key, Lin]]:
        if len(eq.coeffs) != 1:
            return None
        (key, c), = eq.coeffs.items()
        if c == 1:
            return key, const_lin(-eq.const)
        if c == -1:
            return key, const_lin(eq.const)
        return None

    def _substitute_formula(self, formula: Formula, assign: dict[Key, Lin]) -> Optional[Formula]:
        kind = formula[0]
        if kind in ("bvar", "bconst"):
            return formula
        if kind in ("ge", "eq", "ne"):
            lin = formula[1]
            for k, val in assign.items():
                lin = lin.substitute(k, val)
            if lin.is_const():
                ok = (
                    lin.const >= 0 if kind == "ge" else lin.const == 0 if kind == "eq" else lin.const != 0
                )
                return ("bconst", ok)
            return (kind, lin)
        parts = []
        for p in formula[1]:
            q = self._substitute_formula(p, assign)
            if q is None:
                return None
            if q[0] == "bconst":
                if kind == "and" and not q[1]:
                    return None
                if kind == "or" and q[1]:
                    return ("bconst", True)
                continue
            parts.append(q)
        if not parts:
            return ("bconst", kind == "and")
        return (kind, parts)

    # -- arithmetic leaves ---------------------------------------------------

    def _arith_leaf(
        self, bools: dict[Var, bool], ges: list[Lin], eqs: list[Lin], nes: list[Lin]
    ) -> Optional[dict[Var, Value]]:
        # split disequalities, then case-split divisor signs, then decide
        if nes:
            ne, rest = nes[0], nes[1:]
            if ne.is_const():
                return None if ne.const == 0 else self._arith_leaf(bools, ges, eqs, rest)
            for strengthened in (ne.add(const_lin(1), -1), ne.scale(-1).add(const_lin(1), -1)):
                m = self._arith_leaf(bools, ges + [strengthened], eqs, rest)
                if m is not None:
                    return m
            return None
        pairs = self._relevant_divpairs(ges, eqs)
        return self._sign_split(bools, ges, eqs, pairs)

    def _relevant_divpairs(self, ges: list[Lin], eqs: list[Lin]) -> list[tuple[Term, Term]]:
        seen: set[tuple[Term, Term]] = set()
        order: list[tuple[Term, Term]] = []
        frontier = {k for lin in ges + eqs for k in lin.coeffs}
        changed = True
        while changed:
            changed = False
            for (a, b), (la, lb) in self.ctx.divpairs.items():
                if (a, b) in seen:
                    continue
                keys = {self._mod_term(a, b), self._div_term(a, b)}
                if keys & frontier:
                    seen.add((a, b))
                    order.append((a, b))
                    frontier |= set(la.coeffs) | set(lb.coeffs)
                    changed = True
        return order

    @staticmethod
    def _mod_term(a: Term, b: Term) -> Term:
        return App(App(Sym(MOD), a), b)

    @staticmethod
    def _div_term(a: Term, b: Term) -> Term:
        return App(App(Sym(DIV), a), b)

    def _sign_split(
        self,
        bools: dict[Var, bool],
        ges: list[Lin],
        eqs: list[Lin],
        pairs: list[tuple[Term, Term]],
        idx: int = 0,
    ) -> Optional[dict[Var, Value]]:
        if not self.budget.spend_node():
            raise _OutOfBudget()
        if idx == len(pairs):
            return self._decide(bools, ges, eqs)
        a, b = pairs[idx]
        la, lb = self.ctx.divpairs[(a, b)]
        r = Lin({self._mod_term(a, b): 1})
        q = Lin({self._div_term(a, b): 1})
        if lb.is_const():
            c = lb.const
            if c == 0:
                return self._sign_split(bools, ges, eqs, pairs, idx + 1)
            # a = c*q + r, 0 <= r <= |c|-1
            link = la.add(q.scale(c), -1).add(r, -1)
            bounds = [r.copy(), r.scale(-1).add(const_lin(abs(c) - 1))]
            return self._sign_split(bools, ges + bounds, eqs + [link], pairs, idx + 1)
        for sign in (1, -1, 0):
            if sign == 1:
                extra_ge = [lb.add(const_lin(1), -1), r.copy(), lb.add(r, -1).add(const_lin(1), -1)]
                m = self._sign_split(bools, ges + extra_ge, eqs, pairs, idx + 1)
            elif sign == -1:
                extra_ge = [
                    lb.scale(-1).add(const_lin(1), -1),
                    r.copy(),
                    lb.scale(-1).add(r, -1).add(const_lin(1), -1),
                ]
                m = self._sign_split(bools, ges + extra_ge, eqs, pairs, idx + 1)
            else:
                m = self._sign_split(bools, ges, eqs + [lb.copy()], pairs, idx + 1)
            if m is not None:
                return m
        return None

    def _decide(
        self, bools: dict[Var, bool], ges: list[Lin], eqs: list[Lin]
    ) -> Optional[dict[Var, Value]]:
        ges = list(ges)
        elims: list[tuple[Key, Lin]] = []
        eqs = [e for e in eqs]
        while eqs:
            eq = eqs.pop()
            for key, val in elims:
                eq = eq.substitute(key, val)
            if eq.is_const():
                if eq.const != 0:
                    return None
                continue
            pick = next((k for k, c in sorted(eq.coeffs.items(), key=lambda p: repr(p[0])) if abs(c) == 1), None)
            if pick is None:
                g = 0
                for c in eq.coeffs.values():
                    g = math.gcd(g, abs(c))
                if eq.const % g != 0:
                    return None  # gcd test: no integer solution
                ges.append(eq.copy())
                ges.append(eq.scale(-1))
                continue
            c = eq.coeffs[pick]
            rhs = eq.copy()
            del rhs.coeffs[pick]
            value = rhs.scale(-1) if c == 1 else rhs
            elims.append((pick, value))
            ges = [g.substitute(pick, value) for g in ges]
            eqs = [e.substitute(pick, value) for e in eqs]
        feas = _fm_infeasible(ges)
        if feas is True:
            return None
        if feas is None:
            self.unknown_seen = True
            return None
        live = [v for v in self.int_vars if not any(v == k for k, _ in elims)]
        model = self._enumerate(ges, live, {}, elims)
        if model is None:
            self.unknown_seen = True
            return None
        for v in self.bool_vars:
            model.setdefault(v, bools.get(v, False))
        return model

    def _enumerate(
        self,
        ges: list[Lin],
        remaining: list[Var],
        partial: dict[Var, int],
        elims: list[tuple[Key, Lin]],
    ) -> Optional[dict[Var, Value]]:
        if not self.budget.spend_node():
            raise _OutOfBudget()
        if not remaining:
            return self._finish_model(partial, elims)
        var = remaining[0]
        lo, hi, feasible = _shadow(ges, var)
        if not feasible:
            return None
        for v in self._candidates(lo, hi):
            sub = const_lin(v)
            new_ges = [g.substitute(var, sub) for g in ges]
            if any(g.is_const() and g.const < 0 for g in new_ges):
                continue
            partial[var] = v
            m = self._enumerate(new_ges, remaining[1:], partial, elims)
            if m is not None:
                return m
            del partial[var]
        return None

    def _candidates(self, lo: Optional[int], hi: Optional[int], width: int = 48):
        clip = self.range_clip
        if lo is None and hi is None:
            yield 0
            for i in range(1, clip + 1):
                yield i
                yield -i
            return
        if lo is None:
            for v in range(hi, hi - width, -1):
                yield v
            return
        if hi is None:
            for v in range(lo, lo + width):
                yield v
            return
        for v in range(lo, min(hi, lo + width - 1) + 1):
            yield v

    def _finish_model(self, partial: dict[Var, int], elims: list[tuple[Key, Lin]]) -> Optional[dict[Var, Value]]:
        if not self.budget.spend_verify():
            raise _OutOfBudget()
        model: dict[Var, Value] = dict(partial)
        # reconstruct eliminated unknowns in reverse elimination order
        values: dict[Key, int] = dict(partial)
        for key, lin in reversed(elims):
            total = Fraction(lin.const)
            ok = True
            for k, c in lin.coeffs.items():
                kv = self._key_value(k, values, model)
                if kv is None:
                    ok = False
                    break
                total += c * kv
            if not ok:
                continue
            if total.denominator != 1:
                return None
            values[key] = int(total)
            if isinstance(key, Var) and key in self.int_vars:
                model[key] = int(total)
        for v in self.int_vars:
            model.setdefault(v, 0)
        if self.verifier(dict(model)):
            return model
        return None

    def _key_value(self, key: Key, values: dict[Key, int], model: dict[Var, Value]) -> Optional[int]:
        if key in values:
            return values[key]
        if isinstance(key, Var):
            return model.get(key, 0)
        # opaque application: evaluate its term under the current assignment
        from ..theory import eval3, value_term

        fv = free_vars(key)
        mapping = {}
        for v in fv:
            mv = model.get(v, values.get(v))
            if mv is None:
                return None
            mapping[v] = value_term(mv)
        inst = Substitution(mapping).apply(key)
        if not is_ground(inst):
            return None
        result = eval3(inst)
        if isinstance(result, bool) or not isinstance(result, int):
            return None
        return result
