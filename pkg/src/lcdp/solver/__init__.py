"""Satisfiability and entailment of logical constraints.

Queries go to an external SMT solver (SMT-LIB 2 over a child process) when
one is configured via SolverConfig/--solver/LCTRS_SMT, and to the built-in
decision procedure otherwise.  Every sat model is verified by the internal
evaluator before being returned; a model the evaluator rejects is a hard
error because it means solver and evaluator disagree on semantics.

Constraint truth follows the evaluator: a constraint whose instance gets
stuck on division by zero does not hold.  Queries are therefore strengthened
with divisor-nonzero side conditions before being sent anywhere.
"""

from __future__ import annotations

import os
import time
from dataclasses import dataclass, field
from typing import Mapping, Optional, Union

from ..kernel import App, Substitution, Sym, Term, Var, free_vars, is_ground, spine
from ..theory import (
    DIV,
    MOD,
    TRUE,
    Value,
    eval3,
    int_val,
    mk_and,
    mk_eq,
    mk_not,
    mk_or,
    value_term,
)
from .native import Budget, NativeSolver
from .smtlib import ExternalSolverError, SolverProcess, render_query


class SolverMismatchError(Exception):
    """External solver produced a model the internal evaluator rejects."""


class IncompleteAssignmentError(Exception):
    pass


@dataclass(frozen=True)
class Sat:
    model: dict[Var, Value]


@dataclass(frozen=True)
class Unsat:
    pass


@dataclass(frozen=True)
class Unknown:
    reason: str = ""


@dataclass(frozen=True)
class Valid:
    pass


@dataclass(frozen=True)
class Invalid:
    counter_model: dict[Var, Value]


SatVerdict = Union[Sat, Unsat, Unknown]
EntailmentVerdict = Union[Valid, Invalid, Unknown]


@dataclass
class SolverConfig:
    command: Optional[str] = None  # e.g. "z3 -in"; None selects the built-in backend
    timeout_ms: int = 5000
    logic: str = "QF_NIA"
    log_path: Optional[str] = None

    def __post_init__(self) -> None:
        if self.timeout_ms <= 0:
            raise ValueError("timeout must be positive")


def config_from_env() -> SolverConfig:
    return SolverConfig(command=os.environ.get("LCTRS_SMT") or None)


# ---------------------------------------------------------------------------


def divisor_subterms(t: Term) -> list[Term]:
    """Divisors of every div/mod occurrence, outermost first, deduplicated."""
    out: list[Term] = []
    seen = set()

    def walk(u: Term) -> None:
        h, args = spine(u)
        if isinstance(h, Sym) and h.symbol in (DIV, MOD) and len(args) == 2:
            if args[1] not in seen:
                seen.add(args[1])
                out.append(args[1])
        for a in args:
            walk(a)

    walk(t)
    return out


def _truth(phi: Term, model: Mapping[Var, Value]) -> bool:
    sigma = Substitution({v: value_term(model[v]) for v in free_vars(phi) if v in model})
    inst = sigma.apply(phi)
    if not is_ground(inst):
        return False
    return eval3(inst) is True


def eval_ground(phi: Term, assignment: Mapping[Var, Value]) -> bool:
    """Truth of a constraint under a total assignment of values.

    Raises IncompleteAssignmentError if some free variable is unassigned.
    """
    missing = [v for v in free_vars(phi) if v not in assignment]
    if missing:
        raise IncompleteAssignmentError(f"unassigned variables: {sorted(v.name for v in missing)}")
    return _truth(phi, assignment)


class SmtSession:
    """A (serialized) sequence of queries sharing one backend and one cache."""

    def __init__(self, config: Optional[SolverConfig] = None):
        self.config = config or config_from_env()
        self.process: Optional[SolverProcess] = None
        if self.config.command:
            self.process = SolverProcess(self.config.command, self.config.logic)
        self._cache: dict = {}
        self._log = None
        if self.config.log_path:
            self._log = open(self.config.log_path, "a")
        self.stats = {"queries": 0, "external": 0, "native": 0, "cache_hits": 0}

    def close(self) -> None:
        if self.process is not None:
            self.process.kill()
        if self._log is not None:
            self._log.close()
            self._log = None

    def __enter__(self) -> "SmtSession":
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    # -- public operations ---------------------------------------------------

    def check_sat(self, phi: Term) -> SatVerdict:
        key = ("sat", phi)
        cached = self._cache.get(key)
        if cached is not None:
            self.stats["cache_hits"] += 1
            return cached
        side = [mk_not(mk_eq(d, int_val(0))) for d in divisor_subterms(phi)]
        query = mk_and(phi, *side)
        verdict = self._solve(query, lambda m: _truth(phi, m))
        self._cache[key] = verdict
        return verdict

    def check_entailment(self, phi: Term, psi: Term) -> EntailmentVerdict:
        """phi |= psi, decided as unsatisfiability of phi and not-psi."""
        key = ("ent", phi, psi)
        cached = self._cache.get(key)
        if cached is not None:
            self.stats["cache_hits"] += 1
            return cached
        side = [mk_not(mk_eq(d, int_val(0))) for d in divisor_subterms(phi)]
        # psi fails either by evaluating to false or by getting stuck on a
        # zero divisor, hence the disjunction over psi's divisors.
        stuck = [mk_eq(d, int_val(0)) for d in divisor_subterms(psi)]
        query = mk_and(phi, *side, mk_or(mk_not(psi), *stuck))
        sat = self._solve(query, lambda m: _truth(phi, m) and not _truth(psi, m))
        verdict: EntailmentVerdict
        if isinstance(sat, Sat):
            verdict = Invalid(sat.model)
        elif isinstance(sat, Unsat):
            verdict = Valid()
        else:
            verdict = sat
        self._cache[key] = verdict
        return verdict

    # -- dispatch -------------------------------------------------------------

    def _solve(self, query: Term, verify) -> SatVerdict:
        self.stats["queries"] += 1
        if self._log is not None:
            self._log.write("(push 1)\n")
            for line in render_query(query):
                self._log.write(line + "\n")
            self._log.write("(check-sat)\n(pop 1)\n")
            self._log.flush()
        if self.process is not None:
            verdict = self._solve_external(query, verify)
            if not isinstance(verdict, Unknown):
                return verdict
        return self._solve_native(query, verify)

    def _solve_external(self, query: Term, verify) -> SatVerdict:
        self.stats["external"] += 1
        try:
            status, model = self.process.query(query, self.config.timeout_ms)
        except ExternalSolverError as e:
            return Unknown(str(e))
        except ValueError as e:  # unserializable query
            return Unknown(str(e))
        if status == "unsat":
            return Unsat()
        if status == "sat":
            full = {v: model.get(v, 0 if v.type.name == "Int" else False) for v in free_vars(query)}
            if not verify(full):
                raise SolverMismatchError(
                    f"solver model {model} fails internal evaluation of {query!r}"
                )
            return Sat(full)
        return Unknown("external solver answered unknown or timed out")

    def _solve_native(self, query: Term, verify) -> SatVerdict:
        self.stats["native"] += 1
        def checked(model: dict[Var, Value]) -> bool:
            return verify(model)

        result = NativeSolver(query, checked).solve()
        if result.status == "sat":
            return Sat(result.model)
        if result.status == "unsat":
            return Unsat()
        return Unknown(result.reason)
