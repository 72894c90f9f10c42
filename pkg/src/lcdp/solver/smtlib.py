"""SMT-LIB 2 serialization and the external solver child process.

One solver process serves a whole analysis run; each query is wrapped in
(push)/(pop).  A query that times out kills the process (the next query
respawns it) and reports unknown.
"""

from __future__ import annotations

import queue
import shlex
import subprocess
import threading
from typing import Optional, Union

from ..kernel import BOOL, INT, Sort, Sym, Term, Var, free_vars, spine
from ..theory import (
    AND,
    DIV,
    EQ,
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
    Value,
)

_OPS = {
    PLUS: "+",
    MINUS: "-",
    TIMES: "*",
    DIV: "div",
    MOD: "mod",
    LT: "<",
    LE: "<=",
    GT: ">",
    GE: ">=",
    EQ: "=",
    AND: "and",
    OR: "or",
    NOT: "not",
}

_SIMPLE = set("abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789_~!@$%^&*+=<>.?/-")


def smt_name(name: str) -> str:
    if name and all(c in _SIMPLE for c in name) and not name[0].isdigit():
        return name
    return "|" + name.replace("|", "_") + "|"


def smt_sort(t) -> str:
    if t == INT:
        return "Int"
    if t == BOOL:
        return "Bool"
    raise ValueError(f"sort {t!r} has no SMT-LIB counterpart")


def serialize(t: Term) -> str:
    if isinstance(t, Var):
        return smt_name(t.name)
    h, args = spine(t)
    if isinstance(h, Sym):
        f = h.symbol
        if f.is_value:
            if isinstance(f.value, bool):
                return "true" if f.value else "false"
            n = f.value
            return str(n) if n >= 0 else f"(- {-n})"
        if f == NE:
            return f"(distinct {serialize(args[0])} {serialize(args[1])})"
        op = _OPS.get(f)
        if op is None:
            raise ValueError(f"symbol {f.name} has no SMT-LIB counterpart")
        return "(" + op + "".join(" " + serialize(a) for a in args) + ")"
    raise ValueError(f"cannot serialize {t!r}")


def render_query(formula: Term) -> list[str]:
    """Declarations plus assertion for one (push)-scoped query."""
    lines = []
    for v in sorted(free_vars(formula), key=lambda v: v.name):
        if not isinstance(v.type, Sort):
            raise ValueError(f"variable {v.name} has a non-base type")
        lines.append(f"(declare-const {smt_name(v.name)} {smt_sort(v.type)})")
    lines.append(f"(assert {serialize(formula)})")
    return lines


# ---------------------------------------------------------------------------
# S-expression reading for models


def _tokenize(text: str) -> list[str]:
    out = []
    i = 0
    while i < len(text):
        c = text[i]
        if c in "()":
            out.append(c)
            i += 1
        elif c == "|":
            j = text.index("|", i + 1)
            out.append(text[i : j + 1])
            i = j + 1
        elif c.isspace():
            i += 1
        else:
            j = i
            while j < len(text) and not text[j].isspace() and text[j] not in "()":
                j += 1
            out.append(text[i:j])
            i = j
    return out


def _parse_sexprs(tokens: list[str]):
    stack: list[list] = [[]]
    for tok in tokens:
        if tok == "(":
            stack.append([])
        elif tok == ")":
            done = stack.pop()
            stack[-1].append(done)
        else:
            stack[-1].append(tok)
    return stack[0]


def _atom_value(sexpr) -> Optional[Union[int, bool]]:
    if isinstance(sexpr, list):
        if len(sexpr) == 2 and sexpr[0] == "-":
            inner = _atom_value(sexpr[1])
            return -inner if isinstance(inner, int) else None
        return None
    if sexpr == "true":
        return True
    if sexpr == "false":
        return False
    try:
        return int(sexpr)
    except ValueError:
        return None


def parse_model(text: str, variables: dict[str, Var]) -> dict[Var, Value]:
    """Extract variable assignments from a (get-model) response."""
    model: dict[Var, Value] = {}
    for entry in _walk_define_funs(_parse_sexprs(_tokenize(text))):
        name, value = entry
        plain = name[1:-1].replace("|", "") if name.startswith("|") else name
        for candidate in (name, plain):
            var = variables.get(candidate)
            if var is not None and value is not None:
                model[var] = value
                break
    return model


def _walk_define_funs(sexprs):
    for node in sexprs:
        if not isinstance(node, list):
            continue
        if len(node) >= 5 and node[0] == "define-fun":
            yield node[1], _atom_value(node[4])
        else:
            yield from _walk_define_funs(node)


# ---------------------------------------------------------------------------
# Child process management


class ExternalSolverError(Exception):
    pass


class SolverProcess:
    """An SMT-LIB 2 solver subprocess with per-query timeouts."""

    def __init__(self, command: str, logic: str = "QF_NIA"):
        self.command = command
        self.logic = logic
        self.proc: Optional[subprocess.Popen] = None
        self.lines: "queue.Queue[Optional[str]]" = queue.Queue()

    def _spawn(self) -> None:
        argv = shlex.split(self.command)
        try:
            self.proc = subprocess.Popen(
                argv,
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                stderr=subprocess.DEVNULL,
                text=True,
                bufsize=1,
            )
        except OSError as e:
            raise ExternalSolverError(f"cannot start solver {argv[0]!r}: {e}")
        self.lines = queue.Queue()
        t = threading.Thread(target=self._pump, args=(self.proc.stdout,), daemon=True)
        t.start()
        self._send("(set-option :print-success false)")
        self._send(f"(set-logic {self.logic})")

    def _pump(self, stream) -> None:
        for line in stream:
            self.lines.put(line.rstrip("\n"))
        self.lines.put(None)

    def _send(self, line: str) -> None:
        assert self.proc is not None and self.proc.stdin is not None
        self.proc.stdin.write(line + "\n")
        self.proc.stdin.flush()

    def _read_line(self, timeout_s: float) -> str:
        line = self.lines.get(timeout=timeout_s)
        if line is None:
            raise ExternalSolverError("solver process closed its output")
        return line

    def _read_balanced(self, timeout_s: float) -> str:
        buf = []
        depth = 0
        while True:
            line = self._read_line(timeout_s)
            buf.append(line)
            depth += line.count("(") - line.count(")")
            if depth <= 0 and any(s.strip() for s in buf):
                return "\n".join(buf)

    def kill(self) -> None:
        if self.proc is not None:
            try:
                self.proc.kill()
            except OSError:
                pass
            self.proc = None

    def query(self, formula: Term, timeout_ms: int) -> tuple[str, Optional[dict[Var, Value]]]:
        """Returns (status, model) with status in sat/unsat/unknown."""
        timeout_s = max(timeout_ms, 1) / 1000.0
        if self.proc is None or self.proc.poll() is not None:
            self._spawn()
        variables = {smt_name(v.name): v for v in free_vars(formula)}
        variables.update({v.name: v for v in free_vars(formula)})
        try:
            self._send("(push 1)")
            for line in render_query(formula):
                self._send(line)
            self._send("(check-sat)")
            status = self._read_line(timeout_s).strip()
            model = None
            if status == "sat":
                self._send("(get-model)")
                model = parse_model(self._read_balanced(timeout_s), variables)
            self._send("(pop 1)")
            if status not in ("sat", "unsat"):
                return ("unknown", None)
            return (status, model)
        except (queue.Empty, BrokenPipeError, OSError):
            self.kill()
            return ("unknown", None)
