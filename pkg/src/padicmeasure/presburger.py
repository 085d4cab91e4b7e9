"""Presburger formulas over the integers: AST, parser, printer, evaluation,
and total quantifier elimination.

Atoms are kept normalized as  t >= 0,  t = 0  and  m | t  with integer linear
terms t; all comparison operators are folded into these three shapes at parse
time.  Quantifier elimination is Cooper-style: it introduces divisibility
constraints instead of computing disjunctive normal forms, handles "forall"
as not-exists-not, and eliminates the innermost quantifier first.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Iterable, Iterator, Mapping

import numpy as np

VARIABLE_RE = re.compile(r"[A-Za-z][A-Za-z0-9_]*\Z")
RESERVED = {"E", "A", "true", "false"}


class FormulaSyntaxError(SyntaxError):
    """Malformed formula text; carries 1-based line and column."""

    def __init__(self, message: str, line: int, column: int):
        super().__init__(f"{message} (line {line}, column {column})")
        self.lineno = line
        self.offset = column


class NotQuantifierFreeError(ValueError):
    pass


class MissingAssignmentError(KeyError):
    def __init__(self, variable: str):
        super().__init__(variable)
        self.variable = variable


class ScopeError(ValueError):
    pass


# ---------------------------------------------------------------------------
# terms and atoms


@dataclass(frozen=True)
class LinearTerm:
    """Integer linear term: sum of coeff*var plus a constant."""

    coeffs: tuple[tuple[str, int], ...]  # sorted by name, no zero coefficients
    const: int

    @staticmethod
    def make(coeffs: Mapping[str, int] | None = None, const: int = 0) -> LinearTerm:
        items = []
        for name, c in sorted((coeffs or {}).items()):
            if not VARIABLE_RE.match(name) or name in RESERVED:
                raise ValueError(f"bad variable name {name!r}")
            if c != 0:
                items.append((name, int(c)))
        return LinearTerm(tuple(items), int(const))

    @staticmethod
    def constant(c: int) -> LinearTerm:
        return LinearTerm((), int(c))

    @staticmethod
    def variable(name: str) -> LinearTerm:
        return LinearTerm.make({name: 1})

    def coeff(self, name: str) -> int:
        for n, c in self.coeffs:
            if n == name:
                return c
        return 0

    def variables(self) -> tuple[str, ...]:
        return tuple(n for n, _ in self.coeffs)

    def is_constant(self) -> bool:
        return not self.coeffs

    def __add__(self, other: LinearTerm | int) -> LinearTerm:
        if isinstance(other, int):
            return LinearTerm(self.coeffs, self.const + other)
        d = dict(self.coeffs)
        for n, c in other.coeffs:
            d[n] = d.get(n, 0) + c
        return LinearTerm.make(d, self.const + other.const)

    def __sub__(self, other: LinearTerm | int) -> LinearTerm:
        if isinstance(other, int):
            return LinearTerm(self.coeffs, self.const - other)
        return self + other.scale(-1)

    def scale(self, k: int) -> LinearTerm:
        if k == 0:
            return LinearTerm((), 0)
        return LinearTerm(tuple((n, c * k) for n, c in self.coeffs), self.const * k)

    def drop(self, name: str) -> LinearTerm:
        return LinearTerm(tuple((n, c) for n, c in self.coeffs if n != name), self.const)

    def substitute(self, name: str, value: LinearTerm) -> LinearTerm:
        c = self.coeff(name)
        if c == 0:
            return self
        return self.drop(name) + value.scale(c)

    def evaluate(self, assignment: Mapping[str, int]) -> int:
        total = self.const
        for n, c in self.coeffs:
            if n not in assignment:
                raise MissingAssignmentError(n)
            total += c * int(assignment[n])
        return total

    def __str__(self) -> str:
        if not self.coeffs:
            return str(self.const)
        parts = []
        for n, c in self.coeffs:
            if abs(c) == 1:
                body = n
            else:
                body = f"{abs(c)}*{n}"
            parts.append(("+" if c > 0 else "-", body))
        if self.const != 0:
            parts.append(("+" if self.const > 0 else "-", str(abs(self.const))))
        out = parts[0][1] if parts[0][0] == "+" else "-" + parts[0][1]
        for sign, body in parts[1:]:
            out += f" {sign} {body}"
        return out


GEQ0 = "geq0"
EQ0 = "eq0"
DIV = "div"


@dataclass(frozen=True)
class Atom:
    """t >= 0, t = 0, or m | t (modulus m >= 2)."""

    kind: str
    term: LinearTerm
    modulus: int = 0

    def __post_init__(self):
        if self.kind not in (GEQ0, EQ0, DIV):
            raise ValueError(f"bad atom kind {self.kind}")
        if self.kind == DIV and self.modulus < 2:
            raise ValueError("divisibility modulus must be >= 2")
        if self.kind != DIV and self.modulus != 0:
            raise ValueError("modulus only allowed on divisibility atoms")

    def evaluate(self, assignment: Mapping[str, int]) -> bool:
        v = self.term.evaluate(assignment)
        if self.kind == GEQ0:
            return v >= 0
        if self.kind == EQ0:
            return v == 0
        return v % self.modulus == 0

    def __str__(self) -> str:
        if self.kind == GEQ0:
            return f"{self.term} >= 0"
        if self.kind == EQ0:
            return f"{self.term} = 0"
        return f"{self.modulus} | {self.term}"


def geq0(term: LinearTerm) -> Atom:
    return Atom(GEQ0, term)


def eq0(term: LinearTerm) -> Atom:
    return Atom(EQ0, term)


def divides(modulus: int, term: LinearTerm) -> Atom:
    return Atom(DIV, term, modulus)


# ---------------------------------------------------------------------------
# formulas


class Formula:
    """Base class; concrete nodes below are frozen dataclasses."""

    __slots__ = ()

    def __and__(self, other: Formula) -> Formula:
        return conj([self, other])

    def __or__(self, other: Formula) -> Formula:
        return disj([self, other])

    def __invert__(self) -> Formula:
        return neg(self)

    def __str__(self) -> str:
        return format_formula(self)


@dataclass(frozen=True, repr=False)
class TrueF(Formula):
    __slots__ = ()


@dataclass(frozen=True, repr=False)
class FalseF(Formula):
    __slots__ = ()


@dataclass(frozen=True, repr=False)
class AtomF(Formula):
    __slots__ = ("atom",)
    atom: Atom


@dataclass(frozen=True, repr=False)
class NotF(Formula):
    __slots__ = ("arg",)
    arg: Formula


@dataclass(frozen=True, repr=False)
class AndF(Formula):
    __slots__ = ("args",)
    args: tuple[Formula, ...]


@dataclass(frozen=True, repr=False)
class OrF(Formula):
    __slots__ = ("args",)
    args: tuple[Formula, ...]


@dataclass(frozen=True, repr=False)
class ExistsF(Formula):
    __slots__ = ("var", "body")
    var: str
    body: Formula


@dataclass(frozen=True, repr=False)
class ForallF(Formula):
    __slots__ = ("var", "body")
    var: str
    body: Formula


TRUE = TrueF()
FALSE = FalseF()


def conj(args: Iterable[Formula]) -> Formula:
    flat: list[Formula] = []
    for a in args:
        if isinstance(a, AndF):
            flat.extend(a.args)
        elif isinstance(a, TrueF):
            continue
        elif isinstance(a, FalseF):
            return FALSE
        else:
            flat.append(a)
    if not flat:
        return TRUE
    if len(flat) == 1:
        return flat[0]
    return AndF(tuple(flat))


def disj(args: Iterable[Formula]) -> Formula:
    flat: list[Formula] = []
    for a in args:
        if isinstance(a, OrF):
            flat.extend(a.args)
        elif isinstance(a, FalseF):
            continue
        elif isinstance(a, TrueF):
            return TRUE
        else:
            flat.append(a)
    if not flat:
        return FALSE
    if len(flat) == 1:
        return flat[0]
    return OrF(tuple(flat))


def neg(f: Formula) -> Formula:
    if isinstance(f, TrueF):
        return FALSE
    if isinstance(f, FalseF):
        return TRUE
    if isinstance(f, NotF):
        return f.arg
    return NotF(f)


def free_variables(f: Formula) -> frozenset[str]:
    if isinstance(f, (TrueF, FalseF)):
        return frozenset()
    if isinstance(f, AtomF):
        return frozenset(f.atom.term.variables())
    if isinstance(f, NotF):
        return free_variables(f.arg)
    if isinstance(f, (AndF, OrF)):
        out: frozenset[str] = frozenset()
        for a in f.args:
            out |= free_variables(a)
        return out
    if isinstance(f, (ExistsF, ForallF)):
        return free_variables(f.body) - {f.var}
    raise TypeError(f"not a formula: {f!r}")


def is_quantifier_free(f: Formula) -> bool:
    if isinstance(f, (TrueF, FalseF, AtomF)):
        return True
    if isinstance(f, NotF):
        return is_quantifier_free(f.arg)
    if isinstance(f, (AndF, OrF)):
        return all(is_quantifier_free(a) for a in f.args)
    return False


def check_scopes(f: Formula, bound: frozenset[str] = frozenset()) -> None:
    """Reject variables bound twice along one path (shadowing)."""
    if isinstance(f, (ExistsF, ForallF)):
        if f.var in bound:
            raise ScopeError(f"variable {f.var!r} bound twice on one path")
        check_scopes(f.body, bound | {f.var})
    elif isinstance(f, NotF):
        check_scopes(f.arg, bound)
    elif isinstance(f, (AndF, OrF)):
        for a in f.args:
            check_scopes(a, bound)


def evaluate_qf(f: Formula, assignment: Mapping[str, int]) -> bool:
    """Truth value of a quantifier-free formula under an integer assignment."""
    if isinstance(f, TrueF):
        return True
    if isinstance(f, FalseF):
        return False
    if isinstance(f, AtomF):
        return f.atom.evaluate(assignment)
    if isinstance(f, NotF):
        return not evaluate_qf(f.arg, assignment)
    if isinstance(f, AndF):
        return all(evaluate_qf(a, assignment) for a in f.args)
    if isinstance(f, OrF):
        return any(evaluate_qf(a, assignment) for a in f.args)
    if isinstance(f, (ExistsF, ForallF)):
        raise NotQuantifierFreeError("formula contains a quantifier")
    raise TypeError(f"not a formula: {f!r}")


def substitute(f: Formula, name: str, value: LinearTerm) -> Formula:
    if isinstance(f, (TrueF, FalseF)):
        return f
    if isinstance(f, AtomF):
        t = f.atom.term.substitute(name, value)
        return AtomF(Atom(f.atom.kind, t, f.atom.modulus))
    if isinstance(f, NotF):
        return neg(substitute(f.arg, name, value))
    if isinstance(f, AndF):
        return conj(substitute(a, name, value) for a in f.args)
    if isinstance(f, OrF):
        return disj(substitute(a, name, value) for a in f.args)
    if isinstance(f, (ExistsF, ForallF)):
        if f.var == name or f.var in value.variables():
            raise ScopeError("substitution would capture a bound variable")
        body = substitute(f.body, name, value)
        return type(f)(f.var, body)
    raise TypeError(f"not a formula: {f!r}")


# ---------------------------------------------------------------------------
# parser

_TOKEN_RE = re.compile(
    r"""(?P<ws>\s+)
      | (?P<int>\d+)
      | (?P<name>[A-Za-z][A-Za-z0-9_]*)
      | (?P<op>/\\|\\/|!=|<=|>=|<|>|=|\||\+|-|\*|\(|\)|\.|!)
    """,
    re.VERBOSE,
)


@dataclass(frozen=True)
class _Token:
    kind: str  # "int" | "name" | "op" | "end"
    text: str
    line: int
    column: int


def _tokenize(text: str) -> list[_Token]:
    tokens = []
    line, col = 1, 1
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if not m:
            raise FormulaSyntaxError(f"unexpected character {text[pos]!r}", line, col)
        kind = m.lastgroup
        value = m.group()
        if kind != "ws":
            tokens.append(_Token(kind, value, line, col))
        newlines = value.count("\n")
        if newlines:
            line += newlines
            col = len(value) - value.rfind("\n")
        else:
            col += len(value)
        pos = m.end()
    tokens.append(_Token("end", "", line, col))
    return tokens


class _Parser:
    def __init__(self, text: str):
        self.tokens = _tokenize(text)
        self.pos = 0

    def peek(self, ahead: int = 0) -> _Token:
        return self.tokens[min(self.pos + ahead, len(self.tokens) - 1)]

    def next(self) -> _Token:
        tok = self.tokens[self.pos]
        if tok.kind != "end":
            self.pos += 1
        return tok

    def expect(self, text: str) -> _Token:
        tok = self.next()
        if tok.text != text:
            raise FormulaSyntaxError(f"expected {text!r}, found {tok.text or 'end of input'!r}",
                                     tok.line, tok.column)
        return tok

    def fail(self, message: str) -> FormulaSyntaxError:
        tok = self.peek()
        return FormulaSyntaxError(message, tok.line, tok.column)

    # precedence: ! > /\ > \/ > quantifiers
    def parse_formula(self) -> Formula:
        tok = self.peek()
        if tok.kind == "name" and tok.text in ("E", "A") and self.peek(1).kind == "name":
            self.next()
            var = self.next()
            if var.text in RESERVED:
                raise FormulaSyntaxError(f"{var.text!r} is reserved", var.line, var.column)
            self.expect(".")
            body = self.parse_formula()
            node = ExistsF(var.text, body) if tok.text == "E" else ForallF(var.text, body)
            return node
        return self.parse_or()

    def parse_or(self) -> Formula:
        args = [self.parse_and()]
        while self.peek().text == "\\/":
            self.next()
            args.append(self.parse_and())
        return args[0] if len(args) == 1 else OrF(tuple(args))

    def parse_and(self) -> Formula:
        args = [self.parse_not()]
        while self.peek().text == "/\\":
            self.next()
            args.append(self.parse_not())
        return args[0] if len(args) == 1 else AndF(tuple(args))

    def parse_not(self) -> Formula:
        if self.peek().text == "!":
            self.next()
            return neg(self.parse_not())
        return self.parse_atom()

    def parse_atom(self) -> Formula:
        tok = self.peek()
        if tok.text == "(":
            self.next()
            inner = self.parse_formula()
            self.expect(")")
            return inner
        if tok.kind == "name" and tok.text == "true":
            self.next()
            return TRUE
        if tok.kind == "name" and tok.text == "false":
            self.next()
            return FALSE
        left = self.parse_term()
        op = self.peek()
        if op.text == "|":
            if not left.is_constant():
                raise FormulaSyntaxError("divisibility modulus must be an integer literal",
                                         op.line, op.column)
            self.next()
            term = self.parse_term()
            return _make_divisibility(left.const, term)
        if op.text in ("<", "<=", "=", ">=", ">", "!="):
            self.next()
            right = self.parse_term()
            return _make_comparison(left, op.text, right)
        raise self.fail("expected a comparison or divisibility operator")

    def parse_term(self) -> LinearTerm:
        term = self.parse_signed_factor()
        while self.peek().text in ("+", "-"):
            op = self.next().text
            rhs = self.parse_signed_factor()
            term = term + rhs if op == "+" else term - rhs
        return term

    def parse_signed_factor(self) -> LinearTerm:
        if self.peek().text == "-":
            self.next()
            return self.parse_signed_factor().scale(-1)
        return self.parse_factor()

    def parse_factor(self) -> LinearTerm:
        left = self.parse_primary()
        while self.peek().text == "*":
            star = self.next()
            right = self.parse_primary_signed()
            if left.is_constant():
                left = right.scale(left.const)
            elif right.is_constant():
                left = left.scale(right.const)
            else:
                raise FormulaSyntaxError("products must be integer * variable",
                                         star.line, star.column)
        return left

    def parse_primary_signed(self) -> LinearTerm:
        if self.peek().text == "-":
            self.next()
            return self.parse_primary_signed().scale(-1)
        return self.parse_primary()

    def parse_primary(self) -> LinearTerm:
        tok = self.next()
        if tok.kind == "int":
            return LinearTerm.constant(int(tok.text))
        if tok.kind == "name":
            if tok.text in RESERVED:
                raise FormulaSyntaxError(f"{tok.text!r} is reserved", tok.line, tok.column)
            return LinearTerm.variable(tok.text)
        raise FormulaSyntaxError(f"expected a term, found {tok.text or 'end of input'!r}",
                                 tok.line, tok.column)


def _make_comparison(left: LinearTerm, op: str, right: LinearTerm) -> Formula:
    if op == "<":
        return AtomF(geq0(right - left - 1))
    if op == "<=":
        return AtomF(geq0(right - left))
    if op == ">":
        return AtomF(geq0(left - right - 1))
    if op == ">=":
        return AtomF(geq0(left - right))
    if op == "=":
        return AtomF(eq0(left - right))
    return neg(AtomF(eq0(left - right)))  # !=


def _make_divisibility(modulus: int, term: LinearTerm) -> Formula:
    m = abs(modulus)
    if m == 0:
        return AtomF(eq0(term))
    if m == 1:
        return TRUE
    return AtomF(divides(m, term))


def parse(text: str) -> Formula:
    """Parse formula text into its AST; raises FormulaSyntaxError with position."""
    parser = _Parser(text)
    f = parser.parse_formula()
    end = parser.peek()
    if end.kind != "end":
        raise FormulaSyntaxError(f"trailing input starting at {end.text!r}", end.line, end.column)
    check_scopes(f)
    return f


def parse_term(text: str) -> LinearTerm:
    parser = _Parser(text)
    t = parser.parse_term()
    end = parser.peek()
    if end.kind != "end":
        raise FormulaSyntaxError(f"trailing input starting at {end.text!r}", end.line, end.column)
    return t


# ---------------------------------------------------------------------------
# printer

_LEVEL_QUANT = 0
_LEVEL_OR = 1
_LEVEL_AND = 2
_LEVEL_NOT = 3


def _level(f: Formula) -> int:
    if isinstance(f, (ExistsF, ForallF)):
        return _LEVEL_QUANT
    if isinstance(f, OrF):
        return _LEVEL_OR
    if isinstance(f, AndF):
        return _LEVEL_AND
    if isinstance(f, NotF):
        return _LEVEL_NOT
    return 4


def format_formula(f: Formula) -> str:
    """Canonical text; parse(format_formula(f)) reproduces the AST."""
    if isinstance(f, TrueF):
        return "true"
    if isinstance(f, FalseF):
        return "false"
    if isinstance(f, AtomF):
        return str(f.atom)
    if isinstance(f, NotF):
        inner = format_formula(f.arg)
        if _level(f.arg) <= _LEVEL_AND:
            inner = f"({inner})"
        return "!" + inner
    if isinstance(f, AndF):
        parts = [
            f"({format_formula(a)})" if _level(a) <= _LEVEL_AND else format_formula(a)
            for a in f.args
        ]
        return " /\\ ".join(parts)
    if isinstance(f, OrF):
        parts = [
            f"({format_formula(a)})" if _level(a) <= _LEVEL_OR else format_formula(a)
            for a in f.args
        ]
        return " \\/ ".join(parts)
    if isinstance(f, ExistsF):
        return f"E {f.var}. {format_formula(f.body)}"
    if isinstance(f, ForallF):
        return f"A {f.var}. {format_formula(f.body)}"
    raise TypeError(f"not a formula: {f!r}")


# ---------------------------------------------------------------------------
# simplification

def _gcd(a: int, b: int) -> int:
    while b:
        a, b = b, a % b
    return abs(a)


def _simplify_atom(atom: Atom) -> Formula:
    term = atom.term
    if term.is_constant():
        if atom.kind == GEQ0:
            return TRUE if term.const >= 0 else FALSE
        if atom.kind == EQ0:
            return TRUE if term.const == 0 else FALSE
        return TRUE if term.const % atom.modulus == 0 else FALSE
    g = 0
    for _, c in term.coeffs:
        g = _gcd(g, c)
    if atom.kind == GEQ0:
        if g > 1:
            coeffs = {n: c // g for n, c in term.coeffs}
            const = term.const // g  # floor division: g*t' + c >= 0 iff t' >= ceil(-c/g)
            term = LinearTerm.make(coeffs, const)
        return AtomF(geq0(term))
    if atom.kind == EQ0:
        if g > 1:
            if term.const % g != 0:
                return FALSE
            term = LinearTerm.make({n: c // g for n, c in term.coeffs}, term.const // g)
        if term.coeffs[0][1] < 0:
            term = term.scale(-1)
        return AtomF(eq0(term))
    m = atom.modulus
    gm = _gcd(g, m)
    if gm > 1:
        if term.const % gm != 0:
            return FALSE
        term = LinearTerm.make({n: c // gm for n, c in term.coeffs}, term.const // gm)
        m //= gm
        if m == 1:
            return TRUE
    coeffs = {n: c % m for n, c in term.coeffs}
    term = LinearTerm.make(coeffs, term.const % m)
    if term.is_constant():
        return TRUE if term.const % m == 0 else FALSE
    return AtomF(divides(m, term))


def simplify(f: Formula) -> Formula:
    """Structural, sound simplification: constant folding, gcd reduction,
    flattening, deduplication, absorption, and one-variable interval checks."""
    if isinstance(f, (TrueF, FalseF)):
        return f
    if isinstance(f, AtomF):
        return _simplify_atom(f.atom)
    if isinstance(f, NotF):
        inner = simplify(f.arg)
        return neg(inner)
    if isinstance(f, (ExistsF, ForallF)):
        body = simplify(f.body)
        if f.var not in free_variables(body):
            return body
        return type(f)(f.var, body)
    if isinstance(f, (AndF, OrF)):
        is_and = isinstance(f, AndF)
        args: list[Formula] = []
        seen = set()
        stack = list(f.args)
        i = 0
        while i < len(stack):
            a = simplify(stack[i])
            i += 1
            if isinstance(a, AndF if is_and else OrF):
                stack[i:i] = list(a.args)
                continue
            if isinstance(a, TrueF):
                if is_and:
                    continue
                return TRUE
            if isinstance(a, FalseF):
                if is_and:
                    return FALSE
                continue
            if a in seen:
                continue
            seen.add(a)
            args.append(a)
        # complementary literals
        for a in args:
            if neg(a) in seen:
                return FALSE if is_and else TRUE
        if is_and:
            folded = _fold_geq_and(args)
            if folded is not None:
                args = folded
            else:
                return FALSE
        if not args:
            return TRUE if is_and else FALSE
        if len(args) == 1:
            return args[0]
        return AndF(tuple(args)) if is_and else OrF(tuple(args))
    raise TypeError(f"not a formula: {f!r}")


def _fold_geq_and(args: list[Formula]) -> list[Formula] | None:
    """Merge geq0 atoms with identical coefficient vectors; None if infeasible."""
    lows: dict[tuple, int] = {}
    for a in args:
        if isinstance(a, AtomF) and a.atom.kind == GEQ0:
            key = a.atom.term.coeffs
            c = a.atom.term.const
            lows[key] = min(lows.get(key, c), c)
    for key, c in lows.items():
        nkey = tuple((n, -v) for n, v in key)
        if nkey in lows and c + lows[nkey] < 0:
            return None
    merged: list[Formula] = []
    used = set()
    for a in args:
        if isinstance(a, AtomF) and a.atom.kind == GEQ0:
            key = a.atom.term.coeffs
            if key not in used:
                used.add(key)
                merged.append(AtomF(geq0(LinearTerm(key, lows[key]))))
        else:
            merged.append(a)
    return merged


# ---------------------------------------------------------------------------
# negation normal form

def nnf(f: Formula, negate: bool = False) -> Formula:
    """Push negations to literals; literals are atoms or Not(eq0)/Not(div)."""
    if isinstance(f, TrueF):
        return FALSE if negate else TRUE
    if isinstance(f, FalseF):
        return TRUE if negate else FALSE
    if isinstance(f, AtomF):
        if not negate:
            return f
        if f.atom.kind == GEQ0:
            return AtomF(geq0(f.atom.term.scale(-1) - 1))
        return NotF(f)
    if isinstance(f, NotF):
        return nnf(f.arg, not negate)
    if isinstance(f, AndF):
        parts = [nnf(a, negate) for a in f.args]
        return disj(parts) if negate else conj(parts)
    if isinstance(f, OrF):
        parts = [nnf(a, negate) for a in f.args]
        return conj(parts) if negate else disj(parts)
    if isinstance(f, ExistsF):
        inner = nnf(f.body, negate)
        return ForallF(f.var, inner) if negate else ExistsF(f.var, inner)
    if isinstance(f, ForallF):
        inner = nnf(f.body, negate)
        return ExistsF(f.var, inner) if negate else ForallF(f.var, inner)
    raise TypeError(f"not a formula: {f!r}")


# ---------------------------------------------------------------------------
# Cooper quantifier elimination

def _lcm(a: int, b: int) -> int:
    return a * b // _gcd(a, b)


def _literals_with(f: Formula, var: str) -> Iterator[tuple[Formula, Atom, bool]]:
    """Yield (literal node, atom, negated) for literals mentioning var (NNF input)."""
    if isinstance(f, AtomF):
        if f.atom.term.coeff(var) != 0:
            yield (f, f.atom, False)
    elif isinstance(f, NotF) and isinstance(f.arg, AtomF):
        if f.arg.atom.term.coeff(var) != 0:
            yield (f, f.arg.atom, True)
    elif isinstance(f, (AndF, OrF)):
        for a in f.args:
            yield from _literals_with(a, var)


def _map_literals(f: Formula, fn) -> Formula:
    """Rebuild an NNF formula, transforming each literal through fn."""
    if isinstance(f, (TrueF, FalseF)):
        return f
    if isinstance(f, AtomF):
        return fn(f.atom, False)
    if isinstance(f, NotF) and isinstance(f.arg, AtomF):
        return fn(f.arg.atom, True)
    if isinstance(f, AndF):
        return conj(_map_literals(a, fn) for a in f.args)
    if isinstance(f, OrF):
        return disj(_map_literals(a, fn) for a in f.args)
    raise NotQuantifierFreeError("expected quantifier-free NNF")


def _eliminate_exists(var: str, body: Formula) -> Formula:
    """Cooper elimination of E var from a quantifier-free body."""
    body = simplify(nnf(body))
    if var not in free_variables(body):
        return body

    # 1. normalize coefficients of var to +-l, then set w = l*var
    l = 1
    for _, atom, _ in _literals_with(body, var):
        l = _lcm(l, abs(atom.term.coeff(var)))

    def rescale(atom: Atom, negated: bool) -> Formula:
        c = atom.term.coeff(var)
        if c == 0:
            lit: Formula = AtomF(atom)
            return neg(lit) if negated else lit
        m = l // abs(c)
        term = atom.term.scale(m)
        # replace m*c*var (= +-l * var) by a unit-coefficient occurrence
        coeffs = {n: v for n, v in term.coeffs if n != var}
        coeffs[var] = 1 if c > 0 else -1
        term = LinearTerm.make(coeffs, term.const)
        if atom.kind == DIV:
            new = Atom(DIV, term, atom.modulus * m)
        else:
            new = Atom(atom.kind, term)
        lit = AtomF(new)
        return neg(lit) if negated else lit

    body = _map_literals(body, rescale)
    if l > 1:
        body = conj([body, AtomF(divides(l, LinearTerm.variable(var)))])

    # 2. delta = lcm of divisibility moduli on var
    delta = 1
    for _, atom, _ in _literals_with(body, var):
        if atom.kind == DIV:
            delta = _lcm(delta, atom.modulus)

    # 3. boundary sets. rest = term without var, so atom reads +-var + rest (kind) 0
    b_set: list[LinearTerm] = []
    a_set: list[LinearTerm] = []
    seen_b: set = set()
    seen_a: set = set()
    for _, atom, negated in _literals_with(body, var):
        c = atom.term.coeff(var)
        rest = atom.term.drop(var)
        if atom.kind == DIV:
            continue
        if atom.kind == GEQ0 and not negated:
            if c > 0:
                cand_b, cand_a = [rest.scale(-1) - 1], []
            else:
                cand_b, cand_a = [], [rest + 1]
        elif atom.kind == EQ0 and not negated:
            val = rest.scale(-1) if c > 0 else rest  # var = val
            cand_b, cand_a = [val - 1], [val + 1]
        else:  # negated EQ0
            val = rest.scale(-1) if c > 0 else rest
            cand_b, cand_a = [val], [val]
        for t in cand_b:
            if t not in seen_b:
                seen_b.add(t)
                b_set.append(t)
        for t in cand_a:
            if t not in seen_a:
                seen_a.add(t)
                a_set.append(t)

    use_lower = len(b_set) <= len(a_set)
    boundaries = b_set if use_lower else a_set

    def limit_literal(atom: Atom, negated: bool) -> Formula:
        c = atom.term.coeff(var)
        if c == 0:
            lit: Formula = AtomF(atom)
            return neg(lit) if negated else lit
        if atom.kind == DIV:
            lit = AtomF(atom)
            return neg(lit) if negated else lit
        if atom.kind == EQ0:
            return TRUE if negated else FALSE
        # geq0: +-var + rest >= 0
        if use_lower:  # var -> -infinity
            return FALSE if c > 0 else TRUE
        return TRUE if c > 0 else FALSE

    limit_body = _map_literals(body, limit_literal)

    disjuncts: list[Formula] = []
    for j in range(1, delta + 1):
        jt = LinearTerm.constant(j if use_lower else -j)
        disjuncts.append(simplify(substitute(limit_body, var, jt)))
    for b in boundaries:
        for j in range(1, delta + 1):
            val = b + j if use_lower else b - j
            disjuncts.append(simplify(substitute(body, var, val)))
    return simplify(disj(disjuncts))


def qe(f: Formula) -> Formula:
    """Total quantifier elimination; output is equivalent and quantifier-free."""
    if isinstance(f, (TrueF, FalseF, AtomF)):
        return simplify(f)
    if isinstance(f, NotF):
        return simplify(neg(qe(f.arg)))
    if isinstance(f, AndF):
        return simplify(conj(qe(a) for a in f.args))
    if isinstance(f, OrF):
        return simplify(disj(qe(a) for a in f.args))
    if isinstance(f, ExistsF):
        return _eliminate_exists(f.var, qe(f.body))
    if isinstance(f, ForallF):
        inner = qe(f.body)
        return simplify(neg(_eliminate_exists(f.var, simplify(neg(inner)))))
    raise TypeError(f"not a formula: {f!r}")


_SAT_RESULTS: dict = {}


def is_satisfiable(f: Formula) -> bool:
    """Exact satisfiability over the integers via quantifier elimination."""
    cached = _SAT_RESULTS.get(f)
    if cached is not None:
        return cached
    g = f
    for v in sorted(free_variables(f)):
        g = ExistsF(v, g)
    result = simplify(qe(g))
    if isinstance(result, TrueF):
        out = True
    elif isinstance(result, FalseF):
        out = False
    else:
        raise AssertionError("qe of a sentence must be ground")
    _SAT_RESULTS[f] = out
    return out


# ---------------------------------------------------------------------------
# grid evaluation (vectorized; shared with the brute-force oracle)

def evaluate_on_grid(f: Formula, axes: Mapping[str, np.ndarray]) -> np.ndarray:
    """Evaluate a quantifier-free formula on a cartesian grid.

    axes maps each variable to a 1-D integer array; the result is a boolean
    array of shape (len(axes[v1]), len(axes[v2]), ...) with variables in the
    given mapping order.  Variables of f must all appear in axes.
    """
    names = list(axes.keys())
    shape = tuple(len(axes[n]) for n in names)
    grids = {}
    for i, n in enumerate(names):
        view = [1] * len(names)
        view[i] = shape[i]
        grids[n] = np.asarray(axes[n], dtype=np.int64).reshape(view)

    def rec(g: Formula) -> np.ndarray:
        if isinstance(g, TrueF):
            return np.ones(shape, dtype=bool)
        if isinstance(g, FalseF):
            return np.zeros(shape, dtype=bool)
        if isinstance(g, AtomF):
            atom = g.atom
            total = np.full((1,) * len(names), atom.term.const, dtype=object)
            for n, c in atom.term.coeffs:
                if n not in grids:
                    raise MissingAssignmentError(n)
                total = total + c * grids[n].astype(object)
            if atom.kind == GEQ0:
                out = total >= 0
            elif atom.kind == EQ0:
                out = total == 0
            else:
                out = (total % atom.modulus) == 0
            return np.broadcast_to(np.asarray(out, dtype=bool), shape).copy()
        if isinstance(g, NotF):
            return ~rec(g.arg)
        if isinstance(g, AndF):
            out = rec(g.args[0])
            for a in g.args[1:]:
                out &= rec(a)
            return out
        if isinstance(g, OrF):
            out = rec(g.args[0])
            for a in g.args[1:]:
                out |= rec(a)
            return out
        raise NotQuantifierFreeError("grid evaluation needs a quantifier-free formula")

    return rec(f)


def equivalent_on_box(f, g, bound: int) -> bool:
    """Exhaustively compare two quantifier-free formulas on [-bound, bound]^n.

    Either argument may also be a table produced by the brute-force oracle
    (anything with .variables and .on_grid)."""
    fvars = set()
    for h in (f, g):
        if isinstance(h, Formula):
            if not is_quantifier_free(h):
                raise NotQuantifierFreeError("equivalent_on_box needs quantifier-free input")
            fvars |= set(free_variables(h))
        else:
            fvars |= set(h.variables)
    names = sorted(fvars)
    values = np.arange(-bound, bound + 1, dtype=np.int64)
    axes = {n: values for n in names}

    def table(h) -> np.ndarray:
        if isinstance(h, Formula):
            return evaluate_on_grid(h, axes)
        return h.on_grid(axes)

    return bool(np.array_equal(table(f), table(g)))
