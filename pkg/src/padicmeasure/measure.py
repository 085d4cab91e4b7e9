"""Exact p-adic arithmetic and closed-form measures of box cells.

A box cell fixes, per coordinate, a center, an angular-component condition at
some level, and couples the valuation vector through a Presburger condition;
its Haar measure is a weighted Presburger sum.  This module turns cells into
such sums, evaluates the sums in closed form as guarded exponential
polynomials over the parameters, and decides identical vanishing of those
exponential polynomials.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Mapping, Sequence, Union

from .algebra import AffineForm, Polynomial, frac, power_fraction
from .presburger import (
    AtomF,
    Formula,
    LinearTerm,
    TRUE,
    conj,
    divides,
    evaluate_qf,
    free_variables,
    is_satisfiable,
    neg,
    simplify,
)
from .semilinear import (
    OutOfDomainError,
    Tower,
    UnboundedDirectionError,
    rectilinearize,
    sum_over_tower,
    to_cells,
    triangulate,
)

INFINITY = float("inf")


class InputError(ValueError):
    """Ill-formed cell data, e.g. a weight that is not integer-valued."""


class ZeroInputError(ValueError):
    pass


class DivergesError(Exception):
    def __init__(self, variable: str, direction: int, generator: int | None = None):
        arrow = "+inf" if direction > 0 else "-inf"
        where = f" (generator {generator})" if generator is not None else ""
        super().__init__(f"measure diverges along {variable} towards {arrow}{where}")
        self.variable = variable
        self.direction = direction
        self.generator = generator


@dataclass(frozen=True)
class PAdicContext:
    """The residue characteristic; Haar measure is normalized so that the
    n-fold product of the valuation ring has measure 1."""

    p: int

    def __post_init__(self):
        if self.p < 2 or any(self.p % d == 0 for d in range(2, int(self.p**0.5) + 1)):
            raise ValueError(f"p must be prime, got {self.p}")


def valuation(q: Union[int, Fraction], ctx: PAdicContext):
    """Exact p-adic valuation; +inf for zero."""
    q = frac(q)
    if q == 0:
        return INFINITY
    p = ctx.p
    v = 0
    num = q.numerator
    while num % p == 0:
        num //= p
        v += 1
    den = q.denominator
    while den % p == 0:
        den //= p
        v -= 1
    return v


def ac_level(q: Union[int, Fraction], level: int, ctx: PAdicContext) -> int:
    """Unit part of q modulo p^level (the level-wise angular component)."""
    q = frac(q)
    if q == 0:
        raise ZeroInputError("angular component of zero is undefined")
    if level < 1:
        raise ValueError("level must be >= 1")
    p = ctx.p
    num, den = q.numerator, q.denominator
    while num % p == 0:
        num //= p
    while den % p == 0:
        den //= p
    mod = p**level
    return (num * pow(den, -1, mod)) % mod


# ---------------------------------------------------------------------------
# weights and box cells


@dataclass(frozen=True)
class Weight:
    """nu(s, lambda) = (c(s) + sum_i b_i * lambda_i) / r, integer-valued on its
    attached domain."""

    r: int
    c: LinearTerm  # over the parameters
    b: tuple[tuple[str, int], ...]  # per lambda variable, sorted by name

    @staticmethod
    def make(r: int, c: LinearTerm, b: Mapping[str, int] | None = None) -> Weight:
        if r < 1:
            raise InputError("weight denominator r must be >= 1")
        items = tuple(sorted((n, int(v)) for n, v in (b or {}).items() if v != 0))
        return Weight(r, c, items)

    @staticmethod
    def constant(value: int) -> Weight:
        return Weight(1, LinearTerm.constant(value), ())

    def affine(self) -> AffineForm:
        coeffs = {n: Fraction(c, self.r) for n, c in self.b}
        for n, c in self.c.coeffs:
            coeffs[n] = coeffs.get(n, Fraction(0)) + Fraction(c, self.r)
        return AffineForm.make(coeffs, Fraction(self.c.const, self.r))

    def shift(self, delta: LinearTerm, scale_r: int = 1) -> Weight:
        """Weight for nu + delta/scale_r over the same lambda variables."""
        r = self.r * scale_r
        c = self.c.scale(scale_r) + delta.scale(self.r)
        b = {n: v * scale_r for n, v in self.b}
        return Weight.make(r, c, b)


@dataclass(frozen=True)
class Coordinate:
    """Non-degenerate coordinate: center + { y : ac_level(y) = ac, v(y) free }."""

    center: Fraction
    level: int
    ac: int

    def validate(self, ctx: PAdicContext) -> None:
        if self.level < 1:
            raise InputError("coordinate level must be >= 1")
        mod = ctx.p**self.level
        if not (0 <= self.ac < mod) or self.ac % ctx.p == 0:
            raise InputError(f"ac value {self.ac} is not a unit modulo {mod}")


@dataclass(frozen=True)
class DegenerateCoordinate:
    """Coordinate pinned to a single point x_i = point (dimension drop)."""

    point: Fraction


@dataclass(frozen=True)
class BoxCell:
    """Product-like cell: per-coordinate angular conditions plus a joint
    Presburger condition on the valuation tuple.

    lambda_vars names the valuation variables of the non-degenerate
    coordinates, in coordinate order; lambda_formula may also mention
    parameters.  The optional weight adds p^nu to the natural cell volume.
    """

    coords: tuple[Union[Coordinate, DegenerateCoordinate], ...]
    lambda_vars: tuple[str, ...]
    lambda_formula: Formula
    weight: Weight | None = None

    def validate(self, ctx: PAdicContext) -> None:
        live = [c for c in self.coords if isinstance(c, Coordinate)]
        if len(live) != len(self.lambda_vars):
            raise InputError("lambda_vars must match the non-degenerate coordinates")
        for c in live:
            c.validate(ctx)
        if self.weight is not None:
            extra = {n for n, _ in self.weight.b} - set(self.lambda_vars)
            if extra:
                raise InputError(f"weight references unknown variables {sorted(extra)}")

    def param_variables(self) -> tuple[str, ...]:
        out = set(free_variables(self.lambda_formula)) - set(self.lambda_vars)
        if self.weight is not None:
            out |= set(self.weight.c.variables())
        return tuple(sorted(out))


class MeasureZero:
    """Returned for cells that are negligible (some coordinate is a point)."""

    def __repr__(self) -> str:
        return "MeasureZero"


MEASURE_ZERO = MeasureZero()


def cell_to_weighted_sum(cell: BoxCell, ctx: PAdicContext):
    """Rewrite the cell measure as sum over Lambda of p^w.

    Returns (lambda_formula, w) with w folding the per-coordinate volumes
    p^(-lambda_i - level_i) into the cell's optional weight, or MEASURE_ZERO
    when a coordinate is degenerate.  Raises InputError when the resulting
    weight is not integer-valued on the solution set.
    """
    cell.validate(ctx)
    if any(isinstance(c, DegenerateCoordinate) for c in cell.coords):
        return MEASURE_ZERO
    base = cell.weight if cell.weight is not None else Weight.constant(0)
    level_sum = sum(c.level for c in cell.coords if isinstance(c, Coordinate))
    r = base.r
    b = {n: v for n, v in base.b}
    for name in cell.lambda_vars:
        b[name] = b.get(name, 0) - r
    w = Weight.make(r, base.c - r * level_sum, b)
    _validate_weight_integrality(
        cell.lambda_formula, w, TRUE, cell.lambda_vars, cell.param_variables()
    )
    return cell.lambda_formula, w


def _lambda_vars_of(lam: Formula, weight: Weight, param_vars: Sequence[str]) -> tuple[str, ...]:
    names = set(free_variables(lam)) - set(param_vars)
    names |= {n for n, _ in weight.b}
    return tuple(sorted(names))


def _validate_weight_integrality(
    lam: Formula,
    weight: Weight,
    param_domain: Formula,
    lambda_vars: Sequence[str],
    param_vars: Sequence[str],
) -> None:
    wform = weight.affine()
    for cellpart in to_cells(lam, lambda_vars, param_vars):
        for tower in triangulate(cellpart):
            guard = simplify(conj([tower.guard_formula(), param_domain]))
            if not is_satisfiable(guard):
                continue
            _check_tower_weight(tower, wform, guard)


def _require_integral_on(form: AffineForm, guard: Formula, what: str) -> None:
    den = form.denominator_lcm()
    if den == 1:
        return
    scaled = {}
    for n, c in form.coeffs:
        scaled[n] = (c * den).numerator
    const = (form.const * den).numerator
    atom = divides(den, LinearTerm.make(scaled, const))
    if is_satisfiable(conj([guard, neg(AtomF(atom))])):
        raise InputError(f"{what} is not an integer on its guard")


# ---------------------------------------------------------------------------
# exponential polynomials


@dataclass(frozen=True)
class ExpTerm:
    """On guard: poly(s) * p^(exponent(s)); the exponent is integer-valued on
    the guard (its coefficients may be rational)."""

    guard: Formula
    poly: Polynomial
    exponent: AffineForm


@dataclass(frozen=True)
class ExpPolynomial:
    """Canonical guarded sum of exponential-polynomial terms.

    Guards of distinct terms are pairwise disjoint regions; within a region
    terms are merged by exponent class and sorted; value at a point is the sum
    over the terms whose guard holds (zero when the term list is empty).
    """

    p: int
    param_vars: tuple[str, ...]
    terms: tuple[ExpTerm, ...]


def _exponent_key(exponent: AffineForm):
    fractional = exponent.const - int(exponent.const // 1)
    return (exponent.coeffs, fractional)


def make_exp_polynomial(
    p: int,
    param_vars: Sequence[str],
    raw_terms: Iterable[tuple[Formula, Polynomial, AffineForm]],
) -> ExpPolynomial:
    """Canonicalize raw (guard, poly, exponent) triples.

    Guards are refined into disjoint regions; within a region, terms whose
    exponents differ by an integer constant are merged (the integer power of p
    moves into the polynomial), zero polynomials are dropped, and terms are
    sorted by exponent.
    """
    regions: list[tuple[Formula, list[tuple[Polynomial, AffineForm]]]] = []
    for guard, poly, exponent in raw_terms:
        if poly.is_zero():
            continue
        guard = simplify(guard)
        if not is_satisfiable(guard):
            continue
        leftover = guard
        new_regions: list[tuple[Formula, list[tuple[Polynomial, AffineForm]]]] = []
        for region, acc in regions:
            inter = simplify(conj([region, guard]))
            if not is_satisfiable(inter):
                new_regions.append((region, acc))
                continue
            outer = simplify(conj([region, neg(guard)]))
            if is_satisfiable(outer):
                new_regions.append((outer, list(acc)))
            new_regions.append((inter, acc + [(poly, exponent)]))
            leftover = simplify(conj([leftover, neg(region)]))
        if is_satisfiable(leftover):
            new_regions.append((leftover, [(poly, exponent)]))
        regions = new_regions

    out: list[ExpTerm] = []
    for region, acc in regions:
        merged: dict = {}
        for poly, exponent in acc:
            key = _exponent_key(exponent)
            if key in merged:
                rep_exp, rep_poly = merged[key]
                shift = exponent.const - rep_exp.const
                assert shift.denominator == 1
                merged[key] = (rep_exp, rep_poly + poly.scale(power_fraction(p, shift)))
            else:
                merged[key] = (exponent, poly)
        for key in sorted(merged, key=_key_sort):
            exponent, poly = merged[key]
            if poly.is_zero():
                continue
            # canonical representative: fractional constant in [0, 1)
            shift = exponent.const - (exponent.const - int(exponent.const // 1))
            if shift != 0:
                poly = poly.scale(power_fraction(p, shift))
                exponent = AffineForm(exponent.coeffs, exponent.const - shift)
            out.append(ExpTerm(region, poly, exponent))
    ordered = sorted(
        range(len(out)),
        key=lambda i: (str(out[i].guard), _key_sort(_exponent_key(out[i].exponent))),
    )
    return ExpPolynomial(p, tuple(param_vars), tuple(out[i] for i in ordered))


def _key_sort(key):
    return key  # (coeff tuple, fractional constant) is totally ordered as-is


def exp_poly_eval(e: ExpPolynomial, point: Mapping[str, int], ctx: PAdicContext | None = None) -> Fraction:
    """Exact value at an integer parameter point; OutOfDomainError when the
    point lies in no guard."""
    p = ctx.p if ctx is not None else e.p
    hit = False
    total = Fraction(0)
    for term in e.terms:
        if evaluate_qf(term.guard, point):
            hit = True
            exponent = term.exponent.evaluate(point)
            if exponent.denominator != 1:
                raise InputError(f"non-integer exponent {exponent} at {dict(point)}")
            total += term.poly.evaluate(point) * power_fraction(p, exponent)
    if not hit:
        raise OutOfDomainError(f"{dict(point)} lies in no guard")
    return total


def exp_poly_add(a: ExpPolynomial, b: ExpPolynomial) -> ExpPolynomial:
    assert a.p == b.p
    param_vars = tuple(sorted(set(a.param_vars) | set(b.param_vars)))
    raw = [(t.guard, t.poly, t.exponent) for t in a.terms + b.terms]
    return make_exp_polynomial(a.p, param_vars, raw)


def exp_poly_scale(a: ExpPolynomial, k: Fraction) -> ExpPolynomial:
    raw = [(t.guard, t.poly.scale(k), t.exponent) for t in a.terms]
    return make_exp_polynomial(a.p, a.param_vars, raw)


@dataclass(frozen=True)
class NonZeroWitness:
    point: tuple[tuple[str, int], ...]
    value: Fraction

    def as_dict(self) -> dict[str, int]:
        return dict(self.point)


def exp_poly_is_zero(
    e: ExpPolynomial, param_domain: Formula, ctx: PAdicContext | None = None
) -> NonZeroWitness | None:
    """None when e vanishes at every integer point of param_domain; otherwise
    a concrete witness point with its nonzero exact value."""
    p = ctx.p if ctx is not None else e.p
    by_region: dict[Formula, list[ExpTerm]] = {}
    for term in e.terms:
        by_region.setdefault(term.guard, []).append(term)
    for region, terms in by_region.items():
        domain = simplify(conj([region, param_domain]))
        if not is_satisfiable(domain):
            continue
        svars = tuple(sorted(set(e.param_vars) | set(free_variables(domain))))
        if not svars:
            total = sum(
                (t.poly.evaluate({}) * power_fraction(p, t.exponent.evaluate({}))
                 for t in terms),
                Fraction(0),
            )
            if total != 0:
                return NonZeroWitness((), total)
            continue
        pieces = rectilinearize(to_cells(domain, svars, []))
        for piece in pieces:
            witness = _piece_witness(piece, terms, svars, p)
            if witness is not None:
                return witness
    return None


def _piece_witness(piece, terms, svars, p: int) -> NonZeroWitness | None:
    m = piece.rank
    mu_vars = [f"@z{j}" for j in range(m)]
    substitutions = {}
    for i, var in enumerate(piece.variables):
        form = piece.base[i]
        for j in range(m):
            if piece.generators[i][j]:
                form = form + AffineForm.variable(mu_vars[j]).scale(piece.generators[i][j])
        substitutions[var] = form

    grouped: dict = {}
    max_degree = 0
    for t in terms:
        exponent = t.exponent
        poly = t.poly
        for var, form in substitutions.items():
            exponent = exponent.substitute(var, form)
            poly = poly.substitute_affine(var, form)
        coeffs = dict(exponent.coeffs)
        const = exponent.const
        for k, v in coeffs.items():
            if v.denominator != 1:
                raise AssertionError("exponent not integral on rectilinear piece")
        assert const.denominator == 1
        key = tuple(sorted((k, v) for k, v in coeffs.items()))
        scaled = poly.scale(power_fraction(p, const))
        grouped[key] = grouped.get(key, Polynomial(())) + scaled
        max_degree = max(max_degree, poly.degree())

    nonzero = {k: v for k, v in grouped.items() if not v.is_zero()}
    if not nonzero:
        return None

    # concrete witness: scan N^m by increasing coordinate sum, then race the
    # dominant exponent direction; termination is guaranteed because some
    # grouped coefficient polynomial is nonzero.
    def value_at(mu: tuple[int, ...]) -> Fraction:
        env = {mu_vars[j]: mu[j] for j in range(m)}
        total = Fraction(0)
        for key, poly in grouped.items():
            exponent = sum((c * env[n] for n, c in key), Fraction(0))
            total += poly.evaluate(env) * power_fraction(p, exponent)
        return total

    def witness_from(mu: tuple[int, ...], val: Fraction) -> NonZeroWitness:
        env = {mu_vars[j]: mu[j] for j in range(m)}
        point = tuple(
            (var, int(substitutions[var].evaluate(env))) for var in sorted(piece.variables)
        )
        return NonZeroWitness(point, val)

    if m == 0:
        val = value_at(())
        return witness_from((), val) if val != 0 else None

    cap = 10 * (max_degree + 1) * max(1, len(terms))
    for total in range(0, cap + 1):
        for mu in _compositions(total, m):
            val = value_at(mu)
            if val != 0:
                return witness_from(mu, val)
    stride = max(1, cap)
    for _ in range(64):
        base = tuple(stride for _ in range(m))
        for offset in itertools.product(range(max_degree + 2), repeat=m):
            mu = tuple(base[j] + offset[j] for j in range(m))
            val = value_at(mu)
            if val != 0:
                return witness_from(mu, val)
        stride *= 2
    raise AssertionError("nonzero exponential polynomial without reachable witness")


def _compositions(total: int, parts: int):
    if parts == 1:
        yield (total,)
        return
    for head in range(total + 1):
        for rest in _compositions(total - head, parts - 1):
            yield (head,) + rest


# ---------------------------------------------------------------------------
# closed-form summation


def sum_closed_form(
    lam: Formula,
    weight: Weight,
    param_domain: Formula,
    ctx: PAdicContext,
    param_vars: Sequence[str] | None = None,
) -> ExpPolynomial:
    """Closed form of  s -> sum over the fiber of Lambda at s of p^weight.

    Raises DivergesError when a direction with nonnegative exponent increment
    is unbounded, and InputError when the weight is not integer-valued.
    """
    if param_vars is None:
        param_vars = tuple(
            sorted(
                (set(free_variables(param_domain)) | set(weight.c.variables()))
                - {n for n, _ in weight.b}
            )
        )
    lambda_vars = _lambda_vars_of(lam, weight, param_vars)
    wform = weight.affine()
    raw_terms: list[tuple[Formula, Polynomial, AffineForm]] = []
    for cell in to_cells(lam, lambda_vars, param_vars):
        for tower in triangulate(cell):
            guard = simplify(conj([tower.guard_formula(), param_domain]))
            if not is_satisfiable(guard):
                continue
            _check_tower_weight(tower, wform, guard)
            try:
                terms = sum_over_tower(tower, wform, ctx.p)
            except UnboundedDirectionError as err:
                raise DivergesError(err.variable, err.direction) from err
            except ValueError as err:
                raise InputError(str(err)) from err
            for t in terms:
                _require_integral_on(t.exponent, guard, f"exponent {t.exponent}")
                raw_terms.append((guard, t.poly, t.exponent))
    return make_exp_polynomial(ctx.p, param_vars, raw_terms)


def _check_tower_weight(tower: Tower, wform: AffineForm, guard: Formula) -> None:
    forms: dict[str, AffineForm] = {}
    exp = wform
    for level in tower.levels:
        start = level.start
        for v, f in forms.items():
            start = start.substitute(v, f)
        if level.kind != "point":
            gamma = exp.coeff(level.var) * level.step
            if gamma.denominator != 1:
                raise InputError(
                    f"weight is not integer-valued: increment {gamma} along {level.var}"
                )
        forms[level.var] = start
        exp = exp.substitute(level.var, start)
    _require_integral_on(exp, guard, f"weight value {exp}")


# ---------------------------------------------------------------------------
# measure functions


@dataclass(frozen=True)
class MeasureFunction:
    """An exponential polynomial together with its parameter domain."""

    exp_poly: ExpPolynomial
    param_domain: Formula
    param_vars: tuple[str, ...]
    ctx: PAdicContext

    def evaluate(self, point: Mapping[str, int]) -> Fraction:
        if not evaluate_qf(self.param_domain, point):
            raise OutOfDomainError(f"{dict(point)} violates the parameter domain")
        try:
            return exp_poly_eval(self.exp_poly, point, self.ctx)
        except OutOfDomainError:
            return Fraction(0)

    def is_zero(self) -> NonZeroWitness | None:
        return exp_poly_is_zero(self.exp_poly, self.param_domain, self.ctx)
