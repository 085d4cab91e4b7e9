"""Semilinear machinery over the value group.

Quantifier-free Presburger formulas are decomposed into disjoint guarded
cells, cells are triangulated into "towers" (one resolved coordinate per
level: a point, an upward/downward arithmetic ray, or a bounded arithmetic
range), and towers drive everything downstream: exact parametric counting,
rectilinearization into affine images of N^m, fiber enumeration, and the
closed-form summation engine used by the measure layer.

All splits are exact partitions; every guard ever produced is a conjunction
of integer atoms, and every branch is pruned by a quantifier-elimination
satisfiability check so outputs stay canonical.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Mapping, Sequence

from .algebra import (
    AffineForm,
    Polynomial,
    bounded_power_sums,
    faulhaber,
    frac,
    geometric_tail_sums,
)
from .presburger import (
    DIV,
    EQ0,
    GEQ0,
    Atom,
    AtomF,
    FalseF,
    Formula,
    LinearTerm,
    NotQuantifierFreeError,
    TrueF,
    conj,
    disj,
    divides,
    evaluate_qf,
    free_variables,
    geq0,
    is_quantifier_free,
    is_satisfiable,
    neg,
    nnf,
    simplify,
)

_IOTA = "@i"  # internal summation index; cannot clash with parsed names


class CappedError(Exception):
    def __init__(self, cap: int):
        super().__init__(f"fiber enumeration exceeded cap {cap}")
        self.cap = cap


class InfiniteFiberError(Exception):
    def __init__(self, variable: str, direction: int):
        arrow = "+inf" if direction > 0 else "-inf"
        super().__init__(f"fiber is infinite along {variable} towards {arrow}")
        self.variable = variable
        self.direction = direction


class NotRectilinearizableError(Exception):
    pass


class UnboundedDirectionError(Exception):
    """A summation direction whose geometric ratio is >= 1."""

    def __init__(self, variable: str, direction: int):
        arrow = "+inf" if direction > 0 else "-inf"
        super().__init__(f"sum diverges along {variable} towards {arrow}")
        self.variable = variable
        self.direction = direction


class OutOfDomainError(Exception):
    pass


# ---------------------------------------------------------------------------
# guarded cells


@dataclass(frozen=True)
class GuardedCell:
    """Conjunctive constraints over ordered lambda variables and parameters."""

    variables: tuple[str, ...]
    constraints: tuple[Atom, ...]
    param_guard: Formula

    def formula(self) -> Formula:
        return conj([AtomF(a) for a in self.constraints] + [self.param_guard])

    def contains(self, lam: Mapping[str, int], params: Mapping[str, int]) -> bool:
        env = {**params, **lam}
        return all(a.evaluate(env) for a in self.constraints) and evaluate_qf(
            self.param_guard, params
        )


_SAT_CACHE: dict = {}


def _atoms_satisfiable(atoms: Sequence[Atom], extra: Formula = TrueF()) -> bool:
    key = (tuple(atoms), extra)
    if key not in _SAT_CACHE:
        _SAT_CACHE[key] = is_satisfiable(conj([AtomF(a) for a in atoms] + [extra]))
    return _SAT_CACHE[key]


def _positivize(f: Formula) -> Formula:
    """NNF with all negations expanded into positive atoms (disjoint expansions)."""
    f = nnf(f)

    def rec(g: Formula) -> Formula:
        if isinstance(g, AtomF) or isinstance(g, (TrueF, FalseF)):
            return g
        from .presburger import AndF, NotF, OrF

        if isinstance(g, NotF):
            atom = g.arg.atom  # nnf guarantees the argument is an atom
            if atom.kind == EQ0:
                return disj([AtomF(geq0(atom.term - 1)), AtomF(geq0(atom.term.scale(-1) - 1))])
            if atom.kind == DIV:
                return disj(
                    [AtomF(divides(atom.modulus, atom.term - r)) for r in range(1, atom.modulus)]
                )
            raise AssertionError("nnf left a negated inequality")
        if isinstance(g, AndF):
            return conj(rec(a) for a in g.args)
        if isinstance(g, OrF):
            return disj(rec(a) for a in g.args)
        raise NotQuantifierFreeError("cell decomposition needs a quantifier-free formula")

    return rec(f)


def _dnf(f: Formula) -> list[list[Atom]]:
    if isinstance(f, TrueF):
        return [[]]
    if isinstance(f, FalseF):
        return []
    if isinstance(f, AtomF):
        return [[f.atom]]
    from .presburger import AndF, OrF

    if isinstance(f, OrF):
        out = []
        for a in f.args:
            out.extend(_dnf(a))
        return out
    if isinstance(f, AndF):
        out = [[]]
        for a in f.args:
            branch = _dnf(a)
            out = [left + right for left in out for right in branch]
        return out
    raise AssertionError("positivized formula expected")


def _complement_pieces(atom: Atom) -> list[list[Atom]]:
    """Disjoint conjunctions covering the complement of one atom."""
    if atom.kind == GEQ0:
        return [[geq0(atom.term.scale(-1) - 1)]]
    if atom.kind == EQ0:
        return [[geq0(atom.term - 1)], [geq0(atom.term.scale(-1) - 1)]]
    return [[divides(atom.modulus, atom.term - r)] for r in range(1, atom.modulus)]


def _subtract(disjunct: list[Atom], earlier: list[Atom]) -> list[list[Atom]]:
    """Split disjunct minus conj(earlier) into disjoint conjunctive pieces."""
    out = []
    prefix: list[Atom] = []
    for atom in earlier:
        for comp in _complement_pieces(atom):
            cand = disjunct + prefix + comp
            if _atoms_satisfiable(cand):
                out.append(cand)
        prefix.append(atom)
    return out


def to_cells(
    f: Formula, lambda_vars: Sequence[str], param_vars: Sequence[str]
) -> list[GuardedCell]:
    """Decompose a quantifier-free formula into disjoint guarded cells."""
    if not is_quantifier_free(f):
        raise NotQuantifierFreeError("to_cells needs a quantifier-free formula")
    allowed = set(lambda_vars) | set(param_vars)
    extra = free_variables(f) - allowed
    if extra:
        raise ValueError(f"free variables outside declared ones: {sorted(extra)}")

    disjuncts = [d for d in _dnf(_positivize(simplify(f))) if _atoms_satisfiable(d)]
    disjoint: list[list[Atom]] = []
    for i, d in enumerate(disjuncts):
        pieces = [d]
        for earlier in disjuncts[:i]:
            pieces = [q for piece in pieces for q in _subtract(piece, earlier)]
        disjoint.extend(pieces)

    lam = set(lambda_vars)
    cells = []
    for atoms in disjoint:
        cell_atoms, guard_atoms = [], []
        for a in atoms:
            (cell_atoms if set(a.term.variables()) & lam else guard_atoms).append(a)
        folded = simplify(conj([AtomF(a) for a in cell_atoms]))
        guard = simplify(conj([AtomF(a) for a in guard_atoms]))
        cells.append(GuardedCell(tuple(lambda_vars), _formula_to_atoms(folded), guard))
    return cells


# ---------------------------------------------------------------------------
# towers


@dataclass(frozen=True)
class Level:
    """One resolved coordinate: value x = start (+ step * i [, i < count])."""

    var: str
    kind: str  # "point" | "ray" | "range"
    start: AffineForm  # over earlier variables and parameters; exact on guards
    step: int = 0  # point: 0; ray: any nonzero; range: >= 1
    count: AffineForm | None = None  # range only; >= 1 on the guard


@dataclass(frozen=True)
class Tower:
    variables: tuple[str, ...]
    levels: tuple[Level, ...]
    guard: tuple[Atom, ...]  # conjunction over parameters only

    def guard_formula(self) -> Formula:
        return simplify(conj([AtomF(a) for a in self.guard]))


def _affine_of_term(t: LinearTerm) -> AffineForm:
    return AffineForm.make({n: Fraction(c) for n, c in t.coeffs}, Fraction(t.const))


def term_of_affine(a: AffineForm, scale: int = 1) -> LinearTerm:
    """scale*a as an integer LinearTerm; scale must clear all denominators."""
    coeffs = {}
    for n, c in a.coeffs:
        v = c * scale
        if v.denominator != 1:
            raise ValueError("affine form does not clear to an integer term")
        coeffs[n] = v.numerator
    const = a.const * scale
    if const.denominator != 1:
        raise ValueError("affine form does not clear to an integer term")
    return LinearTerm.make(coeffs, const.numerator)


def _gcd(a: int, b: int) -> int:
    while b:
        a, b = b, a % b
    return abs(a)


def _crt(r1: int, m1: int, r2: int, m2: int) -> tuple[int, int] | None:
    """Combine x = r1 (mod m1), x = r2 (mod m2); None when incompatible."""
    g = _gcd(m1, m2)
    if (r2 - r1) % g != 0:
        return None
    lcm = m1 * m2 // g
    # solve r1 + m1*t = r2 (mod m2)
    t = ((r2 - r1) // g * pow(m1 // g, -1, m2 // g)) % (m2 // g)
    return ((r1 + m1 * t) % lcm, lcm)


def _substitute_value(atom: Atom, var: str, num: LinearTerm, den: int) -> Atom:
    """Substitute var := num/den (den >= 1) and clear denominators exactly."""
    c = atom.term.coeff(var)
    rest = atom.term.drop(var)
    if c == 0:
        return atom
    term = rest.scale(den) + num.scale(c)
    if atom.kind == DIV:
        return divides(atom.modulus * den, term)
    return Atom(atom.kind, term)


@dataclass
class _Branch:
    atoms: list[Atom]
    level: Level


def _split_variable(atoms: list[Atom], var: str) -> list[_Branch]:
    """Resolve one variable into levels, emitting guard atoms over the rest."""
    with_var = [a for a in atoms if a.term.coeff(var) != 0]
    rest = [a for a in atoms if a.term.coeff(var) == 0]

    # equalities pin the variable to a point
    for a in with_var:
        if a.kind == EQ0:
            c = a.term.coeff(var)
            t = a.term.drop(var)
            num = t.scale(-1) if c > 0 else t
            den = abs(c)
            others = [x for x in with_var if x is not a]
            new_atoms = list(rest)
            if den > 1:
                new_atoms.append(divides(den, num))
            new_atoms.extend(_substitute_value(x, var, num, den) for x in others)
            value = _affine_of_term(num).scale(Fraction(1, den))
            return [_Branch(new_atoms, Level(var, "point", value))]

    # bounds as (numerator term, positive denominator)
    lowers: list[tuple[LinearTerm, int]] = []
    uppers: list[tuple[LinearTerm, int]] = []
    congruences: list[tuple[int, int, LinearTerm]] = []  # (modulus, coeff, rest)
    for a in with_var:
        c = a.term.coeff(var)
        t = a.term.drop(var)
        if a.kind == GEQ0:
            if c > 0:
                lowers.append((t.scale(-1), c))  # var >= -t/c
            else:
                uppers.append((t, -c))  # var <= t/(-c)
        else:
            congruences.append((a.modulus, c, t))

    branches: list[tuple[list[Atom], list[AffineForm], list[AffineForm], int, int]] = [
        (list(rest), [], [], 0, 1)  # atoms, lower forms, upper forms, residue, modulus
    ]

    # make bounds affine by splitting numerators modulo denominators
    for num, den in lowers:
        new = []
        for atoms2, lows, ups, r0, m0 in branches:
            if den == 1:
                new.append((atoms2, lows + [_affine_of_term(num)], ups, r0, m0))
                continue
            for r in range(den):
                ceil_form = _affine_of_term(num - r).scale(Fraction(1, den))
                if r != 0:
                    ceil_form = ceil_form + 1
                new.append(
                    (atoms2 + [divides(den, num - r)], lows + [ceil_form], ups, r0, m0)
                )
        branches = new
    for num, den in uppers:
        new = []
        for atoms2, lows, ups, r0, m0 in branches:
            if den == 1:
                new.append((atoms2, lows, ups + [_affine_of_term(num)], r0, m0))
                continue
            for r in range(den):
                floor_form = _affine_of_term(num - r).scale(Fraction(1, den))
                new.append(
                    (atoms2 + [divides(den, num - r)], lows, ups + [floor_form], r0, m0)
                )
        branches = new

    # resolve congruences to a concrete residue class of var
    for modulus, c, t in congruences:
        g = _gcd(c, modulus)
        m_red = modulus // g
        new = []
        for atoms2, lows, ups, r0, m0 in branches:
            for rho in range(modulus):
                # branch on t = rho (mod modulus); need c*var = -rho (mod modulus)
                if rho % g != 0:
                    continue  # no solution for var on this residue of t
                inv = pow((c // g) % m_red, -1, m_red) if m_red > 1 else 0
                r_var = ((-rho // g) * inv) % m_red if m_red > 1 else 0
                combined = _crt(r0, m0, r_var, m_red)
                if combined is None:
                    continue
                guard_atom = [divides(modulus, t - rho)] if modulus > 1 else []
                new.append((atoms2 + guard_atom, lows, ups, combined[0], combined[1]))
        branches = new

    out: list[_Branch] = []
    for atoms2, lows, ups, r_star, m_star in branches:
        # max-split the lower bounds, min-split the upper bounds
        for low_pick in _extremum_split(lows, want_max=True):
            for up_pick in _extremum_split(ups, want_max=False):
                low_atoms, low = low_pick
                up_atoms, up = up_pick
                base_atoms = atoms2 + low_atoms + up_atoms
                out.extend(
                    _aligned_levels(base_atoms, var, low, up, r_star, m_star)
                )
    return out


def _extremum_split(
    forms: list[AffineForm], want_max: bool
) -> list[tuple[list[Atom], AffineForm | None]]:
    """Disjoint branches selecting the max (or min) of affine forms."""
    if not forms:
        return [([], None)]
    if len(forms) == 1:
        return [([], forms[0])]
    out = []
    for i, cand in enumerate(forms):
        atoms: list[Atom] = []
        for j, other in enumerate(forms):
            if i == j:
                continue
            diff = cand - other if want_max else other - cand
            scale = 1
            for _, c in diff.coeffs:
                scale = scale * c.denominator // _gcd(scale, c.denominator)
            scale = scale * diff.const.denominator // _gcd(scale, diff.const.denominator)
            term = term_of_affine(diff, scale)
            # strict for j < i, non-strict for j > i: a disjoint argmax choice
            atoms.append(geq0(term - 1) if j < i else geq0(term))
        out.append((atoms, cand))
    return out


def _alignment_split(form: AffineForm, modulus: int) -> list[tuple[list[Atom], int]]:
    """Branches fixing the residue of an integer-valued affine form."""
    if modulus == 1:
        return [([], 0)]
    den = form.denominator_lcm()
    term = term_of_affine(form, den)
    out = []
    for sigma in range(modulus):
        out.append(([divides(den * modulus, term - den * sigma)] if den * modulus > 1 else [],
                    sigma))
    return out


def _aligned_levels(
    base_atoms: list[Atom],
    var: str,
    low: AffineForm | None,
    up: AffineForm | None,
    r_star: int,
    m_star: int,
) -> list[_Branch]:
    """Produce level branches once bounds are affine and the residue is fixed."""
    out: list[_Branch] = []
    if low is not None and up is not None:
        for atoms_l, sig_l in _alignment_split(low, m_star):
            start = low + ((r_star - sig_l) % m_star)
            for atoms_u, sig_u in _alignment_split(up, m_star):
                end = up - ((sig_u - r_star) % m_star)
                count = (end - start).scale(Fraction(1, m_star)) + 1
                den = count.denominator_lcm()
                nonempty = geq0(term_of_affine(count - 1, den))
                atoms3 = base_atoms + atoms_l + atoms_u + [nonempty]
                out.append(
                    _Branch(atoms3, Level(var, "range", start, m_star, count))
                )
    elif low is not None:
        for atoms_l, sig_l in _alignment_split(low, m_star):
            start = low + ((r_star - sig_l) % m_star)
            out.append(_Branch(base_atoms + atoms_l, Level(var, "ray", start, m_star)))
    elif up is not None:
        for atoms_u, sig_u in _alignment_split(up, m_star):
            start = up - ((sig_u - r_star) % m_star)
            out.append(_Branch(base_atoms + atoms_u, Level(var, "ray", start, -m_star)))
    else:
        up_start = AffineForm.constant(r_star)
        down_start = AffineForm.constant(r_star - m_star)
        out.append(_Branch(list(base_atoms), Level(var, "ray", up_start, m_star)))
        out.append(_Branch(list(base_atoms), Level(var, "ray", down_start, -m_star)))
    return out


_TOWER_CACHE: dict = {}


def triangulate(cell: GuardedCell, order: Sequence[str] | None = None) -> list[Tower]:
    """Split one cell into disjoint towers, resolving variables last-to-first."""
    variables = tuple(order) if order is not None else cell.variables
    if set(variables) != set(cell.variables):
        raise ValueError("order must permute the cell variables")
    cache_key = (cell, variables)
    cached = _TOWER_CACHE.get(cache_key)
    if cached is not None:
        return cached

    def rec(atoms: list[Atom], vars_left: tuple[str, ...]) -> list[tuple[list[Atom], list[Level]]]:
        if not vars_left:
            return [(atoms, [])]
        var = vars_left[-1]
        results = []
        for branch in _split_variable(atoms, var):
            if not _atoms_satisfiable(branch.atoms, cell.param_guard):
                continue
            for param_atoms, levels in rec(branch.atoms, vars_left[:-1]):
                results.append((param_atoms, levels + [branch.level]))
        return results

    towers = []
    for param_atoms, levels in rec(list(cell.constraints), variables):
        guard_atoms = []
        seen = set()
        for a in param_atoms:
            cleaned = _simplify_guard_atom(a)
            if cleaned is None or cleaned in seen:
                continue
            seen.add(cleaned)
            guard_atoms.append(cleaned)
        guard_extra = cell.param_guard
        if not isinstance(guard_extra, TrueF):
            for a in _formula_to_atoms(guard_extra):
                if a not in seen:
                    seen.add(a)
                    guard_atoms.append(a)
        towers.append(Tower(variables, tuple(levels), tuple(guard_atoms)))
    _TOWER_CACHE[cache_key] = towers
    return towers


def _simplify_guard_atom(atom: Atom) -> Atom | None:
    """Canonicalize one guard atom; None when trivially true."""
    from .presburger import _simplify_atom

    result = _simplify_atom(atom)
    if isinstance(result, TrueF):
        return None
    if isinstance(result, FalseF):
        raise AssertionError("unsatisfiable guard atom survived pruning")
    return result.atom


def _formula_to_atoms(f: Formula) -> tuple[Atom, ...]:
    """Flatten a conjunctive formula into atoms (guards are always conjunctive)."""
    from .presburger import AndF

    if isinstance(f, TrueF):
        return ()
    if isinstance(f, AtomF):
        return (f.atom,)
    if isinstance(f, AndF):
        out: list[Atom] = []
        for a in f.args:
            out.extend(_formula_to_atoms(a))
        return tuple(out)
    raise ValueError("expected a conjunction of atoms")


def tower_member(tower: Tower, lam: Mapping[str, int], params: Mapping[str, int]) -> bool:
    env: dict[str, Fraction] = {k: frac(v) for k, v in params.items()}
    for a in tower.guard:
        if not a.evaluate(params):
            return False
    for level in tower.levels:
        value = frac(lam[level.var])
        start = level.start.evaluate(env)
        if level.kind == "point":
            if value != start:
                return False
        else:
            idx = (value - start) / level.step
            if idx.denominator != 1 or idx < 0:
                return False
            if level.kind == "range" and idx >= level.count.evaluate(env):
                return False
        env[level.var] = value
    return True


# ---------------------------------------------------------------------------
# closed-form summation over towers


@dataclass(frozen=True)
class SumTerm:
    """poly * p^exponent, both over parameters (plus not-yet-summed variables)."""

    poly: Polynomial
    exponent: AffineForm


def sum_over_tower(
    tower: Tower, weight: AffineForm, p: int | None
) -> list[SumTerm]:
    """Sum p^weight over the tower fiber, symbolically in the parameters.

    With p = None the weight must be identically zero; the result is then the
    exact point count.  Raises UnboundedDirectionError when some ray diverges
    and ValueError when an exponent increment is not an integer.
    """
    terms = [SumTerm(Polynomial.constant(1), weight)]
    for level in reversed(tower.levels):
        new_terms: list[SumTerm] = []
        for term in terms:
            new_terms.extend(_sum_level(term, level, p))
        terms = _merge_terms(new_terms)
    return terms


def _sum_level(term: SumTerm, level: Level, p: int | None) -> list[SumTerm]:
    var = level.var
    if level.kind == "point":
        return [
            SumTerm(
                term.poly.substitute_affine(var, level.start),
                term.exponent.substitute(var, level.start),
            )
        ]

    sub = level.start + AffineForm.variable(_IOTA).scale(level.step)
    poly = term.poly.substitute_affine(var, sub)
    exponent = term.exponent.substitute(var, sub)
    gamma = exponent.coeff(_IOTA)
    exp_rest = AffineForm.make(
        {n: c for n, c in exponent.coeffs if n != _IOTA}, exponent.const
    )
    if gamma.denominator != 1:
        raise ValueError(
            f"exponent increment {gamma} along {var} is not an integer"
        )
    gamma_int = gamma.numerator

    by_degree: dict[int, Polynomial] = {}
    for mono, coeff in poly.terms:
        md = dict(mono)
        d = md.pop(_IOTA, 0)
        restm = tuple(sorted(md.items()))
        by_degree[d] = by_degree.get(d, Polynomial(())) + Polynomial(((restm, coeff),))
    max_deg = max(by_degree) if by_degree else 0

    if level.kind == "ray":
        if all(v.is_zero() for v in by_degree.values()):
            return []
        if p is None or gamma_int >= 0:
            raise UnboundedDirectionError(var, 1 if level.step > 0 else -1)
        q = Fraction(p) ** gamma_int
        tails = geometric_tail_sums(q, max_deg)
        total = Polynomial(())
        for d, coeff_poly in by_degree.items():
            total = total + coeff_poly.scale(tails[d])
        return [SumTerm(total, exp_rest)] if not total.is_zero() else []

    # bounded range, count points; K = count - 1
    count = level.count
    assert count is not None
    k_upper = (count - 1).to_polynomial()
    if p is None or gamma_int == 0:
        sums = faulhaber(max_deg, k_upper)
        total = Polynomial(())
        for d, coeff_poly in by_degree.items():
            total = total + coeff_poly * sums[d]
        return [SumTerm(total, exp_rest)] if not total.is_zero() else []

    q = Fraction(p) ** gamma_int
    closed = bounded_power_sums(q, max_deg)
    head = Polynomial(())
    tail = Polynomial(())
    for d, coeff_poly in by_degree.items():
        a_d, b_d = closed[d]
        head = head + coeff_poly.scale(a_d)
        b_poly = Polynomial(())
        for e, c in enumerate(b_d):
            if c != 0:
                b_poly = b_poly + k_upper.power(e).scale(c)
        tail = tail + coeff_poly * b_poly
    out = []
    if not head.is_zero():
        out.append(SumTerm(head, exp_rest))
    if not tail.is_zero():
        out.append(SumTerm(tail, exp_rest + count.scale(gamma_int)))
    return out


def _merge_terms(terms: Iterable[SumTerm]) -> list[SumTerm]:
    acc: dict[AffineForm, Polynomial] = {}
    order: list[AffineForm] = []
    for t in terms:
        if t.exponent not in acc:
            acc[t.exponent] = t.poly
            order.append(t.exponent)
        else:
            acc[t.exponent] = acc[t.exponent] + t.poly
    return [SumTerm(acc[e], e) for e in order if not acc[e].is_zero()]


# ---------------------------------------------------------------------------
# parametric counting


@dataclass(frozen=True)
class PiecewisePolynomial:
    """Disjoint guards covering the parameter domain, one polynomial each."""

    param_vars: tuple[str, ...]
    pieces: tuple[tuple[Formula, Polynomial], ...]

    def evaluate(self, point: Mapping[str, int]) -> Fraction:
        for guard, poly in self.pieces:
            if evaluate_qf(guard, point):
                return poly.evaluate(point)
        raise OutOfDomainError(f"{dict(point)} lies outside the declared domain")


def count_parametric(
    cells: Sequence[GuardedCell], param_domain: Formula, param_vars: Sequence[str] | None = None
) -> PiecewisePolynomial:
    """Exact fiber cardinalities as guarded polynomials over the parameters."""
    if param_vars is None:
        collected = set(free_variables(param_domain))
        for c in cells:
            collected |= set(free_variables(c.param_guard))
            lam = set(c.variables)
            for a in c.constraints:
                collected |= set(a.term.variables()) - lam
        param_vars = tuple(sorted(collected))
    entries: list[tuple[Formula, Polynomial]] = []
    for cell in cells:
        for tower in triangulate(cell):
            guard = tower.guard_formula()
            if not is_satisfiable(conj([guard, param_domain])):
                continue
            for level in tower.levels:
                if level.kind == "ray":
                    raise InfiniteFiberError(level.var, 1 if level.step > 0 else -1)
            terms = sum_over_tower(tower, AffineForm.constant(0), None)
            poly = Polynomial(())
            for t in terms:
                assert t.exponent == AffineForm.constant(0)
                poly = poly + t.poly
            entries.append((guard, poly))

    regions: list[tuple[Formula, Polynomial]] = [(simplify(param_domain), Polynomial(()))]
    for guard, poly in entries:
        new_regions: list[tuple[Formula, Polynomial]] = []
        for region, acc in regions:
            inside = simplify(conj([region, guard]))
            outside = simplify(conj([region, neg(guard)]))
            if is_satisfiable(inside):
                new_regions.append((inside, acc + poly))
            if is_satisfiable(outside):
                new_regions.append((outside, acc))
        regions = new_regions
    return PiecewisePolynomial(tuple(param_vars), tuple(regions))


# ---------------------------------------------------------------------------
# fiber enumeration


def enumerate_fiber(
    cells: Sequence[GuardedCell], point: Mapping[str, int], cap: int = 100000
) -> list[tuple[int, ...]]:
    """List the fiber exactly, in sorted order; raises CappedError beyond cap."""
    results: list[tuple[int, ...]] = []
    env_base = {k: int(v) for k, v in point.items()}
    for cell in cells:
        if not evaluate_qf(cell.param_guard, env_base):
            continue
        for tower in triangulate(cell):
            if not all(a.evaluate(env_base) for a in tower.guard):
                continue
            _walk_tower(tower, 0, dict(env_base), results, cap, cell.variables)
    results.sort()
    return results


def _walk_tower(tower, idx, env, results, cap, out_vars):
    if idx == len(tower.levels):
        results.append(tuple(int(env[v]) for v in out_vars))
        if len(results) > cap:
            raise CappedError(cap)
        return
    level = tower.levels[idx]
    start = level.start.evaluate(env)
    if start.denominator != 1:
        raise AssertionError("level start must be integral on its guard")
    start = int(start)
    if level.kind == "point":
        env[level.var] = start
        _walk_tower(tower, idx + 1, env, results, cap, out_vars)
    elif level.kind == "range":
        n = level.count.evaluate(env)
        assert n.denominator == 1
        for j in range(max(0, int(n))):
            env[level.var] = start + level.step * j
            _walk_tower(tower, idx + 1, env, results, cap, out_vars)
    else:
        j = 0
        while True:
            env[level.var] = start + level.step * j
            _walk_tower(tower, idx + 1, env, results, cap, out_vars)
            j += 1
            if j > cap:
                raise CappedError(cap)


# ---------------------------------------------------------------------------
# rectilinearization


@dataclass(frozen=True)
class RectilinearPiece:
    """Injective affine image of N^m: var_i = base_i(params) + sum_j M[i][j]*mu_j.

    Bases are rational affine forms in the parameters that take integer values
    on the piece's guard; generator columns are integer and independent.
    """

    variables: tuple[str, ...]
    base: tuple[AffineForm, ...]
    generators: tuple[tuple[int, ...], ...]  # one row per variable
    param_guard: Formula

    @property
    def rank(self) -> int:
        return len(self.generators[0]) if self.generators else 0

    def image_point(self, mu: Sequence[int], params: Mapping[str, int]) -> tuple[int, ...]:
        out = []
        for i in range(len(self.variables)):
            val = self.base[i].evaluate(params)
            for j, m in enumerate(self.generators[i]):
                val += m * mu[j]
            assert val.denominator == 1
            out.append(int(val))
        return tuple(out)

    def contains(self, lam: Mapping[str, int], params: Mapping[str, int]) -> bool:
        if not evaluate_qf(self.param_guard, params):
            return False
        mu = self._solve(lam, params)
        return mu is not None

    def _solve(self, lam: Mapping[str, int], params: Mapping[str, int]):
        """Invert the echelon system for mu in N^m, or None."""
        residual = [frac(lam[v]) - self.base[i].evaluate(params)
                    for i, v in enumerate(self.variables)]
        m = self.rank
        mu = [None] * m
        # columns are echelon by construction: column j has its pivot at the
        # first row where it is nonzero and later columns vanish above it
        rows = len(self.variables)
        solved: list[Fraction] = []
        for j in range(m):
            pivot_row = None
            for i in range(rows):
                if self.generators[i][j] != 0 and all(
                    self.generators[i][k] == 0 for k in range(j + 1, m)
                ):
                    pivot_row = i
                    break
            if pivot_row is None:
                return None
            val = residual[pivot_row]
            for k in range(j):
                val -= self.generators[pivot_row][k] * solved[k]
            val = val / self.generators[pivot_row][j]
            if val.denominator != 1 or val < 0:
                return None
            solved.append(val)
        for i in range(rows):
            acc = Fraction(0)
            for j in range(m):
                acc += self.generators[i][j] * solved[j]
            if acc != residual[i]:
                return None
        return [int(v) for v in solved]


def _pieces_from_tower(tower: Tower, out_order: Sequence[str]) -> list[RectilinearPiece]:
    guard = tower.guard_formula()
    branches: list[tuple[dict[str, AffineForm], list[str]]] = [({}, [])]
    for level in tower.levels:
        new_branches = []
        for forms, mus in branches:
            start = level.start
            for v, f in forms.items():
                start = start.substitute(v, f)
            if level.kind == "point":
                forms2 = dict(forms)
                forms2[level.var] = start
                new_branches.append((forms2, mus))
            elif level.kind == "ray":
                mu = f"@m{len(mus)}"
                forms2 = dict(forms)
                forms2[level.var] = start + AffineForm.variable(mu).scale(level.step)
                new_branches.append((forms2, mus + [mu]))
            else:
                count = level.count
                for v, f in forms.items():
                    count = count.substitute(v, f)
                if not count.is_constant():
                    raise NotRectilinearizableError(
                        f"parametric range width along {level.var}"
                    )
                n = count.const
                assert n.denominator == 1
                for j in range(int(n)):
                    forms2 = dict(forms)
                    forms2[level.var] = start + level.step * j
                    new_branches.append((forms2, mus))
        branches = new_branches

    pieces = []
    for forms, mus in branches:
        base = []
        rows = []
        for v in out_order:
            f = forms[v]
            base.append(AffineForm.make(
                {n: c for n, c in f.coeffs if not n.startswith("@m")}, f.const))
            row = []
            for mu in mus:
                c = f.coeff(mu)
                if c.denominator != 1:
                    raise NotRectilinearizableError("fractional generator entry")
                row.append(c.numerator)
            rows.append(tuple(row))
        pieces.append(RectilinearPiece(tuple(out_order), tuple(base), tuple(rows), guard))
    return pieces


def rectilinearize(
    cells: Sequence[GuardedCell], try_orders: bool = True
) -> list[RectilinearPiece]:
    """Rewrite disjoint cells as disjoint affine images of N^m.

    Bounded directions are expanded only when their width is constant; a cell
    whose every variable order leaves a parametric width raises
    NotRectilinearizableError.
    """
    pieces: list[RectilinearPiece] = []
    for cell in cells:
        orders: Iterable[Sequence[str]]
        if try_orders:
            identity = tuple(cell.variables)
            rest = sorted(itertools.permutations(cell.variables))
            orders = [identity] + [p for p in rest if p != identity]
        else:
            orders = [tuple(cell.variables)]
        last_error: Exception | None = None
        for order in orders:
            try:
                got = []
                for tower in triangulate(cell, order):
                    got.extend(_pieces_from_tower(tower, cell.variables))
                pieces.extend(got)
                last_error = None
                break
            except NotRectilinearizableError as e:
                last_error = e
        if last_error is not None:
            raise last_error
    return pieces
