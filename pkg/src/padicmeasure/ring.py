"""The ring of cellularly presented definable families.

A Presentation is a rational combination of box cells over a shared parameter
base.  Ring operations work generator-wise (sums concatenate, products take
fiber products), the measure function maps a presentation to a guarded
exponential polynomial, and equality is decided by testing that measure
function for identical vanishing, which is faithful for the underlying ring.

normalize_to_basic clears every unbounded valuation direction out of a
presentation: it splits cells into towers, peels geometric tails into
rational factors, and leaves only finite-fiber generators whose weight
depends on the parameters alone.  Every transformation is recorded as a
replayable certificate step.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Mapping, Sequence, Union

from .algebra import AffineForm, Polynomial, format_rational, frac, parse_rational
from .measure import (
    MEASURE_ZERO,
    BoxCell,
    Coordinate,
    DegenerateCoordinate,
    DivergesError,
    InputError,
    MeasureFunction,
    PAdicContext,
    Weight,
    cell_to_weighted_sum,
    exp_poly_add,
    exp_poly_is_zero,
    exp_poly_scale,
    make_exp_polynomial,
    sum_closed_form,
)
from .presburger import (
    Atom,
    AtomF,
    Formula,
    LinearTerm,
    TRUE,
    conj,
    divides,
    eq0,
    format_formula,
    free_variables,
    geq0,
    is_satisfiable,
    parse,
    parse_term,
    simplify,
    substitute,
)
from .semilinear import (
    GuardedCell,
    Level,
    NotRectilinearizableError,
    PiecewisePolynomial,
    count_parametric,
    term_of_affine,
    to_cells,
    triangulate,
)


class ContextMismatchError(ValueError):
    pass


ALLOWED_RULES = (
    "R1",
    "R2",
    "R3_translate",
    "R3_coordperm",
    "R3_shear",
    "R3_scale",
    "R4",
    "L_Delta",
    "L_acLevel",
    "L_product",
    "P_reparam",
    "GeomSum",
    "CellSplit",
)


@dataclass(frozen=True)
class Presentation:
    ctx: PAdicContext
    param_vars: tuple[str, ...]
    param_domain: Formula
    generators: tuple[tuple[Fraction, BoxCell], ...]

    def validate(self) -> None:
        for _, cell in self.generators:
            cell.validate(self.ctx)
            stray = set(cell.param_variables()) - set(self.param_vars)
            if stray:
                raise InputError(f"generator references undeclared parameters {sorted(stray)}")


def presentation(
    ctx: PAdicContext,
    generators: Iterable[tuple[Union[int, Fraction], BoxCell]],
    param_vars: Sequence[str] = (),
    param_domain: Formula = TRUE,
) -> Presentation:
    gens = tuple((frac(c), cell) for c, cell in generators)
    pres = Presentation(ctx, tuple(param_vars), simplify(param_domain), gens)
    pres.validate()
    return pres


def _same_base(a: Presentation, b: Presentation) -> None:
    if a.ctx != b.ctx or a.param_vars != b.param_vars or a.param_domain != b.param_domain:
        raise ContextMismatchError("presentations live over different bases")


def add(a: Presentation, b: Presentation) -> Presentation:
    _same_base(a, b)
    return Presentation(a.ctx, a.param_vars, a.param_domain, a.generators + b.generators)


def scalar_mul(q: Union[int, Fraction], a: Presentation) -> Presentation:
    q = frac(q)
    if q == 0:
        return Presentation(a.ctx, a.param_vars, a.param_domain, ())
    return Presentation(
        a.ctx, a.param_vars, a.param_domain,
        tuple((c * q, cell) for c, cell in a.generators),
    )


def _fresh_names(taken: set[str], names: Sequence[str]) -> dict[str, str]:
    mapping = {}
    for name in names:
        candidate = name
        k = 2
        while candidate in taken:
            candidate = f"{name}_{k}"
            k += 1
        taken.add(candidate)
        mapping[name] = candidate
    return mapping


def cell_product(left: BoxCell, right: BoxCell, param_vars: Sequence[str]) -> BoxCell:
    """Fiber product of two cells; right-hand lambda variables are renamed
    with a deterministic numeric suffix scheme on collision."""
    taken = set(param_vars) | set(left.lambda_vars)
    mapping = _fresh_names(taken, right.lambda_vars)
    rform = right.lambda_formula
    for old, new in mapping.items():
        if new != old:
            rform = substitute(rform, old, LinearTerm.variable(new))
    lw = left.weight if left.weight is not None else Weight.constant(0)
    rw = right.weight if right.weight is not None else Weight.constant(0)
    r = lw.r * rw.r // _gcd(lw.r, rw.r)
    b: dict[str, int] = {}
    for n, v in lw.b:
        b[n] = b.get(n, 0) + v * (r // lw.r)
    for n, v in rw.b:
        b[mapping[n]] = b.get(mapping[n], 0) + v * (r // rw.r)
    weight: Weight | None = Weight.make(
        r, lw.c.scale(r // lw.r) + rw.c.scale(r // rw.r), b
    )
    if weight.r == 1 and weight.c == LinearTerm.constant(0) and not weight.b:
        weight = None
    return BoxCell(
        left.coords + right.coords,
        left.lambda_vars + tuple(mapping[n] for n in right.lambda_vars),
        simplify(conj([left.lambda_formula, rform])),
        weight,
    )


def multiply(a: Presentation, b: Presentation) -> Presentation:
    _same_base(a, b)
    gens = []
    for ca, cella in a.generators:
        for cb, cellb in b.generators:
            gens.append((ca * cb, cell_product(cella, cellb, a.param_vars)))
    return Presentation(a.ctx, a.param_vars, a.param_domain, tuple(gens))


def _gcd(a: int, b: int) -> int:
    while b:
        a, b = b, a % b
    return abs(a)


def _lcm(a: int, b: int) -> int:
    return a * b // _gcd(a, b)


def measure_function(pres: Presentation) -> MeasureFunction:
    """Exact measure of each fiber, as a guarded exponential polynomial."""
    raw: list[tuple[Formula, Polynomial, AffineForm]] = []
    for index, (coeff, cell) in enumerate(pres.generators):
        converted = cell_to_weighted_sum(cell, pres.ctx)
        if converted is MEASURE_ZERO:
            continue
        lam, weight = converted
        try:
            ep = sum_closed_form(lam, weight, pres.param_domain, pres.ctx, pres.param_vars)
        except DivergesError as err:
            raise DivergesError(err.variable, err.direction, generator=index) from err
        for t in ep.terms:
            raw.append((t.guard, t.poly.scale(coeff), t.exponent))
    expp = make_exp_polynomial(pres.ctx.p, pres.param_vars, raw)
    return MeasureFunction(expp, pres.param_domain, pres.param_vars, pres.ctx)


@dataclass(frozen=True)
class Equal:
    def __bool__(self) -> bool:
        return True


@dataclass(frozen=True)
class NotEqual:
    witness: tuple[tuple[str, int], ...]
    value1: Fraction
    value2: Fraction

    def __bool__(self) -> bool:
        return False

    def witness_dict(self) -> dict[str, int]:
        return dict(self.witness)


def decide_equal(a: Presentation, b: Presentation) -> Union[Equal, NotEqual]:
    """Equal iff the two measure functions agree at every parameter point;
    otherwise a concrete witness with both exact values."""
    _same_base(a, b)
    mfa = measure_function(a)
    mfb = measure_function(b)
    diff = exp_poly_add(mfa.exp_poly, exp_poly_scale(mfb.exp_poly, Fraction(-1)))
    witness = exp_poly_is_zero(diff, a.param_domain, a.ctx)
    if witness is None:
        return Equal()
    point = witness.as_dict()
    for v in a.param_vars:
        point.setdefault(v, 0)
    # fill unconstrained parameters with any domain point: zero works because
    # the witness search only instantiates variables the difference mentions
    return NotEqual(
        tuple(sorted(point.items())), mfa.evaluate(point), mfb.evaluate(point)
    )


# ---------------------------------------------------------------------------
# certificates


@dataclass(frozen=True)
class CertificateStep:
    rule: str
    note: str
    before: Presentation
    after: Presentation


@dataclass(frozen=True)
class Certificate:
    steps: tuple[CertificateStep, ...]


def find_invalid_step(cert: Certificate) -> int | None:
    """Index of the first step that fails to replay, or None."""
    for i, step in enumerate(cert.steps):
        if step.rule not in ALLOWED_RULES:
            return i
        try:
            _same_base(step.before, step.after)
            mfa = measure_function(step.before)
            mfb = measure_function(step.after)
        except (ContextMismatchError, DivergesError, InputError):
            return i
        diff = exp_poly_add(mfa.exp_poly, exp_poly_scale(mfb.exp_poly, Fraction(-1)))
        if exp_poly_is_zero(diff, step.before.param_domain, step.before.ctx) is not None:
            return i
    return None


def verify_certificate(cert: Certificate) -> bool:
    return find_invalid_step(cert) is None


# ---------------------------------------------------------------------------
# certified rewrites (used to build derivation chains)


def with_unit_ball(pres: Presentation) -> tuple[Presentation, CertificateStep]:
    """Append a unit-ball coordinate to every generator (measure unchanged)."""
    p = pres.ctx.p
    gens = []
    for coeff, cell in pres.generators:
        taken = set(pres.param_vars) | set(cell.lambda_vars)
        new = _fresh_names(taken, ("l",))["l"]
        lam = simplify(conj([cell.lambda_formula, AtomF(geq0(LinearTerm.variable(new)))]))
        for xi in range(1, p):
            gens.append(
                (coeff, BoxCell(
                    cell.coords + (Coordinate(Fraction(0), 1, xi),),
                    cell.lambda_vars + (new,),
                    lam,
                    cell.weight,
                ))
            )
    after = Presentation(pres.ctx, pres.param_vars, pres.param_domain, tuple(gens))
    return after, CertificateStep("R4", "product with the unit ball", pres, after)


def translate_centers(
    pres: Presentation, center: Fraction
) -> tuple[Presentation, CertificateStep]:
    gens = tuple(
        (coeff, BoxCell(
            tuple(
                Coordinate(frac(center), c.level, c.ac) if isinstance(c, Coordinate) else c
                for c in cell.coords
            ),
            cell.lambda_vars, cell.lambda_formula, cell.weight,
        ))
        for coeff, cell in pres.generators
    )
    after = Presentation(pres.ctx, pres.param_vars, pres.param_domain, gens)
    return after, CertificateStep("R3_translate", f"translate centers to {center}", pres, after)


def raise_level(pres: Presentation, new_level: int) -> tuple[Presentation, CertificateStep]:
    """Replace level-1 conditions by level-new_level ones, rescaling weights."""
    p = pres.ctx.p
    gens = []
    for coeff, cell in pres.generators:
        factor = Fraction(1)
        coords = []
        for c in cell.coords:
            if isinstance(c, Coordinate) and c.level == 1 and new_level > 1:
                coords.append(Coordinate(c.center, new_level, c.ac))
                factor *= Fraction(p) ** (new_level - 1)
            else:
                coords.append(c)
        gens.append((coeff * factor, BoxCell(tuple(coords), cell.lambda_vars,
                                             cell.lambda_formula, cell.weight)))
    after = Presentation(pres.ctx, pres.param_vars, pres.param_domain, tuple(gens))
    return after, CertificateStep(
        "L_acLevel", f"raise angular-component level to {new_level}", pres, after
    )


def split_first_generator(pres: Presentation, predicate: Formula) -> tuple[Presentation, CertificateStep]:
    """Split generator 0 into predicate and complement parts (additivity)."""
    if not pres.generators:
        raise ValueError("nothing to split")
    coeff, cell = pres.generators[0]
    from .presburger import neg as fneg

    part1 = BoxCell(cell.coords, cell.lambda_vars,
                    simplify(conj([cell.lambda_formula, predicate])), cell.weight)
    part2 = BoxCell(cell.coords, cell.lambda_vars,
                    simplify(conj([cell.lambda_formula, fneg(predicate)])), cell.weight)
    gens = ((coeff, part1), (coeff, part2)) + pres.generators[1:]
    after = Presentation(pres.ctx, pres.param_vars, pres.param_domain, gens)
    return after, CertificateStep("R1", "split a generator into disjoint parts", pres, after)


def permute_coordinates(pres: Presentation, rotation: int = 1) -> tuple[Presentation, CertificateStep]:
    """Cyclically rotate the coordinates of every generator (measure-neutral)."""
    gens = []
    for coeff, cell in pres.generators:
        n = len(cell.coords)
        if n == 0:
            gens.append((coeff, cell))
            continue
        k = rotation % n
        coords = cell.coords[k:] + cell.coords[:k]
        live = [i for i, c in enumerate(cell.coords) if isinstance(c, Coordinate)]
        perm = list(range(len(cell.coords)))[k:] + list(range(len(cell.coords)))[:k]
        new_live = [i for i in perm if i in live]
        names = tuple(cell.lambda_vars[live.index(i)] for i in new_live)
        gens.append((coeff, BoxCell(coords, names, cell.lambda_formula, cell.weight)))
    after = Presentation(pres.ctx, pres.param_vars, pres.param_domain, tuple(gens))
    return after, CertificateStep(
        "R3_coordperm", f"rotate coordinates by {rotation}", pres, after
    )


def shift_lambda(pres: Presentation, offset: int) -> tuple[Presentation, CertificateStep]:
    """Reparametrize every lambda variable by +offset, compensating weights."""
    gens = []
    for coeff, cell in pres.generators:
        lam = cell.lambda_formula
        for v in cell.lambda_vars:
            lam = substitute(lam, v, LinearTerm.variable(v) - offset)
        base = cell.weight if cell.weight is not None else Weight.constant(0)
        # the weight field must satisfy w'(x) = w(x - offset); the natural
        # volume part contributes r*n*offset, the b-part -offset*sum(b)
        n = len(cell.lambda_vars)
        b_sum = sum(v for _, v in base.b)
        const = base.r * n * offset - offset * b_sum
        weight = Weight.make(base.r, base.c + const, dict(base.b))
        gens.append((coeff, BoxCell(cell.coords, cell.lambda_vars, simplify(lam), weight)))
    after = Presentation(pres.ctx, pres.param_vars, pres.param_domain, tuple(gens))
    return after, CertificateStep("P_reparam", f"shift valuations by {offset}", pres, after)


# ---------------------------------------------------------------------------
# normalization to basic presentations


@dataclass(frozen=True)
class BasicPresentation:
    """A presentation whose generators all have finite fibers and
    parameter-only weights, with the counting certificates attached."""

    presentation: Presentation
    fiber_counts: tuple[PiecewisePolynomial, ...]


@dataclass
class _GenState:
    coeff: Fraction
    levels: list[Level]
    kept: list[Level]
    guard: tuple[Atom, ...]
    wtot: AffineForm  # total exponent over level variables and parameters


def _state_to_cell(state: _GenState, ctx: PAdicContext) -> BoxCell:
    levels = list(state.levels) + list(state.kept)
    atoms: list[Atom] = []
    names = []
    for level in levels:
        names.append(level.var)
        v = LinearTerm.variable(level.var)
        den = level.start.denominator_lcm()
        start_term = term_of_affine(level.start, den)
        if level.kind == "point":
            atoms.append(eq0(v.scale(den) - start_term))
            continue
        step = level.step
        if step > 0:
            diff = v.scale(den) - start_term
        else:
            diff = start_term - v.scale(den)
        atoms.append(geq0(diff))
        mod = den * abs(step)
        if mod >= 2:
            atoms.append(divides(mod, diff))
        if level.kind == "range":
            end = level.start + level.count.scale(step) - step
            den2 = end.denominator_lcm()
            end_term = term_of_affine(end, den2)
            if step > 0:
                atoms.append(geq0(end_term - v.scale(den2)))
            else:
                atoms.append(geq0(v.scale(den2) - end_term))
    atoms.extend(state.guard)
    lam = simplify(conj([AtomF(a) for a in atoms]))
    n = len(levels)
    # recover the weight field: cell_to_weighted_sum subtracts each lambda and
    # each level (all levels are 1 here), so add them back
    coeffs = {n2: c for n2, c in state.wtot.coeffs}
    for level in levels:
        coeffs[level.var] = coeffs.get(level.var, Fraction(0)) + 1
    wfield = AffineForm.make(coeffs, state.wtot.const + n)
    r = wfield.denominator_lcm()
    c_term = term_of_affine(
        AffineForm.make({k: v for k, v in wfield.coeffs if k not in set(names)},
                        wfield.const), r)
    b = {}
    for name in names:
        val = wfield.coeff(name) * r
        assert val.denominator == 1
        b[name] = val.numerator
    weight: Weight | None = Weight.make(r, c_term, b)
    if weight.r == 1 and weight.c == LinearTerm.constant(0) and not weight.b:
        weight = None
    coords = tuple(Coordinate(Fraction(0), 1, 1) for _ in range(n))
    return BoxCell(coords, tuple(names), lam, weight)


def _assemble(
    ctx: PAdicContext,
    param_vars: tuple[str, ...],
    param_domain: Formula,
    done: list[tuple[Fraction, BoxCell]],
    queue: list[_GenState],
    rest: list[tuple[Fraction, BoxCell]],
) -> Presentation:
    gens = list(done)
    gens.extend((st.coeff, _state_to_cell(st, ctx)) for st in queue)
    gens.extend(rest)
    return Presentation(ctx, param_vars, param_domain, tuple(gens))


def normalize_to_basic(
    pres: Presentation,
) -> tuple[int, BasicPresentation, Certificate]:
    """Clear all unbounded directions: returns (ell, B, certificate) with
    measure(B) = ell * measure(pres), B basic, and every step replayable."""
    pres.validate()
    ctx = pres.ctx
    p = ctx.p
    steps: list[CertificateStep] = []
    current = pres

    def record(rule: str, note: str, after: Presentation) -> Presentation:
        nonlocal current
        steps.append(CertificateStep(rule, note, current, after))
        current = after
        return after

    # R2: generators with a degenerate coordinate are negligible
    if any(isinstance(c, DegenerateCoordinate) for _, cell in current.generators
           for c in cell.coords):
        kept = tuple(
            (coeff, cell) for coeff, cell in current.generators
            if not any(isinstance(c, DegenerateCoordinate) for c in cell.coords)
        )
        record("R2", "drop lower-dimensional generators",
               Presentation(ctx, pres.param_vars, pres.param_domain, kept))

    # R3: translate centers to zero and angular components to one
    if any(isinstance(c, Coordinate) and (c.center != 0 or c.ac != 1)
           for _, cell in current.generators for c in cell.coords):
        gens = tuple(
            (coeff, BoxCell(
                tuple(Coordinate(Fraction(0), c.level, 1) if isinstance(c, Coordinate) else c
                      for c in cell.coords),
                cell.lambda_vars, cell.lambda_formula, cell.weight))
            for coeff, cell in current.generators
        )
        record("R3_translate", "translate centers to zero and scale units to ac 1",
               Presentation(ctx, pres.param_vars, pres.param_domain, gens))

    # L_acLevel: reduce all levels to one
    if any(isinstance(c, Coordinate) and c.level > 1
           for _, cell in current.generators for c in cell.coords):
        gens = []
        for coeff, cell in current.generators:
            drop = sum(c.level - 1 for c in cell.coords if isinstance(c, Coordinate))
            coords = tuple(Coordinate(c.center, 1, c.ac) if isinstance(c, Coordinate) else c
                           for c in cell.coords)
            gens.append((coeff * Fraction(1, p**drop),
                         BoxCell(coords, cell.lambda_vars, cell.lambda_formula, cell.weight)))
        record("L_acLevel", "reduce angular-component levels to 1",
               Presentation(ctx, pres.param_vars, pres.param_domain, tuple(gens)))

    # per generator: split into towers, then peel directions
    ell = 1
    done: list[tuple[Fraction, BoxCell]] = []
    remaining = list(current.generators)
    while remaining:
        coeff, cell = remaining.pop(0)
        converted = cell_to_weighted_sum(cell, ctx)
        if converted is MEASURE_ZERO:
            raise AssertionError("degenerate generator survived the R2 step")
        lam, weight = converted
        wform = weight.affine()
        params = pres.param_vars
        lambda_vars = cell.lambda_vars
        cells = to_cells(lam, lambda_vars, params)

        states, gen_factors = _plan_generator(cells, wform, coeff, pres, ctx)
        ell = _lcm(ell, gen_factors)

        after = _assemble(ctx, pres.param_vars, pres.param_domain, done, states,
                          remaining)
        record("CellSplit", "decompose a generator into disjoint towers", after)

        queue = states
        while queue:
            state = queue.pop(0)
            if not state.levels:
                done.append((state.coeff, _state_to_cell(state, ctx)))
                continue
            level = state.levels[-1]
            new_states, rule, note = _peel_step(state, level, p)
            queue = new_states + queue
            if rule is None:
                continue  # bookkeeping only, the presented cell is unchanged
            after = _assemble(ctx, pres.param_vars, pres.param_domain, done, queue,
                              remaining)
            record(rule, note, after)

    basic = current
    counts = []
    for _, cell in basic.generators:
        cells = to_cells(cell.lambda_formula, cell.lambda_vars, pres.param_vars)
        counts.append(count_parametric(cells, pres.param_domain, pres.param_vars))

    # scale the whole chain by ell
    if ell != 1:
        steps = [
            CertificateStep(s.rule, s.note, scalar_mul(ell, s.before),
                            scalar_mul(ell, s.after))
            for s in steps
        ]
        basic = scalar_mul(ell, basic)
    cert = Certificate(tuple(steps))
    return ell, BasicPresentation(basic, tuple(counts)), cert


def _plan_generator(
    cells: list[GuardedCell],
    wform: AffineForm,
    coeff: Fraction,
    pres: Presentation,
    ctx: PAdicContext,
) -> tuple[list[_GenState], int]:
    """Choose a triangulation order whose peeling never blocks; returns the
    initial states and the product of (p^n - 1) factors the plan will use."""
    import itertools as _it

    states: list[_GenState] = []
    factors = 1
    for cell in cells:
        orders = [tuple(cell.variables)] + [
            perm for perm in sorted(_it.permutations(cell.variables))
            if perm != tuple(cell.variables)
        ]
        chosen = None
        last_error: Exception | None = None
        for order in orders:
            try:
                towers = triangulate(cell, order)
                plan_factor = 1
                plan_states = []
                for tower in towers:
                    guard = simplify(conj(
                        [tower.guard_formula(), pres.param_domain]))
                    if not is_satisfiable(guard):
                        continue
                    st = _GenState(coeff, list(tower.levels), [], tower.guard, wform)
                    plan_factor *= _dry_run(st, ctx.p)
                    plan_states.append(
                        _GenState(coeff, list(tower.levels), [], tower.guard, wform))
                chosen = (plan_states, plan_factor)
                break
            except _BlockedError as err:
                last_error = err
        if chosen is None:
            raise NotRectilinearizableError(
                f"no variable order untangles this cell: {last_error}")
        states.extend(chosen[0])
        factors *= chosen[1]
    return states, factors


class _BlockedError(Exception):
    pass


def _gamma_of(state: _GenState, level: Level) -> Fraction:
    return state.wtot.coeff(level.var) * level.step


def _dry_run(state: _GenState, p: int) -> int:
    """Simulate peeling; returns the product of (p^n - 1) factors needed."""
    factor = 1
    queue = [state]
    while queue:
        st = queue.pop()
        if not st.levels:
            continue
        level = st.levels[-1]
        if level.kind == "point":
            queue.append(_fold_point(st, level))
            continue
        gamma = _gamma_of(st, level)
        if level.kind == "ray":
            for kept in st.kept:
                refs = set(kept.start.variables())
                if kept.count is not None:
                    refs |= set(kept.count.variables())
                if level.var in refs:
                    raise _BlockedError(
                        f"kept range over {kept.var} references summed {level.var}")
            if gamma >= 0:
                raise DivergesError(level.var, 1 if level.step > 0 else -1)
            if gamma.denominator != 1:
                raise InputError(f"non-integral increment {gamma} along {level.var}")
            factor *= p ** (-gamma.numerator) - 1
            queue.append(_drop_ray(st, level))
            continue
        if gamma == 0:
            queue.append(_keep_range(st, level))
            continue
        queue.extend(_split_range(st, level))
    return factor


def _fold_point(state: _GenState, level: Level) -> _GenState:
    kept = [
        Level(k.var, k.kind,
              k.start.substitute(level.var, level.start), k.step,
              k.count.substitute(level.var, level.start) if k.count is not None else None)
        for k in state.kept
    ]
    return _GenState(
        state.coeff, state.levels[:-1], kept, state.guard,
        state.wtot.substitute(level.var, level.start),
    )


def _drop_ray(state: _GenState, level: Level) -> _GenState:
    # the geometric factor itself is applied by the caller through coeff
    return _GenState(
        state.coeff,
        state.levels[:-1], list(state.kept), state.guard,
        state.wtot.substitute(level.var, level.start),
    )


def _keep_range(state: _GenState, level: Level) -> _GenState:
    return _GenState(state.coeff, state.levels[:-1], [level] + state.kept,
                     state.guard, state.wtot)


def _split_range(state: _GenState, level: Level) -> list[_GenState]:
    gamma = _gamma_of(state, level)
    step = level.step
    if gamma < 0:
        first = Level(level.var, "ray", level.start, step)
        second = Level(level.var, "ray", level.start + level.count.scale(step), step)
    else:
        end = level.start + level.count.scale(step) - step
        first = Level(level.var, "ray", end, -step)
        second = Level(level.var, "ray", level.start - step, -step)
    return [
        _GenState(state.coeff, state.levels[:-1] + [first], list(state.kept),
                  state.guard, state.wtot),
        _GenState(state.coeff.__neg__(), state.levels[:-1] + [second], list(state.kept),
                  state.guard, state.wtot),
    ]


def _peel_step(state: _GenState, level: Level, p: int) -> tuple[list[_GenState], str, str]:
    if level.kind == "point":
        return ([_fold_point(state, level)], "P_reparam",
                f"substitute the pinned coordinate {level.var}")
    gamma = _gamma_of(state, level)
    if level.kind == "ray":
        if gamma >= 0:
            raise DivergesError(level.var, 1 if level.step > 0 else -1)
        n = -gamma.numerator
        out = _drop_ray(state, level)
        out.coeff = state.coeff * Fraction(p**n, p**n - 1)
        return ([out], "GeomSum",
                f"sum the geometric tail along {level.var} (ratio p^-{n})")
    if gamma == 0:
        return ([_keep_range(state, level)], None,
                f"retain finite direction {level.var}")
    return (_split_range(state, level), "CellSplit",
            f"split bounded direction {level.var} into a difference of tails")


# ---------------------------------------------------------------------------
# document serialization (the on-disk presentation and certificate formats)


def _canonical_lambda_names(n: int) -> tuple[str, ...]:
    return tuple(f"l{i}" for i in range(1, n + 1))


def to_document(pres: Presentation) -> dict:
    """Serialize with canonical per-cell lambda names l1..ln (coordinate order)."""
    gens = []
    for coeff, cell in pres.generators:
        names = _canonical_lambda_names(len(cell.lambda_vars))
        lam = cell.lambda_formula
        for old, new in zip(cell.lambda_vars, names):
            if old != new:
                lam = substitute(lam, old, LinearTerm.variable(new))
        coords = []
        for c in cell.coords:
            if isinstance(c, Coordinate):
                coords.append({"center": format_rational(c.center),
                               "level": c.level, "ac": c.ac})
            else:
                coords.append({"point": format_rational(c.point)})
        weight = None
        if cell.weight is not None:
            by_name = dict(cell.weight.b)
            weight = {
                "r": cell.weight.r,
                "c": str(cell.weight.c),
                "b": [by_name.get(old, 0) for old in cell.lambda_vars],
            }
        gens.append({
            "coeff": format_rational(coeff),
            "dims": len(cell.coords),
            "coords": coords,
            "lambda_formula": format_formula(lam),
            "weight": weight,
        })
    return {
        "prime": pres.ctx.p,
        "param_vars": list(pres.param_vars),
        "param_domain": format_formula(pres.param_domain),
        "generators": gens,
    }


def from_document(doc: Mapping) -> Presentation:
    ctx = PAdicContext(int(doc["prime"]))
    param_vars = tuple(doc.get("param_vars", ()))
    param_domain = parse(doc.get("param_domain", "true"))
    gens = []
    for g in doc.get("generators", ()):
        coords: list[Union[Coordinate, DegenerateCoordinate]] = []
        names: list[str] = []
        for entry in g["coords"]:
            if "point" in entry:
                coords.append(DegenerateCoordinate(parse_rational(entry["point"])))
            else:
                names.append(f"l{len(names) + 1}")
                coords.append(Coordinate(parse_rational(entry["center"]),
                                         int(entry["level"]), int(entry["ac"])))
        if int(g.get("dims", len(coords))) != len(coords):
            raise InputError("dims does not match the coords list")
        lam = parse(g.get("lambda_formula", "true"))
        weight = None
        wdoc = g.get("weight")
        if wdoc is not None:
            b_list = list(wdoc.get("b", ()))
            if len(b_list) != len(names):
                raise InputError("weight b vector must match the lambda variables")
            weight = Weight.make(int(wdoc["r"]), parse_term(wdoc["c"]),
                                 dict(zip(names, b_list)))
        cell = BoxCell(tuple(coords), tuple(names), lam, weight)
        gens.append((parse_rational(g["coeff"]), cell))
    pres = Presentation(ctx, param_vars, simplify(param_domain), tuple(gens))
    pres.validate()
    return pres


def certificate_to_document(cert: Certificate) -> dict:
    return {
        "steps": [
            {
                "rule": s.rule,
                "note": s.note,
                "before": to_document(s.before),
                "after": to_document(s.after),
            }
            for s in cert.steps
        ]
    }


def certificate_from_document(doc: Mapping) -> Certificate:
    steps = tuple(
        CertificateStep(str(s["rule"]), str(s.get("note", "")),
                        from_document(s["before"]), from_document(s["after"]))
        for s in doc.get("steps", ())
    )
    return Certificate(steps)


# ---------------------------------------------------------------------------
# standard presentations


def unit_presentation(ctx: PAdicContext, param_vars: Sequence[str] = (),
                      param_domain: Formula = TRUE) -> Presentation:
    """The class of S x Zp^0, measure identically 1."""
    cell = BoxCell((), (), TRUE, None)
    return presentation(ctx, [(1, cell)], param_vars, param_domain)


def delta_presentation(ctx: PAdicContext, n: int, param_vars: Sequence[str] = (),
                       param_domain: Formula = TRUE) -> Presentation:
    """P(Delta_n): equal valuations along the diagonal, measure 1/(p^n - 1)."""
    names = _canonical_lambda_names(n)
    atoms = [AtomF(geq0(LinearTerm.variable(names[0])))]
    for a, b in zip(names, names[1:]):
        atoms.append(AtomF(eq0(LinearTerm.variable(a) - LinearTerm.variable(b))))
    cell = BoxCell(tuple(Coordinate(Fraction(0), 1, 1) for _ in range(n)),
                   names, simplify(conj(atoms)), None)
    return presentation(ctx, [(1, cell)], param_vars, param_domain)


def ball_presentation(ctx: PAdicContext, c: int, center: Fraction = Fraction(0),
                      param_vars: Sequence[str] = (),
                      param_domain: Formula = TRUE) -> Presentation:
    """The ball center + p^c Zp, measure p^(-c), as p-1 angular classes."""
    lam = AtomF(geq0(LinearTerm.variable("l1") - c))
    gens = []
    for xi in range(1, ctx.p):
        cell = BoxCell((Coordinate(center, 1, xi),), ("l1",), lam, None)
        gens.append((1, cell))
    return presentation(ctx, gens, param_vars, param_domain)


def weighted_presentation(
    ctx: PAdicContext,
    lam: Formula,
    weight: Weight,
    param_vars: Sequence[str] = (),
    param_domain: Formula = TRUE,
) -> Presentation:
    """The carrier of a weighted Presburger sum: measure is sum of p^weight
    over the fiber of lam."""
    lambda_names = tuple(sorted(
        (set(free_variables(lam)) - set(param_vars)) | {n for n, _ in weight.b}))
    n = len(lambda_names)
    b = {name: dict(weight.b).get(name, 0) + weight.r for name in lambda_names}
    field = Weight.make(weight.r, weight.c + weight.r * n, b)
    cell = BoxCell(tuple(Coordinate(Fraction(0), 1, 1) for _ in range(n)),
                   lambda_names, lam, field)
    return presentation(ctx, [(1, cell)], param_vars, param_domain)
