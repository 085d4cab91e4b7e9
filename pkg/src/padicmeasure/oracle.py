"""Independent brute-force validators.

Nothing here reuses the closed-form summation path: measures are bracketed by
exact enumeration over a valuation window plus geometric tail bounds, and
quantified formulas are decided by exhaustive expansion over windows derived
from coefficient bounds.  These exist to catch bugs in the exact engine, so
they are deliberately simple and budgeted.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Mapping, Sequence

import numpy as np

from .algebra import AffineForm, frac, power_fraction
from .measure import (
    MEASURE_ZERO,
    DivergesError,
    PAdicContext,
    Weight,
    cell_to_weighted_sum,
)
from .presburger import (
    Atom,
    AtomF,
    AndF,
    DIV,
    EQ0,
    ExistsF,
    FalseF,
    ForallF,
    Formula,
    GEQ0,
    LinearTerm,
    NotF,
    OrF,
    TrueF,
    conj,
    evaluate_on_grid,
    evaluate_qf,
    free_variables,
    geq0,
    is_satisfiable,
    simplify,
    substitute,
)

from .ring import Presentation


class WindowTooSmallError(Exception):
    pass


class BudgetExceededError(Exception):
    pass


@dataclass(frozen=True)
class Bracket:
    lower: Fraction
    upper: Fraction
    depth: int
    valuation_window: int

    @property
    def width(self) -> Fraction:
        return self.upper - self.lower

    def __contains__(self, value) -> bool:
        return self.lower <= frac(value) <= self.upper

    def scale(self, k: Fraction) -> Bracket:
        lo, hi = self.lower * k, self.upper * k
        if k < 0:
            lo, hi = hi, lo
        return Bracket(lo, hi, self.depth, self.valuation_window)

    def __add__(self, other: Bracket) -> Bracket:
        return Bracket(self.lower + other.lower, self.upper + other.upper,
                       min(self.depth, other.depth),
                       min(self.valuation_window, other.valuation_window))


# ---------------------------------------------------------------------------
# weighted window enumeration with geometric tails


def _weighted_box_bracket(
    lam: Formula,
    weight: AffineForm,
    names: Sequence[str],
    window: int,
    ctx: PAdicContext,
    diverge_error,
) -> tuple[Fraction, Fraction]:
    """(exact window sum, upper tail bound) for sum of p^weight over lam."""
    p = ctx.p
    n = len(names)
    if n == 0:
        if is_satisfiable(lam):
            e = weight.evaluate({})
            if e.denominator != 1:
                raise WindowTooSmallError("non-integer weight on an assigned point")
            v = power_fraction(p, e)
            return v, Fraction(0)
        return Fraction(0), Fraction(0)

    values = np.arange(-window, window + 1, dtype=np.int64)
    axes = {v: values for v in names}
    mask = evaluate_on_grid(lam, axes)

    # exact window sum: weights are integers on the fiber, so collect the
    # integer exponent r*w per satisfying point and bin by value
    r = 1
    for _, c in weight.coeffs:
        r = r * c.denominator // _gcd(r, c.denominator)
    r = r * weight.const.denominator // _gcd(r, weight.const.denominator)
    scaled = np.full(mask.shape, int(weight.const * r), dtype=np.int64)
    for i, v in enumerate(names):
        coef = int(weight.coeff(v) * r)
        if coef:
            view = [1] * n
            view[i] = len(values)
            scaled = scaled + coef * values.reshape(view)
    exps = scaled[mask]
    total = Fraction(0)
    if exps.size:
        uniq, counts = np.unique(exps, return_counts=True)
        for e, cnt in zip(uniq.tolist(), counts.tolist()):
            if e % r != 0:
                raise WindowTooSmallError("weight not integral on the window")
            total += cnt * power_fraction(p, e // r)

    # tail bounds per direction and sign, using satisfiability-probed
    # coordinate ranges so coupled cells (diagonals, shears) stay sharp
    tail = Fraction(0)
    p_const = power_fraction(p, _ceil(weight.const))
    ranges = {v: _coordinate_range(lam, v, window) for v in names}
    for v in names:
        beta = weight.coeff(v)
        lo, hi = ranges[v]
        if lo is None and beta <= 0:
            raise diverge_error(v, -1)
        if hi is None and beta >= 0:
            raise diverge_error(v, 1)

    def line_mass(v: str) -> Fraction:
        lo, hi = ranges[v]
        return _line_mass(weight.coeff(v), lo, hi, p)

    factors = {v: line_mass(v) for v in names}
    for v in names:
        beta = weight.coeff(v)
        lo, hi = ranges[v]
        up_extends = hi is None or hi > window
        down_extends = lo is None or lo < -window
        for sign, ext in ((1, up_extends), (-1, down_extends)):
            if not ext:
                continue
            if sign > 0:
                piece = _line_mass(beta, window + 1, hi, p)
            else:
                piece = _line_mass(beta, lo, -window - 1, p)
            piece *= p_const
            for u in names:
                if u != v:
                    piece *= factors[u]
            tail += piece
    return total, tail


def _coordinate_range(lam: Formula, var: str, window: int):
    """(min, max) of a coordinate over the fiber; None marks an unbounded or
    beyond-window end.  Decided exactly by satisfiability probes."""

    def sat_leq(t: int) -> bool:
        return is_satisfiable(conj([lam, AtomF(geq0(LinearTerm.constant(t)
                                                    - LinearTerm.variable(var)))]))

    def sat_geq(t: int) -> bool:
        return is_satisfiable(conj([lam, AtomF(geq0(LinearTerm.variable(var) - t))]))

    lo: int | None
    hi: int | None
    if sat_leq(-window - 1):
        lo = None
    else:
        a, b = -window, window  # smallest t with sat_leq(t)
        if not sat_leq(b):
            lo = window + 1  # no points at all in the window; harmless
        else:
            while a < b:
                mid = (a + b) // 2
                if sat_leq(mid):
                    b = mid
                else:
                    a = mid + 1
            lo = a
    if sat_geq(window + 1):
        hi = None
    else:
        a, b = -window, window  # largest t with sat_geq(t)
        if not sat_geq(a):
            hi = -window - 1
        else:
            while a < b:
                mid = (a + b + 1) // 2
                if sat_geq(mid):
                    a = mid
                else:
                    b = mid - 1
            hi = a
    return lo, hi


def _line_mass(beta: Fraction, lo: int | None, hi: int | None, p: int) -> Fraction:
    """Upper bound for sum of p^(beta*x) over integer x in [lo, hi]; either
    end may be None (infinite).  Requires convergence on any infinite end."""
    if beta == 0:
        if lo is None or hi is None:
            raise ValueError("flat weight over an unbounded line")
        return Fraction(max(0, hi - lo + 1))
    if lo is not None and hi is not None and lo > hi:
        return Fraction(0)
    if beta < 0:
        assert lo is not None
        den = beta.denominator
        head = power_fraction(p, _ceil(beta * lo))
        if hi is not None and beta.denominator == 1:
            # exact finite geometric sum
            q = power_fraction(p, beta)
            return power_fraction(p, beta * lo) * (1 - q ** (hi - lo + 1)) / (1 - q)
        return head * den / (1 - power_fraction(p, beta * den))
    mirrored = _line_mass(-beta,
                          None if hi is None else -hi,
                          None if lo is None else -lo, p)
    return mirrored


def _ceil(q: Fraction) -> int:
    return -((-q).__floor__())


def _gcd(a: int, b: int) -> int:
    while b:
        a, b = b, a % b
    return abs(a)


def partial_sum(
    lam: Formula,
    weight: Weight,
    point: Mapping[str, int],
    radius: int,
    ctx: PAdicContext,
) -> Bracket:
    """Bracket sum of p^weight over the fiber at a concrete parameter point.

    lower = exact sum over the window, upper adds geometric tail bounds;
    raises DivergesError when an unbounded direction has a nonnegative
    exponent coefficient.
    """
    names = tuple(sorted({n for n, _ in weight.b}
                         | (set(free_variables(lam)) - set(point))))
    lam_inst = lam
    for v, val in point.items():
        lam_inst = substitute(lam_inst, v, LinearTerm.constant(int(val)))
    lam_inst = simplify(lam_inst)
    waff = weight.affine()
    for v, val in point.items():
        waff = waff.substitute(v, AffineForm.constant(int(val)))
    total, tail = _weighted_box_bracket(
        lam_inst, waff, names, radius, ctx,
        lambda v, s: DivergesError(v, s),
    )
    return Bracket(total, total + tail, radius, radius)


def _instantiate(lam: Formula, weight: Weight, point: Mapping[str, int]):
    names = tuple(sorted({n for n, _ in weight.b}
                         | (set(free_variables(lam)) - set(point))))
    lam_inst = lam
    for v, val in point.items():
        lam_inst = substitute(lam_inst, v, LinearTerm.constant(int(val)))
    waff = weight.affine()
    for v, val in point.items():
        waff = waff.substitute(v, AffineForm.constant(int(val)))
    return simplify(lam_inst), waff, names


def _exact_1d_bracket(
    lam: Formula, weight: AffineForm, var: str, window: int, ctx: PAdicContext
) -> Fraction:
    """Exact sum of p^weight over a one-variable fiber: enumerate up to the
    last constraint boundary, then sum each residue class tail exactly."""
    p = ctx.p
    modulus = 1
    boundary = 0
    for atom in _atoms_of(lam):
        c = atom.term.coeff(var)
        if c == 0:
            continue
        if atom.kind == DIV:
            modulus = modulus * atom.modulus // _gcd(modulus, atom.modulus)
        else:
            rest = abs(atom.term.const)
            boundary = max(boundary, -(-rest // abs(c)))
    v_st = max(window, boundary + 1)
    beta = weight.coeff(var)
    total = Fraction(0)
    for x in range(-v_st, v_st + 1):
        if evaluate_qf(lam, {var: x}):
            e = weight.evaluate({var: x})
            if e.denominator != 1:
                raise WindowTooSmallError("weight not integral on the fiber")
            total += power_fraction(p, e)
    for sign in (1, -1):
        step = beta * modulus * sign
        for j in range(modulus):
            a = sign * (v_st + 1 + j)
            if not evaluate_qf(lam, {var: a}):
                continue
            if step >= 0:
                raise WindowTooSmallError(
                    f"no tail bound along {var} towards {'+' if sign > 0 else '-'}inf")
            e = weight.evaluate({var: a})
            if e.denominator != 1 or (step).denominator != 1:
                raise WindowTooSmallError("weight not integral on the tail")
            total += power_fraction(p, e) / (1 - power_fraction(p, step))
    return total


def truncated_measure(
    pres: Presentation,
    point: Mapping[str, int],
    depth: int = 8,
    window: int = 12,
    ctx: PAdicContext | None = None,
) -> Bracket:
    """Bracket the exact measure of a presentation fiber by enumeration.

    Zero- and one-dimensional cells are summed exactly (their tails are
    unions of full residue classes past the last constraint boundary); higher
    cells get window sums plus geometric tail bounds, and the window grows
    until the bracket width is at most p^(n - depth).  WindowTooSmallError is
    raised when a tail cannot be bounded or the target is unreachable.
    """
    ctx = ctx or pres.ctx
    p = ctx.p
    n_max = max((len(c.lambda_vars) for _, c in pres.generators), default=0)
    target = power_fraction(p, n_max - depth)
    v_eff = max(1, window)
    last_error: WindowTooSmallError | None = None
    for _ in range(10):
        lower = Fraction(0)
        upper = Fraction(0)
        try:
            for coeff, cell in pres.generators:
                converted = cell_to_weighted_sum(cell, ctx)
                if converted is MEASURE_ZERO:
                    continue
                lam, weight = converted
                lam_inst, waff, names = _instantiate(lam, weight, point)
                if len(names) <= 1:
                    if names:
                        value = _exact_1d_bracket(lam_inst, waff, names[0], v_eff, ctx)
                    else:
                        value, _ = _weighted_box_bracket(
                            lam_inst, waff, (), v_eff, ctx, _window_error)
                    lower += coeff * value
                    upper += coeff * value
                    continue
                total, tail = _weighted_box_bracket(
                    lam_inst, waff, names, v_eff, ctx, _window_error)
                b = Bracket(total, total + tail, depth, v_eff).scale(coeff)
                lower += b.lower
                upper += b.upper
        except WindowTooSmallError as err:
            # a direction reached past the window; a larger window may still
            # resolve it as bounded, so grow before giving up
            last_error = err
            bracket = None
        else:
            bracket = Bracket(lower, upper, depth, v_eff)
            if bracket.width <= target:
                return bracket
        v_eff = v_eff * 2
        if (2 * v_eff + 1) ** max(1, n_max) > 3 * 10**7:
            break
    if last_error is not None:
        raise last_error
    raise WindowTooSmallError(
        f"width target p^({n_max} - {depth}) unreachable within the growth budget")


def _window_error(variable: str, sign: int) -> WindowTooSmallError:
    arrow = "+inf" if sign > 0 else "-inf"
    return WindowTooSmallError(f"no tail bound along {variable} towards {arrow}")


# ---------------------------------------------------------------------------
# brute-force quantifier elimination tables


@dataclass(frozen=True)
class BoxTable:
    """Finite truth table of a formula over [-bound, bound]^n."""

    variables: tuple[str, ...]
    bound: int
    values: np.ndarray

    def on_grid(self, axes: Mapping[str, np.ndarray]) -> np.ndarray:
        names = list(axes.keys())
        shape = tuple(len(axes[v]) for v in names)
        index = []
        for v in self.variables:
            pos = names.index(v)
            vals = np.asarray(axes[v], dtype=np.int64) + self.bound
            if vals.size and (vals.min() < 0 or vals.max() > 2 * self.bound):
                raise ValueError("grid exceeds the table bound")
            view = [1] * len(names)
            view[pos] = shape[pos]
            index.append(vals.reshape(view))
        if not index:
            return np.broadcast_to(self.values, shape).copy()
        return np.broadcast_to(self.values[tuple(index)], shape).copy()


def _quantifier_depth(f: Formula) -> int:
    if isinstance(f, (TrueF, FalseF, AtomF)):
        return 0
    if isinstance(f, NotF):
        return _quantifier_depth(f.arg)
    if isinstance(f, (AndF, OrF)):
        return max(_quantifier_depth(a) for a in f.args)
    return 1 + _quantifier_depth(f.body)


def _atoms_of(f: Formula) -> list[Atom]:
    if isinstance(f, AtomF):
        return [f.atom]
    if isinstance(f, NotF):
        return _atoms_of(f.arg)
    if isinstance(f, (AndF, OrF)):
        out = []
        for a in f.args:
            out.extend(_atoms_of(a))
        return out
    if isinstance(f, (ExistsF, ForallF)):
        return _atoms_of(f.body)
    return []


def _quantified_vars(f: Formula) -> list[str]:
    if isinstance(f, (TrueF, FalseF, AtomF)):
        return []
    if isinstance(f, NotF):
        return _quantified_vars(f.arg)
    if isinstance(f, (AndF, OrF)):
        out = []
        for a in f.args:
            out.extend(_quantified_vars(a))
        return out
    return [f.var] + _quantified_vars(f.body)


def witness_ranges(f: Formula, bound: int, rounds: int = 8) -> dict[str, int]:
    """Sound per-quantifier windows from coefficient bounds.

    Iterates R(v) = delta_v + 1 + max over atoms of (|const| + sum of
    |coef|*R(other)) / |coef_v| to a post-fixpoint; BudgetExceededError when
    the iteration does not stabilize (mutually unbounded quantifiers).
    """
    atoms = _atoms_of(f)
    qvars = _quantified_vars(f)
    ranges: dict[str, int] = {v: bound for v in free_variables(f)}
    delta: dict[str, int] = {}
    for v in qvars:
        d = 1
        for a in atoms:
            if a.kind == DIV and a.term.coeff(v) != 0:
                d = d * a.modulus // _gcd(d, a.modulus)
        delta[v] = d
        ranges[v] = 0

    def step() -> dict[str, int]:
        out = dict(ranges)
        for v in qvars:
            m = 0
            for a in atoms:
                c = a.term.coeff(v)
                if c == 0:
                    continue
                acc = abs(a.term.const)
                for n2, c2 in a.term.coeffs:
                    if n2 != v:
                        acc += abs(c2) * ranges[n2]
                m = max(m, -(-acc // abs(c)))
            out[v] = delta[v] + 1 + m
        return out

    for _ in range(rounds):
        new = step()
        if new == ranges:
            return {v: ranges[v] for v in qvars}
        ranges = new
    # verify post-fixpoint anyway (one extra round must not grow)
    if step() == ranges:
        return {v: ranges[v] for v in qvars}
    raise BudgetExceededError("quantifier windows do not stabilize")


def brute_force_qe(
    f: Formula, bound: int, budget: int = 50_000_000
) -> BoxTable:
    """Exhaustive truth table of f over the box, expanding each quantifier
    over its derived window.  Only for use by equivalent_on_box."""
    if _quantifier_depth(f) > 3:
        raise BudgetExceededError("quantifier depth exceeds 3")
    fvars = tuple(sorted(free_variables(f)))
    if len(fvars) > 3:
        raise BudgetExceededError("more than 3 free variables")
    qranges = witness_ranges(f, bound)

    axis_of: dict[str, int] = {v: i for i, v in enumerate(fvars)}
    sizes: list[int] = [2 * bound + 1] * len(fvars)
    for v in _quantified_vars(f):
        axis_of[v] = len(sizes)
        sizes.append(2 * qranges[v] + 1)

    # budget: peak tensor size along any quantifier nesting path
    def path_cells(g: Formula, cells: int) -> int:
        if isinstance(g, (TrueF, FalseF, AtomF)):
            return cells
        if isinstance(g, NotF):
            return path_cells(g.arg, cells)
        if isinstance(g, (AndF, OrF)):
            return max(path_cells(a, cells) for a in g.args)
        return path_cells(g.body, cells * sizes[axis_of[g.var]])

    base_cells = 1
    for s in sizes[: len(fvars)]:
        base_cells *= s
    if path_cells(f, base_cells) > budget:
        raise BudgetExceededError("expansion exceeds the cell budget")

    naxes = len(sizes)

    def grid(v: str) -> np.ndarray:
        half = (sizes[axis_of[v]] - 1) // 2
        vals = np.arange(-half, half + 1, dtype=np.int64)
        view = [1] * naxes
        view[axis_of[v]] = sizes[axis_of[v]]
        return vals.reshape(view)

    def rec(g: Formula) -> np.ndarray:
        if isinstance(g, TrueF):
            return np.ones((1,) * naxes, dtype=bool)
        if isinstance(g, FalseF):
            return np.zeros((1,) * naxes, dtype=bool)
        if isinstance(g, AtomF):
            atom = g.atom
            total = np.full((1,) * naxes, atom.term.const, dtype=np.int64)
            for n2, c2 in atom.term.coeffs:
                total = total + c2 * grid(n2)
            if atom.kind == GEQ0:
                return total >= 0
            if atom.kind == EQ0:
                return total == 0
            return (total % atom.modulus) == 0
        if isinstance(g, NotF):
            return ~rec(g.arg)
        if isinstance(g, AndF):
            out = rec(g.args[0])
            for a in g.args[1:]:
                out = out & rec(a)
            return out
        if isinstance(g, OrF):
            out = rec(g.args[0])
            for a in g.args[1:]:
                out = out | rec(a)
            return out
        axis = axis_of[g.var]
        inner = rec(g.body)
        if isinstance(g, ExistsF):
            return inner.any(axis=axis, keepdims=True)
        return inner.all(axis=axis, keepdims=True)

    table = rec(f)
    # quantifier axes are size 1 after the reductions; free axes may still be
    # size 1 when a variable was irrelevant, so broadcast then drop the rest
    want = tuple(sizes[: len(fvars)]) + (1,) * (naxes - len(fvars))
    table = np.broadcast_to(table, want).reshape(tuple(sizes[: len(fvars)]))
    return BoxTable(fvars, bound, table.copy())
