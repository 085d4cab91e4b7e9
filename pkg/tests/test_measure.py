import random
from fractions import Fraction

import pytest

from padicmeasure.algebra import AffineForm, Polynomial
from padicmeasure.measure import (
    BoxCell,
    Coordinate,
    DegenerateCoordinate,
    DivergesError,
    InputError,
    INFINITY,
    MEASURE_ZERO,
    PAdicContext,
    Weight,
    ZeroInputError,
    ac_level,
    cell_to_weighted_sum,
    exp_poly_eval,
    exp_poly_is_zero,
    make_exp_polynomial,
    sum_closed_form,
    valuation,
)
from padicmeasure.presburger import TRUE, LinearTerm, parse
from padicmeasure.semilinear import OutOfDomainError

from generators import random_finite_family

CTX2 = PAdicContext(2)
CTX3 = PAdicContext(3)


def test_prime_validation():
    with pytest.raises(ValueError):
        PAdicContext(4)
    with pytest.raises(ValueError):
        PAdicContext(1)
    PAdicContext(97)


@pytest.mark.parametrize(
    "q,p,expected",
    [(12, 2, 2), (Fraction(1, 6), 3, -1), (0, 2, INFINITY), (Fraction(9, 4), 3, 2), (-8, 2, 3)],
)
def test_valuation(q, p, expected):
    assert valuation(q, PAdicContext(p)) == expected


def test_ac_level_examples():
    assert ac_level(12, 2, CTX2) == 3
    assert ac_level(1, 5, CTX3) == 1
    assert ac_level(Fraction(1, 3), 2, CTX2) == 3  # 3*3 = 9 = 1 mod 4
    assert (ac_level(Fraction(1, 3), 2, CTX2) * 3) % 4 == 1
    with pytest.raises(ZeroInputError):
        ac_level(0, 1, CTX2)


def unit_coord():
    return Coordinate(Fraction(0), 1, 1)


def test_cell_to_weighted_sum_natural_volume():
    cell = BoxCell((unit_coord(),), ("l1",), parse("l1 >= 0"))
    lam, w = cell_to_weighted_sum(cell, CTX2)
    assert w.affine() == AffineForm.make({"l1": -1}, -1)
    e = sum_closed_form(lam, w, TRUE, CTX2, [])
    assert exp_poly_eval(e, {}, CTX2) == Fraction(1, 2 - 1)
    assert exp_poly_eval(
        sum_closed_form(lam, w, TRUE, CTX3, []), {}, CTX3
    ) == Fraction(1, 3 - 1)


def test_degenerate_coordinate_is_measure_zero():
    cell = BoxCell((DegenerateCoordinate(Fraction(1, 2)), unit_coord()), ("l1",),
                   parse("l1 >= 0"))
    assert cell_to_weighted_sum(cell, CTX2) is MEASURE_ZERO


def test_level_two_point_cell():
    cell = BoxCell((Coordinate(Fraction(0), 2, 3),), ("l1",), parse("l1 = 0"))
    lam, w = cell_to_weighted_sum(cell, CTX2)
    e = sum_closed_form(lam, w, TRUE, CTX2, [])
    assert exp_poly_eval(e, {}, CTX2) == Fraction(1, 4)
    # cross-check with the depth-4 residue bracket
    from padicmeasure.oracle import truncated_measure
    from padicmeasure.ring import presentation

    bracket = truncated_measure(presentation(CTX2, [(1, cell)]), {}, depth=4)
    assert Fraction(1, 4) in bracket


def test_sum_geometric_tail():
    w = Weight.make(1, LinearTerm.constant(-1), {"l": -1})
    e = sum_closed_form(parse("l >= 0"), w, TRUE, CTX3, [])
    assert exp_poly_eval(e, {}, CTX3) == Fraction(1, 2)


def test_sum_divergence():
    with pytest.raises(DivergesError) as err:
        sum_closed_form(parse("l >= 0"), Weight.constant(0), TRUE, CTX2, [])
    assert err.value.direction == 1


def test_sum_family_against_partial_sums():
    w = Weight.make(1, LinearTerm.constant(-1), {"l": -1})
    e = sum_closed_form(parse("0 <= l /\\ l < s"), w, parse("s >= 0"), CTX2, ["s"])
    for s in range(0, 31):
        want = sum(Fraction(2) ** (-l - 1) for l in range(s))
        got = exp_poly_eval(e, {"s": s}, CTX2) if s >= 1 else Fraction(0)
        if s == 0:
            with pytest.raises(OutOfDomainError):
                exp_poly_eval(e, {"s": 0}, CTX2)
        else:
            assert got == want


def test_weight_integrality_validation():
    half = Weight.make(2, LinearTerm.constant(0), {"l": -1})
    with pytest.raises(InputError):
        sum_closed_form(parse("l >= 0"), half, TRUE, CTX3, [])
    # with a parity congruence the same weight is fine
    e = sum_closed_form(parse("l >= 0 /\\ 2 | l"), half, TRUE, CTX3, [])
    assert exp_poly_eval(e, {}, CTX3) == Fraction(3, 2)


def test_cell_weight_validation_runs_in_cell_to_weighted_sum():
    bad = Weight.make(2, LinearTerm.constant(1), {"l1": 2})
    cell = BoxCell((unit_coord(),), ("l1",), parse("l1 >= 0"), bad)
    with pytest.raises(InputError):
        cell_to_weighted_sum(cell, CTX2)


def test_exp_poly_eval_constant_and_domain():
    one = make_exp_polynomial(2, (), [(TRUE, Polynomial.constant(1), AffineForm.constant(0))])
    assert exp_poly_eval(one, {}, CTX2) == 1
    guarded = make_exp_polynomial(
        2, ("s",), [(parse("s >= 0"), Polynomial.constant(1), AffineForm.constant(0))]
    )
    with pytest.raises(OutOfDomainError):
        exp_poly_eval(guarded, {"s": -1}, CTX2)


def test_exp_poly_eval_family_value():
    g = parse("s >= 0")
    e = make_exp_polynomial(
        2,
        ("s",),
        [
            (g, Polynomial.constant(1), AffineForm.constant(0)),
            (g, Polynomial.constant(-1), AffineForm.make({"s": -1})),
        ],
    )
    assert exp_poly_eval(e, {"s": 2}, CTX2) == Fraction(3, 4)
    scaled = make_exp_polynomial(
        2, ("s",), [(g, t.poly.scale(Fraction(1, 1)), t.exponent) for t in e.terms]
    )
    assert scaled == e


def test_zero_test_empty_and_cancellation():
    empty = make_exp_polynomial(2, ("s",), [])
    assert exp_poly_is_zero(empty, TRUE, CTX2) is None
    g = parse("s >= 0")
    s_poly = Polynomial.variable("s")
    cancel = make_exp_polynomial(
        2, ("s",),
        [(g, s_poly, AffineForm.constant(0)), (g, s_poly.scale(-1), AffineForm.constant(0))],
    )
    assert cancel.terms == ()
    assert exp_poly_is_zero(cancel, TRUE, CTX2) is None


def test_zero_test_witness():
    g = parse("s >= 0")
    e = make_exp_polynomial(
        2, ("s",),
        [(g, Polynomial.constant(1), AffineForm.constant(0)),
         (g, Polynomial.constant(-1), AffineForm.make({"s": -1}))],
    )
    witness = exp_poly_is_zero(e, parse("s >= 0"), CTX2)
    assert witness is not None
    point = witness.as_dict()
    assert exp_poly_eval(e, point, CTX2) == witness.value != 0


def test_zero_test_cross_guard_cancellation():
    # identical values expressed with different exponent bookkeeping
    g = parse("s >= 1")
    e = make_exp_polynomial(
        2, ("s",),
        [(g, Polynomial.constant(2), AffineForm.make({"s": -1}, -1)),
         (g, Polynomial.constant(-1), AffineForm.make({"s": -1}))],
    )
    assert exp_poly_is_zero(e, parse("s >= 1"), CTX2) is None


def test_zero_test_polynomial_group_on_cone():
    # s*p^0 - s*p^0 + (s^2 - s*s) p^{-s} over N
    g = parse("s >= 0")
    s_poly = Polynomial.variable("s")
    e = make_exp_polynomial(
        2, ("s",),
        [(g, s_poly * s_poly, AffineForm.make({"s": -1})),
         (g, (s_poly * s_poly).scale(-1), AffineForm.make({"s": -1}, 0))],
    )
    assert exp_poly_is_zero(e, TRUE, CTX2) is None


def test_canonicalization_idempotent():
    raw = [
        (parse("s >= 0"), Polynomial.constant(1), AffineForm.make({"s": 1})),
        (parse("s >= 3"), Polynomial.constant(2), AffineForm.make({"s": 1}, 1)),
        (TRUE, Polynomial.variable("s"), AffineForm.constant(0)),
    ]
    e = make_exp_polynomial(2, ("s",), raw)
    again = make_exp_polynomial(2, ("s",), [(t.guard, t.poly, t.exponent) for t in e.terms])
    assert e == again


def test_monotonicity_in_weights():
    # coefficientwise-smaller weights give pointwise-smaller sums on
    # nonnegative fibers
    from padicmeasure.presburger import AtomF, conj, geq0

    rng = random.Random(5)
    for _ in range(15):
        f, lams, params, domain = random_finite_family(rng)
        f = conj([f] + [AtomF(geq0(LinearTerm.variable(v))) for v in lams])
        b_small = {v: rng.randint(-3, -1) for v in lams}
        b_big = {v: b_small[v] + rng.randint(0, 2) for v in lams}
        c_small = rng.randint(-3, 0)
        c_big = c_small + rng.randint(0, 2)
        w_small = Weight.make(1, LinearTerm.constant(c_small), b_small)
        w_big = Weight.make(1, LinearTerm.constant(c_big), b_big)
        e_small = sum_closed_form(f, w_small, domain, CTX2, params)
        e_big = sum_closed_form(f, w_big, domain, CTX2, params)
        for trial in range(8):
            point = {v: rng.randint(0, 12) for v in params}
            def val(e):
                try:
                    return exp_poly_eval(e, point, CTX2)
                except OutOfDomainError:
                    return Fraction(0)
            assert val(e_small) <= val(e_big), (f, point)


def test_fractional_exponent_classes_evaluate_exactly():
    w = Weight.make(2, LinearTerm.make({"s": -1}), {"l": -2})
    e = sum_closed_form(parse("l >= 0 /\\ 2 | s"), w, parse("s >= 0"), CTX2, ["s"])
    for s in range(0, 21, 2):
        assert exp_poly_eval(e, {"s": s}, CTX2) == Fraction(2) ** (-s // 2) * 2
