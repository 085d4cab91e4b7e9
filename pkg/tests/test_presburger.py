import random

import pytest

from padicmeasure.presburger import (
    AtomF,
    FormulaSyntaxError,
    LinearTerm,
    MissingAssignmentError,
    NotQuantifierFreeError,
    ScopeError,
    TRUE,
    divides,
    equivalent_on_box,
    evaluate_qf,
    format_formula,
    free_variables,
    is_quantifier_free,
    is_satisfiable,
    parse,
    parse_term,
    qe,
    simplify,
)
from padicmeasure.oracle import BudgetExceededError, brute_force_qe

from generators import random_formula

# table of (text, canonical reprint); parse then print must round-trip
PARSE_TABLE = {
    "E x. a = 2*x": "E x. a - 2*x = 0",
    "0 <= l /\\ l < 5": "l >= 0 /\\ -l + 4 >= 0",
    "x != 3": "!x - 3 = 0",
    "3 | 2*x - 1": "3 | 2*x - 1",
    "-3 | x": "3 | x",
    "1 | x": "true",
    "0 | x - 2": "x - 2 = 0",
    "A y. y >= 0 \\/ y < 0": "A y. y >= 0 \\/ -y - 1 >= 0",
    "!(x >= 0 /\\ y >= 0)": "!(x >= 0 /\\ y >= 0)",
    "2*x + -3 >= x*4 - 1": "-2*x - 2 >= 0",
    "true /\\ x = x": "true /\\ 0 = 0",
}


@pytest.mark.parametrize("text,expected", sorted(PARSE_TABLE.items()))
def test_parse_prints_canonically(text, expected):
    ast = parse(text)
    assert format_formula(ast) == expected
    assert parse(format_formula(ast)) == ast


def test_parse_errors_carry_positions():
    with pytest.raises(FormulaSyntaxError) as err:
        parse("l < ")
    assert err.value.lineno == 1 and err.value.offset == 5
    with pytest.raises(FormulaSyntaxError):
        parse("x * y >= 0")  # nonlinear product
    with pytest.raises(FormulaSyntaxError):
        parse("E true. true = 0")
    with pytest.raises(FormulaSyntaxError):
        parse("(x >= 0")
    with pytest.raises(FormulaSyntaxError):
        parse("x | y")  # modulus must be a literal
    with pytest.raises(ScopeError):
        parse("E x. E x. x = 0")


def test_parse_term_round_trip():
    t = parse_term("2*x - 3*y + 7")
    assert t.coeff("x") == 2 and t.coeff("y") == -3 and t.const == 7
    assert parse_term(str(t)) == t


def test_evaluate_qf_examples():
    assert evaluate_qf(parse("2 | t"), {"t": 4}) is True
    assert evaluate_qf(parse("x >= 0 /\\ x = 3"), {"x": -1}) is False
    with pytest.raises(NotQuantifierFreeError):
        evaluate_qf(parse("E y. y = x"), {"x": 0})
    with pytest.raises(MissingAssignmentError):
        evaluate_qf(parse("x + y >= 0"), {"x": 0})


def test_qe_divisibility_example():
    out = qe(parse("E x. a = 2*x"))
    assert format_formula(out) == "2 | a"


def test_qe_interval_example():
    out = qe(parse("E x. x >= 0 /\\ x <= a"))
    assert format_formula(out) == "a >= 0"


def test_qe_two_sided_example():
    f = parse("E x. 2*x >= a /\\ 3*x <= b")
    out = qe(f)
    assert is_quantifier_free(out)
    for a in range(-15, 16):
        for b in range(-15, 16):
            truth = any(2 * x >= a and 3 * x <= b for x in range(-60, 61))
            assert evaluate_qf(out, {"a": a, "b": b}) == truth


def test_qe_keeps_or_shrinks_free_variables():
    f = parse("E x. x = a + b")
    assert free_variables(qe(f)) <= {"a", "b"}
    assert qe(parse("E x. x >= y")) == TRUE


def test_forall_via_not_exists():
    f = parse("A x. 2 | x \\/ 2 | x + 1")
    assert qe(f) == TRUE
    g = parse("A x. x >= a")
    assert qe(g) == parse("false")


def test_equivalent_on_box_examples():
    assert equivalent_on_box(parse("x >= 0"), parse("!(0 - x >= 1)"), 10)
    assert not equivalent_on_box(parse("2 | x"), TRUE, 1)
    assert equivalent_on_box(qe(parse("E y. x = 2*y")), parse("2 | x"), 20)
    with pytest.raises(NotQuantifierFreeError):
        equivalent_on_box(parse("E y. y = x"), TRUE, 3)


def test_simplify_folds_and_dedups():
    f = parse("x >= 0 /\\ x >= 3 /\\ x >= 0")
    assert simplify(f) == parse("x - 3 >= 0")
    assert simplify(parse("x >= 0 /\\ 0 - x >= 1")) == parse("false")
    assert simplify(parse("4 | 2*x + 2")) == parse("2 | x + 1")
    assert simplify(parse("2*x + 3 = 0")) == parse("false")
    assert simplify(parse("3*x - 6 = 0")) == parse("x - 2 = 0")


def test_is_satisfiable():
    assert is_satisfiable(parse("x > 5 /\\ 2 | x"))
    assert not is_satisfiable(parse("x > 5 /\\ x < 3"))
    assert is_satisfiable(parse("E x. 3*x = a") & parse("a = 6"))


def test_qe_matches_brute_force_on_random_formulas():
    rng = random.Random(20260808)
    checked = 0
    while checked < 40:
        f = random_formula(rng)
        try:
            table = brute_force_qe(f, 8)
        except BudgetExceededError:
            continue
        out = qe(f)
        assert is_quantifier_free(out)
        assert equivalent_on_box(out, table, 8), format_formula(f)
        checked += 1


def test_qe_upper_boundary_branch():
    # more lower bounds than upper bounds selects the upper boundary set
    cases = [
        "E x. x >= a /\\ x >= b /\\ x >= c /\\ x <= a + 3",
        "E x. x >= a /\\ x >= b /\\ 2*x <= c",
        "A x. x <= a \\/ x <= b \\/ x >= c",
        "E x. x >= a /\\ x >= b /\\ x != c /\\ x <= 5",
        "E x. 3 | x - a /\\ x >= b /\\ x >= c /\\ x <= b + 7",
    ]
    for text in cases:
        f = parse(text)
        assert equivalent_on_box(qe(f), brute_force_qe(f, 7), 7), text


def test_qe_idempotent_up_to_equivalence():
    rng = random.Random(7)
    for _ in range(25):
        f = random_formula(rng, max_quantifiers=2, max_free=2)
        once = qe(f)
        twice = qe(once)
        assert equivalent_on_box(once, twice, 10)


def test_print_parse_evaluation_agreement():
    rng = random.Random(99)
    for _ in range(60):
        f = random_formula(rng, max_quantifiers=0)
        g = parse(format_formula(f))
        for _ in range(20):
            point = {v: rng.randint(-8, 8) for v in free_variables(f)}
            assert evaluate_qf(f, point) == evaluate_qf(g, point)


def test_linear_term_invariants():
    t = LinearTerm.make({"x": 1, "y": 0}, 3)
    assert t.coeffs == (("x", 1),)  # zero coefficients are never stored
    with pytest.raises(ValueError):
        LinearTerm.make({"2bad": 1})
    with pytest.raises(ValueError):
        LinearTerm.make({"true": 1})


def test_atom_invariants():
    with pytest.raises(ValueError):
        divides(1, LinearTerm.variable("x"))
    atom = divides(4, LinearTerm.make({"x": 6}, 2))
    assert simplify(AtomF(atom)) == AtomF(divides(2, LinearTerm.make({"x": 1}, 1)))
