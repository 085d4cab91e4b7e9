"""Acceptance gate: each criterion prints one pass/fail line.

Every check is exact rational arithmetic; the only tolerances are the stated
bracket widths of the brute-force measure oracle.  Run with `pytest -s
tests/test_acceptance.py` to see the per-criterion lines.
"""

import random
import time
from fractions import Fraction

from padicmeasure.measure import BoxCell, Coordinate, PAdicContext, Weight
from padicmeasure.oracle import BudgetExceededError, brute_force_qe, truncated_measure
from padicmeasure.presburger import (
    LinearTerm,
    conj,
    equivalent_on_box,
    parse,
    qe,
)
from padicmeasure.ring import (
    Presentation,
    add,
    ball_presentation,
    decide_equal,
    delta_presentation,
    measure_function,
    multiply,
    normalize_to_basic,
    raise_level,
    scalar_mul,
    shift_lambda,
    split_first_generator,
    translate_centers,
    verify_certificate,
    weighted_presentation,
    with_unit_ball,
)
from padicmeasure.semilinear import count_parametric, enumerate_fiber, to_cells

from generators import (
    random_convergent_presentation,
    random_finite_family,
    random_formula,
)

PRIMES = (2, 3, 5, 7)


def _report(number: int, name: str, failures: list) -> None:
    status = "PASS" if not failures else "FAIL"
    print(f"[criterion {number:02d}] {status} {name}")
    assert not failures, f"criterion {number} ({name}): {failures[:3]}"


# --- presentations under test, reproducible for the oracle criterion --------


def presentations_criterion_1():
    for p in PRIMES:
        ctx = PAdicContext(p)
        for n in (1, 2, 3, 4):
            yield p, n, delta_presentation(ctx, n)


def presentations_criterion_2():
    for p in PRIMES:
        ctx = PAdicContext(p)
        for c in range(-5, 6):
            yield p, c, ball_presentation(ctx, c)


def _random_level_lambda(rng):
    n = rng.randint(1, 3)
    lams = tuple(f"l{i + 1}" for i in range(n))
    atoms = []
    for i, name in enumerate(lams):
        var = LinearTerm.variable(name)
        lower = rng.randint(-2, 2)
        from padicmeasure.presburger import AtomF, divides, geq0

        atoms.append(AtomF(geq0(var - lower)))
        if rng.random() < 0.5:
            atoms.append(AtomF(geq0(LinearTerm.constant(lower + rng.randint(0, 4)) - var)))
        if rng.random() < 0.3:
            m = rng.randint(2, 3)
            atoms.append(AtomF(divides(m, var - rng.randint(0, m - 1))))
    return lams, conj(atoms)


def _leveled_cell(ctx, lams, lam_formula, level_first: int):
    coords = tuple(
        Coordinate(Fraction(0), level_first if i == 0 else 1, 1)
        for i in range(len(lams))
    )
    return BoxCell(coords, lams, lam_formula, None)


def presentations_criterion_3():
    rng = random.Random(303)
    for case in range(20):
        p = rng.choice((2, 3, 5))
        ctx = PAdicContext(p)
        lams, lam_formula = _random_level_lambda(rng)
        base = Presentation(ctx, (), parse("true"),
                            ((Fraction(1), _leveled_cell(ctx, lams, lam_formula, 1)),))
        leveled = {
            level: Presentation(ctx, (), parse("true"),
                                ((Fraction(1), _leveled_cell(ctx, lams, lam_formula, level)),))
            for level in (1, 2, 3)
        }
        yield p, base, leveled


def presentations_criterion_4():
    rng = random.Random(404)
    for case in range(20):
        p = rng.choice((2, 3))
        ctx = PAdicContext(p)
        left = _finite_weighted(rng, ctx)
        right = _finite_weighted(rng, ctx)
        yield ctx, left, right


def _finite_weighted(rng, ctx):
    while True:
        f, lams, params, domain = random_finite_family(rng)
        if params == ["s"]:
            break
    b = {v: rng.randint(-2, 2) for v in lams}
    c = LinearTerm.constant(rng.randint(-2, 2))
    return weighted_presentation(ctx, f, Weight.make(1, c, b), params, domain)


def presentations_criterion_5():
    d3 = delta_presentation(PAdicContext(2), 3)
    yield Fraction(3, 7), add(add(d3, d3), d3)
    yield Fraction(1, 2), delta_presentation(PAdicContext(3), 1)
    rng = random.Random(505)
    for _ in range(30):
        p = rng.choice((2, 3, 5))
        ctx = PAdicContext(p)
        c = rng.randint(-4, 4)
        n = rng.randint(1, 4)
        combo = multiply(ball_presentation(ctx, -c), delta_presentation(ctx, n))
        yield Fraction(p) ** c / (p**n - 1), combo


def presentations_criterion_8():
    rng = random.Random(808)
    for _ in range(50):
        ctx = PAdicContext(rng.choice((2, 3, 5)))
        yield random_convergent_presentation(rng, ctx)


CHAIN_REWRITES = (
    lambda rng, pres: with_unit_ball(pres),
    lambda rng, pres: translate_centers(pres, Fraction(rng.randint(-3, 3))),
    lambda rng, pres: raise_level(pres, rng.randint(2, 3)),
    lambda rng, pres: shift_lambda(pres, rng.randint(1, 3)),
)


def presentations_criterion_9():
    rng = random.Random(909)
    for case in range(50):
        p = rng.choice((2, 3))
        ctx = PAdicContext(p)
        if rng.random() < 0.5:
            seed = delta_presentation(ctx, rng.randint(1, 2))
        else:
            seed = ball_presentation(ctx, rng.randint(-2, 2))
        current = seed
        for _ in range(rng.randint(2, 4)):
            roll = rng.randrange(len(CHAIN_REWRITES) + 1)
            if roll == len(CHAIN_REWRITES):
                if current.generators[0][1].lambda_vars:
                    var = current.generators[0][1].lambda_vars[0]
                    current, _ = split_first_generator(
                        current, parse(f"2 | {var}"))
                continue
            current, _ = CHAIN_REWRITES[roll](rng, current)
        yield rng, ctx, seed, current


# --- the criteria ------------------------------------------------------------


def test_criterion_01_delta_identity():
    started = time.time()
    failures = []
    for p, n, pres in presentations_criterion_1():
        value = measure_function(pres).evaluate({})
        if value != Fraction(1, p**n - 1):
            failures.append((p, n, value))
    elapsed = time.time() - started
    if elapsed >= 1.0:
        failures.append(("runtime", elapsed))
    _report(1, f"(p^n - 1) * measure(P(Delta_n)) = 1, runtime {elapsed:.2f}s", failures)


def test_criterion_02_ball_classes():
    failures = []
    for p, c, pres in presentations_criterion_2():
        value = measure_function(pres).evaluate({})
        if value != Fraction(p) ** (-c):
            failures.append((p, c, value))
    _report(2, "measure(p^c Zp) = p^(-c) for |c| <= 5, all four primes", failures)


def test_criterion_03_level_identity():
    failures = []
    for p, base, leveled in presentations_criterion_3():
        for level, pres in leveled.items():
            scale = Fraction(p) ** (level - 1)
            verdict = decide_equal(scalar_mul(scale, pres), base)
            if not verdict:
                failures.append((p, level, verdict))
    _report(3, "p^(l-1) * measure(P_l(Lambda)) = measure(P(Lambda))", failures)


def test_criterion_04_fiber_products():
    rng = random.Random(44)
    failures = []
    for ctx, left, right in presentations_criterion_4():
        prod = multiply(left, right)
        mf_left = measure_function(left)
        mf_right = measure_function(right)
        mf_prod = measure_function(prod)
        for _ in range(20):
            point = {"s": rng.randint(0, 30)}
            want = mf_left.evaluate(point) * mf_right.evaluate(point)
            got = mf_prod.evaluate(point)
            if want != got:
                failures.append((point, want, got))
    _report(4, "fiber products multiply measures at 20 sampled points, 20 pairs", failures)


def test_criterion_05_corollary_range():
    failures = []
    for want, pres in presentations_criterion_5():
        got = measure_function(pres).evaluate({})
        if got != want:
            failures.append((want, got))
    _report(5, "constructed presentations hit 3/7, 1/2, and p^c/(p^n - 1)", failures)


def test_criterion_06_qe_equivalence():
    started = time.time()
    rng = random.Random(606)
    failures = []
    checked = 0
    while checked < 200:
        formula = random_formula(rng, max_quantifiers=3, max_free=3, coeff_bound=5)
        try:
            table = brute_force_qe(formula, 15)
        except BudgetExceededError:
            continue
        if not equivalent_on_box(qe(formula), table, 15):
            failures.append(formula)
        checked += 1
    elapsed = time.time() - started
    if elapsed >= 60.0:
        failures.append(("runtime", elapsed))
    _report(6, f"200 random formulas agree with the brute table, {elapsed:.1f}s", failures)


def test_criterion_07_parametric_counting():
    rng = random.Random(707)
    failures = []
    for case in range(50):
        formula, lams, params, domain = random_finite_family(rng)
        cells = to_cells(formula, lams, params)
        counts = count_parametric(cells, domain, params)
        if len(params) == 1:
            points = [{params[0]: s} for s in range(41)]
        else:
            points = [{params[0]: s, params[1]: t} for s in range(41) for t in range(41)]
        for point in points:
            want = len(enumerate_fiber(cells, point))
            got = counts.evaluate(point)
            if want != got:
                failures.append((case, point, want, got))
                break
    _report(7, "count_parametric matches enumeration on [0,40]^k, 50 families", failures)


def test_criterion_08_normalization():
    rng = random.Random(88)
    failures = []
    for index, pres in enumerate(presentations_criterion_8()):
        ell, basic, cert = normalize_to_basic(pres)
        if not decide_equal(scalar_mul(ell, pres), basic.presentation):
            failures.append((index, "not equal"))
            continue
        if not verify_certificate(cert):
            failures.append((index, "certificate"))
            continue
        if len(basic.fiber_counts) != len(basic.presentation.generators):
            failures.append((index, "missing fiber certificates"))
            continue
        for counts in basic.fiber_counts:
            point = {v: rng.randint(0, 10) for v in pres.param_vars}
            value = counts.evaluate(point)
            if value != int(value) or value < 0:
                failures.append((index, "bad count", point, value))
    _report(8, "normalize_to_basic: equality, certificates, finite fibers (50 runs)", failures)


def test_criterion_09_equality_decider_desk_scale():
    failures = []
    for rng, ctx, seed, derived in presentations_criterion_9():
        verdict = decide_equal(seed, derived)
        if not verdict:
            failures.append(("chain not equal", verdict))
            continue
        delta = Fraction(rng.randint(1, 5), rng.randint(1, 4)) * rng.choice((1, -1))
        flipped = None
        for index, (coeff, cell) in enumerate(derived.generators):
            gens = list(derived.generators)
            gens[index] = (coeff + delta, cell)
            candidate = Presentation(ctx, derived.param_vars, derived.param_domain,
                                     tuple(gens))
            outcome = decide_equal(seed, candidate)
            if not outcome:
                flipped = outcome
                break
        if flipped is None:
            failures.append(("no perturbation detected", delta))
            continue
        if flipped.value1 == flipped.value2:
            failures.append(("witness values equal", flipped))
    _report(9, "rule chains stay Equal; coefficient perturbations flip with witness", failures)


def test_criterion_10_oracle_containment():
    rng = random.Random(1010)
    failures = []
    registry = []
    for _, _, pres in presentations_criterion_1():
        registry.append(pres)
    for _, _, pres in presentations_criterion_2():
        registry.append(pres)
    for _, base, leveled in presentations_criterion_3():
        registry.append(base)
        registry.extend(leveled.values())
    for _, left, right in presentations_criterion_4():
        registry.extend((left, right))
    for _, pres in presentations_criterion_5():
        registry.append(pres)
    for pres in presentations_criterion_8():
        registry.append(pres)
    for _, _, seed, derived in presentations_criterion_9():
        registry.extend((seed, derived))

    for index, pres in enumerate(registry):
        mf = measure_function(pres)
        n = max((len(c.lambda_vars) for _, c in pres.generators), default=0)
        if pres.param_vars:
            points = [{v: rng.randint(0, 12) for v in pres.param_vars} for _ in range(5)]
        else:
            points = [{}]
        for point in points:
            bracket = truncated_measure(pres, point, depth=8, window=12)
            value = mf.evaluate(point)
            if value not in bracket:
                failures.append((index, point, "containment"))
            if bracket.width > Fraction(pres.ctx.p) ** (n - 8):
                failures.append((index, point, "width", bracket.width))
    _report(10, f"depth-8 brackets contain exact values ({len(registry)} presentations)",
            failures)
