"""Exact rational algebra: affine forms and multivariate polynomials.

Everything here is immutable and built on fractions.Fraction; no floats
anywhere.  These are the carriers for bases of rectilinear pieces, weights,
exponents of measure functions, and counting polynomials.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Mapping, Union

Rat = Union[int, Fraction]


def frac(x: Rat) -> Fraction:
    return x if isinstance(x, Fraction) else Fraction(x)


def format_rational(q: Rat) -> str:
    """Render a rational as "a/b" in lowest terms (just "a" when b = 1)."""
    q = frac(q)
    if q.denominator == 1:
        return str(q.numerator)
    return f"{q.numerator}/{q.denominator}"


def parse_rational(text: str) -> Fraction:
    text = text.strip()
    if "/" in text:
        num, den = text.split("/", 1)
        return Fraction(int(num), int(den))
    return Fraction(int(text))


@dataclass(frozen=True)
class AffineForm:
    """A rational affine form  sum_i c_i * x_i + const  over named variables."""

    coeffs: tuple[tuple[str, Fraction], ...]  # sorted by name, no zero entries
    const: Fraction

    @staticmethod
    def make(coeffs: Mapping[str, Rat] | None = None, const: Rat = 0) -> AffineForm:
        items = []
        for name, c in sorted((coeffs or {}).items()):
            c = frac(c)
            if c != 0:
                items.append((name, c))
        return AffineForm(tuple(items), frac(const))

    @staticmethod
    def constant(c: Rat) -> AffineForm:
        return AffineForm((), frac(c))

    @staticmethod
    def variable(name: str) -> AffineForm:
        return AffineForm(((name, Fraction(1)),), Fraction(0))

    def coeff(self, name: str) -> Fraction:
        for n, c in self.coeffs:
            if n == name:
                return c
        return Fraction(0)

    def variables(self) -> tuple[str, ...]:
        return tuple(n for n, _ in self.coeffs)

    def is_constant(self) -> bool:
        return not self.coeffs

    def __add__(self, other: AffineForm | Rat) -> AffineForm:
        if isinstance(other, (int, Fraction)):
            return AffineForm(self.coeffs, self.const + frac(other))
        d = dict(self.coeffs)
        for n, c in other.coeffs:
            d[n] = d.get(n, Fraction(0)) + c
        return AffineForm.make(d, self.const + other.const)

    def __sub__(self, other: AffineForm | Rat) -> AffineForm:
        if isinstance(other, (int, Fraction)):
            return AffineForm(self.coeffs, self.const - frac(other))
        return self + other.scale(-1)

    def scale(self, k: Rat) -> AffineForm:
        k = frac(k)
        if k == 0:
            return AffineForm((), Fraction(0))
        return AffineForm(tuple((n, c * k) for n, c in self.coeffs), self.const * k)

    def substitute(self, name: str, value: AffineForm) -> AffineForm:
        c = self.coeff(name)
        if c == 0:
            return self
        rest = AffineForm.make({n: v for n, v in self.coeffs if n != name}, self.const)
        return rest + value.scale(c)

    def evaluate(self, point: Mapping[str, Rat]) -> Fraction:
        total = self.const
        for n, c in self.coeffs:
            total += c * frac(point[n])
        return total

    def denominator_lcm(self) -> int:
        d = self.const.denominator
        for _, c in self.coeffs:
            d = d * c.denominator // gcd_int(d, c.denominator)
        return d

    def to_polynomial(self) -> Polynomial:
        terms = {(): self.const} if self.const != 0 else {}
        for n, c in self.coeffs:
            terms[((n, 1),)] = c
        return Polynomial.make(terms)

    def __str__(self) -> str:
        parts = []
        for n, c in self.coeffs:
            if c == 1:
                parts.append(("+", n))
            elif c == -1:
                parts.append(("-", n))
            elif c > 0:
                parts.append(("+", f"{format_rational(c)}*{n}"))
            else:
                parts.append(("-", f"{format_rational(-c)}*{n}"))
        if self.const != 0 or not parts:
            sign = "+" if self.const >= 0 else "-"
            parts.append((sign, format_rational(abs(self.const))))
        out = parts[0][1] if parts[0][0] == "+" else "-" + parts[0][1]
        for sign, text in parts[1:]:
            out += f" {sign} {text}"
        return out


def gcd_int(a: int, b: int) -> int:
    while b:
        a, b = b, a % b
    return abs(a)


Monomial = tuple[tuple[str, int], ...]  # sorted by variable, exponents >= 1


@dataclass(frozen=True)
class Polynomial:
    """Multivariate polynomial with Fraction coefficients, canonical storage."""

    terms: tuple[tuple[Monomial, Fraction], ...]

    @staticmethod
    def make(terms: Mapping[Monomial, Rat]) -> Polynomial:
        cleaned = {}
        for mono, c in terms.items():
            c = frac(c)
            if c != 0:
                cleaned[tuple(sorted(mono))] = c
        ordered = tuple(sorted(cleaned.items(), key=lambda kv: _mono_key(kv[0])))
        return Polynomial(ordered)

    @staticmethod
    def constant(c: Rat) -> Polynomial:
        c = frac(c)
        return Polynomial(((((), c)),) if c != 0 else ())

    @staticmethod
    def variable(name: str) -> Polynomial:
        return Polynomial(((((name, 1),), Fraction(1)),))

    def is_zero(self) -> bool:
        return not self.terms

    def is_constant(self) -> bool:
        return all(m == () for m, _ in self.terms)

    def constant_value(self) -> Fraction:
        for m, c in self.terms:
            if m == ():
                return c
        return Fraction(0)

    def variables(self) -> set[str]:
        out: set[str] = set()
        for m, _ in self.terms:
            out.update(n for n, _ in m)
        return out

    def degree(self, name: str | None = None) -> int:
        best = 0
        for m, _ in self.terms:
            if name is None:
                best = max(best, sum(e for _, e in m))
            else:
                best = max(best, dict(m).get(name, 0))
        return best

    def __add__(self, other: Polynomial) -> Polynomial:
        d = dict(self.terms)
        for m, c in other.terms:
            d[m] = d.get(m, Fraction(0)) + c
        return Polynomial.make(d)

    def __sub__(self, other: Polynomial) -> Polynomial:
        return self + other.scale(-1)

    def __mul__(self, other: Polynomial) -> Polynomial:
        d: dict[Monomial, Fraction] = {}
        for m1, c1 in self.terms:
            for m2, c2 in other.terms:
                m = _mono_mul(m1, m2)
                d[m] = d.get(m, Fraction(0)) + c1 * c2
        return Polynomial.make(d)

    def scale(self, k: Rat) -> Polynomial:
        k = frac(k)
        if k == 0:
            return Polynomial(())
        return Polynomial(tuple((m, c * k) for m, c in self.terms))

    def power(self, e: int) -> Polynomial:
        out = Polynomial.constant(1)
        for _ in range(e):
            out = out * self
        return out

    def substitute_affine(self, name: str, value: AffineForm) -> Polynomial:
        """Replace a variable by an affine form, expanding powers."""
        vp = value.to_polynomial()
        out = Polynomial(())
        powers = {0: Polynomial.constant(1)}
        for m, c in self.terms:
            md = dict(m)
            e = md.pop(name, 0)
            if e not in powers:
                prev = max(powers)
                cur = powers[prev]
                for k in range(prev + 1, e + 1):
                    cur = cur * vp
                    powers[k] = cur
            rest = Polynomial(((tuple(sorted(md.items())), c),))
            out = out + rest * powers[e]
        return out

    def evaluate(self, point: Mapping[str, Rat]) -> Fraction:
        total = Fraction(0)
        for m, c in self.terms:
            val = c
            for n, e in m:
                val *= frac(point[n]) ** e
            total += val
        return total

    def as_affine(self) -> AffineForm | None:
        """Return the equivalent affine form, or None if degree > 1."""
        coeffs: dict[str, Fraction] = {}
        const = Fraction(0)
        for m, c in self.terms:
            if m == ():
                const = c
            elif len(m) == 1 and m[0][1] == 1:
                coeffs[m[0][0]] = c
            else:
                return None
        return AffineForm.make(coeffs, const)

    def __str__(self) -> str:
        if not self.terms:
            return "0"
        parts = []
        for m, c in self.terms:
            body = "*".join(n if e == 1 else f"{n}^{e}" for n, e in m)
            if not body:
                text = format_rational(abs(c))
            elif abs(c) == 1:
                text = body
            else:
                text = f"{format_rational(abs(c))}*{body}"
            parts.append(("+" if c > 0 else "-", text))
        out = parts[0][1] if parts[0][0] == "+" else "-" + parts[0][1]
        for sign, text in parts[1:]:
            out += f" {sign} {text}"
        return out


def _mono_mul(m1: Monomial, m2: Monomial) -> Monomial:
    d = dict(m1)
    for n, e in m2:
        d[n] = d.get(n, 0) + e
    return tuple(sorted(d.items()))


def _mono_key(m: Monomial):
    return (sum(e for _, e in m), m)


def binomial(n: int, k: int) -> int:
    if k < 0 or k > n:
        return 0
    out = 1
    for i in range(k):
        out = out * (n - i) // (i + 1)
    return out


def power_fraction(base: int, exponent: Rat) -> Fraction:
    """Exact base**exponent for integer exponents (exponent must be integral)."""
    e = frac(exponent)
    if e.denominator != 1:
        raise ValueError(f"non-integer exponent {e} for exact power")
    n = e.numerator
    if n >= 0:
        return Fraction(base**n)
    return Fraction(1, base ** (-n))


def geometric_tail_sums(q: Fraction, max_degree: int) -> list[Fraction]:
    """T_j = sum_{i>=0} i^j q^i for j = 0..max_degree, requires 0 < q < 1."""
    if not (0 < q < 1):
        raise ValueError("geometric tail requires 0 < q < 1")
    sums: list[Fraction] = [Fraction(1) / (1 - q)]
    for j in range(1, max_degree + 1):
        acc = Fraction(0)
        for i in range(j):
            acc += binomial(j, i) * sums[i]
        sums.append(q * acc / (1 - q))
    return sums


def faulhaber(max_degree: int, upper: Polynomial) -> list[Polynomial]:
    """F_j = sum_{i=0}^{K} i^j as polynomials in K, for j = 0..max_degree.

    Uses the telescoping identity (K+1)^{j+1} = sum_i C(j+1,i) F_i(K).
    """
    kplus1 = upper + Polynomial.constant(1)
    out: list[Polynomial] = []
    for j in range(max_degree + 1):
        acc = kplus1.power(j + 1)
        for i in range(j):
            acc = acc - out[i].scale(binomial(j + 1, i))
        out.append(acc.scale(Fraction(1, j + 1)))
    return out


def bounded_power_sums(q: Fraction, max_degree: int) -> list[tuple[Fraction, list[Fraction]]]:
    """Closed forms for S_j(K) = sum_{i=0}^{K} i^j q^i with q != 1.

    Returns, for each j, a pair (A_j, B_j) with S_j(K) = A_j + q^{K+1} * B_j(K),
    where B_j is a polynomial in K given by its coefficient list (low degree
    first).  The identity is algebraic in K and valid for every q != 1.
    """
    if q == 1:
        raise ValueError("q = 1 handled by faulhaber")
    one_minus = 1 - q
    results: list[tuple[Fraction, list[Fraction]]] = []
    for j in range(max_degree + 1):
        if j == 0:
            a = Fraction(1) / one_minus
            b = [Fraction(-1) / one_minus]
        else:
            a = Fraction(0)
            b = [Fraction(0)] * (j + 1)
            for i in range(j):
                c = binomial(j, i)
                ai, bi = results[i]
                a += c * ai
                for d, coef in enumerate(bi):
                    b[d] += c * coef
            a = q * a / one_minus
            b = [q * coef / one_minus for coef in b]
            # subtract q^{K+1} (K+1)^j / (1-q): expand (K+1)^j in K
            for d in range(j + 1):
                b[d] -= Fraction(binomial(j, d)) / one_minus
        results.append((a, b))
    return results
