"""Exact symbolic expression ring.

Everything else in the package computes through this module.  An
:class:`Expression` is an immutable DAG whose nodes are rational constants,
coordinate variables ``t1..tn``, ``exp`` of a rational linear form in the
variables, ``log`` of a subexpression, sums, products, integer powers and
quotients.

Expressions that stay inside the Laurent ring

    Q[t1, .., tn, exp(l1), exp(l1)^-1, ...]      (li rational linear forms)

have a decidable canonical form (`normalize`): a sorted sum of monomials
``c * t^a * exp(sum l_i t_i)`` with integer exponents ``a`` and rational
exponential coefficients.  Two such expressions are equal as functions iff
they normalize identically; exact evaluation at rational points lands in the
ring of "exponential numbers" ``sum_j c_j exp(s_j)`` with rational ``c_j,
s_j``, where vanishing is again decidable term by term.

Log nodes are never normalized.  They are differentiated away; this is all
the rest of the package ever needs from them.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Optional, Union

from mpmath import mp, mpc, mpf, workdps

from .errors import (
    DivisionByZero,
    LogOfNonPositive,
    ParseError,
    UnassignedVariable,
    UnsupportedShape,
)

Rational = Union[int, Fraction]

_DEFAULT_DPS = 64


def default_dps() -> int:
    """Working decimal precision used when a caller does not pass one."""
    return _DEFAULT_DPS


def set_default_dps(dps: int) -> None:
    global _DEFAULT_DPS
    if dps < 15:
        raise ValueError("precision below 15 decimal digits is not supported")
    _DEFAULT_DPS = int(dps)


def to_mpf(x, dps: Optional[int] = None):
    """Convert a Fraction / int / float / mpf to an mpf at working precision."""
    with workdps(dps or _DEFAULT_DPS):
        if isinstance(x, Fraction):
            return mpf(x.numerator) / x.denominator
        if isinstance(x, ExpNumber):
            return x.to_mpf()
        return mpf(x) if not isinstance(x, (mpf, mpc)) else x


# ---------------------------------------------------------------------------
# exact exponential numbers
# ---------------------------------------------------------------------------


class ExpNumber:
    """Exact value ``sum_j c_j * exp(s_j)`` with rational ``c_j`` and ``s_j``.

    Values of exp-polynomials at rational points live here.  Distinct
    exponentials of rational numbers are linearly independent over Q, so the
    representation is canonical and vanishing is decidable.
    """

    __slots__ = ("terms",)

    def __init__(self, terms: dict):
        self.terms = {s: c for s, c in terms.items() if c != 0}

    @staticmethod
    def from_rational(c) -> "ExpNumber":
        return ExpNumber({Fraction(0): Fraction(c)})

    def is_zero(self) -> bool:
        return not self.terms

    def is_rational(self) -> bool:
        return all(s == 0 for s in self.terms)

    def as_rational(self) -> Fraction:
        if not self.terms:
            return Fraction(0)
        if not self.is_rational():
            raise UnsupportedShape("value has a genuine exponential part")
        return self.terms[Fraction(0)]

    def _coerce(self, other) -> Optional["ExpNumber"]:
        if isinstance(other, ExpNumber):
            return other
        if isinstance(other, (int, Fraction)):
            return ExpNumber.from_rational(other)
        return None

    def __add__(self, other):
        o = self._coerce(other)
        if o is None:
            return NotImplemented
        out = dict(self.terms)
        for s, c in o.terms.items():
            out[s] = out.get(s, Fraction(0)) + c
        return ExpNumber(out)

    __radd__ = __add__

    def __neg__(self):
        return ExpNumber({s: -c for s, c in self.terms.items()})

    def __sub__(self, other):
        o = self._coerce(other)
        if o is None:
            return NotImplemented
        return self + (-o)

    def __rsub__(self, other):
        o = self._coerce(other)
        if o is None:
            return NotImplemented
        return o + (-self)

    def __mul__(self, other):
        o = self._coerce(other)
        if o is None:
            return NotImplemented
        out: dict = {}
        for s1, c1 in self.terms.items():
            for s2, c2 in o.terms.items():
                s = s1 + s2
                out[s] = out.get(s, Fraction(0)) + c1 * c2
        return ExpNumber(out)

    __rmul__ = __mul__

    def inverse(self) -> "ExpNumber":
        if len(self.terms) != 1:
            raise UnsupportedShape("only single-term exponential numbers are invertible")
        (s, c), = self.terms.items()
        if c == 0:
            raise DivisionByZero("inverse of zero")
        return ExpNumber({-s: Fraction(1) / c})

    def __truediv__(self, other):
        o = self._coerce(other)
        if o is None:
            return NotImplemented
        return self * o.inverse()

    def __rtruediv__(self, other):
        o = self._coerce(other)
        if o is None:
            return NotImplemented
        return o * self.inverse()

    def __eq__(self, other):
        o = self._coerce(other)
        if o is None:
            return NotImplemented
        return self.terms == o.terms

    def __hash__(self):
        return hash(frozenset(self.terms.items()))

    def to_mpf(self, dps: Optional[int] = None):
        with workdps(dps or _DEFAULT_DPS):
            total = mpf(0)
            for s, c in sorted(self.terms.items()):
                total += to_mpf(c) * mp.e ** to_mpf(s)
            return total

    def __repr__(self):
        if not self.terms:
            return "ExpNumber(0)"
        bits = [f"{c}*e^({s})" if s else str(c) for s, c in sorted(self.terms.items())]
        return "ExpNumber(" + " + ".join(bits) + ")"


def exact_is_zero(x) -> bool:
    """Zero test for the exact scalar union Fraction | ExpNumber."""
    if isinstance(x, ExpNumber):
        return x.is_zero()
    return x == 0


def exact_abs_mpf(x, dps: Optional[int] = None):
    v = x.to_mpf(dps) if isinstance(x, ExpNumber) else to_mpf(x, dps)
    return abs(v)


# ---------------------------------------------------------------------------
# AST nodes
# ---------------------------------------------------------------------------


class Expression:
    """Base class of all expression nodes.  Immutable; operators build trees."""

    __slots__ = ()

    def __add__(self, other):
        return _mk_add(self, _as_expr(other))

    def __radd__(self, other):
        return _mk_add(_as_expr(other), self)

    def __sub__(self, other):
        return _mk_add(self, _mk_neg(_as_expr(other)))

    def __rsub__(self, other):
        return _mk_add(_as_expr(other), _mk_neg(self))

    def __mul__(self, other):
        return _mk_mul(self, _as_expr(other))

    def __rmul__(self, other):
        return _mk_mul(_as_expr(other), self)

    def __truediv__(self, other):
        return _mk_div(self, _as_expr(other))

    def __rtruediv__(self, other):
        return _mk_div(_as_expr(other), self)

    def __pow__(self, n):
        if not isinstance(n, int):
            raise UnsupportedShape("only integer powers are supported")
        return _mk_pow(self, n)

    def __neg__(self):
        return _mk_neg(self)

    def __str__(self):
        return render(self)


@dataclass(frozen=True, slots=True)
class Rat(Expression):
    value: Fraction


@dataclass(frozen=True, slots=True)
class Var(Expression):
    index: int  # 0-based


@dataclass(frozen=True, slots=True)
class ExpLin(Expression):
    """exp(sum coeffs[i] * t_{i+1}) with rational coefficients."""

    coeffs: tuple


@dataclass(frozen=True, slots=True)
class Log(Expression):
    arg: Expression


@dataclass(frozen=True, slots=True)
class Add(Expression):
    terms: tuple


@dataclass(frozen=True, slots=True)
class Mul(Expression):
    factors: tuple


@dataclass(frozen=True, slots=True)
class Pow(Expression):
    base: Expression
    exponent: int


@dataclass(frozen=True, slots=True)
class Div(Expression):
    num: Expression
    den: Expression


ZERO = Rat(Fraction(0))
ONE = Rat(Fraction(1))


def rat(p, q=1) -> Rat:
    return Rat(Fraction(p, q))


def var(i: int) -> Var:
    """Coordinate variable t_i, 1-based."""
    if i < 1:
        raise ValueError("variable indices are 1-based")
    return Var(i - 1)


def exp_linear(coeffs: Iterable[Rational]) -> Expression:
    cs = tuple(Fraction(c) for c in coeffs)
    while cs and cs[-1] == 0:
        cs = cs[:-1]
    if not cs:
        return ONE
    return ExpLin(cs)


def log(arg) -> Log:
    return Log(_as_expr(arg))


def _as_expr(x) -> Expression:
    if isinstance(x, Expression):
        return x
    if isinstance(x, (int, Fraction)):
        return Rat(Fraction(x))
    raise TypeError(f"cannot interpret {x!r} as an Expression")


def _mk_add(a: Expression, b: Expression) -> Expression:
    terms = []
    for x in (a, b):
        terms.extend(x.terms if isinstance(x, Add) else (x,))
    terms = [t for t in terms if not (isinstance(t, Rat) and t.value == 0)]
    if not terms:
        return ZERO
    if len(terms) == 1:
        return terms[0]
    return Add(tuple(terms))


def _mk_neg(a: Expression) -> Expression:
    if isinstance(a, Rat):
        return Rat(-a.value)
    return _mk_mul(Rat(Fraction(-1)), a)


def _mk_mul(a: Expression, b: Expression) -> Expression:
    factors = []
    coeff = Fraction(1)
    for x in (a, b):
        for f in (x.factors if isinstance(x, Mul) else (x,)):
            if isinstance(f, Rat):
                coeff *= f.value
            else:
                factors.append(f)
    if coeff == 0:
        return ZERO
    if coeff != 1:
        factors.insert(0, Rat(coeff))
    if not factors:
        return ONE
    if len(factors) == 1:
        return factors[0]
    return Mul(tuple(factors))


def _mk_pow(base: Expression, n: int) -> Expression:
    if n == 0:
        return ONE
    if n == 1:
        return base
    if isinstance(base, Rat):
        if base.value == 0 and n < 0:
            raise DivisionByZero("0 to a negative power")
        return Rat(base.value**n)
    return Pow(base, n)


def _mk_div(num: Expression, den: Expression) -> Expression:
    if isinstance(den, Rat):
        if den.value == 0:
            raise DivisionByZero("division by the zero constant")
        return _mk_mul(Rat(1 / den.value), num)
    return Div(num, den)


# ---------------------------------------------------------------------------
# differentiation (tree level; exact, closed under repeated application)
# ---------------------------------------------------------------------------


def diff(f: Expression, i: int) -> Expression:
    """Exact partial derivative of ``f`` with respect to t_i (1-based)."""
    if i < 1:
        raise ValueError("variable indices are 1-based")
    return _diff(f, i - 1)


def _diff(f: Expression, j: int) -> Expression:
    if isinstance(f, Rat):
        return ZERO
    if isinstance(f, Var):
        return ONE if f.index == j else ZERO
    if isinstance(f, ExpLin):
        c = f.coeffs[j] if j < len(f.coeffs) else Fraction(0)
        return ZERO if c == 0 else _mk_mul(Rat(c), f)
    if isinstance(f, Log):
        return _mk_div(_diff(f.arg, j), f.arg)
    if isinstance(f, Add):
        out = ZERO
        for t in f.terms:
            out = _mk_add(out, _diff(t, j))
        return out
    if isinstance(f, Mul):
        out = ZERO
        fs = f.factors
        for k in range(len(fs)):
            dk = _diff(fs[k], j)
            if isinstance(dk, Rat) and dk.value == 0:
                continue
            rest = dk
            for l, g in enumerate(fs):
                if l != k:
                    rest = _mk_mul(rest, g)
            out = _mk_add(out, rest)
        return out
    if isinstance(f, Pow):
        db = _diff(f.base, j)
        if isinstance(db, Rat) and db.value == 0:
            return ZERO
        return _mk_mul(_mk_mul(Rat(Fraction(f.exponent)), _mk_pow(f.base, f.exponent - 1)), db)
    if isinstance(f, Div):
        dn, dd = _diff(f.num, j), _diff(f.den, j)
        num = _mk_add(_mk_mul(dn, f.den), _mk_neg(_mk_mul(f.num, dd)))
        return _mk_div(num, _mk_pow(f.den, 2))
    raise TypeError(f"unknown node {f!r}")


# ---------------------------------------------------------------------------
# evaluation
# ---------------------------------------------------------------------------


@dataclass(frozen=True, slots=True)
class EvaluationPoint:
    """Assignment of one exact rational or one floating value per variable."""

    values: tuple

    @staticmethod
    def of(*values) -> "EvaluationPoint":
        return EvaluationPoint(tuple(Fraction(v) if isinstance(v, (int, Fraction)) else v for v in values))

    @property
    def dimension(self) -> int:
        return len(self.values)

    def is_rational(self) -> bool:
        return all(isinstance(v, Fraction) for v in self.values)

    def value(self, j: int):
        if j >= len(self.values):
            raise UnassignedVariable(f"t{j + 1} has no assigned value")
        return self.values[j]

    def to_mpf(self, dps: Optional[int] = None) -> tuple:
        return tuple(to_mpf(v, dps) for v in self.values)


def point(*values) -> EvaluationPoint:
    return EvaluationPoint.of(*values)


def evaluate(f: Expression, p: EvaluationPoint, dps: Optional[int] = None):
    """Evaluate ``f`` at ``p``.

    Returns an exact Fraction when ``f`` is exp/log-free and ``p`` is
    rational; otherwise a 64-digit (configurable) mpmath float.
    """
    if p.is_rational() and not _has_transcendental(f):
        return _eval_exact_rational(f, p)
    with workdps(dps or _DEFAULT_DPS):
        vals = p.to_mpf(dps)
        return _eval_mp(f, vals)


def _has_transcendental(f: Expression) -> bool:
    if isinstance(f, (Rat, Var)):
        return False
    if isinstance(f, (ExpLin, Log)):
        return True
    if isinstance(f, Add):
        return any(_has_transcendental(t) for t in f.terms)
    if isinstance(f, Mul):
        return any(_has_transcendental(t) for t in f.factors)
    if isinstance(f, Pow):
        return _has_transcendental(f.base)
    if isinstance(f, Div):
        return _has_transcendental(f.num) or _has_transcendental(f.den)
    raise TypeError(f"unknown node {f!r}")


def _eval_exact_rational(f: Expression, p: EvaluationPoint) -> Fraction:
    if isinstance(f, Rat):
        return f.value
    if isinstance(f, Var):
        return p.value(f.index)
    if isinstance(f, Add):
        return sum((_eval_exact_rational(t, p) for t in f.terms), Fraction(0))
    if isinstance(f, Mul):
        out = Fraction(1)
        for t in f.factors:
            out *= _eval_exact_rational(t, p)
        return out
    if isinstance(f, Pow):
        b = _eval_exact_rational(f.base, p)
        if b == 0 and f.exponent < 0:
            raise DivisionByZero("negative power of zero")
        return b**f.exponent
    if isinstance(f, Div):
        d = _eval_exact_rational(f.den, p)
        if d == 0:
            raise DivisionByZero("denominator vanishes at the point")
        return _eval_exact_rational(f.num, p) / d
    raise UnsupportedShape("exact evaluation hit a transcendental node")


def _eval_mp(f: Expression, vals: tuple):
    if isinstance(f, Rat):
        return to_mpf(f.value)
    if isinstance(f, Var):
        if f.index >= len(vals):
            raise UnassignedVariable(f"t{f.index + 1} has no assigned value")
        return vals[f.index]
    if isinstance(f, ExpLin):
        s = mpf(0)
        for j, c in enumerate(f.coeffs):
            if c:
                if j >= len(vals):
                    raise UnassignedVariable(f"t{j + 1} has no assigned value")
                s += to_mpf(c) * vals[j]
        return mp.e**s
    if isinstance(f, Log):
        a = _eval_mp(f.arg, vals)
        if isinstance(a, mpc):
            return mp.log(a)
        if a <= 0:
            raise LogOfNonPositive(f"log argument {a} is not positive")
        return mp.log(a)
    if isinstance(f, Add):
        s = mpf(0)
        for t in f.terms:
            s += _eval_mp(t, vals)
        return s
    if isinstance(f, Mul):
        s = mpf(1)
        for t in f.factors:
            s *= _eval_mp(t, vals)
        return s
    if isinstance(f, Pow):
        return _eval_mp(f.base, vals) ** f.exponent
    if isinstance(f, Div):
        d = _eval_mp(f.den, vals)
        if d == 0:
            raise DivisionByZero("denominator vanishes at the point")
        return _eval_mp(f.num, vals) / d
    raise TypeError(f"unknown node {f!r}")


# ---------------------------------------------------------------------------
# canonical Laurent exp-polynomials
# ---------------------------------------------------------------------------

# monomial key: (powers tuple[int], exp coefficients tuple[Fraction]),
# both of length nvars


class ExpPoly:
    """Canonical element of Q[t1..tn, exp(l)^{+-1}] with Laurent t-exponents."""

    __slots__ = ("nvars", "terms")

    def __init__(self, nvars: int, terms: Optional[dict] = None):
        self.nvars = nvars
        self.terms = {}
        if terms:
            for k, c in terms.items():
                if c != 0:
                    self.terms[k] = Fraction(c)

    # --- constructors -----------------------------------------------------

    @staticmethod
    def constant(nvars: int, c) -> "ExpPoly":
        key = ((0,) * nvars, (Fraction(0),) * nvars)
        return ExpPoly(nvars, {key: Fraction(c)})

    @staticmethod
    def variable(nvars: int, j: int) -> "ExpPoly":
        pows = tuple(1 if i == j else 0 for i in range(nvars))
        key = (pows, (Fraction(0),) * nvars)
        return ExpPoly(nvars, {key: Fraction(1)})

    @staticmethod
    def exponential(nvars: int, coeffs) -> "ExpPoly":
        ev = tuple(Fraction(coeffs[i]) if i < len(coeffs) else Fraction(0) for i in range(nvars))
        key = ((0,) * nvars, ev)
        return ExpPoly(nvars, {key: Fraction(1)})

    # --- structure --------------------------------------------------------

    def is_zero(self) -> bool:
        return not self.terms

    def is_constant(self) -> bool:
        if not self.terms:
            return True
        if len(self.terms) > 1:
            return False
        (pows, ev), = self.terms.keys()
        return not any(pows) and not any(ev)

    def constant_value(self) -> Fraction:
        if not self.terms:
            return Fraction(0)
        if not self.is_constant():
            raise UnsupportedShape("not a constant")
        return next(iter(self.terms.values()))

    def is_monomial(self) -> bool:
        return len(self.terms) == 1

    def sorted_terms(self):
        return sorted(self.terms.items(), key=lambda kv: (kv[0][1], kv[0][0]))

    def __eq__(self, other):
        return isinstance(other, ExpPoly) and self.nvars == other.nvars and self.terms == other.terms

    def __hash__(self):
        return hash((self.nvars, frozenset(self.terms.items())))

    def __repr__(self):
        return f"ExpPoly({render(self.to_expr())})"

    # --- arithmetic ---------------------------------------------------------

    def _check(self, other: "ExpPoly"):
        if self.nvars != other.nvars:
            raise ValueError("mixed variable counts")

    def __add__(self, other: "ExpPoly") -> "ExpPoly":
        self._check(other)
        out = dict(self.terms)
        for k, c in other.terms.items():
            out[k] = out.get(k, Fraction(0)) + c
        return ExpPoly(self.nvars, out)

    def __neg__(self) -> "ExpPoly":
        return ExpPoly(self.nvars, {k: -c for k, c in self.terms.items()})

    def __sub__(self, other: "ExpPoly") -> "ExpPoly":
        return self + (-other)

    def scale(self, c) -> "ExpPoly":
        c = Fraction(c)
        return ExpPoly(self.nvars, {k: c * v for k, v in self.terms.items()})

    def __mul__(self, other: "ExpPoly") -> "ExpPoly":
        self._check(other)
        out: dict = {}
        for (p1, e1), c1 in self.terms.items():
            for (p2, e2), c2 in other.terms.items():
                key = (
                    tuple(a + b for a, b in zip(p1, p2)),
                    tuple(a + b for a, b in zip(e1, e2)),
                )
                out[key] = out.get(key, Fraction(0)) + c1 * c2
        return ExpPoly(self.nvars, out)

    def __pow__(self, n: int) -> "ExpPoly":
        if n < 0:
            return self.inverse_monomial() ** (-n)
        out = ExpPoly.constant(self.nvars, 1)
        base = self
        while n:
            if n & 1:
                out = out * base
            base = base * base
            n >>= 1
        return out

    def inverse_monomial(self) -> "ExpPoly":
        if len(self.terms) != 1:
            raise UnsupportedShape("only monomials are invertible in the ring")
        (pows, ev), c = next(iter(self.terms.items()))
        if c == 0:
            raise DivisionByZero("inverse of zero")
        key = (tuple(-p for p in pows), tuple(-e for e in ev))
        return ExpPoly(self.nvars, {key: 1 / c})

    def diff(self, j: int) -> "ExpPoly":
        out: dict = {}
        for (pows, ev), c in self.terms.items():
            if pows[j]:
                key = (tuple(p - (1 if i == j else 0) for i, p in enumerate(pows)), ev)
                out[key] = out.get(key, Fraction(0)) + c * pows[j]
            if ev[j]:
                key = (pows, ev)
                out[key] = out.get(key, Fraction(0)) + c * ev[j]
        return ExpPoly(self.nvars, out)

    # --- evaluation ----------------------------------------------------------

    def eval_exact(self, p: EvaluationPoint):
        """Exact value at a rational point: Fraction or ExpNumber."""
        acc: dict = {}
        for (pows, ev), c in self.terms.items():
            v = c
            s = Fraction(0)
            for j in range(self.nvars):
                if pows[j]:
                    tj = p.value(j)
                    if tj == 0 and pows[j] < 0:
                        raise DivisionByZero("negative power of zero coordinate")
                    v *= tj ** pows[j]
                if ev[j]:
                    s += ev[j] * p.value(j)
            acc[s] = acc.get(s, Fraction(0)) + v
        num = ExpNumber(acc)
        return num.as_rational() if num.is_rational() else num

    def eval_mp(self, vals: tuple, dps: Optional[int] = None):
        """Floating value given per-variable mpf values."""
        with workdps(dps or _DEFAULT_DPS):
            total = mpf(0)
            for (pows, ev), c in self.sorted_terms():
                v = to_mpf(c)
                for j in range(self.nvars):
                    if pows[j]:
                        v *= vals[j] ** pows[j]
                s = mpf(0)
                for j in range(self.nvars):
                    if ev[j]:
                        s += to_mpf(ev[j]) * vals[j]
                if s:
                    v *= mp.e**s
                total += v
            return total

    # --- conversion -----------------------------------------------------------

    def to_expr(self) -> Expression:
        if not self.terms:
            return ZERO
        parts = []
        for (pows, ev), c in self.sorted_terms():
            factors: list = [Rat(c)] if c != 1 or (not any(pows) and not any(ev)) else []
            for j, pw in enumerate(pows):
                if pw:
                    factors.append(Var(j) if pw == 1 else Pow(Var(j), pw))
            if any(ev):
                factors.append(exp_linear(ev))
            term = factors[0] if len(factors) == 1 else Mul(tuple(factors))
            parts.append(term)
        return parts[0] if len(parts) == 1 else Add(tuple(parts))

    def euler_weight(self) -> Optional[tuple]:
        """Largest structure reused by quasihomogeneity checks: per-key data."""
        return None  # placeholder; weight logic lives in frobenius


def divide_exact(num: ExpPoly, den: ExpPoly) -> ExpPoly:
    """Exact division in the Laurent ring; UnsupportedShape if not divisible."""
    if den.is_zero():
        raise DivisionByZero("division by the zero polynomial")
    if num.is_zero():
        return ExpPoly(num.nvars)
    if den.is_monomial():
        return num * den.inverse_monomial()
    # shift both supports into the honest polynomial cone, then long-divide
    n = num.nvars

    def shifted(p: ExpPoly):
        mins = [min(k[0][j] for k in p.terms) for j in range(n)]
        shift = tuple(-m if m < 0 else 0 for m in mins)
        if any(shift):
            mono = ExpPoly(n, {(shift, (Fraction(0),) * n): Fraction(1)})
            return p * mono, shift
        return p, shift

    num_s, sh_n = shifted(num)
    den_s, sh_d = shifted(den)

    def order_key(k):
        return (k[1], k[0])

    quotient: dict = {}
    rem = ExpPoly(n, dict(num_s.terms))
    lead_d = max(den_s.terms, key=order_key)
    cd = den_s.terms[lead_d]
    for _ in range(len(num_s.terms) * (len(den_s.terms) + 2) + 8):
        if rem.is_zero():
            break
        lead_r = max(rem.terms, key=order_key)
        pows = tuple(a - b for a, b in zip(lead_r[0], lead_d[0]))
        if any(p < 0 for p in pows):
            raise UnsupportedShape("quotient does not divide exactly")
        ev = tuple(a - b for a, b in zip(lead_r[1], lead_d[1]))
        c = rem.terms[lead_r] / cd
        quotient[(pows, ev)] = quotient.get((pows, ev), Fraction(0)) + c
        rem = rem - den_s * ExpPoly(n, {(pows, ev): c})
    if not rem.is_zero():
        raise UnsupportedShape("quotient does not divide exactly")
    q = ExpPoly(n, quotient)
    unshift = tuple(d - nn for nn, d in zip(sh_n, sh_d))
    if any(unshift):
        q = q * ExpPoly(n, {(unshift, (Fraction(0),) * n): Fraction(1)})
    return q


# ---------------------------------------------------------------------------
# rational functions and log-linear term sums
# ---------------------------------------------------------------------------


class RatFunc:
    """Quotient of two exp-polynomials.  Monomial denominators fold away."""

    __slots__ = ("num", "den")

    def __init__(self, num: ExpPoly, den: Optional[ExpPoly] = None):
        if den is not None and den.is_zero():
            raise DivisionByZero("zero denominator")
        if den is not None and den.is_monomial():
            num = num * den.inverse_monomial()
            den = None
        if den is not None and den.is_constant():
            num = num.scale(1 / den.constant_value())
            den = None
        self.num = num
        self.den = den

    @property
    def nvars(self) -> int:
        return self.num.nvars

    def is_zero(self) -> bool:
        return self.num.is_zero()

    def is_polynomial(self) -> bool:
        return self.den is None

    def poly(self) -> ExpPoly:
        if self.den is not None:
            raise UnsupportedShape("rational function with a non-trivial denominator")
        return self.num

    def __add__(self, other: "RatFunc") -> "RatFunc":
        if self.den is None and other.den is None:
            return RatFunc(self.num + other.num)
        a_num, a_den = self.num, self.den or ExpPoly.constant(self.nvars, 1)
        b_num, b_den = other.num, other.den or ExpPoly.constant(self.nvars, 1)
        if self.den is not None and other.den is not None and self.den == other.den:
            return RatFunc(a_num + b_num, self.den)
        return RatFunc(a_num * b_den + b_num * a_den, a_den * b_den)

    def __neg__(self) -> "RatFunc":
        return RatFunc(-self.num, self.den)

    def __sub__(self, other: "RatFunc") -> "RatFunc":
        return self + (-other)

    def __mul__(self, other: "RatFunc") -> "RatFunc":
        den = None
        if self.den is not None and other.den is not None:
            den = self.den * other.den
        else:
            den = self.den or other.den
        return RatFunc(self.num * other.num, den)

    def scale(self, c) -> "RatFunc":
        return RatFunc(self.num.scale(c), self.den)

    def inverse(self) -> "RatFunc":
        if self.num.is_zero():
            raise DivisionByZero("inverse of the zero function")
        num = self.den or ExpPoly.constant(self.nvars, 1)
        return RatFunc(num, self.num)

    def __truediv__(self, other: "RatFunc") -> "RatFunc":
        return self * other.inverse()

    def diff(self, j: int) -> "RatFunc":
        if self.den is None:
            return RatFunc(self.num.diff(j))
        dn, dd = self.num.diff(j), self.den.diff(j)
        return RatFunc(dn * self.den - self.num * dd, self.den * self.den)

    def eval_exact(self, p: EvaluationPoint):
        top = self.num.eval_exact(p)
        if self.den is None:
            return top
        bot = self.den.eval_exact(p)
        if exact_is_zero(bot):
            raise DivisionByZero("denominator vanishes at the point")
        if isinstance(bot, Fraction):
            return top / bot if isinstance(top, Fraction) else top * (1 / bot)
        return (ExpNumber.from_rational(top) if isinstance(top, Fraction) else top) / bot

    def eval_mp(self, vals: tuple, dps: Optional[int] = None):
        with workdps(dps or _DEFAULT_DPS):
            top = self.num.eval_mp(vals, dps)
            if self.den is None:
                return top
            bot = self.den.eval_mp(vals, dps)
            if bot == 0:
                raise DivisionByZero("denominator vanishes at the point")
            return top / bot

    def is_constant(self) -> bool:
        if self.den is None:
            return self.num.is_constant()
        # num == c * den exactly for some rational c
        if self.num.is_zero():
            return True
        try:
            q = divide_exact(self.num, self.den)
        except UnsupportedShape:
            return False
        return q.is_constant()

    def constant_value(self) -> Fraction:
        if self.den is None:
            return self.num.constant_value()
        return divide_exact(self.num, self.den).constant_value()

    def __eq__(self, other):
        if not isinstance(other, RatFunc):
            return NotImplemented
        a_den = self.den or ExpPoly.constant(self.nvars, 1)
        b_den = other.den or ExpPoly.constant(other.nvars, 1)
        return (self.num * b_den) == (other.num * a_den)

    def __repr__(self):
        if self.den is None:
            return f"RatFunc({self.num!r})"
        return f"RatFunc({self.num!r} / {self.den!r})"


class TermSum:
    """Sum of rational-function terms, each optionally times log(arg).

    The closure of every prepotential and G-candidate in the package under
    repeated differentiation.  ``terms`` maps a log argument (an ExpPoly, or
    None for the rational part) to a RatFunc coefficient.
    """

    __slots__ = ("nvars", "rational", "logs")

    def __init__(self, nvars: int, rational: Optional[RatFunc] = None, logs: Optional[list] = None):
        self.nvars = nvars
        self.rational = rational if rational is not None else RatFunc(ExpPoly(nvars))
        self.logs = []  # list of (RatFunc coeff, ExpPoly arg)
        for coeff, arg in logs or []:
            if not coeff.is_zero():
                self.logs.append((coeff, arg))

    def has_logs(self) -> bool:
        return bool(self.logs)

    def __add__(self, other: "TermSum") -> "TermSum":
        logs = list(self.logs)
        for coeff, arg in other.logs:
            for i, (c0, a0) in enumerate(logs):
                if a0 == arg:
                    logs[i] = (c0 + coeff, a0)
                    break
            else:
                logs.append((coeff, arg))
        logs = [(c, a) for c, a in logs if not c.is_zero()]
        return TermSum(self.nvars, self.rational + other.rational, logs)

    def __neg__(self) -> "TermSum":
        return TermSum(self.nvars, -self.rational, [(-c, a) for c, a in self.logs])

    def __sub__(self, other: "TermSum") -> "TermSum":
        return self + (-other)

    def scale_rat(self, c) -> "TermSum":
        return TermSum(self.nvars, self.rational.scale(c), [(co.scale(c), a) for co, a in self.logs])

    def mul_ratfunc(self, r: RatFunc) -> "TermSum":
        return TermSum(self.nvars, self.rational * r, [(c * r, a) for c, a in self.logs])

    def __mul__(self, other: "TermSum") -> "TermSum":
        if self.has_logs() and other.has_logs():
            raise UnsupportedShape("products of logarithms are outside the ring")
        if other.has_logs():
            return other.mul_ratfunc(self.rational)
        return self.mul_ratfunc(other.rational)

    def diff(self, j: int) -> "TermSum":
        rat = self.rational.diff(j)
        logs = []
        for coeff, arg in self.logs:
            dc = coeff.diff(j)
            if not dc.is_zero():
                logs.append((dc, arg))
            da = arg.diff(j)
            if not da.is_zero():
                rat = rat + coeff * RatFunc(da, arg)
        return TermSum(self.nvars, rat, logs)

    def to_ratfunc(self) -> RatFunc:
        if self.has_logs():
            raise UnsupportedShape("term sum still carries logarithms")
        return self.rational

    def eval_mp(self, vals: tuple, dps: Optional[int] = None):
        with workdps(dps or _DEFAULT_DPS):
            total = self.rational.eval_mp(vals, dps)
            for coeff, arg in self.logs:
                a = arg.eval_mp(vals, dps)
                if isinstance(a, mpc):
                    la = mp.log(a)
                elif a <= 0:
                    raise LogOfNonPositive("log argument is not positive at the point")
                else:
                    la = mp.log(a)
                total += coeff.eval_mp(vals, dps) * la
            return total


def to_term_sum(f: Expression, nvars: int) -> TermSum:
    """Lower an expression tree into the TermSum calculus."""
    if isinstance(f, Rat):
        return TermSum(nvars, RatFunc(ExpPoly.constant(nvars, f.value)))
    if isinstance(f, Var):
        if f.index >= nvars:
            raise UnassignedVariable(f"t{f.index + 1} exceeds the declared dimension")
        return TermSum(nvars, RatFunc(ExpPoly.variable(nvars, f.index)))
    if isinstance(f, ExpLin):
        if len(f.coeffs) > nvars:
            raise UnassignedVariable("exponential involves an out-of-range variable")
        return TermSum(nvars, RatFunc(ExpPoly.exponential(nvars, f.coeffs)))
    if isinstance(f, Log):
        inner = to_term_sum(f.arg, nvars).to_ratfunc()
        if inner.den is not None:
            raise UnsupportedShape("log of a non-Laurent quotient")
        one = RatFunc(ExpPoly.constant(nvars, 1))
        return TermSum(nvars, None, [(one, inner.num)])
    if isinstance(f, Add):
        out = TermSum(nvars)
        for t in f.terms:
            out = out + to_term_sum(t, nvars)
        return out
    if isinstance(f, Mul):
        out = TermSum(nvars, RatFunc(ExpPoly.constant(nvars, 1)))
        for t in f.factors:
            out = out * to_term_sum(t, nvars)
        return out
    if isinstance(f, Pow):
        base = to_term_sum(f.base, nvars)
        if base.has_logs():
            raise UnsupportedShape("powers of logarithms are outside the ring")
        r = base.to_ratfunc()
        n = f.exponent
        if n < 0:
            r = r.inverse()
            n = -n
        out = RatFunc(ExpPoly.constant(nvars, 1))
        for _ in range(n):
            out = out * r
        return TermSum(nvars, out)
    if isinstance(f, Div):
        num = to_term_sum(f.num, nvars)
        den = to_term_sum(f.den, nvars).to_ratfunc()
        return num.mul_ratfunc(den.inverse())
    raise TypeError(f"unknown node {f!r}")


def to_exppoly(f: Expression, nvars: int) -> ExpPoly:
    """Canonicalize an exp-polynomial (or exactly-divisible quotient)."""
    ts = to_term_sum(f, nvars)
    if ts.has_logs():
        raise UnsupportedShape("log nodes cannot be normalized")
    r = ts.to_ratfunc()
    if r.den is None:
        return r.num
    return divide_exact(r.num, r.den)


def normalize(f: Expression, nvars: Optional[int] = None) -> Expression:
    """Canonical sorted monomial form over the Laurent ring.

    Equality of functions on the ring is equality of normalized trees.
    """
    n = nvars if nvars is not None else max_var_index(f)
    return to_exppoly(f, n).to_expr()


def max_var_index(f: Expression) -> int:
    if isinstance(f, Rat):
        return 0
    if isinstance(f, Var):
        return f.index + 1
    if isinstance(f, ExpLin):
        return len(f.coeffs)
    if isinstance(f, Log):
        return max_var_index(f.arg)
    if isinstance(f, Add):
        return max((max_var_index(t) for t in f.terms), default=0)
    if isinstance(f, Mul):
        return max((max_var_index(t) for t in f.factors), default=0)
    if isinstance(f, Pow):
        return max_var_index(f.base)
    if isinstance(f, Div):
        return max(max_var_index(f.num), max_var_index(f.den))
    raise TypeError(f"unknown node {f!r}")


# ---------------------------------------------------------------------------
# text format
# ---------------------------------------------------------------------------

_TOKEN = re.compile(
    r"\s*(?:(?P<num>\d+)|(?P<name>[A-Za-z_][A-Za-z_0-9]*)|(?P<op>[-+*/^()]))"
)


def parse(text: str, nvars: Optional[int] = None) -> Expression:
    """Parse the model-file expression syntax.

    Variables ``t1..tn``; operators ``+ - * / ^``; functions ``exp(...)``,
    ``log(...)``; rational literals like ``3/4`` fall out of ``/``.
    """
    tokens = []
    pos = 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if not m:
            if text[pos:].strip() == "":
                break
            raise ParseError(f"bad character at {text[pos:pos + 8]!r}")
        tokens.append(m)
        pos = m.end()
    toks = [(m.lastgroup, m.group(m.lastgroup)) for m in tokens]
    out, idx = _parse_sum(toks, 0)
    if idx != len(toks):
        raise ParseError(f"unexpected trailing input near {toks[idx][1]!r}")
    if nvars is not None and max_var_index(out) > nvars:
        raise ParseError("expression uses a variable beyond the declared dimension")
    return out


def _parse_sum(toks, i):
    node, i = _parse_product(toks, i)
    while i < len(toks) and toks[i][1] in "+-":
        op = toks[i][1]
        rhs, i = _parse_product(toks, i + 1)
        node = node + rhs if op == "+" else node - rhs
    return node, i


def _parse_product(toks, i):
    node, i = _parse_unary(toks, i)
    while i < len(toks) and toks[i][1] in "*/":
        op = toks[i][1]
        rhs, i = _parse_unary(toks, i + 1)
        node = node * rhs if op == "*" else node / rhs
    return node, i


def _parse_unary(toks, i):
    if i < len(toks) and toks[i][1] == "-":
        node, i = _parse_unary(toks, i + 1)
        return -node, i
    if i < len(toks) and toks[i][1] == "+":
        return _parse_unary(toks, i + 1)
    return _parse_power(toks, i)


def _parse_power(toks, i):
    base, i = _parse_atom(toks, i)
    if i < len(toks) and toks[i][1] == "^":
        i += 1
        sign = 1
        if i < len(toks) and toks[i][1] == "-":
            sign = -1
            i += 1
        if i >= len(toks) or toks[i][0] != "num":
            raise ParseError("exponent must be an integer literal")
        n = sign * int(toks[i][1])
        return base ** n, i + 1
    return base, i


def _parse_atom(toks, i):
    if i >= len(toks):
        raise ParseError("unexpected end of input")
    kind, val = toks[i]
    if kind == "num":
        return Rat(Fraction(int(val))), i + 1
    if val == "(":
        node, i = _parse_sum(toks, i + 1)
        if i >= len(toks) or toks[i][1] != ")":
            raise ParseError("missing closing parenthesis")
        return node, i + 1
    if kind == "name":
        if val in ("exp", "log"):
            if i + 1 >= len(toks) or toks[i + 1][1] != "(":
                raise ParseError(f"{val} requires parentheses")
            node, j = _parse_sum(toks, i + 2)
            if j >= len(toks) or toks[j][1] != ")":
                raise ParseError("missing closing parenthesis")
            if val == "log":
                return Log(node), j + 1
            return _exp_of(node), j + 1
        m = re.fullmatch(r"t(\d+)", val)
        if not m:
            raise ParseError(f"unknown name {val!r}")
        return var(int(m.group(1))), i + 1
    raise ParseError(f"unexpected token {val!r}")


def _exp_of(arg: Expression) -> Expression:
    """exp() arguments are restricted to rational linear forms in the t_i."""
    n = max_var_index(arg)
    try:
        p = to_exppoly(arg, n if n else 1)
    except UnsupportedShape as exc:
        raise UnsupportedShape("exp argument must be a rational linear form") from exc
    coeffs = [Fraction(0)] * p.nvars
    for (pows, ev), c in p.terms.items():
        if any(ev) or sum(pows) != 1 or any(pw not in (0, 1) for pw in pows):
            raise UnsupportedShape("exp argument must be a rational linear form without constant term")
        j = pows.index(1)
        coeffs[j] += c
    return exp_linear(coeffs)


def render(f: Expression) -> str:
    """Deterministic plain-text rendering in the model-file syntax."""
    return _render(f, 0)


def _render(f: Expression, prec: int) -> str:
    if isinstance(f, Rat):
        s = str(f.value)
        if (f.value < 0 or "/" in s) and prec >= 2:
            return f"({s})"
        return s
    if isinstance(f, Var):
        return f"t{f.index + 1}"
    if isinstance(f, ExpLin):
        inner = _render_linear(f.coeffs)
        return f"exp({inner})"
    if isinstance(f, Log):
        return f"log({_render(f.arg, 0)})"
    if isinstance(f, Add):
        s = " + ".join(_render(t, 1) for t in f.terms).replace("+ -", "- ")
        return f"({s})" if prec >= 2 else s
    if isinstance(f, Mul):
        s = "*".join(_render(t, 2) for t in f.factors)
        return f"({s})" if prec >= 3 else s
    if isinstance(f, Pow):
        e = f.exponent
        es = str(e) if e >= 0 else f"(-{-e})"
        return f"{_render(f.base, 3)}^{es}"
    if isinstance(f, Div):
        return f"{_render(f.num, 3)}/{_render(f.den, 3)}"
    raise TypeError(f"unknown node {f!r}")


def _render_linear(coeffs) -> str:
    bits = []
    for j, c in enumerate(coeffs):
        if c == 0:
            continue
        if c == 1:
            bits.append(f"t{j + 1}")
        else:
            bits.append(f"{c}*t{j + 1}")
    return " + ".join(bits) if bits else "0"
