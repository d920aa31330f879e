"""Frobenius-manifold tensors derived from a prepotential.

Given a prepotential F(t1..tn), an identity coordinate and an Euler field,
this module produces the flat metric, the structure constants with up to five
lower indices, their eta-raised versions, the multiplication-by-E operator U,
the grading matrix mu and the socle field H, both symbolically and evaluated
at points.  Everything is exact when the point is rational.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from fractions import Fraction
from typing import Optional

from mpmath import workdps

from . import expr as ex
from .errors import (
    DegenerateMetric,
    NonConstantMetric,
    NotQuasihomogeneous,
)
from .expr import (
    EvaluationPoint,
    ExpNumber,
    ExpPoly,
    Expression,
    RatFunc,
    TermSum,
    exact_abs_mpf,
    exact_is_zero,
    to_mpf,
    to_term_sum,
)
from .linalg import frac_det, frac_inv, frac_solve


@dataclass(frozen=True, slots=True)
class EulerField:
    """E = sum_a (weights[a] * t^a + shifts[a]) d/dt^a with rational data."""

    weights: tuple
    shifts: tuple

    @staticmethod
    def of(weights, shifts=None) -> "EulerField":
        w = tuple(Fraction(x) for x in weights)
        s = tuple(Fraction(x) for x in shifts) if shifts else (Fraction(0),) * len(w)
        if len(s) != len(w):
            raise ValueError("weights and shifts must have equal length")
        return EulerField(w, s)

    @property
    def dimension(self) -> int:
        return len(self.weights)

    def is_linear(self) -> bool:
        return all(s == 0 for s in self.shifts)

    def component(self, a: int, value):
        """E^a at a point value of t^a (0-based index)."""
        return self.weights[a] * value + self.shifts[a]

    def apply_poly(self, p: ExpPoly) -> ExpPoly:
        out = ExpPoly(p.nvars)
        for a in range(p.nvars):
            da = p.diff(a)
            if da.is_zero():
                continue
            coef = ExpPoly(p.nvars)
            if self.weights[a]:
                coef = coef + ExpPoly.variable(p.nvars, a).scale(self.weights[a])
            if self.shifts[a]:
                coef = coef + ExpPoly.constant(p.nvars, self.shifts[a])
            out = out + coef * da
        return out

    def poly_weight(self, p: ExpPoly) -> Fraction:
        """w with E(p) = w * p; NotQuasihomogeneous if no such rational w."""
        if p.is_zero():
            return Fraction(0)
        ep = self.apply_poly(p)
        key, c = next(iter(p.sorted_terms()))
        w = ep.terms.get(key, Fraction(0)) / c
        if not (ep - p.scale(w)).is_zero():
            raise NotQuasihomogeneous("polynomial is not quasihomogeneous under E")
        return w


@dataclass(frozen=True, slots=True)
class Prepotential:
    """A named Frobenius model: F, dimension, identity coordinate, Euler field."""

    name: str
    dimension: int
    F: Expression
    identity_index: int  # 1-based
    euler: EulerField

    def __post_init__(self):
        if not (1 <= self.identity_index <= self.dimension):
            raise ValueError("identity index out of range")
        if self.euler.dimension != self.dimension:
            raise ValueError("Euler field dimension mismatch")


class _Symbolic:
    """All point-independent data derived from a prepotential."""

    def __init__(self, P: Prepotential):
        n = P.dimension
        k0 = P.identity_index - 1
        self.n = n
        self.k0 = k0
        self.F_ts = to_term_sum(P.F, n)

        d1 = [self.F_ts.diff(a) for a in range(n)]
        d2 = {}
        for a in range(n):
            for b in range(a, n):
                d2[(a, b)] = d1[a].diff(b)
        d3, d4, d5 = {}, {}, {}
        for key in itertools.combinations_with_replacement(range(n), 3):
            d3[key] = d2[key[:2]].diff(key[2])
        for key in itertools.combinations_with_replacement(range(n), 4):
            d4[key] = d3[key[:3]].diff(key[3])
        for key in itertools.combinations_with_replacement(range(n), 5):
            d5[key] = d4[key[:4]].diff(key[4])

        def as_ratfunc(ts: TermSum, order: int) -> RatFunc:
            if ts.has_logs():
                raise NonConstantMetric(
                    f"order-{order} derivatives keep a logarithm; prepotential outside the ring"
                )
            return ts.to_ratfunc()

        self.c3 = {k: as_ratfunc(v, 3) for k, v in d3.items()}
        self.c4 = {k: as_ratfunc(v, 4) for k, v in d4.items()}
        self.c5 = {k: as_ratfunc(v, 5) for k, v in d5.items()}

        eta = [[None] * n for _ in range(n)]
        for a in range(n):
            for b in range(n):
                r = self.c3[tuple(sorted((k0, a, b)))]
                if not r.is_constant():
                    raise NonConstantMetric(
                        f"eta[{a + 1}][{b + 1}] = {r!r} is not constant"
                    )
                eta[a][b] = r.constant_value()
        self.eta = tuple(tuple(row) for row in eta)
        if frac_det(self.eta) == 0:
            raise DegenerateMetric("metric determinant vanishes")
        self.eta_inv = frac_inv(self.eta)

        self.d, self.remainder = _solve_quasihomogeneity(self.F_ts, P.euler)
        self.q = tuple(Fraction(1) - w for w in P.euler.weights)
        self.mu = tuple(qa - self.d / 2 for qa in self.q)

    def c3_at(self, key):  # symmetric accessors, any index order
        return self.c3[tuple(sorted(key))]

    def c4_at(self, key):
        return self.c4[tuple(sorted(key))]

    def c5_at(self, key):
        return self.c5[tuple(sorted(key))]


_SYM_CACHE: dict = {}


def symbolic(P: Prepotential) -> _Symbolic:
    sym = _SYM_CACHE.get(P)
    if sym is None:
        sym = _Symbolic(P)
        _SYM_CACHE[P] = sym
    return sym


def _quadratic_key(key) -> bool:
    """Monomials a quasihomogeneity defect is allowed to contain."""
    pows, ev = key
    return not any(ev) and all(p >= 0 for p in pows) and sum(pows) <= 2


def _solve_quasihomogeneity(F_ts: TermSum, euler: EulerField):
    """Find rational d with L_E F = (3 - d) F + (polynomial of degree <= 2)."""
    n = F_ts.nvars
    if not F_ts.rational.is_polynomial():
        raise NotQuasihomogeneous("prepotential has a non-polynomial rational part")
    F_rat = F_ts.rational.poly()

    # L_E F: rational part plus log parts; every log argument must be
    # quasihomogeneous for the defect to be log-free.
    le_rat = euler.apply_poly(F_rat)
    le_logs = {}
    for coeff, arg in F_ts.logs:
        if not coeff.is_polynomial():
            raise NotQuasihomogeneous("log coefficient is not polynomial")
        w_arg = euler.poly_weight(arg)
        le_rat = le_rat + coeff.poly().scale(w_arg)
        le_logs[arg] = euler.apply_poly(coeff.poly())

    candidates = []
    # log-coefficient equations: L_E p + (d - 3) p = 0
    for coeff, arg in F_ts.logs:
        p = coeff.poly()
        w_p = euler.poly_weight(p)  # raises if not quasihomogeneous
        lhs = le_logs[arg]
        if not (lhs - p.scale(w_p)).is_zero():
            raise NotQuasihomogeneous("log coefficient mixes weights")
        candidates.append(Fraction(3) - w_p)

    # non-quadratic monomials of R(d) = L_E F - (3 - d) F must vanish
    r0 = le_rat - F_rat.scale(3)
    keys = set(r0.terms) | set(F_rat.terms)
    for key in sorted(keys, key=lambda k: (k[1], k[0])):
        if _quadratic_key(key):
            continue
        r_m = r0.terms.get(key, Fraction(0))
        f_m = F_rat.terms.get(key, Fraction(0))
        if f_m == 0:
            if r_m != 0:
                raise NotQuasihomogeneous("Euler derivative leaves a stray monomial")
            continue
        candidates.append(-r_m / f_m)

    if not candidates:
        raise NotQuasihomogeneous("charge d is not determined by the prepotential")
    d = candidates[0]
    if any(c != d for c in candidates[1:]):
        raise NotQuasihomogeneous("conflicting charge candidates")

    remainder = r0 + F_rat.scale(d)
    for coeff, arg in F_ts.logs:
        pass  # log parts cancel exactly by construction
    return d, remainder.to_expr()


# ---------------------------------------------------------------------------
# public operations
# ---------------------------------------------------------------------------


def eta_metric(P: Prepotential) -> tuple:
    """Constant symmetric metric eta_ab = d_k d_a d_b F (exact Fractions)."""
    return symbolic(P).eta


def eta_inverse(P: Prepotential) -> tuple:
    return symbolic(P).eta_inv


def quasihom_check(P: Prepotential):
    """(d, remainder): L_E F - (3 - d) F = remainder, a quadratic polynomial."""
    sym = symbolic(P)
    return sym.d, sym.remainder


def charges(P: Prepotential):
    """(q_a list, mu_a list, d) with q normalized to vanish at the identity."""
    sym = symbolic(P)
    if P.euler.weights[sym.k0] != 1:
        raise NotQuasihomogeneous("Euler weight of the identity coordinate must be 1")
    return sym.q, sym.mu, sym.d


@dataclass(frozen=True, slots=True)
class FrobeniusFrame:
    """All pointwise tensors of a model at one evaluation point.

    ``mode`` is "exact" (Fraction / ExpNumber entries) or "float" (mpf).
    Raised tensors carry the eta-lifted first index: r3[m][a][b] = c^m_ab.
    """

    point: EvaluationPoint
    mode: str
    eta: tuple
    eta_inv: tuple
    c3: tuple
    c4: tuple
    c5: tuple
    r3: tuple
    r4: tuple
    r5: tuple
    U: tuple
    mu: tuple
    H: tuple
    euler_vec: tuple
    d: Fraction
    identity_index: int


def _tensor_values(sym: _Symbolic, tensor, rank, p, mode, dps):
    n = sym.n
    vals = {}
    if mode == "float":
        mp_vals = p.to_mpf(dps)
    for key in itertools.combinations_with_replacement(range(n), rank):
        r = tensor[key]
        vals[key] = r.eval_exact(p) if mode == "exact" else r.eval_mp(mp_vals, dps)

    def build(prefix):
        if len(prefix) == rank:
            return vals[tuple(sorted(prefix))]
        return tuple(build(prefix + (j,)) for j in range(n))

    return build(())


def frame(
    P: Prepotential,
    p: EvaluationPoint,
    mode: str = "auto",
    dps: Optional[int] = None,
) -> FrobeniusFrame:
    """Assemble the full tensor frame at a point."""
    sym = symbolic(P)
    n = sym.n
    if mode == "auto":
        mode = "exact" if p.is_rational() else "float"
    with workdps(dps or ex.default_dps()):
        return _frame_body(P, sym, n, p, mode, dps)


def _frame_body(P, sym, n, p, mode, dps) -> FrobeniusFrame:
    c3 = _tensor_values(sym, sym.c3, 3, p, mode, dps)
    c4 = _tensor_values(sym, sym.c4, 4, p, mode, dps)
    c5 = _tensor_values(sym, sym.c5, 5, p, mode, dps)

    if mode == "float":
        eta = tuple(tuple(to_mpf(x, dps) for x in row) for row in sym.eta)
        eta_inv = tuple(tuple(to_mpf(x, dps) for x in row) for row in sym.eta_inv)
        evec = tuple(
            to_mpf(P.euler.weights[a], dps) * to_mpf(p.value(a), dps) + to_mpf(P.euler.shifts[a], dps)
            for a in range(n)
        )
        mu = tuple(to_mpf(x, dps) for x in sym.mu)
    else:
        eta, eta_inv = sym.eta, sym.eta_inv
        evec = tuple(P.euler.component(a, p.value(a)) for a in range(n))
        mu = sym.mu

    def raise_first(c, rank):
        def at(idx):
            v = c
            for i in idx:
                v = v[i]
            return v

        def entry(m, rest):
            total = None
            for nu in range(n):
                w = eta_inv[m][nu]
                if w == 0:
                    continue
                term = w * at((nu,) + rest)
                total = term if total is None else total + term
            return total if total is not None else eta_inv[0][0] * 0

        lower = rank
        def build(m, prefix):
            if len(prefix) == lower:
                return entry(m, prefix)
            return tuple(build(m, prefix + (j,)) for j in range(n))

        return tuple(build(m, ()) for m in range(n))

    r3 = raise_first(c3, 2)
    r4 = raise_first(c4, 3)
    r5 = raise_first(c5, 4)

    U = tuple(
        tuple(_dot(evec, tuple(r3[a][eps][b] for eps in range(n))) for b in range(n))
        for a in range(n)
    )
    H = tuple(
        _sum(eta_inv[m][nu] * r3[a][m][nu] for m in range(n) for nu in range(n) if eta_inv[m][nu] != 0)
        for a in range(n)
    )
    return FrobeniusFrame(
        point=p,
        mode=mode,
        eta=eta,
        eta_inv=eta_inv,
        c3=c3,
        c4=c4,
        c5=c5,
        r3=r3,
        r4=r4,
        r5=r5,
        U=U,
        mu=mu,
        H=H,
        euler_vec=evec,
        d=sym.d,
        identity_index=P.identity_index,
    )


def _sum(items):
    total = None
    for x in items:
        total = x if total is None else total + x
    return total if total is not None else Fraction(0)


def _dot(a, b):
    return _sum(x * y for x, y in zip(a, b) if not _is_zero_scalar(x))


def _is_zero_scalar(x) -> bool:
    if isinstance(x, (int, Fraction)):
        return x == 0
    if isinstance(x, ExpNumber):
        return x.is_zero()
    return False


def wdvv_residual(P: Prepotential, p: EvaluationPoint, dps: Optional[int] = None):
    """Max associativity defect at p.

    Exactly Fraction(0) on rational points of a valid prepotential; an mpf
    magnitude otherwise.
    """
    sym = symbolic(P)
    n = sym.n
    mode = "exact" if p.is_rational() else "float"
    c3 = _tensor_values(sym, sym.c3, 3, p, mode, dps)
    if mode == "float":
        eta_inv = tuple(tuple(to_mpf(x, dps) for x in row) for row in sym.eta_inv)
    else:
        eta_inv = sym.eta_inv
    raised = tuple(
        tuple(
            tuple(_sum(eta_inv[m][nu] * c3[nu][a][b] for nu in range(n) if eta_inv[m][nu] != 0) for b in range(n))
            for a in range(n)
        )
        for m in range(n)
    )
    worst = None
    exact_zero = True
    for a in range(n):
        for b in range(n):
            for c in range(b + 1, n):
                for dd in range(n):
                    val = _sum(
                        raised[m][a][b] * c3[m][c][dd] - raised[m][a][c] * c3[m][b][dd]
                        for m in range(n)
                    )
                    if mode == "exact":
                        if not exact_is_zero(val):
                            exact_zero = False
                            mag = exact_abs_mpf(val, dps)
                            worst = mag if worst is None or mag > worst else worst
                    else:
                        mag = abs(val)
                        worst = mag if worst is None or mag > worst else worst
    if mode == "exact":
        return Fraction(0) if exact_zero else worst
    return worst if worst is not None else to_mpf(0, dps)


def intersection_form(P: Prepotential, p: EvaluationPoint, dps: Optional[int] = None) -> tuple:
    """g^{ij} = E^eps c^{ij}_eps with both indices eta-raised."""
    sym = symbolic(P)
    n = sym.n
    mode = "exact" if p.is_rational() else "float"
    c3 = _tensor_values(sym, sym.c3, 3, p, mode, dps)
    if mode == "float":
        eta_inv = tuple(tuple(to_mpf(x, dps) for x in row) for row in sym.eta_inv)
        evec = tuple(
            to_mpf(P.euler.weights[a], dps) * to_mpf(p.value(a), dps) + to_mpf(P.euler.shifts[a], dps)
            for a in range(n)
        )
    else:
        eta_inv = sym.eta_inv
        evec = tuple(P.euler.component(a, p.value(a)) for a in range(n))
    lowered = tuple(
        tuple(_dot(evec, tuple(c3[mu][nu][eps] for eps in range(n))) for nu in range(n))
        for mu in range(n)
    )
    g = []
    for i in range(n):
        row = []
        for j in range(n):
            row.append(
                _sum(
                    eta_inv[i][mu] * lowered[mu][nu] * eta_inv[j][nu]
                    for mu in range(n)
                    for nu in range(n)
                    if eta_inv[i][mu] != 0 and eta_inv[j][nu] != 0
                )
            )
        g.append(tuple(row))
    return tuple(g)


# ---------------------------------------------------------------------------
# structure recovery (used for transformed models whose data is implicit)
# ---------------------------------------------------------------------------


def find_identity_index(F: Expression, n: int) -> int:
    """The coordinate whose triple derivatives give a constant invertible metric."""
    ts = to_term_sum(F, n)
    d1 = [ts.diff(a) for a in range(n)]
    for k in range(n):
        ok = True
        eta = [[Fraction(0)] * n for _ in range(n)]
        for a in range(n):
            for b in range(a, n):
                third = d1[k].diff(a).diff(b)
                if third.has_logs():
                    ok = False
                    break
                r = third.to_ratfunc()
                if not r.is_constant():
                    ok = False
                    break
                eta[a][b] = eta[b][a] = r.constant_value()
            if not ok:
                break
        if ok and frac_det(eta) != 0:
            return k + 1
    raise NonConstantMetric("no coordinate yields a constant nondegenerate metric")


def recover_euler_field(F: Expression, n: int, identity_index: int):
    """Solve for the Euler field and charge d of a prepotential.

    Normalisation: weight 1 and shift 0 on the identity coordinate.  Returns
    (EulerField, d).  Exact linear algebra throughout.
    """
    k0 = identity_index - 1
    ts = to_term_sum(F, n)
    if not ts.rational.is_polynomial():
        raise NotQuasihomogeneous("prepotential has a non-polynomial rational part")
    F_rat = ts.rational.poly()
    log_args = [arg for _, arg in ts.logs]
    log_coeffs = []
    for coeff, _ in ts.logs:
        if not coeff.is_polynomial():
            raise NotQuasihomogeneous("log coefficient is not polynomial")
        log_coeffs.append(coeff.poly())

    # unknown layout: e_a (a != k0), r_a (a != k0), d, w_g per log argument
    e_slots = [a for a in range(n) if a != k0]
    r_slots = [a for a in range(n) if a != k0]
    nunk = len(e_slots) + len(r_slots) + 1 + len(log_args)

    def unknown_index(kind, a=None, g=None):
        if kind == "e":
            return e_slots.index(a)
        if kind == "r":
            return len(e_slots) + r_slots.index(a)
        if kind == "d":
            return len(e_slots) + len(r_slots)
        return len(e_slots) + len(r_slots) + 1 + g

    rows, rhs = [], []

    def add_equation(coeffs_by_unknown: dict, constant: Fraction):
        row = [Fraction(0)] * nunk
        for idx, c in coeffs_by_unknown.items():
            row[idx] += c
        rows.append(row)
        rhs.append(-constant)

    def emit(poly_by_unknown: dict, const_poly: ExpPoly, quadratic_ok: bool):
        keys = set(const_poly.terms)
        for p in poly_by_unknown.values():
            keys |= set(p.terms)
        for key in sorted(keys, key=lambda k: (k[1], k[0])):
            if quadratic_ok and _quadratic_key(key):
                continue
            add_equation(
                {idx: p.terms.get(key, Fraction(0)) for idx, p in poly_by_unknown.items()},
                const_poly.terms.get(key, Fraction(0)),
            )

    def euler_parts(p: ExpPoly):
        """Decompose L_E p into known (identity) and unknown-weighted parts."""
        parts = {}
        var_k = ExpPoly.variable(n, k0)
        known = var_k * p.diff(k0)  # e_k = 1, r_k = 0
        for a in range(n):
            if a == k0:
                continue
            da = p.diff(a)
            if da.is_zero():
                continue
            parts[unknown_index("e", a=a)] = ExpPoly.variable(n, a) * da
            parts[unknown_index("r", a=a)] = da
        return parts, known

    # rational part: L_E F_rat + sum_g w_g p_g + (d - 3) F_rat == quadratic
    parts, known = euler_parts(F_rat)
    for gi, p_g in enumerate(log_coeffs):
        parts[unknown_index("w", g=gi)] = parts.get(unknown_index("w", g=gi), ExpPoly(n)) + p_g
    parts[unknown_index("d")] = F_rat
    emit(parts, known - F_rat.scale(3), quadratic_ok=True)

    # log-coefficient equations: L_E p_g + (d - 3) p_g == 0
    for p_g in log_coeffs:
        parts, known = euler_parts(p_g)
        parts = {idx: poly for idx, poly in parts.items()}
        parts[unknown_index("d")] = p_g
        emit(parts, known - p_g.scale(3), quadratic_ok=False)

    # quasihomogeneity of log arguments: L_E g - w_g g == 0
    for gi, g in enumerate(log_args):
        parts, known = euler_parts(g)
        parts[unknown_index("w", g=gi)] = -g
        emit(parts, known, quadratic_ok=False)

    sol = frac_solve(rows, rhs)
    weights = [Fraction(0)] * n
    shifts = [Fraction(0)] * n
    weights[k0] = Fraction(1)
    for a in e_slots:
        weights[a] = sol[unknown_index("e", a=a)]
    for a in r_slots:
        shifts[a] = sol[unknown_index("r", a=a)]
    d = sol[unknown_index("d")]
    return EulerField(tuple(weights), tuple(shifts)), d
