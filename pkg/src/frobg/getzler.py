"""Genus-one checks: Getzler's equation, Euler-power identities, anomaly laws.

The G-candidates handled here all have the log-linear shape

    G = sum_a c_a t^a  +  sum_i q_i log kappa_i(t)

with rational coefficients and exp-polynomial arguments; this is the shape of
every known closed-form G-function on Coxeter and extended affine Weyl orbit
spaces.  Checks are exact on rational points and 64-digit floating otherwise.
"""

from __future__ import annotations

import itertools
import random
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, List, Optional, Sequence, Tuple, Union

from mpmath import mpf, workdps

from . import expr as ex
from .errors import NotQuasihomogeneous, UnsupportedShape
from .expr import (
    EvaluationPoint,
    ExpNumber,
    ExpPoly,
    Expression,
    RatFunc,
    exact_abs_mpf,
    exact_is_zero,
    to_exppoly,
    to_mpf,
)
from .frobenius import EulerField, FrobeniusFrame, Prepotential, charges, frame


@dataclass(frozen=True, slots=True)
class GCandidate:
    """Linear part plus rational multiples of logarithms of ring elements."""

    dimension: int
    linear: tuple  # Fractions, one per coordinate
    logs: tuple  # pairs (Fraction coefficient, ExpPoly argument)

    @staticmethod
    def of(dimension: int, linear=None, logs=None) -> "GCandidate":
        lin = list(Fraction(0) for _ in range(dimension))
        for a, c in (linear or {}).items():
            lin[a - 1] = Fraction(c)
        pairs = []
        for coeff, arg in logs or []:
            coeff = Fraction(coeff)
            if isinstance(arg, Expression):
                arg = to_exppoly(arg, dimension)
            if arg.is_zero():
                raise UnsupportedShape("log argument must be a nonzero ring element")
            if coeff != 0:
                pairs.append((coeff, arg))
        return GCandidate(dimension, tuple(lin), tuple(pairs))

    @staticmethod
    def zero(dimension: int) -> "GCandidate":
        return GCandidate.of(dimension)

    def is_zero(self) -> bool:
        return all(c == 0 for c in self.linear) and not self.logs

    def gradient(self) -> tuple:
        """Symbolic first derivatives as RatFuncs."""
        n = self.dimension
        out = []
        for a in range(n):
            r = RatFunc(ExpPoly.constant(n, self.linear[a]))
            for coeff, kappa in self.logs:
                dk = kappa.diff(a)
                if not dk.is_zero():
                    r = r + RatFunc(dk.scale(coeff), kappa)
            out.append(r)
        return tuple(out)

    def hessian(self) -> tuple:
        n = self.dimension
        out = [[RatFunc(ExpPoly(n)) for _ in range(n)] for _ in range(n)]
        for coeff, kappa in self.logs:
            dk = [kappa.diff(a) for a in range(n)]
            k2 = kappa * kappa
            for a in range(n):
                for b in range(a, n):
                    num = kappa * dk[a].diff(b) - dk[a] * dk[b]
                    term = RatFunc(num.scale(coeff), k2)
                    out[a][b] = out[a][b] + term
                    if b != a:
                        out[b][a] = out[b][a] + term
        return tuple(tuple(row) for row in out)

    def value_mp(self, p: EvaluationPoint, dps: Optional[int] = None):
        with workdps(dps or ex.default_dps()):
            vals = p.to_mpf(dps)
            total = mpf(0)
            for a, c in enumerate(self.linear):
                if c:
                    total += to_mpf(c, dps) * vals[a]
            for coeff, kappa in self.logs:
                from mpmath import log as mplog

                total += to_mpf(coeff, dps) * mplog(kappa.eval_mp(vals, dps))
            return total

    def to_expression(self) -> Expression:
        out = ex.ZERO
        for a, c in enumerate(self.linear):
            if c:
                out = out + ex.Rat(c) * ex.Var(a)
        for coeff, kappa in self.logs:
            out = out + ex.Rat(coeff) * ex.Log(kappa.to_expr())
        return out


@dataclass(frozen=True, slots=True)
class CausticDatum:
    """One caustic component: vanishing polynomial and germ type I2(N).

    ``kappa`` may be None when the component never contributes a log term
    (N = 3) or when only its Euler weight is known (reference data rows).
    """

    kappa: Optional[ExpPoly]
    N: Optional[int]
    n_log: Optional[int] = None
    weight: Optional[Fraction] = None

    @staticmethod
    def of(kappa=None, N=None, n_log=None, weight=None, dimension=None) -> "CausticDatum":
        if isinstance(kappa, Expression):
            if dimension is None:
                dimension = ex.max_var_index(kappa)
            kappa = to_exppoly(kappa, dimension)
        if N is not None and N < 3:
            raise ValueError("finite caustic germ type requires N >= 3")
        if n_log is not None and n_log < 1:
            raise ValueError("logarithmic caustic exponent must be >= 1")
        return CausticDatum(
            kappa, N, n_log, Fraction(weight) if weight is not None else None
        )

    def log_coefficient(self) -> Fraction:
        if self.N is None:
            return Fraction(0)
        return Fraction((self.N - 2) * (self.N - 3), self.N)


# ---------------------------------------------------------------------------
# gradient/hessian caches and pointwise values
# ---------------------------------------------------------------------------

_GRAD_CACHE: dict = {}


def _g_derivatives(G: GCandidate):
    got = _GRAD_CACHE.get(G)
    if got is None:
        got = (G.gradient(), G.hessian())
        _GRAD_CACHE[G] = got
    return got


def _g_values(G: GCandidate, fr: FrobeniusFrame, dps: Optional[int]):
    grad, hess = _g_derivatives(G)
    n = G.dimension
    if fr.mode == "exact":
        g1 = tuple(r.eval_exact(fr.point) for r in grad)
        g2 = tuple(tuple(hess[a][b].eval_exact(fr.point) for b in range(n)) for a in range(n))
    else:
        vals = fr.point.to_mpf(dps)
        g1 = tuple(r.eval_mp(vals, dps) for r in grad)
        g2 = tuple(tuple(hess[a][b].eval_mp(vals, dps) for b in range(n)) for a in range(n))
    return g1, g2


def _const(fr: FrobeniusFrame, p: int, q: int, dps: Optional[int]):
    c = Fraction(p, q)
    return c if fr.mode == "exact" else to_mpf(c, dps)


# ---------------------------------------------------------------------------
# Getzler's equation
# ---------------------------------------------------------------------------


def delta_tensor(fr: FrobeniusFrame, G: GCandidate, dps: Optional[int] = None) -> tuple:
    """The seven-term genus-one tensor Delta_{a1 a2 a3 a4} at the frame's point."""
    n = len(fr.U)
    r3, r4, r5 = fr.r3, fr.r4, fr.r5
    g1, g2 = _g_values(G, fr, dps)
    rng = range(n)

    hlow = [sum(r3[nu][m][nu] for nu in rng) for m in rng]
    w = [[sum(r4[nu][a4][m][nu] for nu in rng) for a4 in rng] for m in rng]
    r3g = [[sum(r3[nu][a4][m] * g1[nu] for nu in rng) for m in rng] for a4 in rng]
    r4g = [
        [[sum(r4[nu][a3][a4][m] * g1[nu] for nu in rng) for m in rng] for a4 in rng]
        for a3 in rng
    ]
    b = [
        [[sum(r3[m][a1][a2] * g2[m][nu] for m in rng) for a2 in rng] for a1 in rng]
        for nu in rng
    ]
    dmat = [
        [[sum(r3[nu][a3][m] * g2[a4][nu] for nu in rng) for a4 in rng] for m in rng]
        for a3 in rng
    ]

    c16 = _const(fr, 1, 6, dps)
    c124 = _const(fr, 1, 24, dps)
    c14 = _const(fr, 1, 4, dps)

    def entry(a1, a2, a3, a4):
        t1 = 3 * sum(b[nu][a1][a2] * r3[nu][a3][a4] for nu in rng)
        t2 = -4 * sum(r3[m][a1][a2] * dmat[a3][m][a4] for m in rng)
        t3 = -sum(r3[m][a1][a2] * r4g[a3][a4][m] for m in rng)
        t4 = 2 * sum(r4[m][a1][a2][a3] * r3g[a4][m] for m in rng)
        t5 = c16 * sum(r4[m][a1][a2][a3] * w[m][a4] for m in rng)
        t6 = c124 * sum(r5[m][a1][a2][a3][a4] * hlow[m] for m in rng)
        t7 = -c14 * sum(r4[m][a1][a2][nu] * r4[nu][a3][a4][m] for m in rng for nu in rng)
        return t1 + t2 + t3 + t4 + t5 + t6 + t7

    return tuple(
        tuple(tuple(tuple(entry(a1, a2, a3, a4) for a4 in rng) for a3 in rng) for a2 in rng)
        for a1 in rng
    )


def symmetrized_delta(delta: tuple, n: int) -> dict:
    """Full symmetrization, reported on sorted index quadruples."""
    out = {}
    for combo in itertools.combinations_with_replacement(range(n), 4):
        perms = set(itertools.permutations(combo))
        total = None
        for p in perms:
            v = delta[p[0]][p[1]][p[2]][p[3]]
            total = v if total is None else total + v
        frac = Fraction(1, len(perms))
        if isinstance(total, (Fraction, int, ExpNumber)):
            out[combo] = total * frac
        else:
            out[combo] = total / len(perms)
    return out


def _z_vectors(n: int, count: int, seed: int) -> list:
    rng = random.Random(seed)
    out = []
    while len(out) < count:
        z = tuple(Fraction(rng.randint(-16, 16), 8) for _ in range(n))
        if any(z):
            out.append(z)
    return out


def getzler_residual(
    P: Prepotential,
    G: GCandidate,
    points: Sequence[EvaluationPoint],
    method: str = "sym",
    z_count: int = 50,
    seed: int = 0,
    mode: str = "auto",
    dps: Optional[int] = None,
):
    """Max Getzler defect over the points.

    ``method="sym"`` takes the max over fully symmetrized index quadruples,
    ``method="z"`` over seeded random rank-one contractions z^4 . Delta.
    Returns Fraction(0) when every sampled value vanishes exactly.
    """
    if not points:
        raise ValueError("at least one point is required")
    worst = None
    exact_all = True
    for p in points:
        fr = frame(P, p, mode=mode, dps=dps)
        delta = delta_tensor(fr, G, dps=dps)
        n = len(delta)
        if method == "sym":
            values = symmetrized_delta(delta, n).values()
        elif method == "z":
            values = []
            for z in _z_vectors(n, z_count, seed):
                zz = z if fr.mode == "exact" else tuple(to_mpf(c, dps) for c in z)
                total = None
                for a1 in range(n):
                    for a2 in range(n):
                        for a3 in range(n):
                            for a4 in range(n):
                                v = zz[a1] * zz[a2] * zz[a3] * zz[a4] * delta[a1][a2][a3][a4]
                                total = v if total is None else total + v
                values.append(total)
        else:
            raise ValueError(f"unknown method {method!r}")
        for v in values:
            if isinstance(v, (Fraction, int, ExpNumber)):
                if not exact_is_zero(v):
                    exact_all = False
                    mag = exact_abs_mpf(v, dps)
                    worst = mag if worst is None or mag > worst else worst
            else:
                exact_all = False
                mag = abs(v)
                worst = mag if worst is None or mag > worst else worst
    if worst is None and exact_all:
        return Fraction(0)
    return worst


# ---------------------------------------------------------------------------
# Euler-power identities
# ---------------------------------------------------------------------------


def check_bo7(G: GCandidate, P: Prepotential) -> bool:
    """True iff the derivative of G along the unit field vanishes identically."""
    grad, _ = _g_derivatives(G)
    return grad[P.identity_index - 1].is_zero()


def euler_derivative_exact(G: GCandidate, euler: EulerField) -> Fraction:
    """Exact constant value of dG along E; raises if it is not constant."""
    total = Fraction(0)
    for a, c in enumerate(G.linear):
        if c and euler.weights[a] != 0:
            raise NotQuasihomogeneous("E(G) is not constant: weighted linear term survives")
        total += c * euler.shifts[a]
    for coeff, kappa in G.logs:
        total += coeff * euler.poly_weight(kappa)
    return total


def gamma_anomaly(mu: Sequence[Fraction], n: int, d: Fraction) -> Fraction:
    return -sum((m * m for m in mu), Fraction(0)) / 4 + Fraction(n) * d / 48


def gamma_theorem1(P: Prepotential) -> Fraction:
    """Scaling anomaly from the charges alone."""
    _, mu, d = charges(P)
    return gamma_anomaly(mu, P.dimension, d)


def check_bo8(
    P: Prepotential,
    G: GCandidate,
    p: Optional[EvaluationPoint] = None,
    tol: float = 1e-9,
    dps: Optional[int] = None,
):
    """Compare dG along E against the anomaly formula.

    With no point: exact rational comparison.  With a point: floating lhs
    evaluated there (it must not depend on the point).
    """
    rhs = gamma_theorem1(P)
    if p is None:
        lhs = euler_derivative_exact(G, P.euler)
        return lhs, rhs, lhs == rhs
    grad, _ = _g_derivatives(G)
    vals = p.to_mpf(dps)
    with workdps(dps or ex.default_dps()):
        evec = [to_mpf(P.euler.weights[a], dps) * vals[a] + to_mpf(P.euler.shifts[a], dps) for a in range(P.dimension)]
        lhs = sum(evec[a] * grad[a].eval_mp(vals, dps) for a in range(P.dimension))
        rhs_f = to_mpf(rhs, dps)
        return lhs, rhs_f, bool(abs(lhs - rhs_f) <= tol)


def _mat_mul(A, B, n):
    return tuple(
        tuple(sum(A[i][k] * B[k][j] for k in range(n)) for j in range(n)) for i in range(n)
    )


def _mat_vec(A, v, n):
    return tuple(sum(A[i][k] * v[k] for k in range(n)) for i in range(n))


def _mat_pow(A, k, n, ident):
    out = ident
    for _ in range(k):
        out = _mat_mul(out, A, n)
    return out


def check_bo9(
    P: Prepotential,
    G: GCandidate,
    k: int,
    p: EvaluationPoint,
    tol: float = 1e-8,
    mode: str = "auto",
    dps: Optional[int] = None,
):
    """Derivative of G along the k-fold Euler power versus the trace formula.

    lhs: directional derivative of G along U^{k-1} E.
    rhs: -(1/4) tr(mu sum_j U^j mu U^{k-1-j})
         -(1/24) < (sum_j U^j mu U^{k-2-j}) E - (d/2) U^{k-2} E, H >.
    Returns (lhs, rhs, match).
    """
    if k < 2:
        raise ValueError("the Euler-power identity needs k >= 2")
    fr = frame(P, p, mode=mode, dps=dps)
    n = len(fr.U)
    exact = fr.mode == "exact"
    one = Fraction(1) if exact else to_mpf(1, dps)
    zero = Fraction(0) if exact else to_mpf(0, dps)
    ident = tuple(tuple(one if i == j else zero for j in range(n)) for i in range(n))
    mu_mat = tuple(
        tuple((fr.mu[i] if exact else fr.mu[i]) if i == j else zero for j in range(n))
        for i in range(n)
    )
    U = fr.U

    upow = [ident]
    for _ in range(k):
        upow.append(_mat_mul(upow[-1], U, n))

    first = None
    for j in range(k):
        term = _mat_mul(_mat_mul(upow[j], mu_mat, n), upow[k - 1 - j], n)
        first = term if first is None else tuple(
            tuple(a + b for a, b in zip(ra, rb)) for ra, rb in zip(first, term)
        )
    tr = sum(_mat_mul(mu_mat, first, n)[i][i] for i in range(n))

    second_op = None
    for j in range(k - 1):
        term = _mat_mul(_mat_mul(upow[j], mu_mat, n), upow[k - 2 - j], n)
        second_op = term if second_op is None else tuple(
            tuple(a + b for a, b in zip(ra, rb)) for ra, rb in zip(second_op, term)
        )
    evec = fr.euler_vec
    vec = _mat_vec(second_op, evec, n)
    half_d = fr.d / 2 if exact else to_mpf(fr.d, dps) / 2
    shift = _mat_vec(upow[k - 2], evec, n)
    vec = tuple(a - half_d * b for a, b in zip(vec, shift))
    pairing = sum(
        fr.eta[a][b] * vec[a] * fr.H[b] for a in range(n) for b in range(n)
        if not (isinstance(fr.eta[a][b], Fraction) and fr.eta[a][b] == 0)
    )

    quarter = Fraction(1, 4) if exact else to_mpf(Fraction(1, 4), dps)
    c24 = Fraction(1, 24) if exact else to_mpf(Fraction(1, 24), dps)
    rhs = -quarter * tr - c24 * pairing

    grad, _ = _g_derivatives(G)
    direction = _mat_vec(upow[k - 1], evec, n)
    if exact:
        g1 = [r.eval_exact(p) for r in grad]
    else:
        vals = p.to_mpf(dps)
        g1 = [r.eval_mp(vals, dps) for r in grad]
    lhs = sum(direction[a] * g1[a] for a in range(n))

    if exact:
        diff = lhs - rhs
        if isinstance(diff, (int, Fraction)):
            match = diff == 0
        else:
            match = diff.is_zero()
        return lhs, rhs, match
    return lhs, rhs, bool(abs(lhs - rhs) <= tol)


# ---------------------------------------------------------------------------
# construction from caustic data
# ---------------------------------------------------------------------------


def build_g_coxeter(data: Iterable[CausticDatum], n: Optional[int] = None) -> GCandidate:
    """G = -(1/24) sum_i ((N_i - 2)(N_i - 3) / N_i) log kappa_i."""
    data = list(data)
    if n is None:
        dims = [d.kappa.nvars for d in data if d.kappa is not None]
        if not dims:
            raise ValueError("dimension is not deducible from the caustic data")
        n = dims[0]
    logs = []
    for datum in data:
        coeff = -datum.log_coefficient() / 24
        if coeff == 0:
            continue
        if datum.kappa is None:
            raise ValueError("a caustic with N > 3 needs its vanishing polynomial")
        logs.append((coeff, datum.kappa))
    return GCandidate.of(n, logs=logs)


def build_g_eaw(data: Iterable[CausticDatum], n_log: int, n: int) -> GCandidate:
    """G = -(n_log/24) t^n plus the Coxeter-style log sum."""
    if n_log < 1:
        raise ValueError("logarithmic caustic exponent must be >= 1")
    base = build_g_coxeter(data, n=n)
    linear = list(base.linear)
    linear[n - 1] += Fraction(-n_log, 24)
    return GCandidate(n, tuple(linear), base.logs)


def gamma_from_caustics(
    data: Iterable[CausticDatum], n_log: int, euler: EulerField
) -> Fraction:
    """Anomaly assembled from caustic weights and the log-caustic term."""
    n = euler.dimension
    total = Fraction(0)
    if n_log:
        if euler.weights[n - 1] != 0:
            raise NotQuasihomogeneous(
                "a logarithmic caustic needs a pure shift along the last coordinate"
            )
        total += Fraction(-n_log, 24) * euler.shifts[n - 1]
    for datum in data:
        coeff = datum.log_coefficient()
        if coeff == 0:
            continue
        if datum.weight is not None:
            w = datum.weight
        elif datum.kappa is not None:
            w = euler.poly_weight(datum.kappa)
        else:
            raise NotQuasihomogeneous("caustic datum carries neither kappa nor weight")
        total += -coeff * w / 24
    return total
