"""Small exact and polynomial linear-algebra helpers.

Floating linear algebra goes through mpmath; the routines here cover what
mpmath cannot do: exact rational matrices and determinants of matrices whose
entries are univariate polynomials.
"""

from __future__ import annotations

from fractions import Fraction
from typing import List, Optional, Sequence

from .errors import DegenerateMetric, NotQuasihomogeneous


def frac_matrix(rows) -> tuple:
    return tuple(tuple(Fraction(x) for x in row) for row in rows)


def frac_det(m: Sequence[Sequence[Fraction]]) -> Fraction:
    n = len(m)
    a = [list(row) for row in m]
    det = Fraction(1)
    for col in range(n):
        pivot = next((r for r in range(col, n) if a[r][col] != 0), None)
        if pivot is None:
            return Fraction(0)
        if pivot != col:
            a[col], a[pivot] = a[pivot], a[col]
            det = -det
        det *= a[col][col]
        inv = 1 / a[col][col]
        for r in range(col + 1, n):
            if a[r][col] == 0:
                continue
            f = a[r][col] * inv
            for c in range(col, n):
                a[r][c] -= f * a[col][c]
    return det


def frac_inv(m: Sequence[Sequence[Fraction]]) -> tuple:
    n = len(m)
    a = [list(row) + [Fraction(int(i == j)) for j in range(n)] for i, row in enumerate(m)]
    for col in range(n):
        pivot = next((r for r in range(col, n) if a[r][col] != 0), None)
        if pivot is None:
            raise DegenerateMetric("matrix is singular")
        a[col], a[pivot] = a[pivot], a[col]
        inv = 1 / a[col][col]
        a[col] = [x * inv for x in a[col]]
        for r in range(n):
            if r != col and a[r][col] != 0:
                f = a[r][col]
                a[r] = [x - f * y for x, y in zip(a[r], a[col])]
    return tuple(tuple(row[n:]) for row in a)


def frac_solve(rows: List[List[Fraction]], rhs: List[Fraction]) -> List[Fraction]:
    """Solve a (possibly overdetermined) exact linear system.

    Raises NotQuasihomogeneous on inconsistency or an underdetermined
    solution; callers use this for Euler-field recovery.
    """
    m = [list(r) + [b] for r, b in zip(rows, rhs)]
    nuk = len(rows[0]) if rows else 0
    rank = 0
    pivots = []
    for col in range(nuk):
        pivot = next((r for r in range(rank, len(m)) if m[r][col] != 0), None)
        if pivot is None:
            continue
        m[rank], m[pivot] = m[pivot], m[rank]
        inv = 1 / m[rank][col]
        m[rank] = [x * inv for x in m[rank]]
        for r in range(len(m)):
            if r != rank and m[r][col] != 0:
                f = m[r][col]
                m[r] = [x - f * y for x, y in zip(m[r], m[rank])]
        pivots.append(col)
        rank += 1
    for r in range(rank, len(m)):
        if m[r][nuk] != 0:
            raise NotQuasihomogeneous("inconsistent grading constraints")
    if rank < nuk:
        raise NotQuasihomogeneous("grading constraints do not determine the data")
    sol = [Fraction(0)] * nuk
    for r, col in enumerate(pivots):
        sol[col] = m[r][nuk]
    return sol


def poly_mat_det(entries: List[List[List]]):
    """Determinant of a matrix whose entries are polynomial coefficient lists.

    Coefficient lists are ascending in the indeterminate; works over any
    field whose scalars support +, *, - (mpf/mpc or Fraction).
    """

    def padd(a, b):
        if len(a) < len(b):
            a, b = b, a
        out = list(a)
        for i, x in enumerate(b):
            out[i] = out[i] + x
        return out

    def pmul(a, b):
        if not a or not b:
            return []
        out = [0] * (len(a) + len(b) - 1)
        for i, x in enumerate(a):
            if x == 0:
                continue
            for j, y in enumerate(b):
                out[i + j] = out[i + j] + x * y
        return out

    def pneg(a):
        return [-x for x in a]

    n = len(entries)
    if n == 1:
        return list(entries[0][0])
    det: Optional[list] = None
    for j in range(n):
        minor = [[entries[r][c] for c in range(n) if c != j] for r in range(1, n)]
        term = pmul(entries[0][j], poly_mat_det(minor))
        if j % 2:
            term = pneg(term)
        det = term if det is None else padd(det, term)
    return det or []
