"""Small exact linear algebra over Expr: determinants, adjugates, coefficient extraction."""
from __future__ import annotations

from fractions import Fraction
from typing import Iterable, Sequence

from .expr import ONE, ZERO, Apply, Expr, Symbol

__all__ = ["det", "adjugate", "coefficients_in", "is_linear_in", "is_affine_in", "solve_constant"]


def det(m: Sequence[Sequence[Expr]]) -> Expr:
    n = len(m)
    if n == 0:
        return ONE
    if n == 1:
        return m[0][0]
    if n == 2:
        return m[0][0] * m[1][1] - m[0][1] * m[1][0]
    out = ZERO
    for j in range(n):
        if m[0][j].is_zero():
            continue
        minor = [row[:j] + row[j + 1:] for row in m[1:]]
        term = m[0][j] * det(minor)
        out = out + term if j % 2 == 0 else out - term
    return out


def adjugate(m: Sequence[Sequence[Expr]]) -> list[list[Expr]]:
    """``adj(m)`` with ``m @ adj(m) = det(m) * I``."""
    n = len(m)
    if n == 1:
        return [[ONE]]
    adj = [[ZERO] * n for _ in range(n)]
    for i in range(n):
        for j in range(n):
            minor = [row[:j] + row[j + 1:] for k, row in enumerate(m) if k != i]
            c = det(minor)
            adj[j][i] = c if (i + j) % 2 == 0 else -c
    return adj


def _depends(atom, names: set) -> bool:
    if isinstance(atom, Symbol):
        return atom.name in names
    return any(a.free_symbols() & names for a in atom.args)


def coefficients_in(e: Expr, names: Iterable[str]) -> dict:
    """Split ``e`` as ``sum_k coeff_k * key_k`` where keys collect every atom depending on ``names``.

    Keys are monomials (tuples of ``(atom, power)``); ``()`` is the part free
    of ``names``.
    """
    names = set(names)
    out: dict = {}
    for mono, c in e.terms:
        key = tuple((a, k) for a, k in mono if _depends(a, names))
        rest = tuple((a, k) for a, k in mono if not _depends(a, names))
        out[key] = out.get(key, ZERO) + Expr({rest: c})
    return {k: v for k, v in out.items() if not v.is_zero()}


def _degree_ok(e: Expr, names: set, allowed: set) -> bool:
    for key in coefficients_in(e, names):
        deg = 0
        for atom, k in key:
            if isinstance(atom, Apply):
                return False
            deg += k
        if deg not in allowed:
            return False
    return True


def is_linear_in(e: Expr, names: Iterable[str]) -> bool:
    """Homogeneous of degree one, polynomially, in ``names``."""
    return _degree_ok(e, set(names), {1})


def is_affine_in(e: Expr, names: Iterable[str]) -> bool:
    return _degree_ok(e, set(names), {0, 1})


def solve_constant(matrix: Sequence[Sequence[Expr]], rhs: Sequence[Expr]):
    """Solve ``matrix @ v = rhs`` exactly when ``matrix`` has rational entries.

    ``rhs`` may be arbitrary Exprs.  Returns the unique solution (free
    variables set to zero when underdetermined) or ``None`` when the system
    is inconsistent.  Raises ``ValueError`` for non-constant coefficients.
    """
    rows = len(matrix)
    cols = len(matrix[0]) if rows else 0
    a = []
    for r in range(rows):
        row = []
        for c in range(cols):
            if not matrix[r][c].is_constant():
                raise ValueError("coefficient matrix is not constant")
            row.append(matrix[r][c].constant_value())
        a.append(row)
    b = list(rhs)
    pivots = []
    r = 0
    for c in range(cols):
        p = next((k for k in range(r, rows) if a[k][c] != 0), None)
        if p is None:
            continue
        a[r], a[p] = a[p], a[r]
        b[r], b[p] = b[p], b[r]
        inv = 1 / a[r][c]
        a[r] = [v * inv for v in a[r]]
        b[r] = b[r] * inv
        for k in range(rows):
            if k != r and a[k][c] != 0:
                f = a[k][c]
                a[k] = [x - f * y for x, y in zip(a[k], a[r])]
                b[k] = b[k] - b[r] * f
        pivots.append(c)
        r += 1
        if r == rows:
            break
    for k in range(r, rows):
        if not b[k].is_zero():
            return None
    sol = [ZERO] * cols
    for k, c in enumerate(pivots):
        sol[c] = b[k]
    return sol


def as_fraction_matrix(m):
    return [[Fraction(v) for v in row] for row in m]
