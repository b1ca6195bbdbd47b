"""Exact linear algebra over Q, backed by sympy's DomainMatrix."""

from __future__ import annotations

from fractions import Fraction
from typing import Sequence

from sympy import QQ
from sympy.polys.matrices import DomainMatrix

Matrix = list[list[Fraction]]


def _dm(rows: Sequence[Sequence[Fraction]], ncols: int | None = None) -> DomainMatrix:
    rows = [list(r) for r in rows]
    m = len(rows)
    n = len(rows[0]) if rows else (ncols or 0)
    data = [[QQ(int(c.numerator), int(c.denominator)) for c in map(Fraction, r)] for r in rows]
    return DomainMatrix(data, (m, n), QQ)


def _frac(c) -> Fraction:
    return Fraction(int(c.numerator), int(c.denominator))


def _rows(dm: DomainMatrix) -> Matrix:
    return [[_frac(c) for c in row] for row in dm.to_list()]


def rank(rows: Sequence[Sequence[Fraction]]) -> int:
    if not rows or not len(rows[0]):
        return 0
    return _dm(rows).rank()


def nullspace(rows: Sequence[Sequence[Fraction]], ncols: int) -> Matrix:
    """Basis of {v : rows @ v == 0} as a list of vectors (reduced echelon form)."""
    if ncols == 0:
        return []
    if not rows:
        return [[Fraction(int(i == j)) for j in range(ncols)] for i in range(ncols)]
    ns = _dm(rows, ncols).nullspace()
    vecs = _rows(ns)
    return [v for v in vecs if any(v)]


def rowspace_basis(rows: Sequence[Sequence[Fraction]]) -> Matrix:
    if not rows:
        return []
    r, pivots = _dm(rows).rref()
    return _rows(r)[: len(pivots)]


def solve(columns: Sequence[Sequence[Fraction]], target: Sequence[Fraction]) -> list[Fraction] | None:
    """Find c with sum(c[j] * columns[j]) == target, or None."""
    m = len(target)
    if not columns:
        return [] if all(t == 0 for t in target) else None
    aug = [[Fraction(columns[j][i]) for j in range(len(columns))] + [Fraction(target[i])] for i in range(m)]
    if m == 0:
        return [Fraction(0)] * len(columns)
    r, pivots = _dm(aug).rref()
    nc = len(columns)
    if nc in pivots:
        return None
    red = _rows(r)
    sol = [Fraction(0)] * nc
    for row_idx, p in enumerate(pivots):
        sol[p] = red[row_idx][nc]
    return sol


def extend_to_complement(base: Matrix, candidates: Matrix) -> list[int]:
    """Indices of candidates extending ``base`` to a basis of span(base + candidates)."""
    chosen: list[int] = []
    current = [list(b) for b in base]
    r = rank(current) if current else 0
    for i, c in enumerate(candidates):
        trial = current + [list(c)]
        rt = rank(trial)
        if rt > r:
            current, r = trial, rt
            chosen.append(i)
    return chosen
