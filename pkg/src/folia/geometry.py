"""Ambient Lie algebroids, brackets, anchors and singular subalgebroids.

Three ambient kinds are supported:

``tangent``
    ``A = TM`` over ``R^n`` with the coordinate frame; integrated by the pair
    groupoid.
``action``
    The action algebroid ``R^d x g`` of a linear action of a matrix Lie
    algebra ``g``; integrated by the transformation groupoid ``G x| R^d``.
``liealgebra``
    A Lie algebra over a point; integrated by its matrix group.

The anchor of an action algebroid sends the frame element ``e_a`` to the
linear vector field ``x -> A_a x``. Since ``A -> (x -> A x)`` reverses
commutators, the algebroid bracket of constant sections is the *negated*
matrix commutator (the right-invariant convention used for transformation
groupoids). The construction asserts that the anchor is then a Lie algebra
morphism.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

from . import linalg
from .polycore import DEFAULT_DEGREE_BOUND, FreeModuleElem, Poly, RankMismatch, Submodule

Matrix = tuple[tuple[Fraction, ...], ...]


class AlgebraError(ValueError):
    pass


def _mat(rows) -> Matrix:
    return tuple(tuple(Fraction(c) for c in row) for row in rows)


def _matmul(a: Matrix, b: Matrix) -> Matrix:
    n, m, p = len(a), len(b), len(b[0])
    return tuple(
        tuple(sum((a[i][k] * b[k][j] for k in range(m)), Fraction(0)) for j in range(p))
        for i in range(n)
    )


def commutator(a: Matrix, b: Matrix) -> Matrix:
    ab, ba = _matmul(a, b), _matmul(b, a)
    return tuple(tuple(x - y for x, y in zip(r1, r2)) for r1, r2 in zip(ab, ba))


def _flat(m: Matrix) -> list[Fraction]:
    return [c for row in m for c in row]


def _q(n: int, d: int = 1) -> Fraction:
    return Fraction(n, d)


NAMED_ALGEBRAS: dict[str, tuple[Matrix, ...]] = {
    "so2": (_mat([[0, -1], [1, 0]]),),
    "so3": (
        _mat([[0, 0, 0], [0, 0, -1], [0, 1, 0]]),
        _mat([[0, 0, 1], [0, 0, 0], [-1, 0, 0]]),
        _mat([[0, -1, 0], [1, 0, 0], [0, 0, 0]]),
    ),
    # left multiplication by i/2, j/2, k/2 on the quaternions H = R^4
    "su2": (
        _mat([[0, _q(-1, 2), 0, 0], [_q(1, 2), 0, 0, 0], [0, 0, 0, _q(-1, 2)], [0, 0, _q(1, 2), 0]]),
        _mat([[0, 0, _q(-1, 2), 0], [0, 0, 0, _q(1, 2)], [_q(1, 2), 0, 0, 0], [0, _q(-1, 2), 0, 0]]),
        _mat([[0, 0, 0, _q(-1, 2)], [0, 0, _q(-1, 2), 0], [0, _q(1, 2), 0, 0], [_q(1, 2), 0, 0, 0]]),
    ),
    "gl2": (
        _mat([[1, 0], [0, 0]]),
        _mat([[0, 1], [0, 0]]),
        _mat([[0, 0], [1, 0]]),
        _mat([[0, 0], [0, 1]]),
    ),
}


def structure_constants(matrices: Sequence[Matrix]) -> tuple[tuple[tuple[Fraction, ...], ...], ...]:
    """Constants ``c[a][b][c]`` with ``[M_a, M_b] = sum_c c[a][b][c] M_c``.

    Raises AlgebraError if the matrices are dependent or not closed under
    the commutator.
    """
    flats = [_flat(m) for m in matrices]
    if flats and linalg.rank(flats) != len(flats):
        raise AlgebraError("realization matrices are linearly dependent")
    d = len(matrices)
    out = []
    for a in range(d):
        row = []
        for b in range(d):
            comm = _flat(commutator(matrices[a], matrices[b]))
            sol = linalg.solve(flats, comm)
            if sol is None:
                raise AlgebraError(f"[M{a + 1}, M{b + 1}] is not in the span of the realization")
            row.append(tuple(sol))
        out.append(tuple(row))
    return tuple(out)


def check_lie_constants(c) -> None:
    d = len(c)
    for a in range(d):
        for b in range(d):
            for k in range(d):
                if c[a][b][k] != -c[b][a][k]:
                    raise AlgebraError(f"structure constants not antisymmetric at ({a},{b},{k})")
    for a in range(d):
        for b in range(d):
            for e in range(d):
                for m in range(d):
                    s = sum(
                        c[b][e][k] * c[a][k][m] + c[e][a][k] * c[b][k][m] + c[a][b][k] * c[e][k][m]
                        for k in range(d)
                    )
                    if s:
                        raise AlgebraError(f"Jacobi identity fails on ({a},{b},{e})")


@dataclass(frozen=True)
class AmbientAlgebroid:
    kind: str
    names: tuple[str, ...]
    matrices: tuple[Matrix, ...] = ()
    algebra: str | None = None
    constants: tuple = field(default=(), compare=False)

    def __post_init__(self):
        if self.kind not in ("tangent", "action", "liealgebra"):
            raise AlgebraError(f"unknown ambient kind {self.kind!r}")
        if self.kind == "tangent":
            return
        if not self.matrices:
            raise AlgebraError(f"{self.kind} ambient needs a realization")
        size = len(self.matrices[0])
        for m in self.matrices:
            if len(m) != size or any(len(r) != size for r in m):
                raise AlgebraError("realization matrices must be square of equal size")
        if self.kind == "action" and size != len(self.names):
            raise AlgebraError(f"{size}x{size} matrices cannot act on R^{len(self.names)}")
        if self.kind == "liealgebra" and self.names:
            raise AlgebraError("a Lie algebra lives over a point; it takes no variables")
        c = structure_constants(self.matrices)
        check_lie_constants(c)
        object.__setattr__(self, "constants", c)
        if self.kind == "action":
            self._check_anchor_morphism()

    @classmethod
    def tangent(cls, names: Sequence[str] | int) -> "AmbientAlgebroid":
        if isinstance(names, int):
            names = [f"x{i + 1}" for i in range(names)]
        return cls("tangent", tuple(names))

    @classmethod
    def action(cls, algebra: str | Sequence, names: Sequence[str] | None = None) -> "AmbientAlgebroid":
        name, mats = _resolve_algebra(algebra)
        if names is None:
            names = [f"x{i + 1}" for i in range(len(mats[0]))]
        return cls("action", tuple(names), mats, name)

    @classmethod
    def lie_algebra(cls, algebra: str | Sequence) -> "AmbientAlgebroid":
        name, mats = _resolve_algebra(algebra)
        return cls("liealgebra", (), mats, name)

    @property
    def nvars(self) -> int:
        return len(self.names)

    @property
    def rank(self) -> int:
        return self.nvars if self.kind == "tangent" else len(self.matrices)

    def frame_symbols(self) -> tuple[str, ...]:
        if self.kind == "tangent":
            return tuple(f"d{n}" for n in self.names)
        return tuple(f"e{a + 1}" for a in range(self.rank))

    def frame_bracket(self, a: int, b: int) -> tuple[Fraction, ...]:
        """Coefficients of the algebroid bracket ``[e_a, e_b]`` of constant frame sections."""
        if self.kind == "tangent":
            return (Fraction(0),) * self.rank
        c = self.constants[a][b]
        return tuple(-x for x in c) if self.kind == "action" else c

    def anchor(self, s: FreeModuleElem) -> FreeModuleElem:
        """The vector field rho(s) on M."""
        self._check(s)
        if self.kind == "tangent":
            return s
        n = self.nvars
        if self.kind == "liealgebra":
            return FreeModuleElem([], n)
        xs = [Poly.var(i, n) for i in range(n)]
        comps = [Poly.zero(n) for _ in range(n)]
        for a, coeff in enumerate(s):
            if not coeff:
                continue
            A = self.matrices[a]
            for i in range(n):
                lin = Poly.zero(n)
                for j in range(n):
                    if A[i][j]:
                        lin = lin + xs[j] * A[i][j]
                if lin:
                    comps[i] = comps[i] + coeff * lin
        return FreeModuleElem(comps, n)

    def _check(self, s: FreeModuleElem) -> None:
        if s.rank != self.rank or s.nvars != self.nvars:
            raise RankMismatch(
                f"section of rank {s.rank} over {s.nvars} vars does not fit ambient of rank {self.rank} over {self.nvars} vars"
            )

    def _check_anchor_morphism(self) -> None:
        d, n = self.rank, self.nvars
        for a in range(d):
            for b in range(a + 1, d):
                ea = FreeModuleElem.basis(a, d, n)
                eb = FreeModuleElem.basis(b, d, n)
                lhs = self.anchor(bracket(ea, eb, self))
                rhs = vector_field_bracket(self.anchor(ea), self.anchor(eb))
                if lhs != rhs:
                    raise AlgebraError(f"anchor is not a Lie algebra morphism on (e{a + 1}, e{b + 1})")

    def section(self, coeffs: Sequence) -> FreeModuleElem:
        n = self.nvars
        return FreeModuleElem(
            [c if isinstance(c, Poly) else Poly.const(c, n) for c in coeffs], n
        )


def _resolve_algebra(algebra) -> tuple[str, tuple[Matrix, ...]]:
    if isinstance(algebra, str):
        try:
            return algebra, NAMED_ALGEBRAS[algebra]
        except KeyError:
            raise AlgebraError(f"unknown named algebra {algebra!r}") from None
    return "custom", tuple(_mat(m) for m in algebra)


def _derive(v: FreeModuleElem, f: Poly) -> Poly:
    out = Poly.zero(f.nvars)
    for i, vi in enumerate(v):
        if vi:
            d = f.diff(i)
            if d:
                out = out + vi * d
    return out


def vector_field_bracket(v: FreeModuleElem, w: FreeModuleElem) -> FreeModuleElem:
    """Jacobi-Lie bracket ``[v, w]^k = v(w^k) - w(v^k)``."""
    if v.rank != w.rank or v.nvars != w.nvars or v.rank != v.nvars:
        raise RankMismatch("vector fields must both have rank = number of variables")
    return FreeModuleElem([_derive(v, wk) - _derive(w, vk) for vk, wk in zip(v, w)], v.nvars)


def bracket(a: FreeModuleElem, b: FreeModuleElem, ambient: AmbientAlgebroid) -> FreeModuleElem:
    """Lie algebroid bracket of two sections of the ambient algebroid."""
    ambient._check(a)
    ambient._check(b)
    if ambient.kind == "tangent":
        return vector_field_bracket(a, b)
    n, r = ambient.nvars, ambient.rank
    comps = [Poly.zero(n) for _ in range(r)]
    for i, ai in enumerate(a):
        if not ai:
            continue
        for j, bj in enumerate(b):
            if not bj or i == j:
                continue
            prod = None
            for k, c in enumerate(ambient.frame_bracket(i, j)):
                if c:
                    prod = ai * bj if prod is None else prod
                    comps[k] = comps[k] + prod * c
    if ambient.kind == "action":
        va, vb = ambient.anchor(a), ambient.anchor(b)
        for k in range(r):
            comps[k] = comps[k] + _derive(va, b[k]) - _derive(vb, a[k])
    return FreeModuleElem(comps, n)


@dataclass(frozen=True)
class Involutivity:
    verified: bool
    pair: tuple[int, int] | None = None
    bracket: FreeModuleElem | None = None

    @property
    def status(self) -> str:
        return "verified" if self.verified else "refuted"


class SingularSubalgebroid:
    """A finitely generated submodule of sections of an ambient algebroid."""

    def __init__(
        self,
        ambient: AmbientAlgebroid,
        generators: Sequence[FreeModuleElem],
        degree_bound: int = DEFAULT_DEGREE_BOUND,
        name: str | None = None,
    ):
        gens = tuple(generators)
        for g in gens:
            ambient._check(g)
        self.ambient = ambient
        self.generators = gens
        self.degree_bound = degree_bound
        self.name = name
        self._module: Submodule | None = None
        self._involutivity: Involutivity | None = None

    @property
    def module(self) -> Submodule:
        if self._module is None:
            self._module = Submodule(
                self.generators,
                rank=self.ambient.rank,
                nvars=self.ambient.nvars,
                degree_bound=self.degree_bound,
            )
        return self._module

    @property
    def nvars(self) -> int:
        return self.ambient.nvars

    @property
    def rank(self) -> int:
        return self.ambient.rank

    @property
    def ngens(self) -> int:
        return len(self.generators)

    @property
    def involutivity(self) -> str:
        return "unchecked" if self._involutivity is None else self._involutivity.status

    def contains(self, s: FreeModuleElem) -> bool:
        return self.module.contains(s)

    def bracket(self, a: FreeModuleElem, b: FreeModuleElem) -> FreeModuleElem:
        return bracket(a, b, self.ambient)

    def anchored_generators(self) -> list[FreeModuleElem]:
        return [self.ambient.anchor(g) for g in self.generators]

    def __eq__(self, other) -> bool:
        if not isinstance(other, SingularSubalgebroid):
            return NotImplemented
        return self.ambient == other.ambient and self.generators == other.generators

    def __hash__(self) -> int:
        return hash((self.ambient, self.generators))

    def __repr__(self) -> str:
        return f"SingularSubalgebroid({self.ambient.kind}, {list(self.generators)!r})"


def check_involutive(B: SingularSubalgebroid) -> Involutivity:
    """Exact involutivity test on generator pairs; caches the verdict on ``B``."""
    if B._involutivity is not None:
        return B._involutivity
    result = Involutivity(True)
    gens = B.generators
    for i in range(len(gens)):
        for j in range(i, len(gens)):
            br = B.bracket(gens[i], gens[j])
            if not br.is_zero() and not B.contains(br):
                result = Involutivity(False, (i, j), br)
                break
        if not result.verified:
            break
    B._involutivity = result
    return result


def subalgebroid_over_submanifold(
    ambient: AmbientAlgebroid, n: int, b: int
) -> SingularSubalgebroid:
    """Sections supported on ``N = {x_i = 0, i >= n}`` tangent to the first ``b`` frame elements.

    Generators: the first ``b`` frame elements, then ``x_i * e_j`` for
    frame index ``j >= b`` (outer) and coordinate index ``i >= n`` (inner).
    """
    m, r = ambient.nvars, ambient.rank
    if not 0 <= n <= m:
        raise IndexError(f"submanifold dimension {n} outside 0..{m}")
    if not 0 <= b <= r:
        raise IndexError(f"subframe size {b} outside 0..{r}")
    gens = [FreeModuleElem.basis(j, r, m) for j in range(b)]
    for j in range(b, r):
        e = FreeModuleElem.basis(j, r, m)
        for i in range(n, m):
            gens.append(Poly.var(i, m) * e)
    return SingularSubalgebroid(ambient, gens)


def induced_foliation(B: SingularSubalgebroid) -> SingularSubalgebroid:
    """The singular foliation generated by the anchored generators."""
    tangent = AmbientAlgebroid.tangent(B.ambient.names)
    fields = [v for v in B.anchored_generators() if not v.is_zero()]
    F = SingularSubalgebroid(tangent, fields, degree_bound=B.degree_bound)
    if not check_involutive(F).verified:
        raise AlgebraError("induced foliation is not involutive; the input module was not involutive")
    return F
