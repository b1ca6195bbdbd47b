"""Pointwise invariants of a singular subalgebroid at rational points.

For generators ``g_1..g_k`` and a point ``x``, relations among the classes
``[g_i]`` in ``B/I_x B`` are exactly the evaluations ``s(x)`` of syzygies
``s``: if ``sum c_i g_i`` lies in ``I_x B`` then ``sum (c_i - f_i) g_i = 0``
for some ``f_i`` vanishing at ``x``, so ``c = s(x)`` for the syzygy
``s = c - f``; conversely ``sum s_i(x) g_i = -sum (s_i - s_i(x)) g_i`` lies in
``I_x B``. Hence ``dim B_x = k - rank{s(x)}``.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

from . import linalg
from .geometry import AmbientAlgebroid, SingularSubalgebroid, check_involutive
from .polycore import FreeModuleElem, Poly, Submodule

Point = tuple[Fraction, ...]


class PreconditionError(ValueError):
    pass


class LeafRankViolation(AssertionError):
    def __init__(self, message: str, pair: tuple[Point, Point]):
        super().__init__(message)
        self.pair = pair


def as_point(values: Sequence, nvars: int | None = None) -> Point:
    pt = []
    for v in values:
        if isinstance(v, float):
            raise TypeError(f"exact layer needs rational coordinates, got float {v!r}")
        pt.append(Fraction(v))
    if nvars is not None and len(pt) != nvars:
        raise ValueError(f"point has dimension {len(pt)}, expected {nvars}")
    return tuple(pt)


@dataclass
class FiberReport:
    point: Point
    dim_ev: int
    dim_fiber: int
    dim_isotropy: int
    fiber_basis: list[list[Fraction]]
    isotropy_basis: list[list[Fraction]]
    structure_constants: list[tuple[int, int, int, Fraction]]
    relations: list[list[Fraction]] = field(repr=False, default_factory=list)

    def constants_tensor(self) -> list[list[list[Fraction]]]:
        m = self.dim_isotropy
        c = [[[Fraction(0)] * m for _ in range(m)] for _ in range(m)]
        for i, j, k, v in self.structure_constants:
            c[i][j][k] = v
        return c

    def to_json(self) -> dict:
        return {
            "point": [str(v) for v in self.point],
            "dim_ev": self.dim_ev,
            "dim_fiber": self.dim_fiber,
            "dim_isotropy": self.dim_isotropy,
            "structure_constants": [[i, j, k, str(v)] for i, j, k, v in self.structure_constants],
            "verdicts": {"exact_sequence": self.dim_fiber == self.dim_ev + self.dim_isotropy},
        }


def _eval_matrix(gens: Sequence[FreeModuleElem], x: Point) -> list[list[Fraction]]:
    """Rows = frame components, columns = generators."""
    cols = [g.evaluate(x) for g in gens]
    r = len(cols[0]) if cols else 0
    return [[cols[j][i] for j in range(len(cols))] for i in range(r)]


def _relations(S: Submodule, x: Point) -> list[list[Fraction]]:
    rows = [[p.evaluate(x) for p in s] for s in S.syzygies]
    return linalg.rowspace_basis(rows) if rows else []


def _class_of(S: Submodule, section: FreeModuleElem, x: Point) -> list[Fraction]:
    rem, cert = S.normal_form(section)
    if not rem.is_zero():
        raise PreconditionError(f"{section!r} is not in the module (involutivity violated?)")
    return [c.evaluate(x) for c in cert]


def fiber_report(B: SingularSubalgebroid, x: Sequence, structure: bool = True) -> FiberReport:
    """Dimensions of ``B_x``, ``b_x`` and ``B/I_x B`` plus isotropy structure constants."""
    x = as_point(x, B.nvars)
    S = B.module
    k = S.ngens
    if k == 0:
        return FiberReport(x, 0, 0, 0, [], [], [], [])
    rel = _relations(S, x)
    evm = _eval_matrix(B.generators, x)
    dim_ev = linalg.rank(evm) if evm else 0
    dim_fiber = k - len(rel)
    unit = [[Fraction(int(i == j)) for j in range(k)] for i in range(k)]
    fiber_idx = linalg.extend_to_complement(rel, unit)
    fiber_basis = [unit[i] for i in fiber_idx]
    kernel = linalg.nullspace(evm, k) if evm else [list(u) for u in unit]
    iso_idx = linalg.extend_to_complement(rel, kernel)
    iso_basis = [kernel[i] for i in iso_idx]
    dim_iso = len(iso_basis)
    consts: list[tuple[int, int, int, Fraction]] = []
    if structure and dim_iso:
        consts = _isotropy_constants(B, x, iso_basis, rel)
    return FiberReport(x, dim_ev, dim_fiber, dim_iso, fiber_basis, iso_basis, consts, rel)


def _isotropy_constants(B, x, iso_basis, rel):
    S = B.module
    reps = [S.combine([Poly.const(c, B.nvars) for c in v]) for v in iso_basis]
    m = len(iso_basis)
    out = []
    for i in range(m):
        for j in range(i + 1, m):
            br = B.bracket(reps[i], reps[j])
            cls = _class_of(S, br, x) if not br.is_zero() else [Fraction(0)] * S.ngens
            sol = linalg.solve(list(iso_basis) + list(rel), cls)
            if sol is None:
                raise PreconditionError("bracket of isotropy elements left the isotropy algebra")
            for kk in range(m):
                if sol[kk]:
                    out.append((i, j, kk, sol[kk]))
                    out.append((j, i, kk, -sol[kk]))
    out.sort(key=lambda t: t[:3])
    return out


@dataclass
class ProjectivityReport:
    points: list[Point]
    dims: list[int]
    verdict: str
    rank: int | None = None
    witness: tuple[Point, Point] | None = None
    sampled: bool = True

    @property
    def smoothness_verdict(self) -> str:
        if self.verdict == "projective":
            return f"smooth: holonomy groupoid is a Lie groupoid with source-fiber dimension {self.rank} (sampled)"
        if self.verdict == "non-projective":
            return "not smooth: fiber dimension jumps, holonomy groupoid is not a Lie groupoid"
        return "inconclusive"

    def to_json(self) -> dict:
        return {
            "points": [[str(v) for v in p] for p in self.points],
            "dims": self.dims,
            "verdict": self.verdict,
            "rank": self.rank,
            "witness": None if self.witness is None else [[str(v) for v in p] for p in self.witness],
            "sampled": self.sampled,
            "smoothness_verdict": self.smoothness_verdict,
        }


def _map_points(fn, points, workers: int | None):
    if workers and workers > 1 and len(points) > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            return list(ex.map(fn, points))
    return [fn(p) for p in points]


def projectivity_scan(B: SingularSubalgebroid, points: Sequence[Sequence], workers: int | None = None) -> ProjectivityReport:
    if not points:
        raise ValueError("projectivity scan needs at least one point")
    pts = [as_point(p, B.nvars) for p in points]
    B.module  # build Groebner data once before fanning out
    try:
        dims = _map_points(lambda p: fiber_report(B, p, structure=False).dim_fiber, pts, workers)
    except Exception:
        return ProjectivityReport(pts, [], "inconclusive")
    for i in range(1, len(pts)):
        if dims[i] != dims[0]:
            return ProjectivityReport(pts, dims, "non-projective", witness=(pts[0], pts[i]))
    return ProjectivityReport(pts, dims, "projective", rank=dims[0])


@dataclass
class LocalGeneratorsReport:
    point: Point
    passed: bool
    missing: list[int]
    probes: list[tuple[Point, bool]]
    note: str = "global membership over polynomials stands in for the neighborhood statement"


def local_generators_check(
    B: SingularSubalgebroid,
    x: Sequence,
    candidates: Sequence[FreeModuleElem],
    probes: Sequence[Sequence] = (),
) -> LocalGeneratorsReport:
    """Do ``candidates`` (a basis of the fiber at x) generate the module?"""
    x = as_point(x, B.nvars)
    S = B.module
    classes = [_class_of(S, c, x) for c in candidates]
    rep = fiber_report(B, x, structure=False)
    if len(candidates) != rep.dim_fiber or len(linalg.extend_to_complement(rep.relations, classes)) != len(classes):
        raise PreconditionError("candidates do not induce a basis of the fiber at x")
    C = Submodule(list(candidates), rank=B.rank, nvars=B.nvars, degree_bound=B.degree_bound)
    missing = [i for i, g in enumerate(B.generators) if not C.contains(g)]
    probe_results = []
    for p in probes:
        p = as_point(p, B.nvars)
        rel = _relations(S, p)
        cl = [_class_of(S, c, p) for c in candidates]
        ok = len(linalg.extend_to_complement(rel, cl)) == len(cl) and len(cl) == S.ngens - len(rel)
        probe_results.append((p, ok))
    return LocalGeneratorsReport(x, not missing, missing, probe_results)


@dataclass
class LeafRankReport:
    samples: list[Point]
    dim_ev: int
    dim_fiber: int
    dim_isotropy: int

    @property
    def rank_BL(self) -> int:
        """Rank of the transitive subalgebroid of A supported on the leaf."""
        return self.dim_ev

    @property
    def rank_leaf_algebroid(self) -> int:
        """Rank of the transitive algebroid B/I_L B over the leaf."""
        return self.dim_fiber


def leaf_rank_report(B: SingularSubalgebroid, leaf_samples: Sequence[Sequence]) -> LeafRankReport:
    if not leaf_samples:
        raise ValueError("need at least one leaf sample")
    reports = [fiber_report(B, p, structure=False) for p in leaf_samples]
    first = reports[0]
    for r in reports:
        if r.dim_fiber != r.dim_ev + r.dim_isotropy:
            raise LeafRankViolation("exact sequence dimension identity fails", (r.point, r.point))
        if r.dim_ev != first.dim_ev:
            raise LeafRankViolation(
                f"evaluation rank changes along the leaf ({first.dim_ev} vs {r.dim_ev})", (first.point, r.point)
            )
        if r.dim_fiber != first.dim_fiber:
            raise LeafRankViolation(
                f"fiber dimension changes along the leaf ({first.dim_fiber} vs {r.dim_fiber})", (first.point, r.point)
            )
    return LeafRankReport([r.point for r in reports], first.dim_ev, first.dim_fiber, first.dim_isotropy)


def pullback_module(B: SingularSubalgebroid) -> SingularSubalgebroid:
    """Generators ``g_i(first factor) (+) 0`` on ``M x M``."""
    if B.ambient.kind != "tangent":
        raise PreconditionError("pullback check is defined for tangent ambients")
    n = B.nvars
    names = [f"{v}_t" for v in B.ambient.names] + [f"{v}_s" for v in B.ambient.names]
    amb = AmbientAlgebroid.tangent(names)
    gens = [
        FreeModuleElem([c.extend(2 * n) for c in g] + [Poly.zero(2 * n)] * n, 2 * n)
        for g in B.generators
    ]
    return SingularSubalgebroid(amb, gens, degree_bound=B.degree_bound)


@dataclass
class PullbackReport:
    dim_base: int
    dim_pullback: int

    @property
    def passed(self) -> bool:
        return self.dim_base == self.dim_pullback


def pullback_dim_check(B: SingularSubalgebroid, x: Sequence, y: Sequence) -> PullbackReport:
    x = as_point(x, B.nvars)
    y = as_point(y, B.nvars)
    P = pullback_module(B)
    return PullbackReport(fiber_report(B, x, False).dim_fiber, fiber_report(P, x + y, False).dim_fiber)


def ensure_involutive(B: SingularSubalgebroid) -> None:
    res = check_involutive(B)
    if not res.verified:
        raise PreconditionError(f"module is not involutive: bracket of generators {res.pair} = {res.bracket!r}")
