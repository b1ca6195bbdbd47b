"""Same-leaf search, graph comparison and the two graph counterexamples.

``same_leaf`` is a semi-decision: it answers Yes with a replayable path of
piecewise generator flows, or Unknown once the budget is spent. It never
answers No.
"""

from __future__ import annotations

import math
from collections import deque
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np
from scipy.optimize import brentq, least_squares

from .flows import DEFAULT_TOL, ESCAPE_RADIUS, FiniteEscape, StepLimit, compile_field, integrate, matrix_exp
from .geometry import SingularSubalgebroid, induced_foliation
from .pointwise import PreconditionError
from .polycore import FreeModuleElem, Poly

DURATIONS = tuple(2.0 ** -j for j in range(7))
VISIT_RADIUS = 1e-3
DEFAULT_BUDGET = 100_000
CAPTURE_RADIUS = 1.0
SHOOT_ACCEPT = 1e-8
SEARCH_RADIUS = 1e4


# --- paths ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Segment:
    gen: int
    duration: float
    sign: int

    @property
    def time(self) -> float:
        return self.sign * self.duration


@dataclass
class LeafPath:
    segments: list[Segment]
    start: np.ndarray
    end: np.ndarray
    deviation: float = 0.0

    def to_json(self) -> dict:
        return {
            "start": self.start.tolist(),
            "end": self.end.tolist(),
            "deviation": self.deviation,
            "segments": [[s.gen, s.duration, s.sign] for s in self.segments],
        }

    @classmethod
    def from_json(cls, data: dict) -> "LeafPath":
        return cls(
            [Segment(int(g), float(d), int(s)) for g, d, s in data["segments"]],
            np.asarray(data["start"], dtype=float),
            np.asarray(data["end"], dtype=float),
            float(data.get("deviation", 0.0)),
        )


def leaf_fields(B: SingularSubalgebroid) -> list:
    """Compiled vector fields whose flows sweep out the leaves."""
    cached = getattr(B, "_leaf_fields", None)
    if cached is None:
        if B.ambient.kind == "tangent":
            F = B
        elif B.ambient.kind == "action":
            F = induced_foliation(B)
        else:
            raise PreconditionError("leaves live on a base manifold; a Lie algebra has none")
        cached = [compile_field(g) for g in F.generators]
        B._leaf_fields = cached
    return cached


def _run(fields, x, segments, tol=DEFAULT_TOL):
    x = np.asarray(x, dtype=float)
    for s in segments:
        if s.duration:
            x = integrate(fields[s.gen], x, s.time, tol, ESCAPE_RADIUS).final
    return x


def replay(B: SingularSubalgebroid, path: LeafPath, tol: float = DEFAULT_TOL) -> np.ndarray:
    """Independently re-integrate the path from its start."""
    return _run(leaf_fields(B), path.start, path.segments, tol)


def reverse(path: LeafPath) -> LeafPath:
    segs = [Segment(s.gen, s.duration, -s.sign) for s in reversed(path.segments)]
    return LeafPath(segs, path.end.copy(), path.start.copy(), path.deviation)


def concat(first: LeafPath, second: LeafPath, tol: float = 1e-5) -> LeafPath:
    gap = float(np.max(np.abs(first.end - second.start), initial=0.0))
    if gap > tol:
        raise ValueError(f"paths do not meet (gap {gap:.3g})")
    return LeafPath(first.segments + second.segments, first.start.copy(), second.end.copy(), first.deviation + second.deviation + gap)


# --- search ------------------------------------------------------------------------


@dataclass
class LeafVerdict:
    answer: str  # "Yes" or "Unknown"
    path: LeafPath | None = None
    expansions: int = 0
    diagnostics: list[str] = field(default_factory=list)

    @property
    def yes(self) -> bool:
        return self.answer == "Yes"

    def to_json(self) -> dict:
        return {
            "answer": self.answer,
            "path": None if self.path is None else self.path.to_json(),
            "expansions": self.expansions,
            "diagnostics": self.diagnostics[:20],
        }


class _Visited:
    """Spatial hash of points; ``add`` refuses points within ``radius`` of a stored one."""

    def __init__(self, radius: float):
        self.r = radius
        self.cells: dict[tuple, list[np.ndarray]] = {}

    def _key(self, x):
        return tuple(int(math.floor(v / self.r)) for v in x)

    def add(self, x) -> bool:
        key = self._key(x)
        n = len(key)
        for off in np.ndindex(*([3] * n)):
            k = tuple(a + b - 1 for a, b in zip(key, off))
            for y in self.cells.get(k, ()):
                if np.linalg.norm(x - y) < self.r:
                    return False
        self.cells.setdefault(key, []).append(x)
        return True


def _children(f, x, diag):
    """States after each grid duration along one signed field, shortening on escape."""
    t_end = 1.0
    while t_end >= DURATIONS[-1]:
        marks = [d for d in DURATIONS if d < t_end]
        try:
            traj = integrate(f, x, t_end, DEFAULT_TOL, SEARCH_RADIUS, checkpoints=marks, max_steps=2000)
        except (FiniteEscape, StepLimit) as exc:
            diag.append(f"flow from {np.round(x, 6).tolist()} stopped: {type(exc).__name__}")
            t_end /= 2
            continue
        return list(zip(traj.times[1:], traj.states[1:]))[::-1]
    return []


def _shoot(fields, c, q, max_nfev=20, tol=1e-11):
    """Durations ``t`` with ``flow_{t_k} ... flow_{t_1}(c) = q`` via bounded least squares."""
    k = len(fields)
    G = np.array([f(c) for f in fields])
    guess, *_ = np.linalg.lstsq(G.T, q - c, rcond=None)
    guess = np.clip(guess, -1.9, 1.9)

    def resid(t):
        y = c
        for f, ti in zip(fields, t):
            if ti:
                y = integrate(f, y, ti, tol, ESCAPE_RADIUS, max_steps=5000).final
        return y - q

    try:
        sol = least_squares(resid, guess, bounds=(-2.0 * np.ones(k), 2.0 * np.ones(k)), xtol=1e-15, ftol=1e-15, gtol=1e-12, max_nfev=max_nfev)
    except (FiniteEscape, StepLimit):
        return None
    err = float(np.max(np.abs(resid(sol.x))))
    return (sol.x, err) if err <= SHOOT_ACCEPT else None


def explore(
    B: SingularSubalgebroid,
    p,
    targets: Sequence,
    budget: int = DEFAULT_BUDGET,
    radius: float = VISIT_RADIUS,
    capture: float = CAPTURE_RADIUS,
    max_shots: int = 4,
) -> list[LeafVerdict]:
    """One breadth-first search from ``p`` answering every target."""
    fields = leaf_fields(B)
    p = np.asarray(p, dtype=float)
    tq = [np.asarray(q, dtype=float) for q in targets]
    signed = [(i, s, (lambda y, f=f, s=s: s * f(y))) for i, f in enumerate(fields) for s in (1, -1)]
    nodes: list[tuple[np.ndarray, int, Segment | None]] = [(p, -1, None)]
    verdicts: list[LeafVerdict | None] = [None] * len(tq)
    shots = [0] * len(tq)
    last_shot = [np.inf] * len(tq)
    diag: list[str] = []

    def path_to(idx, extra, end):
        segs = []
        while idx > 0:
            x, parent, seg = nodes[idx]
            segs.append(seg)
            idx = parent
        segs.reverse()
        return LeafPath(segs + extra, p.copy(), end.copy())

    def try_targets(idx):
        x = nodes[idx][0]
        for j, q in enumerate(tq):
            if verdicts[j] is not None:
                continue
            if np.linalg.norm(x - q) <= 1e-12:
                verdicts[j] = LeafVerdict("Yes", path_to(idx, [], q))
                continue
            d = float(np.linalg.norm(x - q))
            if shots[j] < max_shots and d <= min(capture, 0.5 * last_shot[j]):
                shots[j] += 1
                last_shot[j] = d
                res = _shoot(fields, x, q)
                if res is not None:
                    t, err = res
                    extra = [Segment(i, abs(float(ti)), 1 if ti >= 0 else -1) for i, ti in enumerate(t) if ti]
                    path = path_to(idx, extra, q)
                    path.deviation = err
                    verdicts[j] = LeafVerdict("Yes", path)

    visited = _Visited(radius)
    visited.add(p)
    try_targets(0)
    queue = deque([0])
    expansions = 0
    while queue and expansions < budget and any(v is None for v in verdicts):
        idx = queue.popleft()
        expansions += 1
        x = nodes[idx][0]
        for i, s, f in signed:
            if not np.any(f(x)):
                continue
            for t, y in _children(f, x, diag):
                if visited.add(y):
                    nodes.append((y, idx, Segment(i, abs(t), s)))
                    queue.append(len(nodes) - 1)
                    try_targets(len(nodes) - 1)
    out = []
    for v in verdicts:
        v = v or LeafVerdict("Unknown")
        v.expansions = expansions
        v.diagnostics = list(diag)
        out.append(v)
    return out


def same_leaf(B: SingularSubalgebroid, p, q, budget: int = DEFAULT_BUDGET, **kw) -> LeafVerdict:
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    leaf_fields(B)
    if p.shape != q.shape or p.shape != (B.nvars,):
        raise ValueError(f"points must have dimension {B.nvars}")
    return explore(B, p, [q], budget, **kw)[0]


# --- graph comparison --------------------------------------------------------------


@dataclass
class GraphComparison:
    grid: list[list[float]]
    agreements: int
    disagreements: list[dict]
    unknowns: int

    def to_json(self) -> dict:
        return {
            "grid": self.grid,
            "agreements": self.agreements,
            "disagreements": self.disagreements,
            "unknowns": self.unknowns,
        }


def graph_equal_sample(
    B1: SingularSubalgebroid,
    B2: SingularSubalgebroid,
    grid: Sequence,
    budget: int = 300,
    workers: int | None = None,
) -> GraphComparison:
    """Compare same-leaf verdicts of two modules on every ordered pair of grid points."""
    if B1.nvars != B2.nvars:
        raise ValueError("modules live on base manifolds of different dimension")
    pts = [np.atleast_1d(np.asarray(g, dtype=float)) for g in grid]
    if not pts:
        raise ValueError("empty grid")

    def row(p):
        return explore(B1, p, pts, budget), explore(B2, p, pts, budget)

    if workers and workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            rows = list(ex.map(row, pts))
    else:
        rows = [row(p) for p in pts]
    agree = unknown = 0
    bad = []
    for p, (r1, r2) in zip(pts, rows):
        for q, v1, v2 in zip(pts, r1, r2):
            if v1.answer == v2.answer:
                agree += 1
                unknown += v1.answer == "Unknown"
            else:
                bad.append({"p": p.tolist(), "q": q.tolist(), "first": v1.answer, "second": v2.answer})
    return GraphComparison([p.tolist() for p in pts], agree, bad, unknown)


# --- counterexample: differentiation under the subspace diffeology ----------------------


@dataclass
class FamilyDerivative:
    family: list[str]
    derivative: FreeModuleElem
    member: bool
    leaf_checks: int

    def to_json(self, names) -> dict:
        from .dsl import section_to_str
        from .geometry import AmbientAlgebroid

        return {
            "family": self.family,
            "derivative": section_to_str(self.derivative, AmbientAlgebroid.tangent(names)),
            "member": self.member,
            "leaf_checks": self.leaf_checks,
        }


def subspace_diffeology_differentiation(
    B: SingularSubalgebroid,
    families: Sequence[Sequence[Poly]],
    samples: Sequence = (),
    lams: Sequence[float] = (0.1, -0.1),
    budget: int = 300,
) -> list[FamilyDerivative]:
    """Velocities at ``lam = 0`` of leaf-preserving polynomial families ``c(x, lam)``.

    Each family is a list of polynomials in ``(x_1..x_n, lam)``, one per coordinate.
    """
    if B.ambient.kind != "tangent":
        raise PreconditionError("subspace diffeology check is defined for foliations")
    n = B.nvars
    xs = [Poly.var(i, n) for i in range(n)]
    at_zero = xs + [Poly.zero(n)]
    out = []
    for fam in families:
        if len(fam) != n or any(c.nvars != n + 1 for c in fam):
            raise ValueError(f"family needs {n} polynomials in {n + 1} variables")
        if [c.substitute(at_zero) for c in fam] != xs:
            raise PreconditionError("family is not the identity at lam = 0")
        deriv = FreeModuleElem([c.diff(n).substitute(at_zero) for c in fam], n)
        checks = 0
        funcs = [(lambda v, c=c: float(c.evaluate([Fraction(t) for t in v]))) for c in fam]
        for x in samples:
            x = np.atleast_1d(np.asarray(x, dtype=float))
            for lam in lams:
                y = np.array([f(list(x) + [lam]) for f in funcs])
                if not same_leaf(B, x, y, budget).yes:
                    raise PreconditionError(f"family leaves the leaf of {x.tolist()} at lam={lam}")
                checks += 1
        out.append(FamilyDerivative([c.to_str([*B.ambient.names, "l"]) for c in fam], deriv, B.contains(deriv), checks))
    return out


# --- counterexample: failure of openness ----------------------------------------------

_ROT = np.array([[0.0, -1.0], [1.0, 0.0]])


def _rot(theta: float) -> np.ndarray:
    return matrix_exp(theta * _ROT)


@dataclass
class Arc:
    """Open arc ``{e^{i t} : lo < t < hi}``; a length of at least 2 pi means the whole circle."""

    lo: float
    hi: float

    @property
    def full(self) -> bool:
        return self.hi - self.lo >= 2 * math.pi

    def contains(self, g: float) -> bool:
        if self.full:
            return True
        return 0 < (g - self.lo) % (2 * math.pi) < self.hi - self.lo


def in_saturation(arc: Arc, g: float, x, tol: float = 1e-9) -> bool:
    """Is ``(g, x)`` in the preimage of ``Phi(arc x M)`` under ``Phi(g, x) = (g x, x)``?

    Decided by minimizing ``|g x - h x|`` over ``h`` in the arc.
    """
    x = np.asarray(x, dtype=float)
    gx = _rot(g) @ x
    if arc.full:
        return True
    dist = lambda h: float(np.linalg.norm(gx - _rot(h) @ x))
    # derivative of |g x - h x|^2 in h; its root in the bracketing cell polishes the minimum
    dsq = lambda h: float(-2 * (gx - _rot(h) @ x) @ (_ROT @ _rot(h) @ x))
    grid = np.linspace(arc.lo, arc.hi, 65)[1:-1]
    i = int(np.argmin([dist(h) for h in grid]))
    lo, hi = grid[max(i - 1, 0)], grid[min(i + 1, len(grid) - 1)]
    best = dist(grid[i])
    if dsq(lo) < 0 < dsq(hi):
        best = min(best, dist(brentq(dsq, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps)))
    return best <= tol


@dataclass
class OpennessReport:
    arc: tuple[float, float]
    n_samples: int
    saturation_mismatches: list[dict]
    witnesses: list[dict]
    degenerate: bool

    @property
    def saturation_ok(self) -> bool:
        return not self.saturation_mismatches

    @property
    def passed(self) -> bool:
        return self.saturation_ok and bool(self.witnesses) and all(w["passed"] for w in self.witnesses)

    def to_json(self) -> dict:
        return {
            "arc": list(self.arc),
            "samples": self.n_samples,
            "saturation_ok": self.saturation_ok,
            "saturation_mismatches": self.saturation_mismatches[:10],
            "witnesses": self.witnesses,
            "degenerate": self.degenerate,
            "passed": self.passed,
        }


def openness_counterexample(
    arc: tuple[float, float] = (-math.pi / 4, math.pi / 4),
    points: Sequence | None = None,
    angles: Sequence[float] | None = None,
    witness_angles: Sequence[float] = (math.pi / 2, math.pi, 3 * math.pi / 2),
    epsilons: Sequence[float] = (1e-1, 1e-2, 1e-3),
) -> OpennessReport:
    """Finite-sample check that the rotation action groupoid fails the openness condition."""
    A = Arc(*arc)
    if not A.full and not A.contains(0.0):
        raise ValueError("the arc must contain the identity")
    if points is None:
        points = [(0.0, 0.0)] + [
            (r * math.cos(t), r * math.sin(t)) for r in (0.5, 1.0, 2.0) for t in np.linspace(0, 2 * math.pi, 8, endpoint=False)
        ]
    pts = [np.asarray(p, dtype=float) for p in points]
    if not any(np.linalg.norm(p) == 0 for p in pts) or all(np.linalg.norm(p) == 0 for p in pts):
        raise ValueError("samples must contain the origin and a nonzero point")
    if angles is None:
        angles = [2 * math.pi * (i + 0.5) / 24 for i in range(24)]
    mismatches = []
    for g in angles:
        for x in pts:
            predicted = bool(np.linalg.norm(x) == 0 or A.contains(g))
            computed = in_saturation(A, g, x)
            if predicted != computed:
                mismatches.append({"g": g, "x": x.tolist(), "predicted": predicted, "computed": computed})
    witnesses = []
    for g in witness_angles:
        if A.contains(g):
            continue
        origin_in = in_saturation(A, g, (0.0, 0.0))
        outside = {str(e): not in_saturation(A, g, (e, 0.0)) for e in epsilons}
        witnesses.append({"g": g, "origin_in_saturation": origin_in, "nearby_outside": outside, "passed": origin_in and all(outside.values())})
    return OpennessReport(tuple(arc), len(angles) * len(pts), mismatches, witnesses, A.full)
