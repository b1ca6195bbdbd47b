"""Chart presentations of holonomy groupoids.

A chart is a parameter space with a map into the ambient groupoid. Path-holonomy
charts are parametrized by ``(lam, x)`` with source ``x``; inverses reuse the
parameters of the chart they invert (source and target swap) and compositions
are parametrized by fibered products. Every chart can produce a parameter point
with prescribed source (``lift_source``) or target (``lift_target``), which is
how fibered products are sampled without solving equations: for a path-holonomy
chart ``kappa(lam, y) = (-lam, t(lam, y))`` has target ``y``.

The quotient groupoid itself is never built.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np
from scipy.optimize import brentq

from . import linalg
from .flows import (
    DEFAULT_TOL,
    EQ_TOL,
    ActionElem,
    GroupoidElement,
    PairElem,
    combination_exp,
    compose,
    identity_at,
    matrix_exp,
)
from .geometry import AmbientAlgebroid, SingularSubalgebroid, induced_foliation
from .pointwise import fiber_report
from .polycore import FreeModuleElem, Poly, Submodule


class CompositionError(ValueError):
    pass


class SubalgebraError(ValueError):
    def __init__(self, message: str, pair: tuple[int, int] | None = None):
        super().__init__(message)
        self.pair = pair


class ModuleMismatch(ValueError):
    def __init__(self, message: str, witness: FreeModuleElem):
        super().__init__(message)
        self.witness = witness


# --- charts ----------------------------------------------------------------------------


class Chart:
    k: int
    B: SingularSubalgebroid
    base_box: list[tuple[float, float]] | None

    def evaluate(self, u) -> GroupoidElement:
        raise NotImplementedError

    def source(self, u) -> np.ndarray:
        return self.evaluate(u).source()

    def target(self, u) -> np.ndarray:
        return self.evaluate(u).target()

    def lift_source(self, lam, y):
        raise NotImplementedError

    def lift_target(self, lam, y):
        raise NotImplementedError

    def at_source(self, lam, y) -> GroupoidElement:
        return self.evaluate(self.lift_source(np.asarray(lam, dtype=float), np.asarray(y, dtype=float)))

    @property
    def provenance(self) -> str:
        raise NotImplementedError

    def lam_box(self) -> list[tuple[float, float]]:
        raise NotImplementedError

    def sample(self, n: int, rng: np.random.Generator):
        """``n`` random (lam, y) pairs from the parameter and base boxes."""
        box = self.lam_box()
        base = self.base_box or [(-1.0, 1.0)] * self.B.nvars
        out = []
        for _ in range(n):
            lam = np.array([rng.uniform(lo, hi) for lo, hi in box])
            y = np.array([rng.uniform(lo, hi) for lo, hi in base])
            out.append((lam, y))
        return out

    def to_json(self, samples) -> dict:
        return {
            "provenance": self.provenance,
            "k": self.k,
            "box": [list(b) for b in self.lam_box()],
            "samples": [
                {"lam": lam.tolist(), "x": y.tolist(), "phi": self.at_source(lam, y).to_json()}
                for lam, y in samples
            ],
        }


@dataclass(eq=False)
class PathHolonomyChart(Chart):
    """``(lam, x) -> exp_x(sum lam_i g_i)`` over the chosen generator indices."""

    B: SingularSubalgebroid
    indices: tuple[int, ...]
    box: list[tuple[float, float]]
    base_box: list[tuple[float, float]] | None = None
    tol: float = DEFAULT_TOL

    @property
    def k(self) -> int:
        return len(self.indices)

    @property
    def provenance(self) -> str:
        return f"path-holonomy{list(self.indices)}"

    def lam_box(self):
        return list(self.box)

    def weights(self, lam) -> np.ndarray:
        w = np.zeros(self.B.ngens)
        for i, l in zip(self.indices, lam):
            w[i] += l
        return w

    def evaluate(self, u) -> GroupoidElement:
        lam, x = u
        return combination_exp(self.B, self.weights(lam), x, 1.0, self.tol)

    def source(self, u):
        return np.asarray(u[1], dtype=float)

    def kappa(self, u):
        lam, x = u
        return (-np.asarray(lam, dtype=float), self.target(u))

    def lift_source(self, lam, y):
        return (np.asarray(lam, dtype=float), np.asarray(y, dtype=float))

    def lift_target(self, lam, y):
        return self.kappa((np.asarray(lam, dtype=float), np.asarray(y, dtype=float)))


@dataclass(eq=False)
class InverseChart(Chart):
    inner: Chart
    kappa_defect: float | None = None

    @property
    def B(self):
        return self.inner.B

    @property
    def k(self):
        return self.inner.k

    @property
    def base_box(self):
        return self.inner.base_box

    @property
    def provenance(self) -> str:
        return f"inverse({self.inner.provenance})"

    def lam_box(self):
        return self.inner.lam_box()

    def evaluate(self, u):
        return self.inner.evaluate(u).inverse()

    def lift_source(self, lam, y):
        return self.inner.lift_target(lam, y)

    def lift_target(self, lam, y):
        return self.inner.lift_source(lam, y)


@dataclass(eq=False)
class ComposedChart(Chart):
    """Fibered product ``{(u1, u2) : s(u1) = t(u2)}`` with the groupoid product."""

    left: Chart
    right: Chart

    @property
    def B(self):
        return self.right.B

    @property
    def k(self):
        return self.left.k + self.right.k

    @property
    def base_box(self):
        return self.right.base_box

    @property
    def provenance(self) -> str:
        return f"composed({self.left.provenance}, {self.right.provenance})"

    def lam_box(self):
        return self.left.lam_box() + self.right.lam_box()

    def evaluate(self, u):
        u1, u2 = u
        return compose(self.left.evaluate(u1), self.right.evaluate(u2))

    def _split(self, lam):
        lam = np.asarray(lam, dtype=float)
        return lam[: self.left.k], lam[self.left.k:]

    def lift_source(self, lam, y):
        l1, l2 = self._split(lam)
        u2 = self.right.lift_source(l2, y)
        u1 = self.left.lift_source(l1, self.right.target(u2))
        return (u1, u2)

    def lift_target(self, lam, y):
        l1, l2 = self._split(lam)
        u1 = self.left.lift_target(l1, y)
        u2 = self.right.lift_target(l2, self.left.source(u1))
        return (u1, u2)


def path_holonomy_chart(
    B: SingularSubalgebroid,
    indices: Sequence[int] | None = None,
    box: Sequence[tuple[float, float]] | None = None,
    base_box: Sequence[tuple[float, float]] | None = None,
    tol: float = DEFAULT_TOL,
) -> PathHolonomyChart:
    idx = tuple(range(B.ngens)) if indices is None else tuple(indices)
    if any(not 0 <= i < B.ngens for i in idx):
        raise IndexError("generator index out of range")
    box = list(box) if box is not None else [(-1.0, 1.0)] * len(idx)
    return PathHolonomyChart(B, idx, box, None if base_box is None else list(base_box), tol)


def _inside(y, box) -> bool:
    return box is None or all(lo <= v <= hi for v, (lo, hi) in zip(y, box))


def compose_charts(U1: Chart, U2: Chart, n_samples: int = 16, seed: int = 0) -> ComposedChart:
    """Chart of products ``phi1(u1) . phi2(u2)`` over the fibered product."""
    rng = np.random.default_rng(seed)
    hits = 0
    for lam, y in U2.sample(n_samples, rng):
        if _inside(U2.target(U2.lift_source(lam, y)), U1.base_box):
            hits += 1
    if hits == 0:
        raise CompositionError("no sampled target of the right chart lies in the source domain of the left chart")
    return ComposedChart(U1, U2)


def invert_chart(U: Chart, n_samples: int = 8, seed: int = 0) -> Chart:
    """Inverse chart; for path-holonomy charts also measures ``phi(kappa(u))`` against ``phi(u)^-1``."""
    if isinstance(U, InverseChart):
        return U.inner
    inv = InverseChart(U)
    if isinstance(U, PathHolonomyChart):
        rng = np.random.default_rng(seed)
        worst = 0.0
        for lam, y in U.sample(n_samples, rng):
            u = (lam, y)
            worst = max(worst, U.evaluate(U.kappa(u)).distance(U.evaluate(u).inverse()))
        inv.kappa_defect = worst
    return inv


def kappa_identities(U: PathHolonomyChart, lam, y) -> dict:
    """Deviations in ``s o kappa = t``, ``t o kappa = s`` and ``phi o kappa = phi^-1`` at one sample."""
    u = (np.asarray(lam, dtype=float), np.asarray(y, dtype=float))
    ku = U.kappa(u)
    e, ek = U.evaluate(u), U.evaluate(ku)
    return {
        "source_kappa": float(np.max(np.abs(U.source(ku) - e.target()), initial=0.0)),
        "target_kappa": float(np.max(np.abs(ek.target() - e.source()), initial=0.0)),
        "inverse": ek.distance(e.inverse()),
    }


@dataclass
class Atlas:
    charts: list[Chart]
    depth: int

    def dump(self, n_samples: int = 4, seed: int = 0) -> list[dict]:
        rng = np.random.default_rng(seed)
        return [c.to_json(c.sample(n_samples, rng)) for c in self.charts]


def build_atlas(
    B: SingularSubalgebroid,
    depth: int = 3,
    box: Sequence[tuple[float, float]] | None = None,
    base_box: Sequence[tuple[float, float]] | None = None,
) -> Atlas:
    """Path-holonomy chart, its inverse and all their compositions up to ``depth`` factors."""
    U = path_holonomy_chart(B, box=box, base_box=base_box)
    letters = [U, invert_chart(U)]
    charts: list[Chart] = list(letters)
    layer = list(letters)
    for _ in range(depth - 1):
        nxt = []
        for W in layer:
            for L in letters:
                nxt.append(compose_charts(L, W))
        charts.extend(nxt)
        layer = nxt
    return Atlas(charts, depth)


# --- Lie subalgebras -----------------------------------------------------------------


def _exact_matrix(m):
    try:
        rows = [[Fraction(c) if not isinstance(c, float) else None for c in row] for row in m]
    except TypeError:
        return None
    if any(c is None for row in rows for c in row):
        return None
    return rows


def check_subalgebra(basis: Sequence) -> None:
    """Raise SubalgebraError unless the span of ``basis`` is closed under commutators."""
    exact = [_exact_matrix(m) for m in basis]
    if all(e is not None for e in exact):
        flats = [[c for row in m for c in row] for m in exact]
        for i in range(len(exact)):
            for j in range(i + 1, len(exact)):
                a, b = exact[i], exact[j]
                n = len(a)
                comm = [
                    sum((a[r][t] * b[t][c] - b[r][t] * a[t][c] for t in range(n)), Fraction(0))
                    for r in range(n)
                    for c in range(n)
                ]
                if linalg.solve(flats, comm) is None:
                    raise SubalgebraError(f"[v{i + 1}, v{j + 1}] leaves the span", (i, j))
        return
    mats = [np.asarray(m, dtype=complex) for m in basis]
    A = np.array([m.ravel() for m in mats]).T
    for i in range(len(mats)):
        for j in range(i + 1, len(mats)):
            comm = (mats[i] @ mats[j] - mats[j] @ mats[i]).ravel()
            coef, *_ = np.linalg.lstsq(A, comm, rcond=None)
            if np.linalg.norm(A @ coef - comm) > 1e-9 * (1 + np.linalg.norm(comm)):
                raise SubalgebraError(f"[v{i + 1}, v{j + 1}] leaves the span", (i, j))


def _dist_to_identity(E: np.ndarray) -> float:
    return float(np.linalg.norm(E - np.eye(len(E))))


def _scan_distances(v: np.ndarray, grid: np.ndarray) -> np.ndarray:
    """``||exp(lam v) - I||_F`` on a grid, batched through an eigendecomposition when safe."""
    d = len(v)
    w, P = np.linalg.eig(v)
    if np.linalg.cond(P) < 1e8:
        Pinv = np.linalg.inv(P)
        out = np.empty(len(grid))
        for start in range(0, len(grid), 20000):
            g = grid[start:start + 20000]
            E = np.einsum("ij,lj,jk->lik", P, np.exp(np.outer(g, w)), Pinv)
            out[start:start + len(g)] = np.linalg.norm(E - np.eye(d), axis=(1, 2))
        return out
    step = grid[1] - grid[0] if len(grid) > 1 else grid[0]
    S = matrix_exp(step * v)
    E = np.eye(d, dtype=S.dtype)
    out = np.empty(len(grid))
    for i, lam in enumerate(grid):
        E = matrix_exp(lam * v) if i % 1000 == 0 else E @ S
        out[i] = _dist_to_identity(E)
    return out


def _polish_kernel(v: np.ndarray, lo: float, hi: float) -> float:
    def dsq(lam):
        E = matrix_exp(lam * v)
        return float(2 * np.real(np.vdot(E - np.eye(len(v)), v @ E)))

    a, b = dsq(lo), dsq(hi)
    if a < 0 < b:
        return brentq(dsq, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps)
    return lo if _dist_to_identity(matrix_exp(lo * v)) < _dist_to_identity(matrix_exp(hi * v)) else hi


@dataclass
class DirectionScan:
    direction: list
    kernel: float | None
    kernel_distance: float | None
    near_returns: list[tuple[float, float]]


def scan_direction(v, lam_max: float = 20.0, step: float = 1e-3, kernel_tol: float = 1e-9, threshold: float = 0.5) -> DirectionScan:
    """Smallest ``lam > 0`` with ``exp(lam v) = I``; near-misses are recorded."""
    v = np.asarray(v, dtype=complex)
    grid = np.arange(1, int(math.floor(lam_max / step)) + 1) * step
    dist = _scan_distances(v, grid)
    near = []
    interior = (dist[1:-1] < dist[:-2]) & (dist[1:-1] <= dist[2:]) & (dist[1:-1] < threshold)
    for i in np.nonzero(interior)[0] + 1:
        lam = _polish_kernel(v, grid[i - 1], grid[i + 1])
        dd = _dist_to_identity(matrix_exp(lam * v))
        near.append((float(lam), dd))
        if dd <= kernel_tol * max(1.0, lam):
            return DirectionScan(_jsonable(v), float(lam), dd, near)
    return DirectionScan(_jsonable(v), None, None, near)


def _jsonable(v):
    v = np.asarray(v)
    if np.iscomplexobj(v) and np.any(v.imag):
        return {"real": v.real.tolist(), "imag": v.imag.tolist()}
    return np.real(v).tolist()


@dataclass
class SubgroupReport:
    basis: list
    scans: list[DirectionScan]
    kernel: list[float]
    injectivity_radius: float
    radius_is_lower_bound: bool
    closed: str
    samples: list[np.ndarray] = field(repr=False, default_factory=list)

    def to_json(self) -> dict:
        return {
            "dimension": len(self.basis),
            "kernel": self.kernel,
            "injectivity_radius": self.injectivity_radius,
            "radius_is_lower_bound": self.radius_is_lower_bound,
            "closed": self.closed,
            "scans": [
                {"kernel": s.kernel, "kernel_distance": s.kernel_distance, "near_returns": s.near_returns[:10]}
                for s in self.scans
            ],
        }


def integrate_lie_subalgebra(
    basis: Sequence,
    lam_max: float = 20.0,
    step: float = 1e-3,
    kernel_tol: float = 1e-9,
    n_directions: int = 4,
    n_samples: int = 32,
    seed: int = 0,
) -> SubgroupReport:
    """Sampled description of the connected subgroup integrating ``span(basis)``."""
    if not basis:
        raise ValueError("empty subalgebra basis")
    check_subalgebra(basis)
    mats = [np.asarray(np.array(m, dtype=complex)) for m in basis]
    if all(not np.any(m.imag) for m in mats):
        mats = [m.real for m in mats]
    rng = np.random.default_rng(seed)
    dirs = list(mats)
    if len(mats) > 1:
        for _ in range(n_directions):
            c = rng.normal(size=len(mats))
            c /= np.linalg.norm(c)
            dirs.append(sum(ci * m for ci, m in zip(c, mats)))
    scans = [scan_direction(v, lam_max, step, kernel_tol) for v in dirs]
    periods = [s.kernel for s in scans if s.kernel is not None]
    found_all = len(periods) == len(scans)
    radius = min(periods) / 2 if periods else lam_max / 2
    if found_all:
        closed = "closed (heuristic: every sampled direction returns to the identity)"
    elif any(s.near_returns for s in scans if s.kernel is None):
        closed = "not closed (heuristic: near-returns without exact return, image looks dense)"
    else:
        closed = "closed (heuristic: no recurrence, embedded non-compact directions)"
    samples = []
    for _ in range(n_samples):
        E = np.eye(len(mats[0]), dtype=mats[0].dtype)
        for _ in range(3):
            c = rng.uniform(-math.pi, math.pi, size=len(mats))
            E = E @ matrix_exp(sum(ci * m for ci, m in zip(c, mats)))
        samples.append(E)
    kernel: list[float] = []
    for p in sorted(periods):
        if not kernel or p - kernel[-1] > 1e-9:
            kernel.append(p)
    return SubgroupReport(
        [_jsonable(m) for m in mats], scans, kernel, radius, not periods, closed, samples
    )


# --- transformation groupoids -----------------------------------------------------------


@dataclass(eq=False)
class ActionChart:
    """``(theta, x) -> (exp(sum theta_a A_a), x)`` in ``G x| R^d`` and its image in the pair groupoid."""

    matrices: np.ndarray

    def group(self, theta) -> np.ndarray:
        return matrix_exp(np.tensordot(np.asarray(theta, dtype=float), self.matrices, axes=1))

    def evaluate(self, theta, x) -> ActionElem:
        return ActionElem(self.group(theta), np.asarray(x, dtype=float))

    def phi(self, theta, x) -> PairElem:
        e = self.evaluate(theta, x)
        return PairElem(e.target(), e.source())


@dataclass
class TransformationHolonomy:
    chart: ActionChart
    foliation: SingularSubalgebroid
    isotropy_kernel: list[dict]
    I_witnesses: list[dict]
    atlas: list = field(default_factory=list)

    @property
    def I_trivial(self) -> bool:
        return not self.I_witnesses

    def to_json(self) -> dict:
        return {
            "isotropy_kernel": self.isotropy_kernel,
            "I_trivial": self.I_trivial,
            "I_witnesses": self.I_witnesses,
        }


def fundamental_fields(matrices, names: Sequence[str]) -> list[FreeModuleElem]:
    amb = AmbientAlgebroid.action(matrices, names)
    d = amb.rank
    return [amb.anchor(FreeModuleElem.basis(a, d, amb.nvars)) for a in range(d)]


def transformation_holonomy(
    B: SingularSubalgebroid,
    matrices: Sequence | None = None,
    probe_points: Sequence[Sequence[float]] = ((1.0, 0.0),),
    ball: Sequence[Sequence[float]] | None = None,
    n_group_samples: int = 64,
    lam_max: float = 20.0,
    tol: float = EQ_TOL,
    seed: int = 0,
) -> TransformationHolonomy:
    """Holonomy of the foliation generated by a linear action, presented by ``G x| M``."""
    if B.ambient.kind == "action":
        mats = B.ambient.matrices if matrices is None else matrices
        F = induced_foliation(B)
    elif B.ambient.kind == "tangent":
        if matrices is None:
            raise ValueError("tangent module needs the action matrices")
        mats, F = matrices, B
    else:
        raise ValueError("transformation holonomy needs a tangent or action module")
    X = fundamental_fields(mats, F.ambient.names)
    action_mod = Submodule(X, rank=F.rank, nvars=F.nvars)
    for g in F.generators:
        if not action_mod.contains(g):
            raise ModuleMismatch("module has a generator outside the action module", g)
    for x in X:
        if not F.contains(x):
            raise ModuleMismatch("module misses a fundamental vector field", x)
    fm = np.array([[[float(c) for c in row] for row in m] for m in AmbientAlgebroid.action(mats, F.ambient.names).matrices])
    chart = ActionChart(fm)
    kernel = []
    for p in probe_points:
        p = np.asarray(p, dtype=float)
        for a in range(len(fm)):
            theta_dir = np.eye(len(fm))[a]
            scan = scan_direction(fm[a], lam_max, 1e-3)
            if scan.kernel is not None:
                theta = scan.kernel * theta_dir
                img = chart.phi(theta, p)
                kernel.append(
                    {
                        "point": p.tolist(),
                        "direction": a,
                        "theta": scan.kernel,
                        "phi_is_unit": img.identity_defect() <= tol,
                        "parameter_is_unit": False,
                    }
                )
    rng = np.random.default_rng(seed)
    d = fm.shape[1]
    ball = [rng.uniform(-1, 1, size=d) for _ in range(8)] if ball is None else [np.asarray(b, float) for b in ball]
    witnesses = []
    for _ in range(n_group_samples):
        theta = rng.uniform(-math.pi, math.pi, size=len(fm))
        g = chart.group(theta)
        if np.linalg.norm(g - np.eye(d)) <= 1e-3:
            continue
        moved = max(float(np.linalg.norm(g @ x - x)) for x in ball)
        if moved <= tol:
            witnesses.append({"theta": theta.tolist(), "max_displacement": moved})
    return TransformationHolonomy(chart, F, kernel, witnesses, [chart])


# --- leafwise source-fiber dimension ---------------------------------------------------


@dataclass
class LeafwiseDim:
    point: list[str]
    dim_fiber: int
    chart_params: int
    minimal_params: int
    indices: list[int]
    retried: bool

    @property
    def consistent(self) -> bool:
        return self.minimal_params == self.dim_fiber


def leafwise_fiber_dim(B: SingularSubalgebroid, x: Sequence, chart: PathHolonomyChart | None = None) -> LeafwiseDim:
    """Source-fiber dimension read off a minimal chart at ``x`` against ``dim B_x``."""
    rep = fiber_report(B, x, structure=False)
    chart = chart or path_holonomy_chart(B)
    retried = False
    indices = list(chart.indices)
    if chart.k != rep.dim_fiber:
        retried = True
        indices = [next(i for i, c in enumerate(v) if c) for v in rep.fiber_basis]
    minimal = path_holonomy_chart(B, indices)
    return LeafwiseDim([str(v) for v in rep.point], rep.dim_fiber, chart.k, minimal.k, indices, retried)
