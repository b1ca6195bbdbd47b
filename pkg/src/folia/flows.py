"""Numerical flows, matrix exponentials and exponential maps into the groupoid.

Floating point lives here; everything upstream is exact. The integrator is a
Dormand-Prince 5(4) pair with local extrapolation, written out so that step
rejection on non-finite states and escape past a radius can be controlled.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.linalg import expm
from scipy.optimize import brentq

from .geometry import SingularSubalgebroid
from .polycore import FreeModuleElem, Poly

DEFAULT_TOL = 1e-9
EQ_TOL = 1e-6
FD_STEP = 1e-4
ESCAPE_RADIUS = 1e6


class FiniteEscape(ArithmeticError):
    def __init__(self, t: float, state):
        super().__init__(f"solution left the escape radius at t={t:.6g}")
        self.t = t
        self.state = state


class StepLimit(RuntimeError):
    pass


# --- compilation of polynomial data to float callables -------------------------


def _poly_src(p: Poly, var: str = "x") -> str:
    if p.is_zero():
        return "0.0"
    terms = []
    for exp, c in p.terms.items():
        factors = [repr(float(c))]
        for i, e in enumerate(exp):
            if e == 1:
                factors.append(f"{var}[{i}]")
            elif e:
                factors.append(f"{var}[{i}]**{e}")
        terms.append("*".join(factors))
    return " + ".join(terms)


def compile_polys(polys: Sequence[Poly], shape: tuple[int, ...] | None = None) -> Callable[[np.ndarray], np.ndarray]:
    """Float evaluator ``x -> array`` of the given polynomials (reshaped to ``shape``)."""
    body = ", ".join(_poly_src(p) for p in polys)
    src = f"lambda x: _np.array(({body}{',' if len(polys) == 1 else ''}), dtype=float)"
    fn = eval(src, {"_np": np})  # noqa: S307 - source is generated from exact coefficients
    if shape is None:
        return fn
    return lambda x: fn(x).reshape(shape)


def compile_field(v: FreeModuleElem) -> Callable[[np.ndarray], np.ndarray]:
    return compile_polys(list(v.components))


def _generator_table(B: SingularSubalgebroid):
    """Float evaluator x -> (k, r) matrix of generator coefficients (cached on B)."""
    cached = getattr(B, "_float_table", None)
    if cached is None:
        k, r = B.ngens, B.rank
        polys = [c for g in B.generators for c in g]
        cached = compile_polys(polys, (k, r)) if polys else (lambda x: np.zeros((k, r)))
        B._float_table = cached
    return cached


# --- Dormand-Prince 5(4) ---------------------------------------------------------

_C = (0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0)
_A = (
    (),
    (1 / 5,),
    (3 / 40, 9 / 40),
    (44 / 45, -56 / 15, 32 / 9),
    (19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729),
    (9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656),
    (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84),
)
_B5 = _A[6] + (0.0,)
_B4 = (5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40)
_E = tuple(b5 - b4 for b5, b4 in zip(_B5, _B4))


def _dp_step(f, x, h, k1):
    a = _A
    k2 = f(x + h * (a[1][0] * k1))
    k3 = f(x + h * (a[2][0] * k1 + a[2][1] * k2))
    k4 = f(x + h * (a[3][0] * k1 + a[3][1] * k2 + a[3][2] * k3))
    k5 = f(x + h * (a[4][0] * k1 + a[4][1] * k2 + a[4][2] * k3 + a[4][3] * k4))
    k6 = f(x + h * (a[5][0] * k1 + a[5][1] * k2 + a[5][2] * k3 + a[5][3] * k4 + a[5][4] * k5))
    b = a[6]
    x5 = x + h * (b[0] * k1 + b[2] * k3 + b[3] * k4 + b[4] * k5 + b[5] * k6)
    # stage 7 is evaluated at x5 (first-same-as-last)
    k7 = f(x5)
    e = _E
    err = h * (e[0] * k1 + e[2] * k3 + e[3] * k4 + e[4] * k5 + e[5] * k6 + e[6] * k7)
    return x5, err, k7


@dataclass
class Trajectory:
    times: list[float]
    states: list[np.ndarray]
    steps: int
    rejected: int

    @property
    def final(self) -> np.ndarray:
        return self.states[-1]

    def mean_step(self) -> float:
        return abs(self.times[-1] - self.times[0]) / max(self.steps, 1)


def integrate(
    f: Callable[[np.ndarray], np.ndarray],
    x0,
    t_end: float,
    tol: float = DEFAULT_TOL,
    escape_radius: float = ESCAPE_RADIUS,
    checkpoints: Sequence[float] = (),
    max_steps: int = 100_000,
) -> Trajectory:
    """Adaptive solution of ``x' = f(x)`` from time 0 to ``t_end``.

    The recorded trajectory holds the states at ``checkpoints`` (times
    between 0 and ``t_end``, hit exactly) followed by the final state.
    """
    x = np.array(x0, dtype=float)
    if t_end == 0.0 or x.size == 0:
        return Trajectory([0.0, t_end], [x.copy(), x.copy()], 0, 0)
    direction = 1.0 if t_end > 0 else -1.0
    marks = sorted({abs(c) for c in checkpoints if 0 < abs(c) < abs(t_end)}) + [abs(t_end)]
    times, states = [0.0], [x.copy()]
    t = 0.0  # elapsed |time|
    k1 = f(x)
    if not np.all(np.isfinite(k1)):
        raise FiniteEscape(0.0, x)
    scale0 = np.max(np.abs(k1)) / (1.0 + np.max(np.abs(x)))
    h = min(abs(t_end), 0.01 if scale0 == 0 else 0.1 * tol ** 0.2 / max(scale0, 1e-12))
    steps = rejected = 0
    mi = 0
    while mi < len(marks):
        if steps + rejected > max_steps:
            raise StepLimit(f"more than {max_steps} steps before t={t_end}")
        target = marks[mi]
        hh = min(h, target - t)
        landing = hh == target - t
        x_new, err, k_new = _dp_step(f, x, direction * hh, k1)
        if not np.all(np.isfinite(x_new)) or not np.all(np.isfinite(k_new)):
            rejected += 1
            h = hh * 0.25
            if h < 1e-14 * max(1.0, t):
                raise FiniteEscape(direction * t, x)
            continue
        sc = tol * (1.0 + np.maximum(np.abs(x), np.abs(x_new)))
        en = float(np.max(np.abs(err) / sc))
        if en <= 1.0:
            t = target if landing else t + hh
            x, k1 = x_new, k_new
            steps += 1
            if float(np.max(np.abs(x))) > escape_radius:
                raise FiniteEscape(direction * t, x)
            if landing:
                times.append(direction * t)
                states.append(x.copy())
                mi += 1
            fac = 5.0 if en == 0 else min(5.0, max(0.2, 0.9 * en ** -0.2))
            h = hh * fac if not landing else max(h, hh * fac)
        else:
            rejected += 1
            h = hh * max(0.2, 0.9 * en ** -0.2)
            if h < 1e-14 * max(1.0, t):
                raise FiniteEscape(direction * t, x)
    return Trajectory(times, states, steps, rejected)


def integrate_fixed(f, x0, t_end: float, nsteps: int) -> np.ndarray:
    """Fixed-step fifth-order propagation (used for order checks)."""
    x = np.array(x0, dtype=float)
    h = t_end / nsteps
    k1 = f(x)
    for _ in range(nsteps):
        x, _, k1 = _dp_step(f, x, h, k1)
    return x


def flow(v: FreeModuleElem | Callable, x0, lam: float, tol: float = DEFAULT_TOL, escape_radius: float = ESCAPE_RADIUS) -> np.ndarray:
    """Time-``lam`` flow of the vector field ``v`` starting at ``x0``."""
    x0 = np.array(x0, dtype=float)
    if lam == 0:
        return x0.copy()
    f = compile_field(v) if isinstance(v, FreeModuleElem) else v
    return integrate(f, x0, float(lam), tol=tol, escape_radius=escape_radius).final


def matrix_exp(A) -> np.ndarray:
    """Matrix exponential (scaling and squaring with a Pade approximant)."""
    A = np.asarray(A)
    if not np.all(np.isfinite(A)):
        raise ValueError("matrix exponential needs finite entries")
    return expm(A)


# --- groupoid elements -------------------------------------------------------------


class GroupoidElement:
    def source(self) -> np.ndarray:
        raise NotImplementedError

    def target(self) -> np.ndarray:
        raise NotImplementedError


@dataclass(frozen=True, eq=False)
class PairElem(GroupoidElement):
    """Arrow ``source -> target`` of the pair groupoid ``M x M``."""

    tgt: np.ndarray
    src: np.ndarray

    def source(self):
        return self.src

    def target(self):
        return self.tgt

    def __mul__(self, other: "PairElem") -> "PairElem":
        return PairElem(self.tgt, other.src)

    def inverse(self) -> "PairElem":
        return PairElem(self.src, self.tgt)

    @staticmethod
    def identity(x) -> "PairElem":
        x = np.asarray(x, dtype=float)
        return PairElem(x, x)

    def distance(self, other: "PairElem") -> float:
        return float(max(np.max(np.abs(self.tgt - other.tgt), initial=0), np.max(np.abs(self.src - other.src), initial=0)))

    def identity_defect(self) -> float:
        return float(np.linalg.norm(self.tgt - self.src))

    def to_json(self):
        return {"type": "pair", "target": self.tgt.tolist(), "source": self.src.tolist()}


@dataclass(frozen=True, eq=False)
class GroupElem(GroupoidElement):
    matrix: np.ndarray

    def source(self):
        return np.zeros(0)

    def target(self):
        return np.zeros(0)

    def __mul__(self, other: "GroupElem") -> "GroupElem":
        return GroupElem(self.matrix @ other.matrix)

    def inverse(self) -> "GroupElem":
        return GroupElem(np.linalg.inv(self.matrix))

    @staticmethod
    def identity(d: int) -> "GroupElem":
        return GroupElem(np.eye(d))

    def distance(self, other: "GroupElem") -> float:
        return float(np.max(np.abs(self.matrix - other.matrix)))

    def identity_defect(self) -> float:
        return float(np.linalg.norm(self.matrix - np.eye(len(self.matrix))))

    def to_json(self):
        m = self.matrix
        if np.iscomplexobj(m):
            return {"type": "group", "real": m.real.tolist(), "imag": m.imag.tolist()}
        return {"type": "group", "matrix": m.tolist()}


@dataclass(frozen=True, eq=False)
class ActionElem(GroupoidElement):
    """Arrow ``x -> g x`` of the transformation groupoid ``G x| R^d``."""

    g: np.ndarray
    x: np.ndarray

    def source(self):
        return self.x

    def target(self):
        return self.g @ self.x

    def __mul__(self, other: "ActionElem") -> "ActionElem":
        return ActionElem(self.g @ other.g, other.x)

    def inverse(self) -> "ActionElem":
        return ActionElem(np.linalg.inv(self.g), self.g @ self.x)

    @staticmethod
    def identity(x) -> "ActionElem":
        x = np.asarray(x, dtype=float)
        return ActionElem(np.eye(len(x)), x)

    def distance(self, other: "ActionElem") -> float:
        return float(max(np.max(np.abs(self.g - other.g)), np.max(np.abs(self.x - other.x), initial=0)))

    def identity_defect(self) -> float:
        return float(np.linalg.norm(self.g - np.eye(len(self.g))))

    def to_json(self):
        return {"type": "action", "group": self.g.tolist(), "base": self.x.tolist()}


def compose(a: GroupoidElement, b: GroupoidElement, tol: float = EQ_TOL) -> GroupoidElement:
    """Groupoid product ``a . b`` (``b`` first), checking composability."""
    if type(a) is not type(b):
        raise TypeError("cannot compose elements of different groupoids")
    gap = float(np.max(np.abs(a.source() - b.target()), initial=0.0))
    if gap > tol * (1 + float(np.max(np.abs(b.target()), initial=0.0))):
        raise ValueError(f"elements are not composable (source/target gap {gap:.3g})")
    return a * b


def identity_at(B_or_kind, x) -> GroupoidElement:
    kind = B_or_kind if isinstance(B_or_kind, str) else B_or_kind.ambient.kind
    if kind == "tangent":
        return PairElem.identity(x)
    if kind == "action":
        return ActionElem.identity(x)
    d = len(B_or_kind.ambient.matrices[0])
    return GroupElem.identity(d)


# --- exponentials of sections ----------------------------------------------------------


def _float_matrices(B: SingularSubalgebroid) -> np.ndarray:
    cached = getattr(B, "_float_mats", None)
    if cached is None:
        cached = np.array([[[float(c) for c in row] for row in m] for m in B.ambient.matrices])
        B._float_mats = cached
    return cached


def combination_exp(
    B: SingularSubalgebroid,
    weights,
    x,
    time: float = 1.0,
    tol: float = DEFAULT_TOL,
    escape_radius: float = ESCAPE_RADIUS,
) -> GroupoidElement:
    """``exp_x(time * sum_i weights[i] * g_i)`` for right-invariant extensions of the generators."""
    w = np.asarray(weights, dtype=float)
    x = np.asarray(x, dtype=float)
    kind = B.ambient.kind
    table = _generator_table(B)
    if kind == "tangent":
        if time == 0 or not np.any(w):
            return PairElem.identity(x)
        f = lambda y: w @ table(y)
        return PairElem(integrate(f, x, time, tol, escape_radius).final, x)
    mats = _float_matrices(B)
    if kind == "liealgebra":
        coeffs = w @ table(np.zeros(0))
        return GroupElem(matrix_exp(time * np.tensordot(coeffs, mats, axes=1)))
    d = len(x)
    if time == 0 or not np.any(w):
        return ActionElem.identity(x)

    def rhs(state):
        g = state.reshape(d, d)
        a = np.tensordot(w @ table(g @ x), mats, axes=1)
        return (a @ g).ravel()

    g1 = integrate(rhs, np.eye(d).ravel(), time, tol, escape_radius).final.reshape(d, d)
    return ActionElem(g1, x)


def path_holonomy_exp(
    B: SingularSubalgebroid, lam, x, tol: float = DEFAULT_TOL, escape_radius: float = ESCAPE_RADIUS
) -> GroupoidElement:
    """Image of ``(lam, x)`` under the path-holonomy chart of the generators."""
    lam = np.asarray(lam, dtype=float)
    if lam.shape != (B.ngens,):
        raise ValueError(f"need {B.ngens} coefficients, got shape {lam.shape}")
    if B.ambient.kind == "liealgebra":
        x = np.zeros(0)
    elif len(x) != B.nvars:
        raise ValueError(f"point must have dimension {B.nvars}")
    return combination_exp(B, lam, x, 1.0, tol, escape_radius)


def section_exp(
    B: SingularSubalgebroid, alpha: FreeModuleElem, lam: float, x, tol: float = DEFAULT_TOL, escape_radius: float = ESCAPE_RADIUS
) -> GroupoidElement:
    """``exp_x(lam * alpha)`` for an arbitrary section ``alpha`` of the ambient algebroid."""
    tmp = getattr(B, "_section_cache", None)
    if tmp is None:
        tmp = B._section_cache = {}
    S = tmp.get(alpha)
    if S is None:
        S = tmp[alpha] = SingularSubalgebroid(B.ambient, [alpha])
    if B.ambient.kind == "liealgebra":
        x = np.zeros(0)
    return combination_exp(S, [1.0], x, float(lam), tol, escape_radius)


def velocity(B: SingularSubalgebroid, plus: GroupoidElement, minus: GroupoidElement, h: float) -> np.ndarray:
    """Central difference of a curve of arrows with common source, in frame coordinates of ``A_x``."""
    if isinstance(plus, PairElem):
        return (plus.target() - minus.target()) / (2 * h)
    m = plus.g if isinstance(plus, ActionElem) else plus.matrix
    n = minus.g if isinstance(minus, ActionElem) else minus.matrix
    dm = (m - n) / (2 * h)
    mats = _float_matrices(B)
    basis = mats.reshape(len(mats), -1).T
    coeffs, *_ = np.linalg.lstsq(basis, dm.ravel(), rcond=None)
    return coeffs


def section_value(B: SingularSubalgebroid, s: FreeModuleElem, x) -> np.ndarray:
    x = np.zeros(0) if B.ambient.kind == "liealgebra" else np.asarray(x, dtype=float)
    return compile_field(s)(x) if s.rank else np.zeros(0)


# --- bisection families ---------------------------------------------------------------


@dataclass
class BisectionFamily:
    """``b_lam(x) = exp_x(lam * alpha)`` for x in a box, identity outside."""

    B: SingularSubalgebroid
    alpha: FreeModuleElem
    box: list[tuple[float, float]] | None = None
    interval: tuple[float, float] = (-1.0, 1.0)
    tol: float = DEFAULT_TOL
    escape_radius: float = ESCAPE_RADIUS
    certificate: tuple = field(default=(), repr=False)

    def inside(self, x) -> bool:
        if self.box is None:
            return True
        return all(lo < xi < hi for xi, (lo, hi) in zip(x, self.box))

    def __call__(self, lam: float, x) -> GroupoidElement:
        x = np.asarray(x, dtype=float)
        if lam == 0 or self.alpha.is_zero() or not self.inside(x):
            return identity_at(self.B, x)
        return section_exp(self.B, self.alpha, lam, x, self.tol, self.escape_radius)

    def product(self, lam: float, mu: float, x) -> GroupoidElement:
        """``(b_lam * b_mu)(x) = b_lam(t(b_mu(x))) . b_mu(x)``."""
        inner = self(mu, x)
        return compose(self(lam, inner.target()), inner)

    def derivative(self, x, h: float = FD_STEP) -> np.ndarray:
        return velocity(self.B, self(h, x), self(-h, x), h)


def one_parameter_group(
    B: SingularSubalgebroid,
    alpha: FreeModuleElem,
    box: Sequence[tuple[float, float]] | None = None,
    interval: tuple[float, float] = (-1.0, 1.0),
    tol: float = DEFAULT_TOL,
) -> BisectionFamily:
    rem, cert = B.module.normal_form(alpha)
    if not rem.is_zero():
        raise ValueError(f"{alpha!r} is not an element of the module")
    return BisectionFamily(B, alpha, None if box is None else list(box), interval, tol, certificate=cert)


def first_return(distance: Callable[[float], float], lam_max: float, step: float, threshold: float = 0.1):
    """Smallest ``lam`` in ``(0, lam_max]`` where ``distance`` has a near-zero local minimum.

    Returns the polished root location or None.
    """
    n = int(math.ceil(lam_max / step))
    grid = [step * (i + 1) for i in range(n)]
    vals = []
    for i, lam in enumerate(grid):
        d = distance(lam)
        vals.append(d)
        if i >= 2 and vals[i - 1] < vals[i - 2] and vals[i - 1] <= d and vals[i - 1] < threshold:
            lo, hi = grid[i - 2], lam
            return polish_minimum(distance, lo, hi)
    return None


def polish_minimum(distance: Callable[[float], float], lo: float, hi: float, fd: float = 1e-6) -> float:
    """Locate the minimum of a smooth squared distance on [lo, hi] by a root of its derivative."""
    sq = lambda t: distance(t) ** 2
    dsq = lambda t: (sq(t + fd) - sq(t - fd)) / (2 * fd)
    a, b = dsq(lo), dsq(hi)
    if a < 0 < b:
        return brentq(dsq, lo, hi, xtol=1e-14, rtol=4 * np.finfo(float).eps)
    return lo if sq(lo) < sq(hi) else hi


def family_period(family: BisectionFamily, x, lam_max: float = 20.0, step: float = 1e-2) -> float | None:
    """First positive ``lam`` with ``b_lam(x)`` an identity arrow, if any."""
    return first_return(lambda l: family(l, x).identity_defect(), lam_max, step)
