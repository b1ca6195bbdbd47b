"""Differentiating bisection families back to the module, and probes of the integral axioms."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np
from scipy.optimize import least_squares

from . import linalg
from .flows import (
    FD_STEP,
    ActionElem,
    BisectionFamily,
    GroupElem,
    GroupoidElement,
    PairElem,
    combination_exp,
    compile_polys,
    flow,
    one_parameter_group,
    section_value,
    velocity,
)
from .geometry import SingularSubalgebroid
from .holonomy import integrate_lie_subalgebra
from .polycore import FreeModuleElem, Poly

FD_TOL = 1e-5
TIGHT = 1e-12


class NumericalInconsistency(ArithmeticError):
    def __init__(self, message: str, curve: list[tuple[float, float]]):
        super().__init__(message)
        self.curve = curve


@dataclass
class FamilySpec:
    """Bisections ``b_lam(x) = exp_x(sum_i f_i(x, lam) g_i)`` with ``f_i(x, 0) = 0``.

    Coefficients are polynomials in the base variables followed by ``lam``.
    """

    B: SingularSubalgebroid
    coefficients: list[Poly]
    box: list[tuple[float, float]] | None = None

    def __post_init__(self):
        n = self.B.nvars
        if len(self.coefficients) != self.B.ngens:
            raise ValueError(f"need one coefficient per generator ({self.B.ngens})")
        if any(c.nvars != n + 1 for c in self.coefficients):
            raise ValueError(f"coefficients must be polynomials in {n + 1} variables")
        if any(not c.substitute(_lam_zero(n)).is_zero() for c in self.coefficients):
            raise ValueError("coefficients must vanish at lam = 0")
        self._eval = compile_polys(self.coefficients) if self.coefficients else (lambda v: np.zeros(0))

    def weights(self, lam: float, x) -> np.ndarray:
        return self._eval(np.concatenate([np.asarray(x, dtype=float), [lam]]))

    def __call__(self, lam: float, x, tol: float = TIGHT) -> GroupoidElement:
        return combination_exp(self.B, self.weights(lam, x), np.asarray(x, dtype=float), 1.0, tol)


def _lam_zero(n: int) -> list[Poly]:
    return [Poly.var(i, n) for i in range(n)] + [Poly.zero(n)]


@dataclass
class DifferentiationResult:
    section: FreeModuleElem
    certificate: list[Poly]
    member: bool
    samples: list[list[float]]
    max_deviation: float

    def to_json(self, ambient=None) -> dict:
        from .dsl import section_to_str

        amb = ambient
        return {
            "section": section_to_str(self.section, amb) if amb is not None else repr(self.section),
            "certificate": [c.to_str(amb.names if amb is not None else None) for c in self.certificate],
            "member": self.member,
            "max_deviation": self.max_deviation,
            "samples": len(self.samples),
        }


def _sample_points(B: SingularSubalgebroid, samples) -> list[np.ndarray]:
    if B.ambient.kind == "liealgebra":
        return [np.zeros(0)]
    return [np.atleast_1d(np.asarray(s, dtype=float)) for s in samples]


def fd_derivative(spec: FamilySpec, x, h: float) -> np.ndarray:
    return velocity(spec.B, spec(h, x), spec(-h, x), h)


def differentiate_family(
    spec: FamilySpec, samples: Sequence = (), h: float = FD_STEP, tol: float = FD_TOL
) -> DifferentiationResult:
    """Exact velocity ``sum_i (d f_i / d lam)(x, 0) g_i`` cross-checked by central differences."""
    B = spec.B
    n = B.nvars
    cert = [c.diff(n).substitute(_lam_zero(n)) for c in spec.coefficients]
    sec = B.module.combine(cert) if cert else FreeModuleElem.zero(B.rank, n)
    pts = _sample_points(B, samples)
    worst = 0.0
    for x in pts:
        exact = section_value(B, sec, x)
        worst = max(worst, float(np.max(np.abs(fd_derivative(spec, x, h) - exact), initial=0.0)))
    if worst > tol:
        curve = []
        for hh in (1e-1, 1e-2, 1e-3, 1e-4, 1e-5):
            dev = max(float(np.max(np.abs(fd_derivative(spec, x, hh) - section_value(B, sec, x)), initial=0.0)) for x in pts)
            curve.append((hh, dev))
        raise NumericalInconsistency(f"finite differences deviate by {worst:.3g} from the exact velocity", curve)
    return DifferentiationResult(sec, cert, B.contains(sec), [p.tolist() for p in pts], worst)


def convergence_order(spec: FamilySpec, x, hs: Sequence[float] = (1e-1, 5e-2, 2.5e-2, 1.25e-2)) -> tuple[float, list[float]]:
    """Slope of log(error) against log(h) for the central difference."""
    B = spec.B
    n = B.nvars
    cert = [c.diff(n).substitute(_lam_zero(n)) for c in spec.coefficients]
    exact = section_value(B, B.module.combine(cert), x)
    errs = [float(np.max(np.abs(fd_derivative(spec, x, h) - exact), initial=0.0)) for h in hs]
    if min(errs) == 0.0:
        # the difference quotient is exact (e.g. translations)
        return math.inf, errs
    slope = float(np.polyfit(np.log(hs), np.log(errs), 1)[0])
    return slope, errs


@dataclass
class RecoveryReport:
    deviations: list[float]
    max_deviation: float

    @property
    def passed(self) -> bool:
        return self.max_deviation <= FD_TOL

    def to_json(self) -> dict:
        return {"deviations": self.deviations, "max_deviation": self.max_deviation, "passed": self.passed}


def recover_generators(B: SingularSubalgebroid, samples: Sequence = (), h: float = FD_STEP) -> RecoveryReport:
    """Finite-difference velocity of each generator's one-parameter group against the generator."""
    pts = _sample_points(B, samples)
    devs = []
    for g in B.generators:
        fam = one_parameter_group(B, g, tol=TIGHT)
        dev = 0.0
        for x in pts:
            dev = max(dev, float(np.max(np.abs(fam.derivative(x, h) - section_value(B, g, x)), initial=0.0)))
        devs.append(dev)
    return RecoveryReport(devs, max(devs, default=0.0))


# --- axioms ------------------------------------------------------------------------


def _identity_residual(e: GroupoidElement) -> np.ndarray:
    if isinstance(e, PairElem):
        return e.target() - e.source()
    if isinstance(e, ActionElem):
        return (e.g - np.eye(len(e.g))).ravel()
    return (e.matrix - np.eye(len(e.matrix))).ravel()


def constant_kernel(B: SingularSubalgebroid) -> list[list[Fraction]]:
    """Constant vectors ``c`` with ``sum c_i g_i = 0`` identically."""
    rows: dict[tuple, list[Fraction]] = {}
    for j, g in enumerate(B.generators):
        for a, comp in enumerate(g):
            for mono, c in comp.terms.items():
                rows.setdefault((a, mono), [Fraction(0)] * B.ngens)[j] = c
    return linalg.nullspace(list(rows.values()), B.ngens) if rows else [
        [Fraction(int(i == j)) for j in range(B.ngens)] for i in range(B.ngens)
    ]


@dataclass
class InjectivityReport:
    found: list[list[float]]
    nontrivial: list[list[float]]
    redundant: bool
    injectivity_radius: float | None = None

    @property
    def passed(self) -> bool:
        return not self.nontrivial

    def to_json(self) -> dict:
        return {
            "found": self.found,
            "nontrivial": self.nontrivial,
            "redundant": self.redundant,
            "injectivity_radius": self.injectivity_radius,
            "passed": self.passed,
        }


def almost_injectivity_probe(
    B: SingularSubalgebroid,
    samples: Sequence = (),
    box: float = 1.0,
    starts: int = 8,
    tol: float = 1e-8,
    seed: int = 0,
) -> InjectivityReport:
    """Constant-parameter bisections of the path-holonomy chart that carry the identity.

    Solutions along the exact constant kernel of the generators are chart
    redundancy (the flows cancel) and are reported as such; any other nonzero
    solution is a failure witness.
    """
    pts = _sample_points(B, samples)
    rng = np.random.default_rng(seed)
    k = B.ngens
    ker = np.array([[float(c) for c in v] for v in constant_kernel(B)]).reshape(-1, k)

    def resid(lam):
        return np.concatenate([_identity_residual(combination_exp(B, lam, x, 1.0, TIGHT)) for x in pts])

    found, bad = [], []
    redundant = False
    for _ in range(starts):
        sol = least_squares(resid, rng.uniform(-box, box, size=k), bounds=(-box * np.ones(k), box * np.ones(k)), xtol=1e-14, ftol=1e-14, gtol=1e-14)
        if float(np.max(np.abs(resid(sol.x)))) > tol:
            continue
        lam = sol.x
        found.append(lam.tolist())
        if np.linalg.norm(lam) <= 1e-6:
            continue
        if len(ker):
            proj = ker.T @ np.linalg.lstsq(ker.T, lam, rcond=None)[0]
            if np.linalg.norm(lam - proj) <= 1e-6:
                redundant = True
                continue
        bad.append(lam.tolist())
    radius = None
    if B.ambient.kind == "liealgebra" and k:
        mats = B.ambient.matrices
        basis = []
        for g in B.generators:
            basis.append([[sum((c.evaluate(()) * m[r][s] for c, m in zip(g, mats)), Fraction(0)) for s in range(len(mats[0]))] for r in range(len(mats[0]))])
        radius = integrate_lie_subalgebra(basis).injectivity_radius
    return InjectivityReport(found, bad, redundant, radius)


@dataclass
class GroupLawReport:
    n: int
    max_deviation: float
    tol: float

    @property
    def passed(self) -> bool:
        return self.max_deviation <= self.tol

    def to_json(self) -> dict:
        return {"samples": self.n, "max_deviation": self.max_deviation, "passed": self.passed}


def group_law_probe(
    family: BisectionFamily,
    samples: Sequence = (),
    n: int = 200,
    tol: float = 1e-6,
    seed: int = 0,
) -> GroupLawReport:
    """``b_{lam+mu}(x)`` against ``(b_lam * b_mu)(x)`` on random triples."""
    rng = np.random.default_rng(seed)
    lo, hi = family.interval
    B = family.B
    box = family.box or [(-1.0, 1.0)] * B.nvars
    worst = 0.0
    for i in range(n):
        while True:
            lam, mu = rng.uniform(lo, hi, size=2)
            if lo <= lam + mu <= hi:
                break
        if samples:
            x = np.atleast_1d(np.asarray(samples[i % len(samples)], dtype=float))
        elif B.ambient.kind == "liealgebra":
            x = np.zeros(0)
        else:
            x = np.array([rng.uniform(a, b) for a, b in box])
        worst = max(worst, family(lam + mu, x).distance(family.product(lam, mu, x)))
    return GroupLawReport(n, worst, tol)


def flow_commutator(a: FreeModuleElem, b: FreeModuleElem, x, t: float) -> np.ndarray:
    """``(phi^b_{-t} phi^a_{-t} phi^b_t phi^a_t (x) - x) / t^2`` for vector fields ``a``, ``b``."""
    y = np.asarray(x, dtype=float)
    for v, s in ((a, t), (b, t), (a, -t), (b, -t)):
        y = flow(v, y, s, tol=TIGHT)
    return (y - np.asarray(x, dtype=float)) / t**2
