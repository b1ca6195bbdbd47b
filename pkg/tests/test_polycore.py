from fractions import Fraction
from itertools import product

import pytest
import sympy
from hypothesis import given
from hypothesis import strategies as st

from folia.polycore import (
    DegreeBoundExceeded,
    FreeModuleElem,
    Poly,
    RankMismatch,
    Submodule,
    normal_form,
    syzygies,
)

N = 2
coeff = st.fractions(min_value=-3, max_value=3, max_denominator=4)
mono = st.tuples(st.integers(0, 2), st.integers(0, 2))
polys = st.dictionaries(mono, coeff, max_size=4).map(lambda d: Poly(d, N))
elems = st.lists(polys, min_size=2, max_size=2).map(lambda cs: FreeModuleElem(cs, N))
gen_lists = st.lists(elems, min_size=1, max_size=3)

x, y = Poly.var(0, N), Poly.var(1, N)


def E(*cs):
    return FreeModuleElem([Poly.const(c, N) if not isinstance(c, Poly) else c for c in cs], N)


# --- ring axioms -----------------------------------------------------------------


@given(polys, polys, polys)
def test_ring_axioms(a, b, c):
    assert a + b == b + a
    assert a * b == b * a
    assert (a + b) + c == a + (b + c)
    assert (a * b) * c == a * (b * c)
    assert a * (b + c) == a * b + a * c
    assert a - a == Poly.zero(N)
    assert a * Poly.const(1, N) == a


@given(polys, polys)
def test_derivative_is_a_derivation(a, b):
    for i in range(N):
        assert (a * b).diff(i) == a.diff(i) * b + a * b.diff(i)


@given(polys, polys, st.tuples(coeff, coeff))
def test_evaluation_is_a_ring_morphism(a, b, pt):
    assert (a * b).evaluate(pt) == a.evaluate(pt) * b.evaluate(pt)
    assert (a + b).evaluate(pt) == a.evaluate(pt) + b.evaluate(pt)


def test_evaluate_rejects_floats():
    with pytest.raises(TypeError):
        x.evaluate([0.5, 1])


def test_poly_matches_sympy_expansion():
    X, Y = sympy.symbols("x y")
    p = (x + 2 * y - Fraction(1, 3)) ** 3 * (x - y)
    ref = sympy.Poly(sympy.expand((X + 2 * Y - sympy.Rational(1, 3)) ** 3 * (X - Y)), X, Y)
    assert {m: Fraction(int(c.p), int(c.q)) for m, c in ref.terms()} == dict(p.terms)


# --- division and membership -----------------------------------------------------


@given(gen_lists, elems)
def test_division_round_trip(gens, e):
    S = Submodule(gens)
    rem, cert = S.normal_form(e)
    assert S.combine(cert) + rem == e


@given(gen_lists, st.lists(polys, min_size=3, max_size=3))
def test_combinations_are_members(gens, cs):
    S = Submodule(gens)
    e = S.combine(cs[: len(gens)])
    rem, cert = normal_form(e, S)
    assert rem.is_zero()
    assert S.combine(cert) == e


def test_simple_membership_and_certificate():
    S = Submodule([E(1, 0), E(0, x)])
    assert S.syzygies == ()
    assert not S.contains(E(0, 1))
    rem, cert = S.normal_form(E(x, 0))
    assert rem.is_zero() and cert == (x, Poly.zero(N))


def test_rank_mismatch():
    S = Submodule([E(1, 0)])
    with pytest.raises(RankMismatch):
        S.normal_form(FreeModuleElem([x], N))


def test_degree_guard():
    gens = [E(x**3 - y**2, 0), E(x * y - 1, 0), E(0, y**3 - x)]
    with pytest.raises(DegreeBoundExceeded):
        Submodule(gens, degree_bound=2).groebner


def test_empty_syzygies_rejected():
    with pytest.raises(ValueError):
        syzygies([])


# --- syzygies ----------------------------------------------------------------------


def test_syzygies_of_coordinate_generators():
    gens = [E(x, 0), E(y, 0), E(0, x), E(0, y)]
    syz = set(syzygies(gens))
    z = Poly.zero(N)
    assert syz == {(y, -x, z, z), (z, z, y, -x)}


@given(gen_lists)
def test_syzygy_residual_is_zero(gens):
    S = Submodule(gens)
    for s in S.syzygies:
        assert S.combine(list(s)).is_zero()


def _brute_force_syzygies(gens, d):
    """Relations with coefficients of degree <= d via a sympy nullspace over monomial coefficients."""
    monos = [m for m in product(range(d + 1), repeat=N) if sum(m) <= d]
    k = len(gens)
    unknowns = [(i, m) for i in range(k) for m in monos]
    rows = {}
    for col, (i, m) in enumerate(unknowns):
        shifted = gens[i] * Poly({m: 1}, N)
        for a, comp in enumerate(shifted):
            for mm, c in comp.terms.items():
                rows.setdefault((a, mm), [0] * len(unknowns))[col] = sympy.Rational(c.numerator, c.denominator)
    if not rows:
        return []
    M = sympy.Matrix(list(rows.values()))
    out = []
    for v in M.nullspace():
        comps = [Poly.zero(N) for _ in range(k)]
        for val, (i, m) in zip(v, unknowns):
            if val:
                comps[i] = comps[i] + Poly({m: Fraction(int(val.p), int(val.q))}, N)
        out.append(FreeModuleElem(comps, N))
    return out


@pytest.mark.parametrize(
    "gens",
    [
        [E(x, 0), E(y, 0), E(0, x), E(0, y)],
        [E(x, y), E(y, x), E(x * y, 0)],
        [E(x**2, 0), E(x * y, 0), E(y**2, 0)],
        [E(1, x), E(y, x * y)],
    ],
)
def test_syzygies_complete_against_brute_force(gens):
    syz = [FreeModuleElem(list(s), N) for s in syzygies(gens)]
    brute = _brute_force_syzygies(gens, 3)
    if not syz:
        assert not brute
        return
    T = Submodule(syz)
    for b in brute:
        assert T.contains(b)


@given(gen_lists)
def test_groebner_is_idempotent(gens):
    S = Submodule(gens)
    if not S.groebner:
        return
    again = Submodule([FreeModuleElem(list(g), N) if not isinstance(g, FreeModuleElem) else g for g in S.groebner])
    assert again.groebner == S.groebner


@given(gen_lists, st.permutations(range(3)))
def test_membership_is_generator_order_independent(gens, perm):
    perm = [p for p in perm if p < len(gens)]
    S1, S2 = Submodule(gens), Submodule([gens[p] for p in perm])
    for g in gens:
        assert S2.contains(g)
    assert S1.groebner == S2.groebner
