import json
import random
from fractions import Fraction
from pathlib import Path

import pytest
from hypothesis import given
from hypothesis import strategies as st

from folia import dsl
from folia.geometry import structure_constants
from folia.pointwise import (
    LeafRankViolation,
    PreconditionError,
    ensure_involutive,
    fiber_report,
    leaf_rank_report,
    local_generators_check,
    projectivity_scan,
    pullback_dim_check,
)

from conftest import module

MODELS = {p.stem: p for p in (Path(dsl.__file__).parent / "models").glob("*.sfo")}
VANISH = ["x*dx", "y*dx", "x*dy", "y*dy"]
q = st.fractions(min_value=-3, max_value=3, max_denominator=5)


def dims(rep):
    return rep.dim_ev, rep.dim_isotropy, rep.dim_fiber


def test_x2dx_dimensions():
    B = module("x^2*dx")
    assert dims(fiber_report(B, [0])) == (0, 1, 1)
    assert dims(fiber_report(B, [1])) == (1, 0, 1)


def test_vanishing_module_dimensions():
    B = module(*VANISH, vars="x y")
    assert fiber_report(B, [0, 0]).dim_fiber == 4
    assert fiber_report(B, [1, 0]).dim_fiber == 2
    assert dims(fiber_report(B, [1, 0])) == (2, 0, 2)


def test_rotation_dimensions():
    B = module("-y*dx + x*dy", vars="x y")
    assert dims(fiber_report(B, [0, 0])) == (0, 1, 1)
    assert dims(fiber_report(B, [Fraction(1, 2), 3])) == (1, 0, 1)


def test_float_points_rejected():
    with pytest.raises(TypeError):
        fiber_report(module("x*dx"), [0.5])


def test_vanishing_isotropy_is_gl2():
    """x_i d_j corresponds to the elementary matrix E_ij; compare with matrix commutators."""
    B = module(*VANISH, vars="x y")
    rep = fiber_report(B, [0, 0])
    assert rep.dim_isotropy == 4
    assert rep.isotropy_basis == [[Fraction(int(i == j)) for j in range(4)] for i in range(4)]

    def E(i, j):
        return [[Fraction(int((r, c) == (i, j))) for c in range(2)] for r in range(2)]

    # generator order: x dx, y dx, x dy, y dy
    mats = [E(0, 0), E(1, 0), E(0, 1), E(1, 1)]
    oracle = structure_constants(mats)
    got = rep.constants_tensor()
    assert [[list(r) for r in row] for row in oracle] == got


def test_action_module_at_fixed_point():
    # constant sections evaluate to nonzero elements of the fiber so(3): no isotropy
    B = module("e1", "e2", "e3", vars="x y z", ambient="action so3")
    assert dims(fiber_report(B, [0, 0, 0])) == (3, 0, 3)
    # sections vanishing at the fixed point are isotropy; their bracket (x^2 + y^2) e1 is in I_0 B
    V = module("x*e1", "y*e1", vars="x y", ambient="action so2")
    rep = fiber_report(V, [0, 0])
    assert dims(rep) == (0, 2, 2)
    assert rep.structure_constants == []


def test_isotropy_of_lie_algebra_module():
    B = module("e1", "e2", "e3", vars="", ambient="liealgebra so3")
    rep = fiber_report(B, [])
    assert dims(rep) == (3, 0, 3)


@pytest.mark.parametrize("name", sorted(MODELS))
def test_exact_sequence_identity_on_random_points(name):
    B = dsl.load(MODELS[name])
    rng = random.Random(name)
    for _ in range(25):
        x = [Fraction(rng.randint(-6, 6), rng.randint(1, 4)) for _ in range(B.nvars)]
        if rng.random() < 0.2:
            x = [Fraction(0)] * B.nvars
        r = fiber_report(B, x, structure=False)
        assert r.dim_fiber == r.dim_ev + r.dim_isotropy


@given(q, q)
def test_exact_sequence_identity_property(a, b):
    B = module(*VANISH, vars="x y")
    r = fiber_report(B, [a, b])
    assert r.dim_fiber == r.dim_ev + r.dim_isotropy
    assert r.dim_fiber == (4 if a == b == 0 else 2)


def test_fiber_dimension_independent_of_generating_set():
    B1 = module(*VANISH, vars="x y")
    B2 = module("x*dx + y*dy", "x*dx - y*dx", "x*dy", "y*dy", "x^2*dy", vars="x y")
    for pt in ([0, 0], [1, 0], [Fraction(1, 3), -2]):
        assert fiber_report(B1, pt).dim_fiber == fiber_report(B2, pt).dim_fiber


def test_projectivity():
    pts = [[Fraction(i, 2), Fraction(j, 2)] for i in range(-2, 3) for j in range(-2, 3)]
    hyp = projectivity_scan(module("dx", "y*dy", vars="x y"), pts)
    assert hyp.verdict == "projective" and hyp.rank == 2
    assert "smooth" in hyp.smoothness_verdict
    van = projectivity_scan(module(*VANISH, vars="x y"), pts, workers=2)
    assert van.verdict == "non-projective"
    assert set(van.dims) == {2, 4}
    codim2 = dsl.load(MODELS["codim2"])
    pts3 = [[0, 0, 0], [0, 1, 0], [1, 0, 0], [0, 0, 1]]
    assert projectivity_scan(codim2, pts3).verdict == "non-projective"
    json.dumps(van.to_json())


def test_local_generators():
    B = module(*VANISH, vars="x y")
    rep = local_generators_check(B, [1, 0], [B.generators[0], B.generators[2]], probes=[[2, 0], [0, 0]])
    assert not rep.passed and rep.missing == [1, 3]
    assert rep.probes[0][1] and not rep.probes[1][1]
    H = module("dx", "y*dy", vars="x y")
    assert local_generators_check(H, [0, 0], list(H.generators)).passed
    with pytest.raises(PreconditionError):
        local_generators_check(B, [1, 0], [B.generators[0]])


def test_leaf_rank():
    R = module("-y*dx + x*dy", vars="x y")
    rep = leaf_rank_report(R, [[1, 0], [0, 1], [Fraction(3, 5), Fraction(4, 5)]])
    assert (rep.rank_BL, rep.rank_leaf_algebroid) == (1, 1)
    B = module(*VANISH, vars="x y")
    assert leaf_rank_report(B, [[0, 0]]).rank_leaf_algebroid == 4
    with pytest.raises(LeafRankViolation):
        leaf_rank_report(B, [[0, 0], [1, 0]])


@pytest.mark.parametrize("gens,vars", [(VANISH, "x y"), (["x^2*dx"], "x"), (["-y*dx + x*dy"], "x y")])
def test_pullback_dimension(gens, vars):
    B = module(*gens, vars=vars)
    n = B.nvars
    for x, y in [([0] * n, [1] * n), ([1] * n, [0] * n), ([Fraction(1, 2)] * n, [-2] * n)]:
        assert pullback_dim_check(B, x, y).passed


def test_ensure_involutive():
    with pytest.raises(PreconditionError):
        ensure_involutive(dsl.load(MODELS["noninv"]))
    ensure_involutive(dsl.load(MODELS["rotation"]))
