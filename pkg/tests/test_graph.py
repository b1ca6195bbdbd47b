import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from folia import dsl
from folia.cli import load_module
from folia.graph import (
    Arc,
    LeafPath,
    concat,
    explore,
    graph_equal_sample,
    in_saturation,
    openness_counterexample,
    replay,
    reverse,
    same_leaf,
    subspace_diffeology_differentiation,
)
from folia.pointwise import PreconditionError

from conftest import module

TOL = 1e-5


@pytest.fixture(scope="module")
def x2dx():
    return module("x^2*dx")


@pytest.fixture(scope="module")
def rotation():
    return module("-y*dx + x*dy", vars="x y")


def test_x2dx_same_side_is_yes_with_replayable_path(x2dx):
    v = same_leaf(x2dx, [1.0], [2.0], budget=200)
    assert v.yes
    assert np.allclose(replay(x2dx, v.path), [2.0], atol=10 * TOL)


def test_x2dx_across_origin_is_unknown(x2dx):
    v = same_leaf(x2dx, [1.0], [-1.0], budget=50)
    assert v.answer == "Unknown" and v.path is None
    assert v.expansions == 50


def test_same_point_gives_empty_path(x2dx):
    v = same_leaf(x2dx, [0.5], [0.5], budget=5)
    assert v.yes and v.path.segments == []


def test_zero_point_is_its_own_leaf(x2dx):
    assert same_leaf(x2dx, [0.0], [0.0], budget=5).yes
    assert not same_leaf(x2dx, [0.0], [0.5], budget=20).yes


def test_dimension_mismatch_rejected(x2dx):
    with pytest.raises(ValueError):
        same_leaf(x2dx, [1.0, 0.0], [2.0])


def test_lie_algebra_has_no_leaves():
    with pytest.raises(PreconditionError):
        same_leaf(load_module("so3"), [0.0], [0.0])


def test_path_json_round_trip(x2dx):
    path = same_leaf(x2dx, [0.5], [1.5], budget=200).path
    back = LeafPath.from_json(json.loads(json.dumps(path.to_json())))
    assert back.segments == path.segments
    assert np.allclose(replay(x2dx, back), [1.5], atol=10 * TOL)


@given(st.floats(0.3, 1.5), st.floats(0.3, 1.5), st.floats(0.3, 1.5))
def test_symmetry_and_transitivity_by_replay(a, b, c):
    B = module("x^2*dx")
    ab = same_leaf(B, [a], [b], budget=200)
    bc = same_leaf(B, [b], [c], budget=200)
    assert ab.yes and bc.yes
    back = reverse(ab.path)
    assert np.allclose(replay(B, back), [a], atol=10 * TOL)
    ac = concat(ab.path, bc.path)
    assert np.allclose(replay(B, ac), [c], atol=10 * TOL)


def test_concat_rejects_gap(x2dx):
    p1 = same_leaf(x2dx, [0.5], [1.0], budget=200).path
    p2 = same_leaf(x2dx, [1.2], [1.5], budget=200).path
    with pytest.raises(ValueError):
        concat(p1, p2)


def test_rotation_verdict_matches_radius(rotation):
    rng = np.random.default_rng(7)
    false_yes = missed = 0
    for i in range(100):
        p = rng.uniform(-1, 1, 2)
        if i % 2:
            th = rng.uniform(-math.pi, math.pi)
            q = np.array([[math.cos(th), -math.sin(th)], [math.sin(th), math.cos(th)]]) @ p
        else:
            q = rng.uniform(-1, 1, 2)
        v = same_leaf(rotation, p, q, budget=30)
        equal = abs(np.linalg.norm(p) - np.linalg.norm(q)) < 1e-9
        if v.yes:
            false_yes += not equal
            assert np.allclose(replay(rotation, v.path), q, atol=10 * TOL)
        else:
            missed += equal
    assert false_yes == 0
    assert missed == 0


def test_explore_answers_all_targets(rotation):
    targets = [[0.0, 1.0], [-1.0, 0.0], [0.0, 0.5]]
    out = explore(rotation, [1.0, 0.0], targets, budget=30)
    assert [v.answer for v in out] == ["Yes", "Yes", "Unknown"]


def test_action_module_uses_induced_foliation():
    B = load_module("rotation_action")
    assert same_leaf(B, [1.0, 0.0], [0.0, -1.0], budget=30).yes


# --- graph comparison ----------------------------------------------------------------


GRID = [[-1.0], [-0.5], [0.0], [0.5], [1.0]]


def test_graph_equal_for_same_leaves():
    cmp = graph_equal_sample(module("x*dx"), module("x^2*dx"), GRID, budget=30)
    assert cmp.disagreements == []
    assert cmp.agreements == len(GRID) ** 2


def test_graph_disagreement_across_origin():
    cmp = graph_equal_sample(module("x*dx"), module("dx"), GRID, budget=30)
    pairs = {(d["p"][0], d["q"][0]) for d in cmp.disagreements}
    assert (-1.0, 1.0) in pairs and (1.0, -1.0) in pairs
    assert all(d["first"] == "Unknown" and d["second"] == "Yes" for d in cmp.disagreements)


def test_graph_equal_threads_match_serial():
    a = graph_equal_sample(module("x*dx"), module("dx"), GRID, budget=50)
    b = graph_equal_sample(module("x*dx"), module("dx"), GRID, budget=50, workers=3)
    assert a.to_json() == b.to_json()


def test_graph_equal_dimension_mismatch():
    with pytest.raises(ValueError):
        graph_equal_sample(module("x*dx"), module("dx", vars="x y"), GRID)


# --- differentiation under the subspace diffeology ------------------------------------


def test_scaling_family_differentiates_outside_the_module(x2dx):
    names = ["x", "l"]
    fams = [[dsl.parse_poly("(1+l)*x", names)], [dsl.parse_poly("x + l*x^2", names)]]
    res = subspace_diffeology_differentiation(x2dx, fams, [[1.0], [-1.0], [0.0]])
    assert [r.member for r in res] == [False, True]
    assert dsl.section_to_str(res[0].derivative, x2dx.ambient) == "x*dx"
    assert res[0].leaf_checks == 6


def test_family_must_start_at_identity(x2dx):
    with pytest.raises(PreconditionError):
        subspace_diffeology_differentiation(x2dx, [[dsl.parse_poly("x + 1 + l", ["x", "l"])]], [[1.0]])


def test_family_that_leaves_the_leaf(x2dx):
    with pytest.raises(PreconditionError):
        subspace_diffeology_differentiation(x2dx, [[dsl.parse_poly("x - 3*l", ["x", "l"])]], [[0.2]], lams=(0.1,), budget=40)


# --- openness ------------------------------------------------------------------------


def test_openness_witnesses():
    rep = openness_counterexample()
    assert rep.saturation_ok and rep.passed and not rep.degenerate
    assert len(rep.witnesses) == 3
    for w in rep.witnesses:
        assert w["origin_in_saturation"] and all(w["nearby_outside"].values())


def test_full_circle_is_degenerate():
    rep = openness_counterexample((-math.pi, math.pi))
    assert rep.degenerate and rep.witnesses == [] and not rep.passed and rep.saturation_ok


def test_arc_must_contain_identity():
    with pytest.raises(ValueError):
        openness_counterexample((0.5, 1.0))


@given(st.floats(-math.pi, math.pi), st.floats(0.1, 2.0), st.floats(0, 2 * math.pi))
def test_saturation_membership_oracle(g, r, t):
    arc = Arc(-math.pi / 4, math.pi / 4)
    if min(abs(g - math.pi / 4), abs(g + math.pi / 4)) < 1e-3:
        return
    x = (r * math.cos(t), r * math.sin(t))
    assert in_saturation(arc, g, x) == arc.contains(g)
    assert in_saturation(arc, g, (0.0, 0.0))
