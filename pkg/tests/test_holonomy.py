import json
import math

import numpy as np
import pytest

from folia.holonomy import (
    CompositionError,
    ModuleMismatch,
    SubalgebraError,
    build_atlas,
    check_subalgebra,
    compose_charts,
    integrate_lie_subalgebra,
    invert_chart,
    kappa_identities,
    leafwise_fiber_dim,
    path_holonomy_chart,
    scan_direction,
    transformation_holonomy,
)

from conftest import module

ROT = module("-y*dx + x*dy", vars="x y")
XDX = module("x*dx")
VANISH = module("x*dx", "y*dx", "x*dy", "y*dy", vars="x y")
J = [[0, -1, 0], [1, 0, 0], [0, 0, 0]]


def test_kappa_on_scaling_chart():
    U = path_holonomy_chart(XDX)
    lam, x = np.array([0.7]), np.array([1.5])
    k_lam, k_x = U.kappa((lam, x))
    assert k_lam[0] == -0.7
    assert abs(k_x[0] - 1.5 * math.exp(0.7)) <= 1e-6
    e = U.evaluate(U.kappa((lam, x)))
    assert abs(e.target()[0] - 1.5) <= 1e-6 and abs(e.source()[0] - 1.5 * math.exp(0.7)) <= 1e-6


@pytest.mark.parametrize("B", [XDX, ROT, VANISH], ids=["xdx", "rotation", "vanish"])
def test_kappa_identities_on_samples(B):
    U = path_holonomy_chart(B)
    rng = np.random.default_rng(3)
    for lam, y in U.sample(15, rng):
        d = kappa_identities(U, lam, y)
        assert max(d.values()) <= 1e-6


def test_inverse_of_rotation_chart_rotates_back():
    U = path_holonomy_chart(ROT)
    Ui = invert_chart(U)
    assert Ui.kappa_defect <= 1e-6
    e = Ui.evaluate((np.array([0.4]), np.array([1.0, 0.0])))
    c, s = math.cos(-0.4), math.sin(-0.4)
    src = e.source()
    assert np.allclose(e.target(), [c * src[0] - s * src[1], s * src[0] + c * src[1]], atol=1e-6)
    assert invert_chart(Ui) is U


def test_chart_composed_with_its_inverse_gives_identities():
    U = path_holonomy_chart(ROT)
    C = compose_charts(U, invert_chart(U))
    u = (np.array([0.4]), np.array([0.2, 0.9]))
    assert C.evaluate((u, u)).identity_defect() <= 1e-12


def test_identity_slice_chart_is_neutral():
    U = path_holonomy_chart(ROT)
    I0 = path_holonomy_chart(ROT, indices=[])
    C = compose_charts(U, I0)
    lam, y = np.array([0.3]), np.array([0.5, -0.2])
    assert C.at_source(lam, y).distance(U.at_source(lam, y)) <= 1e-12


def test_composition_is_associative():
    U = path_holonomy_chart(VANISH)
    V = invert_chart(U)
    left = compose_charts(compose_charts(U, V), U)
    right = compose_charts(U, compose_charts(V, U))
    rng = np.random.default_rng(0)
    for _ in range(5):
        lam = rng.uniform(-0.5, 0.5, size=12)
        y = rng.uniform(-1, 1, size=2)
        assert left.at_source(lam, y).distance(right.at_source(lam, y)) <= 1e-9


def test_composition_needs_overlapping_domains():
    far = path_holonomy_chart(XDX, base_box=[(10.0, 11.0)])
    near = path_holonomy_chart(XDX, box=[(-0.01, 0.01)], base_box=[(-1.0, 1.0)])
    with pytest.raises(CompositionError):
        compose_charts(far, near)


def test_atlas_dump_is_deterministic_json():
    atlas = build_atlas(ROT, depth=3)
    assert len(atlas.charts) == 2 + 4 + 8
    a = json.dumps(atlas.dump(2, seed=5), sort_keys=True)
    b = json.dumps(build_atlas(ROT, depth=3).dump(2, seed=5), sort_keys=True)
    assert a == b
    for entry in json.loads(a):
        assert {"provenance", "k", "box", "samples"} <= set(entry)


def test_so2_in_so3_kernel_and_radius():
    rep = integrate_lie_subalgebra([J])
    assert abs(rep.kernel[0] - 2 * math.pi) <= 1e-9
    assert rep.injectivity_radius >= math.pi - 1e-2
    assert rep.closed.startswith("closed")


def test_so3_subgroup_samples_are_rotations():
    rep = integrate_lie_subalgebra([[[0, 0, 0], [0, 0, -1], [0, 1, 0]], [[0, 0, 1], [0, 0, 0], [-1, 0, 0]], J])
    for g in rep.samples:
        assert np.allclose(g.T @ g, np.eye(3), atol=1e-9)
        assert abs(np.linalg.det(g) - 1) <= 1e-9


def test_so2_samples_fix_the_axis():
    rep = integrate_lie_subalgebra([J])
    for g in rep.samples:
        assert np.allclose(g @ [0, 0, 1], [0, 0, 1], atol=1e-12)


def test_irrational_torus_line_has_no_kernel():
    v = np.diag([1j, math.sqrt(2) * 1j])
    rep = integrate_lie_subalgebra([v], lam_max=1000)
    assert rep.kernel == []
    assert rep.radius_is_lower_bound
    assert rep.closed.startswith("not closed")
    assert rep.scans[0].near_returns


def test_noncompact_direction():
    rep = integrate_lie_subalgebra([[[1, 0], [0, 2]]])
    assert rep.kernel == [] and rep.closed.startswith("closed")


def test_non_subalgebra_rejected():
    with pytest.raises(SubalgebraError) as info:
        check_subalgebra([[[0, 1], [0, 0]], [[0, 0], [1, 0]]])
    assert info.value.pair == (0, 1)
    with pytest.raises(SubalgebraError):
        check_subalgebra([np.array([[0, 1.5], [0, 0]]), np.array([[0, 0], [1.0, 0]])])


def test_scan_direction_reports_period_of_scaled_generator():
    s = scan_direction(2 * np.array(J, dtype=float), lam_max=5)
    assert abs(s.kernel - math.pi) <= 1e-9


def test_transformation_holonomy_of_rotation():
    th = transformation_holonomy(ROT, [[[0, -1], [1, 0]]])
    k = th.isotropy_kernel[0]
    assert abs(k["theta"] - 2 * math.pi) <= 1e-9
    assert k["phi_is_unit"] and not k["parameter_is_unit"]
    assert th.I_trivial


def test_transformation_holonomy_from_action_module():
    th = transformation_holonomy(module("e1", vars="x y", ambient="action so2"))
    assert th.I_trivial
    assert th.chart.phi([0.5], [1.0, 0.0]).distance(th.chart.phi([0.5 + 2 * math.pi], [1.0, 0.0])) <= 1e-9


def test_transformation_holonomy_module_mismatch():
    with pytest.raises(ModuleMismatch):
        transformation_holonomy(VANISH, [[[0, -1], [1, 0]]])
    with pytest.raises(ModuleMismatch):
        transformation_holonomy(module("x*(-y*dx + x*dy)", vars="x y"), [[[0, -1], [1, 0]]])


def test_leafwise_dimension_prunes_redundant_chart():
    rep = leafwise_fiber_dim(VANISH, [1, 0])
    assert rep.dim_fiber == 2 and rep.chart_params == 4
    assert rep.retried and rep.minimal_params == 2 and rep.consistent
    at0 = leafwise_fiber_dim(VANISH, [0, 0])
    assert not at0.retried and at0.consistent
