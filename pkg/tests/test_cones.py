import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from eidlab.cones import (
    Cone,
    Current1,
    build_current,
    cantor_fiber,
    certified_corpus,
    cone_membership,
    cone_null_violation,
    cone_upper_gradient,
    current_boundary,
    direction_resolution,
    dr_hypothesis_check,
    hyperplane_piece,
    in_cantor,
    lipschitz_graph,
    mollifier_kernel,
    preiss_sequence,
)
from eidlab.energy import PEnergyForm, energy_measure, lambda_measure, polarized_energy_measure
from eidlab.errors import UnsupportedError, ValidationError
from eidlab.space import GridSpec, MetricGraph, Polyline, bin_points, build_grid_graph, grid_cell_measure, random_graph, random_stencil_curves

unit_vec = st.tuples(st.floats(-1, 1), st.floats(-1, 1)).filter(lambda t: math.hypot(*t) > 1e-3)


def test_membership_examples():
    c = Cone((1.0, 0.0), math.pi / 3)
    assert cone_membership([1.0, 0.0], c)
    assert not cone_membership([0.0, 1.0], c)
    edge = [math.cos(math.pi / 3), math.sin(math.pi / 3)]
    assert cone_membership(edge, c)
    assert not cone_membership(edge, c, interior=True)


@given(unit_vec, unit_vec, st.floats(0.05, 1.5))
def test_membership_consistency(v, w, theta):
    c = Cone(v, theta)
    neg = Cone(tuple(-x for x in v), theta)
    if cone_membership(w, c, interior=True):
        assert cone_membership(w, c)
    assert cone_membership(w, c) == cone_membership(tuple(-x for x in w), neg)


def test_cone_rejects_bad_angle():
    with pytest.raises(ValidationError):
        Cone((1.0, 0.0), math.pi / 2)
    with pytest.raises(ValidationError):
        Cone((0.0, 0.0), 0.5)


def test_in_cantor_digits():
    assert in_cantor([0.0, 0.25, 1 / 3, 2 / 3, 1.0, 0.75]).all()
    assert not in_cantor([0.5, 0.4, 1.2, -0.1]).any()


def test_hyperplane_has_no_violation(rng):
    spec = GridSpec((-1, -1), (1, 1), (17, 17), "king")
    curves = random_stencil_curves(spec, 100, 60, rng)
    K = hyperplane_piece((1.0, 0.0))
    v = cone_null_violation(K, Cone((1.0, 0.0), math.pi / 3), curves, 0.03)
    assert v.sum() == 0.0


def test_aligned_segment_is_fully_counted():
    K = lambda p: np.abs(np.atleast_2d(p)[:, 1]) <= 1e-12  # noqa: E731
    seg = Polyline([[-0.5, 0.0], [0.5, 0.0]])
    v = cone_null_violation(K, Cone((1.0, 0.0), math.pi / 3), [seg], 0.01)
    assert v[0] == pytest.approx(1.0, rel=1e-12)


def test_corpus_is_cone_null(rng):
    spec = GridSpec((-1, -1), (1, 1), (33, 33), "king")
    curves = random_stencil_curves(spec, 150, 80, rng)
    for K in certified_corpus():
        assert cone_null_violation(K, K.cone, curves, 0.01).sum() == 0.0, K.name


def test_lipschitz_graph_needs_small_slope():
    with pytest.raises(ValidationError):
        lipschitz_graph(lambda t: t, 1.0, theta=math.pi / 3)


def test_cantor_fiber_membership():
    K = cantor_fiber(0.0)
    assert K.contains(np.array([[0.0, 0.25], [0.0, 0.5], [0.1, 0.25]])).tolist() == [True, False, False]


@given(st.floats(0.05, 1.4), st.floats(0.2, 3.0), st.floats(0, 2 * math.pi))
def test_upper_gradient_linear_case(eps, scale, angle):
    lam = scale * np.array([math.cos(angle), math.sin(angle)])
    cone = Cone(tuple(lam), math.pi / 2 - eps)
    pts = np.zeros((3, 2))
    val = cone_upper_gradient(lambda p: np.tile(lam, (len(p), 1)), pts, lambda p: np.ones(len(p), bool), cone, 720)
    # the boundary rays are part of the direction set, so the 2D value is exact
    assert np.allclose(val, scale * math.sin(eps), rtol=1e-12)


def test_upper_gradient_without_k():
    g = lambda p: np.column_stack([2 * p[:, 0], -p[:, 1]])  # noqa: E731
    pts = np.random.default_rng(0).normal(size=(20, 2))
    val = cone_upper_gradient(g, pts, None, Cone((1.0, 0.0), 0.5))
    assert np.allclose(val, np.linalg.norm(g(pts), axis=1))


def test_upper_gradient_radial_orthogonal():
    # f = |y|^2 / 2 at (0, 1): gradient e_2 lies outside the double cone about e_1
    grad = lambda p: p  # noqa: E731
    val = cone_upper_gradient(grad, np.array([[0.0, 1.0]]), lambda p: np.ones(len(p), bool), Cone((1.0, 0.0), math.pi / 3))
    assert val[0] == pytest.approx(1.0, rel=1e-15)


def test_upper_gradient_3d_resolution():
    eps = 0.2
    cone = Cone((0.0, 0.0, 1.0), math.pi / 2 - eps)
    v = cone_upper_gradient(lambda p: np.tile([0.0, 0.0, 1.0], (len(p), 1)), np.zeros((1, 3)),
                            lambda p: np.ones(len(p), bool), cone)
    assert 0 <= math.sin(eps) - v[0] <= direction_resolution(3)


def test_current_of_constant_is_zero(rng):
    form = PEnergyForm(random_graph(rng, 10, 0.4), np.ones(10))
    T = build_current(form, [rng.normal(size=10)], np.full(10, 3.0))
    assert T.total_mass() == 0.0


def test_current_on_path_points_forward():
    g = MetricGraph(5, [[i, i + 1] for i in range(4)], np.ones(4))
    form = PEnergyForm(g, np.ones(5))
    x = np.arange(5.0)
    T = build_current(form, [x], x)
    assert np.allclose(T.vectors[:, 0], energy_measure(form, x))
    assert np.all(T.direction[:, 0] == 1.0)
    assert T.to_csv().splitlines()[0] == "x1,v1"


def test_boundary_constant_and_linear(rng):
    form = PEnergyForm(random_graph(rng, 20, 0.3), rng.uniform(0.5, 2, 20))
    fs = [rng.normal(size=20), rng.normal(size=20)]
    g = rng.normal(size=20)
    T = build_current(form, fs, g)
    c = current_boundary(T, lambda F: np.full(len(F), 4.0), lambda F: np.zeros_like(F))
    assert max(abs(c.value), abs(c.chain_rule), abs(c.generator)) < 1e-12
    a = np.array([0.7, -1.3])
    b = current_boundary(T, lambda F: F @ a, lambda F: np.tile(a, (len(F), 1)))
    direct = sum(a[j] * polarized_energy_measure(form, fs[j], g).sum() for j in range(2))
    assert b.value == pytest.approx(direct, rel=1e-12)
    assert b.chain_rule == pytest.approx(direct, rel=1e-10)
    assert b.generator == pytest.approx(direct, rel=1e-10)


def test_boundary_needs_provenance():
    T = Current1([[0.0]], [[1.0]])
    with pytest.raises(UnsupportedError):
        current_boundary(T, lambda F: F[:, 0], lambda F: np.ones_like(F))


def test_boundary_gap_shrinks_under_refinement():
    gaps = []
    for n in (33, 65, 129, 257):
        spec = GridSpec((0.0,), (1.0,), (n,))
        form = PEnergyForm(build_grid_graph(spec, 1 / spec.spacing[0]), grid_cell_measure(spec))
        x = spec.axis_values(0)
        f, g = np.sin(3 * x), np.cos(2 * x)
        T = build_current(form, [f], g)
        res = current_boundary(T, lambda F: np.exp(F[:, 0]), lambda F: np.exp(F), third_derivative_bound=math.e)
        gaps.append(abs(res.value - res.chain_rule))
    assert all(b < a for a, b in zip(gaps, gaps[1:]))
    assert gaps[-1] < 1e-4


def grid_coords(n=9):
    spec = GridSpec((0, 0), (1, 1), (n, n))
    form = PEnergyForm(build_grid_graph(spec), grid_cell_measure(spec))
    pts = spec.points()
    return form, [pts[:, 0].copy(), pts[:, 1].copy()], float(spec.spacing[0])


def test_dr_coordinates_pass():
    form, coords, h = grid_coords()
    nu = bin_points(np.column_stack(coords), lambda_measure(form, coords), 4 * h, np.zeros(2))
    rep = dr_hypothesis_check([build_current(form, coords, c) for c in coords], nu)
    assert rep.passed and rep.rows


def test_dr_duplicated_current_fails():
    form, coords, h = grid_coords()
    nu = bin_points(np.column_stack(coords), lambda_measure(form, coords), 4 * h, np.zeros(2))
    T = build_current(form, coords, coords[0])
    rep = dr_hypothesis_check([T, T], nu)
    assert not rep.passed
    assert len(rep.violations()) == len(rep.rows)


def test_dr_uncharged_current_reported():
    form, coords, h = grid_coords()
    nu = bin_points(np.array([[5.0, 5.0]]), [1.0], 4 * h, np.zeros(2))
    rep = dr_hypothesis_check([build_current(form, coords, c) for c in coords], nu)
    assert rep.violations()[0][2] == 0.0
    with pytest.raises(ValidationError):
        dr_hypothesis_check([build_current(form, coords, coords[0])], nu)


def test_mollifier_kernel():
    spec = GridSpec((0, 0), (1, 1), (65, 65))
    ker = mollifier_kernel(spec, 0.1)
    assert ker.sum() == pytest.approx(1.0)
    assert np.array_equal(ker, ker[::-1, ::-1])
    with pytest.raises(ValidationError):
        mollifier_kernel(spec, 0.02)


def segment_case(n=129):
    spec = GridSpec((-0.5, -0.5), (0.5, 0.5), (n, n), "knight-extended")
    P = spec.points()
    h = float(spec.spacing[1])
    seg = lambda x0: (np.abs(P[:, 0] - x0) <= 1e-12) & (np.abs(P[:, 1]) <= 0.25 + 1e-12)  # noqa: E731
    return spec, seg, h


def test_preiss_identity_case():
    spec, seg, h = segment_case()
    K = seg(0.0)
    steps, _ = preiss_sequence(spec, np.flatnonzero(K), np.full(K.sum(), h), np.zeros_like(K), (4, 8), R=0.45)
    for s in steps:
        assert abs(s.integral - s.total_mass) <= 1e-3 * s.total_mass


def test_preiss_split_sum_bound():
    spec, seg, h = segment_case()
    K, off = seg(0.0), seg(0.25)
    atoms = np.concatenate([np.flatnonzero(K), np.flatnonzero(off)])
    slack = 0.05
    steps, _ = preiss_sequence(spec, atoms, np.full(len(atoms), h), K, (4, 8), R=0.45)
    bound = off.sum() * h * (1 + slack) + (2 / 3 + slack) * K.sum() * h
    for s in steps:
        assert s.integral <= bound
        assert s.max_d1_on_K <= 2 / 3 + slack
        assert s.max_lip <= math.sqrt(2) + slack


def test_preiss_resolution_error():
    spec, seg, h = segment_case(65)
    K = seg(0.0)
    with pytest.raises(ValidationError):
        preiss_sequence(spec, np.flatnonzero(K), np.full(K.sum(), h), K, (16,), R=0.45)
