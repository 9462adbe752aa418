import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from eidlab.energy import PEnergyForm, energy_gram, lambda_measure
from eidlab.errors import ValidationError
from eidlab.independence import (
    SphereSampler,
    det_equivalence_check,
    independence_decomposition,
    lattice_infimum,
)
from eidlab.linalg import jacobi_eigvalsh, sym_eigvalsh
from eidlab.space import GridSpec, MetricGraph, build_grid_graph, grid_cell_measure


def grid_form(n=9):
    spec = GridSpec((0, 0), (1, 1), (n, n))
    return PEnergyForm(build_grid_graph(spec), grid_cell_measure(spec)), spec.points()


def star_pair(a, b):
    # center 0, leaf 1 carries phi_1, leaf 2 carries phi_2: gamma(0) = diag(a, b)
    g = MetricGraph(3, [[0, 1], [0, 2]], [1.0, 1.0])
    form = PEnergyForm(g, np.ones(3))
    return form, [np.array([0, math.sqrt(2 * a), 0]), np.array([0, 0, math.sqrt(2 * b)])]


def test_scalar_tuple_gives_one(rng):
    form, pts = grid_form(5)
    li = lattice_infimum(form, [pts[:, 0] ** 2 + pts[:, 1]], SphereSampler(1))
    charged = ~np.isnan(li.values)
    assert np.allclose(li.values[charged], 1.0)


@pytest.mark.parametrize("a,b", [(1.0, 3.0), (2.0, 2.0), (5.0, 0.5)])
def test_diagonal_gamma_infimum(a, b):
    form, phis = star_pair(a, b)
    li = lattice_infimum(form, phis, SphereSampler(2, 64))
    assert li.values[0] == pytest.approx(min(a, b) / (a + b), rel=1e-12)


def test_degenerate_pair_within_resolution(rng):
    form, pts = grid_form(7)
    f = np.sin(3 * pts[:, 0]) + pts[:, 1] ** 2
    s = SphereSampler(2, 720)
    li = lattice_infimum(form, [f, f], s)
    vals = li.values[~np.isnan(li.values)]
    assert np.all(vals <= s.resolution(2.0))
    # lambda = (1, -1)/sqrt(2) kills the pair exactly
    assert np.min(vals) >= 0


def test_excluded_vertices_reported():
    g = MetricGraph(3, [[0, 1]], [1.0])
    form = PEnergyForm(g, np.ones(3))
    li = lattice_infimum(form, [np.array([0.0, 1.0, 0.0]), np.array([1.0, 0.0, 0.0])], SphereSampler(2))
    assert li.excluded.tolist() == [2]
    assert math.isnan(li.values[2])


def test_sampler_dimension_mismatch():
    form, pts = grid_form(3)
    with pytest.raises(ValidationError):
        lattice_infimum(form, [pts[:, 0]], SphereSampler(2))


def test_sampler_supersets_and_resolution():
    small, big = SphereSampler(2, 100), SphereSampler(2, 400)
    assert np.allclose(big.points[: len(small.points)], small.points)
    assert big.covering_angle < small.covering_angle
    assert SphereSampler(2, 720).resolution() < 1e-4
    s3 = SphereSampler(3, 500)
    assert np.allclose(np.linalg.norm(s3.points, axis=1), 1.0)
    ladder = SphereSampler(4, 200, "ladder")
    assert ladder.points.shape[1] == 4


@given(st.integers(0, 2 ** 32))
def test_sampled_infimum_brackets_exact_value(seed):
    # for p = 2 the exact infimum is sigma_1 / trace of the Gram matrix
    r = np.random.default_rng(seed)
    form, pts = grid_form(5)
    phis = [r.normal(size=len(pts)), r.normal(size=len(pts))]
    s = SphereSampler(2, 360)
    li = lattice_infimum(form, phis, s)
    G = energy_gram(form, phis)
    ok = ~np.isnan(li.values)
    exact = sym_eigvalsh(G[ok])[:, 0] / np.trace(G[ok], axis1=1, axis2=2)
    assert np.all(li.values[ok] >= exact - 1e-12)
    assert np.all(li.values[ok] <= exact + s.resolution(2.0) + 1e-12)


@given(st.integers(0, 2 ** 32))
def test_infimum_invariant_under_positive_scaling(seed):
    r = np.random.default_rng(seed)
    form, pts = grid_form(4)
    phis = [r.normal(size=len(pts)), r.normal(size=len(pts))]
    s = SphereSampler(2, 128)
    a = lattice_infimum(form, phis, s).values
    b = lattice_infimum(form, [3.0 * p for p in phis], s).values
    assert np.allclose(a, b, rtol=1e-12, equal_nan=True)


def test_decomposition_independent_everywhere():
    form, pts = grid_form(6)
    d = independence_decomposition(form, [pts[:, 0], pts[:, 1]], np.ones(len(pts), bool), SphereSampler(2))
    assert d.independent
    assert d.covered.all()


def test_decomposition_degenerate_pair():
    form, pts = grid_form(6)
    f = pts[:, 0] + pts[:, 1] ** 2
    d = independence_decomposition(form, [f, f], np.ones(len(pts), bool), SphereSampler(2))
    assert d.parts == []
    assert d.residual_mass == pytest.approx(d.lambda_mass)
    assert d.residual_mass == pytest.approx(lambda_measure(form, [f, f]).sum())


def test_decomposition_mixed_case():
    form, pts = grid_form(9)
    x, y = pts[:, 0], pts[:, 1]
    second = np.where(x <= 0.5, y, x)
    d = independence_decomposition(form, [x, second], np.ones(len(pts), bool), SphereSampler(2))
    cov = d.covered
    # per-vertex oracle: the 2x2 Gram matrix is nonsingular exactly on the covered set
    G = energy_gram(form, [x, second])
    det = np.linalg.det(G)
    tr = np.trace(G, axis1=1, axis2=2)
    assert np.array_equal(cov, det > 1e-9 * tr ** 2)
    assert cov[x < 0.5].all()
    assert not cov[x > 0.625 + 1e-9].any()
    levels = [i for i, _ in d.parts]
    assert levels == sorted(levels)
    for (_, a), (_, b) in zip(d.parts, d.parts[1:]):
        assert np.all(a <= b)


def test_det_equivalence_coordinates():
    form, pts = grid_form(7)
    phis = [pts[:, 0], pts[:, 1]]
    rep = det_equivalence_check(form, phis, form.measure, np.ones(len(pts), bool), SphereSampler(2))
    assert rep.agree
    assert rep.det_verdict.all()


def test_det_equivalence_proportional_pair():
    form, pts = grid_form(7)
    f = np.cos(pts[:, 0]) * pts[:, 1]
    rep = det_equivalence_check(form, [f, 2 * f], form.measure, np.ones(len(pts), bool), SphereSampler(2))
    assert not rep.det_verdict.any()


def test_det_equivalence_rank_one_vertex():
    form, phis = star_pair(1.0, 0.0)
    phis[1] = np.zeros(3)
    rep = det_equivalence_check(form, phis, np.ones(3), np.ones(3, bool), SphereSampler(2))
    assert rep.trace[0] > 0
    assert not rep.det_verdict[0]
    assert rep.lattice_verdict[0] == 0


@given(st.integers(0, 2 ** 32), st.integers(2, 6))
def test_eigenvalue_routes_agree(seed, n):
    r = np.random.default_rng(seed)
    X = r.normal(size=(20, n, n))
    M = X @ np.swapaxes(X, 1, 2)
    ref = np.linalg.eigvalsh(M)
    scale = np.abs(ref).max()
    assert np.allclose(sym_eigvalsh(M), ref, atol=1e-9 * scale)
    assert np.allclose(jacobi_eigvalsh(M), ref, atol=1e-9 * scale)
