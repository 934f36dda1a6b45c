import numpy as np
import pytest

from baryfold.measures import BoundaryMeasure, VisualFamily, atom_measure, normalize, sphere_quadrature, visual_measure
from baryfold.models import BallIsometry, HyperbolicSpace, ModelError, ProductSpace
from baryfold.straightening import (DegenerateMeasureError, SimplexSpec, barycenter, check_spherical,
                                    convexity_witness, d_straighten, d_straighten_fd, envelope_value, forms,
                                    jacobian_chain_check, random_spherical_point, random_visual_mix,
                                    ratio_bound_constant, ratio_envelope, solve_barycenter, spherical_grid,
                                    straighten, symmetric_envelope, tangent_basis)
from oracles import brute_envelope


@pytest.mark.parametrize("model", [HyperbolicSpace(2), HyperbolicSpace(3), ProductSpace(2, 2)],
                         ids=lambda m: m.model_id)
def test_barycenter_of_reference_is_origin(model):
    res = solve_barycenter(sphere_quadrature(model))
    assert np.abs(res.point - model.origin).max() <= 1e-10
    assert res.grad_norm < 1e-10


@pytest.mark.parametrize("n", [2, 3, 4])
def test_visual_fixed_point(n):
    model = HyperbolicSpace(n)
    fam = VisualFamily(model)
    ref = sphere_quadrature(model)
    rng = np.random.default_rng(n)
    for _ in range(5):
        x = model.random_point(rng)
        res = solve_barycenter(normalize(visual_measure(fam, x, ref)))
        assert model.distance(res.point, x) <= 1e-6
        assert res.grad_norm < 1e-10


def test_fixed_point_against_grid_search():
    model = HyperbolicSpace(2)
    ref = sphere_quadrature(model)
    x = np.array([0.3, -0.2])
    m = normalize(visual_measure(VisualFamily(model), x, ref))
    # coarse-to-fine grid search of the averaged Busemann function, independent of the solver
    center, width = np.zeros(2), 0.9
    for _ in range(12):
        g = np.linspace(-width, width, 41)
        pts = center + np.stack(np.meshgrid(g, g), -1).reshape(-1, 2)
        pts = pts[np.sum(pts ** 2, axis=1) < 0.99]
        vals = np.array([m.weights @ model.busemann(p, ref.nodes) for p in pts])
        center = pts[np.argmin(vals)]
        width /= 4
    assert np.abs(center - x).max() <= 1e-6
    assert np.abs(barycenter(m) - center).max() <= 1e-6


def test_three_symmetric_atoms():
    model = HyperbolicSpace(2)
    ref = sphere_quadrature(model)
    ang = np.deg2rad([0.0, 120.0, 240.0])
    m = atom_measure(ref, np.column_stack([np.cos(ang), np.sin(ang)]))
    assert np.abs(barycenter(m)).max() <= 1e-10


def test_barycenter_errors():
    model = HyperbolicSpace(2)
    ref = sphere_quadrature(model, 64)
    with pytest.raises(ModelError):
        barycenter(ref.reweighted(np.r_[0.0, ref.weights[1:]]))
    # two antipodal atoms: the functional is flat along the geodesic joining them
    m = BoundaryMeasure(model, np.array([[1.0, 0.0], [-1.0, 0.0]]), np.array([0.5, 0.5]), True)
    with pytest.raises(DegenerateMeasureError):
        barycenter(m)


@pytest.mark.parametrize("model", [HyperbolicSpace(3), ProductSpace(2, 2)], ids=lambda m: m.model_id)
def test_convexity_witness_positive(model):
    rng = np.random.default_rng(5)
    m = random_visual_mix(model, sphere_quadrature(model), rng)
    x = barycenter(m)
    assert convexity_witness(m, x, rng, lines=20) > 0


def test_spherical_points():
    with pytest.raises(ValueError):
        check_spherical([0.5, 0.5], 2)
    with pytest.raises(ValueError):
        check_spherical([1.0, 0.0], 3)
    with pytest.raises(ValueError):
        check_spherical([-0.6, 0.8], 2)
    rng = np.random.default_rng(6)
    a = random_spherical_point(rng, 4)
    assert np.all(a >= 0) and a @ a == pytest.approx(1.0)
    grid = spherical_grid(3, 4)
    assert len(grid) == 15
    assert np.allclose(np.sum(grid ** 2, axis=1), 1.0)
    assert np.allclose(tangent_basis(a).T @ a, 0.0)


@pytest.mark.parametrize("model", [HyperbolicSpace(2), HyperbolicSpace(3), HyperbolicSpace(4)],
                         ids=lambda m: m.model_id)
def test_vertex_consistency(model):
    rng = np.random.default_rng(7)
    spec = SimplexSpec(model, [model.random_point(rng) for _ in range(model.dim + 1)])
    for i in range(model.dim + 1):
        e = np.zeros(model.dim + 1)
        e[i] = 1.0
        assert model.distance(straighten(spec, e), spec.vertices[i]) <= 1e-6
    assert spec.k == model.dim


def test_constant_simplex():
    model = HyperbolicSpace(3)
    x = np.array([0.2, -0.1, 0.3])
    spec = SimplexSpec(model, [x] * 4)
    rng = np.random.default_rng(8)
    for _ in range(3):
        a = random_spherical_point(rng, 4)
        assert model.distance(straighten(spec, a), x) <= 1e-8
        assert np.abs(d_straighten(spec, a)).max() <= 1e-8
        r = jacobian_chain_check(spec, a)
        assert r["jac"] <= 1e-12 and r["holds"]


def test_edge_midpoint_on_symmetry_axis():
    model = HyperbolicSpace(2)
    spec = SimplexSpec(model, [[0.4, 0.2], [-0.4, 0.2]])
    x = straighten(spec, [np.sqrt(0.5), np.sqrt(0.5)])
    assert abs(x[0]) <= 1e-10


@pytest.mark.parametrize("n", [2, 3, 4])
def test_equivariance(n):
    model = HyperbolicSpace(n)
    rng = np.random.default_rng(9)
    for _ in range(3):
        verts = np.array([model.random_point(rng) for _ in range(n + 1)])
        g = BallIsometry.random(n, rng)
        a = random_spherical_point(rng, n + 1)
        x = straighten(SimplexSpec(model, verts), a)
        gx = straighten(SimplexSpec(model, g(verts)), a)
        assert model.distance(g(x[None])[0], gx) <= 1e-6


@pytest.mark.parametrize("n", [2, 3, 4])
def test_forms_on_hyperbolic_space(n):
    model = HyperbolicSpace(n)
    rng = np.random.default_rng(10)
    spec = SimplexSpec(model, [model.random_point(rng) for _ in range(n + 1)])
    for _ in range(3):
        f = forms(spec, random_spherical_point(rng, n + 1))
        assert np.abs(f.K - (np.eye(n) - f.H)).max() <= 1e-8
        assert np.trace(f.H) == pytest.approx(1.0, abs=1e-10)
        mu = np.linalg.eigvalsh(f.H)
        assert mu.min() >= -1e-12 and mu.max() <= 1 + 1e-12
        assert np.allclose(f.H, f.H.T) and np.allclose(f.K, f.K.T)
        assert np.linalg.eigvalsh(f.K).min() > 0


def test_forms_on_product():
    model = ProductSpace(2, 2)
    rng = np.random.default_rng(11)
    spec = SimplexSpec(model, [model.random_point(rng) for _ in range(5)])
    f = forms(spec, random_spherical_point(rng, 5))
    assert np.trace(f.H) == pytest.approx(1.0, abs=1e-10)
    assert np.linalg.eigvalsh(f.K).min() > 0
    assert np.linalg.eigvalsh(f.H).min() >= -1e-12


def test_d_straighten_edge_matches_fd():
    model = HyperbolicSpace(2)
    spec = SimplexSpec(model, [[0.3, 0.1], [-0.2, 0.4]])
    a = np.array([np.sqrt(0.5), np.sqrt(0.5)])
    u = tangent_basis(a)[:, 0]
    exact = d_straighten(spec, a) @ u
    fd = d_straighten_fd(spec, a, u)
    assert np.linalg.norm(exact - fd) <= 1e-3 * np.linalg.norm(exact)


@pytest.mark.parametrize("model", [HyperbolicSpace(3), HyperbolicSpace(4), ProductSpace(2, 2)],
                         ids=lambda m: m.model_id)
def test_d_straighten_top_dimensional_matches_fd(model):
    rng = np.random.default_rng(12)
    n = model.dim
    spec = SimplexSpec(model, [model.random_point(rng) for _ in range(n + 1)])
    a = random_spherical_point(rng, n + 1)
    basis = tangent_basis(a)
    exact = d_straighten(spec, a) @ basis
    fd = np.column_stack([d_straighten_fd(spec, a, u) for u in basis.T])
    assert np.linalg.norm(exact - fd) <= 1e-3 * np.linalg.norm(exact)


@pytest.mark.parametrize("n", [3, 4])
def test_jacobian_chain_random(n):
    model = HyperbolicSpace(n)
    rng = np.random.default_rng(13)
    for _ in range(10):
        spec = SimplexSpec(model, [model.random_point(rng, 1.4) for _ in range(n + 1)])
        r = jacobian_chain_check(spec, random_spherical_point(rng, n + 1))
        assert r["holds"] and r["straightening_bound_holds"]
        assert r["lhs"] <= r["rhs"] + 1e-8
    with pytest.raises(ValueError):
        jacobian_chain_check(SimplexSpec(model, [model.origin] * 2), [1.0, 0.0])


def test_envelope():
    assert envelope_value([0.25] * 4) == pytest.approx(16 / 81)
    assert envelope_value([1.0, 0.0, 0.0]) == 0.0
    for n in (3, 4):
        assert ratio_envelope(n)["max"] == pytest.approx(brute_envelope(n), rel=1e-9)
        assert symmetric_envelope(n) == pytest.approx(brute_envelope(n), rel=1e-9)
    with pytest.raises(ValueError):
        ratio_envelope(2)


def test_ratio_bound_constant_h4():
    r = ratio_bound_constant(HyperbolicSpace(4), samples=20, seed=0)
    assert r["within_envelope"]
    assert r["empirical_sup_ratio"] <= brute_envelope(4) * 1.01
    assert r["mu_bound_holds"] and r["lambda_floor_holds"]
    assert r["C0_used"] == pytest.approx(1.0, abs=1e-9)


def test_ratio_bound_rejects_failing_model():
    with pytest.raises(ModelError):
        ratio_bound_constant(ProductSpace(2, 2), samples=2)
