import math

import numpy as np
import pytest
import sympy as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from pmelab.geometry import (
    INF,
    CurvatureParams,
    GeometryError,
    Grid1D,
    ModelManifold,
    RadialField,
    Weight,
    admissible_K,
    as_extended,
    bochner_gap,
    bochner_gap_exact,
    c_const,
    centered_gradient,
    conformal_bounds,
    epsilon_range_contains,
    flux_divergence,
    radial_ricci,
    tangential_ricci,
    weighted_laplacian,
)

PI = math.pi


# --- independent symbolic oracle: Ricci of dr^2 + f(r)^2 g_{S^{n-1}} from Christoffel symbols


def _symbolic_ricci(f_expr, psi_expr, n, N, r):
    th = sp.symbols("th0:%d" % (n - 1))
    coords = (r, *th)
    g = sp.zeros(n)
    g[0, 0] = 1
    scale = f_expr**2
    for i in range(1, n):
        g[i, i] = scale
        scale = scale * sp.sin(th[i - 1]) ** 2
    ginv = g.inv()
    Gam = [[[sp.simplify(sum(ginv[k, l] * (sp.diff(g[l, i], coords[j]) + sp.diff(g[l, j], coords[i])
                                           - sp.diff(g[i, j], coords[l])) for l in range(n)) / 2)
             for j in range(n)] for i in range(n)] for k in range(n)]

    def ric(i, j):
        expr = 0
        for k in range(n):
            expr += sp.diff(Gam[k][i][j], coords[k]) - sp.diff(Gam[k][i][k], coords[j])
            for l in range(n):
                expr += Gam[k][k][l] * Gam[l][i][j] - Gam[k][j][l] * Gam[l][i][k]
        return expr

    def hess(i, j):
        return sp.diff(psi_expr, coords[i], coords[j]) - sum(Gam[k][i][j] * sp.diff(psi_expr, coords[k])
                                                              for k in range(n))

    dpsi = sp.diff(psi_expr, r)
    tail = 0 if N in (INF, n) else dpsi**2 / (N - n)
    radial = ric(0, 0) + hess(0, 0) - tail
    tang = (ric(1, 1) + hess(1, 1)) / g[1, 1]
    subs = {t: sp.pi / 3 for t in th}
    return sp.lambdify(r, radial.subs(subs)), sp.lambdify(r, sp.simplify(tang.subs(subs)))


CASES = [
    ("euclidean-radial", lambda r: r, Weight("quadratic", {"A": 0.3}), (0, 3)),
    ("hyperbolic-radial", sp.sinh, Weight("quadratic", {"A": 0.1}), (0, 3)),
    ("sphere-polar", sp.sin, Weight("cos", {"A": 0.7}), (0, PI)),
    ("interval-weighted", lambda r: sp.Integer(1), Weight("polynomial", {"coeffs": [0.0, 0.5, -0.2, 0.1]}), (-1, 2)),
]


def _psi_expr(weight, r):
    p = weight.params
    if weight.name == "quadratic":
        return p["A"] * r**2
    if weight.name == "cos":
        return p["A"] * sp.cos(r)
    return sum(c * r**k for k, c in enumerate(p["coeffs"]))


@pytest.mark.parametrize("n", [2, 3])
@pytest.mark.parametrize("kind,f,weight,domain", CASES)
@pytest.mark.parametrize("N", [-4.0, 7.0, INF])
def test_ricci_matches_symbolic_christoffel_computation(n, kind, f, weight, domain, N):
    if kind == "interval-weighted" and n > 2:
        pytest.skip("the interval model has a flat fibre; n = 2 suffices")
    r = sp.symbols("r", positive=True)
    man = ModelManifold(kind, n, weight, domain)
    rad_fn, tan_fn = _symbolic_ricci(f(r), _psi_expr(weight, r), n, N, r)
    lo, hi = domain
    pts = np.linspace(lo, hi, 9)[1:-1]
    np.testing.assert_allclose(radial_ricci(man, N, pts), [float(rad_fn(x)) for x in pts], rtol=1e-10, atol=1e-12)
    if kind != "interval-weighted":
        np.testing.assert_allclose(tangential_ricci(man, N, pts), [float(tan_fn(x)) for x in pts],
                                   rtol=1e-10, atol=1e-12)


def test_extended_dimension_parsing():
    assert as_extended("inf") == INF
    assert as_extended(" Infinity ") == INF
    assert as_extended(3) == 3.0
    with pytest.raises(GeometryError):
        as_extended(float("nan"))


def test_N_in_forbidden_gap_rejected():
    man = ModelManifold("euclidean-radial", 3, domain=(0, 1))
    with pytest.raises(GeometryError):
        radial_ricci(man, 2.0, [0.5])


def test_N_equal_n_requires_constant_weight():
    man = ModelManifold("euclidean-radial", 2, Weight("quadratic", {"A": 1.0}), (0, 1))
    with pytest.raises(GeometryError):
        radial_ricci(man, 2, [0.5])


def test_weight_must_be_flat_at_pole():
    with pytest.raises(GeometryError):
        ModelManifold("euclidean-radial", 2, Weight("polynomial", {"coeffs": [0.0, 1.0]}), (0, 1))


def test_sphere_domain_bounded_by_pi():
    with pytest.raises(GeometryError):
        ModelManifold("sphere-polar", 2, domain=(0, 4))


def test_manifold_round_trip():
    man = ModelManifold("sphere-polar", 3, Weight("cos", {"A": 0.5}), (0, PI))
    assert ModelManifold.from_dict(man.to_dict()) == man


def test_epsilon_range():
    assert epsilon_range_contains(5, 5, 17.0)
    assert epsilon_range_contains(1, 3, 0.0)
    assert not epsilon_range_contains(1, 3, 0.1)
    assert epsilon_range_contains(INF, 3, 1.0)
    assert not epsilon_range_contains(INF, 3, 1.0001)
    bound = math.sqrt((10 - 1) / (10 - 3))
    assert epsilon_range_contains(10, 3, bound * (1 - 1e-12))
    assert not epsilon_range_contains(10, 3, bound)
    assert epsilon_range_contains(-4, 2, 0.9)
    assert not epsilon_range_contains(-4, 2, math.sqrt(5 / 6))


def test_c_constant_table():
    assert c_const(3, 1, 0.0) == 1 / 2
    assert c_const(3, 10, 1.0) == pytest.approx(1 / 9, rel=0, abs=1e-16)
    assert c_const(4, INF, 0.0) == 1 / 3
    assert c_const(2, 2, 0.3) == 1.0
    with pytest.raises(GeometryError):
        c_const(3, INF, 1.0)  # c = 0 on the boundary of the range
    with pytest.raises(GeometryError):
        c_const(3, 10, 5.0)


@given(N=st.floats(3.5, 1e3), frac=st.floats(-0.999, 0.999))
def test_c_positive_inside_range(N, frac):
    eps = frac * math.sqrt((N - 1) / (N - 3))
    assert epsilon_range_contains(N, 3, eps)
    assert c_const(3, N, eps) > 0


def test_flat_laplacian_of_r_squared_is_2n():
    for n in (2, 3, 5):
        man = ModelManifold("euclidean-radial", n, domain=(0, 2))
        grid = Grid1D(man, 200)
        lap = weighted_laplacian(man, grid, grid.r**2)
        np.testing.assert_allclose(lap[:-1], 2 * n, rtol=1e-9)


def test_weighted_laplacian_of_distance_matches_closed_form():
    man = ModelManifold("hyperbolic-radial", 3, Weight("quadratic", {"A": 0.2}), (0, 3))
    errs = []
    for M in (200, 400):
        grid = Grid1D(man, M)
        lap = weighted_laplacian(man, grid, grid.r)
        sel = (grid.r > 0.5) & (grid.r < 2.5)
        errs.append(np.max(np.abs(lap[sel] - man.laplacian_of_distance(grid.r[sel]))))
    assert errs[1] < errs[0] / 3


@settings(max_examples=30, deadline=None)
@given(z=st.lists(st.floats(-10, 10), min_size=21, max_size=21))
def test_flux_divergence_conserves(z):
    man = ModelManifold("sphere-polar", 2, Weight("cos", {"A": 0.4}), (0, PI))
    grid = Grid1D(man, 20)
    assert abs(flux_divergence(grid, np.array(z)).sum()) < 1e-10 * (1 + np.abs(z).max())


@settings(max_examples=30, deadline=None)
@given(u=st.lists(st.floats(-5, 5), min_size=31, max_size=31), z=st.lists(st.floats(-5, 5), min_size=31, max_size=31))
def test_weighted_laplacian_is_symmetric(u, z):
    man = ModelManifold("hyperbolic-radial", 3, Weight("quadratic", {"A": 0.1}), (0, 2))
    grid = Grid1D(man, 30)
    u, z = np.array(u), np.array(z)
    lhs = grid.inner(weighted_laplacian(man, grid, u), z)
    rhs = grid.inner(u, weighted_laplacian(man, grid, z))
    assert lhs == pytest.approx(rhs, abs=1e-9 * (1 + abs(lhs)))


def test_volumes_sum_to_weighted_measure():
    man = ModelManifold("sphere-polar", 3, domain=(0, PI))
    grid = Grid1D(man, 50)
    assert grid.volumes.sum() == pytest.approx(PI / 2, rel=1e-12)  # int sin^2 = pi/2
    assert np.all(grid.volumes > 0)


def test_centered_gradient_second_order():
    man = ModelManifold("euclidean-radial", 2, domain=(0, 1))
    errs = []
    for M in (100, 200):
        grid = Grid1D(man, M)
        g = centered_gradient(grid, np.sin(grid.r))
        errs.append(np.max(np.abs(g[1:-1] - np.cos(grid.r[1:-1]))))
    assert errs[0] / errs[1] == pytest.approx(4, rel=0.05)


def test_admissible_K_flat_and_hyperbolic():
    flat = ModelManifold("euclidean-radial", 3, domain=(0, 5))
    assert admissible_K(flat, 3, 1.0, (0, 5)) == 0.0
    hyp = ModelManifold("hyperbolic-radial", 3, domain=(0, 5))
    assert admissible_K(hyp, 3, 1.0, (0, 5)) == pytest.approx(2.0, rel=1e-12)


def test_admissible_K_weighted_sphere_nonnegative():
    for A in (-1.0, 0.3, 1.0):
        man = ModelManifold("sphere-polar", 2, Weight("cos", {"A": A}), (0, PI))
        assert admissible_K(man, -4, 0.0, (0, PI), Grid1D(man, 200)) == 0.0
        assert admissible_K(man, INF, 0.0, (0, PI), Grid1D(man, 200)) == 0.0


def test_admissible_K_is_sufficient_between_nodes():
    man = ModelManifold("hyperbolic-radial", 2, Weight("quadratic", {"A": 0.1}), (0, 3))
    K = admissible_K(man, -4, 0.0, (0, 3), Grid1D(man, 30))
    r = np.linspace(0, 3, 100_001)
    scale = np.exp(4 * (0.0 - 1) * man.weight.psi(r) / (man.n - 1))
    ric = np.minimum(radial_ricci(man, -4, r), tangential_ricci(man, -4, r))
    assert np.all(ric >= -K * scale - 1e-10)


def test_conformal_bounds():
    man = ModelManifold("hyperbolic-radial", 2, Weight("quadratic", {"A": 0.1}), (0, 3))
    p1, p2 = conformal_bounds(man, 0.0, (0, 3))
    assert p1 == 1.0
    assert p2 == pytest.approx(math.exp(2 * 0.1 * 9), rel=1e-14)
    assert conformal_bounds(man, 1.0, (0, 3)) == (1.0, 1.0)


def test_curvature_params_validation():
    with pytest.raises(GeometryError):
        CurvatureParams(N=3, eps=1, K=-1)
    with pytest.raises(GeometryError):
        CurvatureParams(N=3, eps=1, p1=2, p2=1)
    with pytest.raises(GeometryError):
        CurvatureParams(N=10, eps=3).check(3)


def _sphere_field():
    return RadialField(np.cos, lambda r: -np.sin(r), lambda r: -np.cos(r))


def test_bochner_exact_sphere_closed_form():
    A = 0.8
    man = ModelManifold("sphere-polar", 2, Weight("cos", {"A": A}), (0, PI))
    r = np.linspace(0.1, 3.0, 50)
    expected = 3 * (np.cos(r) + A * np.sin(r) ** 2 / 6) ** 2
    np.testing.assert_allclose(bochner_gap_exact(man, -4, _sphere_field(), r), expected, atol=1e-12)


@pytest.mark.parametrize("N", [-4.0, 3.0, INF])
def test_bochner_discrete_converges_to_exact(N):
    man = ModelManifold("sphere-polar", 2, Weight("cos", {"A": 0.5}), (0, PI))
    errs = []
    for M in (200, 400, 800):
        grid = Grid1D(man, M)
        gap = bochner_gap(man, grid, N, _sphere_field())
        ex = bochner_gap_exact(man, N, _sphere_field(), grid.r)
        ok = np.isfinite(gap) & ~grid.pole_mask
        errs.append(np.max(np.abs(gap[ok] - ex[ok])))
    assert errs[1] <= 0.5 * errs[0] and errs[2] <= 0.5 * errs[1]


def test_bochner_rejects_N_in_unit_interval():
    man = ModelManifold("euclidean-radial", 2, domain=(0, 1))
    with pytest.raises(GeometryError):
        bochner_gap(man, Grid1D(man, 10), 0.5, _sphere_field())
