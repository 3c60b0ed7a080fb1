import json
import math

import numpy as np
import pytest
import sympy as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from pmelab.estimates import (
    INF,
    CutoffProfile,
    EstimateError,
    EstimateParams,
    HypothesisError,
    F_alpha,
    a_const,
    classical_ab_check,
    compact_bound_rhs,
    corollary22_rhs,
    global_bound_rhs,
    kappa_classical,
    lemma31_gap,
    li_yau_local_rhs,
    li_yau_lhs,
    li_yau_rhs,
    local_bound_rhs,
    sup_L,
    theorem22_rhs,
    verify,
)
from pmelab.geometry import Grid1D, ModelManifold, RadialField, Weight, bochner_gap_exact
from pmelab.oracle import BarenblattParams, barenblatt, gaussian_heat, sample_solution
from pmelab.solver import PMEProblem, SolutionField, TimeStepPolicy, solve

FLAT = ModelManifold("euclidean-radial", 2, domain=(0, math.pi))


def test_a_const_table():
    assert a_const(2, INF, 2) == 1.0
    assert a_const(2, "inf", 5) == 1.0
    assert a_const(2, 2, 2) == 0.5
    assert a_const(2, 4, 2) == pytest.approx(2 / 3, rel=1e-15)
    assert a_const(2, -4, 2) == 2.0
    assert a_const(3, -3, 2) == pytest.approx(1.5)


@pytest.mark.parametrize("N", [-2.0, -1.0, 0.0, 0.5, 1.0, 1.9])
def test_a_const_rejects_gap(N):
    with pytest.raises(EstimateError):
        a_const(2, N, 2)


@given(m=st.floats(1.01, 5), N=st.floats(2, 1e4))
def test_a_const_in_unit_interval_for_large_N(m, N):
    assert 0 < a_const(m, N, 2) < 1


def test_cutoff_constants_against_independent_extrema():
    x = sp.symbols("x")
    S = 10 * x**3 - 15 * x**4 + 6 * x**5
    eta, d1, d2 = 1 - S, -sp.diff(S, x), -sp.diff(S, x, 2)
    # sup of -eta'' is at a root of eta''' in (0, 1/2)
    crit = [c for c in sp.solve(sp.diff(d2, x), x) if 0 < c < 1]
    curv = max(float(-d2.subs(x, c)) for c in crit)
    ratio = sp.cancel(d1**2 / eta)  # 900 x^4 (1 - x) / (1 + 3x + 6x^2)
    roots = [c for c in sp.Poly(sp.numer(sp.together(sp.diff(ratio, x))), x).nroots(n=20, maxsteps=200) if c.is_real and 0 < c < 1]
    C1 = max(float(ratio.subs(x, c)) for c in roots)
    cut = CutoffProfile(1.0, 1.0)
    assert cut.C1 == pytest.approx(C1, rel=1e-9)
    assert cut.C0 == pytest.approx(max(curv, math.sqrt(C1)), rel=1e-9)
    assert cut.C3 == pytest.approx(2 * cut.C1 + cut.C2)
    small = CutoffProfile(0.5, 0.25)
    assert small.C2 == pytest.approx(4 * small.C0)


def test_cutoff_profile_shape():
    r = np.array([0.0, 1.0, 1.5, 2.0, 3.0])
    np.testing.assert_allclose(CutoffProfile.eta(r), [1, 1, 0.5, 0, 0])
    assert np.all(CutoffProfile.deta(np.linspace(0, 3, 31)) <= 0)


def _params(**kw):
    base = dict(alpha=2.0, m=2.0, N=2, n=2, L=1.5, R=3.0, K=0.7, p1=1.0, p2=1.0, c=1.0)
    base.update(kw)
    return EstimateParams(**base)


@pytest.mark.parametrize("N", [2.0, 10.0])
@pytest.mark.parametrize("K", [0.0, 0.7])
@pytest.mark.parametrize("legacy", [False, True])
def test_local_bound_recovers_constant_curvature_form(N, K, legacy):
    c = 1 / (N - 1)
    p = _params(N=N, K=K, c=c, legacy_coth=legacy)
    cut = CutoffProfile(1.0, c)
    for t in (0.1, 1.0, 7.0):
        mine = local_bound_rhs(p, cut, t)
        ref = theorem22_rhs(2.0, 2.0, N, 2, K, 1.5, 3.0, t, cut, legacy)
        assert abs(mine - ref) <= 1e-12 * ref


def test_local_bound_tends_to_global_at_rate_one_over_R():
    cut = CutoffProfile(1.0, 1.0)
    g = global_bound_rhs(2.0, 0.5, 0.7, 1.0, 1.5, 1.0)
    gaps = [abs(local_bound_rhs(_params(R=R), cut, 1.0) - g) / g for R in (1e4, 1e5, 1e6)]
    assert gaps[0] / gaps[1] == pytest.approx(10, rel=1e-3)
    assert gaps[1] / gaps[2] == pytest.approx(10, rel=1e-3)
    assert local_bound_rhs(_params(R=INF), cut, 1.0) == g


def test_local_bound_continuous_in_K_at_zero():
    cut = CutoffProfile(1.0, 1.0)
    at0 = local_bound_rhs(_params(K=0.0), cut, 1.0)
    near = local_bound_rhs(_params(K=1e-12), cut, 1.0)
    assert near == pytest.approx(at0, rel=1e-9)


def test_local_bound_monotone_in_t_and_R():
    cut = CutoffProfile(1.0, 1.0)
    p = _params()
    vals = [local_bound_rhs(p, cut, t) for t in (0.5, 1, 2, 4)]
    assert all(a > b for a, b in zip(vals, vals[1:]))
    assert local_bound_rhs(_params(R=2.0), cut, 1.0) > local_bound_rhs(_params(R=8.0), cut, 1.0)


def test_local_bound_needs_alpha_above_one():
    with pytest.raises(EstimateError):
        local_bound_rhs(_params(alpha=1.0), CutoffProfile(), 1.0)


def test_global_bound_forms():
    assert global_bound_rhs(1.0, 0.5, 0.0, 1.0, 0.0, 2.0) == 0.25
    assert global_bound_rhs(2.0, 1.0, 1.0, 0.5, 2.0, 1.0) == pytest.approx(4 * (1 + 4 * 2 / 2))
    assert global_bound_rhs(2.0, 1.0, 1.0, 0.5, 2.0, 1.0, printed_form=True) == pytest.approx(4 * 25)
    with pytest.raises(EstimateError):
        global_bound_rhs(1.0, 1.0, 1.0, 1.0, 1.0, 1.0)
    assert corollary22_rhs(2.0, 0.5, 1.0, 1.0, 1.0) == global_bound_rhs(2.0, 0.5, 1.0, 1.0, 1.0, 1.0)


def test_compact_and_li_yau_forms():
    assert compact_bound_rhs(2.0, 0.5) == 4.0
    assert li_yau_rhs(1.0, 3, 0.0, 2.0) == 0.75
    assert li_yau_rhs(2.0, 2, 1.0, 1.0) == pytest.approx(4 + 4)
    assert li_yau_local_rhs(2.0, 2, 0.0, 1.0, 1e8, 1.0) == pytest.approx(li_yau_rhs(2.0, 2, 0.0, 1.0))
    with pytest.raises(EstimateError):
        compact_bound_rhs(1.0, 0.0)


def test_kappa_classical():
    assert kappa_classical(2, 2.0) == 0.5


def _sampled_barenblatt(M, t_center=1.0, tau=None, n=2):
    man = ModelManifold("euclidean-radial", n, domain=(0, math.pi))
    grid = Grid1D(man, M)
    tau = grid.h if tau is None else tau
    bp = BarenblattParams(n, 2.0, 1.0, 0.5)
    times = t_center + tau * np.arange(-2, 3)
    return bp, sample_solution(grid, 2.0, lambda r, t: barenblatt(bp, r, t), times)


def test_F1_on_sampled_barenblatt_is_a_over_t():
    bp, sol = _sampled_barenblatt(400)
    F = F_alpha(sol, 1.0, 2)
    assert np.nanmax(np.abs(F[:-1] * sol.times[2] - 0.5)) < 1e-4


def test_F_alpha_refuses_vacuum_nodes():
    man = ModelManifold("euclidean-radial", 2, domain=(0, 6))
    grid = Grid1D(man, 100)
    bp = BarenblattParams(2, 2.0, 1.0, 0.5)
    sol = sample_solution(grid, 2.0, lambda r, t: barenblatt(bp, r, t), [1.0, 1.01, 1.02])
    with pytest.raises(EstimateError):
        F_alpha(sol, 1.0, 1, nodes=np.arange(len(grid)))
    assert np.isnan(F_alpha(sol, 1.0, 1)[-1])


@pytest.mark.parametrize("N", [2, -4])
@pytest.mark.parametrize("alpha", [1.0, 1.7])
def test_lemma_gap_matches_bochner_identity_under_refinement(N, alpha):
    errs = []
    for M in (200, 400, 800):
        bp, sol = _sampled_barenblatt(M)
        gap = lemma31_gap(sol, alpha, N, 2)
        lam = -2 * 2.0 * bp.k * 1.0 ** (-bp.alpha - 2 * bp.beta)
        field = RadialField(lambda r: 0 * r, lambda r: lam * r, lambda r: lam + 0 * r)
        exact = 2 * (2.0 - 1) * bochner_gap_exact(sol.manifold, N, field, sol.grid.r)
        errs.append(np.nanmax(np.abs(gap - exact)))
        assert np.nanmin(gap) >= -errs[-1]
    assert errs[1] <= 0.5 * errs[0] and errs[2] <= 0.5 * errs[1]


def test_lemma_gap_needs_five_snapshots():
    _, sol = _sampled_barenblatt(100)
    with pytest.raises(EstimateError):
        lemma31_gap(sol, 1.0, 2, 1)


def test_sup_L():
    bp, sol = _sampled_barenblatt(100)
    assert sup_L(sol) == pytest.approx(float(sol.v.max()))
    assert sup_L(sol, (1.0, 2.0)) < sup_L(sol)
    with pytest.raises(EstimateError):
        sup_L(sol, (5.0, 6.0))


@pytest.fixture(scope="module")
def sphere_solution():
    man = ModelManifold("sphere-polar", 2, Weight("cos", {"A": 0.8}), (0, math.pi))
    prob = PMEProblem(man, 2.0, lambda r: 1 + 0.5 * np.cos(r), 0.6, 120, policy=TimeStepPolicy(dt=2e-3))
    return solve(prob)


@pytest.mark.parametrize("N", [-4, "inf"])
def test_compact_bound_holds_on_weighted_sphere(sphere_solution, N):
    p = EstimateParams(alpha=1.0, m=2.0, N=N, n=2)
    rep = verify(sphere_solution, "compact-Thm4.1", p, t_min=0.1, tolerance=0.0)
    assert rep.passed
    assert rep.hypotheses["K_required"] == 0.0
    assert rep.evaluated > 0


def test_compact_bound_refused_on_hyperbolic():
    man = ModelManifold("hyperbolic-radial", 2, domain=(0, 2))
    sol = solve(PMEProblem(man, 2.0, lambda r: 1 + 0.2 * np.cos(r), 0.05, 40, policy=TimeStepPolicy(dt=1e-2)))
    with pytest.raises(HypothesisError):
        verify(sol, "compact-Thm4.1", EstimateParams(alpha=1.0, m=2.0, N=2, n=2))


def test_local_bound_on_weighted_sphere_with_auto_constants(sphere_solution):
    from pmelab.geometry import admissible_K, c_const, conformal_bounds

    man, grid = sphere_solution.manifold, sphere_solution.grid
    N, eps, R = -4.0, 0.5, 0.8
    region = (0.0, 2 * R)
    K = admissible_K(man, N, eps, region, grid)
    p1, p2 = conformal_bounds(man, eps, region, grid)
    p = EstimateParams(alpha=2.0, m=2.0, N=N, n=2, L=sup_L(sphere_solution, region), R=R, K=K, p1=p1, p2=p2,
                       c=c_const(2, N, eps))
    rep = verify(sphere_solution, "local-Thm3.1", p, eps=eps, t_min=0.1)
    assert rep.passed and rep.min_margin > 0
    over = EstimateParams(alpha=2.0, m=2.0, N=N, n=2, L=p.L, R=R, K=K, p1=p1 * 1.1, p2=max(p2, p1 * 1.1), c=p.c)
    with pytest.raises(HypothesisError):
        verify(sphere_solution, "local-Thm3.1", over, eps=eps, t_min=0.1)


def test_report_serialisation(tmp_path, sphere_solution):
    p = EstimateParams(alpha=1.0, m=2.0, N=-4, n=2)
    rep = verify(sphere_solution, "compact-Thm4.1", p, t_min=0.1)
    doc = rep.to_dict()
    json.dumps(doc)
    for key in ("kind", "status", "params", "constants", "delta", "grid", "min_margin", "violations"):
        assert key in doc
    rep.write_csv(tmp_path / "r.csv")
    rows = (tmp_path / "r.csv").read_text().splitlines()
    assert rows[0] == "t,r,lhs,rhs,margin" and len(rows) == rep.evaluated + 1


def test_halved_rhs_produces_located_violations(sphere_solution):
    p = EstimateParams(alpha=1.0, m=2.0, N=-4, n=2)
    rep = verify(sphere_solution, "compact-Thm4.1", p, t_min=0.1)
    rep.rhs = rep.rhs * 0.01
    assert not rep.passed
    v = rep.violations()
    assert v and {"t", "r", "lhs", "rhs", "margin"} <= set(v[0])
    assert v[0]["margin"] == pytest.approx(rep.min_margin)


def test_classical_check_on_sampled_barenblatt():
    man = ModelManifold("euclidean-radial", 2, domain=(0, 6))
    grid = Grid1D(man, 400)
    bp = BarenblattParams(2, 2.0, 1.0, 0.5)
    sol = sample_solution(grid, 2.0, lambda r, t: barenblatt(bp, r, t), [1.0, 1.001, 1.002])
    rep = classical_ab_check(sol, band=3, front=bp.support_radius)
    assert rep.extras["max_abs_equality_gap"] < 1e-9


def test_li_yau_saturation_on_sampled_heat_kernel():
    man = ModelManifold("euclidean-radial", 2, domain=(0, 6))
    grid = Grid1D(man, 400)
    sol = sample_solution(grid, 1.0, lambda r, t: gaussian_heat(2, r, t), [0.999, 1.0, 1.001])
    lhs = li_yau_lhs(sol, 1.0, 1)
    assert np.max(np.abs(lhs[:-1] - 1.0)) < 1e-2
    rep = verify(sol, "LiYau-2.4/2.5", EstimateParams(alpha=1.0, m=1.0, N=2, n=2), tolerance=0.02)
    assert rep.passed


def test_unknown_kind():
    _, sol = _sampled_barenblatt(50)
    with pytest.raises(EstimateError):
        verify(sol, "nope", _params())


@settings(max_examples=20, deadline=None)
@given(alpha=st.floats(1.01, 5), L=st.floats(0, 10), K=st.floats(0, 5), R=st.floats(0.1, 100), t=st.floats(0.01, 10))
def test_local_bound_dominates_global(alpha, L, K, R, t):
    cut = CutoffProfile(1.0, 0.5)
    p = EstimateParams(alpha=alpha, m=2.0, N=3, n=2, L=L, R=R, K=K, c=0.5)
    assert local_bound_rhs(p, cut, t) >= global_bound_rhs(alpha, p.a, K, 1.0, L, t) * (1 - 1e-12)
