"""Comparison function s_kappa and the weighted Laplacian comparison for the
distance from a pole."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import (
    CurvatureParams,
    Grid1D,
    ModelManifold,
    admissible_K,
    c_const,
    conformal_bounds,
    format_extended,
)


class ComparisonError(ValueError):
    pass


class HypothesisViolation(ComparisonError):
    pass


def _flat(kappa: float, t: np.ndarray) -> bool:
    # below this the curvature correction kappa t^2/6 is invisible in double precision
    return abs(kappa) * float(np.max(t, initial=0.0)) ** 2 < 1e-20


def s_kappa(kappa: float, t):
    """sin(sqrt(k) t)/sqrt(k), t, or sinh(sqrt(-k) t)/sqrt(-k)."""
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ComparisonError("s_kappa needs t >= 0")
    if _flat(kappa, t):
        kappa = 0.0
    if kappa > 0:
        q = math.sqrt(kappa)
        return np.sin(q * t) / q
    if kappa < 0:
        q = math.sqrt(-kappa)
        return np.sinh(q * t) / q
    return t.copy() if t.ndim else t * 1.0


def s_kappa_prime(kappa: float, t):
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ComparisonError("s_kappa needs t >= 0")
    if _flat(kappa, t):
        kappa = 0.0
    if kappa > 0:
        return np.cos(math.sqrt(kappa) * t)
    if kappa < 0:
        return np.cosh(math.sqrt(-kappa) * t)
    return np.ones_like(t)


def rho_branch(kappa: float, r, p1: float, p2: float):
    """p1 where s'_kappa(r/p2) >= 0, else p2."""
    return np.where(s_kappa_prime(kappa, np.asarray(r, dtype=float) / p2) >= 0, p1, p2)


def comparison_rhs(r, K: float, c: float, p1: float = 1.0, p2: float = 1.0):
    """(1/(c rho)) s'_k(r/p2)/s_k(r/p2) with k = -cK, for a lower bound -K."""
    r = np.asarray(r, dtype=float)
    if np.any(r <= 0):
        raise ComparisonError("comparison is undefined at the pole r = 0")
    if K < 0 or not c > 0 or not 0 < p1 <= p2:
        raise ComparisonError("need K >= 0, c > 0 and 0 < p1 <= p2")
    kappa = -c * K
    x = r / p2
    rho = rho_branch(kappa, r, p1, p2)
    return s_kappa_prime(kappa, x) / s_kappa(kappa, x) / (c * rho)


def comparison_rhs_closed(r, K: float, c: float, p1: float = 1.0, p2: float = 1.0):
    """Closed form of :func:`comparison_rhs`: sqrt(K)/(p1 sqrt c) coth(sqrt(cK) r/p2),
    or p2/(c p1 r) when K = 0."""
    r = np.asarray(r, dtype=float)
    if np.any(r <= 0):
        raise ComparisonError("comparison is undefined at the pole r = 0")
    if K == 0:
        return p2 / (c * p1 * r)
    return math.sqrt(K) / (p1 * math.sqrt(c)) / np.tanh(math.sqrt(c) * math.sqrt(K) * r / p2)


@dataclass(frozen=True)
class ComparisonReport:
    r: np.ndarray
    lhs: np.ndarray
    rhs: np.ndarray
    rho: np.ndarray
    params: dict = field(default_factory=dict)
    hypotheses: dict = field(default_factory=dict)

    def __post_init__(self):
        if not (len(self.r) == len(self.lhs) == len(self.rhs) == len(self.rho)):
            raise ComparisonError("report arrays must share length")

    @property
    def margin(self) -> np.ndarray:
        return self.rhs - self.lhs

    @property
    def min_margin(self) -> float:
        return float(self.margin.min())

    def passed(self, tolerance: float = 1e-10) -> bool:
        return self.min_margin >= -tolerance

    def to_dict(self, tolerance: float = 1e-10) -> dict:
        k = int(np.argmin(self.margin))
        return {
            "kind": "comparison",
            "status": "PASS" if self.passed(tolerance) else "FAIL",
            "params": self.params,
            "hypotheses": self.hypotheses,
            "tolerance": tolerance,
            "nodes": int(len(self.r)),
            "min_margin": self.min_margin,
            "max_margin": float(self.margin.max()),
            "argmin": {"r": float(self.r[k])},
            "rho_values": sorted({float(x) for x in self.rho}),
        }

    def rows(self):
        for r, lhs, rhs, rho, m in zip(self.r, self.lhs, self.rhs, self.rho, self.margin):
            yield float(r), float(lhs), float(rhs), float(rho), float(m)


def auto_params(manifold: ModelManifold, N, eps: float, region, grid: Grid1D | None = None) -> CurvatureParams:
    """Tight K (radial direction) and (p1, p2) on the region."""
    K = admissible_K(manifold, N, eps, region, grid, directions="radial")
    p1, p2 = conformal_bounds(manifold, eps, region, grid)
    return CurvatureParams(N=N, eps=eps, K=K, p1=p1, p2=p2)


def verify_comparison(
    manifold: ModelManifold,
    params: CurvatureParams,
    grid: Grid1D,
    region: tuple[float, float] | None = None,
) -> ComparisonReport:
    """Compare Delta_psi r with the comparison bound at the interior nodes of
    ``region`` (default: the whole domain), base point at the pole r = 0."""
    if 0.0 not in manifold.poles:
        raise ComparisonError("the base point must be a pole at r = 0")
    params.check(manifold.n)
    lo, hi = region if region is not None else manifold.domain
    # the comparison only uses Ric along radial geodesics from the base point
    K_need = admissible_K(manifold, params.N, params.eps, (lo, hi), grid, directions="radial")
    p1, p2 = conformal_bounds(manifold, params.eps, (lo, hi), grid)
    slack = 1e-12
    hyp = {"region": [lo, hi], "K_required": K_need, "p1_tight": p1, "p2_tight": p2}
    if params.K < K_need * (1 - slack) - slack:
        raise HypothesisViolation(f"K={params.K} is below the required {K_need}")
    if params.p1 > p1 * (1 + slack) or params.p2 < p2 * (1 - slack):
        raise HypothesisViolation(f"(p1, p2)=({params.p1}, {params.p2}) does not bracket ({p1}, {p2})")
    hyp["satisfied"] = True
    c = c_const(manifold.n, params.N, params.eps)
    mask = grid.region_mask(lo, hi) & (grid.r > 0) & ~grid.pole_mask
    r = grid.r[mask]
    lhs = np.asarray(manifold.laplacian_of_distance(r), dtype=float)
    rhs = comparison_rhs(r, params.K, c, params.p1, params.p2)
    rho = rho_branch(-c * params.K, r, params.p1, params.p2)
    doc = params.to_dict()
    doc.update(c=c, N=format_extended(params.N), manifold=manifold.to_dict())
    return ComparisonReport(r=r, lhs=lhs, rhs=rhs, rho=rho, params=doc, hypotheses=hyp)
