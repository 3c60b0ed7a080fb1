"""Aronson-Benilan type gradient bounds with explicit constants.

Every bound kind is instantiated as a concrete right-hand side; the left-hand
side ``F_alpha = |grad v|^2/v - alpha d_t v / v`` is evaluated on discrete
solutions and the margin RHS - LHS is reported.

Bound kinds (report identifiers):

=====================  =====================================================
``local-Thm3.1``       local bound under Ric >= -K exp(4(eps-1)psi/(n-1))
``global-Cor3.2``      its R -> infinity limit
``compact-Thm4.1``     a/t under non-negative curvature
``constant-Thm2.2``    local bound under constant lower curvature, N >= n
``constant-Cor2.2``    its R -> infinity limit
``LiYau-2.4/2.5``      heat-equation baseline (u-form left-hand side)
``classical-AB-2.6``   Delta v >= -kappa/t on flat unweighted space
=====================  =====================================================
"""

from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.optimize import minimize_scalar

from .geometry import (
    INF,
    CurvatureParams,
    GeometryError,
    admissible_K,
    as_extended,
    c_const,
    centered_gradient,
    conformal_bounds,
    epsilon_range_contains,
    format_extended,
    radial_ricci,
    weighted_laplacian,
)
from .solver import SolutionField, SolverError, evaluation_mask

BOUND_KINDS = (
    "local-Thm3.1",
    "global-Cor3.2",
    "compact-Thm4.1",
    "constant-Thm2.2",
    "constant-Cor2.2",
    "LiYau-2.4/2.5",
    "classical-AB-2.6",
)


class EstimateError(ValueError):
    pass


class HypothesisError(EstimateError):
    """The manifold does not satisfy the curvature hypotheses claimed by the
    parameters; no verification is attempted."""


# ---------------------------------------------------------------------------
# constants


def a_const(m: float, N, n: int) -> float:
    """a(m, N): 1 for N = inf, N(m-1)/(N(m-1)+2) on (-inf, -2/(m-1)) and [n, inf)."""
    if not m > 1:
        raise EstimateError(f"m must exceed 1, got {m}")
    N = as_extended(N)
    if N == INF:
        return 1.0
    if N < -2.0 / (m - 1.0) or N >= n:
        return N * (m - 1.0) / (N * (m - 1.0) + 2.0)
    raise EstimateError(f"N={N} lies outside (-inf, {-2.0 / (m - 1.0)}) U [{n}, inf]")


def kappa_classical(n: int, m: float) -> float:
    return n / (n * (m - 1.0) + 2.0)


class CutoffProfile:
    """Cut-off eta with eta = 1 on [0,1], eta = 0 on [2, inf) and a quintic
    smoothstep in between, plus the constants built from it.

    C0 is the smallest constant with -C0 eta^{1/2} <= eta' and eta'' >= -C0,
    C1 = sup eta'^2/eta bounds |grad phi|^2/phi * R^2, C2 = C0 max(1, 1/(p1 sqrt c))
    and C3 = 2 C1 + C2.  The suprema are certified on a dense grid and then
    polished with a bounded scalar search.
    """

    def __init__(self, p1: float = 1.0, c: float = 1.0, samples: int = 200_001):
        if p1 <= 0 or c <= 0:
            raise EstimateError("cut-off constants need p1 > 0 and c > 0")
        self.p1, self.c = float(p1), float(c)
        s = np.linspace(1.0, 2.0, samples)[1:-1]
        slope = self._sup(lambda x: -self.deta(x) / np.sqrt(self.eta(x)), s)
        curv = self._sup(lambda x: -self.d2eta(x), s)
        self.C0 = max(slope, curv)
        self.C1 = slope**2
        self.C2 = self.C0 * max(1.0, 1.0 / (self.p1 * math.sqrt(self.c)))
        self.C3 = 2.0 * self.C1 + self.C2

    @staticmethod
    def _sup(fun, s):
        vals = fun(s)
        k = int(np.argmax(vals))
        lo, hi = s[max(k - 1, 0)], s[min(k + 1, len(s) - 1)]
        res = minimize_scalar(lambda x: -float(fun(np.array([x]))[0]), bounds=(lo, hi),
                              method="bounded", options={"xatol": 1e-14})
        return max(float(vals[k]), -float(res.fun))

    @staticmethod
    def eta(r):
        r = np.asarray(r, dtype=float)
        x = np.clip(r - 1.0, 0.0, 1.0)
        return 1.0 - x**3 * (10.0 - 15.0 * x + 6.0 * x**2)

    @staticmethod
    def deta(r):
        r = np.asarray(r, dtype=float)
        x = np.clip(r - 1.0, 0.0, 1.0)
        return -30.0 * x**2 * (1.0 - x) ** 2

    @staticmethod
    def d2eta(r):
        r = np.asarray(r, dtype=float)
        x = np.clip(r - 1.0, 0.0, 1.0)
        return -60.0 * x * (1.0 - x) * (1.0 - 2.0 * x)

    def to_dict(self):
        return {"C0": self.C0, "C1": self.C1, "C2": self.C2, "C3": self.C3, "p1": self.p1, "c": self.c,
                "eta": "1 - S(r-1), S(x) = 10x^3 - 15x^4 + 6x^5 on [1,2]"}


@dataclass(frozen=True)
class EstimateParams:
    alpha: float
    m: float
    N: float
    n: int
    L: float = 0.0
    R: float = INF
    K: float = 0.0
    p1: float = 1.0
    p2: float = 1.0
    c: float = 1.0
    center: float = 0.0
    legacy_coth: bool = False

    def __post_init__(self):
        object.__setattr__(self, "N", as_extended(self.N))
        if self.alpha < 1:
            raise EstimateError("alpha must be >= 1")
        if self.L < 0 or self.K < 0:
            raise EstimateError("L and K must be non-negative")
        if not self.R > 0:
            raise EstimateError("R must be positive")
        if not 0 < self.p1 <= self.p2 or not self.c > 0:
            raise EstimateError("need 0 < p1 <= p2 and c > 0")

    @property
    def a(self) -> float:
        return a_const(self.m, self.N, self.n)

    @classmethod
    def from_curvature(cls, alpha, m, n, curv: CurvatureParams, **kw) -> "EstimateParams":
        return cls(alpha=alpha, m=m, N=curv.N, n=n, K=curv.K, p1=curv.p1, p2=curv.p2,
                   c=c_const(n, curv.N, curv.eps), **kw)

    def to_dict(self):
        d = asdict(self)
        d["N"] = format_extended(self.N)
        d["R"] = "inf" if self.R == INF else self.R
        try:
            d["a"] = self.a
        except EstimateError:
            d["a"] = None  # e.g. the heat-equation baseline, m = 1
        return d


# ---------------------------------------------------------------------------
# right-hand sides


def _coth_term(K: float, c: float, p2: float, R: float, legacy: bool = False) -> float:
    """sqrt(K) R coth(sqrt(cK) R / p2), with its exact K -> 0 limit p2/sqrt(c)."""
    if K == 0:
        return 1.0 if legacy else p2 / math.sqrt(c)
    x = math.sqrt(K) * R if legacy else math.sqrt(c * K) * R / p2
    return math.sqrt(K) * R / math.tanh(x)


def local_bound_rhs(params: EstimateParams, cutoff: CutoffProfile, t: float) -> float:
    p = params
    if not p.alpha > 1:
        raise EstimateError("the local bound needs alpha > 1")
    if t <= 0:
        raise EstimateError("t must be positive")
    a, al, m, L, R = p.a, p.alpha, p.m, p.L, p.R
    if R == INF:
        return global_bound_rhs(al, a, p.K, p.p1, L, t)
    first = a * al**2 * m * math.sqrt(L) / (math.sqrt(al - 1.0) * math.sqrt(m - 1.0)) * math.sqrt(cutoff.C1) / R
    bracket = (
        1.0 / t
        + p.K / p.p1**2 * L / (2.0 * (al - 1.0))
        + cutoff.C3 * L / R**2 * (1.0 + _coth_term(p.K, p.c, p.p2, R, p.legacy_coth))
    )
    return (first + math.sqrt(a) * al * math.sqrt(bracket)) ** 2


def global_bound_rhs(alpha, a, K, p1, L, t, printed_form: bool = False) -> float:
    """a alpha^2 (1/t + K L /(p1^2 2(alpha-1))).

    ``printed_form`` squares the bracket, as in one printed statement of the
    result; the un-squared form is the R -> infinity limit of the local bound.
    """
    if t <= 0:
        raise EstimateError("t must be positive")
    if alpha == 1:
        if K != 0:
            raise EstimateError("alpha = 1 is only allowed for K = 0")
        inner = 1.0 / t
    elif alpha > 1:
        inner = 1.0 / t + K / p1**2 * L / (2.0 * (alpha - 1.0))
    else:
        raise EstimateError("alpha must be >= 1")
    return a * alpha**2 * (inner**2 if printed_form else inner)


def compact_bound_rhs(a: float, t: float) -> float:
    if t <= 0:
        raise EstimateError("t must be positive")
    return a / t


def theorem22_rhs(alpha, m, N, n, K, L, R, t, cutoff: CutoffProfile, legacy_coth: bool = False) -> float:
    """Local bound under Ric_psi^N >= -K with N >= n (constant curvature form).

    Written out independently of :func:`local_bound_rhs`; ``cutoff`` should be
    built with p1 = 1 and c = 1/(N-1).
    """
    N = as_extended(N)
    if N < n or N == INF:
        raise EstimateError("the constant-curvature local bound needs n <= N < inf")
    if not alpha > 1 or t <= 0 or not R > 0:
        raise EstimateError("need alpha > 1, t > 0, R > 0")
    a = N * (m - 1) / (N * (m - 1) + 2)
    if K == 0:
        kr = 1.0 if legacy_coth else math.sqrt(N - 1)
    else:
        arg = math.sqrt(K) * R if legacy_coth else math.sqrt(K / (N - 1)) * R
        kr = math.sqrt(K) * R * math.cosh(arg) / math.sinh(arg)
    C_first, C_bracket = math.sqrt(cutoff.C1), cutoff.C3
    A = a * alpha**2 * m * L**0.5 / ((alpha - 1) ** 0.5 * (m - 1) ** 0.5) * C_first / R
    B = a**0.5 * alpha * (1 / t + L * K / (2 * (alpha - 1)) + C_bracket * L / R**2 * (1 + kr)) ** 0.5
    return (A + B) ** 2


def corollary22_rhs(alpha, a, K, L, t) -> float:
    return global_bound_rhs(alpha, a, K, 1.0, L, t)


def li_yau_rhs(alpha: float, n: int, K: float, t: float) -> float:
    if t <= 0:
        raise EstimateError("t must be positive")
    if alpha == 1:
        if K != 0:
            raise EstimateError("alpha = 1 is only allowed for K = 0")
        return n / (2.0 * t)
    if not alpha > 1:
        raise EstimateError("alpha must be >= 1")
    return n * alpha**2 * K / (2.0 * (alpha - 1.0)) + n * alpha**2 / (2.0 * t)


def li_yau_local_rhs(alpha: float, n: int, K: float, t: float, R: float, C: float) -> float:
    if not R > 0:
        raise EstimateError("R must be positive")
    return C * alpha**2 / R**2 * (alpha**2 / (alpha - 1.0) + math.sqrt(K) * R) + li_yau_rhs(alpha, n, K, t)


# ---------------------------------------------------------------------------
# left-hand sides


def default_delta(solution: SolutionField) -> float:
    return 1e-6 * float(solution.u[0].max())


def F_alpha(solution: SolutionField, alpha: float, k: int, nodes=None, delta: float | None = None) -> np.ndarray:
    """|grad v|^2/v - alpha d_t v/v at snapshot k (NaN where v = 0).

    ``nodes`` (index array or boolean mask) marks the nodes the caller will
    use; asking for a node below the vacuum threshold is an error.
    """
    delta = default_delta(solution) if delta is None else delta
    if nodes is not None:
        sel = np.zeros(len(solution.grid), dtype=bool)
        sel[nodes] = True
        if np.any(solution.u[k][sel] < delta):
            raise EstimateError("F_alpha requested at a node below the vacuum threshold")
    v = solution.v
    vt = solution.time_derivative(v, k)
    grad = centered_gradient(solution.grid, v[k])
    with np.errstate(divide="ignore", invalid="ignore"):
        out = (grad**2 - alpha * vt) / v[k]
    out[v[k] <= 0] = np.nan
    return out


def li_yau_lhs(solution: SolutionField, alpha: float, k: int) -> np.ndarray:
    """|grad u|^2/u^2 - alpha d_t u/u for heat-equation snapshots."""
    u = solution.u
    ut = solution.time_derivative(u, k)
    grad = centered_gradient(solution.grid, u[k])
    with np.errstate(divide="ignore", invalid="ignore"):
        out = grad**2 / u[k] ** 2 - alpha * ut / u[k]
    out[u[k] <= 0] = np.nan
    return out


def sup_L(solution: SolutionField, region=None, time_range=None) -> float:
    """(m-1) times the max of v over the discrete cylinder region x time_range."""
    grid = solution.grid
    rmask = np.ones(len(grid), dtype=bool) if region is None else grid.region_mask(*region)
    t = solution.times
    tmask = np.ones(len(t), dtype=bool) if time_range is None else (t >= time_range[0]) & (t <= time_range[1])
    if not rmask.any() or not tmask.any():
        raise EstimateError("empty region for sup L")
    v = solution.v[np.ix_(tmask, rmask)]
    return (solution.m - 1.0) * float(v.max())


# ---------------------------------------------------------------------------
# reports


@dataclass
class EstimateReport:
    kind: str
    params: dict
    times: np.ndarray
    r: np.ndarray
    lhs: np.ndarray
    rhs: np.ndarray
    delta: float
    band: int
    grid: dict
    tolerance: float
    constants: dict = field(default_factory=dict)
    hypotheses: dict = field(default_factory=dict)
    extras: dict = field(default_factory=dict)

    @property
    def margin(self) -> np.ndarray:
        return self.rhs[:, None] - self.lhs

    @property
    def min_margin(self) -> float:
        m = self.margin
        return float(np.nanmin(m)) if np.isfinite(m).any() else math.nan

    @property
    def evaluated(self) -> int:
        return int(np.isfinite(self.lhs).sum())

    @property
    def passed(self) -> bool:
        return self.evaluated > 0 and self.min_margin >= -self.tolerance

    def violations(self, limit: int = 20) -> list[dict]:
        m = self.margin
        with np.errstate(invalid="ignore"):
            bad = np.argwhere(m < -self.tolerance)
        order = np.argsort(m[bad[:, 0], bad[:, 1]], kind="stable") if len(bad) else []
        return [
            {"t": float(self.times[i]), "r": float(self.r[j]), "lhs": float(self.lhs[i, j]),
             "rhs": float(self.rhs[i]), "margin": float(m[i, j])}
            for i, j in bad[order][:limit]
        ]

    def argmin(self) -> dict:
        m = self.margin
        if not np.isfinite(m).any():
            return {}
        i, j = np.unravel_index(np.nanargmin(m), m.shape)
        return {"t": float(self.times[i]), "r": float(self.r[j])}

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "status": "PASS" if self.passed else "FAIL",
            "params": self.params,
            "constants": self.constants,
            "hypotheses": self.hypotheses,
            "delta": self.delta,
            "band": self.band,
            "tolerance": self.tolerance,
            "grid": self.grid,
            "t_range": [float(self.times[0]), float(self.times[-1])] if len(self.times) else [],
            "snapshots": int(len(self.times)),
            "evaluated_points": self.evaluated,
            "min_margin": self.min_margin,
            "argmin": self.argmin(),
            "violations": self.violations(),
            "extras": self.extras,
        }

    def write_csv(self, path) -> None:
        m = self.margin
        with open(path, "w", newline="") as fh:
            out = csv.writer(fh)
            out.writerow(["t", "r", "lhs", "rhs", "margin"])
            for i, t in enumerate(self.times):
                for j, r in enumerate(self.r):
                    if np.isfinite(self.lhs[i, j]):
                        out.writerow([repr(float(t)), repr(float(r)), repr(float(self.lhs[i, j])),
                                      repr(float(self.rhs[i])), repr(float(m[i, j]))])


def _time_indices(solution: SolutionField, t_min: float | None, t_max: float | None, width: int = 1):
    ks = solution.center_indices()
    if width > 1:
        # stencils of width 2: the neighbours must themselves be centered
        ok = set(ks.tolist())
        ks = np.array([k for k in ks if all(k + j in ok for j in range(-width + 1, width))], dtype=int)
    t = solution.times
    sel = np.ones(len(ks), dtype=bool)
    if t_min is not None:
        sel &= t[ks] >= t_min - 1e-12
    if t_max is not None:
        sel &= t[ks] <= t_max + 1e-12
    ks = ks[sel]
    if not len(ks):
        raise EstimateError("no snapshot in the requested time window has a centered stencil")
    return ks


def _mask(solution: SolutionField, k: int, delta: float, band: int, front=None) -> np.ndarray:
    mask = evaluation_mask(solution.u[k], delta, band)
    if solution.meta.get("source") == "sampled":
        # a sampled closed form is not zero-flux at a truncated end
        pole = solution.grid.pole_mask
        mask[0] &= bool(pole[0])
        mask[-1] &= bool(pole[-1])
    if front is not None:
        grid = solution.grid
        mask &= grid.r < front(float(solution.times[k])) - band * grid.h
    return mask


def _ball_mask(solution: SolutionField, center: float, R: float) -> np.ndarray:
    r = solution.grid.r
    if R == INF:
        return np.ones(len(r), dtype=bool)
    return np.abs(r - center) < R


def check_hypotheses(solution: SolutionField, kind: str, params: EstimateParams, eps: float | None) -> dict:
    """Verify the curvature hypotheses of a bound kind on the solution's
    manifold; raises HypothesisError when they fail."""
    man, grid = solution.manifold, solution.grid
    lo, hi = man.domain
    out: dict = {"kind": kind}
    slack = 1e-12
    if kind in ("local-Thm3.1", "global-Cor3.2"):
        if eps is None:
            raise HypothesisError("eps is required for the eps-range bounds")
        if not epsilon_range_contains(params.N, man.n, eps):
            raise HypothesisError(f"eps={eps} outside the eps-range for N={params.N}")
        c = c_const(man.n, params.N, eps)
        if abs(c - params.c) > 1e-12 * c:
            raise HypothesisError(f"c={params.c} does not match c(n, N, eps)={c}")
        if kind == "local-Thm3.1":
            region = (max(lo, params.center - 2 * params.R), min(hi, params.center + 2 * params.R))
        else:
            region = (lo, hi)
        K_need = admissible_K(man, params.N, eps, region, grid)
        p1, p2 = conformal_bounds(man, eps, region, grid)
        out.update(region=list(region), K_required=K_need, p1_tight=p1, p2_tight=p2, eps=eps, c=c)
        if params.K < K_need * (1 - slack) - slack:
            raise HypothesisError(f"K={params.K} is below the required {K_need}")
        if params.p1 > p1 * (1 + slack) or params.p2 < p2 * (1 - slack):
            raise HypothesisError(f"(p1, p2)=({params.p1}, {params.p2}) does not bracket ({p1}, {p2})")
    elif kind == "compact-Thm4.1":
        # with K = 0 the conformal factor is irrelevant; eps = 0 lies in every eps-range
        K_need = admissible_K(man, params.N, 0.0, (lo, hi), grid)
        out.update(K_required=K_need)
        if K_need > slack:
            raise HypothesisError(f"Ric_psi^N is not non-negative (deficit {K_need})")
    elif kind in ("constant-Thm2.2", "constant-Cor2.2"):
        if params.N < man.n:
            raise HypothesisError("the constant-curvature bounds need N >= n")
        if kind == "constant-Thm2.2":
            region = (max(lo, params.center - 2 * params.R), min(hi, params.center + 2 * params.R))
        else:
            region = (lo, hi)
        K_need = admissible_K(man, params.N, 1.0, region, grid)
        out.update(region=list(region), K_required=K_need)
        if params.K < K_need * (1 - slack) - slack:
            raise HypothesisError(f"K={params.K} is below the required {K_need}")
    elif kind == "LiYau-2.4/2.5":
        if not man.weight.is_constant:
            raise HypothesisError("the Li-Yau baseline is unweighted")
        K_need = admissible_K(man, man.n, 1.0, (lo, hi), grid)
        out.update(K_required=K_need)
        if params.K < K_need * (1 - slack) - slack:
            raise HypothesisError(f"K={params.K} is below the required {K_need}")
    elif kind == "classical-AB-2.6":
        if man.kind != "euclidean-radial" or not man.weight.is_constant:
            raise HypothesisError("the classical estimate needs flat unweighted space")
    else:
        raise EstimateError(f"unknown bound kind {kind!r}")
    out["satisfied"] = True
    return out


def _nanmin(x) -> float | None:
    return float(np.nanmin(x)) if np.isfinite(x).any() else None


def verify(
    solution: SolutionField,
    kind: str,
    params: EstimateParams,
    *,
    eps: float | None = None,
    cutoff: CutoffProfile | None = None,
    delta: float | None = None,
    band: int = 0,
    t_min: float | None = None,
    t_max: float | None = None,
    tolerance: float = 0.0,
    printed_form: bool = False,
    front=None,
) -> EstimateReport:
    """Evaluate a bound on B(center, R) x [t_min, t_max] restricted to u >= delta.

    Times are the solution's own time coordinate, i.e. the bound is read as
    holding for a solution that started at t = 0.  ``front(t)``, when given,
    is the exact free-boundary radius; the band is then also measured from it.
    """
    if kind not in BOUND_KINDS:
        raise EstimateError(f"unknown bound kind {kind!r}")
    if kind == "classical-AB-2.6":
        return classical_ab_check(solution, delta=delta, band=band, t_min=t_min, t_max=t_max, tolerance=tolerance,
                                  front=front)
    hyp = check_hypotheses(solution, kind, params, eps)
    delta = default_delta(solution) if delta is None else delta
    ks = _time_indices(solution, t_min, t_max)
    ball = _ball_mask(solution, params.center, params.R)
    n = solution.manifold.n
    constants = {"a": params.a if kind != "LiYau-2.4/2.5" else None, "c": params.c, "K": params.K,
                 "p1": params.p1, "p2": params.p2, "L": params.L}
    if kind in ("local-Thm3.1", "constant-Thm2.2"):
        if cutoff is None and kind == "local-Thm3.1":
            cutoff = CutoffProfile(params.p1, params.c)
        elif cutoff is None:
            cutoff = CutoffProfile(1.0, 1.0 / (params.N - 1.0))
        constants.update(cutoff.to_dict())
    rhs_of_t = {
        "local-Thm3.1": lambda t: local_bound_rhs(params, cutoff, t),
        "global-Cor3.2": lambda t: global_bound_rhs(params.alpha, params.a, params.K, params.p1, params.L, t,
                                                    printed_form),
        "compact-Thm4.1": lambda t: compact_bound_rhs(params.a, t),
        "constant-Thm2.2": lambda t: theorem22_rhs(params.alpha, params.m, params.N, n, params.K, params.L,
                                                   params.R, t, cutoff, params.legacy_coth),
        "constant-Cor2.2": lambda t: corollary22_rhs(params.alpha, params.a, params.K, params.L, t),
        "LiYau-2.4/2.5": lambda t: li_yau_rhs(params.alpha, n, params.K, t),
    }[kind]
    alpha = 1.0 if kind == "compact-Thm4.1" else params.alpha
    lhs = np.full((len(ks), len(solution.grid)), np.nan)
    rhs = np.empty(len(ks))
    for row, k in enumerate(ks):
        mask = ball & _mask(solution, k, delta, band, front)
        if kind == "LiYau-2.4/2.5":
            vals = li_yau_lhs(solution, alpha, k)
        else:
            vals = F_alpha(solution, alpha, k, nodes=mask, delta=delta)
        lhs[row, mask] = vals[mask]
        rhs[row] = rhs_of_t(float(solution.times[k]))
    if not np.isfinite(lhs).any():
        raise EstimateError("every evaluated node is below the vacuum threshold")
    # informational: how the worst margin moves as the vacuum threshold shrinks toward delta
    margin = rhs[:, None] - lhs
    extras = {"delta_study": [
        {"delta": d, "min_margin": _nanmin(np.where(solution.u[ks] >= d, margin, np.nan))}
        for d in (1e4 * delta, 1e2 * delta, delta)
    ]}
    if kind in ("local-Thm3.1",) and eps == 1.0 and params.p1 == params.p2 == 1.0 and n <= params.N < INF:
        t_ref = float(solution.times[ks[-1]])
        ref_cut = CutoffProfile(1.0, 1.0 / (params.N - 1.0))
        mine = local_bound_rhs(params, ref_cut, t_ref)
        ref = theorem22_rhs(params.alpha, params.m, params.N, n, params.K, params.L, params.R, t_ref, ref_cut,
                            params.legacy_coth)
        extras["recovery_rel_diff"] = abs(mine - ref) / abs(ref)
    if kind == "compact-Thm4.1":
        tF = lhs * solution.times[ks][:, None]
        extras["max_t_F1"] = float(np.nanmax(tF))
        extras["max_abs_t_F1_minus_a"] = float(np.nanmax(np.abs(tF - params.a)))
    return EstimateReport(
        kind=kind, params=params.to_dict(), times=solution.times[ks], r=solution.grid.r, lhs=lhs, rhs=rhs,
        delta=delta, band=band, grid=solution.grid.metadata(), tolerance=tolerance, constants=constants,
        hypotheses=hyp, extras=extras,
    )


def classical_ab_check(
    solution: SolutionField,
    *,
    delta: float | None = None,
    band: int = 0,
    t_min: float | None = None,
    t_max: float | None = None,
    tolerance: float = 0.0,
    front=None,
) -> EstimateReport:
    """Margin of Delta v >= -kappa/t on flat unweighted space, as
    ``lhs = -Delta v`` against ``rhs = kappa/t``."""
    man = solution.manifold
    if man.kind != "euclidean-radial" or not man.weight.is_constant:
        raise HypothesisError("the classical estimate needs flat unweighted space")
    delta = default_delta(solution) if delta is None else delta
    n, m = man.n, solution.m
    kappa = kappa_classical(n, m)
    ks = _time_indices(solution, t_min, t_max)
    v = solution.v
    lhs = np.full((len(ks), len(solution.grid)), np.nan)
    rhs = np.empty(len(ks))
    for row, k in enumerate(ks):
        mask = _mask(solution, k, delta, band, front)
        lap = weighted_laplacian(man, solution.grid, v[k])
        lhs[row, mask] = -lap[mask]
        rhs[row] = kappa / solution.times[k]
    margin = rhs[:, None] - lhs
    return EstimateReport(
        kind="classical-AB-2.6", params={"n": n, "m": m, "kappa": kappa}, times=solution.times[ks],
        r=solution.grid.r, lhs=lhs, rhs=rhs, delta=delta, band=band, grid=solution.grid.metadata(),
        tolerance=tolerance, constants={"kappa": kappa}, hypotheses={"flat_unweighted": True},
        extras={"max_abs_equality_gap": float(np.nanmax(np.abs(margin)))},
    )


def lemma31_gap(solution: SolutionField, alpha: float, N, k: int, delta: float | None = None, band: int = 0):
    """Slack of the differential inequality for L(F_alpha) at snapshot k.

    gap = RHS - L(F_alpha) with L = d_t - (m-1) v Delta_psi and
    RHS = -(1/a)[(m-1) Delta_psi v]^2 + (1-alpha)(d_t v/v)^2
          + 2m <grad v, grad F_alpha> - 2(m-1) Ric_psi^N(grad v).
    Needs snapshots k-2..k+2 on a uniform spacing.  Nodes below delta (plus
    band), and the two nodes next to a non-pole end, are NaN.
    """
    N = as_extended(N)
    man, grid, m = solution.manifold, solution.grid, solution.m
    a = a_const(m, N, man.n)
    if not all(j in set(solution.center_indices().tolist()) for j in (k - 1, k, k + 1)):
        raise EstimateError(f"snapshot {k} lacks the five-point time stencil")
    delta = default_delta(solution) if delta is None else delta
    v = solution.v
    F = np.array([F_alpha(solution, alpha, j, delta=delta) for j in (k - 1, k, k + 1)])
    dt = solution.times[k + 1] - solution.times[k]
    Ft = (F[2] - F[0]) / (2.0 * dt)
    Fk = F[1]
    vk = v[k]
    vt = solution.time_derivative(v, k)
    lap_v = weighted_laplacian(man, grid, vk)
    with np.errstate(invalid="ignore"):
        lap_F = weighted_laplacian(man, grid, np.nan_to_num(Fk))
    gv = centered_gradient(grid, vk)
    gF = centered_gradient(grid, np.nan_to_num(Fk))
    ric = radial_ricci(man, N, grid)
    with np.errstate(divide="ignore", invalid="ignore"):
        L_F = Ft - (m - 1.0) * vk * lap_F
        rhs = (
            -((m - 1.0) * lap_v) ** 2 / a
            + (1.0 - alpha) * (vt / vk) ** 2
            + 2.0 * m * gv * gF
            - 2.0 * (m - 1.0) * ric * gv**2
        )
    gap = rhs - L_F
    mask = np.ones(len(grid), dtype=bool)
    for j in (k - 2, k - 1, k, k + 1, k + 2):
        mask &= evaluation_mask(solution.u[j], delta, band + 1)
    pole = grid.pole_mask
    if not pole[0]:
        mask[:2] = False
    if not pole[-1]:
        mask[-2:] = False
    gap[~mask] = np.nan
    return gap


def lemma31_gap_exact_flat(params_v, N, m, n, alpha=None):
    """Closed-form slack for a solution whose pressure has Hessian
    ``params_v`` * identity on flat unweighted space: 2(m-1)(lap v)^2 (1/n - 1/N)."""
    N = as_extended(N)
    lap = n * params_v
    inv = 0.0 if N == INF else 1.0 / N
    return 2.0 * (m - 1.0) * (lap**2 / n - lap**2 * inv) if N != n else 0.0
