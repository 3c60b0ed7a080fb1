"""Closed-form reference solutions and refinement studies."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .geometry import GeometryError, Grid1D, ModelManifold
from .solver import PMEProblem, SolutionField, TimeStepPolicy, solve


class OracleError(ValueError):
    pass


@dataclass(frozen=True)
class BarenblattParams:
    n: int
    m: float
    C: float = 1.0
    t0: float = 1.0

    def __post_init__(self):
        if self.n < 1 or not self.m > 1 or not self.C > 0 or not self.t0 > 0:
            raise OracleError(f"invalid Barenblatt parameters {self}")

    @property
    def alpha(self) -> float:
        return self.n / (self.n * (self.m - 1.0) + 2.0)

    @property
    def beta(self) -> float:
        return self.alpha / self.n

    @property
    def k(self) -> float:
        return (self.m - 1.0) * self.alpha / (2.0 * self.m * self.n)

    def support_radius(self, t: float) -> float:
        return math.sqrt(self.C / self.k) * t**self.beta

    def to_dict(self):
        return {"n": self.n, "m": self.m, "C": self.C, "t0": self.t0}


def _check_time(params: BarenblattParams, t) -> None:
    if np.any(np.asarray(t) < params.t0 * (1 - 1e-12)):
        raise OracleError(f"Barenblatt profile requested before t0={params.t0}")


def barenblatt(params: BarenblattParams, r, t):
    """u = t^{-a}(C - k r^2 t^{-2b})_+^{1/(m-1)}."""
    _check_time(params, t)
    r = np.asarray(r, dtype=float)
    t = np.asarray(t, dtype=float)
    core = np.maximum(params.C - params.k * r**2 * t ** (-2.0 * params.beta), 0.0)
    return t ** (-params.alpha) * core ** (1.0 / (params.m - 1.0))


def barenblatt_pressure(params: BarenblattParams, r, t):
    """v = m/(m-1) u^{m-1} = m/(m-1) t^{-a(m-1)} (C - k r^2 t^{-2b})_+."""
    _check_time(params, t)
    r = np.asarray(r, dtype=float)
    t = np.asarray(t, dtype=float)
    m = params.m
    core = np.maximum(params.C - params.k * r**2 * t ** (-2.0 * params.beta), 0.0)
    return m / (m - 1.0) * t ** (-params.alpha * (m - 1.0)) * core


def barenblatt_mass(params: BarenblattParams) -> float:
    """Total mass in R^n by exact radial integration (self-similarity makes it
    time independent)."""
    n, m = params.n, params.m
    q = 1.0 / (m - 1.0)
    # int_0^rho r^{n-1} (C - k r^2)^q dr = C^q rho^n B(n/2, q+1)/2 with rho^2 = C/k
    rho = math.sqrt(params.C / params.k)
    beta_fn = math.exp(math.lgamma(n / 2) + math.lgamma(q + 1) - math.lgamma(n / 2 + q + 1))
    sphere_area = 2 * math.pi ** (n / 2) / math.gamma(n / 2)
    return sphere_area * params.C**q * rho**n * beta_fn / 2.0


def barenblatt_pressure_identities(params: BarenblattParams, t: float) -> dict:
    """Closed-form pressure quantities inside the support.

    Delta v = -a_B/t because a_B (m-1) + 2 b_B = 1, hence
    F_1 = |grad v|^2/v - d_t v / v = -(m-1) Delta v = (m-1) a_B / t.
    """
    _check_time(params, t)
    aB, bB, m = params.alpha, params.beta, params.m
    exponent_identity = aB * (m - 1.0) + 2.0 * bB
    return {
        "laplacian_v": -aB / t,
        "t_laplacian_v": -aB,
        "F1": (m - 1.0) * aB / t,
        "t_F1": (m - 1.0) * aB,
        "exponent_identity": exponent_identity,
        "kappa": aB,
    }


def barenblatt_residual(params: BarenblattParams, r, t: float, tau: float | None = None):
    """Pointwise finite-difference residual of u_t - Delta(u^m) in R^n.

    Uses plain centered differences of the closed form (independent of the
    solver's flux discretisation); r must be uniform with r[0] > 0.
    """
    r = np.asarray(r, dtype=float)
    h = r[1] - r[0]
    tau = 1e-4 * t if tau is None else tau
    if t - tau < params.t0:
        raise OracleError("residual stencil reaches before t0")
    ut = (barenblatt(params, r, t + tau) - barenblatt(params, r, t - tau)) / (2 * tau)
    rr = np.concatenate(([r[0] - h], r, [r[-1] + h]))
    z = barenblatt(params, np.abs(rr), t) ** params.m
    d2 = (z[2:] - 2 * z[1:-1] + z[:-2]) / h**2
    d1 = (z[2:] - z[:-2]) / (2 * h)
    return ut - d2 - (params.n - 1) / r * d1


def gaussian_heat(n: int, r, t):
    """Heat kernel (4 pi t)^{-n/2} exp(-r^2/(4t))."""
    t = np.asarray(t, dtype=float)
    if np.any(t <= 0):
        raise OracleError("heat kernel needs t > 0")
    r = np.asarray(r, dtype=float)
    return (4 * math.pi * t) ** (-n / 2) * np.exp(-(r**2) / (4 * t))


def gaussian_li_yau(n: int, r, t):
    """|grad log u|^2 - d_t log u for the heat kernel, = n/(2t) identically."""
    r = np.asarray(r, dtype=float)
    t = np.asarray(t, dtype=float)
    grad_log = -r / (2 * t)
    dt_log = -n / (2 * t) + r**2 / (4 * t**2)
    return grad_log**2 - dt_log


def sample_solution(grid: Grid1D, m: float, fn, times) -> SolutionField:
    """SolutionField holding a closed-form solution sampled at the given times."""
    times = np.asarray(times, dtype=float)
    u = np.array([fn(grid.r, t) for t in times])
    return SolutionField(grid, m, times, u, {"source": "sampled"})


def barenblatt_problem(
    params: BarenblattParams,
    r_max: float,
    M: int,
    T: float,
    dt: float,
    policy: TimeStepPolicy | None = None,
) -> PMEProblem:
    manifold = ModelManifold("euclidean-radial", params.n, domain=(0.0, r_max))
    grid = Grid1D(manifold, M)
    if params.support_radius(T) >= r_max:
        raise OracleError("support reaches the outer boundary before T")
    pol = replace(policy or TimeStepPolicy(), dt=dt)
    return PMEProblem(
        manifold, params.m, barenblatt(params, grid.r, params.t0), T, M,
        t0=params.t0, policy=pol, allow_vacuum=True, barenblatt=params,
    )


@dataclass
class RefinementResult:
    M: list[int]
    h: list[float]
    L1: list[float]
    Linf: list[float]
    mass_drift: list[float]

    @property
    def L1_orders(self) -> list[float]:
        return _orders(self.h, self.L1)

    @property
    def Linf_orders(self) -> list[float]:
        return _orders(self.h, self.Linf)

    def to_dict(self):
        return {
            "M": self.M, "h": self.h, "L1": self.L1, "Linf": self.Linf,
            "L1_orders": self.L1_orders, "Linf_orders": self.Linf_orders,
            "mass_drift": self.mass_drift,
        }


def _orders(h, err):
    out = []
    for (h0, e0), (h1, e1) in zip(zip(h, err), zip(h[1:], err[1:])):
        out.append(math.log(e0 / e1) / math.log(h0 / h1) if e0 > 0 and e1 > 0 else math.inf)
    return out


def refine_study(problem: PMEProblem, levels: int = 3, exact=None, dt_follows_h: bool = True) -> RefinementResult:
    """Solve at M, 2M, 4M, ... cells and measure errors at T against ``exact``.

    ``exact(r, t)`` defaults to the Barenblatt profile when the problem starts
    from Barenblatt data on flat unweighted space (``problem.barenblatt``), and
    to the initial data itself when that is spatially constant.
    """
    if levels < 3:
        raise OracleError("a refinement study needs at least three levels")
    if exact is None:
        params = getattr(problem, "barenblatt", None)
        if params is not None:
            exact = lambda r, t: barenblatt(params, r, t)  # noqa: E731
        elif np.ptp(problem.initial) == 0:
            c = float(problem.initial[0])
            exact = lambda r, t: np.full_like(r, c)  # noqa: E731
        else:
            raise OracleError("no oracle is available for this problem")
    out = RefinementResult([], [], [], [], [])
    for lev in range(levels):
        M = problem.M * 2**lev
        dt = problem.policy.dt / 2**lev if dt_follows_h else problem.policy.dt
        grid = Grid1D(problem.manifold, M)
        u0 = exact(grid.r, problem.t0)
        prob = PMEProblem(
            problem.manifold, problem.m, u0, problem.T, M, t0=problem.t0,
            policy=replace(problem.policy, dt=dt, save_every=10**9), allow_vacuum=True,
        )
        sol = solve(prob)
        err = sol.u[-1] - exact(grid.r, problem.T)
        mass = sol.mass_trace()
        out.M.append(M)
        out.h.append(grid.h)
        out.L1.append(grid.integrate(np.abs(err)))
        out.Linf.append(float(np.abs(err).max()))
        out.mass_drift.append(float(abs(mass[-1] - mass[0]) / mass[0]))
    return out


def check_flat(manifold: ModelManifold) -> None:
    if manifold.kind != "euclidean-radial" or not manifold.weight.is_constant:
        raise GeometryError("this oracle needs flat unweighted euclidean-radial geometry")
