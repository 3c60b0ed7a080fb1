"""Implicit conservative solver for the weighted porous medium equation.

The density ``u`` is advanced by backward Euler,

    V_i (u_i^{k+1} - u_i^k) = dt * sum_faces (w/h) (g(u^{k+1})_j - g(u^{k+1})_i),

with ``g(u) = |u|^{m-1} u`` and ``V_i`` the control-volume measure of
:class:`~pmelab.geometry.Grid1D`.  The nonlinear system is tridiagonal and is
solved by damped Newton; a full Newton step reproduces the old mass exactly,
since the flux part of the Jacobian has zero column sums.
"""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.linalg import solve_banded

from .geometry import Grid1D, ModelManifold, centered_gradient, flux_divergence, weighted_laplacian

log = logging.getLogger(__name__)

CLAMP_FLOOR = 1e-14


class NewtonFailure(RuntimeError):
    """Newton did not converge; the caller should retry with a smaller step."""


class SolverError(RuntimeError):
    pass


@dataclass(frozen=True)
class TimeStepPolicy:
    dt: float = 1e-3
    min_dt: float = 1e-9
    max_newton: int = 40
    rtol: float = 1e-13
    save_every: int = 1


@dataclass
class PMEProblem:
    manifold: ModelManifold
    m: float
    initial: np.ndarray
    T: float
    M: int
    t0: float = 0.0
    policy: TimeStepPolicy = field(default_factory=TimeStepPolicy)
    allow_vacuum: bool = False
    barenblatt: object = None  # BarenblattParams when started from Barenblatt data

    def __post_init__(self):
        if not self.m > 1:
            raise SolverError(f"the porous medium exponent must exceed 1, got m={self.m}")
        if not self.T > self.t0:
            raise SolverError("horizon must exceed the initial time")
        self.grid = Grid1D(self.manifold, self.M)
        init = self.initial(self.grid.r) if callable(self.initial) else self.initial
        u0 = np.asarray(init, dtype=float)
        if u0.shape != (len(self.grid),):
            raise SolverError(f"initial data has shape {u0.shape}, expected {(len(self.grid),)}")
        if np.any(u0 < 0):
            raise SolverError("initial data must be non-negative")
        if not self.allow_vacuum and np.any(u0 <= 0):
            raise SolverError("initial data must be strictly positive (set allow_vacuum for compact support)")
        if self.grid.integrate(u0) <= 0:
            raise SolverError("initial data must carry positive mass")
        self.initial = u0


def pressure(u, m: float) -> np.ndarray:
    """v = m/(m-1) u^{m-1}."""
    return m / (m - 1.0) * np.power(np.maximum(u, 0.0), m - 1.0)


@dataclass
class SolutionField:
    """Snapshots u(r_i, t_k) on a fixed grid."""

    grid: Grid1D
    m: float
    times: np.ndarray
    u: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.u = np.asarray(self.u, dtype=float)
        if self.u.shape != (len(self.times), len(self.grid)):
            raise SolverError("snapshot array does not match times x nodes")
        if np.any(np.diff(self.times) <= 0):
            raise SolverError("snapshot times must increase")

    @property
    def manifold(self) -> ModelManifold:
        return self.grid.manifold

    @property
    def v(self) -> np.ndarray:
        if not self.m > 1:
            raise SolverError("pressure is only defined for m > 1")
        return pressure(self.u, self.m)

    def mass_trace(self) -> np.ndarray:
        return self.u @ self.grid.volumes

    def time_derivative(self, q: np.ndarray, k: int) -> np.ndarray:
        """Second-order three-point derivative of snapshot field q at index k."""
        if not 0 < k < len(self.times) - 1:
            raise SolverError(f"time index {k} has no centered stencil")
        t0, t1, t2 = self.times[k - 1 : k + 2]
        d0, d1 = t1 - t0, t2 - t1
        return (
            -d1 / (d0 * (d0 + d1)) * q[k - 1]
            + (d1 - d0) / (d0 * d1) * q[k]
            + d0 / (d1 * (d0 + d1)) * q[k + 1]
        )

    def center_indices(self) -> np.ndarray:
        """Interior snapshot indices whose two neighbours are equally spaced."""
        d = np.diff(self.times)
        k = np.arange(1, len(self.times) - 1)
        balanced = np.abs(d[1:] - d[:-1]) <= 1e-9 * np.maximum(d[1:], d[:-1])
        return k[balanced]

    def summary(self) -> dict:
        mass = self.mass_trace()
        return {
            "m": self.m,
            "grid": self.grid.metadata(),
            "t_start": float(self.times[0]),
            "t_end": float(self.times[-1]),
            "snapshots": int(len(self.times)),
            "mass_initial": float(mass[0]),
            "mass_final": float(mass[-1]),
            "mass_rel_drift": float(np.max(np.abs(mass - mass[0])) / mass[0]),
            "u_max": [float(x) for x in self.u.max(axis=1)[:: max(1, len(self.times) // 50)]],
            "L1_final": float(self.grid.integrate(np.abs(self.u[-1]))),
            "Linf_final": float(np.abs(self.u[-1]).max()),
            "newton": {k: self.meta[k] for k in ("steps", "newton_iterations", "halvings") if k in self.meta},
        }

    def write_csv(self, path) -> None:
        v = self.v if self.m > 1 else np.full_like(self.u, np.nan)
        with open(path, "w", newline="") as fh:
            out = csv.writer(fh)
            out.writerow(["t", "r", "u", "v"])
            for k, t in enumerate(self.times):
                for i, r in enumerate(self.grid.r):
                    out.writerow([repr(float(t)), repr(float(r)), repr(float(self.u[k, i])), repr(float(v[k, i]))])

    def write_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.summary(), fh, indent=2, sort_keys=True)
            fh.write("\n")


def mass(grid: Grid1D, state) -> float:
    """Weighted mass sum u_i V_i."""
    return grid.integrate(state)


def _nonlinearity(u, m):
    a = np.abs(u)
    return a ** (m - 1.0) * u, m * a ** (m - 1.0)


def step(problem: PMEProblem, state: np.ndarray, dt: float) -> np.ndarray:
    """One backward-Euler step; raises NewtonFailure if Newton stalls."""
    result, _ = _step(problem.grid, problem.m, state, dt, problem.policy)
    return result


def _step(grid: Grid1D, m: float, u_old: np.ndarray, dt: float, policy: TimeStepPolicy):
    if dt <= 0:
        raise SolverError("time step must be positive")
    u_old = np.asarray(u_old, dtype=float)
    if np.any(u_old < 0):
        raise SolverError("state must be non-negative")
    V = grid.volumes
    kappa = grid.conductances()
    mass_old = V @ u_old
    if mass_old < 0:
        raise SolverError("negative mass")
    scale = max(float(np.max(V * np.abs(u_old))), 1e-300)

    def residual(u):
        gu, _ = _nonlinearity(u, m)
        return V * (u - u_old) - dt * flux_divergence(grid, gu)

    u = u_old.copy()
    F = residual(u)
    norm = np.max(np.abs(F))
    for it in range(1, policy.max_newton + 1):
        if norm <= policy.rtol * scale:
            break
        _, dg = _nonlinearity(u, m)
        # Jacobian: diag(V) - dt * A diag(g'(u)), A the symmetric flux matrix
        ab = np.zeros((3, len(u)))
        ab[0, 1:] = -dt * kappa * dg[1:]
        ab[2, :-1] = -dt * kappa * dg[:-1]
        diag = V.copy()
        diag[:-1] += dt * kappa * dg[:-1]
        diag[1:] += dt * kappa * dg[1:]
        ab[1] = diag
        delta = solve_banded((1, 1), ab, F, check_finite=False)
        lam = 1.0
        while True:
            trial = u - lam * delta
            F_trial = residual(trial)
            n_trial = np.max(np.abs(F_trial))
            if n_trial < norm or lam < 1e-4:
                break
            lam *= 0.5
        u, F, norm = trial, F_trial, n_trial
    else:
        if norm > policy.rtol * scale:
            raise NewtonFailure(f"Newton residual {norm:.3e} after {policy.max_newton} iterations")
        it = policy.max_newton
    negative = u < 0
    if np.any(negative):
        worst = float(-u[negative].min())
        if worst > CLAMP_FLOOR * max(1.0, float(u_old.max())):
            raise NewtonFailure(f"Newton produced a negative density {-worst:.3e}")
        log.debug("clamped %d negative values (min %.2e)", int(negative.sum()), -worst)
        u = np.where(negative, 0.0, u)
    return u, it


def solve(problem: PMEProblem, progress: Callable | None = None) -> SolutionField:
    """Advance from t0 to T with the policy's step, halving on Newton failure."""
    pol = problem.policy
    grid, m = problem.grid, problem.m
    n_steps = max(1, int(round((problem.T - problem.t0) / pol.dt)))
    dt_nominal = (problem.T - problem.t0) / n_steps
    u = problem.initial.copy()
    t = problem.t0
    times, snaps = [t], [u.copy()]
    iterations = 0
    halvings = 0
    dts = []
    for k in range(1, n_steps + 1):
        target = problem.t0 + k * dt_nominal
        while t < target - 1e-14 * max(1.0, abs(target)):
            dt = min(dt_nominal, target - t)
            while True:
                try:
                    u_new, its = _step(grid, m, u, dt, pol)
                    break
                except NewtonFailure:
                    dt *= 0.5
                    halvings += 1
                    if dt < pol.min_dt:
                        raise SolverError(f"time step fell below {pol.min_dt} at t={t}")
            u, t = u_new, t + dt
            iterations += its
            dts.append(dt)
        t = target
        if _keep(k, n_steps, pol.save_every):
            times.append(t)
            snaps.append(u.copy())
        if progress is not None:
            progress(k, n_steps)
    meta = {
        "steps": len(dts),
        "newton_iterations": iterations,
        "halvings": halvings,
        "dt_nominal": dt_nominal,
        "dt_min": min(dts),
    }
    return SolutionField(grid, m, np.array(times), np.array(snaps), meta)


def _keep(k: int, n_steps: int, every: int) -> bool:
    # thinned output keeps each saved step together with both neighbours so
    # that centered time differences keep the step spacing
    if every <= 1 or k >= n_steps - 1:
        return True
    return k % every in (0, 1, every - 1)


def evaluation_mask(u: np.ndarray, delta: float, band: int = 0) -> np.ndarray:
    """Nodes with u >= delta whose index distance to any sub-threshold node
    exceeds ``band``."""
    ok = u >= delta
    if band <= 0 or ok.all():
        return ok
    bad = np.flatnonzero(~ok)
    idx = np.arange(len(u))
    dist = np.min(np.abs(idx[:, None] - bad[None, :]), axis=1)
    return ok & (dist > band)


def pressure_evolution_residual(
    solution: SolutionField, delta: float | None = None, band: int = 0
) -> np.ndarray:
    """Max-norm residual of d_t v = |grad v|^2 + (m-1) v Delta_psi v per interior
    snapshot, over nodes with u >= delta (NaN where nothing is evaluated)."""
    u0max = float(solution.u[0].max())
    delta = 1e-6 * u0max if delta is None else delta
    v = solution.v
    grid, man = solution.grid, solution.manifold
    out = np.full(len(solution.times), np.nan)
    evaluated = False
    for k in solution.center_indices():
        mask = evaluation_mask(solution.u[k], delta, band)
        if not mask.any():
            continue
        evaluated = True
        vt = solution.time_derivative(v, k)
        gv = centered_gradient(grid, v[k])
        lap = weighted_laplacian(man, grid, v[k])
        res = vt - gv**2 - (solution.m - 1.0) * v[k] * lap
        out[k] = float(np.max(np.abs(res[mask])))
    if not evaluated:
        raise SolverError("no snapshot has nodes above the vacuum threshold")
    return out
