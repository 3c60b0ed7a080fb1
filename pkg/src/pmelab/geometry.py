"""Model weighted manifolds and their radial geometry.

A model manifold is a warped product ``dr^2 + f(r)^2 g_{S^{n-1}}`` carrying the
measure ``exp(-psi(r)) dvol``.  Radial functions then live on a 1-D interval and
the weighted Laplacian takes the self-adjoint form ``(1/w) (w u')'`` with the
measure density ``w = f^{n-1} exp(-psi)``.

Warp and weight profiles carry closed-form derivatives; nothing in this module
differentiates ``f`` or ``psi`` numerically.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterable

import numpy as np
from scipy.optimize import minimize_scalar

INF = math.inf

KINDS = ("euclidean-radial", "hyperbolic-radial", "sphere-polar", "interval-weighted")
_WARP_FOR_KIND = {
    "euclidean-radial": "identity",
    "hyperbolic-radial": "sinh",
    "sphere-polar": "sin",
    "interval-weighted": "one",
}


class GeometryError(ValueError):
    """Raised for inadmissible geometric parameters."""


def as_extended(N) -> float:
    """Parse an effective dimension, accepting ``"inf"`` style strings."""
    if isinstance(N, str):
        key = N.strip().lower()
        if key in ("inf", "+inf", "infinity", "∞"):
            return INF
        return float(key)
    N = float(N)
    if math.isnan(N) or N == -INF:
        raise GeometryError(f"effective dimension must be finite or +inf, got {N}")
    return N


def format_extended(N: float):
    return "inf" if N == INF else N


# ---------------------------------------------------------------------------
# profiles


@dataclass(frozen=True)
class Warp:
    """Warping function f(r) of a model manifold."""

    name: str

    def __post_init__(self):
        if self.name not in ("identity", "sinh", "sin", "one"):
            raise GeometryError(f"unknown warp profile {self.name!r}")

    def f(self, r):
        r = np.asarray(r, dtype=float)
        if self.name == "identity":
            return r.copy()
        if self.name == "sinh":
            return np.sinh(r)
        if self.name == "sin":
            return np.sin(r)
        return np.ones_like(r)

    def df(self, r):
        r = np.asarray(r, dtype=float)
        if self.name == "identity":
            return np.ones_like(r)
        if self.name == "sinh":
            return np.cosh(r)
        if self.name == "sin":
            return np.cos(r)
        return np.zeros_like(r)

    def d2f_over_f(self, r):
        """f''/f, constant for every catalogued profile (finite at poles)."""
        r = np.asarray(r, dtype=float)
        value = {"identity": 0.0, "sinh": 1.0, "sin": -1.0, "one": 0.0}[self.name]
        return np.full_like(r, value)

    def tangential_ratio(self, r):
        """(1 - f'^2)/f^2, the sectional curvature of planes tangent to spheres."""
        r = np.asarray(r, dtype=float)
        value = {"identity": 0.0, "sinh": -1.0, "sin": 1.0, "one": 1.0}[self.name]
        return np.full_like(r, value)

    def to_dict(self):
        return {"name": self.name, "params": {}}


@dataclass(frozen=True)
class Weight:
    """Weight function psi(r) with exact first and second derivatives.

    ``constant``: psi = value.  ``polynomial``: psi = sum coeffs[k] r^k.
    ``cos``: psi = A cos r.  ``quadratic``: psi = A r^2.
    """

    name: str = "constant"
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        required = {
            "constant": ("value",),
            "polynomial": ("coeffs",),
            "cos": ("A",),
            "quadratic": ("A",),
        }
        if self.name not in required:
            raise GeometryError(f"unknown weight profile {self.name!r}")
        missing = [k for k in required[self.name] if k not in self.params]
        if self.name == "constant" and missing:
            object.__setattr__(self, "params", {"value": 0.0})
        elif missing:
            raise GeometryError(f"weight {self.name!r} needs params {missing}")

    @property
    def _poly(self):
        return np.polynomial.Polynomial(np.asarray(self.params["coeffs"], dtype=float))

    def psi(self, r):
        r = np.asarray(r, dtype=float)
        if self.name == "constant":
            return np.full_like(r, float(self.params["value"]))
        if self.name == "polynomial":
            return self._poly(r)
        if self.name == "cos":
            return self.params["A"] * np.cos(r)
        return self.params["A"] * r**2

    def dpsi(self, r):
        r = np.asarray(r, dtype=float)
        if self.name == "constant":
            return np.zeros_like(r)
        if self.name == "polynomial":
            return self._poly.deriv(1)(r) * np.ones_like(r)
        if self.name == "cos":
            return -self.params["A"] * np.sin(r)
        return 2.0 * self.params["A"] * r

    def d2psi(self, r):
        r = np.asarray(r, dtype=float)
        if self.name == "constant":
            return np.zeros_like(r)
        if self.name == "polynomial":
            return self._poly.deriv(2)(r) * np.ones_like(r)
        if self.name == "cos":
            return -self.params["A"] * np.cos(r)
        return 2.0 * self.params["A"] * np.ones_like(r)

    @property
    def is_constant(self) -> bool:
        if self.name == "constant":
            return True
        if self.name == "polynomial":
            return not np.any(np.asarray(self.params["coeffs"], dtype=float)[1:])
        return self.params["A"] == 0

    def critical_points(self, lo: float, hi: float) -> list[float]:
        """Zeros of psi' inside [lo, hi] in closed form."""
        if self.is_constant:
            return []
        if self.name == "quadratic":
            pts = [0.0]
        elif self.name == "cos":
            pts = [k * math.pi for k in range(math.ceil(lo / math.pi), math.floor(hi / math.pi) + 1)]
        else:
            roots = self._poly.deriv(1).roots()
            pts = [float(z.real) for z in np.atleast_1d(roots) if abs(z.imag) < 1e-12]
        return [p for p in pts if lo <= p <= hi]

    def to_dict(self):
        params = dict(self.params)
        if "coeffs" in params:
            params["coeffs"] = [float(c) for c in params["coeffs"]]
        return {"name": self.name, "params": params}


# ---------------------------------------------------------------------------
# manifold


@dataclass(frozen=True)
class ModelManifold:
    kind: str
    n: int
    weight: Weight = field(default_factory=Weight)
    domain: tuple[float, float] = (0.0, 1.0)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise GeometryError(f"unknown manifold kind {self.kind!r}")
        if int(self.n) != self.n or self.n < 2:
            raise GeometryError(f"dimension must be an integer >= 2, got {self.n}")
        lo, hi = (float(x) for x in self.domain)
        object.__setattr__(self, "domain", (lo, hi))
        if not hi > lo:
            raise GeometryError(f"empty domain {self.domain}")
        if self.kind != "interval-weighted" and lo < 0:
            raise GeometryError("radial coordinate must be non-negative")
        if self.kind == "sphere-polar" and hi > math.pi + 1e-12:
            raise GeometryError("sphere-polar domain must lie in [0, pi]")
        f = self.warp.f(np.linspace(lo, hi, 257)[1:-1])
        if np.any(f <= 0):
            raise GeometryError("warp must be positive on the open domain")
        for p in self.poles:
            if abs(float(self.weight.dpsi(p))) > 1e-12:
                raise GeometryError(f"weight is not smooth at the pole r={p}: psi'({p}) != 0")

    @property
    def warp(self) -> Warp:
        return Warp(_WARP_FOR_KIND[self.kind])

    @property
    def poles(self) -> tuple[float, ...]:
        lo, hi = self.domain
        if self.kind == "interval-weighted":
            return ()
        out = []
        if lo == 0.0:
            out.append(0.0)
        if self.kind == "sphere-polar" and abs(hi - math.pi) < 1e-12:
            out.append(hi)
        return tuple(out)

    def density(self, r):
        """Measure density w = f^{n-1} exp(-psi)."""
        return self.warp.f(r) ** (self.n - 1) * np.exp(-self.weight.psi(r))

    def mean_curvature(self, r):
        """(n-1) f'/f, the unweighted Laplacian of the distance from the pole."""
        r = np.asarray(r, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            return (self.n - 1) * self.warp.df(r) / self.warp.f(r)

    def laplacian_of_distance(self, r):
        """Closed-form weighted Laplacian of r, (n-1) f'/f - psi'."""
        return self.mean_curvature(r) - self.weight.dpsi(r)

    def to_dict(self):
        return {
            "kind": self.kind,
            "n": int(self.n),
            "warp": self.warp.to_dict(),
            "weight": self.weight.to_dict(),
            "domain": [self.domain[0], self.domain[1]],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "ModelManifold":
        kind = doc["kind"]
        warp = doc.get("warp")
        if warp is not None and warp.get("name") != _WARP_FOR_KIND.get(kind):
            raise GeometryError(f"warp {warp.get('name')!r} does not match kind {kind!r}")
        weight = doc.get("weight") or {"name": "constant", "params": {"value": 0.0}}
        return cls(
            kind=kind,
            n=int(doc["n"]),
            weight=Weight(weight["name"], dict(weight.get("params", {}))),
            domain=tuple(doc["domain"]),
        )


@dataclass(frozen=True)
class CurvatureParams:
    N: float
    eps: float
    K: float = 0.0
    p1: float = 1.0
    p2: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "N", as_extended(self.N))
        if self.K < 0:
            raise GeometryError("K must be non-negative")
        if not 0 < self.p1 <= self.p2:
            raise GeometryError(f"need 0 < p1 <= p2, got p1={self.p1}, p2={self.p2}")

    def check(self, n: int) -> None:
        if not epsilon_range_contains(self.N, n, self.eps):
            raise GeometryError(f"eps={self.eps} is outside the eps-range for N={self.N}, n={n}")

    def to_dict(self):
        return {"N": format_extended(self.N), "eps": self.eps, "K": self.K, "p1": self.p1, "p2": self.p2}


# ---------------------------------------------------------------------------
# grid and weighted Laplacian

_GL_X, _GL_W = np.polynomial.legendre.leggauss(4)


def _integrate(fun: Callable, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    mid, half = 0.5 * (a + b), 0.5 * (b - a)
    pts = mid[:, None] + half[:, None] * _GL_X[None, :]
    return half * (fun(pts) @ _GL_W)


class Grid1D:
    """Uniform nodes on the manifold's domain with measure weights.

    ``volumes[i]`` is the exact (Gauss-Legendre) integral of the density over
    the control cell of node ``i``; this stays positive at poles where the
    density itself vanishes.
    """

    def __init__(self, manifold: ModelManifold, M: int):
        if M < 4:
            raise GeometryError("need at least 4 cells")
        self.manifold = manifold
        self.M = int(M)
        lo, hi = manifold.domain
        self.r = np.linspace(lo, hi, self.M + 1)
        self.h = (hi - lo) / self.M
        self.r_mid = 0.5 * (self.r[:-1] + self.r[1:])
        self.w = manifold.density(self.r)
        self.w_mid = manifold.density(self.r_mid)
        left = np.concatenate(([lo], self.r_mid))
        right = np.concatenate((self.r_mid, [hi]))
        self.volumes = _integrate(manifold.density, left, right)
        if np.any(self.w[1:-1] <= 0) or np.any(self.w_mid <= 0) or np.any(self.volumes <= 0):
            raise GeometryError("measure density must be positive inside the domain")

    def __len__(self):
        return self.M + 1

    @property
    def pole_mask(self) -> np.ndarray:
        mask = np.zeros(len(self), dtype=bool)
        for p in self.manifold.poles:
            mask[np.argmin(np.abs(self.r - p))] = True
        return mask

    def conductances(self) -> np.ndarray:
        """Face coefficients w_{i+1/2}/h of the flux form."""
        return self.w_mid / self.h

    def inner(self, u, z) -> float:
        return float(np.sum(self.volumes * np.asarray(u) * np.asarray(z)))

    def integrate(self, u) -> float:
        return float(np.sum(self.volumes * np.asarray(u)))

    def region_mask(self, lo: float, hi: float) -> np.ndarray:
        tol = 1e-12 * max(1.0, abs(hi))
        return (self.r >= lo - tol) & (self.r <= hi + tol)

    def metadata(self) -> dict:
        return {"M": self.M, "h": self.h, "r_lo": float(self.r[0]), "r_hi": float(self.r[-1])}


def flux_divergence(grid: Grid1D, z: np.ndarray) -> np.ndarray:
    """Sum of face fluxes into each control cell, zero flux at both ends."""
    flux = grid.conductances() * np.diff(z)
    out = np.zeros(len(grid))
    out[:-1] += flux
    out[1:] -= flux
    return out


def weighted_laplacian(manifold: ModelManifold, grid: Grid1D, field) -> np.ndarray:
    """Conservative second-order discretisation of the weighted Laplacian."""
    field = np.asarray(field, dtype=float)
    if field.shape != (len(grid),):
        raise GeometryError(f"field has shape {field.shape}, grid has {len(grid)} nodes")
    if grid.manifold != manifold:
        raise GeometryError("grid was built for a different manifold")
    return flux_divergence(grid, field) / grid.volumes


def centered_gradient(grid: Grid1D, field) -> np.ndarray:
    """Centered radial derivative; endpoints are set to zero (pole symmetry or
    zero flux)."""
    field = np.asarray(field, dtype=float)
    out = np.zeros_like(field)
    out[1:-1] = (field[2:] - field[:-2]) / (2.0 * grid.h)
    return out


# ---------------------------------------------------------------------------
# curvature


def _coords(where) -> np.ndarray:
    return where.r if isinstance(where, Grid1D) else np.asarray(where, dtype=float)


def _check_N(manifold: ModelManifold, N: float) -> float:
    N = as_extended(N)
    if 1 < N < manifold.n:
        raise GeometryError(f"N={N} lies in the forbidden gap (1, {manifold.n})")
    if N == manifold.n and not manifold.weight.is_constant:
        raise GeometryError("N = n is only defined for a constant weight")
    return N


def _dpsi_squared_term(manifold, N, r):
    if N == INF or N == manifold.n:
        return np.zeros_like(r)
    return manifold.weight.dpsi(r) ** 2 / (N - manifold.n)


def radial_ricci(manifold: ModelManifold, N, grid) -> np.ndarray:
    """Ric_psi^N(d_r, d_r) = -(n-1) f''/f + psi'' - psi'^2/(N-n)."""
    N = _check_N(manifold, N)
    r = _coords(grid)
    n, wp = manifold.n, manifold.weight
    return -(n - 1) * manifold.warp.d2f_over_f(r) + wp.d2psi(r) - _dpsi_squared_term(manifold, N, r)


def tangential_ricci(manifold: ModelManifold, N, grid) -> np.ndarray:
    """Ric_psi^N on unit vectors tangent to the level spheres of r.

    Ric = -f''/f + (n-2)(1-f'^2)/f^2 and Hess psi = psi' f'/f there; dpsi
    vanishes on such vectors.  At a pole the Hessian term tends to psi''.
    """
    _check_N(manifold, N)
    r = _coords(grid)
    n, warp, wp = manifold.n, manifold.warp, manifold.weight
    f = warp.f(r)
    at_pole = np.isclose(f, 0.0, atol=1e-300)
    with np.errstate(divide="ignore", invalid="ignore"):
        hess = np.where(at_pole, wp.d2psi(r), wp.dpsi(r) * warp.df(r) / np.where(at_pole, 1.0, f))
    return -warp.d2f_over_f(r) + (n - 2) * warp.tangential_ratio(r) + hess


def min_ricci(manifold: ModelManifold, N, grid) -> np.ndarray:
    """Lower bound of Ric_psi^N over all unit directions (the tensor is diagonal
    in the radial/tangential frame)."""
    return np.minimum(radial_ricci(manifold, N, grid), tangential_ricci(manifold, N, grid))


def epsilon_range_contains(N, n: int, eps: float) -> bool:
    N = as_extended(N)
    if n < 2:
        raise GeometryError("n must be >= 2")
    if 1 < N < n:
        raise GeometryError(f"N={N} lies in the forbidden gap (1, {n})")
    if N == n:
        return True
    if N == 1:
        return eps == 0
    if N == INF:
        return abs(eps) <= 1.0
    return abs(eps) < math.sqrt((N - 1) / (N - n))


def c_const(n: int, N, eps: float) -> float:
    N = as_extended(N)
    if not epsilon_range_contains(N, n, eps):
        raise GeometryError(f"eps={eps} is outside the eps-range for N={N}")
    if N == 1 or N == n or eps == 0:
        return 1.0 / (n - 1)
    if eps in (1.0, -1.0) and N != INF:
        return 1.0 / (N - 1)  # (1 - (N-n)/(N-1))/(n-1), without rounding
    ratio = 1.0 if N == INF else (N - n) / (N - 1)
    c = (1.0 - eps**2 * ratio) / (n - 1)
    if c <= 0:
        raise GeometryError(f"c vanishes for N={N}, eps={eps}")
    return c


def _conformal_exponent(manifold: ModelManifold, eps: float) -> float:
    return -2.0 * (eps - 1.0) / (manifold.n - 1)


def _check_region(manifold: ModelManifold, region) -> tuple[float, float]:
    lo, hi = (float(x) for x in region)
    dlo, dhi = manifold.domain
    if hi < lo:
        raise GeometryError(f"empty region {region}")
    if lo < dlo - 1e-12 or hi > dhi + 1e-12:
        raise GeometryError(f"region {region} leaves the domain {manifold.domain}")
    return max(lo, dlo), min(hi, dhi)


def conformal_bounds(manifold: ModelManifold, eps: float, region, grid: Grid1D | None = None):
    """Tight (p1, p2) with p1 <= exp(-2(eps-1) psi/(n-1)) <= p2 on the region."""
    lo, hi = _check_region(manifold, region)
    pts = [lo, hi, *manifold.weight.critical_points(lo, hi)]
    if grid is not None:
        pts.extend(grid.r[grid.region_mask(lo, hi)])
    vals = np.exp(_conformal_exponent(manifold, eps) * manifold.weight.psi(np.asarray(pts)))
    return float(vals.min()), float(vals.max())


def admissible_K(
    manifold: ModelManifold,
    N,
    eps: float,
    region,
    grid: Grid1D | None = None,
    directions: str = "all",
) -> float:
    """Smallest K >= 0 with Ric_psi^N >= -K exp(4(eps-1) psi/(n-1)) on the region.

    The node maximum is polished by a bounded scalar search so that the bound
    also holds between nodes.
    """
    N = _check_N(manifold, N)
    if not epsilon_range_contains(N, manifold.n, eps):
        raise GeometryError(f"eps={eps} is outside the eps-range for N={N}")
    lo, hi = _check_region(manifold, region)
    ricci = {"all": min_ricci, "radial": radial_ricci}[directions]
    scale = 4.0 * (eps - 1.0) / (manifold.n - 1)

    def deficit(r):
        r = np.asarray(r, dtype=float)
        return -ricci(manifold, N, r) / np.exp(scale * manifold.weight.psi(r))

    r = grid.r[grid.region_mask(lo, hi)] if grid is not None else np.linspace(lo, hi, 4001)
    r = np.unique(np.concatenate((r, [lo, hi])))
    vals = deficit(r)
    best = float(vals.max())
    k = int(vals.argmax())
    a, b = r[max(k - 1, 0)], r[min(k + 1, len(r) - 1)]
    if b > a:
        res = minimize_scalar(lambda x: -float(deficit(x)), bounds=(a, b), method="bounded",
                              options={"xatol": 1e-13})
        best = max(best, -float(res.fun))
    return max(0.0, best)


# ---------------------------------------------------------------------------
# Bochner inequality


@dataclass(frozen=True)
class RadialField:
    """Smooth radial function with exact first and second derivatives."""

    value: Callable
    d1: Callable
    d2: Callable

    @classmethod
    def from_callables(cls, fns: Iterable[Callable]) -> "RadialField":
        value, d1, d2 = fns
        return cls(value, d1, d2)


def bochner_gap(manifold: ModelManifold, grid: Grid1D, N, test_field: RadialField) -> np.ndarray:
    """Discrete slack in the N-weighted Bochner inequality for a radial field.

    Returns Delta_psi(|du|^2/2) - <grad Delta_psi u, grad u> - Ric_psi^N(grad u)
    - (Delta_psi u)^2/N with both Laplacians and the outer gradient taken
    discretely.  The two nodes next to each end are NaN: their stencils see the
    zero-flux closure, which a generic test field does not satisfy.
    """
    N = as_extended(N)
    if 0 <= N <= 1:
        raise GeometryError(f"the Bochner inequality is not claimed for N={N} in [0, 1]")
    N = _check_N(manifold, N)
    r = grid.r
    du = np.asarray(test_field.d1(r), dtype=float) * np.ones_like(r)
    u = np.asarray(test_field.value(r), dtype=float) * np.ones_like(r)
    lap_g = weighted_laplacian(manifold, grid, 0.5 * du**2)
    lap_u = weighted_laplacian(manifold, grid, u)
    grad_lap_u = centered_gradient(grid, lap_u)
    gap = lap_g - du * grad_lap_u - radial_ricci(manifold, N, grid) * du**2
    if N != INF:
        gap = gap - lap_u**2 / N
    gap[:2] = np.nan
    gap[-2:] = np.nan
    return gap


def bochner_gap_exact(manifold: ModelManifold, N, test_field: RadialField, r) -> np.ndarray:
    """Closed-form Bochner slack: |Hess u|^2 + psi'^2 u'^2/(N-n) - (Delta_psi u)^2/N.

    Valid away from poles.
    """
    N = _check_N(manifold, N)
    r = np.asarray(r, dtype=float)
    du, d2u = test_field.d1(r), test_field.d2(r)
    with np.errstate(divide="ignore", invalid="ignore"):
        tang = manifold.warp.df(r) / manifold.warp.f(r) * du
        lap = d2u + manifold.laplacian_of_distance(r) * du
    hess_sq = d2u**2 + (manifold.n - 1) * tang**2
    gap = hess_sq + _dpsi_squared_term(manifold, N, r) * du**2
    if N != INF:
        gap = gap - lap**2 / N
    return gap
