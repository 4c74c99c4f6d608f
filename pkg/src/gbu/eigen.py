"""First Dirichlet eigenpair of -Laplacian, normalized to unit mass, and the eigen-mass functional.

The eigenfunction phi_1 is normalized by integral(phi_1) = 1; the functional
integral(u * phi_1) drives the mass-growth blowup mechanism and is evaluated
with trapezoidal quadrature (radial Jacobian 2*pi*r on the disk).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .geometry import Disk, Field, Grid, Interval, Rectangle, require_same_grid
from .operators import LinearSolveError, conjugate_gradient, dirichlet_operator

__all__ = [
    "EigenPair",
    "analytic_eigenpair",
    "numeric_eigenpair",
    "eigen_mass",
    "eigen_distance_bounds",
    "bessel_j0",
    "bessel_j1",
    "first_j0_zero",
]


@dataclass
class EigenPair:
    """Eigenfunction snapshot, eigenvalue, and the residual of the unit-mass normalization."""

    phi1: Field
    lambda1: float
    normalization_residual: float


def bessel_j0(z: float) -> float:
    """J0 by its power series, truncated when terms drop below 1e-16.

    Accurate for |z| <= 8, which covers every radius this package meets; no
    external special-function dependency needed.
    """
    q = 0.25 * z * z
    term = 1.0
    total = 1.0
    k = 0
    while abs(term) > 1e-16:
        k += 1
        term *= -q / (k * k)
        total += term
    return total


def bessel_j1(z: float) -> float:
    """J1 by its power series, same truncation policy as J0."""
    q = 0.25 * z * z
    term = 1.0
    total = 1.0
    k = 0
    while abs(term) > 1e-16:
        k += 1
        term *= -q / (k * (k + 1))
        total += term
    return 0.5 * z * total


@lru_cache(maxsize=1)
def first_j0_zero() -> float:
    """First positive zero of J0 by bisection on [2, 3]."""
    lo, hi = 2.0, 3.0
    flo = bessel_j0(lo)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        fmid = bessel_j0(mid)
        if fmid == 0.0 or hi - lo < 1e-15:
            return mid
        if flo * fmid < 0:
            hi = mid
        else:
            lo, flo = mid, fmid
    return 0.5 * (lo + hi)


def analytic_eigenpair(grid: Grid) -> EigenPair:
    """Closed-form first Dirichlet eigenpair sampled on the grid.

    Interval (a,b): amplitude-scaled sine, lambda_1 = (pi/L)^2.
    Disk radius R (planar): c * J0(j01 r / R), lambda_1 = (j01/R)^2.
    Rectangle: product of sines, lambda_1 = pi^2 (1/Lx^2 + 1/Ly^2).
    The amplitude is fixed by the exact unit-mass condition, so the stored
    normalization residual is the closed form's floating-point defect.
    """
    domain = grid.domain
    if isinstance(domain, Interval):
        length = domain.b - domain.a
        lam = (math.pi / length) ** 2
        amp = math.pi / (2.0 * length)
        values = amp * np.sin(math.pi * (grid.axes[0] - domain.a) / length)
        exact_mass = amp * 2.0 * length / math.pi
    elif isinstance(domain, Disk):
        j01 = first_j0_zero()
        radius = domain.radius
        lam = (j01 / radius) ** 2
        j1 = bessel_j1(j01)
        amp = j01 / (2.0 * math.pi * radius**2 * j1)
        values = amp * np.array([bessel_j0(j01 * r / radius) for r in grid.axes[0]])
        exact_mass = amp * 2.0 * math.pi * radius**2 * j1 / j01
    else:
        lx, ly = domain.lx, domain.ly
        lam = math.pi**2 * (1.0 / lx**2 + 1.0 / ly**2)
        amp = math.pi**2 / (4.0 * lx * ly)
        sx = np.sin(math.pi * grid.axes[0] / lx)
        sy = np.sin(math.pi * grid.axes[1] / ly)
        values = amp * np.outer(sx, sy)
        exact_mass = amp * (2.0 * lx / math.pi) * (2.0 * ly / math.pi)
    values = np.where(grid.boundary_mask, 0.0, values)
    return EigenPair(Field(grid, values), lam, abs(exact_mass - 1.0))


def numeric_eigenpair(grid: Grid, tol: float = 1e-10, max_iter: int = 500) -> EigenPair:
    """Smallest Dirichlet eigenpair by inverse power iteration on the discrete Laplacian.

    Iterates A x = M v with CG inner solves (M is the finite-volume mass on
    the radial grid, identity otherwise) until the Rayleigh quotient moves
    less than ``tol``; the eigenvector is rescaled to unit discrete mass.
    """
    if tol <= 0:
        raise ValueError(f"tol must be positive, got {tol}")
    op = dirichlet_operator(grid)
    mass = op.mass if grid.radial else None
    rng_free = np.ones(op.n_unknowns)
    x = rng_free / np.linalg.norm(rng_free)
    lam_old = math.inf
    lam = math.inf
    for iteration in range(max_iter):
        b = mass * x if mass is not None else x
        try:
            y = conjugate_gradient(op.apply, b, rtol=1e-12)
        except LinearSolveError as err:
            raise LinearSolveError(
                f"inverse iteration solve failed at step {iteration}: {err}", err.residual
            ) from err
        y /= np.linalg.norm(y)
        ay = op.apply(y)
        num = float(y @ ay)
        den = float(y @ (mass * y)) if mass is not None else 1.0
        lam = num / den
        if abs(lam - lam_old) < tol:
            x = y
            break
        lam_old = lam
        x = y
    else:
        raise LinearSolveError(
            f"inverse power iteration did not converge in {max_iter} iterations "
            f"(last Rayleigh change {abs(lam - lam_old):.3e})",
            residual=abs(lam - lam_old),
        )
    if x.sum() < 0:
        x = -x
    full = op.embed(x)
    phi = Field(grid, full)
    discrete_mass = float((grid.quadrature_weights * phi.values).sum())
    phi.values /= discrete_mass
    residual = abs(float((grid.quadrature_weights * phi.values).sum()) - 1.0)
    return EigenPair(phi, lam, residual)


def eigen_mass(u: Field, ep: EigenPair) -> float:
    """Trapezoidal quadrature of u * phi_1 (disk weights carry 2*pi*r)."""
    require_same_grid(u, ep.phi1)
    return float((u.grid.quadrature_weights * u.values * ep.phi1.values).sum())


def eigen_distance_bounds(ep: EigenPair, grid: Grid) -> tuple[float, float]:
    """Extremes of phi_1 / distance-to-boundary over interior nodes.

    Returns (c1, c2) with c1 * delta <= phi_1 <= c2 * delta on the sampled
    interior; both are positive for the Perron eigenfunction.
    """
    interior = grid.interior_mask
    if not interior.any():
        raise ValueError("grid has no interior nodes")
    ratio = ep.phi1.values[interior] / grid.delta[interior]
    return float(ratio.min()), float(ratio.max())
