"""Discrete differential operators and the conjugate-gradient kernel.

Internal plumbing shared by the eigenpair, solver, and diagnostics modules.
All operators act on value arrays shaped like their grid; Dirichlet data is
handled by the callers (boundary rows are never unknowns here).
"""

from __future__ import annotations

import numpy as np

from .geometry import Disk, Grid, Interval, Rectangle

__all__ = [
    "laplacian",
    "upwind_descent_slopes",
    "upwind_magnitude",
    "max_one_sided_slope",
    "centered_gradient",
    "LinearSolveError",
    "conjugate_gradient",
    "dirichlet_operator",
]


class LinearSolveError(RuntimeError):
    """Raised when an iterative linear solve fails to reach its tolerance."""

    def __init__(self, message: str, residual: float):
        super().__init__(message)
        self.residual = residual


def laplacian(grid: Grid, u: np.ndarray, out: np.ndarray | None = None) -> np.ndarray:
    """Discrete Laplacian on interior nodes; boundary entries of the result are zero.

    Interval and rectangle use the standard 3- and 5-point stencils.  The
    radial grid uses u_rr + u_r/r with a ghost node enforcing u_r(0) = 0,
    which gives 4(u_1 - u_0)/h^2 at the center for the planar disk.
    """
    if out is None:
        out = np.zeros_like(u)
    else:
        out[...] = 0.0
    if isinstance(grid.domain, Interval):
        h2 = grid.h[0] ** 2
        out[1:-1] = (u[:-2] - 2.0 * u[1:-1] + u[2:]) / h2
        return out
    if isinstance(grid.domain, Disk):
        h = grid.h[0]
        r = grid.axes[0]
        out[1:-1] = (u[:-2] - 2.0 * u[1:-1] + u[2:]) / h**2 + (u[2:] - u[:-2]) / (
            2.0 * h * r[1:-1]
        )
        out[0] = 4.0 * (u[1] - u[0]) / h**2
        return out
    hx2 = grid.h[0] ** 2
    hy2 = grid.h[1] ** 2
    out[1:-1, 1:-1] = (u[:-2, 1:-1] - 2.0 * u[1:-1, 1:-1] + u[2:, 1:-1]) / hx2 + (
        u[1:-1, :-2] - 2.0 * u[1:-1, 1:-1] + u[1:-1, 2:]
    ) / hy2
    return out


def upwind_descent_slopes(grid: Grid, u: np.ndarray) -> list[np.ndarray]:
    """Per-axis monotone upwind slope max(D-u, 0, -D+u) on interior nodes.

    This is the Rouy-Tourin pick: at each node the larger of the two descents
    toward its neighbors, clipped at zero.  Returned arrays are zero on
    boundary entries.
    """
    slopes = []
    if isinstance(grid.domain, (Interval, Disk)):
        h = grid.h[0]
        m = np.zeros_like(u)
        np.maximum((u[1:-1] - u[:-2]) / h, (u[1:-1] - u[2:]) / h, out=m[1:-1])
        np.maximum(m[1:-1], 0.0, out=m[1:-1])
        if isinstance(grid.domain, Disk):
            # ghost node u[-1] = u[1] at the center
            m[0] = max((u[0] - u[1]) / h, 0.0)
        slopes.append(m)
        return slopes
    hx, hy = grid.h
    mx = np.zeros_like(u)
    np.maximum(
        (u[1:-1, 1:-1] - u[:-2, 1:-1]) / hx,
        (u[1:-1, 1:-1] - u[2:, 1:-1]) / hx,
        out=mx[1:-1, 1:-1],
    )
    np.maximum(mx[1:-1, 1:-1], 0.0, out=mx[1:-1, 1:-1])
    my = np.zeros_like(u)
    np.maximum(
        (u[1:-1, 1:-1] - u[1:-1, :-2]) / hy,
        (u[1:-1, 1:-1] - u[1:-1, 2:]) / hy,
        out=my[1:-1, 1:-1],
    )
    np.maximum(my[1:-1, 1:-1], 0.0, out=my[1:-1, 1:-1])
    return [mx, my]


def upwind_magnitude(grid: Grid, u: np.ndarray) -> np.ndarray:
    """Rouy-Tourin gradient magnitude sqrt(sum of squared per-axis upwind slopes)."""
    slopes = upwind_descent_slopes(grid, u)
    if len(slopes) == 1:
        return slopes[0]
    return np.sqrt(slopes[0] ** 2 + slopes[1] ** 2)


def max_one_sided_slope(grid: Grid, u: np.ndarray) -> float:
    """Largest one-sided difference magnitude over all axes and node pairs."""
    s = 0.0
    if isinstance(grid.domain, (Interval, Disk)):
        s = float(np.abs(np.diff(u)).max()) / grid.h[0]
        return s
    sx = float(np.abs(np.diff(u, axis=0)).max()) / grid.h[0]
    sy = float(np.abs(np.diff(u, axis=1)).max()) / grid.h[1]
    return max(sx, sy)


def _centered_axis(u: np.ndarray, h: float, axis: int) -> np.ndarray:
    """Second-order first derivative along one axis, one-sided at the ends."""
    g = np.empty_like(u)
    um = np.moveaxis(u, axis, 0)
    gm = np.moveaxis(g, axis, 0)
    gm[1:-1] = (um[2:] - um[:-2]) / (2.0 * h)
    gm[0] = (-3.0 * um[0] + 4.0 * um[1] - um[2]) / (2.0 * h)
    gm[-1] = (3.0 * um[-1] - 4.0 * um[-2] + um[-3]) / (2.0 * h)
    return g


def centered_gradient(grid: Grid, u: np.ndarray) -> np.ndarray:
    """Centered-difference gradient magnitude, one-sided second order at the boundary."""
    if isinstance(grid.domain, Interval):
        return np.abs(_centered_axis(u, grid.h[0], 0))
    if isinstance(grid.domain, Disk):
        g = _centered_axis(u, grid.h[0], 0)
        g[0] = 0.0  # radial symmetry: u_r(0) = 0 exactly
        return np.abs(g)
    gx = _centered_axis(u, grid.h[0], 0)
    gy = _centered_axis(u, grid.h[1], 1)
    return np.sqrt(gx**2 + gy**2)


def conjugate_gradient(apply_a, b: np.ndarray, rtol: float = 1e-10, max_iter: int | None = None):
    """Plain CG for an SPD operator given as a callable; raises on non-convergence."""
    b = np.asarray(b, dtype=float)
    bnorm = float(np.linalg.norm(b))
    x = np.zeros_like(b)
    if bnorm == 0.0:
        return x
    if max_iter is None:
        max_iter = max(200, 20 * b.size)
    r = b.copy()
    p = r.copy()
    rs = float(r @ r)
    for _ in range(max_iter):
        ap = apply_a(p)
        alpha = rs / float(p @ ap)
        x += alpha * p
        r -= alpha * ap
        rs_new = float(r @ r)
        if np.sqrt(rs_new) <= rtol * bnorm:
            return x
        p = r + (rs_new / rs) * p
        rs = rs_new
    raise LinearSolveError(
        f"CG did not reach rtol={rtol} in {max_iter} iterations "
        f"(relative residual {np.sqrt(rs) / bnorm:.3e})",
        residual=np.sqrt(rs) / bnorm,
    )


class dirichlet_operator:
    """Symmetric positive-definite form of -Laplacian on interior unknowns.

    Interval and rectangle use the plain stencils, which are already
    symmetric.  The radial grid uses the finite-volume form -(r u')' with
    cell masses, which symmetrizes the 1/r drift; its ``mass`` array converts
    pointwise right-hand sides into the weighted system, and the generalized
    eigenproblem A x = lambda M x reproduces the radial Laplacian spectrum.
    """

    def __init__(self, grid: Grid):
        self.grid = grid
        if isinstance(grid.domain, Rectangle):
            self._ni = (grid.shape[0] - 2, grid.shape[1] - 2)
        else:
            self._ni = (grid.shape[0] - 1,) if grid.radial else (grid.shape[0] - 2,)
        if grid.radial:
            h = grid.h[0]
            r = grid.axes[0]
            n = self._ni[0]  # unknowns r_0 .. r_{n-1}, Dirichlet at r_n = R
            r_half = r[:n] + 0.5 * h  # r_{i+1/2}, i = 0..n-1
            self._wr = r_half / h**2
            mass = np.empty(n)
            mass[0] = h**2 / 8.0
            mass[1:] = r[1:n] * h
            self.mass = mass

    @property
    def n_unknowns(self) -> int:
        return int(np.prod(self._ni))

    def interior_values(self, full: np.ndarray) -> np.ndarray:
        if isinstance(self.grid.domain, Rectangle):
            return full[1:-1, 1:-1].ravel().copy()
        if self.grid.radial:
            return full[:-1].copy()
        return full[1:-1].copy()

    def embed(self, x: np.ndarray, boundary: np.ndarray | float = 0.0) -> np.ndarray:
        full = np.zeros(self.grid.shape)
        bfull = np.broadcast_to(np.asarray(boundary, dtype=float), self.grid.shape)
        full[self.grid.boundary_mask] = bfull[self.grid.boundary_mask]
        if isinstance(self.grid.domain, Rectangle):
            full[1:-1, 1:-1] = x.reshape(self._ni)
        elif self.grid.radial:
            full[:-1] = x
        else:
            full[1:-1] = x
        return full

    def apply(self, x: np.ndarray) -> np.ndarray:
        grid = self.grid
        if isinstance(grid.domain, Interval):
            h2 = grid.h[0] ** 2
            out = 2.0 * x / h2
            out[:-1] -= x[1:] / h2
            out[1:] -= x[:-1] / h2
            return out
        if grid.radial:
            w = self._wr
            out = np.empty_like(x)
            # flux form: row i couples to i-1 with -w[i-1] and to i+1 with -w[i]
            out[0] = w[0] * (x[0] - x[1])
            out[1:-1] = w[0:-2] * (x[1:-1] - x[:-2]) + w[1:-1] * (x[1:-1] - x[2:])
            out[-1] = w[-2] * (x[-1] - x[-2]) + w[-1] * x[-1]
            return out
        nx, ny = self._ni
        v = x.reshape(nx, ny)
        hx2, hy2 = grid.h[0] ** 2, grid.h[1] ** 2
        out = (2.0 / hx2 + 2.0 / hy2) * v
        out[:-1, :] -= v[1:, :] / hx2
        out[1:, :] -= v[:-1, :] / hx2
        out[:, :-1] -= v[:, 1:] / hy2
        out[:, 1:] -= v[:, :-1] / hy2
        return out.ravel()

    def rhs(self, f_interior: np.ndarray, boundary: np.ndarray | float = 0.0) -> np.ndarray:
        """Right-hand side with Dirichlet data folded in.

        ``f_interior`` is the pointwise source on interior nodes (flattened for
        the rectangle); ``boundary`` is a scalar or an array shaped like the
        grid holding boundary values (interior entries ignored).
        """
        grid = self.grid
        bfull = np.broadcast_to(np.asarray(boundary, dtype=float), grid.shape)
        if isinstance(grid.domain, Interval):
            h2 = grid.h[0] ** 2
            b = np.array(f_interior, dtype=float)
            b[0] += bfull[0] / h2
            b[-1] += bfull[-1] / h2
            return b
        if grid.radial:
            b = self.mass * np.asarray(f_interior, dtype=float)
            b[-1] += self._wr[-1] * bfull[-1]
            return b
        nx, ny = self._ni
        hx2, hy2 = grid.h[0] ** 2, grid.h[1] ** 2
        b = np.array(f_interior, dtype=float).reshape(nx, ny).copy()
        b[0, :] += bfull[0, 1:-1] / hx2
        b[-1, :] += bfull[-1, 1:-1] / hx2
        b[:, 0] += bfull[1:-1, 0] / hy2
        b[:, -1] += bfull[1:-1, -1] / hy2
        return b.ravel()
