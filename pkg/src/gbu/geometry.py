"""Domains, grids, scalar fields, the boundary distance function, and interior tangent balls.

Three domain shapes are supported: an interval (a, b), a disk of radius R
centered at the origin (solved in radial coordinates), and an axis-aligned
rectangle (0, Lx) x (0, Ly).  All geometry objects are immutable after
construction and safe to share between concurrent solver runs.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

__all__ = [
    "Interval",
    "Disk",
    "Rectangle",
    "Domain",
    "Grid",
    "Field",
    "build_grid",
    "distance_to_boundary",
    "interior_tangent_ball",
]

_EDGE_TOL = 1e-12


@dataclass(frozen=True)
class Interval:
    """One-dimensional domain (a, b)."""

    a: float
    b: float

    def __post_init__(self):
        if not self.b > self.a:
            raise ValueError(f"interval requires b > a, got a={self.a}, b={self.b}")

    @property
    def dim(self) -> int:
        return 1

    @property
    def inradius(self) -> float:
        return 0.5 * (self.b - self.a)

    def distance(self, x) -> float:
        x = float(np.asarray(x).reshape(()))
        d = min(x - self.a, self.b - x)
        if d < -_EDGE_TOL * max(1.0, self.b - self.a):
            raise ValueError(f"point {x} lies outside [{self.a}, {self.b}]")
        return max(d, 0.0)


@dataclass(frozen=True)
class Disk:
    """Disk of given radius centered at the origin, treated radially (n = 2)."""

    radius: float

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError(f"disk radius must be positive, got {self.radius}")

    @property
    def dim(self) -> int:
        return 2

    @property
    def inradius(self) -> float:
        return self.radius

    def distance(self, x) -> float:
        p = np.atleast_1d(np.asarray(x, dtype=float))
        r = float(np.linalg.norm(p)) if p.size > 1 else abs(float(p[0]))
        d = self.radius - r
        if d < -_EDGE_TOL * max(1.0, self.radius):
            raise ValueError(f"point {x} lies outside the disk of radius {self.radius}")
        return max(d, 0.0)


@dataclass(frozen=True)
class Rectangle:
    """Axis-aligned rectangle (0, lx) x (0, ly)."""

    lx: float
    ly: float

    def __post_init__(self):
        if not (self.lx > 0 and self.ly > 0):
            raise ValueError(f"rectangle sides must be positive, got {self.lx} x {self.ly}")

    @property
    def dim(self) -> int:
        return 2

    @property
    def inradius(self) -> float:
        return 0.5 * min(self.lx, self.ly)

    def distance(self, x) -> float:
        p = np.asarray(x, dtype=float).reshape(2)
        d = min(p[0], self.lx - p[0], p[1], self.ly - p[1])
        if d < -_EDGE_TOL * max(1.0, self.lx, self.ly):
            raise ValueError(f"point {tuple(p)} lies outside the rectangle {self.lx} x {self.ly}")
        return max(d, 0.0)

    def edge_distances(self, x) -> np.ndarray:
        """Distances to the four edges in order (left, right, bottom, top)."""
        p = np.asarray(x, dtype=float).reshape(2)
        return np.array([p[0], self.lx - p[0], p[1], self.ly - p[1]])


Domain = Interval | Disk | Rectangle


def distance_to_boundary(domain: Domain, x) -> float:
    """Exact Euclidean distance from x to the boundary; zero iff x is on it."""
    return domain.distance(x)


def interior_tangent_ball(domain: Domain, x0, rho: float):
    """Center x1 of the ball of radius rho inside the domain tangent to the boundary at x0.

    The ball touches the boundary only at x0, which requires rho below the
    inradius (below R/2 for the disk so the tangency is unique) and, on a
    rectangle, x0 away from corners by more than rho.
    """
    if not rho > 0:
        raise ValueError(f"rho must be positive, got {rho}")
    if isinstance(domain, Interval):
        x0 = float(np.asarray(x0).reshape(()))
        if abs(x0 - domain.a) > _EDGE_TOL and abs(x0 - domain.b) > _EDGE_TOL:
            raise ValueError(f"x0={x0} is not a boundary point of ({domain.a}, {domain.b})")
        if rho >= domain.inradius:
            raise ValueError(f"rho={rho} is not below the inradius {domain.inradius}")
        return x0 + rho if abs(x0 - domain.a) <= _EDGE_TOL else x0 - rho
    if isinstance(domain, Disk):
        p = np.asarray(x0, dtype=float).reshape(-1)
        r = float(np.linalg.norm(p))
        if abs(r - domain.radius) > _EDGE_TOL * max(1.0, domain.radius):
            raise ValueError(f"x0={x0} is not on the circle of radius {domain.radius}")
        if rho >= 0.5 * domain.radius:
            raise ValueError(f"rho={rho} must be below R/2={0.5 * domain.radius} for the disk")
        return p * (1.0 - rho / domain.radius)
    p = np.asarray(x0, dtype=float).reshape(2)
    ed = domain.edge_distances(p)
    on_edge = ed <= _EDGE_TOL * max(1.0, domain.lx, domain.ly)
    if not on_edge.any():
        raise ValueError(f"x0={tuple(p)} is not a boundary point of the rectangle")
    if on_edge.sum() > 1:
        raise ValueError(f"x0={tuple(p)} is a rectangle corner; the normal is undefined there")
    if rho >= domain.inradius:
        raise ValueError(f"rho={rho} is not below the inradius {domain.inradius}")
    inward = {
        0: np.array([1.0, 0.0]),
        1: np.array([-1.0, 0.0]),
        2: np.array([0.0, 1.0]),
        3: np.array([0.0, -1.0]),
    }[int(np.argmax(on_edge))]
    x1 = p + rho * inward
    others = np.delete(domain.edge_distances(x1), int(np.argmax(on_edge)))
    if others.min() <= rho + _EDGE_TOL:
        raise ValueError(
            f"ball of radius {rho} at x0={tuple(p)} touches another edge "
            f"(nearest other-edge distance {others.min():.3g})"
        )
    return x1


@dataclass
class Grid:
    """Uniform lattice covering the closure of a domain.

    For the interval and the rectangle the nodes are tensor lattices with
    spacing (b - a)/(n_interior + 1) per axis.  The disk is reduced to a 1-D
    radial grid on [0, R]; only the node at r = R is a boundary node and the
    center carries the symmetry condition u_r(0) = 0.
    """

    domain: Domain
    n_interior: int
    axes: tuple[np.ndarray, ...] = field(repr=False)
    h: tuple[float, ...]
    boundary_mask: np.ndarray = field(repr=False)

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(ax.size for ax in self.axes)

    @property
    def node_count(self) -> int:
        return int(np.prod(self.shape))

    @property
    def h_min(self) -> float:
        return min(self.h)

    @property
    def radial(self) -> bool:
        return isinstance(self.domain, Disk)

    @cached_property
    def interior_mask(self) -> np.ndarray:
        return ~self.boundary_mask

    @cached_property
    def delta(self) -> np.ndarray:
        """Distance to the boundary at every node."""
        if isinstance(self.domain, Interval):
            x = self.axes[0]
            return np.minimum(x - self.domain.a, self.domain.b - x)
        if isinstance(self.domain, Disk):
            return self.domain.radius - self.axes[0]
        x, y = np.meshgrid(self.axes[0], self.axes[1], indexing="ij")
        return np.minimum.reduce([x, self.domain.lx - x, y, self.domain.ly - y])

    @cached_property
    def quadrature_weights(self) -> np.ndarray:
        """Trapezoidal weights per node; the disk includes the 2*pi*r Jacobian."""
        def trapz_1d(ax, h):
            w = np.full(ax.size, h)
            w[0] = w[-1] = 0.5 * h
            return w

        if isinstance(self.domain, Interval):
            return trapz_1d(self.axes[0], self.h[0])
        if isinstance(self.domain, Disk):
            return trapz_1d(self.axes[0], self.h[0]) * 2.0 * np.pi * self.axes[0]
        wx = trapz_1d(self.axes[0], self.h[0])
        wy = trapz_1d(self.axes[1], self.h[1])
        return np.outer(wx, wy)

    @cached_property
    def cfl_diffusion_bound(self) -> float:
        """Largest diagonal magnitude of the discrete Laplacian (for the time step)."""
        if isinstance(self.domain, Interval):
            return 2.0 / self.h[0] ** 2
        if isinstance(self.domain, Disk):
            return 4.0 / self.h[0] ** 2
        return 2.0 / self.h[0] ** 2 + 2.0 / self.h[1] ** 2

    def refine(self) -> "Grid":
        """Grid with the spacing halved (n_interior -> 2*n_interior + 1)."""
        return build_grid(self.domain, 2 * self.n_interior + 1)

    def zeros_field(self, time: float = 0.0) -> "Field":
        return Field(self, np.zeros(self.shape), time)


def build_grid(domain: Domain, n_interior: int) -> Grid:
    """Uniform grid with n_interior interior nodes per axis."""
    if n_interior < 3:
        raise ValueError(f"n_interior must be at least 3, got {n_interior}")
    n = int(n_interior)
    if isinstance(domain, Interval):
        h = (domain.b - domain.a) / (n + 1)
        x = domain.a + h * np.arange(n + 2)
        mask = np.zeros(n + 2, dtype=bool)
        mask[0] = mask[-1] = True
        return Grid(domain, n, (x,), (h,), mask)
    if isinstance(domain, Disk):
        h = domain.radius / (n + 1)
        r = h * np.arange(n + 2)
        mask = np.zeros(n + 2, dtype=bool)
        mask[-1] = True
        return Grid(domain, n, (r,), (h,), mask)
    hx = domain.lx / (n + 1)
    hy = domain.ly / (n + 1)
    x = hx * np.arange(n + 2)
    y = hy * np.arange(n + 2)
    mask = np.zeros((n + 2, n + 2), dtype=bool)
    mask[0, :] = mask[-1, :] = mask[:, 0] = mask[:, -1] = True
    return Grid(domain, n, (x, y), (hx, hy), mask)


@dataclass
class Field:
    """Scalar grid function at one time instant."""

    grid: Grid
    values: np.ndarray
    time: float = 0.0

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != self.grid.shape:
            raise ValueError(
                f"field shape {self.values.shape} does not match grid shape {self.grid.shape}"
            )
        if not np.all(np.isfinite(self.values)):
            raise ValueError("field values must be finite")
        if self.time < 0:
            raise ValueError(f"field time must be nonnegative, got {self.time}")

    def copy(self, time: float | None = None) -> "Field":
        return Field(self.grid, self.values.copy(), self.time if time is None else time)

    def sup(self) -> float:
        return float(np.abs(self.values).max())


def require_same_grid(a: Field, b: Field) -> None:
    if a.grid is not b.grid and (
        a.grid.shape != b.grid.shape or a.grid.h != b.grid.h or a.grid.domain != b.grid.domain
    ):
        raise ValueError("fields live on different grids")


def require_class_x(u0: Field, tol: float = 1e-12) -> None:
    """Check membership in the admissible initial-data class: u0 >= 0, zero on the boundary."""
    if u0.values.min() < -tol:
        raise ValueError(f"initial data must be nonnegative (min {u0.values.min():.3g})")
    bvals = u0.values[u0.grid.boundary_mask]
    if bvals.size and np.abs(bvals).max() > tol:
        raise ValueError(
            f"initial data must vanish on the boundary (max |boundary value| {np.abs(bvals).max():.3g})"
        )
