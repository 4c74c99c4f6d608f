"""The gradient nonlinearity |grad u|^p, its quadratic-growth capping, and discrete gradients.

The capped form min(s^p, cap^(p-2) * s^2) agrees with s^p for s <= cap and
grows at most quadratically beyond, which is what makes the regularized
evolution globally classical and the capped problems increase monotonically
toward the uncapped one.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import Field
from .operators import centered_gradient, upwind_magnitude

__all__ = [
    "HamiltonianParams",
    "hamiltonian_value",
    "hamiltonian_lipschitz",
    "upwind_gradient_magnitude",
    "centered_gradient_magnitude",
]


@dataclass(frozen=True)
class HamiltonianParams:
    """Exponent p > 2 and optional quadratic-growth cap level.

    ``cap=None`` is the uncapped power s^p.  ``allow_subcritical`` admits
    p <= 2 for sanity runs only; gradient blowup does not occur there.
    """

    p: float
    cap: int | None = None
    allow_subcritical: bool = False

    def __post_init__(self):
        if self.p <= 2 and not self.allow_subcritical:
            raise ValueError(
                f"exponent p must exceed 2 (got p={self.p}); "
                "set allow_subcritical=True for sanity runs outside the theory"
            )
        if self.p <= 0:
            raise ValueError(f"exponent p must be positive, got {self.p}")
        if self.cap is not None and self.cap < 1:
            raise ValueError(f"cap level must be a positive integer, got {self.cap}")

    def with_cap(self, cap: int | None) -> "HamiltonianParams":
        return HamiltonianParams(self.p, cap, self.allow_subcritical)


def hamiltonian_value(s, params: HamiltonianParams):
    """min(s^p, cap^(p-2) s^2) for s >= 0; plain s^p when no cap is set."""
    arr = np.asarray(s, dtype=float)
    if np.any(arr < 0):
        raise ValueError("gradient magnitude must be nonnegative")
    power = arr**params.p
    if params.cap is None:
        out = power
    else:
        out = np.minimum(power, float(params.cap) ** (params.p - 2.0) * arr**2)
    return float(out) if np.isscalar(s) or out.ndim == 0 else out


def hamiltonian_lipschitz(s_max: float, params: HamiltonianParams) -> float:
    """Sharp upper bound for the slope of the nonlinearity on [0, s_max].

    Below the cap the derivative is p*s^(p-1); past it the quadratic branch
    contributes 2*cap^(p-2)*s.  The value is the maximum the derivative
    actually attains on the interval, so it feeds the time-step bound without
    penalizing runs whose gradients sit far below the cap.
    """
    if s_max < 0:
        raise ValueError(f"s_max must be nonnegative, got {s_max}")
    p = params.p
    if params.cap is None or s_max <= params.cap:
        return p * s_max ** (p - 1.0)
    cap = float(params.cap)
    return max(p * cap ** (p - 1.0), 2.0 * cap ** (p - 2.0) * s_max)


def upwind_gradient_magnitude(u: Field, node) -> float:
    """Monotone upwind gradient magnitude at one interior node.

    Per axis the scheme takes max(D-u, 0, -D+u) with one-sided differences,
    then the Euclidean norm across axes.  With the source +H(|grad u|) this
    pick keeps the explicit update monotone under the solver's step bound.
    """
    idx = _node_index(u, node)
    if u.grid.boundary_mask[idx]:
        raise ValueError(f"node {node} is a boundary node")
    return float(upwind_magnitude(u.grid, u.values)[idx])


def centered_gradient_magnitude(u: Field, node) -> float:
    """Second-order gradient magnitude at a node, one-sided at the boundary.

    Diagnostics only: profile fits and weighted gradient ratios want the
    second-order value, not the monotone upwind pick.
    """
    idx = _node_index(u, node)
    return float(centered_gradient(u.grid, u.values)[idx])


def _node_index(u: Field, node):
    if np.ndim(node) == 0:
        return int(node)
    return tuple(int(k) for k in np.asarray(node).ravel())
