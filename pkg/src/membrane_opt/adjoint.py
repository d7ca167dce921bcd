"""Adjoint state, sensitivities, and the reduced gradient.

At a converged state u the linearized operator is -lap + beta'(u), which
is self-adjoint, so a single solve

    -lap p + beta'(u) p = u - z,      p = 0 on the ring,

yields the adjoint p, and the reduced gradient of the tracking objective
is the nodal field p + lambda*phi.  The sensitivity of the state map in a
direction psi solves the same operator with right-hand side psi.
"""

from __future__ import annotations

from dataclasses import dataclass

from .field import (
    BoundaryData,
    ScalarField,
    apply_laplacian,
    l2_norm,
    solve_spd,
)
from .regularization import Smoother, beta_prime
from .state import ProblemData

__all__ = ["AdjointSolution", "solve_adjoint", "solve_sensitivity", "reduced_gradient"]


@dataclass
class AdjointSolution:
    """Adjoint field (zero ring) with its achieved residual."""

    p: ScalarField
    residual: float


def solve_adjoint(
    u: ScalarField,
    z: ScalarField,
    data: ProblemData,
    s: Smoother,
    tol: float = 1e-11,
) -> AdjointSolution:
    """Solve -lap p + beta'(u) p = u - z with a zero Dirichlet ring."""
    grid = data.grid
    if u.grid != grid or z.grid != grid:
        raise ValueError("solve_adjoint: fields live on different grids")
    bp = beta_prime(s, u, data.fp, data.fm)
    rhs = ScalarField(grid, u.values - z.values)
    p = solve_spd(bp, rhs, BoundaryData.zeros(grid), tol=tol)
    res = ScalarField(
        grid, -apply_laplacian(p).values + bp.values * p.values - rhs.values
    )
    res.values[grid.boundary_indices()] = 0.0
    return AdjointSolution(p, l2_norm(res))


def solve_sensitivity(
    u: ScalarField,
    psi: ScalarField,
    data: ProblemData,
    s: Smoother,
    tol: float = 1e-11,
) -> ScalarField:
    """Directional state sensitivity: solve (-lap + beta'(u)) xi = psi, xi = 0 on the ring."""
    grid = data.grid
    if u.grid != grid or psi.grid != grid:
        raise ValueError("solve_sensitivity: fields live on different grids")
    bp = beta_prime(s, u, data.fp, data.fm)
    return solve_spd(bp, psi, BoundaryData.zeros(grid), tol=tol)


def reduced_gradient(phi: ScalarField, p: ScalarField, lam: float) -> ScalarField:
    """Nodal L2 Riesz representative of the objective derivative: p + lam*phi."""
    if phi.grid != p.grid:
        raise ValueError("reduced_gradient: fields live on different grids")
    return ScalarField(phi.grid, p.values + lam * phi.values)
