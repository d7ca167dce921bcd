"""Two-phase membrane states: regularized solves, the eps -> 0 limit,
the one-phase specialization, obstacle recovery, and free boundaries.

The regularized state equation in partition-of-unity form,

    lap u = f_plus*chi(u) - f_minus*chi(-u) - phi,     u = g on the ring,

is the Euler-Lagrange equation of the convex energy

    I(v) = 1/2 |v|_{H1}^2 + (f_plus, Phi(v)) + (f_minus, Phi(-v)) - (phi, v),

so damped Newton with a backtracking line search on I is globally
convergent: the Newton direction solves an SPD system with diagonal
beta'(u) >= 0 and is a descent direction for I.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .field import (
    BoundaryData,
    Grid2D,
    ScalarField,
    SolverError,
    apply_laplacian,
    h1_norm,
    h1_seminorm_sq,
    harmonic_extension,
    l2_inner,
    l2_norm,
    solve_spd,
)
from .regularization import Smoother, beta, beta_prime, chi, chi_prime, phi_int

__all__ = [
    "ProblemData",
    "StateSolution",
    "FreeBoundaryLabels",
    "solve_state",
    "solve_state_limit",
    "solve_one_phase",
    "recover_obstacle",
    "free_boundary",
    "energy_two_phase",
    "smoothed_energy",
    "state_residual",
    "write_labels_csv",
]

_ARMIJO_C = 1e-4
_ALPHA_MIN = 2.0**-45


@dataclass
class ProblemData:
    """One state-equation instance: coefficients f+-, boundary data g, control phi."""

    grid: Grid2D
    fp: ScalarField
    fm: ScalarField
    g: BoundaryData
    phi: ScalarField

    def __post_init__(self) -> None:
        for name in ("fp", "fm", "phi"):
            f = getattr(self, name)
            if f.grid != self.grid:
                raise ValueError(f"ProblemData: {name} lives on a different grid")
        if self.fp.values.min() < 0.0:
            raise ValueError("ProblemData: f_plus must be nonnegative nodewise")
        if self.fm.values.min() < 0.0:
            raise ValueError("ProblemData: f_minus must be nonnegative nodewise")
        if self.g.values.size != self.grid.n_boundary:
            raise ValueError("ProblemData: boundary data does not match the grid ring")

    def with_phi(self, phi: ScalarField) -> "ProblemData":
        return replace(self, phi=phi)

    def phi_in_box(self, slack: float = 1e-12) -> bool:
        """Whether phi satisfies the admissible-box bounds -f_minus <= phi <= f_plus."""
        v = self.phi.values
        return bool(
            np.all(v <= self.fp.values + slack) and np.all(v >= -self.fm.values - slack)
        )


@dataclass
class StateSolution:
    """Converged state with iteration, residual, and energy diagnostics."""

    u: ScalarField
    newton_iters: int
    final_residual: float
    energy: float
    converged: bool = True
    energy_trace: list[float] = field(default_factory=list)


def state_residual(u: ScalarField, data: ProblemData, s: Smoother) -> ScalarField:
    """lap u - beta(u) + phi at interior nodes, zero on the ring."""
    vals = apply_laplacian(u).values - beta(s, u, data.fp, data.fm).values + data.phi.values
    vals[data.grid.boundary_indices()] = 0.0
    return ScalarField(data.grid, vals)


def smoothed_energy(u: ScalarField, data: ProblemData, s: Smoother) -> float:
    """Regularized energy I whose stationarity condition is the state equation."""
    g = data.grid
    pos = ScalarField(g, phi_int(s, u.values))
    neg = ScalarField(g, phi_int(s, -u.values))
    return (
        0.5 * h1_seminorm_sq(u)
        + l2_inner(data.fp, pos)
        + l2_inner(data.fm, neg)
        - l2_inner(data.phi, u)
    )


def _newton_solve(
    data: ProblemData,
    residual_fn,
    jacobian_fn,
    energy_fn,
    tol: float,
    max_newton: int,
    initial: ScalarField | None,
) -> StateSolution:
    """Damped Newton with an energy backtracking line search.

    residual_fn(u) returns the interior residual field F (zero ring),
    jacobian_fn(u) the nonnegative diagonal of the linearization, and
    energy_fn(u) the convex energy whose nodal gradient is -hx*hy*F.
    """
    if tol <= 0.0:
        raise ValueError("solve_state: tol must be positive")
    grid = data.grid
    lin_tol = max(1e-13, 0.05 * tol)
    if initial is None:
        u = harmonic_extension(data.g, grid, tol=lin_tol)
    else:
        if initial.grid != grid:
            raise ValueError("solve_state: initial iterate lives on a different grid")
        vals = initial.values.copy()
        vals[grid.boundary_indices()] = data.g.values
        u = ScalarField(grid, vals)

    bc0 = BoundaryData.zeros(grid)
    energy = energy_fn(u)
    trace = [energy]
    best_u, best_res = u, np.inf
    iters = 0
    for _ in range(max_newton):
        F = residual_fn(u)
        res = l2_norm(F)
        if res < best_res:
            best_u, best_res = u, res
        if res <= tol:
            return StateSolution(u, iters, float(res), energy, True, trace)
        delta = solve_spd(jacobian_fn(u), F, bc0, tol=lin_tol)
        slope = -l2_inner(F, delta)
        # roundoff slack keeps the Armijo test meaningful near stationarity
        fudge = 4e-16 * (1.0 + abs(energy))
        alpha, accepted = 1.0, False
        while alpha >= _ALPHA_MIN:
            cand = ScalarField(grid, u.values + alpha * delta.values)
            e_new = energy_fn(cand)
            if e_new <= energy + _ARMIJO_C * alpha * slope + fudge:
                u, energy, accepted = cand, e_new, True
                break
            alpha *= 0.5
        if not accepted:
            break
        iters += 1
        trace.append(energy)

    F = residual_fn(u)
    res = l2_norm(F)
    if res < best_res:
        best_u, best_res = u, res
    if res <= tol:
        return StateSolution(u, iters, float(res), energy, True, trace)
    return StateSolution(best_u, iters, float(best_res), energy_fn(best_u), False, trace)


def solve_state(
    data: ProblemData,
    s: Smoother,
    tol: float = 1e-9,
    max_newton: int = 50,
    initial: ScalarField | None = None,
) -> StateSolution:
    """Solve the regularized two-phase state equation.

    Returns a StateSolution whose discrete L2 residual
    ||lap u - beta(u) + phi|| is at most tol on success; on Newton
    stagnation the best iterate is returned with converged=False.
    """
    return _newton_solve(
        data,
        residual_fn=lambda u: state_residual(u, data, s),
        jacobian_fn=lambda u: beta_prime(s, u, data.fp, data.fm),
        energy_fn=lambda u: smoothed_energy(u, data, s),
        tol=tol,
        max_newton=max_newton,
        initial=initial,
    )


def solve_state_limit(
    data: ProblemData,
    eps0: float,
    tol_h1: float,
    tol: float = 1e-10,
    max_levels: int = 40,
    max_newton: int = 60,
) -> StateSolution:
    """Approximate the unregularized state by halving eps with warm starts.

    Solves at eps_k = eps0 * 2**-k, each solve warm-started from the last,
    until consecutive solutions are tol_h1-close in the H1 norm.
    """
    if eps0 <= 0.0:
        raise ValueError("solve_state_limit: eps0 must be positive")
    if tol_h1 <= 0.0:
        raise ValueError("solve_state_limit: tol_h1 must be positive")
    eps = eps0
    prev: StateSolution | None = None
    for _ in range(max_levels):
        sol = solve_state(
            data,
            Smoother(eps),
            tol=tol,
            max_newton=max_newton,
            initial=None if prev is None else prev.u,
        )
        if prev is not None:
            diff = ScalarField(data.grid, sol.u.values - prev.u.values)
            if h1_norm(diff) <= tol_h1:
                return sol
        prev = sol
        eps *= 0.5
    raise SolverError(
        f"eps continuation exhausted {max_levels} levels before the H1 Cauchy "
        f"criterion {tol_h1:g} was met"
    )


def solve_one_phase(
    data: ProblemData,
    s: Smoother,
    tol: float = 1e-9,
    max_newton: int = 50,
    initial: ScalarField | None = None,
) -> StateSolution:
    """Solve the one-phase obstacle form lap u = (f_plus - phi) * chi(u).

    The control is folded into the coefficient, so f_plus - phi must be
    nonnegative nodewise for the Newton systems to stay SPD; f_minus is
    ignored.
    """
    grid = data.grid
    coef_vals = data.fp.values - data.phi.values
    if coef_vals.min() < 0.0:
        raise ValueError("solve_one_phase: needs f_plus - phi >= 0 nodewise")
    coef = ScalarField(grid, coef_vals)
    ring = grid.boundary_indices()

    def residual_fn(u: ScalarField) -> ScalarField:
        vals = apply_laplacian(u).values - coef.values * chi(s, u.values)
        vals[ring] = 0.0
        return ScalarField(grid, vals)

    def jacobian_fn(u: ScalarField) -> ScalarField:
        return ScalarField(grid, coef.values * chi_prime(s, u.values))

    def energy_fn(u: ScalarField) -> float:
        pos = ScalarField(grid, phi_int(s, u.values))
        return 0.5 * h1_seminorm_sq(u) + l2_inner(coef, pos)

    return _newton_solve(data, residual_fn, jacobian_fn, energy_fn, tol, max_newton, initial)


def recover_obstacle(phi_star: ScalarField, tol: float = 1e-11) -> ScalarField:
    """Obstacle recovery: solve lap w = phi_star with w = 0 on the ring."""
    grid = phi_star.grid
    zero = ScalarField.zeros(grid)
    rhs = ScalarField(grid, -phi_star.values)
    return solve_spd(zero, rhs, BoundaryData.zeros(grid), tol=tol)


@dataclass
class FreeBoundaryLabels:
    """Nodewise classification into {P, N, Z, G1, G2}.

    P/N/Z are the sign classes (positive, negative, near-zero); G1 and G2
    mark free-boundary nodes with vanishing and non-vanishing gradient.
    """

    grid: Grid2D
    labels: np.ndarray  # flat array of strings

    def mask(self, *names: str) -> np.ndarray:
        out = np.zeros(self.grid.n_nodes, dtype=bool)
        for name in names:
            out |= self.labels == name
        return out


def free_boundary(u: ScalarField, utol: float, gtol: float) -> FreeBoundaryLabels:
    """Classify nodes and extract the discrete free boundary.

    Interior nodes are P (u > utol), N (u < -utol), or Z.  A node joins the
    free boundary when it is a Z node 4-adjacent to a P or N node, or when
    it sits on a sign-change edge (P next to N).  Free-boundary nodes with
    centered-difference |grad u| <= gtol are tagged G1, the rest G2.
    """
    if utol <= 0.0 or gtol <= 0.0:
        raise ValueError("free_boundary: utol and gtol must be positive")
    g = u.grid
    v = u.as_matrix()
    pos = v > utol
    neg = v < -utol

    def any_neighbor(mask: np.ndarray) -> np.ndarray:
        out = np.zeros_like(mask)
        out[1:-1, 1:-1] = (
            mask[1:-1, :-2] | mask[1:-1, 2:] | mask[:-2, 1:-1] | mask[2:, 1:-1]
        )
        return out

    interior = np.zeros(g.shape, dtype=bool)
    interior[1:-1, 1:-1] = True
    zero = ~pos & ~neg
    near_pos, near_neg = any_neighbor(pos), any_neighbor(neg)
    gamma = interior & (
        (zero & (near_pos | near_neg)) | (pos & near_neg) | (neg & near_pos)
    )

    grad = np.zeros(g.shape)
    gx = (v[1:-1, 2:] - v[1:-1, :-2]) / (2.0 * g.hx)
    gy = (v[2:, 1:-1] - v[:-2, 1:-1]) / (2.0 * g.hy)
    grad[1:-1, 1:-1] = np.hypot(gx, gy)

    labels = np.full(g.shape, "Z", dtype="<U2")
    labels[pos] = "P"
    labels[neg] = "N"
    labels[gamma & (grad > gtol)] = "G2"
    labels[gamma & (grad <= gtol)] = "G1"
    return FreeBoundaryLabels(g, labels.ravel())


def write_labels_csv(fb: FreeBoundaryLabels, path) -> None:
    """Classification CSV: the field header then ny rows of nx labels."""
    g = fb.grid
    lines = [f"{g.nx},{g.ny},{g.ax!r},{g.bx!r},{g.ay!r},{g.by!r}"]
    for row in fb.labels.reshape(g.shape):
        lines.append(",".join(row))
    Path(path).write_text("\n".join(lines) + "\n", encoding="ascii")


def energy_two_phase(u: ScalarField, data: ProblemData) -> float:
    """Limit-problem energy with the control absorbed into the coefficients:

    1/2 |u|_{H1}^2 + ((f_plus - phi), u+) + ((f_minus + phi), u-).
    """
    g = data.grid
    up = ScalarField(g, np.maximum(u.values, 0.0))
    um = ScalarField(g, np.maximum(-u.values, 0.0))
    cp = ScalarField(g, data.fp.values - data.phi.values)
    cm = ScalarField(g, data.fm.values + data.phi.values)
    return 0.5 * h1_seminorm_sq(u) + l2_inner(cp, up) + l2_inner(cm, um)
