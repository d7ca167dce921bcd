"""Outer optimization over the admissible box by projected gradient descent.

Each iteration solves the state at the current control, the adjoint at the
converged state, and steps along -(p + lambda*phi) with projection onto
the box -f_minus <= phi <= f_plus.  The trial step uses a Barzilai-Borwein
estimate of the inverse curvature, safeguarded by monotone Armijo
backtracking on the objective, so the objective trace never increases.
Termination monitors the projected-gradient fixed-point residual

    ||phi - P(phi - step0*(p + lambda*phi))|| / step0.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .adjoint import solve_adjoint
from .field import ScalarField, h1_norm, l2_inner, l2_norm
from .regularization import Smoother
from .state import ProblemData, solve_state

__all__ = [
    "OptimizerConfig",
    "OptimizeReport",
    "EpsilonPathResult",
    "project_box",
    "objective",
    "optimize",
    "optimality_residual",
    "epsilon_path",
]


@dataclass(frozen=True)
class OptimizerConfig:
    """Projected-gradient parameters; lam is the Tikhonov weight."""

    lam: float
    eps: float
    step0: float = 1.0
    armijo_c: float = 0.1
    shrink: float = 0.5
    max_iters: int = 500
    stat_tol: float = 1e-8
    state_tol: float = 1e-11
    max_newton: int = 60

    def __post_init__(self) -> None:
        if not self.lam > 0.0:
            raise ValueError("OptimizerConfig: lam must be positive")
        if not self.eps > 0.0:
            raise ValueError("OptimizerConfig: eps must be positive")
        if not self.step0 > 0.0:
            raise ValueError("OptimizerConfig: step0 must be positive")
        if not 0.0 < self.armijo_c < 1.0:
            raise ValueError("OptimizerConfig: armijo_c must lie in (0, 1)")
        if not 0.0 < self.shrink < 1.0:
            raise ValueError("OptimizerConfig: shrink must lie in (0, 1)")
        if self.max_iters < 1:
            raise ValueError("OptimizerConfig: max_iters must be at least 1")
        if not self.stat_tol > 0.0:
            raise ValueError("OptimizerConfig: stat_tol must be positive")
        if not self.state_tol > 0.0:
            raise ValueError("OptimizerConfig: state_tol must be positive")


@dataclass
class OptimizeReport:
    """Final triple (phi, u, p) plus the optimization trajectory."""

    phi: ScalarField
    u: ScalarField
    p: ScalarField
    objective_trace: list[float]
    stationarity: float
    iters: int
    converged: bool
    stationarity_trace: list[float]
    step_trace: list[float]


@dataclass
class EpsilonPathResult:
    """Per-eps optimization reports with consecutive-pair distances."""

    reports: list[OptimizeReport]
    phi_distances: list[float]
    u_distances: list[float]


def project_box(phi: ScalarField, fm: ScalarField, fp: ScalarField) -> ScalarField:
    """Nodewise clamp of phi onto the admissible box [-f_minus, f_plus]."""
    if phi.grid != fm.grid or phi.grid != fp.grid:
        raise ValueError("project_box: fields live on different grids")
    if fm.values.min() < 0.0 or fp.values.min() < 0.0:
        raise ValueError("project_box: box bounds f_minus, f_plus must be nonnegative")
    vals = np.minimum(np.maximum(phi.values, -fm.values), fp.values)
    return ScalarField(phi.grid, vals)


def _objective_value(u: ScalarField, phi: ScalarField, z: ScalarField, lam: float) -> float:
    diff = ScalarField(u.grid, u.values - z.values)
    return 0.5 * l2_inner(diff, diff) + 0.5 * lam * l2_inner(phi, phi)


def objective(
    phi: ScalarField,
    z: ScalarField,
    cfg: OptimizerConfig,
    data: ProblemData,
) -> float:
    """Reduced objective: solve the state at phi, then evaluate the functional."""
    dat = data.with_phi(phi)
    if not dat.phi_in_box(slack=1e-9):
        raise ValueError("objective: phi violates the admissible box")
    sol = solve_state(dat, Smoother(cfg.eps), tol=cfg.state_tol, max_newton=cfg.max_newton)
    if not sol.converged:
        from .field import SolverError

        raise SolverError(
            f"objective: state solve stagnated at residual {sol.final_residual:.3e}"
        )
    return _objective_value(sol.u, phi, z, cfg.lam)


def optimality_residual(
    phi: ScalarField,
    u: ScalarField,
    p: ScalarField,
    data: ProblemData,
    lam: float,
) -> float:
    """Projection form of the first-order system: ||phi - P(-p/lam)||.

    Zero exactly when the variational inequality over the box holds
    nodewise, i.e. phi = clamp(-p/lam, -f_minus, f_plus).
    """
    grid = data.grid
    for f in (phi, u, p):
        if f.grid != grid:
            raise ValueError("optimality_residual: fields live on different grids")
    if not lam > 0.0:
        raise ValueError("optimality_residual: lam must be positive")
    target = project_box(ScalarField(grid, -p.values / lam), data.fm, data.fp)
    return l2_norm(ScalarField(grid, phi.values - target.values))


def optimize(
    data: ProblemData,
    z: ScalarField,
    cfg: OptimizerConfig,
    initial_phi: ScalarField | None = None,
) -> OptimizeReport:
    """Projected gradient descent with Armijo backtracking over the box.

    Accepts a step s when the objective drops by at least
    armijo_c/s * ||phi_new - phi||^2; every state solve after the first is
    warm-started from the previous state.  Stops at the stationarity
    tolerance, at max_iters, or on line-search step underflow (returning
    the best iterate with converged=False).
    """
    grid = data.grid
    if z.grid != grid:
        raise ValueError("optimize: target z lives on a different grid")
    smoother = Smoother(cfg.eps)

    phi = initial_phi if initial_phi is not None else ScalarField.zeros(grid)
    phi = project_box(phi, data.fm, data.fp)
    sol = solve_state(data.with_phi(phi), smoother, tol=cfg.state_tol, max_newton=cfg.max_newton)
    u = sol.u
    J = _objective_value(u, phi, z, cfg.lam)

    objective_trace = [J]
    stationarity_trace: list[float] = []
    step_trace: list[float] = []
    stat = np.inf
    p_field = ScalarField.zeros(grid)
    prev_grad: ScalarField | None = None
    prev_dphi: ScalarField | None = None
    s_accept = cfg.step0
    iters = 0
    converged = False
    line_failed = False

    for it in range(cfg.max_iters + 1):
        p_field = solve_adjoint(u, z, data.with_phi(phi), smoother, tol=cfg.state_tol).p
        grad = ScalarField(grid, p_field.values + cfg.lam * phi.values)
        probe = project_box(
            ScalarField(grid, phi.values - cfg.step0 * grad.values), data.fm, data.fp
        )
        stat = l2_norm(ScalarField(grid, probe.values - phi.values)) / cfg.step0
        stationarity_trace.append(stat)
        if stat <= cfg.stat_tol:
            converged = True
            break
        if it == cfg.max_iters:
            break

        # Barzilai-Borwein estimate of the inverse curvature as the trial step
        if prev_grad is not None and prev_dphi is not None:
            dgrad = ScalarField(grid, grad.values - prev_grad.values)
            denom = l2_inner(prev_dphi, dgrad)
            if denom > 0.0:
                s_try = l2_inner(prev_dphi, prev_dphi) / denom
            else:
                s_try = 4.0 * s_accept
            s_try = min(max(s_try, 1e-12 * cfg.step0), 100.0 * max(s_accept, cfg.step0))
        else:
            s_try = cfg.step0

        s = s_try
        s_min = 1e-14 * max(s_try, cfg.step0)
        accepted = False
        while s >= s_min:
            phi_new = project_box(
                ScalarField(grid, phi.values - s * grad.values), data.fm, data.fp
            )
            dphi = ScalarField(grid, phi_new.values - phi.values)
            move_sq = l2_inner(dphi, dphi)
            if move_sq == 0.0:
                break
            sol = solve_state(
                data.with_phi(phi_new),
                smoother,
                tol=cfg.state_tol,
                max_newton=cfg.max_newton,
                initial=u,
            )
            J_new = _objective_value(sol.u, phi_new, z, cfg.lam)
            if J_new <= J - cfg.armijo_c * move_sq / s:
                prev_grad, prev_dphi = grad, dphi
                phi, u, J = phi_new, sol.u, J_new
                s_accept = s
                accepted = True
                break
            s *= cfg.shrink
        if not accepted:
            line_failed = True
            break
        iters += 1
        objective_trace.append(J)
        step_trace.append(s_accept)

    if line_failed:
        converged = False
    return OptimizeReport(
        phi=phi,
        u=u,
        p=p_field,
        objective_trace=objective_trace,
        stationarity=float(stat),
        iters=iters,
        converged=converged,
        stationarity_trace=stationarity_trace,
        step_trace=step_trace,
    )


def epsilon_path(
    data: ProblemData,
    z: ScalarField,
    cfg: OptimizerConfig,
    eps_list,
    initial_phi: ScalarField | None = None,
) -> EpsilonPathResult:
    """Optimize along a decreasing smoothing schedule with warm-started controls.

    Returns the per-eps reports plus the L2 distances between consecutive
    optimal controls and the H1 distances between consecutive states.
    """
    eps_list = [float(e) for e in eps_list]
    if not eps_list:
        raise ValueError("epsilon_path: eps_list must be nonempty")
    if any(b >= a for a, b in zip(eps_list, eps_list[1:])):
        raise ValueError("epsilon_path: eps_list must be strictly decreasing")
    grid = data.grid
    reports: list[OptimizeReport] = []
    phi_distances: list[float] = []
    u_distances: list[float] = []
    phi = initial_phi
    for eps in eps_list:
        report = optimize(data, z, replace(cfg, eps=eps), initial_phi=phi)
        if reports:
            prev = reports[-1]
            phi_distances.append(
                l2_norm(ScalarField(grid, report.phi.values - prev.phi.values))
            )
            u_distances.append(
                h1_norm(ScalarField(grid, report.u.values - prev.u.values))
            )
        reports.append(report)
        phi = report.phi
    return EpsilonPathResult(reports, phi_distances, u_distances)
