"""Executable property suites for the solver stack.

Each check solves the regularized problem on concrete instances and tests
a provable ordering, bound, or consistency statement: monotonicity of the
state in the control, the Mv sandwich, the sharp H1 Lipschitz constant
lambda_1^{-1/2}, finite-difference consistency of the adjoint gradient and
of the sensitivity, Cauchy behaviour of the eps continuation, and a
Picard/Newton cross-check.  All randomness is seeded, so a (seed, config)
pair determines every report.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .adjoint import reduced_gradient, solve_adjoint, solve_sensitivity
from .control import OptimizerConfig, objective
from .field import (
    BoundaryData,
    Grid2D,
    ScalarField,
    SolverError,
    h1_norm,
    h1_seminorm_sq,
    harmonic_extension,
    l2_inner,
    l2_norm,
    smallest_eigenvalue,
    solve_spd,
)
from .regularization import Smoother, beta
from .state import ProblemData, solve_state

__all__ = [
    "CheckReport",
    "VerifyConfig",
    "check_monotonicity",
    "check_sandwich",
    "check_lipschitz",
    "check_gradient_fd",
    "check_sensitivity_fd",
    "check_eps_convergence",
    "check_picard_newton_agreement",
    "run_all",
    "unit_square_instance",
    "strip_instance",
    "random_admissible_pair",
    "smooth_direction",
    "eps_distance_scan",
]


@dataclass
class CheckReport:
    name: str
    passed: bool
    worst_violation: float
    instances: int
    details: str


# ---------------------------------------------------------------------------
# standard instances and randomized inputs


def unit_square_instance(
    n: int = 33,
    f_plus: float = 1.0,
    f_minus: float = 1.0,
    g_amp: float = 1.0,
) -> ProblemData:
    """Two-phase instance on the unit square with sign-changing g = g_amp*(x - 1/2)."""
    grid = Grid2D(n, n)
    fp = ScalarField.constant(grid, f_plus)
    fm = ScalarField.constant(grid, f_minus)
    g = BoundaryData.from_function(grid, lambda x, y: g_amp * (x - 0.5), sign_changing=True)
    return ProblemData(grid, fp, fm, g, ScalarField.zeros(grid))


def strip_instance(nx: int = 257, ny: int = 33) -> ProblemData:
    """y-independent instance on (-1, 1) whose limit state is x|x|/2.

    Square cells (hy = hx), f_plus = f_minus = 1, phi = 0, and the ring
    carries the y-independent profile g = x|x|/2, so g(+-1) = +-1/2.  The
    profile solves the limit equation exactly, including along the top and
    bottom rows, so the mid-row of the solve reproduces the 1D solution up
    to O(h^2 + eps).
    """
    hx = 2.0 / (nx - 1)
    grid = Grid2D(nx, ny, -1.0, 1.0, 0.0, (ny - 1) * hx)
    fp = ScalarField.constant(grid, 1.0)
    fm = ScalarField.constant(grid, 1.0)
    g = BoundaryData.from_function(
        grid, lambda x, y: 0.5 * x * np.abs(x), sign_changing=True
    )
    return ProblemData(grid, fp, fm, g, ScalarField.zeros(grid))


def random_admissible_pair(
    data: ProblemData, rng: np.random.Generator
) -> tuple[ScalarField, ScalarField]:
    """Ordered controls phi1 >= phi2, both inside the admissible box."""
    lo, hi = -data.fm.values, data.fp.values
    a = lo + (hi - lo) * rng.random(data.grid.n_nodes)
    b = lo + (hi - lo) * rng.random(data.grid.n_nodes)
    return (
        ScalarField(data.grid, np.maximum(a, b)),
        ScalarField(data.grid, np.minimum(a, b)),
    )


def smooth_direction(grid: Grid2D, rng: np.random.Generator, modes: int = 3) -> ScalarField:
    """Random low-frequency direction vanishing on the ring, sup-norm one."""
    xx, yy = grid.meshgrid()
    sx = (xx - grid.ax) / (grid.bx - grid.ax)
    sy = (yy - grid.ay) / (grid.by - grid.ay)
    vals = np.zeros(grid.shape)
    for _ in range(modes):
        m = int(rng.integers(1, 4))
        k = int(rng.integers(1, 4))
        vals += rng.normal() * np.sin(m * np.pi * sx) * np.sin(k * np.pi * sy)
    peak = np.abs(vals).max()
    if peak > 0.0:
        vals /= peak
    return ScalarField(grid, vals.ravel())


# ---------------------------------------------------------------------------
# comparison-principle checks (Lemma-level orderings)


def check_monotonicity(
    data: ProblemData,
    phi1: ScalarField,
    phi2: ScalarField,
    s: Smoother,
    tol: float,
    state_tol: float = 1e-10,
) -> CheckReport:
    """phi1 >= phi2 must give u1 >= u2 nodewise (up to tol)."""
    if np.any(phi1.values < phi2.values - 1e-12):
        raise ValueError("check_monotonicity: needs phi1 >= phi2 nodewise")
    u1 = solve_state(data.with_phi(phi1), s, tol=state_tol).u
    u2 = solve_state(data.with_phi(phi2), s, tol=state_tol).u
    worst = max(0.0, float(-(u1.values - u2.values).min()))
    return CheckReport(
        name="monotonicity",
        passed=worst <= tol,
        worst_violation=worst,
        instances=1,
        details=f"min(u1-u2) = {(u1.values - u2.values).min():.3e}, eps={s.eps:g}",
    )


def check_sandwich(
    data: ProblemData,
    phi1: ScalarField,
    phi2: ScalarField,
    s: Smoother,
    tol: float,
    state_tol: float = 1e-10,
) -> CheckReport:
    """u1 + M*v <= u2 <= u1 with M = max(phi1 - phi2) and lap v = 1, v = 0 on the ring."""
    if np.any(phi1.values < phi2.values - 1e-12):
        raise ValueError("check_sandwich: needs phi1 >= phi2 nodewise")
    grid = data.grid
    u1 = solve_state(data.with_phi(phi1), s, tol=state_tol).u
    u2 = solve_state(data.with_phi(phi2), s, tol=state_tol).u
    v = solve_spd(
        ScalarField.zeros(grid),
        ScalarField.constant(grid, -1.0),
        BoundaryData.zeros(grid),
        tol=state_tol,
    )
    m_gap = float(
        (phi1.as_matrix()[1:-1, 1:-1] - phi2.as_matrix()[1:-1, 1:-1]).max()
    )
    lower = float((u1.values + m_gap * v.values - u2.values).max())
    upper = float((u2.values - u1.values).max())
    worst = max(0.0, lower, upper)
    return CheckReport(
        name="sandwich",
        passed=worst <= tol,
        worst_violation=worst,
        instances=1,
        details=f"M={m_gap:.3e}, max(u1+Mv-u2)={lower:.3e}, max(u2-u1)={upper:.3e}",
    )


def check_lipschitz(
    data: ProblemData,
    phi1: ScalarField,
    phi2: ScalarField,
    s: Smoother,
    tol: float,
    state_tol: float = 1e-10,
    lam1: float | None = None,
) -> CheckReport:
    """|u1 - u2|_{H1} <= lambda_1^{-1/2} ||phi1 - phi2||, the sharp constant."""
    grid = data.grid
    if lam1 is None:
        lam1 = smallest_eigenvalue(grid, tol=1e-10)
    u1 = solve_state(data.with_phi(phi1), s, tol=state_tol).u
    u2 = solve_state(data.with_phi(phi2), s, tol=state_tol).u
    lhs = float(np.sqrt(h1_seminorm_sq(ScalarField(grid, u1.values - u2.values))))
    rhs = lam1 ** -0.5 * l2_norm(ScalarField(grid, phi1.values - phi2.values))
    worst = max(0.0, lhs - rhs)
    ratio = lhs / rhs if rhs > 0.0 else 0.0
    return CheckReport(
        name="lipschitz",
        passed=worst <= tol,
        worst_violation=worst,
        instances=1,
        details=f"|du|_H1={lhs:.3e}, bound={rhs:.3e}, ratio={ratio:.4f}",
    )


# ---------------------------------------------------------------------------
# derivative checks (Frechet differentiability and the adjoint gradient)


def _direction_family(
    grid: Grid2D, rng: np.random.Generator, count: int, include_bump: bool = True
) -> list[ScalarField]:
    """Coordinate bump, fixed smooth modes, then clipped random noise."""
    dirs: list[ScalarField] = []
    if include_bump:
        bump = np.zeros(grid.shape)
        # off-center so symmetric instances keep a nonzero derivative
        bump[max(1, grid.ny // 3), max(1, grid.nx // 3)] = 1.0
        dirs.append(ScalarField(grid, bump.ravel()))
    xx, yy = grid.meshgrid()
    sx = (xx - grid.ax) / (grid.bx - grid.ax)
    sy = (yy - grid.ay) / (grid.by - grid.ay)
    dirs.append(ScalarField(grid, (np.sin(np.pi * sx) * np.sin(np.pi * sy)).ravel()))
    dirs.append(
        ScalarField(grid, (np.sin(2 * np.pi * sx) * np.sin(np.pi * sy)).ravel())
    )
    while len(dirs) < count:
        noise = rng.uniform(-1.0, 1.0, grid.shape)
        noise[0, :] = noise[-1, :] = 0.0
        noise[:, 0] = noise[:, -1] = 0.0
        dirs.append(ScalarField(grid, noise.ravel()))
    return dirs[:count]


def check_gradient_fd(
    data: ProblemData,
    z: ScalarField,
    phi: ScalarField,
    lam: float,
    s: Smoother,
    directions: int = 5,
    seed: int = 0,
    t_values: tuple[float, float] = (1e-4, 1e-5),
    state_tol: float = 1e-12,
    rel_tol: float = 1e-3,
) -> CheckReport:
    """Adjoint directional derivatives against central differences of the objective.

    Requires phi in the interior of the box so that phi +- t*psi stays
    admissible.  Passes when every relative error at the larger t is below
    rel_tol and the error does not grow as t shrinks; errors that have
    already dropped to the 1e-4 noise scale satisfy the decrease
    requirement by fiat, since central differences of solver output carry
    no information below it.
    """
    grid = data.grid
    rng = np.random.default_rng(seed)
    cfg = OptimizerConfig(lam=lam, eps=s.eps, state_tol=state_tol)
    sol = solve_state(data.with_phi(phi), s, tol=state_tol)
    p = solve_adjoint(sol.u, z, data.with_phi(phi), s, tol=state_tol).p
    grad = reduced_gradient(phi, p, lam)
    t_big, t_small = max(t_values), min(t_values)
    worst = 0.0
    orders = []
    monotone = True
    for psi in _direction_family(grid, rng, directions):
        predicted = l2_inner(grad, psi)
        errs = {}
        for t in (t_big, t_small):
            up = objective(ScalarField(grid, phi.values + t * psi.values), z, cfg, data)
            dn = objective(ScalarField(grid, phi.values - t * psi.values), z, cfg, data)
            central = (up - dn) / (2.0 * t)
            # absolute floor: derivatives below 1e-8 are numerically zero
            # at desk scale and carry no relative-error information
            errs[t] = abs(central - predicted) / max(
                abs(central), abs(predicted), 1e-8
            )
        worst = max(worst, errs[t_big])
        if errs[t_small] > max(errs[t_big], 1e-4):
            monotone = False
        orders.append(
            np.log(errs[t_big] / max(errs[t_small], 1e-300)) / np.log(t_big / t_small)
        )
    return CheckReport(
        name="gradient_fd",
        passed=(worst <= rel_tol) and monotone,
        worst_violation=worst,
        instances=directions,
        details=(
            f"max rel err at t={t_big:g}: {worst:.3e}, "
            f"observed orders {np.round(orders, 2).tolist()}, "
            f"error decreasing in t: {monotone}"
        ),
    )


def check_sensitivity_fd(
    data: ProblemData,
    phi: ScalarField,
    s: Smoother,
    directions: int = 5,
    seed: int = 0,
    t_pair: tuple[float, float] = (1e-3, 1e-4),
    state_tol: float = 1e-12,
    drop_factor: float = 5.0,
    lam1: float | None = None,
) -> CheckReport:
    """First-order consistency of the sensitivity and the Lipschitz bound.

    The forward-difference error ||xi - (u(phi + t psi) - u(phi))/t|| must
    drop by at least drop_factor when t shrinks tenfold, and each perturbed
    pair must satisfy the sharp H1 Lipschitz bound.  Directions are smooth
    or noise fields (a nodal bump has too small a response to resolve the
    order against solver noise), and errors already below 1e-10 confirm
    the derivative outright.
    """
    grid = data.grid
    rng = np.random.default_rng(seed)
    if lam1 is None:
        lam1 = smallest_eigenvalue(grid, tol=1e-10)
    t_big, t_small = max(t_pair), min(t_pair)
    base = solve_state(data.with_phi(phi), s, tol=state_tol)
    worst_ratio = np.inf
    lip_worst = 0.0
    for psi in _direction_family(grid, rng, directions, include_bump=False):
        xi = solve_sensitivity(base.u, psi, data.with_phi(phi), s, tol=state_tol)
        errs = {}
        for t in (t_big, t_small):
            phi_t = ScalarField(grid, phi.values + t * psi.values)
            u_t = solve_state(data.with_phi(phi_t), s, tol=state_tol, initial=base.u).u
            quotient = ScalarField(grid, (u_t.values - base.u.values) / t)
            errs[t] = l2_norm(ScalarField(grid, xi.values - quotient.values))
            du = ScalarField(grid, u_t.values - base.u.values)
            lip = np.sqrt(h1_seminorm_sq(du)) - lam1 ** -0.5 * t * l2_norm(psi)
            lip_worst = max(lip_worst, float(lip))
        if errs[t_big] > 1e-10:
            worst_ratio = min(worst_ratio, errs[t_big] / max(errs[t_small], 1e-300))
    passed = (worst_ratio >= drop_factor) and (lip_worst <= 1e-8)
    return CheckReport(
        name="sensitivity_fd",
        passed=passed,
        worst_violation=max(0.0, drop_factor - worst_ratio),
        instances=directions,
        details=(
            f"min error-drop ratio {worst_ratio:.2f} for t {t_big:g}->{t_small:g}, "
            f"worst Lipschitz slack {lip_worst:.3e}"
        ),
    )


# ---------------------------------------------------------------------------
# eps-continuation behaviour


def eps_distance_scan(
    data: ProblemData,
    eps_list,
    state_tol: float = 1e-10,
    phis=None,
) -> list[float]:
    """H1 distances between states at consecutive eps values, warm-started.

    When phis is given (one control per eps) the scan follows the coupled
    path (eps_k, phi_k); otherwise the control is data.phi throughout.
    """
    eps_list = [float(e) for e in eps_list]
    sols = []
    prev_u = None
    for k, eps in enumerate(eps_list):
        dat = data if phis is None else data.with_phi(phis[k])
        sol = solve_state(dat, Smoother(eps), tol=state_tol, initial=prev_u)
        sols.append(sol.u)
        prev_u = sol.u
    return [
        h1_norm(ScalarField(data.grid, b.values - a.values))
        for a, b in zip(sols, sols[1:])
    ]


def check_eps_convergence(
    data: ProblemData,
    eps_list,
    tol: float,
    state_tol: float = 1e-10,
) -> CheckReport:
    """Cauchy behaviour of the continuation, plus the coupled-path variant.

    Consecutive H1 distances must not increase along the decreasing eps
    schedule, and the same must hold when the control simultaneously
    converges (phi_k = phi + 2^-k * delta).
    """
    eps_list = [float(e) for e in eps_list]
    if any(b >= a for a, b in zip(eps_list, eps_list[1:])):
        raise ValueError("check_eps_convergence: eps_list must be strictly decreasing")
    dists = eps_distance_scan(data, eps_list, state_tol=state_tol)
    worst = max(
        [0.0] + [b - a for a, b in zip(dists, dists[1:])]
    )
    # coupled path of Lemma-4.3 type: controls converging alongside eps
    delta = ScalarField.from_function(
        data.grid,
        lambda x, y: 0.2
        * np.sin(np.pi * (x - data.grid.ax) / (data.grid.bx - data.grid.ax))
        * np.sin(np.pi * (y - data.grid.ay) / (data.grid.by - data.grid.ay)),
    )
    phis = [
        ScalarField(data.grid, data.phi.values + 2.0**-k * delta.values)
        for k in range(len(eps_list))
    ]
    target = solve_state(
        data.with_phi(data.phi), Smoother(eps_list[-1]), tol=state_tol
    ).u
    coupled = []
    prev = None
    for k, eps in enumerate(eps_list):
        sol = solve_state(data.with_phi(phis[k]), Smoother(eps), tol=state_tol, initial=prev)
        coupled.append(h1_norm(ScalarField(data.grid, sol.u.values - target.values)))
        prev = sol.u
    worst_coupled = max(
        [0.0] + [b - a for a, b in zip(coupled, coupled[1:])]
    )
    worst = max(worst, worst_coupled)
    return CheckReport(
        name="eps_convergence",
        passed=worst <= tol,
        worst_violation=worst,
        instances=len(eps_list),
        details=(
            f"H1 Cauchy distances {[f'{d:.3e}' for d in dists]}, "
            f"coupled-path distances {[f'{d:.3e}' for d in coupled]}"
        ),
    )


# ---------------------------------------------------------------------------
# solver cross-validation


def check_picard_newton_agreement(
    data: ProblemData,
    s: Smoother,
    tol: float,
    state_tol: float = 1e-10,
    relax: float = 0.6,
    max_picard: int = 5000,
) -> CheckReport:
    """A damped Picard iteration must land within 10*tol of Newton in sup norm.

    Picard update: solve -lap u = phi - beta(u_k) with u = g on the ring,
    then relax.  Non-convergence is reported as a failed check, not raised.
    """
    grid = data.grid
    newton = solve_state(data, s, tol=state_tol)
    zero = ScalarField.zeros(grid)
    u = harmonic_extension(data.g, grid, tol=state_tol)
    converged = False
    for _ in range(max_picard):
        rhs = ScalarField(grid, data.phi.values - beta(s, u, data.fp, data.fm).values)
        step = solve_spd(zero, rhs, data.g, tol=state_tol)
        new_vals = (1.0 - relax) * u.values + relax * step.values
        change = float(np.abs(new_vals - u.values).max())
        u = ScalarField(grid, new_vals)
        if change <= 0.1 * tol:
            converged = True
            break
    gap = float(np.abs(u.values - newton.u.values).max())
    passed = converged and gap <= 10.0 * tol
    details = f"sup gap {gap:.3e}" + ("" if converged else " (picard stalled)")
    return CheckReport(
        name="picard_newton_agreement",
        passed=passed,
        worst_violation=gap,
        instances=1,
        details=details,
    )


# ---------------------------------------------------------------------------
# the aggregated suite


@dataclass(frozen=True)
class VerifyConfig:
    """Instance sizes, tolerances, and the seed for the full suite."""

    seed: int = 0
    grid_n: int = 33
    pairs: int = 100
    eps: float = 0.1
    tol: float = 1e-7
    state_tol: float = 1e-10
    directions: int = 5
    eps_list: tuple[float, ...] = (0.2, 0.1, 0.05, 0.025, 0.0125)


def _aggregate(name: str, reports: list[CheckReport]) -> CheckReport:
    worst = max(r.worst_violation for r in reports)
    passed = all(r.passed for r in reports)
    bad = [r.details for r in reports if not r.passed]
    details = f"{len(reports)} instances, worst violation {worst:.3e}"
    if bad:
        details += "; failures: " + " | ".join(bad[:3])
    return CheckReport(name, passed, worst, len(reports), details)


def run_all(config: VerifyConfig = VerifyConfig()) -> list[CheckReport]:
    """Run every check with seeded randomness and return one report per family."""
    rng = np.random.default_rng(config.seed)
    data = unit_square_instance(config.grid_n)
    s = Smoother(config.eps)
    lam1 = smallest_eigenvalue(data.grid, tol=1e-10)

    mono, sand, lips = [], [], []
    for _ in range(config.pairs):
        phi1, phi2 = random_admissible_pair(data, rng)
        mono.append(
            check_monotonicity(data, phi1, phi2, s, config.tol, config.state_tol)
        )
        sand.append(check_sandwich(data, phi1, phi2, s, config.tol, config.state_tol))
        lips.append(
            check_lipschitz(
                data, phi1, phi2, s, 1e-6, config.state_tol, lam1=lam1
            )
        )
    reports = [
        _aggregate("monotonicity", mono),
        _aggregate("sandwich", sand),
        _aggregate("lipschitz", lips),
    ]

    # derivative checks on a strictly interior control with a smooth target
    phi0 = ScalarField(data.grid, 0.2 * smooth_direction(data.grid, rng).values)
    z = ScalarField.from_function(data.grid, lambda x, y: 0.3 * (x - 0.5))
    s_wide = Smoother(0.15)
    reports.append(
        check_gradient_fd(
            data,
            z,
            phi0,
            lam=1e-2,
            s=s_wide,
            directions=config.directions,
            seed=config.seed + 1,
        )
    )
    reports.append(
        check_sensitivity_fd(
            data,
            phi0,
            s_wide,
            directions=config.directions,
            seed=config.seed + 2,
            lam1=lam1,
        )
    )

    reports.append(
        check_eps_convergence(
            strip_instance(), config.eps_list, tol=1e-12, state_tol=config.state_tol
        )
    )
    reports.append(
        check_eps_convergence(
            unit_square_instance(config.grid_n, g_amp=0.2),
            config.eps_list,
            tol=1e-12,
            state_tol=config.state_tol,
        )
    )

    picard = []
    picard.append(
        check_picard_newton_agreement(
            unit_square_instance(config.grid_n, f_plus=0.0, f_minus=0.0),
            Smoother(0.2),
            tol=config.state_tol,
            state_tol=config.state_tol,
        )
    )
    picard.append(
        check_picard_newton_agreement(
            strip_instance(nx=129, ny=9), Smoother(0.2), tol=1e-8, state_tol=1e-10
        )
    )
    rand_phi = ScalarField(
        data.grid, 0.3 * smooth_direction(data.grid, rng).values
    )
    picard.append(
        check_picard_newton_agreement(
            data.with_phi(rand_phi), Smoother(0.2), tol=1e-8, state_tol=1e-10
        )
    )
    reports.append(_aggregate("picard_newton_agreement", picard))
    return reports
