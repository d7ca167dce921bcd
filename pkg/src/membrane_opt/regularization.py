"""Smoothing kernels for the phase indicator and the positive part.

chi is a cubic-smoothstep ramp of width 2*eps: non-decreasing, C1, equal
to 0 below -eps and 1 above +eps, with the normalization
chi(t) + chi(-t) = 1 and chi(0) = 1/2.  phi_int is its exact
antiderivative, a convex surrogate of max(t, 0) whose error never exceeds
3*eps/16.  beta(u) = f_plus*chi(u) - f_minus*chi(-u) is the smoothed
two-phase source; its u-derivative beta_prime is nonnegative, which makes
the state operator monotone and the Newton systems SPD.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .field import BoundaryData, ScalarField

__all__ = [
    "Smoother",
    "chi",
    "chi_prime",
    "phi_int",
    "beta",
    "beta_prime",
    "default_width",
]


@dataclass(frozen=True)
class Smoother:
    """Smoothing width eps, in the same units as the state u."""

    eps: float

    def __post_init__(self) -> None:
        if not self.eps > 0.0:
            raise ValueError("Smoother needs eps > 0")


def chi(s: Smoother, t):
    """Smoothed step: S((t + eps)/(2 eps)) with S the cubic smoothstep."""
    x = np.clip((np.asarray(t, dtype=float) + s.eps) / (2.0 * s.eps), 0.0, 1.0)
    return x * x * (3.0 - 2.0 * x)


def chi_prime(s: Smoother, t):
    """Derivative of chi; zero for |t| >= eps, nonnegative everywhere."""
    x = np.clip((np.asarray(t, dtype=float) + s.eps) / (2.0 * s.eps), 0.0, 1.0)
    return 6.0 * x * (1.0 - x) / (2.0 * s.eps)


def phi_int(s: Smoother, t):
    """Antiderivative of chi: 0 below -eps, t above +eps, polynomial between."""
    t = np.asarray(t, dtype=float)
    x = np.clip((t + s.eps) / (2.0 * s.eps), 0.0, 1.0)
    core = 2.0 * s.eps * (x**3 - 0.5 * x**4)
    return np.where(t >= s.eps, t, core)


def _check_coefficients(fp: ScalarField, fm: ScalarField, u: ScalarField) -> None:
    if fp.grid != u.grid or fm.grid != u.grid:
        raise ValueError("beta: coefficient fields live on a different grid than u")
    if fp.values.min() < 0.0:
        raise ValueError("beta: f_plus must be nonnegative nodewise")
    if fm.values.min() < 0.0:
        raise ValueError("beta: f_minus must be nonnegative nodewise")


def beta(s: Smoother, u: ScalarField, fp: ScalarField, fm: ScalarField) -> ScalarField:
    """Smoothed source f_plus*chi(u) - f_minus*chi(-u), nodewise."""
    _check_coefficients(fp, fm, u)
    vals = fp.values * chi(s, u.values) - fm.values * chi(s, -u.values)
    return ScalarField(u.grid, vals)


def beta_prime(s: Smoother, u: ScalarField, fp: ScalarField, fm: ScalarField) -> ScalarField:
    """u-derivative of beta: f_plus*chi'(u) + f_minus*chi'(-u) >= 0."""
    _check_coefficients(fp, fm, u)
    vals = fp.values * chi_prime(s, u.values) + fm.values * chi_prime(s, -u.values)
    return ScalarField(u.grid, vals)


def default_width(g: BoundaryData) -> float:
    """Default smoothing width: a tenth of the boundary-data amplitude."""
    amp = g.max_abs()
    return 0.1 * amp if amp > 0.0 else 0.1
