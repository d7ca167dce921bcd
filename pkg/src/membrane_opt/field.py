"""Uniform-grid discrete calculus for rectangle domains.

Fields live on an nx-by-ny node grid that includes the Dirichlet boundary
ring.  Values are stored flat in row-major order with y outer and x inner,
so node (i, j) sits at flat index j*nx + i.  Operators treat boundary rows
as identity; the L2 inner product integrates interior nodes only (rectangle
rule) and the H1 seminorm sums forward-difference edges.  With these
conventions the discrete Green identity

    <lap u, v> = <u, lap v>        for u, v vanishing on the ring

and the discrete Poincare inequality

    |u|_{H1}^2 >= lambda_1 * ||u||^2

hold exactly, with lambda_1 the smallest eigenvalue of the 5-point
Laplacian; the comparison and Lipschitz suites rely on both.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

import numpy as np

__all__ = [
    "Grid2D",
    "ScalarField",
    "BoundaryData",
    "SolverError",
    "apply_laplacian",
    "l2_inner",
    "l2_norm",
    "h1_seminorm_sq",
    "h1_norm",
    "solve_spd",
    "smallest_eigenvalue",
    "harmonic_extension",
    "read_field_csv",
    "write_field_csv",
]


class SolverError(RuntimeError):
    """An iterative solve failed to reach its tolerance."""

    def __init__(self, message: str, residual: float | None = None):
        super().__init__(message)
        self.residual = residual


@dataclass(frozen=True)
class Grid2D:
    """Uniform rectangular grid; node counts include the boundary ring."""

    nx: int
    ny: int
    ax: float = 0.0
    bx: float = 1.0
    ay: float = 0.0
    by: float = 1.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "nx", int(self.nx))
        object.__setattr__(self, "ny", int(self.ny))
        for name in ("ax", "bx", "ay", "by"):
            object.__setattr__(self, name, float(getattr(self, name)))
        if self.nx < 3 or self.ny < 3:
            raise ValueError("Grid2D needs at least 3 nodes per axis")
        if not (self.bx > self.ax and self.by > self.ay):
            raise ValueError("Grid2D corners must satisfy ax < bx and ay < by")

    @property
    def hx(self) -> float:
        return (self.bx - self.ax) / (self.nx - 1)

    @property
    def hy(self) -> float:
        return (self.by - self.ay) / (self.ny - 1)

    @property
    def n_nodes(self) -> int:
        return self.nx * self.ny

    @property
    def shape(self) -> tuple[int, int]:
        """Row-major array shape, y outer."""
        return (self.ny, self.nx)

    @property
    def n_boundary(self) -> int:
        return 2 * (self.nx + self.ny) - 4

    def xs(self) -> np.ndarray:
        return np.linspace(self.ax, self.bx, self.nx)

    def ys(self) -> np.ndarray:
        return np.linspace(self.ay, self.by, self.ny)

    def meshgrid(self) -> tuple[np.ndarray, np.ndarray]:
        """Node coordinates as a pair of (ny, nx) arrays."""
        return np.meshgrid(self.xs(), self.ys())

    def boundary_indices(self) -> np.ndarray:
        """Flat indices of the boundary ring, in row-major order."""
        return _boundary_indices(self)


@lru_cache(maxsize=None)
def _boundary_indices(grid: Grid2D) -> np.ndarray:
    mask = np.zeros(grid.shape, dtype=bool)
    mask[0, :] = True
    mask[-1, :] = True
    mask[:, 0] = True
    mask[:, -1] = True
    idx = np.flatnonzero(mask.ravel())
    idx.setflags(write=False)
    return idx


@dataclass
class ScalarField:
    """Nodal real values on a Grid2D, boundary ring included."""

    grid: Grid2D
    values: np.ndarray

    def __post_init__(self) -> None:
        vals = np.ascontiguousarray(self.values, dtype=float).ravel()
        if vals.shape != (self.grid.n_nodes,):
            raise ValueError(
                f"field needs {self.grid.n_nodes} values, got {vals.shape[0]}"
            )
        if not np.all(np.isfinite(vals)):
            raise ValueError("field values must be finite")
        self.values = vals

    @classmethod
    def zeros(cls, grid: Grid2D) -> "ScalarField":
        return cls(grid, np.zeros(grid.n_nodes))

    @classmethod
    def constant(cls, grid: Grid2D, c: float) -> "ScalarField":
        return cls(grid, np.full(grid.n_nodes, float(c)))

    @classmethod
    def from_function(cls, grid: Grid2D, fn) -> "ScalarField":
        """Sample fn(x, y) at every node; fn may return a scalar or array."""
        xx, yy = grid.meshgrid()
        vals = np.broadcast_to(np.asarray(fn(xx, yy), dtype=float), grid.shape)
        return cls(grid, vals.ravel().copy())

    def as_matrix(self) -> np.ndarray:
        """(ny, nx) view of the values, y outer."""
        return self.values.reshape(self.grid.shape)

    def interior(self) -> np.ndarray:
        return self.as_matrix()[1:-1, 1:-1]

    def copy(self) -> "ScalarField":
        return ScalarField(self.grid, self.values.copy())


@dataclass
class BoundaryData:
    """Values on the boundary ring, ordered by the grid's ring enumeration.

    When sign_changing is set the constructor asserts min < 0 < max over
    the ring, the standing assumption for two-phase experiments.
    """

    values: np.ndarray
    sign_changing: bool = False

    def __post_init__(self) -> None:
        vals = np.ascontiguousarray(self.values, dtype=float).ravel()
        if not np.all(np.isfinite(vals)):
            raise ValueError("boundary values must be finite")
        if self.sign_changing and not (vals.min() < 0.0 < vals.max()):
            raise ValueError("sign_changing boundary data needs min < 0 < max")
        self.values = vals

    @classmethod
    def zeros(cls, grid: Grid2D) -> "BoundaryData":
        return cls(np.zeros(grid.n_boundary))

    @classmethod
    def constant(cls, grid: Grid2D, c: float) -> "BoundaryData":
        return cls(np.full(grid.n_boundary, float(c)))

    @classmethod
    def from_function(cls, grid: Grid2D, fn, sign_changing: bool = False) -> "BoundaryData":
        xx, yy = grid.meshgrid()
        full = np.broadcast_to(np.asarray(fn(xx, yy), dtype=float), grid.shape).ravel()
        return cls(full[grid.boundary_indices()].copy(), sign_changing)

    @classmethod
    def from_field(cls, u: ScalarField, sign_changing: bool = False) -> "BoundaryData":
        return cls(u.values[u.grid.boundary_indices()].copy(), sign_changing)

    def embed(self, grid: Grid2D) -> np.ndarray:
        """Flat array with the ring values set and zero interior."""
        idx = grid.boundary_indices()
        if self.values.shape != idx.shape:
            raise ValueError(
                f"boundary data has {self.values.size} values, grid ring has {idx.size}"
            )
        out = np.zeros(grid.n_nodes)
        out[idx] = self.values
        return out

    def max_abs(self) -> float:
        return float(np.abs(self.values).max())


def _check_same_grid(a: ScalarField, b: ScalarField, what: str) -> None:
    if a.grid != b.grid:
        raise ValueError(f"{what}: fields live on different grids")


def apply_laplacian(u: ScalarField) -> ScalarField:
    """5-point Laplacian at interior nodes; boundary nodes get 0."""
    g = u.grid
    v = u.as_matrix()
    out = np.zeros(g.shape)
    out[1:-1, 1:-1] = (
        (v[1:-1, :-2] - 2.0 * v[1:-1, 1:-1] + v[1:-1, 2:]) / g.hx**2
        + (v[:-2, 1:-1] - 2.0 * v[1:-1, 1:-1] + v[2:, 1:-1]) / g.hy**2
    )
    return ScalarField(g, out.ravel())


def l2_inner(a: ScalarField, b: ScalarField) -> float:
    """Discrete L2 product: hx*hy * sum over interior nodes of a*b."""
    _check_same_grid(a, b, "l2_inner")
    g = a.grid
    return float(g.hx * g.hy * np.sum(a.interior() * b.interior()))


def l2_norm(u: ScalarField) -> float:
    g = u.grid
    w = u.interior()
    return float(np.sqrt(g.hx * g.hy * np.sum(w * w)))


def h1_seminorm_sq(u: ScalarField) -> float:
    """Forward-difference edge rule for the squared H1 seminorm."""
    g = u.grid
    v = u.as_matrix()
    dx = np.diff(v, axis=1) / g.hx
    dy = np.diff(v, axis=0) / g.hy
    return float(g.hx * g.hy * (np.sum(dx * dx) + np.sum(dy * dy)))


def h1_norm(u: ScalarField) -> float:
    """Full H1 norm (seminorm squared plus L2 squared, square-rooted)."""
    return float(np.sqrt(h1_seminorm_sq(u) + l2_inner(u, u)))


def solve_spd(
    d: ScalarField,
    rhs: ScalarField,
    bc: BoundaryData,
    tol: float = 1e-10,
    max_iter: int = 50_000,
) -> ScalarField:
    """Solve -lap u + d*u = rhs in the interior with u = bc on the ring.

    Jacobi-preconditioned conjugate gradients on the SPD operator, matrix
    free.  The result satisfies ||-lap u + d*u - rhs|| <= tol*(1 + ||rhs||)
    in the discrete L2 norm.  Requires d >= 0 nodewise.
    """
    grid = d.grid
    _check_same_grid(d, rhs, "solve_spd")
    if tol <= 0.0:
        raise ValueError("solve_spd: tol must be positive")
    dmat = d.interior()
    if dmat.min() < 0.0:
        raise ValueError("solve_spd: diagonal term d must be nonnegative")
    hx2, hy2 = grid.hx**2, grid.hy**2
    cell = grid.hx * grid.hy

    def apply_op(w: np.ndarray) -> np.ndarray:
        # interior block of (-lap + d) w; w is the full (ny, nx) array
        return (
            -(
                (w[1:-1, :-2] - 2.0 * w[1:-1, 1:-1] + w[1:-1, 2:]) / hx2
                + (w[:-2, 1:-1] - 2.0 * w[1:-1, 1:-1] + w[2:, 1:-1]) / hy2
            )
            + dmat * w[1:-1, 1:-1]
        )

    u = bc.embed(grid).reshape(grid.shape)
    b = rhs.interior()
    rhs_norm = np.sqrt(cell * np.sum(b * b))
    target = tol * (1.0 + rhs_norm)

    r = b - apply_op(u)
    res = np.sqrt(cell * np.sum(r * r))
    if res <= target:
        return ScalarField(grid, u.ravel())

    diag = 2.0 / hx2 + 2.0 / hy2 + dmat
    z = r / diag
    p = np.zeros(grid.shape)
    p[1:-1, 1:-1] = z
    rz = np.sum(r * z)
    for _ in range(max_iter):
        ap = apply_op(p)
        alpha = rz / np.sum(p[1:-1, 1:-1] * ap)
        u[1:-1, 1:-1] += alpha * p[1:-1, 1:-1]
        r -= alpha * ap
        res = np.sqrt(cell * np.sum(r * r))
        if res <= target:
            return ScalarField(grid, u.ravel())
        z = r / diag
        rz_new = np.sum(r * z)
        p[1:-1, 1:-1] = z + (rz_new / rz) * p[1:-1, 1:-1]
        rz = rz_new
    raise SolverError(
        f"conjugate gradients stalled at residual {res:.3e} "
        f"(target {target:.3e}) after {max_iter} iterations",
        residual=float(res),
    )


def harmonic_extension(g: BoundaryData, grid: Grid2D, tol: float = 1e-12) -> ScalarField:
    """Discrete harmonic field matching g on the ring."""
    zero = ScalarField.zeros(grid)
    return solve_spd(zero, zero, g, tol=tol)


def smallest_eigenvalue(
    grid: Grid2D,
    tol: float = 1e-10,
    max_iter: int = 200,
    linear_tol: float = 1e-12,
) -> float:
    """Smallest eigenvalue of -lap with a zero Dirichlet ring.

    Inverse power iteration driven by solve_spd; stops once consecutive
    Rayleigh quotients agree to a relative tol.
    """
    if tol <= 0.0:
        raise ValueError("smallest_eigenvalue: tol must be positive")
    zero_d = ScalarField.zeros(grid)
    bc0 = BoundaryData.zeros(grid)
    start = np.zeros(grid.shape)
    start[1:-1, 1:-1] = 1.0
    v = ScalarField(grid, start.ravel())
    v = ScalarField(grid, v.values / l2_norm(v))
    lam_prev = None
    for _ in range(max_iter):
        w = solve_spd(zero_d, v, bc0, tol=linear_tol)
        ww = l2_inner(w, w)
        lam = l2_inner(w, v) / ww
        v = ScalarField(grid, w.values / np.sqrt(ww))
        if lam_prev is not None and abs(lam - lam_prev) <= tol * abs(lam):
            return float(lam)
        lam_prev = lam
    raise SolverError("inverse power iteration did not converge")


def write_field_csv(u: ScalarField, path) -> None:
    """Bit-exact field CSV: header nx,ny,ax,bx,ay,by, then ny rows of nx values.

    Floats are written as shortest round-trip decimals, so write/read/write
    reproduces the file byte for byte.
    """
    g = u.grid
    lines = [f"{g.nx},{g.ny},{g.ax!r},{g.bx!r},{g.ay!r},{g.by!r}"]
    for row in u.as_matrix():
        lines.append(",".join(repr(float(x)) for x in row))
    Path(path).write_text("\n".join(lines) + "\n", encoding="ascii")


def read_field_csv(path) -> ScalarField:
    lines = Path(path).read_text(encoding="ascii").strip().splitlines()
    head = lines[0].split(",")
    if len(head) != 6:
        raise ValueError(f"{path}: malformed field CSV header")
    nx, ny = int(head[0]), int(head[1])
    ax, bx, ay, by = (float(t) for t in head[2:6])
    grid = Grid2D(nx, ny, ax, bx, ay, by)
    if len(lines) != 1 + ny:
        raise ValueError(f"{path}: expected {ny} data rows, found {len(lines) - 1}")
    rows = []
    for k, line in enumerate(lines[1:]):
        row = [float(t) for t in line.split(",")]
        if len(row) != nx:
            raise ValueError(f"{path}: row {k + 1} has {len(row)} values, expected {nx}")
        rows.append(row)
    return ScalarField(grid, np.asarray(rows).ravel())
