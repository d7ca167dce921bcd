import numpy as np
import pytest

from membrane_opt.field import (
    BoundaryData,
    Grid2D,
    ScalarField,
    SolverError,
    apply_laplacian,
    h1_seminorm_sq,
    l2_inner,
    l2_norm,
    read_field_csv,
    smallest_eigenvalue,
    solve_spd,
    write_field_csv,
)

from _oracles import sparse_spd_solve


def unit_grid(n):
    return Grid2D(n, n)


class TestGrid:
    def test_spacing(self):
        g = Grid2D(5, 9, 0.0, 1.0, -1.0, 1.0)
        assert g.hx == pytest.approx(0.25)
        assert g.hy == pytest.approx(0.25)
        assert g.n_nodes == 45
        assert g.n_boundary == 2 * (5 + 9) - 4

    def test_too_small_rejected(self):
        with pytest.raises(ValueError):
            Grid2D(2, 5)
        with pytest.raises(ValueError):
            Grid2D(5, 5, 1.0, 0.0)

    def test_boundary_enumeration_row_major(self):
        g = Grid2D(3, 3)
        assert g.boundary_indices().tolist() == [0, 1, 2, 3, 5, 6, 7, 8]


class TestScalarField:
    def test_length_checked(self):
        g = unit_grid(4)
        with pytest.raises(ValueError):
            ScalarField(g, np.zeros(5))

    def test_finite_checked(self):
        g = unit_grid(4)
        vals = np.zeros(16)
        vals[3] = np.nan
        with pytest.raises(ValueError):
            ScalarField(g, vals)

    def test_boundary_sign_flag(self):
        g = unit_grid(5)
        BoundaryData.from_function(g, lambda x, y: x - 0.5, sign_changing=True)
        with pytest.raises(ValueError):
            BoundaryData.from_function(g, lambda x, y: x + 1.0, sign_changing=True)


class TestLaplacian:
    def test_constant_is_harmonic(self):
        g = unit_grid(7)
        out = apply_laplacian(ScalarField.constant(g, 3.7))
        assert np.all(out.values == 0.0)

    def test_linear_is_harmonic(self):
        g = unit_grid(5)  # h = 0.25
        out = apply_laplacian(ScalarField.from_function(g, lambda x, y: x))
        assert np.abs(out.values).max() < 1e-13

    def test_quadratic_stencil_exact(self):
        g = unit_grid(5)
        out = apply_laplacian(ScalarField.from_function(g, lambda x, y: x**2 + y**2))
        assert out.interior() == pytest.approx(np.full((3, 3), 4.0), abs=1e-12)
        ring = out.values[g.boundary_indices()]
        assert np.all(ring == 0.0)

    def test_linearity(self):
        g = unit_grid(9)
        rng = np.random.default_rng(7)
        u = ScalarField(g, rng.normal(size=g.n_nodes))
        v = ScalarField(g, rng.normal(size=g.n_nodes))
        a, b = 1.7, -0.3
        combo = apply_laplacian(ScalarField(g, a * u.values + b * v.values))
        split = a * apply_laplacian(u).values + b * apply_laplacian(v).values
        assert combo.values == pytest.approx(split, rel=1e-12, abs=1e-12)


class TestInnerProducts:
    def test_ones_count_interior(self):
        g = unit_grid(5)
        one = ScalarField.constant(g, 1.0)
        assert l2_inner(one, one) == pytest.approx(g.hx * g.hy * 3 * 3, rel=1e-15)

    def test_zero(self):
        g = unit_grid(5)
        assert l2_inner(ScalarField.zeros(g), ScalarField.constant(g, 2.0)) == 0.0

    def test_sine_mass(self):
        # integral of sin^2(pi x) sin^2(pi y) over the unit square is 1/4
        g = unit_grid(65)
        u = ScalarField.from_function(g, lambda x, y: np.sin(np.pi * x) * np.sin(np.pi * y))
        assert l2_inner(u, u) == pytest.approx(0.25, abs=2e-3)

    def test_grid_mismatch_rejected(self):
        with pytest.raises(ValueError):
            l2_inner(ScalarField.zeros(unit_grid(5)), ScalarField.zeros(unit_grid(7)))

    def test_h1_constant(self):
        assert h1_seminorm_sq(ScalarField.constant(unit_grid(9), 4.0)) == 0.0

    def test_h1_linear(self):
        g = unit_grid(9)
        u = ScalarField.from_function(g, lambda x, y: x)
        # covered edge set has measure ny/(ny-1)
        assert h1_seminorm_sq(u) == pytest.approx(9.0 / 8.0, rel=1e-12)

    def test_h1_sine_dirichlet_energy(self):
        # closed form: integral of |grad sin(pi x) sin(pi y)|^2 = pi^2 / 2
        g = unit_grid(65)
        u = ScalarField.from_function(g, lambda x, y: np.sin(np.pi * x) * np.sin(np.pi * y))
        assert h1_seminorm_sq(u) == pytest.approx(np.pi**2 / 2.0, abs=0.02)


class TestSolveSpd:
    def test_harmonic_linear(self):
        g = unit_grid(17)
        bc = BoundaryData.from_function(g, lambda x, y: x)
        u = solve_spd(ScalarField.zeros(g), ScalarField.zeros(g), bc, tol=1e-12)
        exact = ScalarField.from_function(g, lambda x, y: x)
        assert np.abs(u.values - exact.values).max() < 1e-10

    def test_residual_contract(self):
        g = unit_grid(33)
        d = ScalarField.constant(g, 1.0)
        rhs = ScalarField.constant(g, 1.0)
        u = solve_spd(d, rhs, BoundaryData.zeros(g), tol=1e-12)
        resid = -apply_laplacian(u).interior() + u.interior() - 1.0
        assert np.abs(resid).max() < 1e-10

    def test_manufactured_sine(self):
        g = unit_grid(65)
        rhs = ScalarField.from_function(
            g, lambda x, y: 2.0 * np.pi**2 * np.sin(np.pi * x) * np.sin(np.pi * y)
        )
        u = solve_spd(ScalarField.zeros(g), rhs, BoundaryData.zeros(g), tol=1e-11)
        exact = ScalarField.from_function(g, lambda x, y: np.sin(np.pi * x) * np.sin(np.pi * y))
        assert np.abs(u.values - exact.values).max() < 2e-3

    def test_negative_d_rejected(self):
        g = unit_grid(5)
        with pytest.raises(ValueError):
            solve_spd(ScalarField.constant(g, -1.0), ScalarField.zeros(g), BoundaryData.zeros(g))

    def test_nonconvergence_reports_residual(self):
        g = unit_grid(17)
        rhs = ScalarField.constant(g, 1.0)
        with pytest.raises(SolverError) as err:
            solve_spd(ScalarField.zeros(g), rhs, BoundaryData.zeros(g), tol=1e-12, max_iter=2)
        assert err.value.residual is not None and err.value.residual > 0.0

    def test_against_direct_sparse_solve(self):
        rng = np.random.default_rng(11)
        for trial in range(5):
            g = Grid2D(int(rng.integers(8, 20)), int(rng.integers(8, 20)),
                       0.0, 1.0 + trial * 0.3, -0.5, 1.0)
            dvals = rng.uniform(0.0, 3.0, g.n_nodes)
            rhsvals = rng.normal(size=g.n_nodes)
            bcvals = rng.normal(size=g.n_boundary)
            bc = BoundaryData(bcvals)
            u = solve_spd(ScalarField(g, dvals), ScalarField(g, rhsvals), bc, tol=1e-12)
            ref = sparse_spd_solve(g, dvals, rhsvals, bc.embed(g))
            assert np.abs(u.values - ref).max() < 1e-9


class TestGreenPoincare:
    def test_green_identity_symmetry(self):
        g = unit_grid(17)
        rng = np.random.default_rng(3)
        mask = np.ones(g.shape)
        mask[0, :] = mask[-1, :] = mask[:, 0] = mask[:, -1] = 0.0
        u = ScalarField(g, (rng.normal(size=g.shape) * mask).ravel())
        v = ScalarField(g, (rng.normal(size=g.shape) * mask).ravel())
        a = l2_inner(apply_laplacian(u), v)
        b = l2_inner(u, apply_laplacian(v))
        assert abs(a - b) <= 1e-12 * max(abs(a), abs(b))

    def test_poincare_with_computed_eigenvalue(self):
        g = unit_grid(33)
        lam1 = smallest_eigenvalue(g, tol=1e-10)
        rng = np.random.default_rng(5)
        mask = np.ones(g.shape)
        mask[0, :] = mask[-1, :] = mask[:, 0] = mask[:, -1] = 0.0
        for _ in range(10):
            u = ScalarField(g, (rng.normal(size=g.shape) * mask).ravel())
            assert h1_seminorm_sq(u) >= lam1 * l2_inner(u, u) * (1.0 - 1e-10)

    def test_h1_equals_quadratic_form_on_zero_ring(self):
        # the edge rule ties the seminorm to the 5-point operator exactly
        g = Grid2D(9, 13, 0.0, 2.0, 0.0, 1.0)
        rng = np.random.default_rng(9)
        mask = np.ones(g.shape)
        mask[0, :] = mask[-1, :] = mask[:, 0] = mask[:, -1] = 0.0
        u = ScalarField(g, (rng.normal(size=g.shape) * mask).ravel())
        quad = -l2_inner(apply_laplacian(u), u)
        assert h1_seminorm_sq(u) == pytest.approx(quad, rel=1e-12)


class TestEigenvalue:
    def test_unit_square_closed_form(self):
        g = unit_grid(33)
        lam = smallest_eigenvalue(g, tol=1e-10)
        h = 1.0 / 32.0
        ref = (8.0 / h**2) * np.sin(np.pi * h / 2.0) ** 2
        assert abs(lam - ref) <= 1e-8 * ref

    def test_continuum_discrepancy_is_order_h2(self):
        g = unit_grid(33)
        lam = smallest_eigenvalue(g, tol=1e-10)
        cont = 2.0 * np.pi**2
        gap = abs(lam - cont)
        assert 1e-4 < gap < 0.02  # O(h^2) below the continuum value

    def test_rectangle(self):
        # [0,2] x [0,1] at h = 1/32 on both axes
        g = Grid2D(65, 33, 0.0, 2.0, 0.0, 1.0)
        lam = smallest_eigenvalue(g, tol=1e-10)
        assert lam == pytest.approx(np.pi**2 * (0.25 + 1.0), abs=0.05)


class TestFieldCsv:
    def test_round_trip_bit_exact(self, tmp_path):
        g = Grid2D(7, 5, -1.0, 2.0, 0.0, 0.5)
        rng = np.random.default_rng(13)
        u = ScalarField(g, rng.normal(size=g.n_nodes))
        p1 = tmp_path / "a.csv"
        p2 = tmp_path / "b.csv"
        write_field_csv(u, p1)
        v = read_field_csv(p1)
        assert v.grid == g
        assert np.array_equal(v.values, u.values)
        write_field_csv(v, p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_malformed_rejected(self, tmp_path):
        p = tmp_path / "bad.csv"
        p.write_text("3,3,0.0,1.0,0.0,1.0\n1,2,3\n4,5\n7,8,9\n")
        with pytest.raises(ValueError):
            read_field_csv(p)
