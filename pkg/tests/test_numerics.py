import math
import numpy as np
import pytest

from ringnls import numerics
from ringnls.util import UsageError, NumericalFailure


def test_grid_basics():
	grid = numerics.Grid1D(-60.0, 60.0, 6001)
	assert grid.h == pytest.approx(0.02)
	assert grid.is_profile_grid()
	assert numerics.Grid1D.from_spacing(-60.0, 60.0, 0.02) == grid
	with pytest.raises(UsageError):
		numerics.Grid1D(0.0, 1.0, 8)
	with pytest.raises(UsageError):
		numerics.Grid1D(1.0, 0.0, 100)


def test_fields_validate_their_samples(small_grid):
	with pytest.raises(UsageError):
		numerics.RealField(small_grid, np.zeros(10))
	with pytest.raises(NumericalFailure):
		numerics.RealField(small_grid, np.full(small_grid.n, np.nan))
	with pytest.raises(UsageError):
		numerics.RealField(small_grid, np.zeros(small_grid.n, dtype=complex))
	f = numerics.ComplexField(small_grid, np.ones(small_grid.n))
	assert f.is_complex


def test_integrate_zero_and_ground_state_integrals(gs33):
	grid = gs33.grid
	assert numerics.integrate(numerics.RealField(grid, np.zeros(grid.n))) == 0.0
	Q = gs33.Q.values
	Qp = gs33.Qp.values
	assert numerics.integrate(numerics.RealField(grid, Q ** 2)) == pytest.approx(4.0, abs=1e-9)
	assert numerics.integrate(numerics.RealField(grid, Qp ** 2)) == pytest.approx(4.0 / 3.0, abs=1e-8)


def test_simpson_is_exact_for_cubics_with_odd_interval_count():
	grid = numerics.Grid1D(0.0, 1.0, 21)
	y = grid.nodes
	assert numerics.integrate_values(y ** 3 - y, grid) == pytest.approx(0.25 - 0.5, abs=1e-14)
	odd = numerics.Grid1D(0.0, 1.0, 22)
	assert numerics.integrate_values(np.ones(22), odd) == pytest.approx(1.0, abs=1e-14)


def test_derivative_of_linear_function(small_grid):
	f = numerics.RealField(small_grid, small_grid.nodes)
	d = numerics.derivative(f, 1)
	assert np.allclose(d.values, 1.0, atol=1e-12)


def test_derivative_of_ground_state(gs33):
	d = numerics.derivative(gs33.Q, 1)
	i = int(np.argmin(np.abs(gs33.grid.nodes - 1.0)))
	assert d.values[i] == pytest.approx(-0.6979912, abs=1e-6)


def test_second_derivative_of_sine():
	grid = numerics.Grid1D(0.0, 2.0 * math.pi, 401)
	y = grid.nodes
	d2 = numerics.derivative_values(np.sin(y), grid.h, 2)
	assert np.max(np.abs(d2 + np.sin(y))) < 1e-6
	with pytest.raises(UsageError):
		numerics.derivative_values(np.sin(y), grid.h, 3)


def test_simpson_converges_at_fourth_order():
	errors = []
	for n in (17, 33, 65):
		grid = numerics.Grid1D(0.0, 1.0, n)
		errors.append(abs(numerics.integrate_values(np.exp(grid.nodes), grid) - (math.e - 1.0)))
	assert errors[0] / errors[1] > 12.0
	assert errors[1] / errors[2] > 12.0


@pytest.mark.parametrize('order', [1, 2])
def test_differences_converge_at_fourth_order(order):
	errors = []
	for n in (101, 201):
		grid = numerics.Grid1D(0.0, 2.0 * math.pi, n)
		y = grid.nodes
		exact = np.cos(y) if order == 1 else -np.sin(y)
		errors.append(np.max(np.abs(numerics.derivative_values(np.sin(y), grid.h, order) - exact)))
	assert errors[0] / errors[1] > 12.0


def test_h1mu_norm(gs33):
	grid = gs33.grid
	w = numerics.WeightSpec(1e-8, 0.5773502691896258, 3, 0.5)
	assert numerics.h1mu_norm(numerics.ComplexField(grid, np.zeros(grid.n)), w) == 0.0
	norm = numerics.h1mu_norm(gs33.Q, w)
	assert norm ** 2 == pytest.approx(4.0 + 4.0 / 3.0, rel=1e-6)
	scaled = numerics.h1mu_norm(numerics.ComplexField(grid, (2.0 - 1.0j) * gs33.Q.values), w)
	assert scaled == pytest.approx(math.sqrt(5.0) * norm, rel=1e-12)
	with pytest.raises(UsageError):
		numerics.WeightSpec(0.0, 0.5, 3, 0.5)


def test_weight_vanishes_behind_the_origin():
	w = numerics.WeightSpec(0.2, 0.5, 3, 0.5)
	y = np.array([-20.0, -10.0, 0.0, 10.0])
	mu = w.mu(y)
	assert mu[0] == 0.0 and mu[1] == 0.0
	assert mu[2] == 1.0
	assert mu[3] == pytest.approx(4.0)


def test_solve_banded_identity():
	n = 30
	A = numerics.BandedMatrix.from_diagonals([np.ones(n)], [0])
	rhs = np.arange(n, dtype=float)
	sol = numerics.solve_banded(A, rhs)
	assert np.array_equal(sol.x, rhs)
	assert sol.residual == 0.0


def test_solve_banded_reproduces_quadratic():
	n = 50
	h = 1.0 / (n + 1)
	x = h * np.arange(1, n + 1)
	A = numerics.BandedMatrix.from_diagonals([np.ones(n - 1) / h ** 2, -2.0 * np.ones(n) / h ** 2, np.ones(n - 1) / h ** 2],
											 [-1, 0, 1])
	sol = numerics.solve_banded(A, np.full(n, -2.0))
	assert np.max(np.abs(sol.x - x * (1.0 - x))) < 1e-10


def test_solve_banded_random_tridiagonal_residual():
	rng = np.random.default_rng(3)
	n = 200
	lower = rng.uniform(-1.0, 1.0, n - 1)
	upper = rng.uniform(-1.0, 1.0, n - 1)
	main = 4.0 + rng.uniform(0.0, 1.0, n)
	A = numerics.BandedMatrix.from_diagonals([lower, main, upper], [-1, 0, 1])
	rhs = rng.standard_normal(n) + 1j * rng.standard_normal(n)
	sol = numerics.solve_banded(A, rhs)
	assert sol.residual <= numerics.BANDED_RESIDUAL_TOL
	assert np.allclose(A.to_sparse() @ sol.x, rhs)


def test_solve_banded_singular_matrix():
	n = 20
	A = numerics.BandedMatrix.from_diagonals([np.zeros(n)], [0])
	with pytest.raises(NumericalFailure):
		numerics.solve_banded(A, np.ones(n))


def test_solve_banded_enforces_the_residual_bound(monkeypatch):
	n = 30
	A = numerics.BandedMatrix.from_diagonals([np.ones(n)], [0])
	rhs = np.ones(n)
	monkeypatch.setattr(numerics.scipy.linalg, 'solve_banded', lambda l_and_u, ab, b, check_finite=True: b + 1e-6)
	with pytest.raises(NumericalFailure):
		numerics.solve_banded(A, rhs)
	sol = numerics.solve_banded(A, rhs, check=False)
	assert sol.residual == pytest.approx(1e-6, rel=1e-6)
	assert numerics.solve_banded(A, rhs, tol=1e-5).residual == sol.residual


def test_field_csv_round_trip(tmp_path, small_grid):
	f = numerics.ComplexField(small_grid, np.exp(1j * small_grid.nodes))
	csv_file = str(tmp_path / 'field.csv')
	numerics.writeFieldCsv(f, csv_file)
	with open(csv_file) as ocf:
		assert ocf.readline().strip() == 'y,re,im'
	g = numerics.readFieldCsv(csv_file)
	assert g.grid == small_grid
	assert np.array_equal(g.values, f.values)
