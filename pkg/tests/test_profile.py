import math
import numpy as np
import pytest

from ringnls import profile, numerics, groundstate, linops
from ringnls.profile import FieldSeries
from ringnls.util import UsageError


def test_series_product_truncates():
	f = np.array([1.0, 2.0, 3.0])
	a = FieldSeries(3, {(0, 0): 1.0, (1, 0): f})
	c = FieldSeries(3, {(0, 0): 1.0, (1, 0): -f})
	prod = a * c
	assert np.array_equal(prod[(2, 0)], -f * f)
	assert np.all(np.asarray(prod[(1, 0)]) == 0.0)
	assert prod[(0, 0)] == 1.0
	assert (a * a * a).keys() == [(0, 0), (1, 0), (2, 0)]
	with pytest.raises(UsageError):
		a[(2, 1)] = 1.0


def test_series_inverse_is_geometric():
	x = FieldSeries(5, {(0, 0): 1.0, (1, 0): 0.5})
	inv = profile.series_invert_unit(x)
	for j in range(5):
		assert inv[(j, 0)] == pytest.approx((-0.5) ** j)
	assert (inv * x)[(3, 0)] == pytest.approx(0.0, abs=1e-15)
	with pytest.raises(UsageError):
		profile.series_invert_unit(FieldSeries(3, {(1, 0): 1.0}))


def test_binomial_series_terminates_for_integer_exponent():
	z = FieldSeries(6, {(1, 0): 1.0, (0, 1): 1.0})
	square = profile.binomial_series(z, 2.0)
	assert square[(0, 0)] == 1.0
	assert square[(1, 0)] == 2.0
	assert square[(1, 1)] == 2.0
	assert square[(3, 0)] == 0.0


def test_series_derivatives_and_evaluation():
	s = FieldSeries(4, {(0, 0): 1.0, (2, 1): 3.0, (0, 2): 2.0})
	assert s.deriv_b()[(1, 1)] == 6.0
	assert s.deriv_bt()[(0, 1)] == 4.0
	assert s.evaluate(0.5, 2.0) == pytest.approx(1.0 + 3.0 * 0.25 * 2.0 + 2.0 * 4.0)


def test_nonlinearity_of_unperturbed_profile(gs33):
	P = FieldSeries(3, {(0, 0): gs33.Q.values.astype(complex)}, gs33.grid)
	F = profile.nonlinearity_series(P, gs33)
	assert np.max(np.abs(F[(0, 0)] - gs33.Q.values ** 3)) < 1e-14
	assert F.keys() == [(0, 0)]


def test_nonlinearity_first_order_matches_linearization(gs33):
	Q = gs33.Q.values
	T = np.exp(-gs33.grid.nodes ** 2)
	S = gs33.grid.nodes * np.exp(-gs33.grid.nodes ** 2)
	P = FieldSeries(3, {(0, 0): Q.astype(complex), (1, 0): T + 1j * S}, gs33.grid)
	F = profile.nonlinearity_series(P, gs33)
	expected = 3.0 * Q ** 2 * T + 1j * Q ** 2 * S
	assert np.max(np.abs(F[(1, 0)] - expected)) < 1e-12


def test_nonlinearity_needs_Q_as_constant(gs33):
	P = FieldSeries(3, {(0, 0): 2.0 * gs33.Q.values.astype(complex)}, gs33.grid)
	with pytest.raises(UsageError):
		profile.nonlinearity_series(P, gs33)


def test_vanishing_and_leading_constants(exp33):
	for key in [(1, 0), (0, 1), (2, 0), (0, 2)]:
		assert abs(exp33.c1[key]) <= 1e-6
		assert abs(exp33.c2[key]) <= 1e-6
	assert abs(exp33.c1[(1, 1)]) <= 1e-6
	assert exp33.c2[(1, 1)] == pytest.approx(-2.0, abs=1e-6)


def test_multiplier_tables(exp33):
	assert exp33.P2[(1, 1)] == -2.0
	assert all(3 <= j + l <= exp33.k - 1 for (j, l) in exp33.P1)
	assert set(exp33.T) == {(j, d - j) for d in range(1, exp33.k) for j in range(d + 1)}


def test_profile_invariants_pass(exp33):
	rows = profile.check_profile_invariants(exp33)
	failed = [row for row in rows if not row[4]]
	assert failed == []


def test_reconstruction_is_exact_order_by_order(exp33):
	defects = profile.reconstruction_defects(exp33)
	for key, value in defects.items():
		assert value < 1e-7, key


def test_parity_of_low_orders(exp33):
	report = profile.parity_report(exp33)
	for (name, j, l), (parity, defect) in report.items():
		if j + l > 3 or parity == 0:
			continue
		assert parity == profile.expected_parity(name, j)
		assert defect < 1e-6


def test_cutoff_step():
	zeta, dzeta = profile.zeta_values(np.array([-3.0, -2.0, -1.5, -1.0, 0.0]))
	assert zeta[0] == 0.0 and zeta[1] == 0.0
	assert zeta[2] == pytest.approx(0.5)
	assert zeta[3] == 1.0 and zeta[4] == 1.0
	assert dzeta[2] > 0.0
	with pytest.raises(UsageError):
		profile.cutoff_zeta(0.0, numerics.Grid1D(-1.0, 1.0, 21))


def test_assembled_profile_small_b(exp33, gs33):
	b = 1e-6
	Qb = profile.assemble_Qb(exp33, b, 0.0)
	y = gs33.grid.nodes
	ideal = gs33.Q.values * np.exp(-1j * exp33.params.beta_inf * y)
	inside = np.abs(y) <= 20.0
	assert np.max(np.abs(Qb.values[inside] - ideal[inside])) < 1e-3
	with pytest.raises(UsageError):
		profile.assemble_Qb(exp33, 0.5, 0.0)


def test_profile_at_matches_nodes(exp33, gs33):
	b = 1e-2
	y = gs33.grid.nodes
	on_nodes = profile.profile_at(exp33, b, 0.01, y)
	assert np.max(np.abs(on_nodes - profile.assemble_Qb(exp33, b, 0.01).values)) < 1e-12
	outside = profile.profile_at(exp33, b, 0.0, np.array([-70.0, 70.0]))
	assert np.all(outside == 0.0)


def test_residual_decreases_with_b(exp33):
	_, coarse = profile.residual_Psi(exp33, 10 ** -1.5, 0.0, cutoff=False)
	_, fine = profile.residual_Psi(exp33, 1e-2, 0.0, cutoff=False)
	assert fine < coarse
	assert math.log10(coarse / fine) > 2.0


def test_summed_orders_match_direct_residual(exp33):
	b = 10 ** -1.5
	psi, summed = profile.residual_orders(exp33, b, 0.0)
	_, direct = profile.residual_Psi(exp33, b, 0.0, cutoff=False)
	assert psi.grid == exp33.grid
	assert summed == pytest.approx(direct, rel=1e-2)


def test_summed_orders_scale_like_b_to_the_k(exp33):
	_, coarse = profile.residual_orders(exp33, 1e-2, 0.0)
	_, fine = profile.residual_orders(exp33, 1e-3, 0.0)
	assert fine > 0.0
	assert math.log10(coarse / fine) >= exp33.k - 0.3


def test_residual_methods_are_checked(exp33):
	with pytest.raises(UsageError):
		profile.residual_orders(exp33, 1e-2, 0.0, order=exp33.k)
	with pytest.raises(UsageError):
		profile.residual_slope(exp33, [1e-3, 1e-2], cutoff=True)
	with pytest.raises(UsageError):
		profile.residual_slope(exp33, [1e-3, 1e-2], method='spline')


def test_save_and_load(exp33, tmp_path):
	outdir = str(tmp_path / 'expansion')
	profile.save_expansion(exp33, outdir)
	loaded = profile.load_expansion(outdir)
	assert loaded.params == exp33.params
	assert loaded.c1 == exp33.c1 and loaded.c2 == exp33.c2
	for key in exp33.T:
		assert np.array_equal(loaded.T[key].values, exp33.T[key].values)
		assert np.array_equal(loaded.S[key].values, exp33.S[key].values)
	assert loaded.diagnostics['solvability_plus'] == exp33.diagnostics['solvability_plus']
	with pytest.raises(UsageError):
		profile.load_expansion(str(tmp_path / 'missing'))


@pytest.mark.slow
def test_residual_slope_order(exp33, config):
	report = profile.residual_slope(exp33, config['profile']['residual_b_values'])
	assert report['slope'] >= exp33.k - 0.3


@pytest.mark.slow
@pytest.mark.parametrize('N, p', [(2, 4.0), (4, 2.5), (5, 2.0)])
def test_constants_other_points(N, p, profile_grid):
	params = groundstate.make_params(N, p)
	gs = groundstate.eval_groundstate(params, profile_grid)
	exp = profile.build_expansion(params, gs, pair=linops.build_linearized_pair(gs))
	rows = profile.check_profile_invariants(exp)
	assert [row for row in rows if not row[4]] == []


@pytest.mark.slow
def test_residual_slope_over_one_and_a_half_decades(exp33):
	b_values = np.logspace(-3.0, -1.5, 7)
	report = profile.residual_slope(exp33, b_values)
	assert report['method'] == 'orders'
	assert report['slope'] >= exp33.k - 0.3
	assert np.all(np.diff(report['norms']) > 0.0)
