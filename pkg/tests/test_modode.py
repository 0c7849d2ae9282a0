import dataclasses
import numpy as np
import pandas as pd
import pytest

from ringnls import modode
from ringnls.util import UsageError


@pytest.fixture(scope='module')
def leading_traj(params33):
	P1, P2 = modode.leading_tables()
	traj = modode.integrate_exact(params33, P1, P2, s0=100.0, g0=0.75, s_end=1e6, n_out=801)
	return modode.to_physical_time(traj)


def test_leading_tables():
	P1, P2 = modode.leading_tables()
	assert P1 == {}
	assert modode.eval_table(P2, 0.1, 0.01) == pytest.approx(-2e-3)
	assert modode.eval_table({}, 0.3, 0.2) == 0.0


def test_state_validation():
	with pytest.raises(UsageError):
		modode.ModState(0.1, 1.0, 0.0, 0.0, 0.0, 100.0)
	with pytest.raises(UsageError):
		modode.ModState(-0.1, 1.0, 0.0, 0.0, 0.1, 100.0)


def test_rhs_of_the_exact_system(params33):
	beta = params33.beta_inf
	lam, r = 0.01, 1.0
	b = 2.0 * beta * lam / (params33.alpha * r)
	state = modode.ModState(lam, r, 0.0, 0.0, b, 100.0)
	assert state.consistency_defect(params33.alpha, beta) < 1e-15
	lam_s, r_s, gamma_s, btilde_s, b_s = modode.rhs_exact(state, *modode.leading_tables(), params33)
	assert lam_s == pytest.approx(-lam * b)
	assert r_s == pytest.approx(-2.0 * beta * lam)
	assert gamma_s == pytest.approx(1.0 + beta ** 2)
	assert btilde_s == 0.0
	assert b_s == pytest.approx(-(1.0 - params33.alpha) * b * b)


def test_initialization_is_checked(params33):
	with pytest.raises(UsageError):
		modode.integrate_exact(params33, s0=10.0)
	with pytest.raises(UsageError):
		modode.integrate_exact(params33, g0=1.2)
	with pytest.raises(UsageError):
		modode.integrate_exact(params33, s0=100.0, s_end=50.0)


def test_trajectory_start_and_laws(leading_traj, params33):
	assert leading_traj.b[0] == pytest.approx(0.02)
	assert leading_traj.btilde[0] == pytest.approx(1e-4)
	assert leading_traj.g[0] == pytest.approx(0.75)
	defects = np.abs(leading_traj.b - 2.0 * (params33.beta_inf + leading_traj.btilde) * leading_traj.lam
					 / (params33.alpha * leading_traj.r)) / leading_traj.b
	assert np.max(defects) <= modode.CONSISTENCY_TOL
	residual = np.abs(leading_traj.b * (1.0 - params33.alpha) * leading_traj.s - 1.0)
	assert residual[-1] < 1e-6
	assert leading_traj.bootstrap_exit_s is None


def test_g_has_a_limit(leading_traj):
	g_inf, spread = modode.extract_g_infinity(leading_traj)
	assert g_inf == pytest.approx(0.75, rel=1e-8)
	assert spread < 1e-8


def test_physical_time_increases_to_zero(leading_traj):
	t = leading_traj.t
	assert leading_traj.has_physical_time
	assert np.all(np.diff(t) > 0.0)
	assert t[-1] < 0.0


def test_physical_time_needs_dense_solution(leading_traj):
	with pytest.raises(UsageError):
		modode.to_physical_time(dataclasses.replace(leading_traj, dense=None))


def test_power_laws(leading_traj, params33):
	fits = modode.fit_power_laws(leading_traj, params33)
	expected = modode.expected_exponents(params33)
	assert expected == pytest.approx({'lambda': 2.0 / 3.0, 'r': 1.0 / 3.0, 'gamma': -1.0 / 3.0})
	for name in ('lambda', 'r', 'gamma'):
		assert abs(fits[name]['exponent'] - expected[name]) <= 0.02 * abs(expected[name]), name


def test_fits_need_physical_time(params33):
	traj = modode.integrate_exact(params33, s_end=1e3, n_out=51)
	with pytest.raises(UsageError):
		modode.fit_power_laws(traj)


def test_perturbed_exponents(params33):
	theory = modode.perturbed_exponents(params33)
	assert theory['differences'] == pytest.approx(5.0 / 3.0)
	assert theory['bootstrap'] == pytest.approx(4.0 / 3.0)


def test_unforced_perturbed_system_has_no_differences(leading_traj, params33):
	result = modode.integrate_perturbed(params33, forcing_scale=0.0, traj=leading_traj, n_out=101)
	for name in ('b', 'g', 'btilde', 'gamma'):
		assert np.max(np.abs(result.worst[name])) == 0.0
		assert np.max(np.abs(result.random[name])) == 0.0
	assert result.fits['worst_differences'] is None
	frame = result.to_frame()
	assert list(frame.columns[:4]) == ['t', 'exact_b', 'worst_db', 'random_db']
	assert frame.shape[0] == 101


def test_perturbed_window_is_checked(leading_traj, params33):
	with pytest.raises(UsageError):
		modode.integrate_perturbed(params33, traj=leading_traj, tbar=-1e-30, t_under=leading_traj.t[0] * 2.0)


def test_trajectory_csv(leading_traj, tmp_path):
	csv_file = str(tmp_path / 'trajectory.csv')
	modode.writeTrajectoryCsv(leading_traj, csv_file)
	df = modode.readTrajectoryFrame(csv_file)
	assert list(df.columns) == modode.TRAJECTORY_COLUMNS
	assert np.allclose(df['b'].to_numpy(), leading_traj.b, rtol=1e-14, atol=0.0)
	pd.DataFrame({'s': [1.0]}).to_csv(csv_file, index=False)
	with pytest.raises(UsageError):
		modode.readTrajectoryFrame(csv_file)


@pytest.mark.slow
def test_power_laws_with_computed_tables(exp33, params33):
	traj = modode.to_physical_time(modode.integrate_exact(params33, exp33.P1, exp33.P2))
	fits = modode.fit_power_laws(traj, params33)
	for name in ('lambda', 'r', 'gamma'):
		assert abs(fits[name]['exponent'] - fits[name]['expected']) <= 0.02 * abs(fits[name]['expected'])


@pytest.mark.slow
def test_forced_differences_decay_rate(params33):
	result = modode.integrate_perturbed(params33)
	fit = result.fits['worst_differences']
	expected = result.fits['expected']['differences']
	assert abs(fit['exponent'] - expected) <= 0.1 * expected
