import math
import types
import numpy as np
import pytest

from ringnls import decomp, modode, nlsim, numerics
from ringnls.util import UsageError


@pytest.fixture(scope='module')
def ring_mod(params33):
	lam, r = 0.05, 1.0
	return modode.ModState(lam, r, 0.3, 0.0, decomp.frozen_b(params33, lam, r, 0.0), 100.0, 0.0)


@pytest.fixture(scope='module')
def ring_wave(exp33, ring_mod):
	return nlsim.build_initial_data(exp33, ring_mod, nlsim.make_radial_grid(4.0, 8001, 3))


def test_frozen_b(params33):
	assert decomp.frozen_b(params33, 0.05, 1.0, 0.0) == pytest.approx(4.0 * params33.beta_inf * 0.05)


def test_residuals_of_zero_and_of_test_directions(gs33):
	grid = gs33.grid
	b = 1e-6
	zero = numerics.ComplexField(grid, np.zeros(grid.n))
	assert np.all(decomp.orthogonality_residuals(zero, b, gs33) == 0.0)
	phase = numerics.ComplexField(grid, 1j * gs33.Q.values)
	res = decomp.orthogonality_residuals(phase, b, gs33)
	assert res[2] == pytest.approx(2.0, abs=1e-8)
	assert np.max(np.abs(res[[0, 1, 3]])) < 1e-10
	shift = numerics.ComplexField(grid, gs33.Qp.values.astype(complex))
	res = decomp.orthogonality_residuals(shift, b, gs33)
	assert res[0] == pytest.approx(-2.0, abs=1e-8)
	assert np.max(np.abs(res[1:])) < 1e-10


def test_residuals_need_matching_grids(gs33, small_grid):
	with pytest.raises(UsageError):
		decomp.orthogonality_residuals(numerics.ComplexField(small_grid, np.zeros(small_grid.n)), 1e-3, gs33)


def test_determinant_limit(params33, exp33):
	assert decomp.expected_determinant(params33, 4.0) == pytest.approx(-16.0)
	assert decomp.jacobian_determinant(params33, 1e-6, 0.0, exp33) == pytest.approx(-16.0, rel=1e-3)


def test_morawetz_cutoff():
	phi = decomp.morawetz_cutoff_phi(np.array([0.0, 0.25, -0.5, 0.7]))
	assert phi[0] == 1.0
	assert phi[1] == pytest.approx(math.exp(-1.0 / 3.0))
	assert phi[2] == 0.0 and phi[3] == 0.0


def test_functional_vanishes_on_zero_error(exp33, ring_mod, ring_wave, gs33):
	zero = nlsim.WaveField(ring_wave.grid, np.zeros(ring_wave.grid.n), 0.0, 3.0)
	value, terms = decomp.energy_morawetz_I(zero, ring_mod, exp33)
	assert value == 0.0
	assert set(terms) == {'kinetic', 'mass', 'nonlinear', 'morawetz'}
	eps = numerics.ComplexField(gs33.grid, np.zeros(gs33.grid.n))
	assert decomp.renormalized_I(eps, ring_mod, exp33) == 0.0
	with pytest.raises(UsageError):
		decomp.coercivity_ratio(eps, ring_mod, exp33)


def test_orthogonalize_removes_the_four_components(gs33):
	y = gs33.grid.nodes
	values = (1.0 + 2.0j) * np.exp(-0.5 * (y - 1.0) ** 2) + 0.5 * np.exp(-0.25 * (y + 2.0) ** 2)
	b = 1e-2
	cleaned = decomp.orthogonalize(values, b, gs33)
	res = decomp.orthogonality_residuals(numerics.ComplexField(gs33.grid, cleaned), b, gs33)
	assert np.max(np.abs(res)) < 1e-12
	tests = decomp.test_functions(b, gs33)
	assert len(tests) == 4


def test_random_fields_are_admissible(exp33, ring_mod, gs33, params33):
	fields = decomp.random_orthogonal_fields(ring_mod, exp33, n_fields=3, amplitude=1e-3, seed=5)
	beta = params33.beta_inf + ring_mod.btilde
	weight = numerics.WeightSpec(ring_mod.b, beta, params33.N, params33.alpha)
	y = gs33.grid.nodes
	for eps in fields:
		assert numerics.h1mu_norm(eps, weight) == pytest.approx(1e-3, rel=1e-10)
		eps_tilde = numerics.ComplexField(gs33.grid, eps.values * np.exp(1j * beta * y))
		assert np.max(np.abs(decomp.orthogonality_residuals(eps_tilde, ring_mod.b, gs33))) < 1e-12
		control = decomp.sup_norm_control(eps, ring_mod.b, beta, gs33.grid, params33)
		assert control['ratio'] <= control['constant']
	again = decomp.random_orthogonal_fields(ring_mod, exp33, n_fields=3, amplitude=1e-3, seed=5)
	assert np.array_equal(again[0].values, fields[0].values)


def test_sup_norm_basin_is_checked(exp33, ring_mod, gs33, params33):
	eps = decomp.random_orthogonal_fields(ring_mod, exp33, n_fields=1)[0]
	with pytest.raises(UsageError):
		decomp.sup_norm_control(eps, ring_mod.b, params33.beta_inf, gs33.grid, params33, delta=3.0)


def test_guess_from_ring(ring_wave, ring_mod, params33):
	guess = decomp.guess_from_field(ring_wave, params33)
	assert guess.r == pytest.approx(ring_mod.r, abs=0.02)
	assert guess.lam == pytest.approx(ring_mod.lam, rel=0.3)
	assert guess.btilde == 0.0


def test_decompose_recovers_the_parameters(exp33, ring_wave, ring_mod):
	guess = modode.ModState(ring_mod.lam * 1.01, ring_mod.r + 0.002, ring_mod.gamma + 0.01, 0.0, ring_mod.b, 100.0)
	result = decomp.decompose(ring_wave, guess, exp33)
	m = result.mod
	assert m.lam == pytest.approx(ring_mod.lam, rel=1e-6)
	assert m.r == pytest.approx(ring_mod.r, rel=1e-6)
	assert m.gamma == pytest.approx(ring_mod.gamma, abs=1e-6)
	assert m.btilde == pytest.approx(0.0, abs=1e-6)
	assert result.eps_h1mu < 1e-5
	assert result.newton_iters <= 50


def test_decompose_needs_positive_guess(exp33, ring_wave, ring_mod):
	guess = types.SimpleNamespace(lam=-ring_mod.lam, r=ring_mod.r, gamma=0.0, btilde=0.0)
	with pytest.raises(UsageError):
		decomp.decompose(ring_wave, guess, exp33)


def test_modulation_laws_along_exact_trajectory(params33):
	traj = modode.to_physical_time(modode.integrate_exact(params33, s_end=1e5, n_out=401))
	states = traj.states()
	frame = decomp.mod_residuals(states, traj)
	assert len(frame) == len(states) - 2
	assert frame['mod_total'].max() < 2e-3
	assert 'bound' not in frame.columns
	with_bound = decomp.mod_residuals(states, traj, eps_norms=np.zeros(len(states)))
	assert np.allclose(with_bound['bound'], with_bound['b'] ** params33.k)


def test_modulation_laws_input_is_checked(params33):
	traj = modode.to_physical_time(modode.integrate_exact(params33, s_end=1e4, n_out=101))
	states = traj.states()
	with pytest.raises(UsageError):
		decomp.mod_residuals(states[:2], traj)
	with pytest.raises(UsageError):
		decomp.mod_residuals(states[::-1], traj)
	assert decomp.mod_residuals(states, traj).attrs['resampled'] is False


def test_modulation_laws_on_irregular_snapshots(params33):
	traj = modode.to_physical_time(modode.integrate_exact(params33, s_end=1e4, n_out=401))
	window = traj.states()[200:300]
	irregular = [m for i, m in enumerate(window) if i % 3 != 2]
	eps_norms = np.full(len(irregular), 1e-6)
	frame = decomp.mod_residuals(irregular, traj, eps_norms=eps_norms)
	assert frame.attrs['resampled'] is True
	assert len(frame) == len(irregular) - 2
	assert np.allclose(np.diff(frame['s']), frame['s'].iloc[1] - frame['s'].iloc[0])
	assert frame['s'].iloc[0] > irregular[0].s and frame['s'].iloc[-1] < irregular[-1].s
	assert frame['mod_total'].max() < 5e-3
	assert np.allclose(frame['eps_h1mu'], 1e-6)


def test_series_frame_fills_mod_only_on_snapshot_times(params33):
	traj = modode.to_physical_time(modode.integrate_exact(params33, s_end=1e4, n_out=101))
	states = traj.states()[:12]
	results = [types.SimpleNamespace(mod=m, eps_h1mu=0.0, ortho_residuals=np.zeros(4)) for m in states]
	frame = decomp.series_frame(results, decomp.mod_residuals(states, traj))
	assert np.isnan(frame['mod_total'].iloc[0]) and np.isnan(frame['mod_total'].iloc[-1])
	assert np.all(np.isfinite(frame['mod_total'].iloc[1:-1]))
	irregular = [states[i] for i in (0, 1, 2, 4, 5, 7, 8, 10, 11)]
	kept = [results[i] for i in (0, 1, 2, 4, 5, 7, 8, 10, 11)]
	frame = decomp.series_frame(kept, decomp.mod_residuals(irregular, traj))
	assert len(frame) == len(kept)
	assert frame['mod_total'].isna().all()


@pytest.mark.slow
def test_coercivity_suite_positive(exp33, ring_mod):
	ratios, minimum = decomp.coercivity_suite(ring_mod, exp33, n_fields=20)
	assert len(ratios) == 20
	assert minimum > 0.0
