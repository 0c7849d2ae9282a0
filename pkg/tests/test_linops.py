import numpy as np
import pytest

from ringnls import linops, numerics
from ringnls.util import UsageError, NumericalFailure


def test_kernel_identities(pair33):
	defects = linops.kernel_identity_defects(pair33)
	assert set(defects) == {'Lminus_Q', 'Lplus_Qp', 'Lplus_LamQ', 'Lminus_yQ'}
	for name, value in defects.items():
		assert value <= 1e-5, name


def test_operators_are_linear_and_vanish_on_zero(pair33, gs33):
	zero = numerics.RealField(gs33.grid, np.zeros(gs33.grid.n))
	assert np.all(pair33.apply_Lplus(zero).values == 0.0)
	assert np.all(pair33.apply_Lminus(zero).values == 0.0)


def test_grid_mismatch(pair33, small_grid):
	with pytest.raises(UsageError):
		pair33.apply_Lplus(numerics.RealField(small_grid, np.zeros(small_grid.n)))


def test_solve_Lplus_recovers_scaling_direction(pair33, gs33):
	sol = pair33.solve_Lplus(-2.0 * gs33.Q.values)
	assert np.max(np.abs(sol.solution.values - gs33.LamQ.values)) < 1e-5
	assert abs(sol.multiplier) < 1e-8
	assert sol.gauge_defect < 1e-10
	back = pair33.apply_Lplus(sol.solution).values + 2.0 * gs33.Q.values
	assert np.max(np.abs(back)) < 1e-6


def test_solve_Lminus_recovers_yQ(pair33, gs33):
	sol = pair33.solve_Lminus(-2.0 * gs33.Qp.values)
	assert np.max(np.abs(sol.solution.values - gs33.yQ.values)) < 1e-5
	assert sol.gauge_defect < 1e-10


def test_zero_right_hand_side(pair33, gs33):
	sol = pair33.solve_Lminus(np.zeros(gs33.grid.n))
	assert np.max(np.abs(sol.solution.values)) == 0.0
	assert sol.multiplier == 0.0


def test_inconsistent_right_hand_side(pair33, gs33):
	with pytest.raises(NumericalFailure):
		pair33.solve_Lplus(gs33.Qp.values)
	unchecked = pair33.solve_Lplus(gs33.Qp.values, check=False)
	assert unchecked.solvability_defect == pytest.approx(4.0 / 3.0, rel=1e-8)


def test_unconstrained_Lplus_has_one_negative_direction(pair33):
	assert linops.lplus_min_eig(pair33) == pytest.approx(-3.0, abs=1e-4)


def test_quadratic_form_on_kernel_and_off_constraints(pair33, gs33):
	zero = np.zeros(gs33.grid.n)
	assert abs(linops.quadratic_form_ratio(pair33, gs33.Qp.values, zero)) < 1e-6
	assert linops.quadratic_form_ratio(pair33, zero, gs33.Qp.values) > 0.0


@pytest.mark.slow
def test_constrained_coercivity_is_positive(gs33, pair33):
	theta = linops.coercivity_min_eig(gs33, pair=pair33)
	assert 0.0 < theta <= 1.0 + 1e-6
