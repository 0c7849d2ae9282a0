import math
import numpy as np
import pytest

from ringnls import groundstate, numerics
from ringnls.util import UsageError


def test_derived_constants_cubic_three_dimensions(params33):
	assert params33.alpha == pytest.approx(0.5)
	assert params33.beta_inf == pytest.approx(0.5773503, abs=1e-7)
	assert params33.s_c == pytest.approx(0.5)
	assert params33.k == 6
	assert params33.lam_power == pytest.approx(1.0)


@pytest.mark.parametrize('N, p, alpha, beta_inf, k', [
	(2, 4.0, 1.0 / 3.0, 0.3779645, 5),
	(4, 2.5, 2.5 / 4.5, math.sqrt(2.5 / 5.5), 7),
	(5, 2.0, 0.75, math.sqrt(0.6), 10),
])
def test_derived_constants_admissible_points(N, p, alpha, beta_inf, k):
	params = groundstate.make_params(N, p)
	assert params.alpha == pytest.approx(alpha)
	assert params.beta_inf == pytest.approx(beta_inf, abs=1e-7)
	assert params.k == k


@pytest.mark.parametrize('N, p', [(3, 5.0), (2, 3.0), (3, 2.2), (1, 6.0), (2.5, 4.0)])
def test_inadmissible_parameters(N, p):
	with pytest.raises(UsageError):
		groundstate.make_params(N, p)


def test_explicit_order():
	assert groundstate.make_params(3, 3.0, 8).k == 8
	with pytest.raises(UsageError):
		groundstate.make_params(3, 3.0, 5)
	with pytest.raises(UsageError):
		groundstate.make_params(3, 3.0, 4)


def test_ground_state_values(gs33):
	y = gs33.grid.nodes
	i0 = int(np.argmin(np.abs(y)))
	i1 = int(np.argmin(np.abs(y - 1.0)))
	assert gs33.Q.values[i0] == pytest.approx(math.sqrt(2.0), abs=1e-14)
	assert gs33.Q.values[i1] == pytest.approx(0.9164871, abs=1e-6)
	assert gs33.Qp.values[i1] == pytest.approx(-0.6979912, abs=1e-6)
	assert gs33.LamQ.values[i1] == pytest.approx(0.2184959, abs=1e-6)


def test_ground_state_is_even(gs33):
	Q = gs33.Q.values
	assert np.max(np.abs(Q - Q[::-1])) < 1e-14
	assert np.max(np.abs(gs33.Qp.values + gs33.Qp.values[::-1])) < 1e-14


def test_ground_state_solves_its_equation(gs33):
	assert np.max(np.abs(gs33.closed_form_residual())) < 1e-12
	assert np.max(np.abs(gs33.stencil_residual())) < 1e-6


def test_tail_bound(gs33):
	y = gs33.grid.nodes
	Q = gs33.Q.values
	Q30 = groundstate.groundstate_values(3.0, np.array([30.0]))[0][0]
	tail = np.abs(y) >= 30.0
	assert np.all(Q[tail] <= 2.0 * Q30 * np.exp(-(np.abs(y[tail]) - 30.0)))


def test_identities_cubic(gs33):
	report = groundstate.check_identities(gs33)
	assert report.intQ2 == pytest.approx(4.0, abs=1e-9)
	assert report.intQp1 == pytest.approx(16.0 / 3.0, abs=1e-9)
	assert report.QLamQ == pytest.approx(2.0, abs=1e-9)
	assert report.pohozaev_defect < 1e-9
	assert report.lamQ_defect < 1e-9
	assert report.energy_identity_defect < 1e-9
	assert abs(report.bubble_energy) < 1e-9


@pytest.mark.parametrize('N, p', [(2, 4.0), (4, 2.5), (5, 2.0)])
def test_identities_other_points(N, p, profile_grid):
	gs = groundstate.eval_groundstate(groundstate.make_params(N, p), profile_grid)
	report = groundstate.check_identities(gs)
	assert report.pohozaev_defect < 1e-8
	assert report.lamQ_defect < 1e-8
	assert report.energy_identity_defect < 1e-8
	assert abs(report.bubble_energy) < 1e-8


def test_ground_state_needs_origin_inside():
	with pytest.raises(UsageError):
		groundstate.eval_groundstate(groundstate.make_params(3, 3.0), numerics.Grid1D(0.0, 10.0, 101))
