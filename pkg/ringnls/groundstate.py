import math
from dataclasses import dataclass, asdict

import numpy as np

from ringnls import numerics
from ringnls.util import UsageError


@dataclass(frozen=True)
class ProblemParams:
	N: int
	p: float
	alpha: float
	beta_inf: float
	s_c: float
	k: int

	@property
	def kappa(self):
		""" Decay rate of the sech argument, (p-1)/2. """
		return 0.5 * (self.p - 1.0)

	@property
	def lam_power(self):
		""" The scaling exponent 2/(p-1) of the operator Lambda. """
		return 2.0 / (self.p - 1.0)

	def to_dict(self):
		return asdict(self)


def make_params(N, p, k=None):
	"""
	Description:
	Validates (N, p) against the mass supercritical, energy subcritical range and computes the derived constants
	alpha, beta_inf and s_c. The default order is k = max(5, ceil(2/(1-alpha)) + 2).
	********************************************************************************************************************
	Parameters:
	- N: Space dimension (integer >= 2).
	- p: Nonlinearity exponent.
	- k: Optional expansion order.
	********************************************************************************************************************
	Returns:
	- ProblemParams.
	********************************************************************************************************************
	"""
	if int(N) != N or N < 2:
		raise UsageError('N must be an integer >= 2 (got %s).' % N)
	N = int(N)
	p = float(p)
	if not p > 1.0 + 4.0 / N:
		raise UsageError('p > 1 + 4/N violated for N=%d, p=%s.' % (N, p))
	upper = 5.0 if N == 2 else min((N + 2.0) / (N - 2.0), 5.0)
	if not p < upper:
		raise UsageError('p < min((N+2)/(N-2),5) violated for N=%d, p=%s.' % (N, p))
	alpha = (5.0 - p) / ((p - 1.0) * (N - 1.0))
	beta_inf = math.sqrt((5.0 - p) / (p + 3.0))
	s_c = N / 2.0 - 2.0 / (p - 1.0)
	if k is None:
		k = max(5, int(math.ceil(2.0 / (1.0 - alpha) - 1e-9)) + 2)
	else:
		if int(k) != k:
			raise UsageError('The expansion order k must be an integer (got %s).' % k)
		k = int(k)
		if k < 5:
			raise UsageError('k >= 5 violated (got k=%d).' % k)
		if not k > 2.0 / (1.0 - alpha) + 1.0:
			raise UsageError('k > 2/(1-alpha) + 1 = %.6f violated (got k=%d).' % (2.0 / (1.0 - alpha) + 1.0, k))
	return ProblemParams(N, p, alpha, beta_inf, s_c, k)


def _sech(z):
	az = np.abs(z)
	e = np.exp(-2.0 * az)
	return 2.0 * np.exp(-az) / (1.0 + e)


def groundstate_values(p, y):
	"""
	Description:
	Closed-form ground state Q, Q' and Q'' at arbitrary points, using Q' = -tanh(kappa y) Q and
	Q'' = (tanh^2(kappa y) - kappa sech^2(kappa y)) Q with kappa = (p-1)/2.
	********************************************************************************************************************
	"""
	y = np.asarray(y, dtype=float)
	kappa = 0.5 * (p - 1.0)
	amplitude = (0.5 * (p + 1.0)) ** (1.0 / (p - 1.0))
	sech = _sech(kappa * y)
	tanh = np.tanh(kappa * y)
	Q = amplitude * sech ** (2.0 / (p - 1.0))
	Qp = -tanh * Q
	Qpp = (tanh ** 2 - kappa * sech ** 2) * Q
	return Q, Qp, Qpp


@dataclass(frozen=True, eq=False)
class GroundState:
	params: ProblemParams
	Q: numerics.RealField
	Qp: numerics.RealField
	LamQ: numerics.RealField
	yQ: numerics.RealField
	Qpp: numerics.RealField

	@property
	def grid(self):
		return self.Q.grid

	@property
	def y(self):
		return self.Q.grid.nodes

	@property
	def mass(self):
		""" The 1D L2 mass integral of Q^2. """
		return numerics.integrate_values(self.Q.values ** 2, self.grid)

	def closed_form_residual(self):
		""" Pointwise Q'' - Q + Q^p with the closed-form second derivative. """
		Q = self.Q.values
		return self.Qpp.values - Q + Q ** self.params.p

	def stencil_residual(self):
		""" Pointwise Q'' - Q + Q^p with the fourth-order finite-difference second derivative. """
		Q = self.Q.values
		return numerics.derivative_values(Q, self.grid.h, 2) - Q + Q ** self.params.p


def eval_groundstate(params, grid):
	"""
	Description:
	Samples the closed-form ground state and the companion fields Q', Lambda Q = 2/(p-1) Q + y Q', y Q and Q''.
	********************************************************************************************************************
	Parameters:
	- params: ProblemParams.
	- grid: Grid1D containing y = 0 in its interior.
	********************************************************************************************************************
	Returns:
	- GroundState.
	********************************************************************************************************************
	"""
	if not grid.is_profile_grid():
		raise UsageError('The ground state grid must satisfy y_min < 0 < y_max.')
	y = grid.nodes
	Q, Qp, Qpp = groundstate_values(params.p, y)
	LamQ = params.lam_power * Q + y * Qp
	return GroundState(params, numerics.RealField(grid, Q), numerics.RealField(grid, Qp),
					   numerics.RealField(grid, LamQ), numerics.RealField(grid, y * Q), numerics.RealField(grid, Qpp))


@dataclass(frozen=True)
class IdentityReport:
	intQ2: float
	intQp2: float
	QLamQ: float
	intQp1: float
	pohozaev_defect: float
	lamQ_defect: float
	energy_identity_defect: float
	bubble_energy: float

	def to_json(self):
		return {k: float(v) for k, v in asdict(self).items()}


def check_identities(gs):
	"""
	Description:
	Evaluates the variational identities of the ground state by quadrature on the ground state grid: the Pohozaev
	relation int Q^2 = (p+3)/(p-1) int (Q')^2, (Q, Lambda Q) = (5-p)/(2(p-1)) int Q^2, the tested equation
	int (Q')^2 + int Q^2 = int Q^(p+1) and the vanishing energy of the drifting bubble Q e^{-i beta_inf y}.
	********************************************************************************************************************
	Parameters:
	- gs: GroundState.
	********************************************************************************************************************
	Returns:
	- IdentityReport.
	********************************************************************************************************************
	"""
	p = gs.params.p
	grid = gs.grid
	Q = gs.Q.values
	intQ2 = numerics.integrate_values(Q ** 2, grid)
	intQp2 = numerics.integrate_values(gs.Qp.values ** 2, grid)
	QLamQ = numerics.integrate_values(Q * gs.LamQ.values, grid)
	intQp1 = numerics.integrate_values(Q ** (p + 1.0), grid)
	pohozaev_defect = abs(intQ2 - (p + 3.0) / (p - 1.0) * intQp2) / intQ2
	lamQ_defect = abs(QLamQ - (5.0 - p) / (2.0 * (p - 1.0)) * intQ2) / intQ2
	energy_identity_defect = abs(intQp2 + intQ2 - intQp1) / intQp1
	bubble_energy = 0.5 * (intQp2 + gs.params.beta_inf ** 2 * intQ2) - intQp1 / (p + 1.0)
	return IdentityReport(float(intQ2), float(intQp2), float(QLamQ), float(intQp1), float(pohozaev_defect),
						  float(lamQ_defect), float(energy_identity_defect), float(bubble_energy))


def default_profile_grid(config):
	""" The profile grid described by the grid section of a run configuration. """
	g = config['grid']
	return numerics.Grid1D.from_spacing(g['y_min'], g['y_max'], g['h'])
