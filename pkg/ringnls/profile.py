"""
Slow modulated profiles. The profile P = Q + sum b^j bt^l (T_jl + i S_jl) is built order by order from the
renormalized ring equation written in the drifting frame, with the solvability constants c1_jl, c2_jl selected so
that every order is solvable. Q_b = zeta_b P exp(-i beta y - i b y^2/4) is the assembled profile and Psi its
residual in the original renormalized variables.
"""
import os
import json
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.interpolate
import scipy.stats

from ringnls import numerics, linops, groundstate
from ringnls.util import UsageError, NumericalFailure, InvariantFailure, setupReadyDirectory

TAIL_CLAMP = 1e-200
DEFAULT_SWEEPS = 2


class FieldSeries:
	"""
	Bivariate truncated power series in (b, bt) whose coefficients are sample arrays on a common grid or scalars.
	Coefficients of total degree above order - 1 are dropped by every operation.
	"""

	def __init__(self, order, coeffs=None, grid=None):
		if int(order) != order or order < 1:
			raise UsageError('FieldSeries order must be a positive integer (got %s).' % order)
		self.order = int(order)
		self.grid = grid
		self.coeffs = {}
		if coeffs:
			for key, value in coeffs.items():
				if key[0] < 0 or key[1] < 0:
					raise UsageError('Negative exponent %s in a FieldSeries key.' % (key,))
				if key[0] + key[1] <= self.max_degree:
					self.coeffs[key] = value

	@property
	def max_degree(self):
		return self.order - 1

	def __getitem__(self, key):
		return self.coeffs.get(key, 0.0)

	def __setitem__(self, key, value):
		if key[0] + key[1] > self.max_degree:
			raise UsageError('Coefficient %s exceeds the truncation degree %d.' % (key, self.max_degree))
		self.coeffs[key] = value

	def keys(self):
		return sorted(self.coeffs.keys(), key=lambda e: (e[0] + e[1], -e[0]))

	def copy(self):
		return FieldSeries(self.order, {k: np.copy(v) for k, v in self.coeffs.items()}, self.grid)

	def truncate(self, order):
		return FieldSeries(min(order, self.order), self.coeffs, self.grid)

	def _join(self, other):
		if isinstance(other, FieldSeries):
			if self.grid is not None and other.grid is not None and self.grid != other.grid:
				raise UsageError('FieldSeries operands live on different grids.')
			return min(self.order, other.order), self.grid if self.grid is not None else other.grid
		return self.order, self.grid

	def __add__(self, other):
		order, grid = self._join(other)
		out = FieldSeries(order, self.coeffs, grid)
		if isinstance(other, FieldSeries):
			for key, value in other.coeffs.items():
				if key[0] + key[1] <= out.max_degree:
					out.coeffs[key] = out.coeffs.get(key, 0.0) + value
		else:
			out.coeffs[(0, 0)] = out.coeffs.get((0, 0), 0.0) + other
		return out

	__radd__ = __add__

	def __neg__(self):
		return FieldSeries(self.order, {k: -v for k, v in self.coeffs.items()}, self.grid)

	def __sub__(self, other):
		return self + (-other)

	def __rsub__(self, other):
		return (-self) + other

	def __mul__(self, other):
		if not isinstance(other, FieldSeries):
			return FieldSeries(self.order, {k: v * other for k, v in self.coeffs.items()}, self.grid)
		order, grid = self._join(other)
		max_degree = order - 1
		out = {}
		for ka, va in self.coeffs.items():
			da = ka[0] + ka[1]
			if da > max_degree:
				continue
			for kb, vb in other.coeffs.items():
				if da + kb[0] + kb[1] > max_degree:
					continue
				key = (ka[0] + kb[0], ka[1] + kb[1])
				if key in out:
					out[key] = out[key] + va * vb
				else:
					out[key] = va * vb
		return FieldSeries(order, out, grid)

	__rmul__ = __mul__

	def conj(self):
		return FieldSeries(self.order, {k: np.conj(v) for k, v in self.coeffs.items()}, self.grid)

	def shift(self, dj, dl):
		""" Multiplication by the monomial b^dj bt^dl. """
		return FieldSeries(self.order, {(k[0] + dj, k[1] + dl): v for k, v in self.coeffs.items()}, self.grid)

	def deriv_b(self):
		return FieldSeries(self.order, {(k[0] - 1, k[1]): k[0] * v for k, v in self.coeffs.items() if k[0] > 0}, self.grid)

	def deriv_bt(self):
		return FieldSeries(self.order, {(k[0], k[1] - 1): k[1] * v for k, v in self.coeffs.items() if k[1] > 0}, self.grid)

	def map(self, func, constant=None):
		"""
		Applies a linear map coefficient by coefficient; the (0,0) slot is replaced by constant when it is given.
		"""
		out = {}
		for key, value in self.coeffs.items():
			if key == (0, 0) and constant is not None:
				out[key] = constant
			else:
				out[key] = func(value)
		return FieldSeries(self.order, out, self.grid)

	def evaluate(self, b, bt):
		""" Numerical sum of the series at (b, bt). """
		total = 0.0
		for key, value in self.coeffs.items():
			total = total + value * (b ** key[0]) * (bt ** key[1])
		return total


def series_add(a, b):
	return a + b


def series_scale(a, c):
	return a * c


def series_mul(a, b):
	return a * b


def series_invert_unit(a):
	"""
	Description:
	Inverse of a series with nonvanishing constant term, by the recursion r_d = -(1/a_0) sum a_i r_(d-i).
	********************************************************************************************************************
	"""
	a0 = a.coeffs.get((0, 0), 0.0)
	if np.any(np.asarray(a0) == 0):
		raise UsageError('Cannot invert a series whose constant term vanishes.')
	inv0 = 1.0 / a0
	out = FieldSeries(a.order, {(0, 0): inv0}, a.grid)
	rest = [(k, v) for k, v in a.coeffs.items() if k != (0, 0)]
	for degree in range(1, a.max_degree + 1):
		for j in range(degree, -1, -1):
			l = degree - j
			acc = 0.0
			for ka, va in rest:
				kr = (j - ka[0], l - ka[1])
				if kr[0] < 0 or kr[1] < 0 or kr not in out.coeffs:
					continue
				acc = acc + va * out.coeffs[kr]
			out.coeffs[(j, l)] = -inv0 * acc
	return out


def binomial_series(z, exponent):
	"""
	Description:
	(1 + z)^exponent for a series z without constant term, by the generalized binomial recurrence
	C(e, n) = C(e, n-1) (e - n + 1) / n. The sum terminates for nonnegative integer exponents.
	********************************************************************************************************************
	"""
	out = FieldSeries(z.order, {(0, 0): 1.0}, z.grid)
	coefficient = 1.0
	power = FieldSeries(z.order, {(0, 0): 1.0}, z.grid)
	for n in range(1, z.max_degree + 1):
		coefficient = coefficient * (exponent - n + 1) / n
		if coefficient == 0.0:
			break
		power = power * z
		out = out + power * coefficient
	return out


def nonlinearity_series(P, gs):
	"""
	Description:
	Series of |P|^(p-1) P = Q^p (1+z)^((p+1)/2) (1+conj z)^((p-1)/2) with z = (P - Q)/Q, truncated at the order of P.
	The relative perturbation is clamped to zero where Q < 1e-200.
	********************************************************************************************************************
	Parameters:
	- P: FieldSeries whose (0,0) coefficient is Q.
	- gs: GroundState.
	********************************************************************************************************************
	Returns:
	- FieldSeries of the nonlinear term.
	********************************************************************************************************************
	"""
	p = gs.params.p
	Q = gs.Q.values
	constant = P.coeffs.get((0, 0), None)
	if constant is None or np.max(np.abs(np.asarray(constant) - Q)) > 1e-12 * np.max(Q):
		raise UsageError('The constant term of the profile series must equal Q.')
	inv_Q = np.zeros_like(Q)
	deep = Q < TAIL_CLAMP
	inv_Q[~deep] = 1.0 / Q[~deep]
	z = FieldSeries(P.order, {k: v * inv_Q for k, v in P.coeffs.items() if k != (0, 0)}, P.grid)
	factor = binomial_series(z, 0.5 * (p + 1.0)) * binomial_series(z.conj(), 0.5 * (p - 1.0))
	return factor * (Q ** p)


@dataclass(frozen=True, eq=False)
class ProfileExpansion:
	params: object
	gs: object
	T: dict
	S: dict
	c1: dict
	c2: dict
	diagnostics: dict = field(default_factory=dict)

	@property
	def k(self):
		return self.params.k

	@property
	def grid(self):
		return self.gs.grid

	@property
	def P1(self):
		return {key: value for key, value in self.c1.items() if 3 <= key[0] + key[1] <= self.k - 1}

	@property
	def P2(self):
		table = {(1, 1): -2.0}
		table.update({key: value for key, value in self.c2.items() if 3 <= key[0] + key[1] <= self.k - 1})
		return table

	def profile_series(self):
		""" The profile P as a FieldSeries on the expansion grid. """
		P = FieldSeries(self.k, {(0, 0): self.gs.Q.values.astype(complex)}, self.grid)
		for key in self.T:
			P[key] = self.T[key].values + 1j * self.S[key].values
		return P

	def constant_series(self):
		""" The computed multiplier polynomials (all orders) as scalar series. """
		return FieldSeries(self.k, dict(self.c1)), FieldSeries(self.k, dict(self.c2))

	def P_values(self, b, btilde):
		""" Summed profile P(b, btilde) on the expansion grid, without cutoff or phase. """
		return self.profile_series().evaluate(b, btilde)


class _EquationContext:
	"""
	Spatial operators and frozen fields shared by the formal and numerical evaluations of the profile equation.
	"""

	def __init__(self, gs):
		self.gs = gs
		self.params = gs.params
		self.grid = gs.grid
		self.y = gs.grid.nodes
		self.D2 = linops.second_difference_matrix(gs.grid)

	def d1(self, values):
		return numerics.derivative_values(values, self.grid.h, 1)

	def d2(self, values):
		return self.D2 @ values


def _equation_terms(P, dP_db, dP_dbt, P1, P2, b, beta, inv_beta, ctx):
	"""
	Description:
	Series of the profile equation from its building blocks. b, beta and inv_beta are the series of b, beta and
	1/beta in the variables of P, so the same assembly serves the bivariate recursion and the ray series.
	********************************************************************************************************************
	Returns:
	- (E, nonlinear term) as FieldSeries.
	********************************************************************************************************************
	"""
	params = ctx.params
	alpha = params.alpha
	N = params.N
	y = ctx.y
	gs = ctx.gs
	b_over_beta = b * inv_beta
	x = b_over_beta * (0.5 * alpha * y)
	inv_1px = binomial_series(x, -1.0)

	Pp = P.map(ctx.d1, constant=gs.Qp.values.astype(complex))
	Ppp = P.map(ctx.d2, constant=gs.Qpp.values.astype(complex))
	LamP = P * params.lam_power + Pp * y

	A = b * b * (-(1.0 - alpha)) + b_over_beta * P2 + b * P1
	D = b_over_beta * inv_1px * (0.5 * alpha * (N - 1))
	bracket = (b * beta * y + (b * b * alpha + b_over_beta * P2 + b * P1) * (0.25 * y * y)
			   - (b * b_over_beta * inv_1px) * (0.25j * (N - 1) * alpha * (1.0 - alpha) * y))
	multiplier = -(P1 * (beta * y + b * (0.5 * y * y))) + P2 * y

	nonlinear = nonlinearity_series(P, gs)
	E = (A * dP_db) * 1j + (P2 * dP_dbt) * 1j - P + Ppp + D * Pp + nonlinear
	E = E - (P1 * LamP) * 1j + multiplier * P + bracket * P
	return E, nonlinear


def equation_series(P, c1, c2, ctx):
	"""
	Description:
	Formal series of the profile equation in the drifting frame,
	E(P) = i A dP/db + i P2 dP/dbt - P + P'' + D P' + |P|^(p-1) P - i P1 Lambda P - P1 (beta y + b y^2/2) P + P2 y P
		   + [b beta y + (alpha b^2 + (b/beta) P2 + b P1) y^2/4 - i (N-1) alpha (1-alpha) b^2 y / (4 beta (1+x))] P,
	with A = -(1-alpha) b^2 + (b/beta) P2 + b P1, x = alpha b y/(2 beta), D = alpha b (N-1)/(2 beta (1+x)) and
	beta = beta_inf + bt. Every order vanishes when the profile and constants are exact.
	********************************************************************************************************************
	Parameters:
	- P: FieldSeries of the profile (constant term Q).
	- c1, c2: Dictionaries of multiplier constants.
	- ctx: _EquationContext.
	********************************************************************************************************************
	Returns:
	- FieldSeries E(P) truncated at the order of P.
	********************************************************************************************************************
	"""
	order = P.order
	beta_inf = ctx.params.beta_inf
	b = FieldSeries(order, {(1, 0): 1.0})
	beta = FieldSeries(order, {(0, 0): beta_inf, (0, 1): 1.0})
	inv_beta = FieldSeries(order, {(0, n): (-1.0) ** n / beta_inf ** (n + 1) for n in range(order)})
	E, _ = _equation_terms(P, P.deriv_b(), P.deriv_bt(), FieldSeries(order, c1), FieldSeries(order, c2), b, beta,
						   inv_beta, ctx)
	return E


def ray_series(series, b, btilde, order):
	"""
	Description:
	Restriction of a bivariate series to the ray (eps b, eps btilde): the coefficient of eps^d is the sum of the
	degree-d terms evaluated at (b, btilde). The restriction commutes with sums, products and pointwise maps.
	********************************************************************************************************************
	"""
	out = {}
	for key, value in series.coeffs.items():
		degree = key[0] + key[1]
		if degree >= order:
			continue
		term = value * (b ** key[0]) * (btilde ** key[1])
		out[(degree, 0)] = out[(degree, 0)] + term if (degree, 0) in out else term
	return FieldSeries(order, out, series.grid)


def build_expansion(params, gs, sweeps=DEFAULT_SWEEPS, pair=None, logObject=None):
	"""
	Description:
	Constructs T_jl, S_jl and c1_jl, c2_jl for 1 <= j + l <= k - 1. At each total degree the homogeneous part of the
	profile equation is computed with the current series, the constants are chosen so that the bordered L+ and L-
	solves carry no kernel multiplier, and the corrections are added. A few sweeps per degree absorb the couplings
	between orders of equal degree.
	********************************************************************************************************************
	Parameters:
	- params: ProblemParams.
	- gs: GroundState on the profile grid.
	- sweeps: Number of correction sweeps per degree.
	- pair: Optional prebuilt LinearizedPair.
	- logObject: Optional logging object.
	********************************************************************************************************************
	Returns:
	- ProfileExpansion.
	********************************************************************************************************************
	"""
	if pair is None:
		pair = linops.build_linearized_pair(gs)
	ctx = _EquationContext(gs)
	grid = gs.grid
	k = params.k
	Q = gs.Q.values
	yQ = gs.yQ.values
	LamQ = gs.LamQ.values
	mu_yQ = pair.solve_Lplus(yQ, check=False).multiplier
	mu_LamQ = pair.solve_Lminus(LamQ, check=False).multiplier
	QLamQ = numerics.inner(Q, LamQ, grid)
	intQ2 = numerics.inner(Q, Q, grid)

	P = FieldSeries(k, {(0, 0): Q.astype(complex)}, grid)
	c1 = {}
	c2 = {}
	diagnostics = {'solvability_plus': {}, 'solvability_minus': {}, 'gauge_plus': {}, 'gauge_minus': {},
				   'c1_scalar_product': {}, 'c2_scalar_product': {}, 'last_correction': {}}
	for degree in range(1, k):
		keys = [(j, degree - j) for j in range(degree, -1, -1)]
		for key in keys:
			P[key] = np.zeros(grid.n, dtype=complex)
			c1[key] = 0.0
			c2[key] = 0.0
		for sweep in range(sweeps):
			E = equation_series(P.truncate(degree + 1), c1, c2, ctx)
			for key in keys:
				R = np.asarray(E[key]) * np.ones(grid.n)
				h1 = R.real
				h2 = R.imag
				if sweep == 0:
					c1_sp = numerics.inner(h2, Q, grid) / QLamQ
					diagnostics['c1_scalar_product'][key] = float(c1_sp)
					diagnostics['c2_scalar_product'][key] = float(2.0 * numerics.inner(h1, gs.Qp.values, grid) / intQ2
																  + params.beta_inf * c1_sp)
				try:
					dc1 = pair.solve_Lminus(h2, check=False).multiplier / mu_LamQ
					S_sol = pair.solve_Lminus(h2 - dc1 * LamQ)
					shift = -pair.solve_Lplus(h1, check=False).multiplier / mu_yQ
					T_sol = pair.solve_Lplus(h1 + shift * yQ)
				except NumericalFailure as e:
					raise NumericalFailure('Profile recursion failed at order (j,l)=(%d,%d): %s' % (key[0], key[1], str(e)))
				dc2 = shift + params.beta_inf * dc1
				P[key] = P[key] + T_sol.solution.values + 1j * S_sol.solution.values
				c1[key] += float(dc1)
				c2[key] += float(dc2)
				diagnostics['solvability_plus'][key] = T_sol.solvability_defect
				diagnostics['solvability_minus'][key] = S_sol.solvability_defect
				diagnostics['gauge_plus'][key] = T_sol.gauge_defect
				diagnostics['gauge_minus'][key] = S_sol.gauge_defect
				diagnostics['last_correction'][key] = float(max(np.max(np.abs(T_sol.solution.values)),
																np.max(np.abs(S_sol.solution.values))))
		if logObject is not None:
			logObject.info('Profile degree %d done: %s' % (degree, ', '.join(['c1%s=%.3e c2%s=%.3e' % (key, c1[key], key, c2[key]) for key in keys])))

	T = {}
	S = {}
	for key in P.keys():
		if key == (0, 0):
			continue
		T[key] = numerics.RealField(grid, np.real(P[key]))
		S[key] = numerics.RealField(grid, np.imag(P[key]))
	return ProfileExpansion(params, gs, T, S, c1, c2, diagnostics)


def reconstruction_defects(exp):
	"""
	Description:
	Substitutes the constructed series into the profile equation and returns, per order, the sup norm of the
	homogeneous part relative to sup Q. All orders up to k - 1 must vanish.
	********************************************************************************************************************
	"""
	ctx = _EquationContext(exp.gs)
	E = equation_series(exp.profile_series(), exp.c1, exp.c2, ctx)
	scale = np.max(exp.gs.Q.values)
	defects = {}
	for key in E.keys():
		if key == (0, 0):
			values = exp.gs.closed_form_residual()
		else:
			values = E[key]
		defects[key] = float(np.max(np.abs(values)) / scale)
	return defects


def zeta_values(y):
	"""
	Description:
	Smooth step zeta(y) = theta(y+2) / (theta(y+2) + theta(-1-y)), theta(x) = exp(-1/x) for x > 0 and 0 otherwise,
	together with its derivative. zeta vanishes for y <= -2 and equals 1 for y >= -1.
	********************************************************************************************************************
	"""
	y = np.asarray(y, dtype=float)
	a_arg = y + 2.0
	b_arg = -1.0 - y
	A = np.zeros_like(y)
	B = np.zeros_like(y)
	dA = np.zeros_like(y)
	dB = np.zeros_like(y)
	pa = a_arg > 0.0
	pb = b_arg > 0.0
	A[pa] = np.exp(-1.0 / a_arg[pa])
	B[pb] = np.exp(-1.0 / b_arg[pb])
	dA[pa] = A[pa] / a_arg[pa] ** 2
	dB[pb] = -B[pb] / b_arg[pb] ** 2
	denominator = A + B
	zeta = A / denominator
	dzeta = (dA * B - A * dB) / denominator ** 2
	return zeta, dzeta


def cutoff_zeta(b, grid):
	""" zeta_b(y) = zeta(sqrt(b) y) sampled on the grid. """
	if not b > 0.0:
		raise UsageError('The cutoff needs b > 0 (got %s).' % b)
	zeta, _ = zeta_values(math.sqrt(b) * grid.nodes)
	return numerics.RealField(grid, zeta)


def _check_b(b):
	if not 0.0 < b < 0.5:
		raise UsageError('b must lie in (0, 0.5) (got %s).' % b)


def assemble_Qb(exp, b, btilde, grid=None, cutoff=True):
	"""
	Description:
	Q_b(y) = zeta_b(y) P_(b,btilde)(y) exp(-i beta y - i b y^2/4) with beta = beta_inf + btilde.
	********************************************************************************************************************
	Parameters:
	- exp: ProfileExpansion.
	- b: Pseudo-conformal parameter in (0, 0.5).
	- btilde: Drift correction.
	- grid: Optional target grid; the expansion grid is used when omitted.
	- cutoff: Whether to apply zeta_b.
	********************************************************************************************************************
	Returns:
	- ComplexField.
	********************************************************************************************************************
	"""
	_check_b(b)
	if grid is not None and grid != exp.grid:
		return numerics.ComplexField(grid, profile_at(exp, b, btilde, grid.nodes, cutoff=cutoff))
	y = exp.grid.nodes
	beta = exp.params.beta_inf + btilde
	values = exp.P_values(b, btilde) * np.exp(-1j * beta * y - 0.25j * b * y * y)
	if cutoff:
		values = values * cutoff_zeta(b, exp.grid).values
	return numerics.ComplexField(exp.grid, values)


def profile_at(exp, b, btilde, y, cutoff=True):
	"""
	Description:
	Assembled profile at arbitrary points: cubic spline of the summed series, exact cutoff and phase. Points outside
	the expansion grid evaluate to zero.
	********************************************************************************************************************
	"""
	_check_b(b)
	y = np.asarray(y, dtype=float)
	spline = scipy.interpolate.CubicSpline(exp.grid.nodes, exp.P_values(b, btilde))
	inside = (y >= exp.grid.y_min) & (y <= exp.grid.y_max)
	values = np.zeros(y.shape, dtype=complex)
	beta = exp.params.beta_inf + btilde
	yi = y[inside]
	values[inside] = spline(yi) * np.exp(-1j * beta * yi - 0.25j * b * yi * yi)
	if cutoff:
		values *= zeta_values(math.sqrt(b) * y)[0]
	return values


def residual_Psi(exp, b, btilde, cutoff=True):
	"""
	Description:
	Evaluates the residual Psi of the assembled profile in the renormalized variables at fixed (b, btilde), without
	series truncation:
	-Psi = i b_s dQ_b/db + i bt_s dQ_b/dbt + i (b - P1) Lambda Q_b + 2 i beta Q_b' - (1 + beta^2) Q_b + Q_b''
		   + (N-1) (alpha b/(2 beta)) / (1 + x) Q_b' + |Q_b|^(p-1) Q_b,
	with b_s = -(1-alpha) b^2 + (b/beta) P2 + b P1 and bt_s = P2. The evaluation goes through the drifting frame and
	uses the same spatial operators as the construction: the closed-form derivatives of Q plus the difference
	operators applied to P - Q, which is summed without Q so that no rounding of Q enters the differences. Nodes where
	1 + x <= 0 are set to zero. In double precision the norm levels off near 1e-10 once b^k falls below that;
	residual_orders resolves smaller b.
	********************************************************************************************************************
	Parameters:
	- exp: ProfileExpansion.
	- b, btilde: Parameters.
	- cutoff: Whether to include zeta_b (the cutoff error is exponentially small in 1/sqrt(b)).
	********************************************************************************************************************
	Returns:
	- (ComplexField Psi, ||Psi||_{H1_mu})
	********************************************************************************************************************
	"""
	_check_b(b)
	params = exp.params
	gs = exp.gs
	ctx = _EquationContext(gs)
	grid = exp.grid
	y = grid.nodes
	p = params.p
	alpha = params.alpha
	N = params.N
	beta = params.beta_inf + btilde
	P1s, P2s = exp.constant_series()
	P1 = P1s.evaluate(b, btilde)
	P2 = P2s.evaluate(b, btilde)

	series = exp.profile_series()
	correction = FieldSeries(series.order, {key: value for key, value in series.coeffs.items() if key != (0, 0)}, grid)
	Q = gs.Q.values
	delta = correction.evaluate(b, btilde) + np.zeros(grid.n, dtype=complex)
	dP_db = series.deriv_b().evaluate(b, btilde) + np.zeros(grid.n, dtype=complex)
	dP_dbt = series.deriv_bt().evaluate(b, btilde) + np.zeros(grid.n, dtype=complex)
	if cutoff:
		zeta, dzeta = zeta_values(math.sqrt(b) * y)
		dzeta_db = dzeta * y / (2.0 * math.sqrt(b))
		dP_db = zeta * dP_db + dzeta_db * (Q + delta)
		dP_dbt = zeta * dP_dbt
		delta = zeta * delta - (1.0 - zeta) * Q
	P = Q + delta

	x = alpha * b * y / (2.0 * beta)
	valid = (1.0 + x) > 0.0
	inv_1px = np.zeros_like(y)
	inv_1px[valid] = 1.0 / (1.0 + x[valid])

	Pp = gs.Qp.values + ctx.d1(delta)
	Ppp = gs.Qpp.values + ctx.d2(delta)
	LamP = params.lam_power * P + y * Pp
	A = -(1.0 - alpha) * b * b + (b / beta) * P2 + b * P1
	D = 0.5 * alpha * b * (N - 1) / beta * inv_1px
	bracket = (b * beta * y + (alpha * b * b + (b / beta) * P2 + b * P1) * 0.25 * y * y
			   - 0.25j * (N - 1) * alpha * (1.0 - alpha) * b * b / beta * y * inv_1px)
	multiplier = -P1 * (beta * y + 0.5 * b * y * y) + P2 * y
	E = (1j * A * dP_db + 1j * P2 * dP_dbt - P + Ppp + D * Pp + np.abs(P) ** (p - 1.0) * P
		 - 1j * P1 * LamP + multiplier * P + bracket * P)
	psi = -E * np.exp(-1j * beta * y - 0.25j * b * y * y)
	psi[~valid] = 0.0
	weight = numerics.WeightSpec(b, beta, N, alpha)
	norm = numerics.h1mu_norm_values(psi, grid, weight)
	return numerics.ComplexField(grid, psi), norm


def residual_orders(exp, b, btilde, order=None):
	"""
	Description:
	The uncut residual Psi at (b, btilde) summed from its expansion along the ray (eps b, eps btilde): the profile
	equation is expanded in eps up to degree order - 1 and the degrees k to order - 1 are added at eps = 1. Degrees
	below k vanish by construction (their defects are the reconstruction defects), so this is the residual without
	the rounding floor of the direct evaluation. Nodes with |x| >= 1, where the expansion of 1/(1+x) diverges, are
	set to zero; where the binomial expansion of the nonlinearity diverges (non-odd p, |z| >= 1/2) its high part is
	taken as the direct value minus the degrees below k.
	********************************************************************************************************************
	Parameters:
	- exp: ProfileExpansion.
	- b, btilde: Parameters.
	- order: Expansion order in eps; defaults to 4k.
	********************************************************************************************************************
	Returns:
	- (ComplexField Psi, ||Psi||_{H1_mu})
	********************************************************************************************************************
	"""
	_check_b(b)
	params = exp.params
	k = params.k
	if order is None:
		order = 4 * k
	if order <= k:
		raise UsageError('The ray expansion order must exceed k = %d (got %s).' % (k, order))
	gs = exp.gs
	ctx = _EquationContext(gs)
	grid = exp.grid
	y = grid.nodes
	beta_inf = params.beta_inf
	beta_value = beta_inf + btilde

	series = exp.profile_series()
	P = ray_series(series, b, btilde, order)
	dP_db = ray_series(series.deriv_b(), b, btilde, order)
	dP_dbt = ray_series(series.deriv_bt(), b, btilde, order)
	P1s, P2s = exp.constant_series()
	P1 = ray_series(P1s, b, btilde, order)
	P2 = ray_series(P2s, b, btilde, order)
	b_ray = FieldSeries(order, {(1, 0): b})
	beta = FieldSeries(order, {(0, 0): beta_inf, (1, 0): btilde})
	inv_beta = FieldSeries(order, {(n, 0): (-btilde) ** n / beta_inf ** (n + 1) for n in range(order)})
	E, nonlinear = _equation_terms(P, dP_db, dP_dbt, P1, P2, b_ray, beta, inv_beta, ctx)

	high = np.zeros(grid.n, dtype=complex)
	for degree in range(k, order):
		high = high + E[(degree, 0)]

	p = params.p
	if not (p == int(p) and int(p) % 2 == 1):
		Q = gs.Q.values
		inv_Q = np.zeros_like(Q)
		inv_Q[Q >= TAIL_CLAMP] = 1.0 / Q[Q >= TAIL_CLAMP]
		z_size = np.zeros(grid.n)
		for degree in range(1, k):
			z_size = z_size + np.abs(P[(degree, 0)]) * inv_Q
		outside = z_size >= 0.5
		if np.any(outside):
			P_sum = Q + np.zeros(grid.n, dtype=complex)
			low = np.zeros(grid.n, dtype=complex)
			series_high = np.zeros(grid.n, dtype=complex)
			for degree in range(1, order):
				P_sum = P_sum + P[(degree, 0)]
			for degree in range(order):
				if degree < k:
					low = low + nonlinear[(degree, 0)]
				else:
					series_high = series_high + nonlinear[(degree, 0)]
			direct_high = np.abs(P_sum) ** (p - 1.0) * P_sum - low
			high[outside] = high[outside] - series_high[outside] + direct_high[outside]

	x = params.alpha * b * y / (2.0 * beta_value)
	psi = -high * np.exp(-1j * beta_value * y - 0.25j * b * y * y)
	psi[np.abs(x) >= 1.0] = 0.0
	weight = numerics.WeightSpec(b, beta_value, params.N, params.alpha)
	norm = numerics.h1mu_norm_values(psi, grid, weight)
	return numerics.ComplexField(grid, psi), norm


def residual_slope(exp, b_values, btilde=0.0, cutoff=False, method='orders'):
	"""
	Description:
	Log-log slope of ||Psi_(b,btilde)||_{H1_mu} against b. method='orders' sums the residual expansion from degree k
	on (uncut profile); method='direct' evaluates residual_Psi with or without the cutoff.
	********************************************************************************************************************
	Returns:
	- Dictionary with slope, stderr, the b values and the norms.
	********************************************************************************************************************
	"""
	if method == 'orders':
		if cutoff:
			raise UsageError('The summed residual expansion is taken on the uncut profile; use method="direct".')
		norms = [residual_orders(exp, b, btilde)[1] for b in b_values]
	elif method == 'direct':
		norms = [residual_Psi(exp, b, btilde, cutoff=cutoff)[1] for b in b_values]
	else:
		raise UsageError('Unknown residual method %s (expected orders or direct).' % method)
	if min(norms) <= 0.0:
		raise NumericalFailure('Residual norm vanished exactly; the slope is undefined.')
	fit = scipy.stats.linregress(np.log10(b_values), np.log10(norms))
	return {'slope': float(fit.slope), 'stderr': float(fit.stderr), 'b_values': [float(b) for b in b_values],
			'norms': [float(n) for n in norms], 'cutoff': bool(cutoff), 'method': method}


def residual_tail_degree(psi, y_window=(8.0, 30.0)):
	"""
	Description:
	Measured polynomial degree c of a residual tail |Psi(y)| ~ C |y|^c e^(-|y|), fitted on the right window.
	********************************************************************************************************************
	"""
	y = psi.grid.nodes
	sel = (y >= y_window[0]) & (y <= y_window[1]) & (np.abs(psi.values) > 0.0)
	if np.sum(sel) < 3:
		raise NumericalFailure('Not enough nonzero residual samples to fit the tail degree.')
	fit = scipy.stats.linregress(np.log(y[sel]), np.log(np.abs(psi.values[sel])) + y[sel])
	return float(fit.slope)


def parity_report(exp):
	"""
	Description:
	Measures the parity of every T_jl and S_jl under y -> -y. Returns {(name, j, l): (parity, defect)} where parity
	is +1, -1 or 0 (identically zero field) and defect the relative size of the opposite-parity part.
	********************************************************************************************************************
	"""
	grid = exp.grid
	if abs(grid.y_min + grid.y_max) > 1e-12 * grid.y_max:
		raise UsageError('Parity measurements need a grid symmetric about y = 0.')
	report = {}
	for name, table in (('T', exp.T), ('S', exp.S)):
		for key, f in table.items():
			values = f.values
			scale = np.max(np.abs(values))
			if scale < 1e-12:
				report[(name, key[0], key[1])] = (0, 0.0)
				continue
			mirrored = values[::-1]
			even = np.max(np.abs(values - mirrored)) / (2.0 * scale)
			odd = np.max(np.abs(values + mirrored)) / (2.0 * scale)
			if even <= odd:
				report[(name, key[0], key[1])] = (1, float(even))
			else:
				report[(name, key[0], key[1])] = (-1, float(odd))
	return report


def expected_parity(name, j):
	""" Parity of T_jl is (-1)^j and of S_jl is (-1)^(j+1). """
	if name == 'T':
		return 1 if j % 2 == 0 else -1
	return -1 if j % 2 == 0 else 1


def decay_constants(exp, window=(20.0, 55.0)):
	"""
	Description:
	For every order, the sup over window <= |y| of max(|T_jl|, |S_jl|) e^|y| / |y|^(2(j+l)).
	********************************************************************************************************************
	"""
	y = exp.grid.nodes
	ay = np.abs(y)
	sel = (ay >= window[0]) & (ay <= window[1])
	out = {}
	for key in exp.T:
		m = key[0] + key[1]
		envelope = np.maximum(np.abs(exp.T[key].values[sel]), np.abs(exp.S[key].values[sel]))
		out[key] = float(np.max(envelope * np.exp(ay[sel]) / ay[sel] ** (2 * m)))
	return out


def check_profile_invariants(exp, tol=1e-6):
	"""
	Description:
	Checks the vanishing constants at (1,0), (0,1), (2,0), (0,2), c1 at (1,1), c2(1,1) = -2, the parity of the
	orders of total degree at most 2 and the solvability defects of every solve.
	********************************************************************************************************************
	Returns:
	- A list of (check, measured, expected, tolerance, passed) tuples.
	********************************************************************************************************************
	"""
	rows = []
	for key in [(1, 0), (0, 1), (2, 0), (0, 2)]:
		rows.append(('c1%s' % str(key), exp.c1[key], 0.0, tol, abs(exp.c1[key]) <= tol))
		rows.append(('c2%s' % str(key), exp.c2[key], 0.0, tol, abs(exp.c2[key]) <= tol))
	rows.append(('c1(1, 1)', exp.c1[(1, 1)], 0.0, tol, abs(exp.c1[(1, 1)]) <= tol))
	rows.append(('c2(1, 1)', exp.c2[(1, 1)], -2.0, tol, abs(exp.c2[(1, 1)] + 2.0) <= tol))
	parity = parity_report(exp)
	for (name, j, l), (measured, defect) in sorted(parity.items()):
		if j + l > 2:
			continue
		ok = measured == 0 or (measured == expected_parity(name, j) and defect <= 1e-8)
		rows.append(('parity %s(%d, %d)' % (name, j, l), measured, expected_parity(name, j), 1e-8, ok))
	h_norms = 1.0 + max(max(np.sqrt(numerics.inner(exp.T[key].values, exp.T[key].values, exp.grid)),
							np.sqrt(numerics.inner(exp.S[key].values, exp.S[key].values, exp.grid))) for key in exp.T)
	worst = max(max(abs(v) for v in exp.diagnostics['solvability_plus'].values()),
				max(abs(v) for v in exp.diagnostics['solvability_minus'].values()))
	rows.append(('max solvability defect', worst, 0.0, tol * h_norms, worst <= tol * h_norms))
	return rows


def _key_str(key):
	return '%d,%d' % key


def _str_key(text):
	j, l = text.split(',')
	return (int(j), int(l))


def save_expansion(exp, outdir):
	"""
	Description:
	Writes meta.json (parameters, grid, constants and polynomial tables) and one CSV per T_jl / S_jl field.
	********************************************************************************************************************
	"""
	outdir = os.path.abspath(outdir) + '/'
	setupReadyDirectory([outdir])
	meta = {'params': exp.params.to_dict(), 'k': exp.k,
			'grid': {'y_min': exp.grid.y_min, 'y_max': exp.grid.y_max, 'n': exp.grid.n},
			'c1': {_key_str(k): v for k, v in exp.c1.items()}, 'c2': {_key_str(k): v for k, v in exp.c2.items()},
			'P1': {_key_str(k): v for k, v in exp.P1.items()}, 'P2': {_key_str(k): v for k, v in exp.P2.items()},
			'diagnostics': {name: {_key_str(k): v for k, v in table.items()} for name, table in exp.diagnostics.items()},
			'fields': {}}
	for key in exp.T:
		t_file = 'T_%d_%d.csv' % key
		s_file = 'S_%d_%d.csv' % key
		numerics.writeFieldCsv(exp.T[key], outdir + t_file)
		numerics.writeFieldCsv(exp.S[key], outdir + s_file)
		meta['fields'][_key_str(key)] = [t_file, s_file]
	with open(outdir + 'meta.json', 'w') as omf:
		json.dump(meta, omf, sort_keys=True, indent=2)


def load_expansion(indir):
	""" Reads a directory written by save_expansion. """
	indir = os.path.abspath(indir) + '/'
	if not os.path.isfile(indir + 'meta.json'):
		raise UsageError('No meta.json found in %s.' % indir)
	with open(indir + 'meta.json') as omf:
		meta = json.load(omf)
	pr = meta['params']
	params = groundstate.make_params(pr['N'], pr['p'], pr['k'])
	grid = numerics.Grid1D(meta['grid']['y_min'], meta['grid']['y_max'], meta['grid']['n'])
	gs = groundstate.eval_groundstate(params, grid)
	T = {}
	S = {}
	for key_text, (t_file, s_file) in meta['fields'].items():
		key = _str_key(key_text)
		T[key] = numerics.readFieldCsv(indir + t_file, grid)
		S[key] = numerics.readFieldCsv(indir + s_file, grid)
	c1 = {_str_key(k): float(v) for k, v in meta['c1'].items()}
	c2 = {_str_key(k): float(v) for k, v in meta['c2'].items()}
	diagnostics = {name: {_str_key(k): float(v) for k, v in table.items()}
				   for name, table in meta.get('diagnostics', {}).items()}
	return ProfileExpansion(params, gs, T, S, c1, c2, diagnostics)
