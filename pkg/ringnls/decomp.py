"""
Modulation decomposition u = lambda^(-2/(p-1)) (Q_b + eps)((r - r(t))/lambda) e^(i gamma) under the four
orthogonality conditions on eps_tilde = eps e^(i beta y), with b frozen to 2 beta lambda/(alpha r). Also the defects of
the modulation laws along a decomposed series and the energy/Morawetz functional with its coercivity diagnostics.
"""
import math
from dataclasses import dataclass

import numpy as np
import pandas as pd
import scipy.interpolate

from ringnls import numerics, profile, modode, nlsim
from ringnls.util import UsageError, NumericalFailure, InvariantFailure

CONDITION_LIMIT = 1e12
MAX_HALVINGS = 8
SERIES_COLUMNS = ['t', 'lambda', 'r', 'gamma', 'btilde', 'b', 'eps_h1mu', 'ortho1', 'ortho2', 'ortho3', 'ortho4',
				  'mod_total']


@dataclass(frozen=True, eq=False)
class DecompResult:
	mod: modode.ModState
	eps: numerics.ComplexField
	eps_tilde: numerics.ComplexField
	ortho_residuals: np.ndarray
	newton_iters: int
	eps_h1mu: float


def frozen_b(params, lam, r, btilde):
	""" b = 2 beta lambda / (alpha r). """
	return 2.0 * (params.beta_inf + btilde) * lam / (params.alpha * r)


def test_functions(b, gs):
	""" zeta_b y Q, zeta_b Q (real part) and zeta_b Lambda Q, zeta_b Q' (imaginary part). """
	zeta = profile.cutoff_zeta(b, gs.grid).values
	return [zeta * gs.yQ.values, zeta * gs.Q.values, zeta * gs.LamQ.values, zeta * gs.Qp.values]


def orthogonality_residuals(eps_tilde, b, gs):
	"""
	Description:
	The four scalar products (Re eps_tilde, zeta_b yQ), (Re eps_tilde, zeta_b Q), (Im eps_tilde, zeta_b Lambda Q) and
	(Im eps_tilde, zeta_b Q').
	********************************************************************************************************************
	Parameters:
	- eps_tilde: ComplexField on the ground state grid.
	- b: Frozen parameter.
	- gs: GroundState.
	********************************************************************************************************************
	Returns:
	- numpy array of the four residuals.
	********************************************************************************************************************
	"""
	if eps_tilde.grid != gs.grid:
		raise UsageError('eps_tilde and the ground state live on different grids.')
	grid = gs.grid
	e1 = np.real(eps_tilde.values)
	e2 = np.imag(eps_tilde.values)
	tests = test_functions(b, gs)
	return np.array([numerics.inner(e1, tests[0], grid), numerics.inner(e1, tests[1], grid),
					 numerics.inner(e2, tests[2], grid), numerics.inner(e2, tests[3], grid)])


def jacobian_determinant(params, b0, btilde0, exp):
	"""
	Description:
	Determinant of the matrix of scalar products between the test functions (zeta_b yQ, zeta_b Q in the real part,
	zeta_b Q', zeta_b Lambda Q in the imaginary part) and the infinitesimal deformations of w = Q_b e^(i beta y) under
	translation (d/dy), scaling (Lambda), drift (i y) and phase (-i). As b0, btilde0 -> 0 it tends to
	-(1/16) ((5-p)/(p-1))^2 ||Q||^8.
	********************************************************************************************************************
	Parameters:
	- params: ProblemParams.
	- b0, btilde0: Parameters of the profile.
	- exp: ProfileExpansion providing Q_b.
	********************************************************************************************************************
	Returns:
	- The determinant.
	********************************************************************************************************************
	"""
	gs = exp.gs
	grid = gs.grid
	y = grid.nodes
	beta = params.beta_inf + btilde0
	Qb = profile.assemble_Qb(exp, b0, btilde0).values
	phase = np.exp(1j * beta * y)
	dQb = numerics.derivative_values(Qb, grid.h, 1)
	deformations = [dQb * phase, (params.lam_power * Qb + y * dQb) * phase, 1j * y * Qb * phase, -1j * Qb * phase]
	zeta = profile.cutoff_zeta(b0, grid).values
	rows = [(np.real, zeta * gs.yQ.values), (np.real, zeta * gs.Q.values), (np.imag, zeta * gs.Qp.values),
			(np.imag, zeta * gs.LamQ.values)]
	M = np.array([[numerics.inner(part(d), test, grid) for d in deformations] for part, test in rows])
	return float(np.linalg.det(M))


def expected_determinant(params, intQ2):
	return -(1.0 / 16.0) * ((5.0 - params.p) / (params.p - 1.0)) ** 2 * intQ2 ** 4


class _FieldSampler:
	""" Cubic spline of a radial field, with the renormalized error evaluated on the profile grid. """

	def __init__(self, wave, exp):
		self.wave = wave
		self.exp = exp
		self.params = exp.params
		self.spline = scipy.interpolate.CubicSpline(wave.grid.nodes, wave.u)
		self.r_max = wave.grid.nodes[-1]

	def eps(self, lam, r, gamma, btilde):
		params = self.params
		b = frozen_b(params, lam, r, btilde)
		if not 0.0 < b < 0.5:
			raise NumericalFailure('Frozen b=%.6e left (0, 0.5) during the decomposition.' % b)
		y = self.exp.grid.nodes
		radius = r + lam * y
		inside = (radius > 0.0) & (radius <= self.r_max)
		v = np.zeros(len(y), dtype=complex)
		v[inside] = lam ** params.lam_power * self.spline(radius[inside]) * np.exp(-1j * gamma)
		Qb = profile.assemble_Qb(self.exp, b, btilde).values
		eps = v - Qb
		eps[~inside] = 0.0
		return b, eps


def _norm(values, grid):
	return math.sqrt(numerics.integrate_values(np.abs(values) ** 2, grid))


def guess_from_field(wave, params):
	""" Initial guess from the ring estimates: radius at the peak, scale from its height, phase at the peak. """
	r_est, sup, lam = nlsim.estimate_ring(wave, params.p)
	i = int(np.argmax(np.abs(wave.u)))
	gamma = float(np.angle(wave.u[i]))
	b = frozen_b(params, lam, r_est, 0.0)
	return modode.ModState(lam, r_est, gamma, 0.0, b, float('nan'), wave.t)


def decompose(wave, guess, exp, delta=0.1, max_iter=50, fd_step=1e-6, logObject=None):
	"""
	Description:
	Damped Newton iteration on the orthogonality residuals as functions of (lambda, r, gamma, btilde), b being
	recomputed from the frozen law at every evaluation. The Jacobian is formed by finite differences in the scaled
	unknowns (dlambda/lambda, dr/lambda, dgamma, dbtilde).
	********************************************************************************************************************
	Parameters:
	- wave: WaveField on a radial grid.
	- guess: ModState used as the starting point.
	- exp: ProfileExpansion.
	- delta: Smallness of the starting error relative to ||Q||, logged when exceeded.
	- max_iter: Newton iteration cap.
	- fd_step: Relative finite-difference step.
	- logObject: Optional logging object.
	********************************************************************************************************************
	Returns:
	- DecompResult.
	********************************************************************************************************************
	"""
	params = exp.params
	gs = exp.gs
	grid = gs.grid
	y = grid.nodes
	sampler = _FieldSampler(wave, exp)
	test_norms = None
	intQ = math.sqrt(numerics.inner(gs.Q.values, gs.Q.values, grid))

	def evaluate(theta):
		lam, r, gamma, btilde = theta
		b, eps = sampler.eps(lam, r, gamma, btilde)
		beta = params.beta_inf + btilde
		eps_tilde = numerics.ComplexField(grid, eps * np.exp(1j * beta * y))
		return b, eps, eps_tilde, orthogonality_residuals(eps_tilde, b, gs)

	theta = np.array([guess.lam, guess.r, guess.gamma, guess.btilde], dtype=float)
	if not (theta[0] > 0.0 and theta[1] > 0.0):
		raise UsageError('The decomposition guess needs lambda > 0 and r > 0.')
	b, eps, eps_tilde, F = evaluate(theta)
	start = _norm(eps, grid) / intQ
	if start > delta and logObject is not None:
		logObject.warning('Starting error %.3e exceeds the smallness basin delta=%.3e.' % (start, delta))

	for iteration in range(1, max_iter + 1):
		tests = test_functions(b, gs)
		test_norms = np.array([_norm(t, grid) for t in tests])
		tol = test_norms * max(1e-10 * _norm(eps_tilde.values, grid), 1e-12 * intQ)
		if np.all(np.abs(F) <= tol):
			break
		scales = np.array([theta[0], theta[0], 1.0, 1.0])
		J = np.empty((4, 4))
		for j in range(4):
			shifted = theta.copy()
			shifted[j] += fd_step * scales[j]
			J[:, j] = (evaluate(shifted)[3] - F) / fd_step
		if not np.all(np.isfinite(J)) or np.linalg.cond(J) > CONDITION_LIMIT:
			raise NumericalFailure('Decomposition Jacobian is ill conditioned (cond=%.3e).' % np.linalg.cond(J))
		direction = np.linalg.solve(J, -F) * scales
		step_size = 1.0
		accepted = False
		for _ in range(MAX_HALVINGS + 1):
			trial = theta + step_size * direction
			if trial[0] > 0.0 and trial[1] > 0.0:
				try:
					trial_eval = evaluate(trial)
				except NumericalFailure:
					trial_eval = None
				if trial_eval is not None and np.linalg.norm(trial_eval[3]) < np.linalg.norm(F):
					theta = trial
					b, eps, eps_tilde, F = trial_eval
					accepted = True
					break
			step_size *= 0.5
		if logObject is not None:
			logObject.debug('Newton iteration %d: |F|=%.3e, step %.3e.' % (iteration, np.linalg.norm(F), step_size))
		if not accepted:
			if np.all(np.abs(F) <= tol):
				break
			raise NumericalFailure('Decomposition Newton iteration stalled at |F|=%.3e.' % np.linalg.norm(F))
	else:
		raise NumericalFailure('Decomposition did not converge in %d Newton iterations (|F|=%.3e).'
							   % (max_iter, np.linalg.norm(F)))

	lam, r, gamma, btilde = theta
	weight = numerics.WeightSpec(b, params.beta_inf + btilde, params.N, params.alpha)
	h1mu = numerics.h1mu_norm_values(eps, grid, weight)
	if logObject is not None:
		logObject.info('Decomposition converged in %d iterations at t=%.10e: lambda=%.10e r=%.10e b=%.6e |eps|=%.3e.'
					   % (iteration, wave.t, lam, r, b, h1mu))
	mod = modode.ModState(float(lam), float(r), float(gamma), float(btilde), float(b), float('nan'), float(wave.t))
	return DecompResult(mod, numerics.ComplexField(grid, eps), eps_tilde, F, iteration, float(h1mu))


def decompose_series(waves, exp, guess=None, delta=0.1, max_iter=50, fd_step=1e-6, logObject=None):
	""" Decomposes successive snapshots, each starting from the previous answer. """
	results = []
	for wave in waves:
		if guess is None:
			guess = guess_from_field(wave, exp.params)
		result = decompose(wave, guess, exp, delta=delta, max_iter=max_iter, fd_step=fd_step, logObject=logObject)
		results.append(result)
		guess = result.mod
	return results


def _nonuniform_derivative(x, f):
	""" Second-order three-point derivative on a nonuniform mesh at the interior nodes. """
	h1 = x[1:-1] - x[:-2]
	h2 = x[2:] - x[1:-1]
	return (-h2 / (h1 * (h1 + h2)) * f[:-2] + (h2 - h1) / (h1 * h2) * f[1:-1] + h1 / (h2 * (h1 + h2)) * f[2:])


def mod_residuals(series, source, eps_norms=None, spacing_tol=0.1):
	"""
	Description:
	Defects of the modulation laws along a series of states,
	Mod = |r_s/lambda + 2 beta| + |gamma_s - 1 - beta^2| + |lambda_s/lambda + b - P1| + |bt_s - P2|,
	with s-derivatives by three-point stencils. The rescaled time comes from the states when they carry it,
	otherwise from ds = dt/lambda^2. When consecutive s spacings differ by more than spacing_tol the series is
	resampled onto a uniform s grid with the same number of nodes (cubic splines, log lambda for the scale, linear
	interpolation for the error norms). Endpoints are dropped.
	********************************************************************************************************************
	Parameters:
	- series: List of ModState or DecompResult with increasing t.
	- source: Object with params, P1 and P2 (a ProfileExpansion or a ModTrajectory).
	- eps_norms: Optional ||eps||_{H1_mu} per state, used for the bound b ||eps|| + b^k.
	- spacing_tol: Maximal relative change of consecutive s spacings before resampling.
	********************************************************************************************************************
	Returns:
	- pandas DataFrame with one row per interior node; frame.attrs['resampled'] tells whether the series was resampled.
	********************************************************************************************************************
	"""
	states = [item.mod if isinstance(item, DecompResult) else item for item in series]
	if eps_norms is None and series and isinstance(series[0], DecompResult):
		eps_norms = [item.eps_h1mu for item in series]
	if len(states) < 3:
		raise UsageError('Mod(t) needs at least three decomposed states.')
	params = source.params
	t = np.array([m.t for m in states])
	lam = np.array([m.lam for m in states])
	r = np.array([m.r for m in states])
	gamma = np.array([m.gamma for m in states])
	if np.all(np.abs(gamma) <= math.pi):
		gamma = np.unwrap(gamma)
	btilde = np.array([m.btilde for m in states])
	b = np.array([m.b for m in states])
	s = np.array([m.s for m in states])
	if not np.all(np.isfinite(s)):
		inv = 1.0 / lam ** 2
		s = np.concatenate([[0.0], np.cumsum(0.5 * (inv[1:] + inv[:-1]) * np.diff(t))])
	ds = np.diff(s)
	if np.any(ds <= 0.0):
		raise UsageError('Mod(t) needs strictly increasing times.')
	resampled = bool(np.max(np.abs(ds[1:] / ds[:-1] - 1.0)) > spacing_tol)
	if resampled:
		s_uniform = np.linspace(s[0], s[-1], len(s))

		def resample(values):
			return scipy.interpolate.CubicSpline(s, values)(s_uniform)

		t = resample(t)
		lam = np.exp(resample(np.log(lam)))
		r = resample(r)
		gamma = resample(gamma)
		btilde = resample(btilde)
		b = resample(b)
		if eps_norms is not None:
			eps_norms = np.interp(s_uniform, s, np.asarray(eps_norms, dtype=float))
		s = s_uniform
	beta = params.beta_inf + btilde[1:-1]
	bi = b[1:-1]
	bti = btilde[1:-1]
	lam_i = lam[1:-1]
	P1 = np.array([modode.eval_table(source.P1, x, z) for x, z in zip(bi, bti)])
	P2 = np.array([modode.eval_table(source.P2, x, z) for x, z in zip(bi, bti)])
	mod_r = np.abs(_nonuniform_derivative(s, r) / lam_i + 2.0 * beta)
	mod_gamma = np.abs(_nonuniform_derivative(s, gamma) - 1.0 - beta ** 2)
	mod_lambda = np.abs(_nonuniform_derivative(s, np.log(lam)) + bi - P1)
	mod_btilde = np.abs(_nonuniform_derivative(s, btilde) - P2)
	frame = pd.DataFrame({'t': t[1:-1], 's': s[1:-1], 'b': bi, 'mod_r': mod_r, 'mod_gamma': mod_gamma,
						  'mod_lambda': mod_lambda, 'mod_btilde': mod_btilde,
						  'mod_total': mod_r + mod_gamma + mod_lambda + mod_btilde})
	if eps_norms is not None:
		eps_i = np.asarray(eps_norms)[1:-1]
		frame['eps_h1mu'] = eps_i
		frame['bound'] = bi * eps_i + bi ** params.k
	frame.attrs['resampled'] = resampled
	return frame


def series_frame(results, mod_frame=None):
	""" Decomposition series table; mod_total is filled when Mod(t) was taken on the snapshot times. """
	rows = []
	for item in results:
		m = item.mod
		rows.append([m.t, m.lam, m.r, m.gamma, m.btilde, m.b, item.eps_h1mu] + list(item.ortho_residuals) + [np.nan])
	frame = pd.DataFrame(rows, columns=SERIES_COLUMNS)
	if mod_frame is not None and not mod_frame.attrs.get('resampled', False):
		frame.loc[1:len(frame) - 2, 'mod_total'] = mod_frame['mod_total'].to_numpy()
	return frame


def morawetz_cutoff_phi(z):
	""" phi(z) = exp(1 - 1/(1 - 4 z^2)) for |z| < 1/2 and 0 otherwise; phi(0) = 1 = sup phi. """
	z = np.asarray(z, dtype=float)
	out = np.zeros_like(z)
	inside = np.abs(z) < 0.5
	out[inside] = np.exp(1.0 - 1.0 / (1.0 - 4.0 * z[inside] ** 2))
	return out


def _check_phi_bound(params):
	bound = math.sqrt(1.0 + params.beta_inf ** 2) / params.beta_inf
	if not 1.0 < bound:
		raise InvariantFailure('sup phi = 1 violates sup phi < sqrt(1+beta^2)/beta = %.6f.' % bound)


def _nonlinear_remainder(Q, v, p):
	""" F(Q+v) - F(Q) - Re(f(Q) conj v) with F(u) = |u|^(p+1)/(p+1), f(u) = u |u|^(p-1). """
	return (np.abs(Q + v) ** (p + 1.0) - np.abs(Q) ** (p + 1.0)) / (p + 1.0) - np.real(Q * np.abs(Q) ** (p - 1.0) * np.conj(v))


def energy_morawetz_I(u_tilde, mod, exp):
	"""
	Description:
	I(u~) = 1/2 int |grad u~|^2 + (1+beta^2)/(2 lambda^2) int |u~|^2 - int [F(Q~+u~) - F(Q~) - F'(Q~).u~]
			+ (beta/lambda) Im int phi(r/r(t) - 1) d_r u~ conj(u~),
	evaluated on the radial grid of u~ with Q~ the bubble carried by mod.
	********************************************************************************************************************
	Parameters:
	- u_tilde: WaveField of the error on a radial grid.
	- mod: ModState of the bubble.
	- exp: ProfileExpansion.
	********************************************************************************************************************
	Returns:
	- (I, dictionary of the four terms)
	********************************************************************************************************************
	"""
	params = exp.params
	_check_phi_bound(params)
	p = params.p
	grid = u_tilde.grid
	r = grid.nodes
	beta = params.beta_inf + mod.btilde
	V = grid.volumes()
	measure = grid.measure
	bubble = mod.lam ** (-params.lam_power) * profile.profile_at(exp, mod.b, mod.btilde, (r - mod.r) / mod.lam) \
		* np.exp(1j * mod.gamma)
	u = u_tilde.u
	kinetic = 0.5 * nlsim.gradient_norm(u_tilde) ** 2
	mass_term = 0.5 * (1.0 + beta ** 2) / mod.lam ** 2 * measure * float(np.sum(V * np.abs(u) ** 2))
	nonlinear = -measure * float(np.sum(V * _nonlinear_remainder(bubble, u, p)))
	du = np.gradient(u, grid.h)
	phi = morawetz_cutoff_phi(r / mod.r - 1.0)
	morawetz = beta / mod.lam * measure * float(np.sum(V * phi * np.imag(du * np.conj(u))))
	terms = {'kinetic': kinetic, 'mass': mass_term, 'nonlinear': nonlinear, 'morawetz': morawetz}
	return kinetic + mass_term + nonlinear + morawetz, terms


def renormalized_I(eps, mod, exp):
	"""
	Description:
	lambda^2 I / J with J = |S^(N-1)| r^(N-1) lambda^(1 - 4/(p-1)), computed on the profile grid:
	1/2 { int |eps'|^2 mu + 2 beta Im int phi(z) eps' conj(eps) mu + (1+beta^2) int |eps|^2 mu
		  - 2 int [F(Q_b+eps) - F(Q_b) - F'(Q_b).eps] mu },  z = alpha b y/(2 beta), mu = (1+z)^(N-1).
	********************************************************************************************************************
	"""
	params = exp.params
	_check_phi_bound(params)
	grid = eps.grid
	y = grid.nodes
	beta = params.beta_inf + mod.btilde
	weight = numerics.WeightSpec(mod.b, beta, params.N, params.alpha)
	mu = weight.mu(y)
	z = params.alpha * mod.b * y / (2.0 * beta)
	e = eps.values
	de = numerics.derivative_values(e, grid.h, 1)
	Qb = profile.assemble_Qb(exp, mod.b, mod.btilde).values
	integrand = (np.abs(de) ** 2 + 2.0 * beta * morawetz_cutoff_phi(z) * np.imag(de * np.conj(e))
				 + (1.0 + beta ** 2) * np.abs(e) ** 2 - 2.0 * _nonlinear_remainder(Qb, e, params.p))
	return 0.5 * numerics.integrate_values(integrand * mu, grid)


def renormalization_factor(mod, params):
	""" J / lambda^2 with J = |S^(N-1)| r^(N-1) lambda^(1 - 4/(p-1)). """
	return nlsim.sphere_area(params.N) * mod.r ** (params.N - 1) * mod.lam ** (1.0 - 2.0 * params.lam_power) / mod.lam ** 2


def coercivity_ratio(eps, mod, exp):
	""" I lambda^2 / (J ||eps||^2_{H1_mu}). """
	params = exp.params
	beta = params.beta_inf + mod.btilde
	norm = numerics.h1mu_norm_values(eps.values, eps.grid, numerics.WeightSpec(mod.b, beta, params.N, params.alpha))
	if norm == 0.0:
		raise UsageError('The coercivity ratio is undefined for eps = 0.')
	return renormalized_I(eps, mod, exp) / norm ** 2


def orthogonalize(eps_tilde_values, b, gs):
	""" Removes from eps_tilde the components that violate the four orthogonality conditions. """
	grid = gs.grid
	tests = test_functions(b, gs)
	out = np.array(eps_tilde_values, dtype=complex)
	real = np.real(out)
	imag = np.imag(out)
	for part_index, (pair, values) in enumerate((((0, 1), real), ((2, 3), imag))):
		basis = [tests[pair[0]], tests[pair[1]]]
		G = np.array([[numerics.inner(u, v, grid) for v in basis] for u in basis])
		rhs = np.array([numerics.inner(values, v, grid) for v in basis])
		coeff = np.linalg.solve(G, rhs)
		values -= coeff[0] * basis[0] + coeff[1] * basis[1]
		if part_index == 0:
			real = values
		else:
			imag = values
	return real + 1j * imag


def random_orthogonal_fields(mod, exp, n_fields=100, amplitude=1e-3, seed=0, n_bumps=12, width=2.0, spread=10.0):
	"""
	Description:
	Seeded random smooth error fields (sums of complex Gaussian bumps) projected onto the orthogonality conditions
	and scaled to ||eps||_{H1_mu} = amplitude.
	********************************************************************************************************************
	Returns:
	- List of ComplexField eps on the profile grid.
	********************************************************************************************************************
	"""
	params = exp.params
	gs = exp.gs
	grid = gs.grid
	y = grid.nodes
	beta = params.beta_inf + mod.btilde
	weight = numerics.WeightSpec(mod.b, beta, params.N, params.alpha)
	rng = np.random.default_rng(seed)
	fields = []
	for _ in range(n_fields):
		centres = rng.uniform(-spread, spread, n_bumps)
		coeffs = rng.standard_normal(n_bumps) + 1j * rng.standard_normal(n_bumps)
		values = np.zeros(grid.n, dtype=complex)
		for c, a in zip(centres, coeffs):
			values += a * np.exp(-0.5 * ((y - c) / width) ** 2)
		eps = orthogonalize(values, mod.b, gs) * np.exp(-1j * beta * y)
		norm = numerics.h1mu_norm_values(eps, grid, weight)
		fields.append(numerics.ComplexField(grid, amplitude * eps / norm))
	return fields


def coercivity_suite(mod, exp, n_fields=100, amplitude=1e-3, seed=0):
	""" Coercivity ratios of random orthogonalized fields; returns the ratios and their minimum. """
	ratios = np.array([coercivity_ratio(eps, mod, exp) for eps in random_orthogonal_fields(mod, exp, n_fields,
																					   amplitude, seed)])
	return ratios, float(np.min(ratios))


def sup_norm_control(eps, b, beta, grid, params, delta=0.1):
	"""
	Description:
	Compares ||eps||_{L_inf(y >= -delta/b)} with ||eps||_{H1_mu}. The one dimensional Sobolev bound gives
	sup|eps| <= mu_min^(-1/2) ||eps||_{H1_mu} on that half line, mu_min = (1 - alpha delta/(2 beta))^(N-1).
	********************************************************************************************************************
	Returns:
	- Dictionary with the sup norm, the weighted norm, their ratio and the Sobolev constant.
	********************************************************************************************************************
	"""
	y = grid.nodes
	values = eps.values if isinstance(eps, numerics.Field) else np.asarray(eps)
	region = y >= -delta / b
	sup = float(np.max(np.abs(values[region])))
	norm = numerics.h1mu_norm_values(values, grid, numerics.WeightSpec(b, beta, params.N, params.alpha))
	base = 1.0 - params.alpha * delta / (2.0 * beta)
	if not base > 0.0:
		raise UsageError('delta=%s makes the weight vanish on y >= -delta/b.' % delta)
	mu_min = base ** (params.N - 1)
	constant = 1.0 / math.sqrt(mu_min)
	return {'sup': sup, 'h1mu': float(norm), 'ratio': sup / norm if norm > 0.0 else float('nan'), 'constant': constant}
