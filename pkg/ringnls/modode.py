"""
The finite dimensional modulation system of the collapsing ring,
	lambda_s/lambda + b = P1, r_s/lambda + 2 beta = 0, bt_s = P2, gamma_s = 1 + beta^2, b = 2 beta lambda/(alpha r),
integrated through the reformulated variables (g, b, bt, gamma) with g = r/lambda^alpha, together with the physical
time reconstruction and the perturbed stability experiment.
"""
import math
from dataclasses import dataclass, field

import numpy as np
import pandas as pd
import scipy.integrate
import scipy.stats

from ringnls.util import UsageError, NumericalFailure, InvariantFailure

TRAJECTORY_COLUMNS = ['s', 't', 'lambda', 'r', 'b', 'btilde', 'gamma', 'g']
CONSISTENCY_TOL = 1e-10
COMPLEX_STEP = 1e-30


@dataclass(frozen=True)
class ModState:
	lam: float
	r: float
	gamma: float
	btilde: float
	b: float
	s: float
	t: float = float('nan')

	def __post_init__(self):
		if not self.b > 0.0:
			raise UsageError('Modulation state requires b > 0 (got %s).' % self.b)
		if not (self.lam > 0.0 and self.r > 0.0):
			raise UsageError('Modulation state requires lambda > 0 and r > 0.')

	def consistency_defect(self, alpha, beta_inf):
		beta = beta_inf + self.btilde
		return abs(self.b - 2.0 * beta * self.lam / (alpha * self.r)) / self.b


@dataclass(frozen=True, eq=False)
class ModTrajectory:
	params: object
	s: np.ndarray
	t: np.ndarray
	lam: np.ndarray
	r: np.ndarray
	b: np.ndarray
	btilde: np.ndarray
	gamma: np.ndarray
	g: np.ndarray
	g_inf: float
	P1: dict
	P2: dict
	dense: object = None
	bootstrap_exit_s: object = None

	@property
	def has_physical_time(self):
		return bool(np.all(np.isfinite(self.t)))

	def states(self):
		return [ModState(float(self.lam[i]), float(self.r[i]), float(self.gamma[i]), float(self.btilde[i]),
						 float(self.b[i]), float(self.s[i]), float(self.t[i])) for i in range(len(self.s))]

	def to_frame(self):
		return pd.DataFrame({'s': self.s, 't': self.t, 'lambda': self.lam, 'r': self.r, 'b': self.b,
							 'btilde': self.btilde, 'gamma': self.gamma, 'g': self.g}, columns=TRAJECTORY_COLUMNS)


def leading_tables():
	""" Leading truncation of the multiplier polynomials: P1 = 0 and P2 = -2 b bt. """
	return {}, {(1, 1): -2.0}


def eval_table(table, b, btilde):
	""" Value of sum c_jl b^j bt^l; works for complex arguments. """
	total = 0.0
	for (j, l), c in table.items():
		total = total + c * b ** j * btilde ** l
	return total


def rhs_exact(state, P1, P2, params):
	"""
	Description:
	Right-hand side of the exact modulation system in the rescaled time s.
	********************************************************************************************************************
	Parameters:
	- state: ModState.
	- P1, P2: Polynomial tables {(j, l): coefficient}.
	- params: ProblemParams.
	********************************************************************************************************************
	Returns:
	- numpy array (lambda_s, r_s, gamma_s, bt_s, b_s).
	********************************************************************************************************************
	"""
	if not state.b > 0.0:
		raise UsageError('rhs_exact requires b > 0 (got %s).' % state.b)
	alpha = params.alpha
	beta = params.beta_inf + state.btilde
	p1 = eval_table(P1, state.b, state.btilde)
	p2 = eval_table(P2, state.b, state.btilde)
	lam_s = state.lam * (-state.b + p1)
	r_s = -2.0 * beta * state.lam
	gamma_s = 1.0 + beta * beta
	btilde_s = p2
	b_s = -(1.0 - alpha) * state.b ** 2 + state.b * p2 / beta + state.b * p1
	return np.array([lam_s, r_s, gamma_s, btilde_s, b_s])


def _s_rhs(x, forcing, params, P1, P2):
	"""
	(g, b, bt, gamma) derivatives in s. forcing = (f1, f2, f3, f4) perturbs the four modulation laws additively:
	lambda_s/lambda + b - P1 = f1, r_s/lambda + 2 beta = f2, bt_s - P2 = f3, gamma_s - 1 - beta^2 = f4.
	"""
	g, b, bt, gamma = x
	f1, f2, f3, f4 = forcing
	alpha = params.alpha
	beta = params.beta_inf + bt
	p1 = eval_table(P1, b, bt)
	p2 = eval_table(P2, b, bt)
	drift = f2 * alpha * b / (2.0 * beta)
	g_s = g * (-alpha * p1 - alpha * f1 + drift)
	b_s = b * (-(1.0 - alpha) * b + p1 + f1 + (p2 + f3) / beta - drift)
	bt_s = p2 + f3
	gamma_s = 1.0 + beta * beta + f4
	return np.array([g_s, b_s, bt_s, gamma_s])


def scale_from(params, g, b, btilde):
	""" lambda = (alpha g b/(2 beta))^(1/(1-alpha)), the scale encoded by (g, b, bt). """
	beta = params.beta_inf + btilde
	return (params.alpha * g * b / (2.0 * beta)) ** (1.0 / (1.0 - params.alpha))


def integrate_exact(params, P1=None, P2=None, s0=100.0, g0=0.75, gamma0=0.0, s_end=1e7, n_out=2001, rtol=1e-10,
					logObject=None):
	"""
	Description:
	Integrates the exact modulation system from b(s0) = 1/((1-alpha) s0), bt(s0) = 1/s0^2, g(s0) = g0, gamma(s0) =
	gamma0 up to s_end with an adaptive 4/5th order Runge-Kutta scheme in sigma = ln s. The trajectory is sampled on
	log-spaced nodes; lambda and r are reconstructed from (g, b, bt).
	********************************************************************************************************************
	Parameters:
	- params: ProblemParams.
	- P1, P2: Polynomial tables; the leading truncation is used when omitted.
	- s0, g0, gamma0: Initialization.
	- s_end: Final rescaled time.
	- n_out: Number of output nodes.
	- rtol: Relative tolerance.
	- logObject: Optional logging object.
	********************************************************************************************************************
	Returns:
	- ModTrajectory without physical time (t = NaN); see to_physical_time.
	********************************************************************************************************************
	"""
	if P1 is None and P2 is None:
		P1, P2 = leading_tables()
	P1 = dict(P1 or {})
	P2 = dict(P2 or {})
	if s0 < 100.0:
		raise UsageError('s0 >= 100 violated (got %s).' % s0)
	if not 0.5 < g0 < 1.0:
		raise UsageError('1/2 < g0 < 1 violated (got %s).' % g0)
	if not s_end > s0:
		raise UsageError('s_end must exceed s0.')
	alpha = params.alpha
	x0 = np.array([g0, 1.0 / ((1.0 - alpha) * s0), 1.0 / s0 ** 2, gamma0], dtype=float)
	no_forcing = (0.0, 0.0, 0.0, 0.0)

	def rhs(sigma, x):
		if not x[1] > 0.0:
			raise NumericalFailure('b left the positive axis at s=%.6e.' % math.exp(sigma))
		return math.exp(sigma) * _s_rhs(x, no_forcing, params, P1, P2)

	sigma_nodes = np.linspace(math.log(s0), math.log(s_end), int(n_out))
	try:
		sol = scipy.integrate.solve_ivp(rhs, (sigma_nodes[0], sigma_nodes[-1]), x0, method='RK45', t_eval=sigma_nodes,
										rtol=rtol, atol=[1e-14, 1e-300, 1e-300, 1e-10], dense_output=True)
	except NumericalFailure:
		raise
	except Exception as e:
		raise NumericalFailure('Modulation integration failed: %s' % str(e))
	if sol.status != 0:
		raise NumericalFailure('Modulation integration stopped early (step-size underflow?): %s' % sol.message)
	s = np.exp(sol.t)
	g, b, bt, gamma = sol.y
	if not np.all(np.isfinite(sol.y)):
		raise NumericalFailure('Non-finite modulation state encountered.')
	lam = scale_from(params, g, b, bt)
	r = g * lam ** alpha
	defect = np.max(np.abs(b - 2.0 * (params.beta_inf + bt) * lam / (alpha * r)) / b)
	if defect > CONSISTENCY_TOL:
		raise InvariantFailure('Frozen-b consistency lost: relative defect %.3e.' % defect)

	bootstrap_exit = None
	outside = np.where(np.abs(bt) > s ** (-1.5))[0]
	if len(outside) > 0:
		bootstrap_exit = float(s[outside[0]])
		if logObject is not None:
			logObject.warning('Bootstrap bound |bt| <= s^(-3/2) left at s=%.6e.' % bootstrap_exit)

	g_inf, _ = _tail_g(s, g)
	if logObject is not None:
		logObject.info('Exact modulation system integrated: %d right-hand side evaluations, g_inf=%.12f.'
					   % (sol.nfev, g_inf))
	nan = np.full(len(s), np.nan)
	return ModTrajectory(params, s, nan, lam, r, b, bt, gamma, g, float(g_inf), P1, P2, sol.sol, bootstrap_exit)


def _tail_g(s, g):
	s_max = s[-1]
	late = (s >= s_max / 10.0)
	early = (s >= s_max / 100.0) & (s < s_max / 10.0)
	late_value = float(g[late][-1])
	if np.sum(early) == 0:
		return late_value, float('nan')
	return late_value, abs(late_value - float(g[early][-1]))


def extract_g_infinity(traj):
	"""
	Description:
	Limit of g = r/lambda^alpha estimated on the two last decades of the trajectory. Returns (g_inf, spread) where the
	spread is the difference between the two window estimates.
	********************************************************************************************************************
	"""
	return _tail_g(traj.s, traj.g)


def _lambda_tail_fit(s, lam):
	window = s >= s[-1] / 10.0
	if np.sum(window) < 3:
		raise NumericalFailure('Tail window of the scale holds fewer than three nodes.')
	fit = scipy.stats.linregress(np.log(s[window]), np.log(lam[window]))
	q = -fit.slope
	if not 2.0 * q > 1.0:
		raise NumericalFailure('Non-convergent tail fit: lambda ~ s^(-%.4f) is not square integrable.' % q)
	return math.exp(fit.intercept), q


def to_physical_time(traj, rtol=1e-10):
	"""
	Description:
	Assigns the physical time t(s) = -int_s^inf lambda^2 ds' with the blow-up time at 0. The finite part is integrated
	backward from S_max on the dense solution; the tail beyond S_max uses the power law fitted on [S_max/10, S_max].
	********************************************************************************************************************
	Parameters:
	- traj: ModTrajectory produced by integrate_exact.
	- rtol: Relative tolerance of the time quadrature.
	********************************************************************************************************************
	Returns:
	- ModTrajectory with t filled in.
	********************************************************************************************************************
	"""
	if traj.dense is None:
		raise UsageError('Physical time needs the dense solution of integrate_exact.')
	params = traj.params
	C, q = _lambda_tail_fit(traj.s, traj.lam)
	s_max = traj.s[-1]
	tail = C * C * s_max ** (1.0 - 2.0 * q) / (2.0 * q - 1.0)

	def rhs(sigma, t):
		g, b, bt, _ = traj.dense(sigma)
		return [math.exp(sigma) * float(scale_from(params, g, b, bt)) ** 2]

	sigma = np.log(traj.s)
	sol = scipy.integrate.solve_ivp(rhs, (sigma[-1], sigma[0]), [-tail], method='RK45', t_eval=sigma[::-1],
									rtol=rtol, atol=1e-300)
	if sol.status != 0:
		raise NumericalFailure('Physical time quadrature failed: %s' % sol.message)
	t = sol.y[0][::-1]
	if not np.all(np.diff(t) > 0.0) or not t[-1] < 0.0:
		raise NumericalFailure('Physical time is not strictly increasing toward 0-.')
	return ModTrajectory(params, traj.s, t, traj.lam, traj.r, traj.b, traj.btilde, traj.gamma, traj.g, traj.g_inf,
						 traj.P1, traj.P2, traj.dense, traj.bootstrap_exit_s)


def expected_exponents(params):
	""" Exponents of lambda, r and gamma against |t| along the ring regime. """
	alpha = params.alpha
	return {'lambda': 1.0 / (1.0 + alpha), 'r': alpha / (1.0 + alpha), 'gamma': -(1.0 - alpha) / (1.0 + alpha)}


def fit_power_laws(traj, params=None, decades=2.0):
	"""
	Description:
	Log-log fits of lambda, r and |gamma| against |t| on the last decades of s, plus the b(1-alpha)s -> 1 law.
	********************************************************************************************************************
	Parameters:
	- traj: ModTrajectory with physical time.
	- params: ProblemParams (defaults to the trajectory parameters).
	- decades: Number of decades of s used by the fits.
	********************************************************************************************************************
	Returns:
	- Dictionary keyed by quantity with exponent, stderr, prefactor, expected value and |t| window.
	********************************************************************************************************************
	"""
	if params is None:
		params = traj.params
	if not traj.has_physical_time:
		raise UsageError('Power-law fits need a trajectory with physical time.')
	window = traj.s >= traj.s[-1] / 10.0 ** decades
	abs_t = np.abs(traj.t[window])
	expected = expected_exponents(params)
	out = {}
	for name, values in (('lambda', traj.lam), ('r', traj.r), ('gamma', np.abs(traj.gamma))):
		fit = scipy.stats.linregress(np.log(abs_t), np.log(values[window]))
		out[name] = {'exponent': float(fit.slope), 'stderr': float(fit.stderr), 'prefactor': float(math.exp(fit.intercept)),
					 'expected': expected[name], 'window': [float(abs_t.min()), float(abs_t.max())]}
	residual = np.abs(traj.b * (1.0 - params.alpha) * traj.s - 1.0)
	band = (traj.s >= 1e3) & (traj.s <= 1e6)
	if np.sum(band) > 0:
		constant = float(np.max(residual[band] * traj.s[band] / np.log(traj.s[band])))
	else:
		constant = float('nan')
	out['b_law'] = {'final_residual': float(residual[-1]), 'log_rate_constant': constant}
	return out


def perturbed_exponents(params):
	""" Decay exponents of the differences in the perturbed experiment and of the bootstrap bound. """
	alpha = params.alpha
	k = params.k
	base = k * (1.0 - alpha) / (1.0 + alpha)
	return {'differences': base + 1.0 - 2.0 / (1.0 + alpha), 'gamma': base + 2.0 - (5.0 - alpha) / (1.0 + alpha),
			'bootstrap': 2.0 / (1.0 + alpha)}


@dataclass(frozen=True, eq=False)
class PerturbedResult:
	t: np.ndarray
	exact: dict
	worst: dict
	random: dict
	signs: np.ndarray
	seed: int
	forcing_scale: float
	fits: dict = field(default_factory=dict)
	bootstrap_exit_t: object = None

	def to_frame(self):
		columns = {'t': self.t}
		for name in ('b', 'g', 'btilde', 'gamma'):
			columns['exact_' + name] = self.exact[name]
			columns['worst_d' + name] = self.worst[name]
			columns['random_d' + name] = self.random[name]
		return pd.DataFrame(columns)


def _state_at_time(traj, t_target):
	""" Exact state (g, b, bt, gamma) at physical time t_target, interpolated through sigma(log|t|). """
	log_abs_t = np.log(np.abs(traj.t))
	sigma = np.log(traj.s)
	sigma_target = float(np.interp(math.log(abs(t_target)), log_abs_t[::-1], sigma[::-1]))
	return np.asarray(traj.dense(sigma_target), dtype=float)


def _time_at_s(traj, s_target):
	return float(np.interp(math.log(s_target), np.log(traj.s), traj.t))


def integrate_perturbed(params, P1=None, P2=None, forcing_scale=1.0, tbar=None, t_under=None, traj=None, seed=0,
						n_out=401, rtol=1e-10, logObject=None):
	"""
	Description:
	Stability of the exact trajectory under O(b^k) forcing of the four modulation laws. Starting from the exact state
	at tbar, the exact system and the tangent-linear responses to each forcing component (magnitude
	forcing_scale * b^k) are integrated backward in physical time down to t_under, in the variable -ln|t|. Directional
	derivatives use complex steps. The worst-case differences sum the absolute responses; the random-sign differences
	combine them with seeded signs.
	********************************************************************************************************************
	Parameters:
	- params: ProblemParams.
	- P1, P2: Polynomial tables (leading truncation when omitted).
	- forcing_scale: Amplitude of the injected b^k forcing.
	- tbar: Start time (< 0); default t_under * 1e-4.
	- t_under: End time (< tbar); default the time at s = 1e3.
	- traj: Optional exact trajectory with physical time (integrated with defaults when omitted).
	- seed: Seed of the random signs.
	- n_out: Number of output nodes.
	- rtol: Relative tolerance.
	- logObject: Optional logging object.
	********************************************************************************************************************
	Returns:
	- PerturbedResult.
	********************************************************************************************************************
	"""
	if P1 is None and P2 is None:
		P1, P2 = leading_tables()
	P1 = dict(P1 or {})
	P2 = dict(P2 or {})
	if not params.k > 2.0 / (1.0 - params.alpha) + 1.0:
		raise UsageError('k > 2/(1-alpha) + 1 violated for the perturbed experiment.')
	if traj is None:
		traj = to_physical_time(integrate_exact(params, P1, P2, s0=100.0, g0=0.75, s_end=1e6, rtol=rtol))
	if not traj.has_physical_time:
		traj = to_physical_time(traj)
	if t_under is None:
		t_under = _time_at_s(traj, 1e3)
	if tbar is None:
		tbar = t_under * 1e-4
	if not (traj.t[0] <= t_under < tbar < 0.0) or tbar > traj.t[-1]:
		raise UsageError('Need t(s0) <= t_under < tbar <= t(S_max) < 0 (got t_under=%.6e, tbar=%.6e).' % (t_under, tbar))
	k = params.k
	x0 = _state_at_time(traj, tbar)

	def G(x, forcing):
		lam = scale_from(params, x[0], x[1], x[2])
		return _s_rhs(x, forcing, params, P1, P2) / (lam * lam)

	zero = (0.0, 0.0, 0.0, 0.0)

	def rhs(tau, Y):
		abs_t = math.exp(-tau)
		x = Y[:4]
		out = np.empty(20)
		out[:4] = abs_t * G(x, zero)
		magnitude = forcing_scale * x[1] ** k
		for i in range(4):
			R = Y[4 + 4 * i:8 + 4 * i]
			forcing = [0.0, 0.0, 0.0, 0.0]
			forcing[i] = 1j * COMPLEX_STEP * magnitude
			out[4 + 4 * i:8 + 4 * i] = abs_t * np.imag(G(x + 1j * COMPLEX_STEP * R, forcing)) / COMPLEX_STEP
		return out

	Y0 = np.concatenate([x0, np.zeros(16)])
	tau_start = -math.log(-tbar)
	tau_end = -math.log(-t_under)
	tau_nodes = np.linspace(tau_start, tau_end, int(n_out))
	sol = scipy.integrate.solve_ivp(rhs, (tau_start, tau_end), Y0, method='RK45', t_eval=tau_nodes, rtol=rtol,
									atol=1e-300, first_step=1e-6 * (tau_end - tau_start))
	if sol.status != 0:
		raise NumericalFailure('Perturbed modulation integration failed: %s' % sol.message)
	t = -np.exp(-sol.t)
	names = ['g', 'b', 'btilde', 'gamma']
	responses = np.array([sol.y[4 + 4 * i:8 + 4 * i] for i in range(4)])
	rng = np.random.default_rng(seed)
	signs = rng.choice([-1.0, 1.0], size=4)
	exact = {name: sol.y[j] for j, name in enumerate(names)}
	worst = {name: np.sum(np.abs(responses[:, j, :]), axis=0) for j, name in enumerate(names)}
	random = {name: np.tensordot(signs, responses[:, j, :], axes=1) for j, name in enumerate(names)}

	theory = perturbed_exponents(params)
	bound = np.abs(t) ** theory['bootstrap']
	over = np.where((worst['b'] > bound) | (worst['g'] > bound) | (worst['btilde'] > bound))[0]
	bootstrap_exit = float(t[over[0]]) if len(over) > 0 else None
	if bootstrap_exit is not None and logObject is not None:
		logObject.warning('Perturbed differences exceed |t|^(2/(1+alpha)) at t=%.6e.' % bootstrap_exit)

	fits = {'expected': theory}
	window = np.abs(t) >= 100.0 * abs(tbar)
	for label, diffs in (('worst', worst), ('random', random)):
		total = np.abs(diffs['b']) + np.abs(diffs['btilde']) + np.abs(diffs['g'])
		dgamma = np.abs(diffs['gamma'])
		for key, series in (('differences', total), ('gamma', dgamma)):
			sel = window & (series > 0.0)
			if np.sum(sel) < 3:
				fits['%s_%s' % (label, key)] = None
				continue
			fit = scipy.stats.linregress(np.log(np.abs(t[sel])), np.log(series[sel]))
			fits['%s_%s' % (label, key)] = {'exponent': float(fit.slope), 'stderr': float(fit.stderr)}
	if logObject is not None:
		logObject.info('Perturbed experiment done on [%.6e, %.6e] with forcing scale %s and seed %d.'
					   % (t_under, tbar, forcing_scale, seed))
	return PerturbedResult(t, exact, worst, random, signs, int(seed), float(forcing_scale), fits, bootstrap_exit)


def writeTrajectoryCsv(traj, csv_file):
	traj.to_frame().to_csv(csv_file, index=False, float_format='%.17g')


def readTrajectoryFrame(csv_file):
	""" Reads a trajectory CSV back into a DataFrame, checking its columns. """
	df = pd.read_csv(csv_file)
	missing = [c for c in TRAJECTORY_COLUMNS if c not in df.columns]
	if missing:
		raise UsageError('Trajectory file %s lacks columns: %s' % (csv_file, ', '.join(missing)))
	return df
