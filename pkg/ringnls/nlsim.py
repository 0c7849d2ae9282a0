"""
Radial NLS solver i u_t + Delta u + |u|^(p-1) u = 0 on [0, r_max] (and a one-dimensional full-line mode) with
Strang splitting: exact nonlinear phase half steps around a Crank-Nicolson step of the finite-volume Laplacian.
The ring data are launched from the assembled profile and followed until the gradient has grown by a prescribed
factor, recording conservation, localized virial and blow-up diagnostics.
"""
import math
from dataclasses import dataclass, field

import numpy as np
import pandas as pd
import scipy.integrate
import scipy.special
import scipy.stats

from ringnls import numerics, profile, groundstate
from ringnls.util import UsageError, NumericalFailure

DIAGNOSTICS_COLUMNS = ['t', 'mass', 'energy', 'grad_norm', 'sup_amp', 'virial_chi', 'virial_flux', 'r_est',
					   'lambda_est']

# C^2 blend of psi on s = |x| - 2 in [0, 1], joining |x|^2/2 to 0
VIRIAL_BLEND = (2.0, 2.0, 0.5, -33.5, 47.5, -18.5)


def sphere_area(N):
	""" |S^(N-1)| = 2 pi^(N/2) / Gamma(N/2). """
	return 2.0 * math.pi ** (0.5 * N) / scipy.special.gamma(0.5 * N)


@dataclass(frozen=True)
class RadialGrid:
	"""
	Nodes r_i = i h on [0, r_max] for the radial Laplacian in dimension N. Node i owns the shell
	[r_i - h/2, r_i + h/2] (the ball of radius h/2 for i = 0); the flux across r = 0 vanishes and the solution is
	zero beyond r_max.
	"""
	r_max: float
	n_r: int
	N: int

	def __post_init__(self):
		if int(self.n_r) != self.n_r or self.n_r < numerics.MIN_NODES:
			raise UsageError('RadialGrid needs n_r >= %d nodes.' % numerics.MIN_NODES)
		if not self.r_max > 0.0:
			raise UsageError('RadialGrid needs r_max > 0.')
		if int(self.N) != self.N or self.N < 1:
			raise UsageError('RadialGrid needs an integer dimension N >= 1.')

	@property
	def r_min(self):
		return 0.0

	@property
	def h(self):
		return self.r_max / (self.n_r - 1)

	@property
	def nodes(self):
		return numerics._nodes(0.0, float(self.r_max), int(self.n_r))

	@property
	def n(self):
		return self.n_r

	@property
	def measure(self):
		return sphere_area(self.N)

	def volumes(self):
		r = self.nodes
		h = self.h
		outer = (r + 0.5 * h) ** self.N
		inner = np.maximum(r - 0.5 * h, 0.0) ** self.N
		return (outer - inner) / self.N

	def face_areas(self):
		""" Areas of the faces at r_i - h/2 and r_i + h/2. """
		r = self.nodes
		h = self.h
		left = np.maximum(r - 0.5 * h, 0.0) ** (self.N - 1)
		left[0] = 0.0
		right = (r + 0.5 * h) ** (self.N - 1)
		return left, right

	def abs_coordinate(self):
		return self.nodes, np.ones(self.n_r)


@dataclass(frozen=True)
class LineGrid:
	""" Uniform grid on [x_min, x_max] for the one-dimensional equation with zero values outside. """
	x_min: float
	x_max: float
	n_x: int

	def __post_init__(self):
		if int(self.n_x) != self.n_x or self.n_x < numerics.MIN_NODES or not self.x_max > self.x_min:
			raise UsageError('LineGrid needs x_min < x_max and n_x >= %d.' % numerics.MIN_NODES)

	@property
	def h(self):
		return (self.x_max - self.x_min) / (self.n_x - 1)

	@property
	def nodes(self):
		return numerics._nodes(float(self.x_min), float(self.x_max), int(self.n_x))

	@property
	def n(self):
		return self.n_x

	@property
	def measure(self):
		return 1.0

	def volumes(self):
		return np.full(self.n_x, self.h)

	def face_areas(self):
		return np.ones(self.n_x), np.ones(self.n_x)

	def abs_coordinate(self):
		x = self.nodes
		return np.abs(x), np.sign(x)


def make_radial_grid(r_max, n_r, N):
	return RadialGrid(float(r_max), int(n_r), int(N))


def make_line_grid(x_min, x_max, n_x):
	return LineGrid(float(x_min), float(x_max), int(n_x))


@dataclass(frozen=True, eq=False)
class WaveField:
	grid: object
	u: np.ndarray
	t: float = 0.0
	p: float = None

	def __post_init__(self):
		u = np.asarray(self.u, dtype=complex)
		if u.shape != (self.grid.n,):
			raise UsageError('WaveField has %d samples, the grid has %d nodes.' % (u.shape[0], self.grid.n))
		if not np.all(np.isfinite(u)):
			raise NumericalFailure('Non-finite values in the wave field at t=%s.' % self.t)
		object.__setattr__(self, 'u', u)


@dataclass(frozen=True)
class DiagnosticsRow:
	t: float
	mass: float
	energy: float
	grad_norm: float
	sup_amp: float
	virial_chi: float
	virial_flux: float
	r_est: float
	lambda_est: float


def _stiffness_diagonals(grid):
	""" Symmetric tridiagonal K with (K u)_i = sum of face fluxes, so that Delta = V^-1 K. """
	left, right = grid.face_areas()
	h = grid.h
	diag = -(left + right) / h
	off = right[:-1] / h
	return off, diag, off


def _crank_nicolson(grid, dt):
	"""
	Banded (V - i dt/2 K) and the explicit half (V + i dt/2 K) for one Crank-Nicolson step of u_t = i Delta u.
	"""
	V = grid.volumes()
	lower, diag, upper = _stiffness_diagonals(grid)
	implicit = numerics.BandedMatrix.from_diagonals([-0.5j * dt * upper, V - 0.5j * dt * diag, -0.5j * dt * lower],
													[1, 0, -1])
	return implicit, V, (lower, diag, upper)


def _apply_tridiagonal(diagonals, u):
	lower, diag, upper = diagonals
	out = diag * u
	out[:-1] += upper * u[1:]
	out[1:] += lower * u[:-1]
	return out


def step(wave, dt, p=None):
	"""
	Description:
	One Strang step: u <- u exp(i dt/2 |u|^(p-1)), Crank-Nicolson for the Laplacian over dt, second nonlinear half
	step. Both substeps conserve the discrete mass sum V_i |u_i|^2. With p None the flow is linear.
	********************************************************************************************************************
	Parameters:
	- wave: WaveField.
	- dt: Time step (> 0).
	- p: Nonlinearity exponent; defaults to the exponent carried by the field.
	********************************************************************************************************************
	Returns:
	- WaveField at t + dt.
	********************************************************************************************************************
	"""
	if not dt > 0.0:
		raise UsageError('Time step must be positive (got %s).' % dt)
	if p is None:
		p = wave.p
	u = wave.u
	if p is not None:
		u = u * np.exp(0.5j * dt * np.abs(u) ** (p - 1.0))
	implicit, V, diagonals = _crank_nicolson(wave.grid, dt)
	rhs = V * u + 0.5j * dt * _apply_tridiagonal(diagonals, u)
	solution = numerics.solve_banded(implicit, rhs, check=False)
	if solution.residual > numerics.BANDED_RESIDUAL_TOL:
		raise NumericalFailure('Crank-Nicolson solve residual %.3e at t=%s.' % (solution.residual, wave.t))
	u = solution.x
	if p is not None:
		u = u * np.exp(0.5j * dt * np.abs(u) ** (p - 1.0))
	if not np.all(np.isfinite(u)):
		raise NumericalFailure('NaN detected after the step at t=%s.' % (wave.t + dt))
	return WaveField(wave.grid, u, wave.t + dt, wave.p)


def _gradient_terms(wave):
	""" Face differences (u_(i+1) - u_i)/h with zero beyond the last node, and the face areas. """
	u = wave.u
	h = wave.grid.h
	_, right = wave.grid.face_areas()
	du = np.empty_like(u)
	du[:-1] = (u[1:] - u[:-1]) / h
	du[-1] = -u[-1] / h
	return du, right


def gradient_norm(wave):
	""" ||grad u||_{L2} with the measure of the full space. """
	du, right = _gradient_terms(wave)
	h = wave.grid.h
	return math.sqrt(wave.grid.measure * h * float(np.sum(right * np.abs(du) ** 2)))


def conserved_quantities(wave, p=None):
	"""
	Description:
	Mass int |u|^2 and energy 1/2 int |grad u|^2 - 1/(p+1) int |u|^(p+1), with the angular measure included.
	********************************************************************************************************************
	Returns:
	- (mass, energy)
	********************************************************************************************************************
	"""
	if p is None:
		p = wave.p
	grid = wave.grid
	V = grid.volumes()
	abs_u = np.abs(wave.u)
	mass = grid.measure * float(np.sum(V * abs_u ** 2))
	kinetic = 0.5 * gradient_norm(wave) ** 2
	potential = 0.0
	if p is not None:
		potential = grid.measure * float(np.sum(V * abs_u ** (p + 1.0))) / (p + 1.0)
	return mass, kinetic - potential


def virial_psi(x, derivative=0):
	"""
	Description:
	psi(x) = |x|^2/2 for |x| <= 2, 0 for |x| >= 3, and on 2 <= |x| <= 3 the quintic
	2 + 2s + s^2/2 - 33.5 s^3 + 47.5 s^4 - 18.5 s^5 with s = |x| - 2, which matches value, slope and curvature at
	both ends. derivative=1 returns d psi/d|x|.
	********************************************************************************************************************
	"""
	a = np.abs(np.asarray(x, dtype=float))
	out = np.zeros_like(a)
	inner = a <= 2.0
	blend = (a > 2.0) & (a < 3.0)
	s = a[blend] - 2.0
	c = VIRIAL_BLEND
	if derivative == 0:
		out[inner] = 0.5 * a[inner] ** 2
		out[blend] = c[0] + c[1] * s + c[2] * s ** 2 + c[3] * s ** 3 + c[4] * s ** 4 + c[5] * s ** 5
	elif derivative == 1:
		out[inner] = a[inner]
		out[blend] = c[1] + 2.0 * c[2] * s + 3.0 * c[3] * s ** 2 + 4.0 * c[4] * s ** 3 + 5.0 * c[5] * s ** 4
	else:
		raise UsageError('virial_psi supports derivative 0 or 1.')
	return out


def localized_virial(wave, R):
	"""
	Description:
	Localized virial pair with psi_R = R^2 psi(x/R): chi = int psi_R |u|^2 and flux = Im int grad psi_R . grad u conj(u),
	so that d chi/dt = 2 flux along the flow.
	********************************************************************************************************************
	Parameters:
	- wave: WaveField.
	- R: Localization radius, R < r_max/3 (|x_max|/3 on a line grid).
	********************************************************************************************************************
	Returns:
	- (virial_chi, virial_flux)
	********************************************************************************************************************
	"""
	grid = wave.grid
	a, sign = grid.abs_coordinate()
	if not 0.0 < R < np.max(a) / 3.0:
		raise UsageError('Virial radius must satisfy 0 < R < r_max/3 (got R=%s, r_max=%s).' % (R, np.max(a)))
	V = grid.volumes()
	u = wave.u
	chi = grid.measure * float(np.sum(V * R * R * virial_psi(a / R) * np.abs(u) ** 2))
	du = np.gradient(u, grid.h)
	dpsi = R * virial_psi(a / R, derivative=1) * sign
	flux = grid.measure * float(np.sum(V * dpsi * np.imag(du * np.conj(u))))
	return chi, flux


def estimate_ring(wave, p):
	""" Ring radius from the refined argmax of |u| and the scale from sup|u| = lambda^(-2/(p-1)) Q(0). """
	abs_u = np.abs(wave.u)
	i = int(np.argmax(abs_u))
	x = wave.grid.nodes
	r_est = float(x[i])
	if 0 < i < len(abs_u) - 1:
		f0, f1, f2 = abs_u[i - 1], abs_u[i], abs_u[i + 1]
		curvature = f0 - 2.0 * f1 + f2
		if curvature < 0.0:
			r_est += 0.5 * wave.grid.h * (f0 - f2) / curvature
	sup = float(abs_u[i])
	Q0 = float(groundstate.groundstate_values(p, 0.0)[0])
	lam = (Q0 / sup) ** (0.5 * (p - 1.0)) if sup > 0.0 else float('inf')
	return r_est, sup, lam


def diagnostics_row(wave, p, R):
	mass, energy = conserved_quantities(wave, p)
	chi, flux = localized_virial(wave, R)
	r_est, sup, lam = estimate_ring(wave, p)
	return DiagnosticsRow(float(wave.t), mass, energy, gradient_norm(wave), sup, chi, flux, r_est, lam)


def build_initial_data(exp, m, grid, boundary_tol=1e-8):
	"""
	Description:
	Well-prepared ring data u(r) = lambda^(-2/(p-1)) Q_b((r - r0)/lambda) e^(i gamma) sampled on the radial grid.
	********************************************************************************************************************
	Parameters:
	- exp: ProfileExpansion.
	- m: ModState with lambda, r, gamma, btilde, b.
	- grid: RadialGrid.
	- boundary_tol: Relative size allowed at r_max.
	********************************************************************************************************************
	Returns:
	- WaveField at t = m.t (0 when the state has no physical time).
	********************************************************************************************************************
	"""
	p = exp.params.p
	inner_edge = m.r - 2.0 * m.lam / math.sqrt(m.b)
	if not inner_edge > 0.0:
		raise UsageError('Cutoff support reaches r <= 0 (r - 2 lambda/sqrt(b) = %.6e); use a smaller b.' % inner_edge)
	if m.r >= grid.r_max:
		raise UsageError('Ring radius %.6e lies outside the radial grid (r_max=%.6e).' % (m.r, grid.r_max))
	y = (grid.nodes - m.r) / m.lam
	u = m.lam ** (-2.0 / (p - 1.0)) * profile.profile_at(exp, m.b, m.btilde, y) * np.exp(1j * m.gamma)
	sup = np.max(np.abs(u))
	if abs(u[-1]) > boundary_tol * sup:
		raise UsageError('Profile support leaves the grid: |u(r_max)| = %.3e sup|u|; enlarge r_max.' % (abs(u[-1]) / sup))
	t = m.t if np.isfinite(m.t) else 0.0
	return WaveField(grid, u, t, p)


@dataclass(frozen=True, eq=False)
class SimulationResult:
	series: pd.DataFrame
	T_est: float
	stop_reason: str
	snapshots: list
	start: object
	grid: object
	length_unit: float
	steps: int
	fits: dict = field(default_factory=dict)
	drifts: dict = field(default_factory=dict)


def _start_state(traj, config):
	""" Initial ModState: the configured tbar, else the first node where b <= b_start. """
	tbar = config['ode']['tbar']
	if tbar is not None:
		if not traj.t[0] <= tbar <= traj.t[-1]:
			raise UsageError('ode.tbar=%s lies outside the integrated trajectory.' % tbar)
		i = int(np.searchsorted(traj.t, tbar))
	else:
		below = np.where(traj.b <= config['sim']['b_start'])[0]
		if len(below) == 0:
			raise UsageError('The trajectory never reaches b <= sim.b_start=%s.' % config['sim']['b_start'])
		i = int(below[0])
	return traj.states()[i]


def estimate_blowup_time(series, alpha):
	""" T_est from the linear fit of ||grad u||^(-(1+alpha)) against t over the last half of the run. """
	t = series['t'].to_numpy()
	grad = series['grad_norm'].to_numpy()
	half = t >= t[0] + 0.5 * (t[-1] - t[0])
	if np.sum(half) < 3:
		raise NumericalFailure('Insufficient samples to estimate the blow-up time.')
	fit = scipy.stats.linregress(t[half], grad[half] ** (-(1.0 + alpha)))
	if not fit.slope < 0.0:
		raise NumericalFailure('The gradient is not focusing; no blow-up time can be estimated.')
	return float(-fit.intercept / fit.slope)


def run_to_blowup(config, exp=None, traj=None, logObject=None):
	"""
	Description:
	Launches the well-prepared ring and steps the radial flow until ||grad u|| has grown by sim.amplification or the
	scale estimate falls below sim.lambda_resolution grid spacings. Lengths are measured in units of the initial ring
	radius. Diagnostics are recorded every sim.diagnostics_every steps and snapshots at geometric gradient levels.
	********************************************************************************************************************
	Parameters:
	- config: Run configuration dictionary.
	- exp: Optional ProfileExpansion (built from the configuration when omitted).
	- traj: Optional exact modulation trajectory with physical time.
	- logObject: Optional logging object.
	********************************************************************************************************************
	Returns:
	- SimulationResult with the diagnostics series and T_est.
	********************************************************************************************************************
	"""
	from ringnls import modode

	prob = config['problem']
	sim = config['sim']
	params = groundstate.make_params(prob['N'], prob['p'], prob['k'])
	p = params.p
	if exp is None:
		grid_y = groundstate.default_profile_grid(config)
		exp = profile.build_expansion(params, groundstate.eval_groundstate(params, grid_y),
									  sweeps=config['profile']['sweeps'], logObject=logObject)
	if traj is None:
		ode = config['ode']
		traj = modode.to_physical_time(modode.integrate_exact(params, exp.P1, exp.P2, s0=ode['s0'], g0=ode['g0'],
															  gamma0=ode['gamma0'], s_end=ode['s_end'],
															  n_out=ode['n_out'], rtol=ode['rtol']))
	m = _start_state(traj, config)
	unit = m.r
	m_scaled = modode.ModState(m.lam / unit, 1.0, m.gamma, m.btilde, m.b, m.s, 0.0)
	grid = make_radial_grid(config['grid']['r_max_factor'], config['grid']['n_r'], params.N)
	wave = build_initial_data(exp, m_scaled, grid, boundary_tol=sim['boundary_tol'])
	R = sim['virial_R_factor'] * grid.r_max
	if logObject is not None:
		logObject.info('Ring launched at s=%.6e, b=%.6e, lambda/r=%.6e on %d radial nodes.'
					   % (m.s, m.b, m_scaled.lam, grid.n_r))

	rows = [diagnostics_row(wave, p, R)]
	grad0 = rows[0].grad_norm
	levels = grad0 * sim['amplification'] ** (np.arange(1, sim['snapshots'] + 1) / float(sim['snapshots']))
	snapshots = [wave]
	next_level = 0
	stop_reason = 'max_steps'
	steps = 0
	while steps < sim['max_steps']:
		_, sup, lam = estimate_ring(wave, p)
		dt = min(sim['dt_max'], sim['cfl'] * lam * lam, sim['cfl'] / sup ** (p - 1.0))
		wave = step(wave, dt, p)
		steps += 1
		if steps % sim['diagnostics_every'] != 0:
			continue
		row = diagnostics_row(wave, p, R)
		rows.append(row)
		if abs(wave.u[-1]) > sim['boundary_tol'] * row.sup_amp:
			raise NumericalFailure('Boundary contamination at t=%.6e: |u(r_max)| = %.3e sup|u|; enlarge grid.r_max_factor.'
								   % (row.t, abs(wave.u[-1]) / row.sup_amp))
		while next_level < len(levels) and row.grad_norm >= levels[next_level]:
			snapshots.append(wave)
			next_level += 1
		if logObject is not None:
			logObject.debug('step %d t=%.10e grad=%.6e lambda=%.6e r=%.6e' % (steps, row.t, row.grad_norm,
																			  row.lambda_est, row.r_est))
		if row.grad_norm >= sim['amplification'] * grad0:
			stop_reason = 'amplification'
			break
		if row.lambda_est < sim['lambda_resolution'] * grid.h:
			stop_reason = 'resolution'
			break
	series = pd.DataFrame([r.__dict__ for r in rows], columns=DIAGNOSTICS_COLUMNS)
	T_est = estimate_blowup_time(series, params.alpha)
	fits = fit_blowup_laws(series, T_est, params)
	mass = series['mass'].to_numpy()
	energy = series['energy'].to_numpy()
	drifts = {'mass': float(np.max(np.abs(mass - mass[0])) / mass[0]),
			  'energy': float(np.max(np.abs(energy - energy[0])) / max(abs(energy[0]), 1e-300))}
	if logObject is not None:
		logObject.info('Run stopped (%s) after %d steps; T_est=%.10e, mass drift %.3e.'
					   % (stop_reason, steps, T_est, drifts['mass']))
	return SimulationResult(series, T_est, stop_reason, snapshots, m_scaled, grid, unit, steps, fits, drifts)


def _decade_window(series, T_est):
	grad = series['grad_norm'].to_numpy()
	remaining = T_est - series['t'].to_numpy()
	return (grad >= grad[-1] / 10.0) & (remaining > 0.0)


def fit_blowup_laws(series, T_est, params):
	"""
	Description:
	Log-log fits of ||grad u||, the ring radius and the scale against T_est - t over the last decade of gradient
	growth, with the expected exponents -1/(1+alpha), alpha/(1+alpha) and 1/(1+alpha).
	********************************************************************************************************************
	"""
	alpha = params.alpha
	window = _decade_window(series, T_est)
	if np.sum(window) < 3:
		raise NumericalFailure('Insufficient samples in the last decade of gradient growth.')
	remaining = np.log(T_est - series['t'].to_numpy()[window])
	expected = {'grad_norm': -1.0 / (1.0 + alpha), 'r_est': alpha / (1.0 + alpha), 'lambda_est': 1.0 / (1.0 + alpha)}
	out = {}
	for column, value in expected.items():
		fit = scipy.stats.linregress(remaining, np.log(series[column].to_numpy()[window]))
		out[column] = {'exponent': float(fit.slope), 'stderr': float(fit.stderr), 'expected': value}
	return out


def check_virial_bound(series, T_est, params):
	"""
	Description:
	ratio(t) = int_t^T (T - tau) ||grad u||^2 dtau / (T - t)^(2 alpha/(1+alpha)). The recorded part is integrated
	by the trapezoid rule; the part beyond the last sample continues the power law (T - t)^(-2/(1+alpha)) through the
	last gradient value.
	********************************************************************************************************************
	Returns:
	- (ratio array over the samples with t < T_est, spread max/min over the last decade of gradient growth)
	********************************************************************************************************************
	"""
	alpha = params.alpha
	t = series['t'].to_numpy()
	grad = series['grad_norm'].to_numpy()
	keep = t < T_est
	if np.sum(keep) < 3:
		raise NumericalFailure('Insufficient samples before T_est for the virial bound.')
	t = t[keep]
	grad = grad[keep]
	integrand = (T_est - t) * grad ** 2
	exponent = 2.0 * alpha / (1.0 + alpha)
	last = T_est - t[-1]
	amplitude = grad[-1] ** 2 * last ** (2.0 / (1.0 + alpha))
	tail = amplitude * last ** exponent / exponent
	recorded = scipy.integrate.cumulative_trapezoid(integrand[::-1], -t[::-1], initial=0.0)[::-1]
	ratio = (recorded + tail) / (T_est - t) ** exponent
	window = grad >= grad[-1] / 10.0
	spread = float('nan')
	if np.any(window) and np.min(ratio[window]) > 0.0:
		spread = float(np.max(ratio[window]) / np.min(ratio[window]))
	return ratio, spread


def galilean_drift(beta0, p=3.0, x_max=40.0, n_x=4001, dt=1e-3, t_end=2.0):
	"""
	Description:
	One-dimensional check of the drift: the soliton Q(x) e^(i beta0 x) moves with speed 2 beta0. Returns the centre of
	mass speed measured over [0, t_end].
	********************************************************************************************************************
	"""
	grid = make_line_grid(-x_max, x_max, n_x)
	x = grid.nodes
	Q = groundstate.groundstate_values(p, x)[0]
	wave = WaveField(grid, Q * np.exp(1j * beta0 * x), 0.0, p)
	V = grid.volumes()

	def centre(w):
		density = V * np.abs(w.u) ** 2
		return float(np.sum(x * density) / np.sum(density))

	times = [0.0]
	centres = [centre(wave)]
	n_steps = int(round(t_end / dt))
	for i in range(n_steps):
		wave = step(wave, dt)
		if (i + 1) % 50 == 0:
			times.append(wave.t)
			centres.append(centre(wave))
	fit = scipy.stats.linregress(times, centres)
	return float(fit.slope)


def writeDiagnosticsCsv(series, csv_file):
	series.to_csv(csv_file, index=False, float_format='%.17g')
