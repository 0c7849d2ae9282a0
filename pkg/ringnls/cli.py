"""
Command-line layer of ringnls: the profile, ode, sim, decomp and verify-all subcommands, their output directories
and the acceptance suites run by verify-all.
"""
import os
import sys
import json
import math
import argparse
import traceback
import multiprocessing

import numpy as np
import pandas as pd

from ringnls import util, numerics, groundstate, linops, profile, modode, nlsim, decomp, report
from ringnls.util import UsageError, InvariantFailure, NumericalFailure

SUBCOMMANDS = ['profile', 'ode', 'sim', 'decomp', 'verify-all']


def create_parser(argv=None):
	""" Parse arguments """
	parser = argparse.ArgumentParser(description="""
	Program: ringnls

	Numerical laboratory for collapsing-ring blow-up of the radial focusing nonlinear Schroedinger equation in the
	mass-supercritical, energy-subcritical range. Builds the slowly modulated ring profile, integrates the modulation
	equations, simulates the radial flow from well-prepared data and decomposes the numerical solution.

	Subcommands:
	  profile     build (or re-verify) the profile expansion, its constants and its residual order
	  ode         integrate the modulation equations, fit the power laws, run the perturbed experiment
	  sim         run a well-prepared ring to blow-up and record diagnostics and snapshots
	  decomp      decompose saved snapshots, compute Mod(t) and the energy/Morawetz functional
	  verify-all  run every acceptance suite over the admissible (N,p) matrix and write a spreadsheet report

	Exit codes: 0 pass, 1 invariant failure, 2 usage error, 3 numerical failure.
	Output goes to --outdir, else $RINGNLS_OUTPUT_ROOT/<subcommand>_N<N>_p<p>/, else ./ringnls_results/.
	""", formatter_class=argparse.RawTextHelpFormatter)

	parser.add_argument('-v', '--version', action='store_true', help='Print the version and exit.', required=False,
						default=False)
	subparsers = parser.add_subparsers(dest='subcommand')

	common = argparse.ArgumentParser(add_help=False)
	common.add_argument('--N', type=int, help='Space dimension (overrides problem.N).', required=False, default=None)
	common.add_argument('--p', type=float, help='Nonlinearity exponent (overrides problem.p).', required=False,
						default=None)
	common.add_argument('--k', type=int, help='Expansion order (overrides problem.k).', required=False, default=None)
	common.add_argument('-c', '--config', help='YAML configuration file.', required=False, default=None)
	common.add_argument('-s', '--set', action='append', dest='overrides', default=[], required=False,
						help='Override a configuration value, e.g. --set sim.cfl=0.01. Can be repeated.')
	common.add_argument('-o', '--outdir', help='Output directory.', required=False, default=None)
	common.add_argument('--cpus', type=int, help='Number of worker processes. [Default is 1].', required=False,
						default=1)

	p_profile = subparsers.add_parser('profile', parents=[common], formatter_class=argparse.RawTextHelpFormatter,
									  help='Build and verify the profile expansion.')
	p_profile.add_argument('--verify-only', action='store_true', default=False,
						   help='Re-run the invariants on a saved expansion (--input) without rebuilding.')
	p_profile.add_argument('-i', '--input', default=None, help='Directory of a saved expansion.')

	p_ode = subparsers.add_parser('ode', parents=[common], formatter_class=argparse.RawTextHelpFormatter,
								  help='Integrate the modulation equations.')
	p_ode.add_argument('--fit', action='store_true', default=False, help='Fit the power laws against |t|.')
	p_ode.add_argument('--perturbed', action='store_true', default=False,
					   help='Run the perturbed-system experiment with O(b^k) forcing.')

	p_sim = subparsers.add_parser('sim', parents=[common], formatter_class=argparse.RawTextHelpFormatter,
								  help='Simulate a well-prepared collapsing ring.')
	p_sim.add_argument('--until-amplification', type=float, default=None,
					   help='Stop once ||grad u|| has grown by this factor (overrides sim.amplification).')
	p_sim.add_argument('--snapshots', type=int, default=None, help='Number of saved snapshots (overrides sim.snapshots).')
	p_sim.add_argument('--decomp', action='store_true', default=False, help='Decompose the snapshots after the run.')

	p_decomp = subparsers.add_parser('decomp', parents=[common], formatter_class=argparse.RawTextHelpFormatter,
									 help='Decompose the snapshots of a simulation run.')
	p_decomp.add_argument('-i', '--input', required=False, default=None, help='Directory of a sim run.')
	p_decomp.add_argument('--series', action='store_true', default=False,
						  help='Compute Mod(t) along the decomposed series.')

	p_verify = subparsers.add_parser('verify-all', parents=[common], formatter_class=argparse.RawTextHelpFormatter,
									 help='Run all acceptance suites and write Verification_Report.xlsx.')
	p_verify.add_argument('--with-sim', action='store_true', default=False,
						  help='Also run the ring simulation and the Mod(t) suites at (N,p) = (3,3).')

	args = parser.parse_args(argv)
	return args


def resolveConfig(args):
	""" Defaults, then the YAML file, then --set overrides, then the dedicated flags. """
	config = util.loadConfig(args.config, args.overrides)
	for key in ('N', 'p', 'k'):
		value = getattr(args, key, None)
		if value is not None:
			config['problem'][key] = value
	if getattr(args, 'until_amplification', None) is not None:
		config['sim']['amplification'] = args.until_amplification
	if getattr(args, 'snapshots', None) is not None:
		config['sim']['snapshots'] = args.snapshots
	params = groundstate.make_params(config['problem']['N'], config['problem']['p'], config['problem']['k'])
	config['problem']['k'] = params.k
	return config, params


def flattenConfig(config, prefix=''):
	names = []
	values = []
	for key in sorted(config.keys()):
		value = config[key]
		if isinstance(value, dict):
			sub_names, sub_values = flattenConfig(value, prefix + key + '.')
			names += sub_names
			values += sub_values
		else:
			names.append(prefix + key)
			values.append(value)
	return names, values


def _row(suite, params, check, measured, expected, tolerance, passed):
	return {'suite': suite, 'N': params.N, 'p': params.p, 'check': check, 'measured': measured,
			'expected': expected, 'tolerance': tolerance, 'passed': bool(passed)}


def _relative_ok(measured, expected, tol):
	return math.isfinite(measured) and abs(measured - expected) <= tol * abs(expected)


def buildProfile(params, config, logObject=None, h=None):
	grid_conf = config['grid']
	spacing = grid_conf['h'] if h is None else h
	grid = numerics.Grid1D.from_spacing(grid_conf['y_min'], grid_conf['y_max'], spacing)
	gs = groundstate.eval_groundstate(params, grid)
	return profile.build_expansion(params, gs, sweeps=config['profile']['sweeps'], logObject=logObject)


def profileTables(params, config, exp, logObject=None):
	"""
	Description:
	Resolves the multiplier polynomials used by the modulation equations: the leading truncation or the tables of a
	profile expansion (built when not supplied).
	********************************************************************************************************************
	"""
	if config['ode']['tables'] == 'leading':
		return modode.leading_tables()
	if config['ode']['tables'] != 'expansion':
		raise UsageError("ode.tables must be 'leading' or 'expansion' (got %s)." % config['ode']['tables'])
	if exp is None:
		exp = buildProfile(params, config, logObject)
	return exp.P1, exp.P2


def constantsFrame(exp):
	rows = []
	for key in sorted(exp.c1.keys(), key=lambda x: (x[0] + x[1], -x[0])):
		rows.append([key[0], key[1], exp.c1[key], exp.c2[key], exp.diagnostics.get('c1_scalar_product', {}).get(key, np.nan),
					 exp.diagnostics.get('c2_scalar_product', {}).get(key, np.nan)])
	return pd.DataFrame(rows, columns=['j', 'l', 'c1', 'c2', 'c1_scalar_product', 'c2_scalar_product'])


def cmd_profile(config, params, args, outdir, logObject):
	"""
	Description:
	Builds (or loads with --verify-only) the profile expansion, writes the constants table, the residual slope report
	and the invariant checks. Raises InvariantFailure naming the first failed invariant.
	********************************************************************************************************************
	"""
	if args.verify_only:
		indir = args.input if args.input is not None else outdir + 'expansion/'
		exp = profile.load_expansion(indir)
		logObject.info('Loaded saved expansion from %s.' % indir)
	else:
		sys.stdout.write('--------------------\nStep 1\n--------------------\nBuilding the profile expansion\n')
		exp = buildProfile(params, config, logObject)
		profile.save_expansion(exp, outdir + 'expansion/')

	constantsFrame(exp).to_csv(outdir + 'constants.csv', index=False, float_format='%.17g')

	sys.stdout.write('--------------------\nStep 2\n--------------------\nMeasuring the residual order\n')
	b_values = config['profile']['residual_b_values']
	slope = profile.residual_slope(exp, b_values, cutoff=False)
	pd.DataFrame({'b': slope['b_values'], 'psi_h1mu': slope['norms']}).to_csv(outdir + 'residual_slope.csv', index=False,
																			  float_format='%.17g')
	identities = groundstate.check_identities(exp.gs)
	parity = profile.parity_report(exp)
	checks = profile.check_profile_invariants(exp)
	payload = {'params': exp.params.to_dict(), 'residual_slope': slope, 'identities': identities.to_json(),
			   'decay_constants': {'%d,%d' % key: value for key, value in profile.decay_constants(exp).items()},
			   'parity': {'%s(%d,%d)' % key: {'parity': value[0], 'defect': value[1]} for key, value in parity.items()},
			   'reconstruction_defects': {'%d,%d' % key: value for key, value in profile.reconstruction_defects(exp).items()},
			   'checks': [{'check': c[0], 'measured': float(c[1]), 'expected': float(c[2]), 'tolerance': float(c[3]),
						   'passed': bool(c[4])} for c in checks]}
	util.writeJson(payload, outdir + 'profile_report.json')
	if config['output']['plots']:
		report.plotsForOutputDirectory(outdir)
	logObject.info('Residual slope %.4f +/- %.1e over b in [%.3e, %.3e].' % (slope['slope'], slope['stderr'],
																		   min(b_values), max(b_values)))
	for check in checks:
		if not check[4]:
			raise InvariantFailure('Profile invariant failed: %s = %.10e (expected %.10e, tolerance %.1e).'
								   % (check[0], check[1], check[2], check[3]))
	sys.stdout.write('All profile invariants passed; c2(1,1) = %.10f.\n' % exp.c2[(1, 1)])


def cmd_ode(config, params, args, outdir, logObject, exp=None):
	"""
	Description:
	Integrates the exact modulation system, reconstructs the physical time and writes trajectory.csv. With --fit the
	power laws are fitted (invariant: within 2% of theory); with --perturbed the forced experiment is run.
	********************************************************************************************************************
	"""
	ode = config['ode']
	P1, P2 = profileTables(params, config, exp, logObject)
	sys.stdout.write('--------------------\nStep 1\n--------------------\nIntegrating the modulation equations\n')
	traj = modode.integrate_exact(params, P1, P2, s0=ode['s0'], g0=ode['g0'], gamma0=ode['gamma0'], s_end=ode['s_end'],
								  n_out=ode['n_out'], rtol=ode['rtol'], logObject=logObject)
	traj = modode.to_physical_time(traj, rtol=ode['rtol'])
	modode.writeTrajectoryCsv(traj, outdir + 'trajectory.csv')
	g_inf, spread = modode.extract_g_infinity(traj)
	payload = {'params': params.to_dict(), 'g_inf': g_inf, 'g_inf_spread': spread,
			   'bootstrap_exit_s': traj.bootstrap_exit_s}
	failures = []
	if args.fit:
		fits = modode.fit_power_laws(traj, params)
		for name in ('lambda', 'r', 'gamma'):
			fits[name]['relative_delta'] = abs(fits[name]['exponent'] - fits[name]['expected']) / abs(fits[name]['expected'])
			if fits[name]['relative_delta'] > 0.02:
				failures.append('%s exponent %.6f vs %.6f' % (name, fits[name]['exponent'], fits[name]['expected']))
		payload['fits'] = fits
		util.writeJson(fits, outdir + 'fits.json')
	if args.perturbed:
		sys.stdout.write('--------------------\nStep 2\n--------------------\nRunning the perturbed experiment\n')
		result = modode.integrate_perturbed(params, P1, P2, forcing_scale=ode['forcing_scale'], tbar=ode['tbar'],
											t_under=ode['t_under'], seed=ode['seed'], rtol=ode['rtol'],
											logObject=logObject)
		result.to_frame().to_csv(outdir + 'perturbed.csv', index=False, float_format='%.17g')
		payload['perturbed'] = {'fits': result.fits, 'signs': [float(x) for x in result.signs], 'seed': result.seed,
								'bootstrap_exit_t': result.bootstrap_exit_t}
	util.writeJson(payload, outdir + 'ode_report.json')
	if config['output']['plots']:
		report.plotsForOutputDirectory(outdir)
	if failures:
		raise InvariantFailure('Power-law fits off by more than 2%%: %s.' % '; '.join(failures))


def writeSnapshots(result, params, outdir):
	""" Snapshots as one compressed numpy archive plus sim_meta.json describing the grid and the start state. """
	grid = result.grid
	np.savez_compressed(outdir + 'snapshots.npz', r=grid.nodes, t=np.array([w.t for w in result.snapshots]),
						u=np.array([w.u for w in result.snapshots]))
	m = result.start
	meta = {'params': params.to_dict(), 'grid': {'r_max': grid.r_max, 'n_r': grid.n_r, 'N': grid.N},
			'length_unit': result.length_unit, 'T_est': result.T_est, 'stop_reason': result.stop_reason,
			'steps': result.steps,
			'start': {'lam': m.lam, 'r': m.r, 'gamma': m.gamma, 'btilde': m.btilde, 'b': m.b, 's': m.s, 't': m.t}}
	util.writeJson(meta, outdir + 'sim_meta.json')


def cmd_sim(config, params, args, outdir, logObject):
	"""
	Description:
	Runs the well-prepared ring to blow-up; writes diagnostics.csv, sim_report.json, the snapshots and the expansion
	used, optionally chaining the decomposition.
	********************************************************************************************************************
	"""
	sys.stdout.write('--------------------\nStep 1\n--------------------\nBuilding the profile expansion\n')
	exp = buildProfile(params, config, logObject)
	profile.save_expansion(exp, outdir + 'expansion/')
	sys.stdout.write('--------------------\nStep 2\n--------------------\nSimulating the collapsing ring\n')
	result = nlsim.run_to_blowup(config, exp=exp, logObject=logObject)
	nlsim.writeDiagnosticsCsv(result.series, outdir + 'diagnostics.csv')
	writeSnapshots(result, params, outdir)
	ratio, spread = nlsim.check_virial_bound(result.series, result.T_est, params)
	payload = {'T_est': result.T_est, 'stop_reason': result.stop_reason, 'steps': result.steps, 'fits': result.fits,
			   'drifts': result.drifts, 'virial_ratio_spread': spread, 'length_unit': result.length_unit,
			   'final_amplification': float(result.series['grad_norm'].iloc[-1] / result.series['grad_norm'].iloc[0])}
	util.writeJson(payload, outdir + 'sim_report.json')
	if config['output']['plots']:
		report.plotsForOutputDirectory(outdir, T_est=result.T_est)
	sys.stdout.write('Run stopped (%s); T_est = %.10e.\n' % (result.stop_reason, result.T_est))
	if args.decomp:
		args.input = outdir
		args.series = True
		cmd_decomp(config, params, args, outdir, logObject, exp=exp)
	return result


def decomposeSnapshot(grid_spec, u, t, p, guess, exp, delta, max_iter, fd_step):
	""" Worker: decomposes one snapshot from its raw samples. """
	grid = nlsim.make_radial_grid(*grid_spec)
	wave = nlsim.WaveField(grid, u, t, p)
	if guess is None:
		guess = decomp.guess_from_field(wave, exp.params)
	return decomp.decompose(wave, guess, exp, delta=delta, max_iter=max_iter, fd_step=fd_step)


def loadRun(indir):
	indir = os.path.abspath(indir) + '/'
	for name in ('sim_meta.json', 'snapshots.npz'):
		if not os.path.isfile(indir + name):
			raise UsageError('%s is missing from the run directory %s.' % (name, indir))
	with open(indir + 'sim_meta.json') as omf:
		meta = json.load(omf)
	archive = np.load(indir + 'snapshots.npz')
	return meta, archive['r'], archive['t'], archive['u']


def functionalReport(wave, result, exp):
	""" Energy/Morawetz functional of the error of one decomposed snapshot with its coercivity ratio. """
	params = exp.params
	m = result.mod
	grid = wave.grid
	y = (grid.nodes - m.r) / m.lam
	bubble = m.lam ** (-params.lam_power) * profile.profile_at(exp, m.b, m.btilde, y) * np.exp(1j * m.gamma)
	u_tilde = nlsim.WaveField(grid, wave.u - bubble, wave.t, params.p)
	value, terms = decomp.energy_morawetz_I(u_tilde, m, exp)
	payload = {'t': wave.t, 'I': value, 'terms': terms, 'eps_h1mu': result.eps_h1mu,
			   'renormalization_factor': decomp.renormalization_factor(m, params)}
	if result.eps_h1mu > 0.0:
		payload['coercivity_ratio'] = decomp.coercivity_ratio(result.eps, m, exp)
	payload['sup_norm_control'] = decomp.sup_norm_control(result.eps, m.b, params.beta_inf + m.btilde, exp.grid,
															params)
	return payload


def cmd_decomp(config, params, args, outdir, logObject, exp=None):
	"""
	Description:
	Decomposes the snapshots of a sim run (sequentially from the saved start state, or in a worker pool from ring
	estimates when --cpus > 1), writes decomposition_series.csv, Mod(t) with --series, and the functional report of
	the last snapshot.
	********************************************************************************************************************
	Returns:
	- (list of DecompResult, Mod(t) DataFrame or None)
	********************************************************************************************************************
	"""
	if args.input is None:
		raise UsageError('decomp needs the directory of a sim run (--input).')
	indir = os.path.abspath(args.input) + '/'
	meta, r, times, snapshots = loadRun(indir)
	if exp is None:
		exp = profile.load_expansion(indir + 'expansion/')
	if exp.params != params:
		logObject.warning('Run parameters %s differ from the requested ones; using the run parameters.' % str(exp.params))
		params = exp.params
	dc = config['decomp']
	grid_spec = (meta['grid']['r_max'], meta['grid']['n_r'], meta['grid']['N'])
	start = meta['start']
	first_guess = modode.ModState(start['lam'], start['r'], start['gamma'], start['btilde'], start['b'], float('nan'),
								  float(times[0]))
	sys.stdout.write('--------------------\nStep 1\n--------------------\nDecomposing %d snapshots\n' % len(times))
	results = []
	if args.cpus > 1:
		inputs = []
		for i in range(len(times)):
			guess = first_guess if i == 0 else None
			inputs.append([decomposeSnapshot, grid_spec, snapshots[i], float(times[i]), params.p, guess, exp,
						   dc['delta'], dc['max_iter'], dc['fd_step'], None])
		pool = multiprocessing.Pool(args.cpus)
		results = pool.map(util.multiProcess, inputs)
		pool.close()
		for result in results:
			if isinstance(result, dict) and 'error' in result:
				raise NumericalFailure('Snapshot decomposition failed: %s' % result['error'])
	else:
		guess = first_guess
		for i in range(len(times)):
			result = decomposeSnapshot(grid_spec, snapshots[i], float(times[i]), params.p, guess, exp, dc['delta'],
									   dc['max_iter'], dc['fd_step'])
			logObject.info('Snapshot %d at t=%.10e decomposed in %d iterations.' % (i, times[i], result.newton_iters))
			results.append(result)
			guess = result.mod

	mod_frame = None
	if args.series:
		mod_frame = decomp.mod_residuals(results, exp)
		mod_frame.to_csv(outdir + 'mod_residuals.csv', index=False, float_format='%.17g')
	decomp.series_frame(results, mod_frame).to_csv(outdir + 'decomposition_series.csv', index=False, float_format='%.17g')

	grid = nlsim.make_radial_grid(*grid_spec)
	last_wave = nlsim.WaveField(grid, snapshots[-1], float(times[-1]), params.p)
	payload = functionalReport(last_wave, results[-1], exp)
	payload['delta'] = dc['delta']
	if mod_frame is not None:
		bound = mod_frame['bound'].to_numpy()
		payload['mod_constant'] = float(np.max(mod_frame['mod_total'].to_numpy() / bound))
	util.writeJson(payload, outdir + 'functional_report.json')
	if config['output']['plots']:
		report.plotsForOutputDirectory(outdir)
	return results, mod_frame


# verification suites


def suiteIdentities(params, gs):
	rows = []
	rep = groundstate.check_identities(gs)
	rows.append(_row('identities', params, 'pohozaev_defect', rep.pohozaev_defect, 0.0, 1e-7, rep.pohozaev_defect <= 1e-7))
	rows.append(_row('identities', params, 'lamQ_defect', rep.lamQ_defect, 0.0, 1e-7, rep.lamQ_defect <= 1e-7))
	if params.p == 3.0:
		for name, measured, expected in (('intQ2', rep.intQ2, 4.0), ('intQp2', rep.intQp2, 4.0 / 3.0),
										 ('QLamQ', rep.QLamQ, 2.0)):
			rows.append(_row('identities', params, name, measured, expected, 1e-7, _relative_ok(measured, expected, 1e-7)))
	return rows


def suiteKernel(params, pair):
	return [_row('kernel', params, name, value, 0.0, 1e-6, value <= 1e-6)
			for name, value in linops.kernel_identity_defects(pair).items()]


def suiteConstants(params, exp):
	return [_row('constants', params, c[0], float(c[1]), float(c[2]), float(c[3]), c[4])
			for c in profile.check_profile_invariants(exp)]


def suiteResidualOrder(params, config, exp, logObject=None):
	rows = []
	b_values = list(np.logspace(-3.0, -1.5, 7))
	for k in (5, 6):
		if k == exp.k:
			exp_k = exp
		else:
			exp_k = buildProfile(groundstate.make_params(params.N, params.p, k), config, logObject)
		slope = profile.residual_slope(exp_k, b_values, cutoff=False)['slope']
		rows.append(_row('residual_order', params, 'slope k=%d' % k, slope, k - 0.3, 0.3, slope >= k - 0.3))
	return rows


def suiteDecay(params, config, exp, logObject=None):
	rows = []
	coarse = profile.decay_constants(exp)
	fine_exp = buildProfile(params, config, logObject, h=0.5 * config['grid']['h'])
	fine = profile.decay_constants(fine_exp)
	for key in sorted(coarse.keys()):
		ok = math.isfinite(coarse[key]) and _relative_ok(fine[key], coarse[key], 0.05)
		rows.append(_row('decay', params, 'decay constant (%d,%d)' % key, fine[key], coarse[key], 0.05, ok))
	return rows


def suiteOde(params, config, exp):
	ode = config['ode']
	traj = modode.to_physical_time(modode.integrate_exact(params, exp.P1, exp.P2, s0=ode['s0'], g0=ode['g0'],
														  gamma0=ode['gamma0'], s_end=ode['s_end'],
														  n_out=ode['n_out'], rtol=ode['rtol']))
	fits = modode.fit_power_laws(traj, params)
	rows = []
	for name in ('lambda', 'r', 'gamma'):
		measured = fits[name]['exponent']
		expected = fits[name]['expected']
		rows.append(_row('ode', params, '%s exponent' % name, measured, expected, 0.02,
						 _relative_ok(measured, expected, 0.02)))
	constant = fits['b_law']['log_rate_constant']
	rows.append(_row('ode', params, 'b(1-alpha)s - 1 log rate constant', constant, np.nan, np.nan, math.isfinite(constant)))
	return rows


def suitePerturbed(params):
	params6 = groundstate.make_params(params.N, params.p, 6)
	result = modode.integrate_perturbed(params6)
	expected = result.fits['expected']['differences']
	fit = result.fits['worst_differences']
	measured = fit['exponent'] if fit is not None else float('nan')
	return [_row('perturbed', params, 'difference decay exponent (k=6)', measured, expected, 0.1,
				 _relative_ok(measured, expected, 0.1))]


def suiteJacobian(params, exp):
	intQ2 = numerics.inner(exp.gs.Q.values, exp.gs.Q.values, exp.grid)
	expected = decomp.expected_determinant(params, intQ2)
	measured = decomp.jacobian_determinant(params, 1e-4, 0.0, exp)
	return [_row('jacobian', params, 'determinant at b0=1e-4', measured, expected, 1e-3,
				 _relative_ok(measured, expected, 1e-3))]


def roundTripState(params, lam=0.1, r=1.0, gamma=0.3, btilde=0.0):
	return modode.ModState(lam, r, gamma, btilde, decomp.frozen_b(params, lam, r, btilde), float('nan'), 0.0)


def suiteDecomposition(params, exp, lam=0.05, r=1.0, support_tol=1e-12):
	"""
	Description:
	Decomposes the exact ring ansatz and its small perturbations along the scaling direction. The radial grid ends one
	unit of y past the last profile node where |Q_b| exceeds support_tol sup|Q_b| (at most at the end of the profile
	grid) and resolves the profile at half its own spacing.
	********************************************************************************************************************
	Returns:
	- List of verification rows.
	********************************************************************************************************************
	"""
	rows = []
	m = roundTripState(params, lam=lam, r=r)
	y = exp.grid.nodes
	magnitude = np.abs(profile.profile_at(exp, m.b, m.btilde, y))
	support = np.nonzero(magnitude > support_tol * magnitude.max())[0]
	y_edge = min(y[support[-1]] + 1.0, exp.grid.y_max)
	r_max = m.r + m.lam * y_edge
	n_r = int(round(r_max / (0.5 * m.lam * exp.grid.h))) + 1
	grid = nlsim.make_radial_grid(r_max, n_r, params.N)
	wave = nlsim.build_initial_data(exp, m, grid)
	guess = modode.ModState(m.lam * 1.01, m.r + 0.01 * m.lam, m.gamma + 0.01, 0.0, m.b, float('nan'), 0.0)
	result = decomp.decompose(wave, guess, exp)
	truth = np.array([m.lam, m.r, m.gamma, m.btilde])
	found = np.array([result.mod.lam, result.mod.r, result.mod.gamma, result.mod.btilde])
	error = float(np.max(np.abs(found - truth)))
	rows.append(_row('decomposition', params, 'exact ansatz parameter error', error, 0.0, 1e-8, error <= 1e-8))
	rows.append(_row('decomposition', params, 'exact ansatz eps_h1mu', result.eps_h1mu, 0.0, 1e-8,
					 result.eps_h1mu <= 1e-8))

	y = (grid.nodes - m.r) / m.lam
	Q, Qp, _ = groundstate.groundstate_values(params.p, y)
	direction = m.lam ** (-params.lam_power) * (y * Q + 0.5j * Qp) * np.exp(1j * m.gamma)
	responses = []
	for amplitude in (1e-4, 1e-3, 1e-2):
		perturbed = nlsim.WaveField(grid, wave.u + amplitude * direction, 0.0, params.p)
		res = decomp.decompose(perturbed, m, exp)
		shift = np.array([res.mod.lam / m.lam, res.mod.r / m.lam, res.mod.gamma, res.mod.btilde]) - \
			np.array([1.0, m.r / m.lam, m.gamma, m.btilde])
		responses.append(np.linalg.norm(shift) / amplitude)
	for amplitude, response in zip((1e-3, 1e-2), responses[1:]):
		rows.append(_row('decomposition', params, 'linear response at amplitude %.0e' % amplitude, response,
						 responses[0], 0.05, _relative_ok(response, responses[0], 0.05)))
	return rows


def suiteCoercivity(params, config, exp, logObject=None):
	rows = []
	gs = exp.gs
	c0 = linops.coercivity_min_eig(gs, logObject=logObject)
	grid_conf = config['grid']
	coarse_grid = numerics.Grid1D.from_spacing(grid_conf['y_min'], grid_conf['y_max'], 2.0 * grid_conf['h'])
	c0_coarse = linops.coercivity_min_eig(groundstate.eval_groundstate(params, coarse_grid))
	rows.append(_row('coercivity', params, 'constrained min Rayleigh quotient', c0, 0.0, np.nan, c0 > 0.0))
	rows.append(_row('coercivity', params, 'grid stability', c0, c0_coarse, 0.02, _relative_ok(c0, c0_coarse, 0.02)))
	m = roundTripState(params, lam=0.01, gamma=0.0)
	ratios, minimum = decomp.coercivity_suite(m, exp, n_fields=config['decomp']['n_random'], seed=config['seed'])
	rows.append(_row('coercivity', params, 'coercivity minimum over random fields', minimum, 0.0, np.nan,
					 minimum > 0.0))
	return rows


def verifyPoint(N, p, config, with_optional):
	"""
	Description:
	Runs the acceptance suites at one admissible (N,p); the residual order and perturbed suites only when
	with_optional is set.
	********************************************************************************************************************
	Returns:
	- List of verification rows.
	********************************************************************************************************************
	"""
	config = util.mergeConfig(config, {'problem': {'N': N, 'p': p, 'k': None}})
	params = groundstate.make_params(N, p)
	exp = buildProfile(params, config)
	pair = linops.build_linearized_pair(exp.gs)
	rows = suiteIdentities(params, exp.gs)
	rows += suiteKernel(params, pair)
	rows += suiteConstants(params, exp)
	if with_optional:
		rows += suiteResidualOrder(params, config, exp)
	rows += suiteDecay(params, config, exp)
	rows += suiteOde(params, config, exp)
	if with_optional:
		rows += suitePerturbed(params)
	rows += suiteJacobian(params, exp)
	rows += suiteDecomposition(params, exp)
	rows += suiteCoercivity(params, config, exp)
	return rows


def suiteSimulation(config, args, outdir, logObject):
	""" Ring simulation and Mod(t) bound at (N,p) = (3,3). """
	config = util.mergeConfig(config, {'problem': {'N': 3, 'p': 3.0, 'k': None}})
	params = groundstate.make_params(3, 3.0)
	util.setupReadyDirectory([outdir])
	sim_args = argparse.Namespace(decomp=False, input=None, series=True, cpus=args.cpus)
	result = cmd_sim(config, params, sim_args, outdir, logObject)
	rows = [_row('simulation', params, 'mass drift', result.drifts['mass'], 0.0, 1e-5, result.drifts['mass'] <= 1e-5)]
	for column, label in (('grad_norm', 'gradient rate exponent'), ('r_est', 'ring radius exponent')):
		fit = result.fits[column]
		rows.append(_row('simulation', params, label, fit['exponent'], fit['expected'], 0.15,
						 _relative_ok(fit['exponent'], fit['expected'], 0.15)))
	_, spread = nlsim.check_virial_bound(result.series, result.T_est, params)
	rows.append(_row('simulation', params, 'virial ratio spread', spread, 3.0, np.nan, math.isfinite(spread) and spread <= 3.0))
	sim_args.input = outdir
	_, mod_frame = cmd_decomp(config, params, sim_args, outdir, logObject)
	constant = float(np.max(mod_frame['mod_total'].to_numpy() / mod_frame['bound'].to_numpy()))
	rows.append(_row('mod_bound', params, 'Mod / (b eps + b^k)', constant, 10.0, np.nan, constant <= 10.0))
	return rows


def cmd_verify_all(config, args, outdir, logObject):
	"""
	Description:
	Runs the suites over the admissible matrix in a worker pool, writes Verification_Report.xlsx, verification.csv
	and verification_summary.json. Raises InvariantFailure if any check failed.
	********************************************************************************************************************
	"""
	sys.stdout.write('--------------------\nStep 1\n--------------------\nRunning the acceptance suites\n')
	log_dir = outdir + 'Point_Logs/'
	util.setupReadyDirectory([log_dir])
	inputs = []
	for N, p in util.ADMISSIBLE_MATRIX:
		inputs.append([verifyPoint, N, p, config, (N, p) == (3, 3.0), log_dir + 'N%d_p%s.log' % (N, p)])
	if args.cpus > 1:
		pool = multiprocessing.Pool(args.cpus)
		outputs = pool.map(util.multiProcess, inputs)
		pool.close()
	else:
		outputs = [util.multiProcess(item) for item in inputs]
	rows = []
	errors = []
	for (N, p), output in zip(util.ADMISSIBLE_MATRIX, outputs):
		if isinstance(output, dict) and 'error' in output:
			errors.append((N, p, output))
			rows.append({'suite': 'error', 'N': N, 'p': p, 'check': output['error'], 'measured': np.nan,
						 'expected': np.nan, 'tolerance': np.nan, 'passed': False})
		else:
			rows += output
	if args.with_sim:
		sys.stdout.write('--------------------\nStep 2\n--------------------\nRunning the ring simulation suites\n')
		rows += suiteSimulation(config, args, outdir + 'Simulation/', logObject)

	results_df = report.verificationFrame(rows)
	results_df.to_csv(outdir + 'verification.csv', index=False, float_format='%.17g')
	report.writeVerificationReport(results_df, outdir + 'Verification_Report.xlsx')
	failed = results_df[~results_df['passed'].astype(bool)]
	summary = {'checks': int(results_df.shape[0]), 'failed': int(failed.shape[0]),
			   'failed_checks': ['%s N=%s p=%s: %s' % (r.suite, r.N, r.p, r.check) for r in failed.itertuples()]}
	util.writeJson(summary, outdir + 'verification_summary.json')
	if errors:
		N, p, output = errors[0]
		message = "Verification at (N,p)=(%s,%s) failed with an error: %s" % (N, p, output["error"])
		if output["exit_code"] == util.EXIT_USAGE:
			raise UsageError(message)
		raise NumericalFailure(message)
	if failed.shape[0] > 0:
		raise InvariantFailure('%d verification checks failed; first: %s' % (failed.shape[0], summary['failed_checks'][0]))
	sys.stdout.write('All %d verification checks passed.\n' % results_df.shape[0])


def run(args):
	"""
	Description:
	Resolves the configuration and output directory of one subcommand, sets up logging and dispatches. Errors are
	logged with their traceback and mapped to exit codes.
	********************************************************************************************************************
	Returns:
	- The exit code.
	********************************************************************************************************************
	"""
	if args.version:
		sys.stdout.write('ringnls version %s\n' % util.getVersion())
		return util.EXIT_PASS
	if args.subcommand not in SUBCOMMANDS:
		sys.stderr.write('Please provide one of the subcommands: %s\n' % ', '.join(SUBCOMMANDS))
		return util.EXIT_USAGE
	try:
		config, params = resolveConfig(args)
		outdir = util.resolveOutputDirectory(args.outdir, args.subcommand, config)
		if args.cpus < 1:
			raise UsageError('--cpus must be at least 1.')
	except Exception as e:
		sys.stderr.write('Error: %s\n' % str(e))
		return getattr(e, 'exit_code', util.EXIT_NUMERICAL)

	util.setupReadyDirectory([outdir], overwrite=False)
	log_file = outdir + 'Progress.log'
	logObject = util.createLoggerObject(log_file)
	version = util.getVersion()
	sys.stdout.write('Running version: %s\n' % version)
	sys.stdout.write('Logging more details at: %s\n' % log_file)
	logObject.info("\nNEW RUN!!!\n**************************************")
	logObject.info('Running version %s' % version)

	parameters_file = outdir + 'Command_Issued.txt'
	parameters_handle = open(parameters_file, 'a+')
	parameters_handle.write(' '.join(sys.argv) + '\n')
	parameters_handle.close()
	names, values = flattenConfig(config)
	util.logParametersToFile(outdir + 'Parameter_Inputs.txt', names, values)
	util.writeFrozenConfig(config, outdir)
	logObject.info('Problem parameters: %s' % str(params.to_dict()))

	code = util.EXIT_PASS
	try:
		if args.subcommand == 'profile':
			cmd_profile(config, params, args, outdir, logObject)
		elif args.subcommand == 'ode':
			cmd_ode(config, params, args, outdir, logObject)
		elif args.subcommand == 'sim':
			cmd_sim(config, params, args, outdir, logObject)
		elif args.subcommand == 'decomp':
			cmd_decomp(config, params, args, outdir, logObject)
		elif args.subcommand == 'verify-all':
			cmd_verify_all(config, args, outdir, logObject)
		logObject.info('Finished %s successfully.' % args.subcommand)
	except Exception as e:
		code = getattr(e, 'exit_code', util.EXIT_NUMERICAL)
		logObject.error('Issue running %s: %s' % (args.subcommand, str(e)))
		logObject.error(traceback.format_exc())
		sys.stderr.write('Issue running %s: %s\n' % (args.subcommand, str(e)))
	finally:
		util.closeLoggerObject(logObject)
	return code


def main(argv=None):
	args = create_parser(argv)
	sys.exit(run(args))
