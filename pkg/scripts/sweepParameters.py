#!/usr/bin/env python3

### Program: sweepParameters.py
### Fans one ringnls subcommand out over a set of (N,p) points with a worker pool.

import os
import sys
import argparse
import multiprocessing
from ringnls import util, cli


def create_parser():
	""" Parse arguments """
	parser = argparse.ArgumentParser(description="""
	Program: sweepParameters.py

	Runs one ringnls subcommand (profile, ode or sim) independently at each (N,p) point, each in its own output
	directory <output_dir>/<subcommand>_N<N>_p<p>/, using a pool of worker processes. Extra arguments after "--" are
	passed through to the subcommand. Writes Sweep_Summary.txt with the exit code of every point.
	""", formatter_class=argparse.RawTextHelpFormatter)

	parser.add_argument('-s', '--subcommand', help='Subcommand to run at each point.', required=True)
	parser.add_argument('-o', '--output_dir', help='Root output directory.', required=True)
	parser.add_argument('-p', '--points', nargs='+', default=None, required=False,
						help='Points as N:p, e.g. 3:3 2:4. [Default is the admissible matrix].')
	parser.add_argument('-c', '--cpus', type=int, help='Number of worker processes. [Default is 1].', required=False, default=1)
	parser.add_argument('extra', nargs=argparse.REMAINDER, help='Arguments passed through to the subcommand.')
	args = parser.parse_args()

	return args


def runPoint(argv):
	""" Runs one subcommand invocation and returns its exit code. """
	return cli.run(cli.create_parser(argv))


def sweepParameters():
	myargs = create_parser()

	if myargs.subcommand not in ('profile', 'ode', 'sim'):
		sys.stderr.write('Error, the subcommand must be one of profile, ode or sim.\n')
		sys.exit(2)
	outdir = os.path.abspath(myargs.output_dir) + '/'
	util.setupReadyDirectory([outdir], overwrite=False)

	points = util.ADMISSIBLE_MATRIX
	if myargs.points is not None:
		try:
			points = [(int(x.split(':')[0]), float(x.split(':')[1])) for x in myargs.points]
		except Exception:
			sys.stderr.write('Error, points must be given as N:p.\n')
			sys.exit(2)
	extra = [x for x in myargs.extra if x != '--']

	log_file = outdir + 'Progress.log'
	logObject = util.createLoggerObject(log_file)
	logObject.info('Sweeping %s over %s' % (myargs.subcommand, str(points)))

	inputs = []
	for N, p in points:
		point_dir = outdir + '%s_N%d_p%s/' % (myargs.subcommand, N, p)
		argv = [myargs.subcommand, '--N', str(N), '--p', str(p), '--outdir', point_dir] + extra
		inputs.append([runPoint, argv, None])

	pool = multiprocessing.Pool(myargs.cpus)
	codes = pool.map(util.multiProcess, inputs)
	pool.close()

	summary_handle = open(outdir + 'Sweep_Summary.txt', 'w')
	for (N, p), code in zip(points, codes):
		if isinstance(code, dict):
			code = code['exit_code']
		summary_handle.write('%d\t%s\t%s\n' % (N, p, code))
		logObject.info('Point (%d, %s) finished with exit code %s.' % (N, p, code))
	summary_handle.close()
	util.closeLoggerObject(logObject)
	worst = max([c['exit_code'] if isinstance(c, dict) else c for c in codes] + [0])
	sys.exit(worst)


if __name__ == '__main__':
	sweepParameters()
