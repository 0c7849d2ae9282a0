#!/usr/bin/env python3

### Program: plotDiagnostics.py
### Regenerates the SVG plots of a ringnls output directory from its CSV files alone.

import os
import sys
import json
import argparse
from ringnls import report


def create_parser():
	""" Parse arguments """
	parser = argparse.ArgumentParser(description="""
	Program: plotDiagnostics.py

	Regenerates every standard plot of a ringnls output directory (residual slope, modulation laws, perturbed
	differences, blow-up rates, conserved quantities, decomposition series) from the CSV files it contains. The
	blow-up time used as reference for the rate plots is read from sim_report.json unless given explicitly.

	A single CSV can also be plotted on log-log axes with --csv, --x and --y.
	""", formatter_class=argparse.RawTextHelpFormatter)

	parser.add_argument('-i', '--input_dir', help='Path to a ringnls output directory.', required=False, default=None)
	parser.add_argument('-t', '--t_est', type=float, help='Blow-up time used as reference for rate plots.', required=False, default=None)
	parser.add_argument('--csv', help='A single CSV file to plot.', required=False, default=None)
	parser.add_argument('--x', help='Abscissa column of --csv.', required=False, default=None)
	parser.add_argument('--y', nargs='+', help='Ordinate columns of --csv.', required=False, default=None)
	parser.add_argument('--reference', type=float, help='Plot against reference - x instead of x.', required=False, default=None)
	parser.add_argument('-o', '--output', help='SVG file written for --csv.', required=False, default=None)
	args = parser.parse_args()

	return args


def plotDiagnostics():
	myargs = create_parser()

	if myargs.csv is not None:
		if myargs.x is None or myargs.y is None or myargs.output is None:
			sys.stderr.write('Error, --csv needs --x, --y and --output.\n')
			sys.exit(2)
		slopes = report.plotLogLogFromCsv(myargs.csv, myargs.x, myargs.y, myargs.output, x_reference=myargs.reference)
		for column, slope in slopes.items():
			sys.stdout.write('%s\t%.6f\n' % (column, slope))
		sys.exit(0)

	if myargs.input_dir is None or not os.path.isdir(myargs.input_dir):
		sys.stderr.write('Error, please provide an existing output directory with --input_dir.\n')
		sys.exit(2)
	input_dir = os.path.abspath(myargs.input_dir) + '/'
	t_est = myargs.t_est
	if t_est is None and os.path.isfile(input_dir + 'sim_report.json'):
		with open(input_dir + 'sim_report.json') as osr:
			t_est = json.load(osr)['T_est']
	written = report.plotsForOutputDirectory(input_dir, T_est=t_est)
	for svg in written:
		sys.stdout.write('Wrote %s\n' % svg)
	if not written:
		sys.stderr.write('Warning, no known CSV files found in %s.\n' % input_dir)


if __name__ == '__main__':
	plotDiagnostics()
