import os
import math
import numpy as np
import pandas as pd
import scipy.stats
import matplotlib
matplotlib.use('Agg')
import matplotlib.pyplot as plt

from ringnls.util import UsageError

VERIFICATION_COLUMNS = ['suite', 'N', 'p', 'check', 'measured', 'expected', 'tolerance', 'relative_defect', 'passed']


def relativeDefect(measured, expected):
	try:
		measured = float(measured)
		expected = float(expected)
	except (TypeError, ValueError):
		return float('nan')
	if not (math.isfinite(measured) and math.isfinite(expected)):
		return float('nan')
	return abs(measured - expected) / max(abs(expected), 1e-300)


def verificationFrame(rows):
	"""
	Description:
	Builds the verification table from dictionaries with keys suite, N, p, check, measured, expected, tolerance and
	passed. The relative defect is derived from measured and expected.
	********************************************************************************************************************
	"""
	records = []
	for row in rows:
		record = dict(row)
		record['relative_defect'] = relativeDefect(row.get('measured'), row.get('expected'))
		records.append(record)
	return pd.DataFrame(records, columns=VERIFICATION_COLUMNS)


def writeVerificationReport(results_df, xlsx_file):
	"""
	Description:
	Writes the consolidated verification spreadsheet: one row per check, highlighted header, failed checks filled in
	red, and a colour scale on the relative defect column.
	********************************************************************************************************************
	Parameters:
	- results_df: pandas DataFrame with the VERIFICATION_COLUMNS.
	- xlsx_file: Path to the XLSX file to write.
	********************************************************************************************************************
	"""
	num_rows = results_df.shape[0] + 1
	writer = pd.ExcelWriter(xlsx_file, engine='xlsxwriter')
	workbook = writer.book
	dd_sheet = workbook.add_worksheet('Data Dictionary')
	dd_sheet.write(0, 0, 'One row per verification check. "measured" and "expected" are the compared quantities, '
						 '"tolerance" the allowed deviation and "passed" the verdict.')
	dd_sheet.write(1, 0, 'Suites: identities, kernel, constants, residual_order, decay, ode, perturbed, jacobian, '
						 'decomposition, coercivity, simulation, mod_bound.')

	warn_format = workbook.add_format({'bg_color': '#bf241f', 'bold': True, 'font_color': '#FFFFFF'})
	na_format = workbook.add_format({'font_color': '#a6a6a6', 'bg_color': '#FFFFFF', 'italic': True})
	header_format = workbook.add_format({'bold': True, 'text_wrap': True, 'valign': 'top', 'fg_color': '#D7E4BC', 'border': 1})

	results_df.to_excel(writer, sheet_name='Verification', index=False, na_rep="NA")
	worksheet = writer.sheets['Verification']
	worksheet.conditional_format('I2:I' + str(num_rows), {'type': 'cell', 'criteria': '==', 'value': 'FALSE', 'format': warn_format})
	worksheet.conditional_format('A2:I' + str(num_rows), {'type': 'cell', 'criteria': '==', 'value': '"NA"', 'format': na_format})
	worksheet.conditional_format('A1:I1', {'type': 'cell', 'criteria': '!=', 'value': 'NA', 'format': header_format})

	# relative defect
	worksheet.conditional_format('H2:H' + str(num_rows),
								 {'type': '2_color_scale', 'min_color': "#d8eaf0", 'max_color': "#eb8da9",
								  'min_type': 'num', 'max_type': 'num', "min_value": 0.0, "max_value": 0.1})
	writer.close()


def fitLogLogSlope(x, y):
	""" Least-squares slope of log y against log x over the positive samples; returns (slope, stderr, intercept). """
	x = np.asarray(x, dtype=float)
	y = np.asarray(y, dtype=float)
	keep = (x > 0.0) & (y > 0.0) & np.isfinite(x) & np.isfinite(y)
	if np.sum(keep) < 3:
		raise UsageError('A log-log fit needs at least three positive samples.')
	fit = scipy.stats.linregress(np.log(x[keep]), np.log(y[keep]))
	return float(fit.slope), float(fit.stderr), float(fit.intercept)


def plotLogLogFromCsv(csv_file, x_column, y_columns, svg_file, x_reference=None, title=None, fit=True):
	"""
	Description:
	Log-log line plot of one or more CSV columns. With x_reference the abscissa is x_reference - x (time to blow-up).
	Each curve is annotated with its fitted slope.
	********************************************************************************************************************
	Parameters:
	- csv_file: Path to the CSV table.
	- x_column: Column used for the abscissa.
	- y_columns: List of columns to draw.
	- svg_file: Path to the SVG plot to write.
	- x_reference: Optional reference value subtracted from.
	- title: Optional plot title.
	- fit: Whether to annotate the fitted slopes.
	********************************************************************************************************************
	Returns:
	- Dictionary of fitted slopes by column.
	********************************************************************************************************************
	"""
	df = pd.read_csv(csv_file)
	for column in [x_column] + list(y_columns):
		if column not in df.columns:
			raise UsageError('Column %s is missing from %s.' % (column, csv_file))
	x = df[x_column].to_numpy(dtype=float)
	xlabel = x_column
	if x_reference is not None:
		x = x_reference - x
		xlabel = '%.6g - %s' % (x_reference, x_column)
	slopes = {}
	fig, ax = plt.subplots(figsize=(7, 5))
	for column in y_columns:
		y = df[column].to_numpy(dtype=float)
		keep = (x > 0.0) & (np.abs(y) > 0.0) & np.isfinite(y)
		label = column
		if fit and np.sum(keep) >= 3:
			slope, stderr, _ = fitLogLogSlope(x[keep], np.abs(y[keep]))
			slopes[column] = slope
			label = '%s (slope %.4f +/- %.1e)' % (column, slope, stderr)
		ax.loglog(x[keep], np.abs(y[keep]), label=label)
	ax.set_xlabel(xlabel)
	if title is not None:
		ax.set_title(title)
	ax.legend(loc='best', fontsize=8)
	ax.grid(True, which='both', alpha=0.3)
	fig.tight_layout()
	fig.savefig(svg_file, format='svg')
	plt.close(fig)
	return slopes


def plotLinesFromCsv(csv_file, x_column, y_columns, svg_file, title=None, log_y=False):
	""" Plain line plot of CSV columns against x_column. """
	df = pd.read_csv(csv_file)
	fig, ax = plt.subplots(figsize=(7, 5))
	for column in y_columns:
		if column not in df.columns:
			raise UsageError('Column %s is missing from %s.' % (column, csv_file))
		ax.plot(df[x_column], df[column], label=column)
	if log_y:
		ax.set_yscale('log')
	ax.set_xlabel(x_column)
	if title is not None:
		ax.set_title(title)
	ax.legend(loc='best', fontsize=8)
	fig.tight_layout()
	fig.savefig(svg_file, format='svg')
	plt.close(fig)


def plotsForOutputDirectory(outdir, T_est=None):
	"""
	Description:
	Regenerates every standard plot whose source CSV exists in an output directory. Returns the list of SVG files.
	********************************************************************************************************************
	"""
	outdir = os.path.abspath(outdir) + '/'
	written = []
	residual_csv = outdir + 'residual_slope.csv'
	if os.path.isfile(residual_csv):
		plotLogLogFromCsv(residual_csv, 'b', ['psi_h1mu'], outdir + 'residual_slope.svg', title='Profile residual')
		written.append(outdir + 'residual_slope.svg')
	trajectory_csv = outdir + 'trajectory.csv'
	if os.path.isfile(trajectory_csv):
		df = pd.read_csv(trajectory_csv)
		if np.all(np.isfinite(df['t'].to_numpy(dtype=float))):
			plotLogLogFromCsv(trajectory_csv, 't', ['lambda', 'r'], outdir + 'trajectory.svg', x_reference=0.0,
							  title='Modulation laws')
		else:
			plotLogLogFromCsv(trajectory_csv, 's', ['lambda', 'r', 'b'], outdir + 'trajectory.svg',
							  title='Modulation laws')
		written.append(outdir + 'trajectory.svg')
	perturbed_csv = outdir + 'perturbed.csv'
	if os.path.isfile(perturbed_csv):
		plotLogLogFromCsv(perturbed_csv, 't', ['worst_db', 'worst_dbtilde', 'worst_dg'], outdir + 'perturbed.svg',
						  x_reference=0.0, title='Perturbed differences')
		written.append(outdir + 'perturbed.svg')
	diagnostics_csv = outdir + 'diagnostics.csv'
	if os.path.isfile(diagnostics_csv) and T_est is not None:
		plotLogLogFromCsv(diagnostics_csv, 't', ['grad_norm', 'r_est', 'lambda_est'], outdir + 'blowup_rates.svg',
						  x_reference=T_est, title='Blow-up rates')
		plotLinesFromCsv(diagnostics_csv, 't', ['mass', 'energy'], outdir + 'conservation.svg', title='Conserved quantities')
		written += [outdir + 'blowup_rates.svg', outdir + 'conservation.svg']
	series_csv = outdir + 'decomposition_series.csv'
	if os.path.isfile(series_csv):
		plotLinesFromCsv(series_csv, 't', ['eps_h1mu', 'mod_total'], outdir + 'decomposition.svg',
						 title='Decomposition', log_y=True)
		written.append(outdir + 'decomposition.svg')
	return written
