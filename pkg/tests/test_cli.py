import os
import json
import numpy as np
import pandas as pd
import pytest

from ringnls import cli, util


def test_parser_reads_common_options():
	args = cli.create_parser(['ode', '--fit', '--N', '2', '--p', '4', '--set', 'ode.s0=200', '--set', 'seed=3'])
	assert args.subcommand == 'ode'
	assert args.fit and not args.perturbed
	assert args.N == 2 and args.p == 4.0
	assert args.overrides == ['ode.s0=200', 'seed=3']
	assert args.cpus == 1


def test_flatten_config():
	names, values = cli.flattenConfig({'b': {'y': 2, 'x': 1}, 'a': 0})
	assert names == ['a', 'b.x', 'b.y']
	assert values == [0, 1, 2]


def test_resolve_config_applies_flags():
	args = cli.create_parser(['sim', '--N', '2', '--p', '4', '--until-amplification', '12', '--snapshots', '7'])
	config, params = cli.resolveConfig(args)
	assert params.N == 2 and params.p == 4.0
	assert config['problem']['k'] == params.k == 5
	assert config['sim']['amplification'] == 12.0
	assert config['sim']['snapshots'] == 7


def test_profile_tables_choice(params33, config):
	leading = util.applyOverrides(config, ['ode.tables=leading'])
	assert cli.profileTables(params33, leading, None) == ({}, {(1, 1): -2.0})
	bad = util.applyOverrides(config, ['ode.tables=other'])
	with pytest.raises(util.UsageError):
		cli.profileTables(params33, bad, None)


def test_version_and_missing_subcommand(capsys):
	assert cli.run(cli.create_parser(['-v'])) == util.EXIT_PASS
	assert 'ringnls version' in capsys.readouterr().out
	assert cli.run(cli.create_parser([])) == util.EXIT_USAGE


@pytest.mark.parametrize('argv', [
	['ode', '--p', '5'],
	['ode', '--N', '2', '--p', '3'],
	['ode', '--set', 'ode.unknown=1'],
	['ode', '--set', 'ode.s0'],
	['ode', '--cpus', '0'],
])
def test_usage_errors_before_any_output(argv, tmp_path):
	outdir = str(tmp_path / 'run')
	assert cli.run(cli.create_parser(argv + ['-o', outdir])) == util.EXIT_USAGE
	assert not os.path.isdir(outdir)


def test_ode_with_leading_tables(tmp_path):
	outdir = str(tmp_path / 'ode')
	argv = ['ode', '--fit', '--set', 'ode.tables=leading', '--set', 'ode.s_end=1e6', '--set', 'output.plots=false',
			'-o', outdir]
	assert cli.run(cli.create_parser(argv)) == util.EXIT_PASS
	for name in ('trajectory.csv', 'fits.json', 'ode_report.json', 'Progress.log', 'config_frozen.yaml',
				 'Parameter_Inputs.txt', 'Command_Issued.txt'):
		assert os.path.isfile(outdir + '/' + name), name
	with open(outdir + '/fits.json') as ojf:
		fits = json.load(ojf)
	assert fits['lambda']['relative_delta'] <= 0.02
	with open(outdir + '/ode_report.json') as ojf:
		assert json.load(ojf)['g_inf'] == pytest.approx(0.75, rel=1e-8)


def test_profile_verify_only_needs_saved_expansion(tmp_path):
	argv = ['profile', '--verify-only', '-i', str(tmp_path / 'missing'), '-o', str(tmp_path / 'profile')]
	assert cli.run(cli.create_parser(argv)) == util.EXIT_USAGE
	with open(str(tmp_path / 'profile' / 'Progress.log')) as olf:
		assert 'Issue running profile' in olf.read()


def test_decomp_needs_input(tmp_path):
	assert cli.run(cli.create_parser(['decomp', '-o', str(tmp_path / 'decomp')])) == util.EXIT_USAGE


@pytest.mark.slow
def test_profile_subcommand(tmp_path):
	outdir = str(tmp_path / 'profile')
	assert cli.run(cli.create_parser(['profile', '--set', 'output.plots=false', '-o', outdir])) == util.EXIT_PASS
	assert os.path.isfile(outdir + '/constants.csv')
	assert os.path.isfile(outdir + '/expansion/meta.json')
	verify = ['profile', '--verify-only', '-i', outdir + '/expansion', '-o', str(tmp_path / 'again')]
	assert cli.run(cli.create_parser(verify)) == util.EXIT_PASS


def test_decomposition_suite_fits_the_ring_on_the_grid(params33, exp33):
	rows = cli.suiteDecomposition(params33, exp33)
	checks = [row['check'] for row in rows]
	assert checks == ['exact ansatz parameter error', 'exact ansatz eps_h1mu', 'linear response at amplitude 1e-03',
					  'linear response at amplitude 1e-02']
	assert rows[0]['measured'] < 1e-5
	assert rows[1]['measured'] < 1e-5
	assert all(np.isfinite(row['measured']) and np.isfinite(row['expected']) for row in rows[2:])


@pytest.mark.slow
def test_residual_order_suite(params33, config, exp33):
	rows = cli.suiteResidualOrder(params33, config, exp33)
	assert [row['check'] for row in rows] == ['slope k=5', 'slope k=6']
	assert all(row['passed'] for row in rows), rows


@pytest.mark.slow
def test_verify_point_cubic_three_dimensions(config):
	rows = cli.verifyPoint(3, 3.0, config, True)
	by_check = {(row['suite'], row['check']): row for row in rows}
	assert by_check[('residual_order', 'slope k=6')]['passed']
	assert by_check[('decomposition', 'exact ansatz parameter error')]['passed']
	assert by_check[('decomposition', 'exact ansatz eps_h1mu')]['passed']


@pytest.mark.slow
def test_verify_all_subcommand(tmp_path):
	outdir = str(tmp_path / 'verify')
	code = cli.run(cli.create_parser(['verify-all', '-o', outdir]))
	assert code in (util.EXIT_PASS, util.EXIT_INVARIANT)
	assert os.path.isfile(outdir + '/Verification_Report.xlsx')
	results = pd.read_csv(outdir + '/verification.csv')
	assert 'error' not in set(results['suite'])
	assert set(zip(results['N'], results['p'])) == set(util.ADMISSIBLE_MATRIX)
