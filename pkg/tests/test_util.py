import os
import yaml
import pytest

from ringnls import util
from ringnls.util import UsageError, InvariantFailure, NumericalFailure


def failingTask(x):
	raise InvariantFailure('bad value %s' % x)


def doublingTask(x):
	return 2 * x


def test_default_config_has_every_section():
	config = util.loadConfig()
	for section in ('problem', 'grid', 'profile', 'ode', 'sim', 'decomp', 'output'):
		assert section in config
	assert config['problem']['N'] == 3
	assert config['grid']['h'] == 0.02


def test_overrides_are_cast():
	config = util.loadConfig(overrides=['sim.cfl=0.01', 'problem.N=4', 'output.plots=false', 'ode.tbar=none'])
	assert config['sim']['cfl'] == 0.01
	assert config['problem']['N'] == 4 and isinstance(config['problem']['N'], int)
	assert config['output']['plots'] is False
	assert config['ode']['tbar'] is None


def test_override_list_value():
	assert util.castOverrideValue('[1e-3, 0.01]') == [1e-3, 0.01]
	assert util.castOverrideValue('leading') == 'leading'


def test_unknown_key_is_a_usage_error():
	with pytest.raises(UsageError):
		util.loadConfig(overrides=['sim.not_a_key=1'])
	with pytest.raises(UsageError):
		util.loadConfig(overrides=['missing_equals'])


def test_config_file_then_overrides(tmp_path):
	config_file = tmp_path / 'run.yaml'
	config_file.write_text(yaml.safe_dump({'problem': {'N': 2, 'p': 4.0}, 'sim': {'cfl': 0.05}}))
	config = util.loadConfig(str(config_file), ['sim.cfl=0.03'])
	assert config['problem']['N'] == 2
	assert config['problem']['p'] == 4.0
	assert config['sim']['cfl'] == 0.03
	assert config['sim']['dt_max'] == util.DEFAULT_CONFIG['sim']['dt_max']


def test_missing_config_file(tmp_path):
	with pytest.raises(UsageError):
		util.loadConfig(str(tmp_path / 'nope.yaml'))


def test_frozen_config_round_trip(tmp_path):
	config = util.loadConfig(overrides=['decomp.delta=0.05'])
	outdir = str(tmp_path) + '/'
	util.writeFrozenConfig(config, outdir)
	with open(outdir + 'config_frozen.yaml') as ocf:
		assert yaml.safe_load(ocf) == config


def test_output_directory_resolution(tmp_path, monkeypatch):
	config = util.loadConfig()
	explicit = util.resolveOutputDirectory(str(tmp_path / 'run'), 'profile', config)
	assert explicit == os.path.abspath(str(tmp_path / 'run')) + '/'
	monkeypatch.setenv('RINGNLS_OUTPUT_ROOT', str(tmp_path))
	from_env = util.resolveOutputDirectory(None, 'ode', config)
	assert from_env == os.path.abspath(str(tmp_path)) + '/ode_N3_p3.0/'


def test_exit_codes_of_the_error_family():
	assert UsageError('x').exit_code == util.EXIT_USAGE == 2
	assert InvariantFailure('x').exit_code == util.EXIT_INVARIANT == 1
	assert NumericalFailure('x').exit_code == util.EXIT_NUMERICAL == 3
	assert issubclass(UsageError, util.RingNLSError)


def test_logger_writes_and_closes(tmp_path):
	log_file = str(tmp_path / 'Progress.log')
	logObject = util.createLoggerObject(log_file)
	logObject.info('hello ring')
	util.closeLoggerObject(logObject)
	assert logObject.handlers == []
	with open(log_file) as olf:
		assert 'INFO - hello ring' in olf.read()


def test_parameters_file(tmp_path):
	parameter_file = str(tmp_path / 'Parameter_Inputs.txt')
	util.logParametersToFile(parameter_file, ['problem.N', 'problem.p'], [3, 3.0])
	with open(parameter_file) as opf:
		assert opf.read() == 'problem.N: 3\nproblem.p: 3.0\n'


def test_multiprocess_success_and_error_record(tmp_path):
	assert util.multiProcess([doublingTask, 21, None]) == 42
	log_file = str(tmp_path / 'worker.log')
	result = util.multiProcess([failingTask, 7, log_file])
	assert result['exit_code'] == util.EXIT_INVARIANT
	assert 'bad value 7' in result['error']
	with open(log_file) as olf:
		assert 'Had an issue running failingTask' in olf.read()


def test_setup_ready_directory(tmp_path):
	target = str(tmp_path / 'a' / 'b') + '/'
	util.setupReadyDirectory([target])
	assert os.path.isdir(target)
	with open(target + 'keep.txt', 'w') as ok:
		ok.write('x')
	util.setupReadyDirectory([target], overwrite=False)
	assert os.path.isfile(target + 'keep.txt')
	util.setupReadyDirectory([target])
	assert not os.path.isfile(target + 'keep.txt')
	with pytest.raises(UsageError):
		util.setupReadyDirectory(target)


def test_is_numeric():
	assert util.is_numeric('1e-3')
	assert util.is_numeric(4)
	assert not util.is_numeric('ring')
	assert not util.is_numeric(None)
	assert not util.is_numeric([1.0, 2.0])
