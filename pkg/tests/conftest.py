import pytest

from ringnls import util, numerics, groundstate, linops, profile


def pytest_addoption(parser):
	parser.addoption('--runslow', action='store_true', default=False, help='run the long numerical experiments')


def pytest_collection_modifyitems(config, items):
	if config.getoption('--runslow'):
		return
	skip_slow = pytest.mark.skip(reason='needs --runslow')
	for item in items:
		if 'slow' in item.keywords:
			item.add_marker(skip_slow)


@pytest.fixture(scope='session')
def config():
	return util.loadConfig()


@pytest.fixture(scope='session')
def params33():
	return groundstate.make_params(3, 3.0)


@pytest.fixture(scope='session')
def profile_grid(config):
	return groundstate.default_profile_grid(config)


@pytest.fixture(scope='session')
def gs33(params33, profile_grid):
	return groundstate.eval_groundstate(params33, profile_grid)


@pytest.fixture(scope='session')
def pair33(gs33):
	return linops.build_linearized_pair(gs33)


@pytest.fixture(scope='session')
def exp33(params33, gs33, pair33):
	return profile.build_expansion(params33, gs33, pair=pair33)


@pytest.fixture(scope='session')
def small_grid():
	return numerics.Grid1D(-1.0, 1.0, 201)
