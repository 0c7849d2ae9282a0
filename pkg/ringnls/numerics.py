"""
Grids, sampled fields, Simpson quadrature, fourth-order finite differences, the renormalized weighted H1 norm and
banded linear solves. Everything in ringnls sits on top of these helpers.
"""
import functools
from dataclasses import dataclass

import numpy as np
import pandas as pd
import scipy.linalg
import scipy.sparse

from ringnls.util import UsageError, NumericalFailure

MIN_NODES = 16
BANDED_RESIDUAL_TOL = 1e-10


@dataclass(frozen=True)
class Grid1D:
	y_min: float
	y_max: float
	n: int

	def __post_init__(self):
		if int(self.n) != self.n or self.n < MIN_NODES:
			raise UsageError('Grid1D needs an integer number of nodes n >= %d (got %s).' % (MIN_NODES, self.n))
		if not (np.isfinite(self.y_min) and np.isfinite(self.y_max)) or self.y_max <= self.y_min:
			raise UsageError('Grid1D needs finite bounds with y_min < y_max.')

	@property
	def h(self):
		return (self.y_max - self.y_min) / (self.n - 1)

	@property
	def nodes(self):
		return _nodes(self.y_min, self.y_max, self.n)

	@classmethod
	def from_spacing(cls, y_min, y_max, h):
		""" Uniform grid whose spacing is h up to rounding of the node count. """
		n = int(round((y_max - y_min) / h)) + 1
		return cls(float(y_min), float(y_max), n)

	def is_profile_grid(self):
		return self.y_min < 0.0 < self.y_max


@functools.lru_cache(maxsize=32)
def _nodes(y_min, y_max, n):
	nodes = np.linspace(y_min, y_max, n)
	nodes.setflags(write=False)
	return nodes


@dataclass(frozen=True, eq=False)
class Field:
	grid: Grid1D
	values: np.ndarray

	def __post_init__(self):
		values = np.asarray(self.values)
		if values.ndim != 1 or values.shape[0] != self.grid.n:
			raise UsageError('Field has %d samples but its grid has %d nodes.' % (values.size, self.grid.n))
		if not np.all(np.isfinite(values)):
			raise NumericalFailure('Field samples must be finite.')
		object.__setattr__(self, 'values', values)

	@property
	def y(self):
		return self.grid.nodes

	@property
	def is_complex(self):
		return np.iscomplexobj(self.values)

	def with_values(self, values):
		return type(self)(self.grid, values)


class RealField(Field):
	def __post_init__(self):
		values = np.asarray(self.values)
		if np.iscomplexobj(values):
			raise UsageError('RealField cannot hold complex samples.')
		object.__setattr__(self, 'values', values.astype(float))
		super().__post_init__()


class ComplexField(Field):
	def __post_init__(self):
		object.__setattr__(self, 'values', np.asarray(self.values).astype(complex))
		super().__post_init__()


@dataclass(frozen=True)
class WeightSpec:
	"""
	Description:
	The renormalized measure mu(y) = (1 + alpha*b*y/(2*beta))^(N-1), set to zero where its base is not positive.
	********************************************************************************************************************
	"""
	b: float
	beta: float
	N: int
	alpha: float

	def __post_init__(self):
		if not self.b > 0.0:
			raise UsageError('WeightSpec requires b > 0 (got %s).' % self.b)
		if not self.beta > 0.0:
			raise UsageError('WeightSpec requires beta > 0 (got %s).' % self.beta)
		if int(self.N) != self.N or self.N < 1:
			raise UsageError('WeightSpec requires an integer dimension N >= 1.')

	def mu(self, y):
		base = 1.0 + self.alpha * self.b * np.asarray(y) / (2.0 * self.beta)
		mu = np.zeros_like(base, dtype=float)
		support = base > 0.0
		mu[support] = base[support] ** (self.N - 1)
		return mu


def _check_finite(values):
	if not np.all(np.isfinite(values)):
		raise NumericalFailure('Non-finite samples passed to a quadrature or derivative.')


@functools.lru_cache(maxsize=32)
def simpson_weights(grid):
	"""
	Description:
	Composite Simpson weights on the grid nodes. With an odd number of intervals the last interval is integrated by a
	single trapezoid panel.
	********************************************************************************************************************
	Parameters:
	- grid: Grid1D.
	********************************************************************************************************************
	Returns:
	- A read-only weight vector w with sum(w * f) ~ integral of f.
	********************************************************************************************************************
	"""
	n = grid.n
	h = grid.h
	w = np.zeros(n)
	intervals = n - 1
	simpson_intervals = intervals - (intervals % 2)
	w[0:simpson_intervals + 1:2] += 2.0
	w[1:simpson_intervals:2] += 4.0
	w[0] = 1.0
	w[simpson_intervals] = 1.0
	w *= h / 3.0
	if intervals % 2 == 1:
		w[n - 2] += h / 2.0
		w[n - 1] += h / 2.0
	w.setflags(write=False)
	return w


def integrate_values(values, grid):
	""" Simpson integral of raw samples on grid. """
	values = np.asarray(values)
	_check_finite(values)
	return np.dot(simpson_weights(grid), values)


def integrate(f):
	"""
	Description:
	Composite Simpson approximation of the integral of a sampled field over [y_min, y_max].
	********************************************************************************************************************
	Parameters:
	- f: Field.
	********************************************************************************************************************
	Returns:
	- The integral (complex for complex fields).
	********************************************************************************************************************
	"""
	return integrate_values(f.values, f.grid)


def inner(f, g, grid):
	""" Real scalar product (f, g) = integral of f*g for real sample arrays. """
	return integrate_values(np.asarray(f) * np.asarray(g), grid)


def derivative_values(values, h, order):
	"""
	Description:
	Fourth-order central differences in the interior with fourth-order one-sided stencils on the two nodes at each
	end.
	********************************************************************************************************************
	Parameters:
	- values: Sample array (real or complex).
	- h: Grid spacing.
	- order: 1 or 2.
	********************************************************************************************************************
	Returns:
	- The derivative samples.
	********************************************************************************************************************
	"""
	f = np.asarray(values)
	if f.shape[0] < 6:
		raise UsageError('At least 6 nodes are needed for the fourth-order stencils.')
	_check_finite(f)
	d = np.empty_like(f)
	if order == 1:
		d[2:-2] = (f[:-4] - 8.0 * f[1:-3] + 8.0 * f[3:-1] - f[4:]) / (12.0 * h)
		d[0] = (-25.0 * f[0] + 48.0 * f[1] - 36.0 * f[2] + 16.0 * f[3] - 3.0 * f[4]) / (12.0 * h)
		d[1] = (-3.0 * f[0] - 10.0 * f[1] + 18.0 * f[2] - 6.0 * f[3] + f[4]) / (12.0 * h)
		d[-1] = (25.0 * f[-1] - 48.0 * f[-2] + 36.0 * f[-3] - 16.0 * f[-4] + 3.0 * f[-5]) / (12.0 * h)
		d[-2] = (3.0 * f[-1] + 10.0 * f[-2] - 18.0 * f[-3] + 6.0 * f[-4] - f[-5]) / (12.0 * h)
	elif order == 2:
		h2 = 12.0 * h * h
		d[2:-2] = (-f[:-4] + 16.0 * f[1:-3] - 30.0 * f[2:-2] + 16.0 * f[3:-1] - f[4:]) / h2
		d[0] = (45.0 * f[0] - 154.0 * f[1] + 214.0 * f[2] - 156.0 * f[3] + 61.0 * f[4] - 10.0 * f[5]) / h2
		d[1] = (10.0 * f[0] - 15.0 * f[1] - 4.0 * f[2] + 14.0 * f[3] - 6.0 * f[4] + f[5]) / h2
		d[-1] = (45.0 * f[-1] - 154.0 * f[-2] + 214.0 * f[-3] - 156.0 * f[-4] + 61.0 * f[-5] - 10.0 * f[-6]) / h2
		d[-2] = (10.0 * f[-1] - 15.0 * f[-2] - 4.0 * f[-3] + 14.0 * f[-4] - 6.0 * f[-5] + f[-6]) / h2
	else:
		raise UsageError('Derivative order must be 1 or 2 (got %s).' % order)
	return d


def derivative(f, order=1):
	""" Fourth-order finite-difference derivative of a field, returned as a field of the same kind. """
	return f.with_values(derivative_values(f.values, f.grid.h, order))


def h1mu_norm_values(values, grid, w):
	""" sqrt(integral of (|f'|^2 + |f|^2) mu) for raw samples. """
	values = np.asarray(values)
	dv = derivative_values(values, grid.h, 1)
	mu = w.mu(grid.nodes)
	density = (np.abs(dv) ** 2 + np.abs(values) ** 2) * mu
	return float(np.sqrt(max(integrate_values(density, grid), 0.0)))


def h1mu_norm(f, w):
	"""
	Description:
	The renormalized Sobolev norm ||f||_{H1_mu}.
	********************************************************************************************************************
	Parameters:
	- f: Field on a profile grid.
	- w: WeightSpec.
	********************************************************************************************************************
	Returns:
	- The norm as a float.
	********************************************************************************************************************
	"""
	return h1mu_norm_values(f.values, f.grid, w)


@dataclass(frozen=True, eq=False)
class BandedMatrix:
	"""
	Square matrix in the diagonal-ordered layout of scipy.linalg.solve_banded: ab[upper + i - j, j] = A[i, j].
	"""
	ab: np.ndarray
	lower: int
	upper: int

	def __post_init__(self):
		if self.lower + self.upper + 1 > 5:
			raise UsageError('Banded matrices are limited to bandwidth 5.')
		if self.ab.shape[0] != self.lower + self.upper + 1:
			raise UsageError('Banded storage has %d rows, expected %d.' % (self.ab.shape[0], self.lower + self.upper + 1))

	@property
	def n(self):
		return self.ab.shape[1]

	@classmethod
	def from_diagonals(cls, diagonals, offsets):
		"""
		Description:
		Builds banded storage from diagonals in the scipy.sparse.diags convention: the diagonal of offset k has
		n - |k| entries, listed from the top-left corner.
		****************************************************************************************************************
		"""
		n = len(diagonals[0]) + abs(offsets[0])
		upper = max(0, max(offsets))
		lower = max(0, -min(offsets))
		dtype = np.result_type(*[np.asarray(d) for d in diagonals])
		ab = np.zeros((lower + upper + 1, n), dtype=dtype)
		for diag, off in zip(diagonals, offsets):
			diag = np.asarray(diag)
			if off >= 0:
				ab[upper - off, off:] = diag
			else:
				ab[upper - off, :n + off] = diag
		return cls(ab, lower, upper)

	def to_sparse(self):
		offsets = list(range(self.upper, -self.lower - 1, -1))
		diags = []
		for row, off in enumerate(offsets):
			if off >= 0:
				diags.append(self.ab[row, off:])
			else:
				diags.append(self.ab[row, :self.n + off])
		return scipy.sparse.diags(diags, offsets, shape=(self.n, self.n), format='csr')

	def matvec(self, x):
		return self.to_sparse() @ x


@dataclass(frozen=True, eq=False)
class BandedSolution:
	x: np.ndarray
	residual: float


def solve_banded(A, rhs, check=True, tol=BANDED_RESIDUAL_TOL):
	"""
	Description:
	Direct banded LU solve. The relative residual ||Ax - rhs||_inf / ||rhs||_inf is measured and returned; with check
	set, a residual above tol raises NumericalFailure.
	********************************************************************************************************************
	Parameters:
	- A: BandedMatrix.
	- rhs: Right-hand side vector (real or complex).
	- check: Whether to enforce the residual bound.
	- tol: Residual bound.
	********************************************************************************************************************
	Returns:
	- BandedSolution with the solution and its residual.
	********************************************************************************************************************
	"""
	rhs = np.asarray(rhs)
	if rhs.shape[0] != A.n:
		raise UsageError('Right-hand side length %d does not match matrix size %d.' % (rhs.shape[0], A.n))
	_check_finite(rhs)
	try:
		x = scipy.linalg.solve_banded((A.lower, A.upper), A.ab, rhs, check_finite=True)
	except (np.linalg.LinAlgError, ValueError) as e:
		diag = np.abs(A.ab[A.upper])
		ratio = np.inf if diag.min() == 0.0 else diag.max() / diag.min()
		raise NumericalFailure('Banded solve failed (%s); diagonal magnitude ratio %.3e.' % (str(e), ratio))
	if not np.all(np.isfinite(x)):
		diag = np.abs(A.ab[A.upper])
		raise NumericalFailure('Banded solve produced non-finite values; smallest diagonal magnitude %.3e.' % diag.min())
	scale = np.max(np.abs(rhs))
	residual = 0.0
	if scale > 0.0:
		residual = float(np.max(np.abs(A.matvec(x) - rhs)) / scale)
	if check and residual > tol:
		raise NumericalFailure('Banded solve residual %.3e exceeds %.1e.' % (residual, tol))
	return BandedSolution(x, residual)


def writeFieldCsv(field, csv_file):
	"""
	Description:
	Writes a field to CSV with header y,re,im (complex) or y,value (real), 17 significant digits.
	********************************************************************************************************************
	"""
	if field.is_complex:
		df = pd.DataFrame({'y': field.y, 're': field.values.real, 'im': field.values.imag})
	else:
		df = pd.DataFrame({'y': field.y, 'value': field.values})
	df.to_csv(csv_file, index=False, float_format='%.17g')


def readFieldCsv(csv_file, grid=None):
	""" Reads a field written by writeFieldCsv; the grid is rebuilt from the y column unless given. """
	df = pd.read_csv(csv_file)
	y = df['y'].to_numpy()
	if grid is None:
		grid = Grid1D(float(y[0]), float(y[-1]), len(y))
	if 'value' in df.columns:
		return RealField(grid, df['value'].to_numpy())
	return ComplexField(grid, df['re'].to_numpy() + 1j * df['im'].to_numpy())
