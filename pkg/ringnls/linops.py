"""
The linearized operators L+ = -d^2/dy^2 + 1 - p Q^(p-1) and L- = -d^2/dy^2 + 1 - Q^(p-1) around the ground state,
their kernel-bordered inversion and the constrained coercivity eigensolve.
"""
import functools
from dataclasses import dataclass

import numpy as np
import scipy.sparse
import scipy.sparse.linalg

from ringnls import numerics
from ringnls.util import UsageError, NumericalFailure

SOLVABILITY_TOL = 1e-6


def second_difference_matrix(grid):
	"""
	Description:
	Pentadiagonal fourth-order second difference on the grid with zero values assumed outside of it (homogeneous
	Dirichlet ends). The matrix is exactly symmetric.
	********************************************************************************************************************
	"""
	n = grid.n
	c = 1.0 / (12.0 * grid.h * grid.h)
	diagonals = [np.full(n - 2, -c), np.full(n - 1, 16.0 * c), np.full(n, -30.0 * c), np.full(n - 1, 16.0 * c),
				 np.full(n - 2, -c)]
	return scipy.sparse.diags(diagonals, [-2, -1, 0, 1, 2], shape=(n, n), format='csr')


@dataclass(frozen=True, eq=False)
class ConstrainedSolution:
	solution: numerics.RealField
	multiplier: float
	solvability_defect: float
	gauge_defect: float


@dataclass(frozen=True, eq=False)
class LinearizedPair:
	gs: object
	Lplus_matrix: scipy.sparse.csr_matrix
	Lminus_matrix: scipy.sparse.csr_matrix

	@property
	def grid(self):
		return self.gs.grid

	@functools.cached_property
	def _bordered_factors(self):
		w = numerics.simpson_weights(self.grid)
		factors = {}
		for name, L, kernel in (('plus', self.Lplus_matrix, self.gs.Qp.values),
								('minus', self.Lminus_matrix, self.gs.Q.values)):
			column = scipy.sparse.csr_matrix(kernel.reshape(-1, 1))
			row = scipy.sparse.csr_matrix((w * kernel).reshape(1, -1))
			bordered = scipy.sparse.bmat([[L, column], [row, None]], format='csc')
			try:
				factors[name] = scipy.sparse.linalg.splu(bordered)
			except RuntimeError as e:
				raise NumericalFailure('Bordered %s system is singular: %s' % (name, str(e)))
		return factors

	def _check_grid(self, f):
		if f.grid != self.grid:
			raise UsageError('Field grid does not match the grid of the linearized operators.')

	def apply_Lplus_values(self, values):
		return self.Lplus_matrix @ np.asarray(values)

	def apply_Lminus_values(self, values):
		return self.Lminus_matrix @ np.asarray(values)

	def apply_Lplus(self, f):
		self._check_grid(f)
		return numerics.RealField(self.grid, self.apply_Lplus_values(f.values))

	def apply_Lminus(self, f):
		self._check_grid(f)
		return numerics.RealField(self.grid, self.apply_Lminus_values(f.values))

	def _solve(self, name, h, kernel, tol, check):
		h = np.asarray(h, dtype=float)
		if h.shape[0] != self.grid.n:
			raise UsageError('Right-hand side has %d samples, the grid has %d nodes.' % (h.shape[0], self.grid.n))
		if not np.all(np.isfinite(h)):
			raise NumericalFailure('Non-finite right-hand side passed to the %s solve.' % name)
		grid = self.grid
		defect = numerics.inner(h, kernel, grid)
		h_norm = np.sqrt(numerics.inner(h, h, grid))
		if check and abs(defect) > tol * (1.0 + h_norm):
			raise NumericalFailure('Inconsistent right-hand side for L%s: solvability defect %.3e exceeds %.1e * (1 + %.3e).'
								   % ('+' if name == 'plus' else '-', defect, tol, h_norm))
		sol = self._bordered_factors[name].solve(np.concatenate([h, [0.0]]))
		if not np.all(np.isfinite(sol)):
			raise NumericalFailure('Bordered %s solve produced non-finite values.' % name)
		T = sol[:-1]
		multiplier = float(sol[-1])
		kernel_norm = np.sqrt(numerics.inner(kernel, kernel, grid))
		T_norm = np.sqrt(numerics.inner(T, T, grid))
		gauge = 0.0
		if T_norm > 0.0:
			gauge = abs(numerics.inner(T, kernel, grid)) / (T_norm * kernel_norm)
		return ConstrainedSolution(numerics.RealField(grid, T), multiplier, float(defect), float(gauge))

	def solve_Lplus(self, h, tol=SOLVABILITY_TOL, check=True):
		"""
		Description:
		Solves L+ T = h - mu Q' with (T, Q') = 0 through the bordered system [L+, Q'; (w Q')^T, 0].
		****************************************************************************************************************
		Parameters:
		- h: RealField or sample array.
		- tol: Relative tolerance on the solvability defect (h, Q').
		- check: Whether to raise on an inconsistent right-hand side.
		****************************************************************************************************************
		Returns:
		- ConstrainedSolution.
		****************************************************************************************************************
		"""
		values = h.values if isinstance(h, numerics.Field) else h
		return self._solve('plus', values, self.gs.Qp.values, tol, check)

	def solve_Lminus(self, h, tol=SOLVABILITY_TOL, check=True):
		""" Solves L- S = h - mu Q with (S, Q) = 0; see solve_Lplus. """
		values = h.values if isinstance(h, numerics.Field) else h
		return self._solve('minus', values, self.gs.Q.values, tol, check)


def build_linearized_pair(gs):
	"""
	Description:
	Assembles the sparse pentadiagonal matrices of L+ and L- on the ground state grid.
	********************************************************************************************************************
	Parameters:
	- gs: GroundState.
	********************************************************************************************************************
	Returns:
	- LinearizedPair.
	********************************************************************************************************************
	"""
	p = gs.params.p
	n = gs.grid.n
	minus_d2 = -second_difference_matrix(gs.grid)
	potential = gs.Q.values ** (p - 1.0)
	identity = scipy.sparse.identity(n, format='csr')
	Lplus = (minus_d2 + identity - scipy.sparse.diags(p * potential, 0, format='csr')).tocsr()
	Lminus = (minus_d2 + identity - scipy.sparse.diags(potential, 0, format='csr')).tocsr()
	return LinearizedPair(gs, Lplus, Lminus)


def kernel_identity_defects(pair, margin=5.0):
	"""
	Description:
	Sup norms over the interior (|y| <= y_max - margin) of L- Q, L+ Q', L+ Lambda Q + 2Q and L- (yQ) + 2Q'.
	********************************************************************************************************************
	"""
	gs = pair.gs
	y = gs.grid.nodes
	interior = np.abs(y) <= min(abs(gs.grid.y_min), abs(gs.grid.y_max)) - margin
	checks = {'Lminus_Q': pair.apply_Lminus_values(gs.Q.values),
			  'Lplus_Qp': pair.apply_Lplus_values(gs.Qp.values),
			  'Lplus_LamQ': pair.apply_Lplus_values(gs.LamQ.values) + 2.0 * gs.Q.values,
			  'Lminus_yQ': pair.apply_Lminus_values(gs.yQ.values) + 2.0 * gs.Qp.values}
	return {name: float(np.max(np.abs(values[interior]))) for name, values in checks.items()}


def h1_gram_matrix(grid):
	""" Matrix of the H1 quadratic form integral of (|f'|^2 + |f|^2), consistent with the operator discretization. """
	n = grid.n
	return (-second_difference_matrix(grid) + scipy.sparse.identity(n, format='csr')).tocsr()


def constrained_min_eig(L, M, constraints, grid, max_iter=2000, tol=1e-11, seed=0):
	"""
	Description:
	Smallest value of (L x, x) / (M x, x) over x orthogonal to the given constraint vectors, by inverse iteration on
	the bordered pencil [L, C; C^T, 0]. The constrained form must be positive for the iteration to select its minimum.
	********************************************************************************************************************
	Parameters:
	- L: Sparse symmetric operator matrix.
	- M: Sparse symmetric positive definite Gram matrix.
	- constraints: List of sample arrays c_i imposing (x, c_i) = 0.
	- grid: Grid1D, used for the quadrature scaling of the constraints.
	- max_iter: Maximum number of inverse iterations.
	- tol: Relative stopping tolerance on the Rayleigh quotient.
	- seed: Seed of the start vector.
	********************************************************************************************************************
	Returns:
	- (theta, x, iterations)
	********************************************************************************************************************
	"""
	n = L.shape[0]
	C = scipy.sparse.csr_matrix(np.column_stack([grid.h * np.asarray(c) for c in constraints]))
	bordered = scipy.sparse.bmat([[L, C], [C.T, None]], format='csc')
	try:
		lu = scipy.sparse.linalg.splu(bordered)
	except RuntimeError as e:
		raise NumericalFailure('Constrained eigensolve matrix is singular: %s' % str(e))
	rng = np.random.default_rng(seed)
	x = rng.standard_normal(n) * np.exp(-np.abs(grid.nodes) / 4.0)
	theta_old = np.inf
	m = len(constraints)
	for iteration in range(1, max_iter + 1):
		x = lu.solve(np.concatenate([M @ x, np.zeros(m)]))[:n]
		x /= np.sqrt(x @ (M @ x))
		theta = float(x @ (L @ x))
		if abs(theta - theta_old) <= tol * abs(theta):
			return theta, x, iteration
		theta_old = theta
	raise NumericalFailure('Constrained inverse iteration did not converge in %d iterations (last quotient %.6e).'
						   % (max_iter, theta_old))


def coercivity_min_eig(gs, pair=None, logObject=None, max_iter=2000):
	"""
	Description:
	Smallest Rayleigh quotient of (L+ e1, e1) + (L- e2, e2) over the H1 unit sphere intersected with
	(e1, Q) = (e1, yQ) = (e2, Lambda Q) = 0. The form decouples, so the minimum is the smaller of the two constrained
	minima.
	********************************************************************************************************************
	Parameters:
	- gs: GroundState.
	- pair: Optional prebuilt LinearizedPair on the same grid.
	- logObject: Optional logging object.
	- max_iter: Iteration cap of each inverse iteration.
	********************************************************************************************************************
	Returns:
	- The constrained minimum as a float.
	********************************************************************************************************************
	"""
	if pair is None:
		pair = build_linearized_pair(gs)
	M = h1_gram_matrix(gs.grid)
	theta_plus, _, it_plus = constrained_min_eig(pair.Lplus_matrix, M, [gs.Q.values, gs.yQ.values], gs.grid,
												 max_iter=max_iter)
	theta_minus, _, it_minus = constrained_min_eig(pair.Lminus_matrix, M, [gs.LamQ.values], gs.grid,
												   max_iter=max_iter)
	if logObject is not None:
		logObject.info('Constrained minima: L+ %.10f (%d iterations), L- %.10f (%d iterations).'
					   % (theta_plus, it_plus, theta_minus, it_minus))
	return float(min(theta_plus, theta_minus))


def lplus_min_eig(pair):
	""" Lowest eigenvalue of the unconstrained L+ matrix by shift-invert Lanczos. """
	p = pair.gs.params.p
	values = scipy.sparse.linalg.eigsh(pair.Lplus_matrix.tocsc(), k=1, sigma=-(p + 1.0) ** 2, which='LM',
									   return_eigenvectors=False)
	return float(values[0])


def quadratic_form_ratio(pair, eps1, eps2):
	""" ((L+ e1, e1) + (L- e2, e2)) / ||(e1, e2)||_{H1}^2 by direct quadrature. """
	grid = pair.grid
	num = numerics.inner(pair.apply_Lplus_values(eps1), eps1, grid) + numerics.inner(pair.apply_Lminus_values(eps2), eps2, grid)
	den = 0.0
	for e in (eps1, eps2):
		de = numerics.derivative_values(e, grid.h, 1)
		den += numerics.inner(de, de, grid) + numerics.inner(e, e, grid)
	return float(num / den)
