"""scikit-learn style wrapper around the fixed-point solver.

The functional API in :mod:`onsager_corpora.solver` is the primary
interface; this class packages one solve (or a continuation run) behind
``fit`` / ``transform`` / ``score`` for use in pipelines and grid searches
over ``b`` or the damping.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .kernel import KernelMatrix, KernelSpec
from .solver import SolverConfig, continue_in_b, free_energy, onsager_map, solve
from .space import Axis, Density, build_space


class OnsagerSolver(BaseEstimator):
    """Minimize the free energy ``int f log f + (b/2) int U[f] f`` for one kernel.

    Parameters
    ----------
    b : float
        Inverse temperature. Ignored when ``b_schedule`` is given, in which
        case the fitted state is the last one of the continuation run.
    damping, max_iterations, tolerance, init, amplitude, acceleration :
        Forwarded to :class:`~onsager_corpora.solver.SolverConfig`.
    b_schedule : sequence of float or None
        Optional strictly increasing continuation schedule.
    random_state : int
        Seed for perturbed initial densities.

    Attributes
    ----------
    density_ : ndarray of shape (n,)
        Converged density values.
    potential_ : ndarray of shape (n,)
    energy_, residual_ : float
    converged_ : bool
    n_iter_ : int
    states_ : list of OnsagerState
        Every state of the run (one entry without a schedule).
    kernel_ : KernelMatrix

    Examples
    --------
    >>> import numpy as np
    >>> K = np.zeros((4, 4))
    >>> est = OnsagerSolver(b=3.0).fit(K)
    >>> est.density_.tolist()
    [1.0, 1.0, 1.0, 1.0]
    """

    def __init__(self, b=1.0, damping=0.5, max_iterations=10_000, tolerance=1e-10, init="uniform",
                 amplitude=0.1, acceleration="anderson", b_schedule=None, random_state=0):
        self.b = b
        self.damping = damping
        self.max_iterations = max_iterations
        self.tolerance = tolerance
        self.init = init
        self.amplitude = amplitude
        self.acceleration = acceleration
        self.b_schedule = b_schedule
        self.random_state = random_state

    def _config(self) -> SolverConfig:
        return SolverConfig(
            damping=self.damping, max_iterations=self.max_iterations, tolerance=self.tolerance,
            b_schedule=tuple(self.b_schedule or ()), init=self.init, amplitude=self.amplitude,
            seed=self.random_state, acceleration=self.acceleration,
        )

    @staticmethod
    def _as_kernel(X) -> KernelMatrix:
        if isinstance(X, KernelMatrix):
            return X
        K = np.asarray(X, dtype=float)
        if K.ndim != 2 or K.shape[0] != K.shape[1]:
            raise ValueError("X must be a KernelMatrix or a square kernel array")
        # a bare matrix carries no geometry: use n equally weighted points
        space = build_space([Axis.periodic()], K.shape[0])
        return KernelMatrix(space, dense=K, spec=KernelSpec("custom-tabulated", {"matrix": K}))

    def fit(self, X, y=None):
        """Solve for the kernel ``X`` (KernelMatrix or square array)."""
        k = self._as_kernel(X)
        cfg = self._config()
        if cfg.b_schedule:
            states = continue_in_b(k, cfg)
        else:
            states = [solve(k, cfg, float(self.b))]
        last = states[-1]
        self.kernel_ = k
        self.states_ = states
        self.density_ = np.array(last.density.values)
        self.potential_ = np.array(last.potential)
        self.energy_ = last.energy
        self.residual_ = last.residual
        self.converged_ = last.converged
        self.n_iter_ = last.iterations
        self.b_ = last.b
        return self

    def transform(self, X):
        """Apply one step of the Onsager map to each row of ``X`` (densities)."""
        check_is_fitted(self, "density_")
        X = np.atleast_2d(np.asarray(X, dtype=float))
        space = self.kernel_.space
        out = np.empty_like(X)
        for i, row in enumerate(X):
            g, _ = onsager_map(self.kernel_, Density.normalized(row, space), self.b_)
            out[i] = g.values
        return out

    def score(self, X=None, y=None):
        """Negative free energy of the fitted density (or of each row of ``X``)."""
        check_is_fitted(self, "density_")
        space = self.kernel_.space
        if X is None:
            return -free_energy(self.kernel_, Density(self.density_, space), self.b_)
        X = np.atleast_2d(np.asarray(X, dtype=float))
        vals = [-free_energy(self.kernel_, Density.normalized(r, space), self.b_) for r in X]
        return float(np.mean(vals))
