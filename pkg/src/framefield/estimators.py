"""scikit-learn style wrappers around projection and field solving."""
import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from . import optim, projection
from .exceptions import InputError
from .mesh import TetMesh, fem_operators


class _VarietyProjector(TransformerMixin, BaseEstimator):
    dim = None

    def __init__(self, workers=1, ratio_tol=projection.RATIO_TOL):
        self.workers = workers
        self.ratio_tol = ratio_tol

    def _project(self, X):
        raise NotImplementedError

    def fit(self, X=None, y=None):
        if X is not None:
            check_array(X)
        if self.workers < 1:
            raise InputError("workers must be at least 1")
        self.n_features_in_ = self.dim
        return self

    def transform(self, X):
        check_is_fitted(self, "n_features_in_")
        X = check_array(X, dtype=float)
        if X.shape[1] != self.dim:
            raise InputError(f"expected {self.dim} columns, got {X.shape[1]}")
        q, ratio = self._project(X)
        self.ratios_ = ratio
        return q


class OctahedralProjector(_VarietyProjector):
    """Nearest octahedral frame (9 coefficients) to each row of X."""

    dim = 9

    def _project(self, X):
        return projection.project_octa(X, workers=self.workers, ratio_tol=self.ratio_tol)


class OdecoProjector(_VarietyProjector):
    """Nearest odeco quartic (15 coefficients) to each row of X."""

    dim = 15

    def _project(self, X):
        return projection.project_odeco(X, workers=self.workers, ratio_tol=self.ratio_tol)


class FrameFieldOptimizer(BaseEstimator):
    """Smoothest boundary-aligned frame field on a tet mesh.

    ``fit(mesh)`` stores the final :class:`~framefield.optim.FieldState` in
    ``field_`` and the energy in ``energy_``; ``transform`` returns the
    per-vertex coefficients (n × d).
    """

    def __init__(self, rep="octa", solver="rtr", seed=0, tau0=None, schedule=None,
                 delta=1e-4, grad_tol=None, max_outer=None, workers=1):
        self.rep = rep
        self.solver = solver
        self.seed = seed
        self.tau0 = tau0
        self.schedule = schedule
        self.delta = delta
        self.grad_tol = grad_tol
        self.max_outer = max_outer
        self.workers = workers

    def _configs(self):
        if self.rep not in optim.DIMS:
            raise InputError(f"unknown representation {self.rep!r}")
        schedule = self.schedule or ("constant" if self.solver == "mbo" else "powerlaw")
        extra = {} if self.max_outer is None else {"max_outer": self.max_outer}
        mbo = optim.MboConfig(tau0=self.tau0, schedule=schedule, delta=self.delta, **extra)
        rtr = optim.RtrConfig(grad_tol=self.grad_tol, **extra)
        return mbo, rtr

    def fit(self, mesh, y=None):
        if not isinstance(mesh, TetMesh):
            raise InputError("fit expects a TetMesh")
        mbo, rtr = self._configs()
        ops = fem_operators(mesh)
        self.field_, self.ops_ = optim.solve_field(mesh, self.rep, self.solver, self.seed,
                                                   ops=ops, mbo=mbo, rtr=rtr,
                                                   workers=self.workers)
        self.energy_ = optim.dirichlet_energy(self.field_, ops)
        self.n_features_in_ = optim.DIMS[self.rep]
        return self

    def transform(self, mesh=None):
        check_is_fitted(self, "field_")
        return np.array(self.field_.coeffs.T)

    def fit_transform(self, mesh, y=None):
        return self.fit(mesh).transform()
