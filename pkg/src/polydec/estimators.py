"""scikit-learn style wrappers around the decoupling pipelines and CP-ALS."""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .cpd import cp_als, cpd_reconstruct
from .decouple import coupled_psym_cpd, decouple_via_J, decouple_via_Q
from .polymap import branch_derivative, eval_decoupled, jacobian_decoupled
from .tensorize import build_sample_plan, default_points
from .validation import check_points, check_polymap, check_tensor

_METHODS = {"coupled", "jacobian", "coefficient"}


class PolynomialDecoupler(TransformerMixin, BaseEstimator):
    """Decouple a polynomial map into ``W g(V^T u)``.

    ``fit`` takes a :class:`~polydec.polymap.PolyMap`. ``transform`` maps
    input points to the branch inputs ``V^T u``; ``predict`` evaluates the
    decoupled model.

    Parameters
    ----------
    n_branches : int
        Number of univariate branches ``r``.
    method : {"coupled", "jacobian", "coefficient"}
        Coupled partially symmetric CPD, CPD of the Jacobian tensor, or CPD
        of the coefficient tensor.
    n_samples : int, optional
        Sampling points for the Jacobian tensor; defaults to the rank bound
        of the Vandermonde-like matrix.
    max_iter : int, optional
        Iteration budget per restart (method-specific default when None).
    tol : float
    n_restarts : int
    random_state : int, optional
        Seed for restarts and sampling; None means 0.

    Attributes
    ----------
    model_ : DecoupledModel
    report_ : DecoupleReport
    W_, V_, C_ : ndarray
    n_features_in_ : int
    """

    def __init__(
        self,
        n_branches=1,
        method="coupled",
        n_samples=None,
        max_iter=None,
        tol=1e-12,
        n_restarts=10,
        random_state=None,
    ):
        self.n_branches = n_branches
        self.method = method
        self.n_samples = n_samples
        self.max_iter = max_iter
        self.tol = tol
        self.n_restarts = n_restarts
        self.random_state = random_state

    def fit(self, X, y=None):
        f = check_polymap(X)
        if self.method not in _METHODS:
            raise ValueError(f"method must be one of {sorted(_METHODS)}, got {self.method!r}")
        seed = 0 if self.random_state is None else int(self.random_state)
        opts = dict(tol=self.tol, n_restarts=self.n_restarts, seed=seed)
        if self.max_iter is not None:
            opts["max_iter"] = self.max_iter
        if self.method == "coefficient":
            report = decouple_via_Q(f, self.n_branches, **opts)
        else:
            plan = build_sample_plan(
                default_points(f.m, f.d, self.n_samples, seed=seed), f.m, f.d
            )
            if self.method == "jacobian":
                report = decouple_via_J(f, plan, self.n_branches, **opts)
            else:
                report = coupled_psym_cpd(f, self.n_branches, plan=plan, **opts)
        self.report_ = report
        self.model_ = report.model
        self.W_, self.V_, self.C_ = report.model.W, report.model.V, report.model.C
        self.n_features_in_ = f.m
        return self

    def transform(self, X):
        check_is_fitted(self, "model_")
        return check_points(X, self.n_features_in_) @ self.V_

    def predict(self, X):
        check_is_fitted(self, "model_")
        return eval_decoupled(self.model_, check_points(X, self.n_features_in_))

    def jacobian(self, X):
        """Jacobians of the decoupled model, shape ``(N, n, m)``."""
        check_is_fitted(self, "model_")
        return jacobian_decoupled(self.model_, check_points(X, self.n_features_in_))

    def branch_derivatives(self, X):
        """``g_k'(v_k^T u)`` for every point and branch."""
        return branch_derivative(self.C_, self.transform(X))


class CPALS(BaseEstimator):
    """CP decomposition of a dense tensor by alternating least squares.

    Attributes
    ----------
    cpd_ : CpdFactors
    factors_ : list of ndarray
    reconstruction_err_ : float
        Relative Frobenius error of the chosen restart.
    n_iter_ : int
    converged_ : bool
    """

    def __init__(self, rank=1, max_iter=2000, tol=1e-12, n_restarts=10, random_state=None):
        self.rank = rank
        self.max_iter = max_iter
        self.tol = tol
        self.n_restarts = n_restarts
        self.random_state = random_state

    def fit(self, X, y=None):
        T = check_tensor(X)
        seed = 0 if self.random_state is None else int(self.random_state)
        cp = cp_als(
            T, self.rank, max_iter=self.max_iter, tol=self.tol,
            n_restarts=self.n_restarts, seed=seed,
        )
        self.cpd_ = cp
        self.factors_ = cp.factors
        self.reconstruction_err_ = cp.fit
        self.n_iter_ = cp.iterations
        self.converged_ = cp.converged
        self.shape_ = T.shape
        return self

    def reconstruct(self) -> np.ndarray:
        check_is_fitted(self, "cpd_")
        return cpd_reconstruct(self.cpd_, self.shape_)

    def fit_reconstruct(self, X) -> np.ndarray:
        return self.fit(X).reconstruct()


__all__ = ["PolynomialDecoupler", "CPALS"]
