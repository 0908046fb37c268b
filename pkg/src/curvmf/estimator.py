"""Estimator-style front end: fit a ProblemSpec, read the solution off the fitted attributes."""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from .meanfield import normalize_solution, project_mean_zero
from .minimize import SolverConfig, minimize
from .validation import check_field, check_is_solved, check_spec


class MeanFieldSolver(BaseEstimator, TransformerMixin, auto_wrap_output_keys=None):
    """Minimize the mean-field energy for a given curvature problem.

    After `fit(spec)`:
        u_          zero-mean minimizer
        v_          conformal factor solving the curvature problem (or -h, see sign_used_)
        C_, J_      constant C(u_) and energy at u_
        sign_used_  "h", "minus_h" or "n/a"
        result_     the full SolveResult (trace included)
    """

    def __init__(
        self,
        grad_tol=None,
        max_iters=10_000,
        memory=10,
        domain_margin=1e-10,
        backtrack_factor=0.5,
        armijo_c=1e-4,
        symmetric=False,
        seed=0,
    ):
        self.grad_tol = grad_tol
        self.max_iters = max_iters
        self.memory = memory
        self.domain_margin = domain_margin
        self.backtrack_factor = backtrack_factor
        self.armijo_c = armijo_c
        self.symmetric = symmetric
        self.seed = seed

    def _config(self) -> SolverConfig:
        return SolverConfig(**self.get_params())

    def fit(self, X, y=None, u0=None):
        spec = check_spec(X)
        if u0 is not None:
            u0 = check_field(u0, spec.vertex_count, name="u0")
        res = minimize(spec, self._config(), u0=u0)
        self.spec_ = spec
        self.result_ = res
        self.u_ = res.u_star
        self.v_ = res.v_star
        self.C_ = res.C_star
        self.J_ = res.J_star
        self.sign_used_ = res.sign_used
        self.n_iter_ = res.iterations
        self.converged_ = res.converged
        return self

    def transform(self, X=None):
        """Normalized conformal factor.

        X may be the fitted spec (or None), giving v_, or a field / batch of
        fields, each projected to zero mean and normalized.
        """
        check_is_solved(self)
        if X is None or X is self.spec_:
            return self.v_
        U = check_field(X, self.spec_.vertex_count, name="X", allow_batch=True)
        if U.ndim == 1:
            return normalize_solution(self.spec_, project_mean_zero(self.spec_.ops, U))
        return np.stack([normalize_solution(self.spec_, project_mean_zero(self.spec_.ops, u)) for u in U])
