"""scikit-learn style estimators over the functional solvers.

Fit arguments are matrices rather than feature tables: the "sample" is the
cost matrix itself. Hyperparameters live in ``__init__`` unchanged so
``get_params``/``set_params``/``clone`` work as usual; fitted state gets a
trailing underscore.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .core import check_cost_matrix, check_distribution
from .kernel import materialize
from .osborne import OsborneConfig, parse_strategy, run_osborne, solve_mmc
from .sinkhorn import SinkhornConfig, run_sinkhorn, solve_ot


def _uniform_if_none(w, n, name):
    if w is None:
        return np.full(n, 1.0 / n)
    w = check_distribution(w, name)
    if w.size != n:
        raise ValueError(f"{name} has {w.size} entries, expected {n}")
    return w


class SinkhornScaler(BaseEstimator):
    """Matrix scaling of ``exp(-eta * C)`` to marginals ``mu`` and ``nu``.

    Parameters
    ----------
    eta : float
        Inverse regularization strength.
    marginal_tolerance : float
        Stop once the l1 marginal error is at most this.
    max_iter : int
        Maximum number of row/column sweeps.

    Attributes
    ----------
    x_, y_ : ndarray of shape (n,)
        Row and column potentials; the scaling matrices are ``exp(eta * x_)``
        and ``exp(eta * y_)``.
    coupling_ : ndarray of shape (n, n)
    n_iter_ : int
    converged_ : bool
    report_ : SolveReport
    """

    def __init__(self, eta=1.0, marginal_tolerance=1e-9, max_iter=10_000):
        self.eta = eta
        self.marginal_tolerance = marginal_tolerance
        self.max_iter = max_iter

    def fit(self, C, mu=None, nu=None):
        C = check_cost_matrix(C)
        n = C.shape[0]
        mu = _uniform_if_none(mu, n, "mu")
        nu = _uniform_if_none(nu, n, "nu")
        cfg = SinkhornConfig(self.eta, self.marginal_tolerance, self.max_iter)
        M, report = run_sinkhorn(C, mu, nu, cfg)
        self.scaled_ = M
        self.x_, self.y_ = M.x.copy(), M.y.copy()
        self.coupling_ = materialize(M)
        self.n_iter_ = report.iterations
        self.converged_ = report.converged
        self.report_ = report
        return self

    def transform(self, C):
        """Reduced costs ``C_ij - x_i - y_j`` under the fitted potentials."""
        check_is_fitted(self, "x_")
        C = check_cost_matrix(C)
        return C - self.x_[:, None] - self.y_[None, :]


class EntropicOT(BaseEstimator):
    """Optimal transport value to within ``epsilon`` via Sinkhorn plus rounding."""

    def __init__(self, epsilon=0.05, max_iter=10_000):
        self.epsilon = epsilon
        self.max_iter = max_iter

    def fit(self, C, mu=None, nu=None):
        C = check_cost_matrix(C)
        n = C.shape[0]
        mu = _uniform_if_none(mu, n, "mu")
        nu = _uniform_if_none(nu, n, "nu")
        report = solve_ot(C, mu, nu, self.epsilon, max_iterations=self.max_iter)
        self.value_ = report.value
        self.lower_bound_ = report.lower_bound
        self.coupling_ = report.certificate
        self.n_iter_ = report.iterations
        self.converged_ = report.converged
        self.report_ = report
        return self


class OsborneBalancer(TransformerMixin, BaseEstimator):
    """Matrix balancing of ``exp(-eta * C)``.

    ``transform`` returns the balanced reduced costs ``C_ij - x_i + x_j``,
    i.e. the cost matrix of the similarity transform ``X K X^-1``.
    """

    def __init__(self, eta=1.0, tol=1e-4, max_updates=200_000, strategy="greedy"):
        self.eta = eta
        self.tol = tol
        self.max_updates = max_updates
        self.strategy = strategy

    def fit(self, C, y=None):
        C = check_cost_matrix(C)
        name, seed = parse_strategy(self.strategy)
        cfg = OsborneConfig(self.eta, self.tol, self.max_updates, name, seed)
        M, report = run_osborne(C, cfg)
        self.balanced_ = M
        self.x_ = M.x.copy()
        self.n_iter_ = report.iterations
        self.converged_ = report.converged
        self.report_ = report
        return self

    def transform(self, C):
        check_is_fitted(self, "x_")
        C = check_cost_matrix(C)
        if C.shape[0] != self.x_.size:
            raise ValueError(f"expected a {self.x_.size}x{self.x_.size} matrix")
        return C - self.x_[:, None] + self.x_[None, :]


class MinimumMeanCycle(BaseEstimator):
    """Minimum cycle mean to within ``epsilon`` with a certified bracket."""

    def __init__(self, epsilon=0.05, strategy="greedy", tol=1e-4):
        self.epsilon = epsilon
        self.strategy = strategy
        self.tol = tol

    def fit(self, C, y=None):
        name, seed = parse_strategy(self.strategy)
        report = solve_mmc(C, self.epsilon, strategy=name, seed=seed,
                           imbalance_tolerance=self.tol)
        self.value_ = report.value
        self.lower_bound_ = report.lower_bound
        self.upper_bound_ = report.upper_bound
        self.cycle_ = report.certificate
        self.n_iter_ = report.iterations
        self.report_ = report
        return self

    def predict(self, C):
        """Mean cost of the fitted cycle under another cost matrix of the same size."""
        check_is_fitted(self, "cycle_")
        return self.cycle_.mean_cost(check_cost_matrix(C))
