"""scikit-learn style wrapper around the run drivers.

The estimator is fitted on a problem instance rather than on ``(X, y)``
arrays, since the data lives inside the client oracles.
"""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .exceptions import ContractViolation
from .orchestrator import ALL_ALGORITHMS, run_algorithm
from .schedule import ScheduleConfig


class FedNestOptimizer(BaseEstimator):
    """Run a federated nested optimiser with sklearn-style parameters.

    After :meth:`fit`, ``x_`` and ``y_`` hold the final outer and inner
    iterates, ``trace_`` the per-epoch records and ``ledger_`` the
    communication totals. :meth:`score` is the negative squared norm of the
    true hypergradient at ``x_`` (higher is better).
    """

    def __init__(self, algorithm="fednest", K=100, T=1, N=5, tau_inner=1, tau_outer=1,
                 schedule_mode="manual", alpha=0.05, beta=0.1, participation=None, seed=0):
        self.algorithm = algorithm
        self.K = K
        self.T = T
        self.N = N
        self.tau_inner = tau_inner
        self.tau_outer = tau_outer
        self.schedule_mode = schedule_mode
        self.alpha = alpha
        self.beta = beta
        self.participation = participation
        self.seed = seed

    def _schedule(self):
        return ScheduleConfig(K=self.K, T=self.T, N=self.N, tau_inner=self.tau_inner,
                              tau_outer=self.tau_outer, mode=self.schedule_mode,
                              alpha=self.alpha, beta=self.beta,
                              participation=self.participation)

    def fit(self, problem, x0=None, y0=None):
        if self.algorithm not in ALL_ALGORITHMS:
            raise ContractViolation(f"algorithm must be one of {ALL_ALGORITHMS}")
        if not hasattr(problem, "clients"):
            raise ContractViolation("fit expects a problem instance from fednest.zoo")
        trace = run_algorithm(self.algorithm, problem, self._schedule(), self.seed, x0=x0, y0=y0)
        self.trace_ = trace
        self.x_, self.y_ = trace.x, trace.y
        self.ledger_ = dict(trace.ledger)
        self.problem_kind_ = problem.kind
        return self

    def score(self, problem):
        check_is_fitted(self, "x_")
        g = problem.hypergradient(self.x_)
        return -float(np.dot(g, g))
