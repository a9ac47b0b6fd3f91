import numpy as np
import pytest
from sklearn.base import clone

from fednest import FedNestOptimizer, MinimaxQuadraticSpec, make_minimax_quadratic
from fednest.exceptions import ContractViolation


def test_fit_and_score():
    inst = make_minimax_quadratic(MinimaxQuadraticSpec(m=5, d=3))
    est = FedNestOptimizer(K=50, T=3, tau_inner=2, tau_outer=2, alpha=0.05, beta=0.1)
    before = -float(np.sum(inst.hypergradient(np.ones(3)) ** 2))
    est.fit(inst, x0=np.ones(3), y0=np.ones(3))
    assert est.x_.shape == (3,) and est.problem_kind_ == "minimax"
    assert est.ledger_["rounds"] == 50 * (2 * 3 + 3)
    assert est.score(inst) > before


def test_params_and_clone():
    est = FedNestOptimizer(algorithm="lfednest", K=7)
    assert est.get_params()["K"] == 7
    c = clone(est).set_params(K=9)
    assert c.K == 9 and c.algorithm == "lfednest"


def test_unfitted_and_bad_input():
    from sklearn.exceptions import NotFittedError
    inst = make_minimax_quadratic(MinimaxQuadraticSpec(m=2, d=2))
    with pytest.raises(NotFittedError):
        FedNestOptimizer().score(inst)
    with pytest.raises(ContractViolation):
        FedNestOptimizer().fit(np.zeros((3, 3)))
    with pytest.raises(ContractViolation):
        FedNestOptimizer(algorithm="adam").fit(inst)
