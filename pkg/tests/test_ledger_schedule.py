import math

import numpy as np
import pytest

from fednest import (BilevelQuadraticSpec, CompositionalSpec, MinimaxQuadraticSpec, RoundLedger,
                     ScheduleConfig, SingleLevelSpec, epoch_round_budget, make_bilevel_quadratic,
                     schedule_constants, stepsize_schedule)
from fednest.exceptions import ConfigError, PayloadError
from fednest.ledger import outer_rounds, pairwise_mean, pairwise_sum
from fednest.zoo import make_problem


@pytest.mark.parametrize("T,N", [(1, 1), (5, 5), (10, 3)])
def test_budget_formulas(T, N):
    assert epoch_round_budget("fednest", T, N) == 2 * T + N + 3
    assert epoch_round_budget("lfednest", T, N) == T + 1
    assert epoch_round_budget("fednest_sgd", T, N) == T + N + 3
    assert epoch_round_budget("lfednest_svrg", T, N) == 2 * T + 1


def test_budget_by_mode():
    assert epoch_round_budget("fednest", 5, 5, "minimax") == 13
    assert epoch_round_budget("fednest", 1, 9, "compositional") == 6
    assert outer_rounds("single-level", 7) == 3
    with pytest.raises(ValueError):
        epoch_round_budget("sgd", 1, 1)


def test_ledger_payload_checks():
    led = RoundLedger(allowed_lengths=(3,))
    np.testing.assert_allclose(led.aggregate([np.ones(3), np.zeros(3)]), 0.5)
    assert led.payloads == 2
    with pytest.raises(PayloadError):
        led.check_payload(np.ones((3, 3)))
    with pytest.raises(PayloadError):
        led.check_payload(np.ones(4))
    with pytest.raises(KeyError):
        led.count("theta")
    with pytest.raises(ValueError):
        led.charge(-1)


def test_pairwise_sum_is_order_stable():
    vs = [np.full(2, 0.1) for _ in range(10)]
    np.testing.assert_allclose(pairwise_sum(vs), 1.0)
    np.testing.assert_allclose(pairwise_mean(vs), 0.1)


def test_manual_schedule_splits_per_client():
    s = stepsize_schedule(0, ScheduleConfig(alpha=0.2, beta=0.4, tau_outer=4, tau_inner=(1, 2)))
    assert s.alpha == 0.2 and s.beta == 0.4
    assert s.alpha_i == pytest.approx(0.05)
    assert s.beta_i == pytest.approx((0.4, 0.2))


def test_sqrt_k_decay():
    s = stepsize_schedule(0, ScheduleConfig(K=100, alpha=1.0, beta=2.0, sqrt_k_decay=True))
    assert (s.alpha, s.beta) == pytest.approx((0.1, 0.2))


@pytest.mark.parametrize("spec,kind", [
    (BilevelQuadraticSpec(), "bilevel"), (MinimaxQuadraticSpec(), "minimax"),
    (CompositionalSpec(), "compositional"), (SingleLevelSpec(), "single-level")])
def test_theory_schedule_is_positive_and_decays(spec, kind):
    inst = make_problem(spec)
    a = [stepsize_schedule(0, ScheduleConfig(K=K, mode="theory"), inst.constants, kind,
                           inst.noise) for K in (1, 10**4, 10**8)]
    assert all(s.alpha > 0 and s.beta >= 0 for s in a)
    assert a[0].alpha >= a[1].alpha >= a[2].alpha


def test_theory_alpha_takes_min_of_bounds():
    inst = make_bilevel_quadratic(BilevelQuadraticSpec())
    sc = schedule_constants(inst.constants, "bilevel", inst.noise, T=2)
    for K in (1, 100, 10**6):
        assert sc.alpha_k(K) == min(sc.alpha1, sc.alpha2, sc.alpha3, sc.alpha_bar / math.sqrt(K))
        assert sc.beta_k(K) == pytest.approx(sc.beta_bar * sc.alpha_k(K) / 2)


def test_single_level_bound():
    inst = make_problem(SingleLevelSpec(curvature_spread=1.0))
    sc = schedule_constants(inst.constants, "single-level", inst.noise)
    L = inst.constants.ell_f1
    assert sc.alpha1 == pytest.approx(1 / (3 * L * (1 + 8 * L)))


def test_theory_needs_constants():
    with pytest.raises(ConfigError):
        stepsize_schedule(0, ScheduleConfig(mode="theory"))
    with pytest.raises(ConfigError):
        stepsize_schedule(-1, ScheduleConfig())


@pytest.mark.parametrize("kw", [dict(K=-1), dict(T=0), dict(N=0), dict(mode="adaptive"),
                                dict(alpha=0.0), dict(tau_inner=0), dict(participation=0),
                                dict(alpha_bar=-1.0)])
def test_schedule_validation(kw):
    with pytest.raises(ConfigError):
        ScheduleConfig(**kw)


def test_schedule_lists_become_tuples():
    s = ScheduleConfig(tau_inner=[1, 2, 3])
    assert s.tau_inner == (1, 2, 3)
    assert s.to_dict()["tau_inner"] == [1, 2, 3]
