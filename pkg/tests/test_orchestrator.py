import numpy as np
import pytest

from fednest import (BilevelQuadraticSpec, CompositionalSpec, MinimaxQuadraticSpec, ScheduleConfig,
                     SingleLevelSpec, make_bilevel_quadratic, make_compositional,
                     make_minimax_quadratic, make_single_level, run_algorithm, run_fedavg_s,
                     run_fednest, run_nonalternating, run_variant)
from fednest.exceptions import ConfigError, DivergenceError, UnsupportedConfiguration
from fednest.orchestrator import ALL_ALGORITHMS

from conftest import random_start

SMALL_BILEVEL = BilevelQuadraticSpec(m=3, d1=3, d2=3)


@pytest.fixture(scope="module")
def bilevel():
    return make_bilevel_quadratic(SMALL_BILEVEL)


def test_k_zero_gives_single_row(bilevel):
    tr = run_fednest(bilevel, ScheduleConfig(K=0))
    assert len(tr.records) == 1 and tr.records[0]["epoch"] == 0 and tr.records[0]["rounds"] == 0


@pytest.mark.parametrize("kind", ["fednest", "lfednest", "fednest_sgd", "lfednest_svrg"])
def test_variants_converge_on_homogeneous_problem(kind):
    inst = make_bilevel_quadratic(BilevelQuadraticSpec(m=3, d1=3, d2=3, heterogeneity=0.0))
    x0, y0 = random_start(0, 3, 3)
    tr = run_variant(kind, inst, ScheduleConfig(K=150, T=3, N=10, tau_inner=2, tau_outer=2,
                                                alpha=0.05, beta=0.1), x0=x0, y0=y0)
    assert tr.final["grad_norm_sq"] < 1e-2 * tr.records[0]["grad_norm_sq"]


def test_fednest_solves_heterogeneous_bilevel(bilevel):
    x0, y0 = random_start(0, 3, 3)
    # the random truncation adds variance even without oracle noise, so only a
    # neighbourhood of the solution is reached at a constant stepsize
    tr = run_fednest(bilevel, ScheduleConfig(K=200, T=5, N=30, tau_inner=2, tau_outer=2,
                                             alpha=0.2, beta=0.1), x0=x0, y0=y0)
    assert tr.final["x_err_sq"] < 1e-2 * tr.records[0]["x_err_sq"]


def test_cumulative_fields_nondecreasing(bilevel):
    tr = run_fednest(bilevel, ScheduleConfig(K=10, T=2, N=3))
    for col in ("rounds", "samples_xi", "samples_zeta_grad", "samples_zeta_hess", "samples_zeta_jac"):
        assert np.all(np.diff(tr.column(col)) >= 0)
    assert list(tr.column("epoch")) == list(range(11))
    assert tr.final["rounds"] == 10 * (2 * 2 + 3 + 3)


def test_metric_stride_keeps_endpoints(bilevel):
    tr = run_fednest(bilevel, ScheduleConfig(K=10), metric_stride=4)
    assert [r["epoch"] for r in tr.records] == [0, 4, 8, 10]
    with pytest.raises(ConfigError):
        run_fednest(bilevel, ScheduleConfig(K=1), metric_stride=0)


def test_actual_rounds_track_truncations(bilevel):
    tr = run_fednest(bilevel, ScheduleConfig(K=20, T=1, N=6))
    assert len(tr.truncations) == 20
    assert all(0 <= n <= 5 for n in tr.truncations)
    assert tr.ledger["rounds"] - tr.ledger["actual_rounds"] == sum(5 - n for n in tr.truncations)
    assert tr.ledger["actual_rounds"] <= tr.ledger["rounds"]


def test_minimax_preset_regression():
    inst = make_minimax_quadratic(MinimaxQuadraticSpec())
    x0, y0 = random_start(1, 10, 10)
    sched = ScheduleConfig(K=200, T=5, N=5, tau_inner=2, tau_outer=2, alpha=0.05, beta=0.1)
    fn = run_fednest(inst, sched, seed=1, x0=x0, y0=y0)
    avg = run_fedavg_s(inst, sched, seed=1, x0=x0, y0=y0)
    assert fn.final["x_err_sq"] <= 1e-6 and fn.final["y_err_sq"] <= 1e-6
    assert avg.final["x_err_sq"] + avg.final["y_err_sq"] > fn.final["x_err_sq"] + fn.final["y_err_sq"]
    xs = fn.column("x_err_sq")
    assert xs[-1] < xs[0] * 1e-20


def test_baselines_run_and_charge_one_round():
    inst = make_minimax_quadratic(MinimaxQuadraticSpec(m=4, d=3))
    sched = ScheduleConfig(K=5, T=2, tau_inner=2, tau_outer=2)
    for fn in (run_fedavg_s, run_nonalternating):
        assert fn(inst, sched).final["rounds"] == 5


def test_baselines_refuse_unsupported_problems(bilevel):
    with pytest.raises(UnsupportedConfiguration):
        run_fedavg_s(bilevel, ScheduleConfig(K=1))
    with pytest.raises(UnsupportedConfiguration):
        run_nonalternating(make_single_level(SingleLevelSpec()), ScheduleConfig(K=1))
    with pytest.raises(UnsupportedConfiguration):
        run_variant("lfednest", make_single_level(SingleLevelSpec()), ScheduleConfig(K=1))


def test_single_level_and_compositional_runs():
    sl = make_single_level(SingleLevelSpec())
    tr = run_fednest(sl, ScheduleConfig(K=100, tau_outer=4, alpha=0.5))
    assert tr.final["x_err_sq"] < 1e-20 and np.isnan(tr.final["y_err_sq"])
    comp = make_compositional(CompositionalSpec(m=3))
    tr = run_fednest(comp, ScheduleConfig(K=300, T=1, alpha=0.5, beta=0.5, tau_inner=2))
    assert tr.final["grad_norm_sq"] < 1e-6


def test_divergence_reports_epoch(bilevel):
    with pytest.raises(DivergenceError) as info:
        run_fednest(bilevel, ScheduleConfig(K=200, T=1, alpha=50.0, beta=0.1, tau_outer=10))
    assert info.value.epoch is not None


def test_same_seed_same_trace(bilevel):
    noisy = make_bilevel_quadratic(BilevelQuadraticSpec(m=3, d1=3, d2=3, sigma_f=0.3, sigma_g1=0.3))
    sched = ScheduleConfig(K=15, T=2, N=4, participation=2)
    a, b = run_fednest(noisy, sched, seed=4), run_fednest(noisy, sched, seed=4)
    assert a.to_csv() == b.to_csv()
    assert a.to_csv() != run_fednest(noisy, sched, seed=5).to_csv()


def test_dispatch_and_bad_names(bilevel):
    assert set(ALL_ALGORITHMS) >= {"fednest", "fedavg_s", "lfednest_nonalt"}
    with pytest.raises(ConfigError):
        run_algorithm("adam", bilevel, ScheduleConfig(K=1))


def test_wrong_initial_dimension(bilevel):
    with pytest.raises(ConfigError):
        run_fednest(bilevel, ScheduleConfig(K=1), x0=np.zeros(7))
