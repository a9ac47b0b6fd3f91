"""End-to-end acceptance checks with pinned tolerances.

Each test prints one PASS/FAIL line; the lines are collected again in the
terminal summary.
"""
import json
import time

import numpy as np

from fednest import (BilevelQuadraticSpec, ScheduleConfig, make_bilevel_quadratic, run_fednest)
from fednest.cli import cli_main
from fednest.config import config_from_dict, run_config
from fednest.verify import (check_finite_differences, check_neumann_bias, contraction_ratios,
                            drift_limits, hypergrad_bias_measurements, single_level_limit,
                            check_ledger)
from fednest.zoo import make_single_level, SingleLevelSpec

from conftest import random_start

NEUMANN_RUNTIME_S = 10.0
FD_REL_TOL = 1e-6
CONTRACTION_SLACK = 1e-12
DRIFT_LOCAL_FLOOR = 1e-3
DRIFT_SVRG_CEILING = 1e-10
MINIMAX_TARGET = 1e-6
MINIMAX_RUNTIME_S = 5.0
RATE_SLOPE = (-1.4, -0.6)
RATE_RUNTIME_S = 120.0
SINGLE_LEVEL_TOL = 1e-10


def test_criterion_1_neumann_bias_exact(report):
    r = check_neumann_bias(n_instances=10, kappas=(1.5, 2, 5, 10), N_max=30)
    ok = r.passed and r.seconds < NEUMANN_RUNTIME_S
    assert report(1, "Neumann bias bound (exact rational)", ok, f"{r.detail}; {r.seconds:.2f}s")


def test_criterion_2_hypergradient_bias(report):
    inst = make_bilevel_quadratic(BilevelQuadraticSpec())
    rows = hypergrad_bias_measurements(inst, Ns=(5, 10, 20), n_points=5)
    fd = check_finite_differences(tol=FD_REL_TOL)
    ok = all(agg <= b and cl <= b for _, agg, cl, b in rows) and fd.passed
    detail = "; ".join(f"N={n} client gap {cl:.1e} <= {b:.2e}" for n, _, cl, b in rows)
    assert report(2, "hypergradient bias and finite differences", ok,
                  f"{detail}; FD rel gaps {fd.detail}")


def test_criterion_3_fedinn_contraction(report):
    inst = make_bilevel_quadratic(BilevelQuadraticSpec())
    c = inst.constants
    beta = 0.9 / (6 * c.ell_g1)
    x = np.random.default_rng(1).standard_normal(inst.d1)
    ratios = contraction_ratios(inst, x, beta, rounds=100)
    bound = 1 - beta * c.mu_g / 2
    ok = len(ratios) == 100 and max(ratios) <= bound + CONTRACTION_SLACK
    assert report(3, "FedInn per-round contraction", ok,
                  f"max ratio {max(ratios):.6f} vs bound {bound:.6f} (beta={beta:.4g})")


def test_criterion_4_client_drift_separation(report):
    d = drift_limits(tau=10)
    ok = d["lfedinn"] > DRIFT_LOCAL_FLOOR and d["fedinn"] <= DRIFT_SVRG_CEILING
    assert report(4, "client-drift separation", ok,
                  f"LFedInn {d['lfedinn']:.3e} > {DRIFT_LOCAL_FLOOR:g}, "
                  f"FedInn {d['fedinn']:.1e} <= {DRIFT_SVRG_CEILING:g}")


def _final_error(trace):
    f = trace.final
    return f["x_err_sq"] + f["y_err_sq"]


def test_criterion_5_minimax_reproduction(report):
    t0 = time.perf_counter()
    traces = {}
    for alg in ("fednest", "lfednest", "fedavg_s"):
        cfg = config_from_dict({"algorithm": alg, "problem": "minimax-quadratic", "seed": 1})
        traces[alg] = run_config(cfg)
    elapsed = time.perf_counter() - t0
    spec = cfg.problem
    assert (spec.d, spec.m, spec.lam, spec.t_max, spec.sigma, spec.seed) == (10, 20, 10, 0.1, 0, 1)
    assert cfg.schedule.K == 200
    fn = traces["fednest"].final
    e_fn, e_l, e_avg = (_final_error(traces[a]) for a in ("fednest", "lfednest", "fedavg_s"))
    reached = fn["x_err_sq"] <= MINIMAX_TARGET and fn["y_err_sq"] <= MINIMAX_TARGET
    between = e_fn <= e_l <= e_avg or (abs(e_l - e_fn) <= MINIMAX_TARGET * 1e-6 and e_l < e_avg)
    ok = reached and e_avg > e_fn and between and elapsed < MINIMAX_RUNTIME_S
    assert report(5, "minimax linear convergence", ok,
                  f"FedNest x {fn['x_err_sq']:.2e} y {fn['y_err_sq']:.2e}; final errors "
                  f"FedNest {e_fn:.2e}, LFedNest {e_l:.2e}, FedAvg-S {e_avg:.2e}; {elapsed:.2f}s")


def test_criterion_6_round_ledger(report):
    r = check_ledger(pairs=((1, 1), (5, 5), (10, 3)), epochs=4)
    assert report(6, "round-ledger exactness", r.passed, r.detail)


RATE_SPEC = BilevelQuadraticSpec(m=4, d1=5, d2=5, seed=0, sigma_f=0.5, sigma_g1=0.5, sigma_g2=0.5)


def rate_curve(Ks=(64, 256, 1024), seeds=range(10)):
    inst = make_bilevel_quadratic(RATE_SPEC)
    means = []
    for K in Ks:
        sched = ScheduleConfig(K=K, T=1, N=3, alpha=1.0, beta=1.0, sqrt_k_decay=True)
        best = []
        for s in seeds:
            x0, y0 = random_start(s, inst.d1, inst.d2)
            best.append(run_fednest(inst, sched, seed=s, x0=x0, y0=y0).best("grad_norm_sq"))
        means.append(float(np.mean(best)))
    slope = float(np.polyfit(np.log(Ks), np.log(means), 1)[0])
    return means, slope


def test_criterion_7_rate_trend(report):
    t0 = time.perf_counter()
    means, slope = rate_curve()
    elapsed = time.perf_counter() - t0
    ok = RATE_SLOPE[0] <= slope <= RATE_SLOPE[1] and elapsed < RATE_RUNTIME_S
    assert report(7, "noisy bilevel rate trend", ok,
                  f"mean best |grad|^2 {[f'{v:.3e}' for v in means]}; slope {slope:.3f} "
                  f"in {list(RATE_SLOPE)}; {elapsed:.1f}s")


def test_criterion_8_single_level_no_drift(report):
    inst = make_single_level(SingleLevelSpec(heterogeneity=1.0))
    gaps = {}
    for tau in (1, 4, 16):
        x, target = single_level_limit(tau, instance=inst)
        gaps[tau] = float(np.linalg.norm(x - target))
    ok = all(g <= SINGLE_LEVEL_TOL for g in gaps.values())
    assert report(8, "single-level fixed point is the mean", ok,
                  ", ".join(f"tau={t}: {g:.1e}" for t, g in gaps.items()))


def test_criterion_9_determinism(report, tmp_path):
    cfg_path = tmp_path / "run.json"
    cfg_path.write_text(json.dumps({"algorithm": "fednest", "problem": "bilevel-quadratic",
                                    "seed": 7, "schedule": {"K": 20}}))
    outs = []
    for name in ("a", "b"):
        code = cli_main(["run", "--config", str(cfg_path), "--out", str(tmp_path / name)])
        assert code == 0
        outs.append((tmp_path / name / "trace.csv").read_bytes())
    ok = outs[0] == outs[1] and len(outs[0]) > 0
    assert report(9, "repeated run is byte-identical", ok, f"{len(outs[0])} bytes each")
