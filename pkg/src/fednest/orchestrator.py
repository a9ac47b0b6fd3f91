"""Epoch drivers: FedNest, its light variants, and two comparison baselines.

One epoch runs ``T`` inner rounds followed by one outer round. Clients
taking part in an epoch are drawn once per epoch and shared by the inner
and outer updates of that epoch.
"""
from __future__ import annotations

import numpy as np

from .exceptions import ConfigError, DivergenceError, UnsupportedConfiguration
from .hypergrad import IhgpConfig, local_ihgp
from .inner import InnerStepConfig, fedinn_round, guard, lfedinn_round
from .ledger import ALGORITHMS, RoundLedger, epoch_round_budget
from .outer import OuterStepConfig, outer_update
from .participation import select_clients
from .rng import as_stream
from .schedule import ScheduleConfig, effective_T, stepsize_schedule
from .trace import RunTrace, epoch_metrics

VARIANTS = tuple(ALGORITHMS)


def _recorded(k, K, stride):
    return k == 0 or k == K or k % stride == 0


def _setup(instance, schedule):
    kind = instance.kind
    steps = stepsize_schedule(0, schedule, instance.constants, kind, instance.noise)
    inner = InnerStepConfig(beta=steps.beta, tau=schedule.tau_inner)
    outer = OuterStepConfig(alpha=steps.alpha, tau=schedule.tau_outer, mode=kind,
                            coupling=schedule.coupling)
    ihgp = None
    if kind in ("bilevel", "compositional"):
        ihgp = IhgpConfig.from_constants(schedule.N, instance.constants,
                                         schedule.ihgp_participation, schedule.ell_override)
    return steps, inner, outer, ihgp


def _initial(instance, x0, y0):
    x = np.zeros(instance.d1) if x0 is None else np.array(x0, dtype=float)
    y = np.zeros(instance.d2) if y0 is None else np.array(y0, dtype=float)
    if x.shape != (instance.d1,) or y.shape != (instance.d2,):
        raise ConfigError("initial point has the wrong dimension")
    return x, y


def run_variant(kind, instance, schedule: ScheduleConfig, seed=0, x0=None, y0=None,
                metric_stride=1, config_echo=None):
    """Run one of ``fednest``, ``lfednest``, ``fednest_sgd``, ``lfednest_svrg``.

    The variant fixes the inner solver (SVRG or local SGD) and whether the
    outer update is corrected-global or fully local. Returns a
    :class:`~fednest.trace.RunTrace` whose epoch 0 is the initial point.
    Divergence is re-raised with the epoch index attached.
    """
    if kind not in ALGORITHMS:
        raise ConfigError(f"unknown algorithm {kind!r}; expected one of {VARIANTS}")
    if metric_stride < 1:
        raise ConfigError("metric stride must be >= 1")
    if instance.kind == "single-level" and kind != "fednest":
        raise UnsupportedConfiguration("single-level problems only run the corrected outer loop")
    inner_kind, local_outer = ALGORITHMS[kind]
    inner_round = fedinn_round if inner_kind == "svrg" else lfedinn_round
    steps, inner_cfg, outer_cfg, ihgp = _setup(instance, schedule)
    T = effective_T(schedule, instance.kind)
    single = instance.kind == "single-level"
    ell = instance.constants.ell_g1
    root = as_stream(seed).child("run")
    ledger = RoundLedger(allowed_lengths=tuple(d for d in (instance.d1, instance.d2) if d))
    x, y = _initial(instance, x0, y0)
    trace = RunTrace(algorithm=kind, config=config_echo or {})
    trace.record(0, ledger, epoch_metrics(instance, x, y))
    K = schedule.K
    for k in range(K):
        er = root.child("epoch", k)
        S = select_clients(instance.clients, schedule.participation, er.child("participation"))
        charged_before, actual_before = ledger.rounds, ledger.actual_rounds
        try:
            if not single:
                for t in range(T):
                    y = inner_round((x, y), S, inner_cfg, er.child("inner", t), ledger)
            x = outer_update((x, y), outer_cfg, ihgp, S, er.child("outer"), ledger,
                             local=local_outer, ell_g1=ell)
        except DivergenceError as err:
            err.epoch = k
            raise
        if ihgp is not None and instance.kind == "bilevel" and not local_outer:
            # the Neumann chain is the only place charged and actual rounds differ
            skipped = (ledger.rounds - charged_before) - (ledger.actual_rounds - actual_before)
            trace.truncations.append(schedule.N - 1 - skipped)
        if _recorded(k + 1, K, metric_stride):
            trace.record(k + 1, ledger, epoch_metrics(instance, x, y))
    trace.x, trace.y = x, y
    trace.ledger = {**ledger.snapshot(), "epochs": K,
                    "rounds_per_epoch": epoch_budget(kind, instance.kind, schedule),
                    "alpha": steps.alpha, "beta": steps.beta}
    return trace


def epoch_budget(kind, problem_kind, schedule):
    """Rounds one epoch of ``kind`` charges on a problem of ``problem_kind``."""
    if problem_kind == "single-level":
        return epoch_round_budget(kind, 0, schedule.N, "single-level")
    return epoch_round_budget(kind, effective_T(schedule, problem_kind), schedule.N, problem_kind)


def run_fednest(instance, schedule, seed=0, **kw):
    """FedNest: SVRG inner rounds and corrected outer rounds."""
    return run_variant("fednest", instance, schedule, seed, **kw)


def _require_minimax(instance, what):
    if instance.kind != "minimax":
        raise UnsupportedConfiguration(f"{what} is only defined for minimax problems")


def run_fedavg_s(instance, schedule: ScheduleConfig, seed=0, x0=None, y0=None, metric_stride=1,
                 config_echo=None):
    """Simultaneous local gradient descent-ascent with server averaging.

    Each participating client takes ``tau_outer`` steps of size
    ``alpha / tau_outer`` on both variables from one shared sample per
    step, descending in ``x`` and ascending in ``y``. One round per epoch.
    """
    _require_minimax(instance, "FedAvg-S")
    alpha = stepsize_schedule(0, schedule, instance.constants, "minimax", instance.noise).alpha
    root = as_stream(seed).child("run")
    ledger = RoundLedger(allowed_lengths=(instance.d1, instance.d2))
    x, y = _initial(instance, x0, y0)
    trace = RunTrace(algorithm="fedavg_s", config=config_echo or {})
    trace.record(0, ledger, epoch_metrics(instance, x, y))
    tau = schedule.tau_outer
    for k in range(schedule.K):
        er = root.child("epoch", k)
        S = select_clients(instance.clients, schedule.participation, er.child("participation"))
        xs, ys = [], []
        for c in S:
            t = int(tau if np.ndim(tau) == 0 else tau[c.index])
            a = alpha / t
            xi, yi = x.copy(), y.copy()
            for nu in range(t):
                gx, gy = c.sample_outer_grads((xi, yi), er.child("local", c.index, nu))
                xi, yi = xi - a * gx, yi + a * gy
                ledger.count("xi")
            try:
                xs.append(guard(xi, a, "x"))
                ys.append(guard(yi, a, "y"))
            except DivergenceError as err:
                err.epoch = k
                raise
        x, y = ledger.aggregate(xs), ledger.aggregate(ys)
        ledger.charge(1)
        if _recorded(k + 1, schedule.K, metric_stride):
            trace.record(k + 1, ledger, epoch_metrics(instance, x, y))
    trace.x, trace.y = x, y
    trace.ledger = {**ledger.snapshot(), "epochs": schedule.K, "rounds_per_epoch": 1,
                    "alpha": alpha}
    return trace


def run_nonalternating(instance, schedule: ScheduleConfig, seed=0, x0=None, y0=None,
                       metric_stride=1, config_echo=None):
    """Control run that skips the inner/outer synchronisation.

    Each client runs ``T * tau_inner`` local inner steps, then
    ``tau_outer`` local outer steps against its own local ``y``; the server
    averages ``x`` and ``y`` once. One round per epoch.
    """
    if instance.kind == "single-level":
        raise UnsupportedConfiguration("the non-alternating control needs an inner variable")
    steps, inner_cfg, outer_cfg, ihgp = _setup(instance, schedule)
    T = effective_T(schedule, instance.kind)
    root = as_stream(seed).child("run")
    ledger = RoundLedger(allowed_lengths=(instance.d1, instance.d2))
    x, y = _initial(instance, x0, y0)
    trace = RunTrace(algorithm="lfednest_nonalt", config=config_echo or {})
    trace.record(0, ledger, epoch_metrics(instance, x, y))
    for k in range(schedule.K):
        er = root.child("epoch", k)
        S = select_clients(instance.clients, schedule.participation, er.child("participation"))
        xs, ys = [], []
        for c in S:
            b, a = inner_cfg.beta_of(c.index), outer_cfg.alpha_of(c.index)
            yi = y.copy()
            for t in range(T):
                for nu in range(inner_cfg.tau_of(c.index)):
                    yi = yi - b * c.sample_inner_grad((x, yi), er.child("inner", t, c.index, nu))
                    ledger.count("zeta_grad")
            xi = x.copy()
            for nu in range(outer_cfg.tau_of(c.index)):
                xi = xi - a * local_ihgp(c, (xi, yi), ihgp, er.child("outer", c.index, nu),
                                         instance.kind, ledger)
            try:
                xs.append(guard(xi, a, "x"))
                ys.append(guard(yi, b, "y"))
            except DivergenceError as err:
                err.epoch = k
                raise
        x, y = ledger.aggregate(xs), ledger.aggregate(ys)
        ledger.charge(1)
        if _recorded(k + 1, schedule.K, metric_stride):
            trace.record(k + 1, ledger, epoch_metrics(instance, x, y))
    trace.x, trace.y = x, y
    trace.ledger = {**ledger.snapshot(), "epochs": schedule.K, "rounds_per_epoch": 1,
                    "alpha": steps.alpha, "beta": steps.beta}
    return trace


BASELINES = {"fedavg_s": run_fedavg_s, "lfednest_nonalt": run_nonalternating}
ALL_ALGORITHMS = VARIANTS + tuple(BASELINES)


def run_algorithm(name, instance, schedule, seed=0, **kw):
    """Dispatch by algorithm name, covering variants and baselines."""
    if name in BASELINES:
        return BASELINES[name](instance, schedule, seed, **kw)
    return run_variant(name, instance, schedule, seed, **kw)


__all__ = ["run_variant", "run_fednest", "run_fedavg_s", "run_nonalternating", "run_algorithm",
           "epoch_budget", "VARIANTS", "ALL_ALGORITHMS"]
