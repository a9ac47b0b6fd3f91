"""Outer-variable updates with SVRG-style correction of the direct gradient."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np

from .exceptions import ConfigError, UnsupportedConfiguration
from .hypergrad import IhgpConfig, fedihgp, indirect_grad, local_ihgp
from .inner import guard
from .ledger import ensure_ledger
from .oracles import KINDS
from .participation import check_taus, per_client, select_clients

COUPLINGS = ("shared", "stale")


@dataclass(frozen=True)
class OuterStepConfig:
    """Outer stepsize, local steps and problem mode.

    ``coupling="shared"`` evaluates the correction anchor with the same
    sample as the local gradient. ``"stale"`` reuses the direct gradient
    sampled at the start of the round as the anchor instead.
    """

    alpha: float
    tau: Union[int, Sequence[int]] = 1
    mode: str = "bilevel"
    participation: Optional[int] = None
    coupling: str = "shared"
    alpha_overrides: Optional[dict] = None

    def __post_init__(self):
        if not self.alpha > 0:
            raise ConfigError("alpha must be positive")
        if self.mode not in KINDS:
            raise ConfigError(f"unknown mode {self.mode!r}")
        if self.coupling not in COUPLINGS:
            raise ConfigError(f"coupling must be one of {COUPLINGS}")
        check_taus(self.tau)
        for i, a in (self.alpha_overrides or {}).items():
            if not 0 < a <= self.alpha:
                raise ConfigError(f"alpha override for client {i} must lie in (0, alpha]")

    def tau_of(self, i):
        return int(per_client(self.tau, i, "tau"))

    def alpha_of(self, i):
        if self.alpha_overrides and i in self.alpha_overrides:
            return float(self.alpha_overrides[i])
        return self.alpha / self.tau_of(i)


def _direct(client, x, y, rng):
    return client.sample_outer_grads((x, y), rng)[0]


def _corrected_local_loop(S, x, h, anchors, grad_at, cfg, rng, ledger):
    """Run ``x_{i,nu+1} = x_{i,nu} - alpha_i (F_i(x_{i,nu}) - F_i(x) + h)``.

    ``grad_at(client, point, stream)`` returns one sample of ``F_i``;
    ``anchors[i]`` holds the round-start sample used by the stale coupling.
    """
    finals = []
    for c in S:
        a = cfg.alpha_of(c.index)
        xi = x.copy()
        for nu in range(cfg.tau_of(c.index)):
            path = ("local", c.index, nu)
            g_local = grad_at(c, xi, rng.child(*path))
            if cfg.coupling == "shared":
                g_anchor = grad_at(c, x, rng.child(*path))
            else:
                g_anchor = anchors[c.index]
            xi = xi - a * (g_local - g_anchor + h)
            ledger.count("xi")
        finals.append(guard(xi, a, "x"))
    return ledger.aggregate(finals)


def fedout_round(p, cfg: OuterStepConfig, ihgp: Optional[IhgpConfig], clients, rng,
                 ledger=None, n_prime=None):
    """One FedOut round in bilevel or minimax mode; returns the new ``x``.

    Bilevel mode charges ``N + 3`` rounds (Neumann chain plus three
    aggregations), minimax mode charges 3.
    """
    if cfg.mode not in ("bilevel", "minimax"):
        raise UnsupportedConfiguration(f"fedout_round does not handle mode {cfg.mode!r}")
    x, y = np.asarray(p[0], float), np.asarray(p[1], float)
    ledger = ensure_ledger(ledger, len(x), len(y))
    S = select_clients(clients, cfg.participation, rng.child("participation"))
    anchors = {c.index: _direct(c, x, y, rng.child("direct", c.index)) for c in S}
    ledger.count("xi", len(S))
    if cfg.mode == "bilevel":
        if ihgp is None:
            raise ConfigError("bilevel mode needs an IhgpConfig")
        pvec = fedihgp((x, y), ihgp, S, rng.child("ihgp"), ledger, n_prime=n_prime)
        h_parts = [anchors[c.index] + indirect_grad(c, (x, y), pvec, rng.child("jac", c.index), ledger)
                   for c in S]
    else:
        h_parts = [anchors[c.index] for c in S]
    h = ledger.aggregate(h_parts)
    out = _corrected_local_loop(S, x, h, anchors, lambda c, z, r: _direct(c, z, y, r),
                                cfg, rng, ledger)
    ledger.charge(3)
    return out


def fedout_compositional_round(p, cfg: OuterStepConfig, clients, rng, ell_g1=1.0, ledger=None):
    """Outer round for compositional problems (identity inner Hessian).

    Only the first Neumann term is needed: ``p_0 = (1/ell) mean grad f_i(y)``
    and ``h_i = ell * grad r_i(x)' p_0``. Charges 4 rounds.
    """
    x, y = np.asarray(p[0], float), np.asarray(p[1], float)
    ledger = ensure_ledger(ledger, len(x), len(y))
    S = select_clients(clients, cfg.participation, rng.child("participation"))
    grads = [c.sample_outer_grads((x, y), rng.child("grad", c.index)) for c in S]
    ledger.count("xi", len(S))
    p0 = ledger.aggregate([g[1] for g in grads]) / ell_g1
    anchors = {c.index: g[0] for c, g in zip(S, grads)}
    h_parts = [anchors[c.index] + ell_g1 * indirect_grad(c, (x, y), p0, rng.child("jac", c.index), ledger)
               for c in S]
    h = ledger.aggregate(h_parts)
    out = _corrected_local_loop(S, x, h, anchors, lambda c, z, r: _direct(c, z, y, r),
                                cfg, rng, ledger)
    ledger.charge(4)
    return out


def lfedout_round(p, cfg: OuterStepConfig, ihgp: Optional[IhgpConfig], clients, rng, ledger=None):
    """Fully local outer round: each client uses only its own oracles. One round."""
    x, y = np.asarray(p[0], float), np.asarray(p[1], float)
    ledger = ensure_ledger(ledger, len(x), len(y))
    if cfg.mode == "bilevel" and ihgp is None:
        raise ConfigError("bilevel mode needs an IhgpConfig")
    S = select_clients(clients, cfg.participation, rng.child("participation"))
    finals = []
    for c in S:
        a = cfg.alpha_of(c.index)
        xi = x.copy()
        for nu in range(cfg.tau_of(c.index)):
            h = local_ihgp(c, (xi, y), ihgp, rng.child("local", c.index, nu), cfg.mode, ledger)
            xi = xi - a * h
        finals.append(guard(xi, a, "x"))
    out = ledger.aggregate(finals)
    ledger.charge(1)
    return out


def fedout_single_level_round(x, cfg: OuterStepConfig, clients, rng, ledger=None):
    """Corrected local gradient steps on ``min_x mean_i f_i(x)``. Charges 3 rounds."""
    x = np.asarray(x, float)
    ledger = ensure_ledger(ledger, len(x))
    S = select_clients(clients, cfg.participation, rng.child("participation"))
    anchors = {c.index: c.sample_grad(x, rng.child("direct", c.index)) for c in S}
    ledger.count("xi", len(S))
    h = ledger.aggregate([anchors[c.index] for c in S])
    out = _corrected_local_loop(S, x, h, anchors, lambda c, z, r: c.sample_grad(z, r),
                                cfg, rng, ledger)
    ledger.charge(3)
    return out


def outer_update(p, cfg, ihgp, clients, rng, ledger=None, local=False, ell_g1=1.0):
    """Dispatch to the outer update matching ``cfg.mode`` and ``local``."""
    if local:
        return lfedout_round(p, cfg, ihgp, clients, rng, ledger)
    if cfg.mode == "compositional":
        return fedout_compositional_round(p, cfg, clients, rng, ell_g1, ledger)
    if cfg.mode == "single-level":
        return fedout_single_level_round(p[0], cfg, clients, rng, ledger)
    return fedout_round(p, cfg, ihgp, clients, rng, ledger)
