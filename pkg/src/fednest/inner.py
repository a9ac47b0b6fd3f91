"""Inner-variable solvers: federated SVRG rounds and plain local SGD rounds."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np

from .exceptions import ConfigError, DivergenceError
from .ledger import ensure_ledger
from .participation import check_taus, per_client, select_clients

DIVERGENCE_LIMIT = 1e12


@dataclass(frozen=True)
class InnerStepConfig:
    """Stepsizes and local step counts for one inner round.

    ``beta_i`` defaults to ``beta / tau_i``; ``beta_overrides`` may pin a
    different value for selected clients as long as it stays in ``(0, beta]``.
    """

    beta: float
    tau: Union[int, Sequence[int]] = 1
    participation: Optional[int] = None
    beta_overrides: Optional[dict] = None

    def __post_init__(self):
        if not self.beta > 0:
            raise ConfigError("beta must be positive")
        check_taus(self.tau)
        for i, b in (self.beta_overrides or {}).items():
            if not 0 < b <= self.beta:
                raise ConfigError(f"beta override for client {i} must lie in (0, beta]")

    def tau_of(self, i):
        return int(per_client(self.tau, i, "tau"))

    def beta_of(self, i):
        if self.beta_overrides and i in self.beta_overrides:
            return float(self.beta_overrides[i])
        return self.beta / self.tau_of(i)

    def is_feasible(self, ell_g1):
        """Whether ``beta`` satisfies ``0 < beta < min(1/(6 ell_g1), 1)``."""
        return 0 < self.beta < min(1.0 / (6.0 * ell_g1), 1.0)


def guard(v, stepsize, what="y"):
    n = float(np.linalg.norm(v))
    if not np.isfinite(n) or n > DIVERGENCE_LIMIT:
        raise DivergenceError(f"{what} diverged (norm {n:.3g}) with stepsize {stepsize:g}",
                              stepsize=stepsize)
    return v


def fedinn_round(p, clients, cfg: InnerStepConfig, rng, ledger=None):
    """One FedInn round; returns the aggregated inner iterate.

    Each local correction evaluates the sample ``zeta_{i,nu}`` at the local
    iterate and at the anchor ``y`` by replaying the same stream path.
    Charges two rounds: one for the anchor gradient, one for the models.
    """
    x, y = np.asarray(p[0], float), np.asarray(p[1], float)
    ledger = ensure_ledger(ledger, len(x), len(y))
    S = select_clients(clients, cfg.participation, rng.child("participation"))
    q = ledger.aggregate([c.sample_inner_grad((x, y), rng.child("anchor", c.index)) for c in S])
    ledger.count("zeta_grad", len(S))
    finals = []
    for c in S:
        b = cfg.beta_of(c.index)
        yi = y.copy()
        for nu in range(cfg.tau_of(c.index)):
            g_local = c.sample_inner_grad((x, yi), rng.child("local", c.index, nu))
            g_anchor = c.sample_inner_grad((x, y), rng.child("local", c.index, nu))
            yi = yi - b * (g_local - g_anchor + q)
            ledger.count("zeta_grad")
        finals.append(guard(yi, b))
    out = ledger.aggregate(finals)
    ledger.charge(2)
    return out


def lfedinn_round(p, clients, cfg: InnerStepConfig, rng, ledger=None):
    """One round of uncorrected local SGD on ``y`` followed by averaging."""
    x, y = np.asarray(p[0], float), np.asarray(p[1], float)
    ledger = ensure_ledger(ledger, len(x), len(y))
    S = select_clients(clients, cfg.participation, rng.child("participation"))
    finals = []
    for c in S:
        b = cfg.beta_of(c.index)
        yi = y.copy()
        for nu in range(cfg.tau_of(c.index)):
            yi = yi - b * c.sample_inner_grad((x, yi), rng.child("local", c.index, nu))
            ledger.count("zeta_grad")
        finals.append(guard(yi, b))
    out = ledger.aggregate(finals)
    ledger.charge(1)
    return out


def local_sgd_fixed_point(instance, x, cfg: InnerStepConfig):
    """Closed-form limit of repeated noiseless :func:`lfedinn_round` calls.

    Each client's ``tau`` local gradient steps form an affine map
    ``y -> A_i y + r_i``; the round map is their average, whose fixed point
    is returned. Differs from ``y*(x)`` whenever clients disagree.
    """
    d2 = instance.d2
    A_bar = np.zeros((d2, d2))
    r_bar = np.zeros(d2)
    for c in instance.clients:
        b = cfg.beta_of(c.index)
        step = np.eye(d2) - b * c.Q
        shift = -b * (c.P @ x + c.c)
        A, r = np.eye(d2), np.zeros(d2)
        for _ in range(cfg.tau_of(c.index)):
            A, r = step @ A, step @ r + shift
        A_bar += A
        r_bar += r
    m = len(instance.clients)
    return np.linalg.solve(np.eye(d2) - A_bar / m, r_bar / m)
