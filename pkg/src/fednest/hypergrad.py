"""Federated inverse-Hessian-gradient products and hypergradient pieces.

The inverse Hessian is replaced by a randomly truncated Neumann series,

    H^{-1} ~ (N / ell) * prod_{n=1}^{N'} (I - H_n / ell),   N' ~ U{0..N-1},

whose expectation over ``N'`` is ``(1/ell) sum_{n<N} (I - H/ell)^n``. Only
Hessian-vector products are ever formed and only vectors are aggregated.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .exceptions import ConfigError, UnsupportedConfiguration
from .ledger import ensure_ledger
from .participation import select_clients


@dataclass(frozen=True)
class IhgpConfig:
    """Neumann budget ``N``, series scale ``ell_g1`` and subset size ``|S_n|``."""

    N: int
    ell_g1: float
    participation: Optional[int] = None

    def __post_init__(self):
        if int(self.N) != self.N or self.N < 1:
            raise ConfigError("Neumann budget N must be an integer >= 1")
        if not self.ell_g1 > 0:
            raise ConfigError("ell_g1 must be positive")
        if self.participation is not None and self.participation < 1:
            raise ConfigError("participation must be >= 1 (empty client subset)")

    @classmethod
    def from_constants(cls, N, constants, participation=None, ell_override=None):
        ell = constants.ell_g1 if ell_override is None else ell_override
        if ell < constants.ell_g1:
            warnings.warn(f"series scale {ell:g} is below the largest inner Hessian "
                          f"eigenvalue {constants.ell_g1:g}; the Neumann factor may expand",
                          RuntimeWarning, stacklevel=2)
        return cls(N=int(N), ell_g1=float(ell), participation=participation)


def bias_budget(kappa_g, ell_f1, N):
    """``kappa_g * ell_f1 * ((kappa_g - 1) / kappa_g) ** N``."""
    if kappa_g < 1:
        raise ValueError("kappa_g must be >= 1")
    return float(kappa_g * ell_f1 * ((kappa_g - 1.0) / kappa_g) ** N)


@dataclass(frozen=True)
class HypergradEstimate:
    """Direct and indirect parts of one client's surrogate hypergradient."""

    direct: np.ndarray
    indirect: np.ndarray
    bias_budget: float = 0.0

    @property
    def total(self):
        return self.direct + self.indirect


def draw_truncation(cfg: IhgpConfig, rng):
    return int(rng.integers(0, cfg.N))


def fedihgp(p, cfg: IhgpConfig, clients, rng, ledger=None, n_prime=None, info=None):
    """Federated estimate ``p_{N'}`` of ``[grad^2_y g]^{-1} grad_y f``.

    ``n_prime`` fixes the truncation instead of drawing it (used to
    enumerate the expectation exactly). The ledger is charged the budget
    ``N``; the ``N' + 1`` rounds actually used go to ``actual_rounds`` and,
    if given, into the ``info`` dict.
    """
    x, y = np.asarray(p[0], float), np.asarray(p[1], float)
    ledger = ensure_ledger(ledger, len(x), len(y))
    if n_prime is None:
        n_prime = draw_truncation(cfg, rng.child("truncation"))
    elif not 0 <= n_prime < cfg.N:
        raise ConfigError(f"n_prime must lie in [0, {cfg.N - 1}]")
    S0 = select_clients(clients, cfg.participation, rng.child("subset", 0))
    grads = [c.sample_outer_grads((x, y), rng.child("grad", c.index))[1] for c in S0]
    ledger.count("xi", len(S0))
    vec = (cfg.N / cfg.ell_g1) * ledger.aggregate(grads)
    for n in range(1, n_prime + 1):
        Sn = select_clients(clients, cfg.participation, rng.child("subset", n))
        parts = [vec - c.sample_hessvec((x, y), vec, rng.child("hess", n, c.index)) / cfg.ell_g1
                 for c in Sn]
        ledger.count("zeta_hess", len(Sn))
        vec = ledger.aggregate(parts)
    ledger.charge(cfg.N, actual=n_prime + 1)
    if info is not None:
        info["n_prime"] = n_prime
    return vec


def indirect_grad(client, p, p_vec, rng, ledger=None):
    """``-grad^2_xy g_i(x, y; zeta_i) @ p_vec`` (length d1)."""
    if ledger is not None:
        ledger.count("zeta_jac")
    return -client.sample_jacvec(p, p_vec, rng)


def local_ihgp(client, p, cfg: IhgpConfig, rng, mode="bilevel", ledger=None, n_prime=None):
    """One client's fully local surrogate gradient, with no communication.

    bilevel: ``grad_x f_i - (N/ell) J_i prod_n (I - H_{i,n}/ell) grad_y f_i``
    with ``grad_x f_i`` and ``grad_y f_i`` from one shared sample.
    minimax: ``grad_x f_i``. compositional: ``grad r_i' grad f_i``.
    """
    gx, gy = client.sample_outer_grads(p, rng.child("outer"))
    if ledger is not None:
        ledger.count("xi")
    if mode == "minimax":
        return gx
    if mode == "compositional":
        return indirect_grad(client, p, gy, rng.child("jac"), ledger)
    if mode != "bilevel":
        raise UnsupportedConfiguration(f"local_ihgp has no {mode!r} mode")
    if n_prime is None:
        n_prime = draw_truncation(cfg, rng.child("truncation"))
    vec = gy
    for n in range(1, n_prime + 1):
        vec = vec - client.sample_hessvec(p, vec, rng.child("hess", n)) / cfg.ell_g1
    if ledger is not None:
        ledger.count("zeta_hess", n_prime)
    return gx + indirect_grad(client, p, (cfg.N / cfg.ell_g1) * vec, rng.child("jac"), ledger)


def neumann_operator(H, ell, N):
    """``(1/ell) sum_{n<N} (I - H/ell)^n`` as a dense matrix."""
    H = np.asarray(H, dtype=float)
    step = np.eye(H.shape[0]) - H / ell
    term = np.eye(H.shape[0])
    acc = np.zeros_like(H)
    for _ in range(N):
        acc += term
        term = step @ term
    return acc / ell


def _require_exact(instance, cfg):
    if not instance.noise.deterministic:
        raise UnsupportedConfiguration("exact expectations need all noise levels at 0")
    if cfg.participation is not None and cfg.participation < instance.m:
        raise UnsupportedConfiguration("exact expectations need full participation")


def expected_ihgp_operator(instance, p, cfg: IhgpConfig):
    """Exact ``E[H_hat]`` over the truncation draw (noise-free, full participation)."""
    _require_exact(instance, cfg)
    return neumann_operator(instance.Qbar, cfg.ell_g1, cfg.N)


def expected_client_hypergrads(instance, p, cfg: IhgpConfig):
    """Exact ``E[h_i]`` for every client of a noise-free instance.

    Returns an ``(m, d1)`` array whose row ``i`` is
    ``grad_x f_i - J_i E[H_hat] grad_y f``.
    """
    _require_exact(instance, cfg)
    x, y = np.asarray(p[0], float), np.asarray(p[1], float)
    pvec = expected_ihgp_operator(instance, p, cfg) @ instance.outer_grads(x, y)[1]
    return np.array([c.outer_grads(x, y)[0] - c.P.T @ pvec for c in instance.clients])


def expected_local_hypergrads(instance, p, cfg: IhgpConfig):
    """Exact ``E[local_ihgp]`` per client (noise-free): uses each client's own Hessian."""
    _require_exact(instance, cfg)
    x, y = np.asarray(p[0], float), np.asarray(p[1], float)
    rows = []
    for c in instance.clients:
        gx, gy = c.outer_grads(x, y)
        rows.append(gx - c.P.T @ (neumann_operator(c.Q, cfg.ell_g1, cfg.N) @ gy))
    return np.array(rows)
