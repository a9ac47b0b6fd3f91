"""Stepsize schedules: manual constants or the theory-derived choice.

Theory mode uses ``alpha_k = min(a1, a2, a3, abar / sqrt(K))`` and
``beta_k = beta_bar * alpha_k / T``; the constants come from the smoothness
bundle of the problem. Per-client stepsizes are always the global ones
divided by the client's local step count.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import NamedTuple, Optional, Sequence, Union

from .exceptions import ConfigError, UnsupportedConfiguration
from .oracles import NoiseLevels
from .participation import check_taus

MODES = ("manual", "theory")


@dataclass(frozen=True)
class ScheduleConfig:
    """Epoch counts, local steps and the stepsize rule.

    ``sqrt_k_decay`` divides the manual ``alpha`` by ``sqrt(K)`` (and scales
    ``beta`` with it) so manual runs can follow the same ``1/sqrt(K)``
    law the theory schedule uses.
    """

    K: int = 100
    T: int = 1
    N: int = 5
    tau_inner: Union[int, Sequence[int]] = 1
    tau_outer: Union[int, Sequence[int]] = 1
    mode: str = "manual"
    alpha: float = 0.05
    beta: float = 0.1
    alpha_bar: Optional[float] = None
    eta: Optional[float] = None
    sqrt_k_decay: bool = False
    participation: Optional[int] = None
    ihgp_participation: Optional[int] = None
    coupling: str = "shared"
    ell_override: Optional[float] = None

    def __post_init__(self):
        for name in ("tau_inner", "tau_outer"):
            if isinstance(getattr(self, name), list):
                object.__setattr__(self, name, tuple(getattr(self, name)))
        if int(self.K) != self.K or self.K < 0:
            raise ConfigError("K must be an integer >= 0")
        for name in ("T", "N"):
            if int(getattr(self, name)) != getattr(self, name) or getattr(self, name) < 1:
                raise ConfigError(f"{name} must be an integer >= 1")
        if self.mode not in MODES:
            raise ConfigError(f"schedule mode must be one of {MODES}")
        check_taus(self.tau_inner)
        check_taus(self.tau_outer)
        if self.mode == "manual" and not (self.alpha > 0 and self.beta > 0):
            raise ConfigError("manual schedule needs alpha > 0 and beta > 0")
        if self.alpha_bar is not None and not self.alpha_bar > 0:
            raise ConfigError("alpha_bar must be positive")
        if self.participation is not None and self.participation < 1:
            raise ConfigError("participation must be >= 1 (empty client subset)")

    def to_dict(self):
        d = asdict(self)
        for key in ("tau_inner", "tau_outer"):
            if isinstance(d[key], tuple):
                d[key] = list(d[key])
        return d


@dataclass(frozen=True)
class ScheduleConstants:
    """Derived smoothness bundle and the stepsize bounds built from it."""

    L_y: float
    L_yx: float
    M_f: float
    L_f: float
    sigma_tilde_sq: float
    D_tilde_sq: float
    eta: float
    alpha1: float
    alpha2: float
    alpha3: float
    beta_bar: float
    alpha_bar: float
    T: int

    def alpha_k(self, K):
        return min(self.alpha1, self.alpha2, self.alpha3, self.alpha_bar / math.sqrt(max(K, 1)))

    def beta_k(self, K):
        return self.beta_bar * self.alpha_k(K) / self.T


def _bilevel_constants(c, noise, T, eta, alpha_bar):
    mu, lg, lf1, lf0, lg2 = c.mu_g, c.ell_g1, c.ell_f1, c.ell_f0, c.ell_g2
    sf, sg2 = noise.sigma_f, noise.sigma_g2
    L_y = lg / mu
    L_yx = (lg2 + lg2 * L_y) / mu + lg / mu ** 2 * (lg2 + lg2 * L_y)
    tail = lf0 / mu * (lg2 + lg * lg2 / mu)
    M_f = lf1 + lg * lf1 / mu + tail
    L_f = lf1 + lg * (lf1 + M_f) / mu + tail
    s2 = sf ** 2 + 3 / mu ** 2 * ((sf ** 2 + lf0 ** 2) * (sg2 ** 2 + 2 * lg ** 2) + sf ** 2 * lg ** 2)
    D2 = (lf0 + 2 * lg * lf1 / mu) ** 2 + s2
    eta = M_f / L_y if eta is None else eta
    a1 = 1 / (2 * L_f + 4 * M_f * L_y + 2 * M_f * L_yx / (L_y * eta))
    beta_bar = (11 * M_f * L_y + eta * L_yx * D2 * a1 + M_f * L_y * a1 / 2) / mu
    a2 = T / (8 * lg * beta_bar)
    a3 = 1 / (216 * M_f ** 2 + 5 * M_f)
    abar = c.kappa_g ** -2.5 if alpha_bar is None else alpha_bar
    return ScheduleConstants(L_y, L_yx, M_f, L_f, s2, D2, eta, a1, a2, a3, beta_bar, abar, T)


def _minimax_constants(c, noise, T, eta, alpha_bar):
    mu_f, lf1, lf0, lf2 = c.mu_f, c.ell_f1, c.ell_f0, c.ell_f2
    L_y = lf1 / mu_f
    L_yx = (lf2 + lf2 * L_y) / mu_f + lf1 * (lf2 + lf2 * L_y) / mu_f ** 2
    M_f = lf1
    L_f = lf1 + lf1 ** 2 / mu_f
    s2 = noise.sigma_f ** 2
    D2 = lf0 ** 2 + s2
    eta = 1.0 if eta is None else eta
    a1 = 1 / (2 * L_f + 4 * lf1 * L_y + 2 * lf1 * L_yx / L_y)
    beta_bar = (11 * lf1 * L_y + L_yx * D2 * a1 + lf1 * L_y * a1 / 2) / c.mu_g
    a2 = T / (8 * c.ell_g1 * beta_bar)
    a3 = 1 / (216 * lf1 ** 2 + 5 * lf1)
    abar = 1 / c.kappa_f if alpha_bar is None else alpha_bar
    return ScheduleConstants(L_y, L_yx, M_f, L_f, s2, D2, eta, a1, a2, a3, beta_bar, abar, T)


def _compositional_constants(c, noise, T, eta, alpha_bar):
    lf1, lf0 = c.ell_f1, c.ell_f0
    r0, r1 = c.ell_r0, c.ell_r1 or 0.0
    if r0 is None:
        raise UnsupportedConfiguration("compositional schedule needs ell_r0")
    s2 = noise.sigma_f ** 2
    D2 = (lf0 ** 2 + s2) * (r0 ** 2 + noise.sigma_g2 ** 2)
    a1 = 1 / (2 * lf0 * r1 + 6 * lf1 * r0 ** 2 + 2 * lf1 * r1 ** 2)
    beta_bar = (11 * lf1 * r0 ** 2 + D2 * a1 + lf1 * r0 ** 2 * a1 / 2) / c.mu_g
    a2 = 1 / (8 * r0 * beta_bar) if r0 > 0 else math.inf
    a3 = 1 / (216 * (r0 * lf1) ** 2 + 5 * r0 * lf1) if r0 * lf1 > 0 else math.inf
    abar = 1.0 if alpha_bar is None else alpha_bar
    L_y = r0
    return ScheduleConstants(L_y, 0.0, lf1 * r0 ** 2, lf1 * r0 ** 2, s2, D2,
                             1.0 if eta is None else eta, a1, a2, a3, beta_bar, abar, 1)


def _single_level_constants(c, noise, T, eta, alpha_bar):
    L_f = c.ell_f1
    a1 = 1 / (3 * L_f * (1 + 8 * L_f))
    abar = 1.0 if alpha_bar is None else alpha_bar
    inf = math.inf
    return ScheduleConstants(0.0, 0.0, L_f, L_f, noise.sigma_f ** 2, 0.0, 1.0,
                             a1, inf, inf, 0.0, abar, T)


def schedule_constants(constants, kind, noise, T=1, eta=None, alpha_bar=None):
    """Theory-mode constants for a problem of the given kind.

    Compositional problems always use ``T = 1``.
    """
    builders = {"bilevel": _bilevel_constants, "minimax": _minimax_constants,
                "compositional": _compositional_constants,
                "single-level": _single_level_constants}
    if kind not in builders:
        raise UnsupportedConfiguration(f"no theory schedule for kind {kind!r}")
    if kind == "compositional":
        T = 1
    return builders[kind](constants, noise, T, eta, alpha_bar)


class StepSizes(NamedTuple):
    alpha: float
    beta: float
    alpha_i: object
    beta_i: object


def effective_T(schedule: ScheduleConfig, kind):
    if schedule.mode == "theory" and kind == "compositional":
        return 1
    return schedule.T


def _split(value, tau):
    if hasattr(tau, "__len__"):
        return tuple(value / t for t in tau)
    return value / tau


def stepsize_schedule(k, schedule: ScheduleConfig, constants=None, kind="bilevel", noise=None):
    """Stepsizes for epoch ``k``: global ``(alpha_k, beta_k)`` and per-client values.

    The schedule is constant in ``k``; the epoch index is accepted so
    callers do not need to special-case a future decaying rule.
    """
    if k < 0:
        raise ConfigError("epoch index must be >= 0")
    if schedule.mode == "manual":
        scale = 1.0 / math.sqrt(max(schedule.K, 1)) if schedule.sqrt_k_decay else 1.0
        alpha, beta = schedule.alpha * scale, schedule.beta * scale
    else:
        if constants is None:
            raise ConfigError("theory schedule needs ProblemConstants")
        sc = schedule_constants(constants, kind, noise or NoiseLevels(),
                                effective_T(schedule, kind), schedule.eta, schedule.alpha_bar)
        alpha, beta = sc.alpha_k(schedule.K), sc.beta_k(schedule.K)
    return StepSizes(alpha, beta, _split(alpha, schedule.tau_outer), _split(beta, schedule.tau_inner))

