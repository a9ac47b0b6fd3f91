"""Client selection and per-client step bookkeeping."""
from __future__ import annotations

import numpy as np

from .exceptions import ConfigError


def select_clients(clients, participation, rng):
    """Return the participating clients in increasing id order.

    ``participation=None`` (or ``>= m``) means every client takes part;
    otherwise ``participation`` distinct clients are drawn from ``rng``.
    """
    m = len(clients)
    if participation is None or participation >= m:
        return list(clients)
    if participation < 1:
        raise ConfigError("participation must be >= 1 (empty client subset)")
    idx = rng.choice(m, int(participation))
    return [clients[i] for i in idx]


def per_client(value, index, name):
    """Look up a scalar-or-sequence setting for client ``index``."""
    if np.ndim(value) == 0:
        return value
    try:
        return value[index]
    except (IndexError, KeyError):
        raise ConfigError(f"{name} has no entry for client {index}") from None


def check_taus(tau):
    vals = [tau] if np.ndim(tau) == 0 else list(tau)
    for t in vals:
        if int(t) != t or t < 1:
            raise ConfigError(f"local step counts must be integers >= 1, got {t}")
