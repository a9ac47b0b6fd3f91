"""Communication and sample accounting.

Every server aggregation goes through :meth:`RoundLedger.aggregate`, which
refuses anything that is not a flat vector of an allowed length. Matrices
never travel, so the check doubles as an enforcement of the
"vectors only" communication pattern.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .exceptions import PayloadError

SAMPLE_KINDS = ("xi", "zeta_grad", "zeta_hess", "zeta_jac")


def pairwise_sum(vectors):
    """Sum a list of equal-length vectors by recursive halving.

    The association order depends only on the list length, so the result
    is reproducible regardless of how the vectors were produced.
    """
    n = len(vectors)
    if n == 1:
        return np.array(vectors[0], dtype=float)
    half = n // 2
    return pairwise_sum(vectors[:half]) + pairwise_sum(vectors[half:])


def pairwise_mean(vectors):
    if not vectors:
        raise PayloadError("cannot aggregate an empty set of payloads")
    return pairwise_sum(list(vectors)) / len(vectors)


@dataclass
class RoundLedger:
    """Cumulative rounds and oracle samples for one run.

    ``rounds`` follows the fixed per-epoch budget of each algorithm; the
    random-length Neumann chain is charged its worst case ``N`` there while
    ``actual_rounds`` records what was really exchanged.
    """

    allowed_lengths: tuple = ()
    rounds: int = 0
    actual_rounds: int = 0
    samples: dict = field(default_factory=lambda: dict.fromkeys(SAMPLE_KINDS, 0))
    payloads: int = 0

    def charge(self, rounds, actual=None):
        rounds = int(rounds)
        if rounds < 0:
            raise ValueError("round charge must be >= 0")
        self.rounds += rounds
        self.actual_rounds += rounds if actual is None else int(actual)

    def count(self, kind, n=1):
        if kind not in self.samples:
            raise KeyError(f"unknown sample kind {kind!r}")
        self.samples[kind] += int(n)

    def check_payload(self, v):
        arr = np.asarray(v)
        if arr.ndim != 1:
            raise PayloadError(f"payload must be a vector, got shape {arr.shape}")
        if self.allowed_lengths and arr.shape[0] not in self.allowed_lengths:
            raise PayloadError(
                f"payload length {arr.shape[0]} not in allowed lengths {self.allowed_lengths}")
        return arr

    def aggregate(self, payloads):
        """Validate client payloads and return their unweighted mean."""
        checked = [self.check_payload(v) for v in payloads]
        self.payloads += len(checked)
        return pairwise_mean(checked)

    def snapshot(self):
        return {"rounds": self.rounds, "actual_rounds": self.actual_rounds,
                **{f"samples_{k}": v for k, v in self.samples.items()}}


def ensure_ledger(ledger, d1=None, d2=None):
    if ledger is not None:
        return ledger
    lengths = tuple(d for d in (d1, d2) if d)
    return RoundLedger(allowed_lengths=lengths)


INNER_ROUNDS = {"svrg": 2, "local": 1}


def outer_rounds(mode, N, local=False):
    """Rounds charged by one outer update."""
    if local:
        return 1
    if mode == "bilevel":
        return N + 3
    if mode == "compositional":
        return 4
    if mode in ("minimax", "single-level"):
        return 3
    raise ValueError(f"unknown mode {mode!r}")


ALGORITHMS = {
    # name: (inner solver, local outer update)
    "fednest": ("svrg", False),
    "lfednest": ("local", True),
    "fednest_sgd": ("local", False),
    "lfednest_svrg": ("svrg", True),
}


def epoch_round_budget(algorithm, T, N, mode="bilevel"):
    """Rounds charged per epoch; bilevel FedNest gives ``2T + N + 3``."""
    try:
        inner, local = ALGORITHMS[algorithm]
    except KeyError:
        raise ValueError(f"unknown algorithm {algorithm!r}") from None
    return INNER_ROUNDS[inner] * T + outer_rounds(mode, N, local)
