"""Built-in oracle suites run by ``fednest verify``.

Each check returns a :class:`CheckResult`. The Neumann-bias check works in
exact rational arithmetic: the bound it verifies is attained with equality
at the smallest eigenvalue, so any floating-point comparison would be
decided by rounding.
"""
from __future__ import annotations

import time
from dataclasses import dataclass
from fractions import Fraction
from itertools import combinations

import numpy as np

from .hypergrad import IhgpConfig, bias_budget, expected_client_hypergrads, fedihgp, neumann_operator
from .inner import InnerStepConfig, fedinn_round, lfedinn_round, local_sgd_fixed_point
from .ledger import epoch_round_budget
from .orchestrator import run_variant
from .outer import OuterStepConfig, fedout_single_level_round
from .rng import RngStream
from .schedule import ScheduleConfig
from .zoo import (BilevelQuadraticSpec, CompositionalSpec, MinimaxQuadraticSpec, SingleLevelSpec,
                  analytic_hypergradient, heterogeneous_bilevel_spec, make_bilevel_quadratic,
                  make_compositional, make_minimax_quadratic, make_single_level)


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str = ""
    seconds: float = 0.0

    def line(self):
        status = "PASS" if self.passed else "FAIL"
        return f"{status} {self.name}: {self.detail} ({self.seconds:.2f}s)"


# exact rational linear algebra ---------------------------------------------

def _mat_mul(A, B):
    n, k, m = len(A), len(B), len(B[0])
    return [[sum((A[i][t] * B[t][j] for t in range(k)), Fraction(0)) for j in range(m)]
            for i in range(n)]


def _identity(n):
    return [[Fraction(int(i == j)) for j in range(n)] for i in range(n)]


def _det(M):
    """Determinant by fraction-exact Gaussian elimination."""
    A = [row[:] for row in M]
    n = len(A)
    det = Fraction(1)
    for c in range(n):
        piv = next((r for r in range(c, n) if A[r][c] != 0), None)
        if piv is None:
            return Fraction(0)
        if piv != c:
            A[c], A[piv] = A[piv], A[c]
            det = -det
        det *= A[c][c]
        for r in range(c + 1, n):
            f = A[r][c] / A[c][c]
            if f:
                A[r] = [a - f * b for a, b in zip(A[r], A[c])]
    return det


def _inverse(M):
    n = len(M)
    A = [row[:] + e for row, e in zip(M, _identity(n))]
    for c in range(n):
        piv = next(r for r in range(c, n) if A[r][c] != 0)
        A[c], A[piv] = A[piv], A[c]
        p = A[c][c]
        A[c] = [a / p for a in A[c]]
        for r in range(n):
            if r != c and A[r][c]:
                f = A[r][c]
                A[r] = [a - f * b for a, b in zip(A[r], A[c])]
    return [row[n:] for row in A]


def is_psd_exact(M):
    """Positive semidefiniteness via all principal minors (exact)."""
    n = len(M)
    for k in range(1, n + 1):
        for idx in combinations(range(n), k):
            if _det([[M[i][j] for j in idx] for i in idx]) < 0:
                return False
    return True


def rational_orthogonal(rng, n, spread=3):
    """Cayley transform ``(I - S)(I + S)^{-1}`` of a random integer skew matrix."""
    S = [[Fraction(0)] * n for _ in range(n)]
    for i in range(n):
        for j in range(i + 1, n):
            v = int(rng.integers(-spread, spread + 1))
            S[i][j], S[j][i] = Fraction(v), Fraction(-v)
    I = _identity(n)
    minus = [[I[i][j] - S[i][j] for j in range(n)] for i in range(n)]
    plus = [[I[i][j] + S[i][j] for j in range(n)] for i in range(n)]
    return _mat_mul(minus, _inverse(plus))


def random_rational_spd(rng, kappa, dim=3, mu=Fraction(1)):
    """SPD matrix with exact spectrum ``{mu, kappa*mu, interior values}``."""
    kappa = Fraction(kappa).limit_denominator(1000)
    eig = [mu, kappa * mu]
    for _ in range(dim - 2):
        t = Fraction(int(rng.integers(1, 99)), 100)
        eig.append(mu + t * (kappa * mu - mu))
    U = rational_orthogonal(rng, dim)
    D = [[eig[i] if i == j else Fraction(0) for j in range(dim)] for i in range(dim)]
    Ut = [list(col) for col in zip(*U)]
    return _mat_mul(_mat_mul(U, D), Ut), eig, kappa


def check_neumann_bias(n_instances=10, kappas=(1.5, 2, 5, 10), N_max=30, dim=3, seed=0,
                       float_tol=1e-12):
    """Exact check of ``||E[H_hat] - H^{-1}|| <= (1/mu)((kappa-1)/kappa)^N``.

    For each instance the truncated series is accumulated once; at every
    ``N`` the two matrices ``b I -/+ (H^{-1} - E[H_hat])`` must be positive
    semidefinite. The floating-point operator from
    :func:`~fednest.hypergrad.neumann_operator` is compared with the exact
    one to ``float_tol``.
    """
    t0 = time.perf_counter()
    rng = np.random.default_rng(seed)
    worst_float = 0.0
    failures = []
    for inst in range(n_instances):
        kappa = kappas[inst % len(kappas)]
        H, eig, kap = random_rational_spd(rng, kappa, dim)
        mu, ell = min(eig), max(eig)
        Hinv = _inverse(H)
        I = _identity(dim)
        step = [[I[i][j] - H[i][j] / ell for j in range(dim)] for i in range(dim)]
        term = I
        acc = [[Fraction(0)] * dim for _ in range(dim)]
        Hf = np.array([[float(v) for v in row] for row in H])
        for N in range(1, N_max + 1):
            acc = [[acc[i][j] + term[i][j] for j in range(dim)] for i in range(dim)]
            term = _mat_mul(step, term)
            EH = [[acc[i][j] / ell for j in range(dim)] for i in range(dim)]
            D = [[Hinv[i][j] - EH[i][j] for j in range(dim)] for i in range(dim)]
            b = (1 / mu) * ((kap - 1) / kap) ** N
            upper = [[b * I[i][j] - D[i][j] for j in range(dim)] for i in range(dim)]
            lower = [[b * I[i][j] + D[i][j] for j in range(dim)] for i in range(dim)]
            if not (is_psd_exact(upper) and is_psd_exact(lower)):
                failures.append((inst, float(kap), N))
            EHf = neumann_operator(Hf, float(ell), N)
            worst_float = max(worst_float, float(np.max(np.abs(
                EHf - np.array([[float(v) for v in row] for row in EH])))))
    passed = not failures and worst_float <= float_tol
    detail = (f"{n_instances} instances x N=1..{N_max}; violations={failures[:3]}; "
              f"float operator max deviation {worst_float:.2e}")
    return CheckResult("neumann_bias_exact", passed, detail, time.perf_counter() - t0)


# hypergradient --------------------------------------------------------------

def _ball_points(rng, center, radius, n):
    pts = []
    for _ in range(n):
        u = rng.standard_normal(center.shape)
        u /= np.linalg.norm(u)
        pts.append(center + radius * rng.uniform(0, 1) ** (1 / len(center)) * u)
    return pts


def hypergrad_bias_measurements(instance, Ns=(5, 10, 20), n_points=5, seed=0):
    """Measured aggregate and per-client bias of the federated estimator.

    The expectation over the truncation draw is formed by running
    :func:`fedihgp` once per ``N'`` value (noise-free, so each run is exact)
    and averaging. Returns rows ``(N, aggregate_gap, client_gap, budget)``
    where ``aggregate_gap`` compares the client average with the exact
    hypergradient and ``client_gap`` compares each client with
    ``grad_x f_i - J_i H^{-1} grad_y f``.
    """
    rng = np.random.default_rng(seed)
    c = instance.constants
    xs = _ball_points(rng, instance.x_star, c.domain_radius, n_points)
    rows = []
    for N in Ns:
        cfg = IhgpConfig(N=N, ell_g1=c.ell_g1)
        budget = bias_budget(c.kappa_g, c.ell_f1, N)
        agg_gap = client_gap = 0.0
        for x in xs:
            y = instance.inner_solution(x)
            stream = RngStream(seed, ("bias", N))
            pvec = np.mean([fedihgp((x, y), cfg, instance.clients, stream, n_prime=n)
                            for n in range(N)], axis=0)
            gy = instance.outer_grads(x, y)[1]
            target_p = np.linalg.solve(instance.Qbar, gy)
            h = np.array([cl.outer_grads(x, y)[0] - cl.P.T @ pvec for cl in instance.clients])
            target = np.array([cl.outer_grads(x, y)[0] - cl.P.T @ target_p
                               for cl in instance.clients])
            exact = expected_client_hypergrads(instance, (x, y), cfg)
            if not np.allclose(exact, h, rtol=1e-10, atol=1e-12):
                raise AssertionError("enumerated estimator disagrees with the closed form")
            agg_gap = max(agg_gap, float(np.linalg.norm(h.mean(0) - instance.hypergradient(x))))
            client_gap = max(client_gap, float(np.max(np.linalg.norm(h - target, axis=1))))
        rows.append((N, agg_gap, client_gap, budget))
    return rows


def check_hypergrad_bias(instance=None, Ns=(5, 10, 20), n_points=5, seed=0):
    t0 = time.perf_counter()
    instance = instance or make_bilevel_quadratic(BilevelQuadraticSpec())
    rows = hypergrad_bias_measurements(instance, Ns, n_points, seed)
    passed = all(a <= b and g <= b for _, a, g, b in rows)
    detail = "; ".join(f"N={N}: agg {a:.2e} client {g:.2e} <= {b:.2e}" for N, a, g, b in rows)
    return CheckResult("hypergradient_bias", passed, detail, time.perf_counter() - t0)


def finite_difference_gap(instance, n_points=20, h=1e-6, seed=0):
    """Largest relative gap between the analytic gradient and central differences."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_points):
        x = rng.standard_normal(instance.d1)
        g = analytic_hypergradient(instance, x)
        fd = np.empty_like(g)
        for j in range(instance.d1):
            e = np.zeros(instance.d1)
            e[j] = h
            fd[j] = (instance.f_value(x + e) - instance.f_value(x - e)) / (2 * h)
        worst = max(worst, float(np.linalg.norm(fd - g) / max(np.linalg.norm(g), 1.0)))
    return worst


def check_finite_differences(tol=1e-6):
    t0 = time.perf_counter()
    instances = {
        "bilevel": make_bilevel_quadratic(BilevelQuadraticSpec()),
        "minimax": make_minimax_quadratic(MinimaxQuadraticSpec()),
        "compositional": make_compositional(CompositionalSpec()),
        "single-level": make_single_level(SingleLevelSpec(curvature_spread=2.0)),
    }
    gaps = {k: finite_difference_gap(v) for k, v in instances.items()}
    detail = ", ".join(f"{k} {v:.1e}" for k, v in gaps.items())
    return CheckResult("hypergradient_finite_differences", all(v <= tol for v in gaps.values()),
                       detail, time.perf_counter() - t0)


# inner solver ---------------------------------------------------------------

def contraction_ratios(instance, x, beta, tau=5, rounds=100, seed=0):
    """Per-round squared-error ratios of noiseless FedInn at fixed ``x``."""
    cfg = InnerStepConfig(beta=beta, tau=tau)
    ys = instance.inner_solution(x)
    y = ys + np.random.default_rng(seed).standard_normal(instance.d2)
    root = RngStream(seed, ("contraction",))
    ratios = []
    for t in range(rounds):
        y_new = fedinn_round((x, y), instance.clients, cfg, root.child(t))
        ratios.append(float(np.sum((y_new - ys) ** 2) / np.sum((y - ys) ** 2)))
        y = y_new
    return ratios


def check_fedinn_contraction(instance=None, rounds=100, tol=1e-12):
    t0 = time.perf_counter()
    instance = instance or make_bilevel_quadratic(BilevelQuadraticSpec())
    c = instance.constants
    beta = 0.9 / (6 * c.ell_g1)
    x = np.random.default_rng(1).standard_normal(instance.d1)
    ratios = contraction_ratios(instance, x, beta, rounds=rounds)
    bound = 1 - beta * c.mu_g / 2
    worst = max(ratios)
    return CheckResult("fedinn_contraction", worst <= bound + tol,
                       f"max ratio {worst:.6f} <= {bound:.6f} over {rounds} rounds (beta={beta:.4g})",
                       time.perf_counter() - t0)


def drift_limits(instance=None, tau=10, beta=0.5, rounds=400, seed=0):
    """Limiting ``||y - y*(x)||^2`` of LFedInn and FedInn, and the analytic LFedInn limit."""
    instance = instance or make_bilevel_quadratic(heterogeneous_bilevel_spec())
    x = np.random.default_rng(seed).standard_normal(instance.d1)
    ys = instance.inner_solution(x)
    cfg = InnerStepConfig(beta=beta, tau=tau)
    root = RngStream(seed, ("drift",))
    y_svrg = y_local = np.zeros(instance.d2)
    for t in range(rounds):
        y_svrg = fedinn_round((x, y_svrg), instance.clients, cfg, root.child("svrg", t))
        y_local = lfedinn_round((x, y_local), instance.clients, cfg, root.child("local", t))
    y_fix = local_sgd_fixed_point(instance, x, cfg)
    return {
        "fedinn": float(np.sum((y_svrg - ys) ** 2)),
        "lfedinn": float(np.sum((y_local - ys) ** 2)),
        "lfedinn_analytic": float(np.sum((y_fix - ys) ** 2)),
        "lfedinn_to_fixed_point": float(np.sum((y_local - y_fix) ** 2)),
    }


def check_drift_separation(local_floor=1e-3, svrg_ceiling=1e-10):
    t0 = time.perf_counter()
    d = drift_limits()
    passed = d["lfedinn"] > local_floor and d["fedinn"] <= svrg_ceiling
    detail = (f"LFedInn {d['lfedinn']:.3e} (analytic {d['lfedinn_analytic']:.3e}) > {local_floor:g}; "
              f"FedInn {d['fedinn']:.1e} <= {svrg_ceiling:g}")
    return CheckResult("client_drift_separation", passed, detail, time.perf_counter() - t0)


# single level -----------------------------------------------------------------

def single_level_limit(tau, instance=None, alpha=0.5, rounds=300, seed=0):
    instance = instance or make_single_level(SingleLevelSpec())
    cfg = OuterStepConfig(alpha=alpha, tau=tau, mode="single-level")
    root = RngStream(seed, ("single-level", tau))
    x = np.zeros(instance.d1)
    for k in range(rounds):
        x = fedout_single_level_round(x, cfg, instance.clients, root.child(k))
    return x, np.mean([c.u for c in instance.clients], axis=0)


def check_single_level_no_drift(taus=(1, 4, 16), tol=1e-10):
    t0 = time.perf_counter()
    gaps = {}
    for tau in taus:
        x, target = single_level_limit(tau)
        gaps[tau] = float(np.linalg.norm(x - target))
    detail = ", ".join(f"tau={t}: {g:.1e}" for t, g in gaps.items())
    return CheckResult("single_level_no_drift", all(g <= tol for g in gaps.values()), detail,
                       time.perf_counter() - t0)


# ledger -----------------------------------------------------------------------

def check_ledger(pairs=((1, 1), (5, 5), (10, 3)), epochs=3):
    t0 = time.perf_counter()
    instance = make_bilevel_quadratic(BilevelQuadraticSpec(m=3, d1=2, d2=2))
    expected = {"fednest": lambda T, N: 2 * T + N + 3, "lfednest": lambda T, N: T + 1,
                "fednest_sgd": lambda T, N: T + N + 3, "lfednest_svrg": lambda T, N: 2 * T + 1}
    bad = []
    for T, N in pairs:
        sched = ScheduleConfig(K=epochs, T=T, N=N, alpha=0.01, beta=0.05)
        for kind, rule in expected.items():
            tr = run_variant(kind, instance, sched, seed=0)
            want = epochs * rule(T, N)
            if tr.final["rounds"] != want or epoch_round_budget(kind, T, N) != rule(T, N):
                bad.append((kind, T, N, tr.final["rounds"], want))
    return CheckResult("round_ledger", not bad, f"mismatches={bad}", time.perf_counter() - t0)


SUITES = {
    "neumann_bias_exact": check_neumann_bias,
    "hypergradient_bias": check_hypergrad_bias,
    "hypergradient_finite_differences": check_finite_differences,
    "fedinn_contraction": check_fedinn_contraction,
    "client_drift_separation": check_drift_separation,
    "single_level_no_drift": check_single_level_no_drift,
    "round_ledger": check_ledger,
}


def run_all(names=None):
    names = names or list(SUITES)
    return [SUITES[n]() for n in names]
