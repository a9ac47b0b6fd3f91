"""Problem generators with closed-form ground truth.

Each ``*Spec`` dataclass is a plain, JSON-serialisable description; the
matching ``make_*`` function turns it into an immutable problem instance.
Heterogeneity is dialled by a single ``heterogeneity`` knob in ``[0, 1]``:
0 gives identical clients, 1 gives fully client-specific data.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np

from .exceptions import InvalidSpec, NotAvailable
from .oracles import NoiseLevels, ProblemInstance, QuadraticClient, SingleLevelClient, SingleLevelInstance


def _problem_rng(seed, tag):
    tags = {"minimax": 1, "bilevel": 2, "compositional": 3, "single-level": 4}
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(tags[tag],)))


def _orthogonal(rng, d):
    q, r = np.linalg.qr(rng.standard_normal((d, d)))
    return q * np.sign(np.diag(r))


def _unit_spectral(rng, rows, cols):
    g = rng.standard_normal((rows, cols))
    return g / np.linalg.norm(g, 2)


class _SpecMixin:
    kind = ""

    def to_dict(self):
        d = dataclasses.asdict(self)
        d["kind"] = self.kind
        return d

    @classmethod
    def from_dict(cls, data):
        data = dict(data)
        data.pop("kind", None)
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(data) - names)
        if unknown:
            raise InvalidSpec(f"unknown key {unknown[0]!r} in {cls.kind} problem spec")
        return cls(**data)

    def noise(self):
        return NoiseLevels(self.sigma_f, self.sigma_g1, self.sigma_g2)


@dataclass(frozen=True)
class MinimaxQuadraticSpec(_SpecMixin):
    """Quadratic saddle-point problem with ``A_i = t_i I`` and recentred offsets.

    ``f_i(x, y) = -[1/2 ||y||^2 - b_i'y + y'A_i x] + lam/2 ||x||^2``.
    The offsets ``b_i`` are draws ``N(0, s^2 I)`` minus their mean, and
    ``t_i ~ U(0, t_max)``. ``sigma`` is the noise level of every sampled
    gradient.
    """

    m: int = 20
    d: int = 10
    lam: float = 10.0
    s: float = 1.0
    t_max: float = 0.1
    seed: int = 1
    sigma: float = 0.0
    kind = "minimax-quadratic"

    def noise(self):
        return NoiseLevels(self.sigma, self.sigma, 0.0)


@dataclass(frozen=True)
class BilevelQuadraticSpec(_SpecMixin):
    """Quadratic bilevel problem with SPD inner Hessians in ``[mu, L]``.

    Inner: ``g_i = 1/2 y'Q_i y + y'P_i x + c_i'y`` with ``||P_i|| <= coupling``.
    Outer: ``f_i = 1/2||x - u_i||^2 + 1/2||y - w_i||^2 + outer_coupling * x'C_i y``.
    """

    m: int = 10
    d1: int = 5
    d2: int = 5
    seed: int = 0
    mu: float = 1.0
    L: float = 4.0
    heterogeneity: float = 0.5
    coupling: float = 0.5
    offset_scale: float = 1.0
    outer_coupling: float = 0.1
    sigma_f: float = 0.0
    sigma_g1: float = 0.0
    sigma_g2: float = 0.0
    domain_radius: float = 1.0
    kind = "bilevel-quadratic"


@dataclass(frozen=True)
class CompositionalSpec(_SpecMixin):
    """Affine compositional problem ``f(x) = mean_i f_i(mean_j r_j(x))``.

    ``r_i(x) = M_i x + v_i`` and ``f_i(y) = 1/2 ||y - w_i||^2``; the inner
    function is ``g_i = 1/2 ||y - r_i(x)||^2`` so every y-Hessian is ``I``.
    """

    m: int = 10
    d1: int = 4
    d2: int = 6
    seed: int = 0
    heterogeneity: float = 0.5
    map_scale: float = 1.0
    map_offset_scale: float = 1.0
    outer_offset_scale: float = 1.0
    sigma_f: float = 0.0
    sigma_g1: float = 0.0
    sigma_g2: float = 0.0
    domain_radius: float = 1.0
    kind = "compositional"


@dataclass(frozen=True)
class SingleLevelSpec(_SpecMixin):
    """Heterogeneous quadratics ``f_i(x) = 1/2 (x - u_i)'H_i(x - u_i)``.

    ``curvature_spread = 0`` gives ``H_i = I``; otherwise each ``H_i`` has
    eigenvalues drawn from ``[1, 1 + curvature_spread]``.
    """

    m: int = 10
    d: int = 5
    seed: int = 0
    heterogeneity: float = 1.0
    s: float = 1.0
    curvature_spread: float = 0.0
    sigma_f: float = 0.0
    kind = "single-level"

    def noise(self):
        return NoiseLevels(self.sigma_f, 0.0, 0.0)


SPEC_TYPES = {cls.kind: cls for cls in
              (MinimaxQuadraticSpec, BilevelQuadraticSpec, CompositionalSpec, SingleLevelSpec)}


def _check_h(h):
    if not 0.0 <= h <= 1.0:
        raise InvalidSpec("heterogeneity must lie in [0, 1]")


def make_minimax_quadratic(spec: MinimaxQuadraticSpec) -> ProblemInstance:
    """Build the quadratic saddle-point instance.

    ``g_i = -f_i`` without the x-only regulariser, which has no effect on
    any y-derivative. The recorded solution is ``x* = -(lam I + A'A)^{-1} A'b``
    with ``A``, ``b`` the client means; recentring makes ``b = 0`` so
    ``x* = y* = 0``.
    """
    if spec.lam <= 0:
        raise InvalidSpec("lam must be positive")
    if spec.t_max <= 0:
        raise InvalidSpec("t_max must be positive")
    if spec.m < 1 or spec.d < 1:
        raise InvalidSpec("m and d must be >= 1")
    if spec.s < 0:
        raise InvalidSpec("s must be >= 0")
    rng = _problem_rng(spec.seed, "minimax")
    d = spec.d
    b_raw = spec.s * rng.standard_normal((spec.m, d))
    b = b_raw - b_raw.mean(axis=0)
    t = rng.uniform(0.0, spec.t_max, size=spec.m)
    t = np.where(t > 0, t, 0.5 * spec.t_max)
    eye = np.eye(d)
    noise = spec.noise()
    clients = []
    for i in range(spec.m):
        A = t[i] * eye
        clients.append(QuadraticClient(
            index=i, kind="minimax",
            Fxx=spec.lam * eye, Fxy=-A.T, Fyy=-eye, a=np.zeros(d), e=b[i],
            Q=eye, P=A, c=-b[i], noise=noise))
    inst = ProblemInstance("minimax", clients, spec=spec)
    inst.t = t
    inst.b = b
    return inst


def make_bilevel_quadratic(spec: BilevelQuadraticSpec) -> ProblemInstance:
    """Build a seeded quadratic bilevel instance.

    Client Hessians are convex combinations of a shared and a private SPD
    matrix, both with spectrum in ``[mu, L]``, so every client and their
    mean stay inside ``[mu, L]``.
    """
    _check_h(spec.heterogeneity)
    if spec.mu <= 0 or spec.L < spec.mu:
        raise InvalidSpec("need 0 < mu <= L (non-SPD mean Hessian)")
    if spec.m < 1 or spec.d1 < 1 or spec.d2 < 1:
        raise InvalidSpec("m, d1, d2 must be >= 1")
    rng = _problem_rng(spec.seed, "bilevel")
    h = spec.heterogeneity
    d1, d2 = spec.d1, spec.d2

    def spd(endpoints):
        if endpoints:
            eig = np.linspace(spec.mu, spec.L, d2)
        else:
            eig = rng.uniform(spec.mu, spec.L, size=d2)
        U = _orthogonal(rng, d2)
        M = (U * eig) @ U.T
        return 0.5 * (M + M.T)

    Q0 = spd(True)
    P0 = _unit_spectral(rng, d2, d1)
    C0 = _unit_spectral(rng, d1, d2)
    c0 = rng.standard_normal(d2)
    u0 = rng.standard_normal(d1)
    w0 = rng.standard_normal(d2)
    noise = spec.noise()
    clients = []
    for i in range(spec.m):
        Q = (1 - h) * Q0 + h * spd(False)
        P = (1 - h) * P0 + h * _unit_spectral(rng, d2, d1)
        P = spec.coupling * P / max(np.linalg.norm(P, 2), 1.0) if spec.coupling else np.zeros((d2, d1))
        C = (1 - h) * C0 + h * _unit_spectral(rng, d1, d2)
        C = spec.outer_coupling * C / max(np.linalg.norm(C, 2), 1.0)
        c = spec.offset_scale * ((1 - h) * c0 + h * rng.standard_normal(d2))
        u = spec.offset_scale * ((1 - h) * u0 + h * rng.standard_normal(d1))
        w = spec.offset_scale * ((1 - h) * w0 + h * rng.standard_normal(d2))
        clients.append(QuadraticClient(
            index=i, kind="bilevel",
            Fxx=np.eye(d1), Fxy=C, Fyy=np.eye(d2), a=-u, e=-w,
            Q=Q, P=P, c=c, noise=noise))
    inst = ProblemInstance("bilevel", clients, spec=spec, domain_radius=spec.domain_radius)
    if inst.x_star is None:
        raise InvalidSpec("reduced outer objective is not strongly convex; lower outer_coupling")
    return inst


def make_compositional(spec: CompositionalSpec) -> ProblemInstance:
    """Build an affine compositional instance (``kappa_g = 1``)."""
    _check_h(spec.heterogeneity)
    if spec.m < 1 or spec.d1 < 1 or spec.d2 < 1:
        raise InvalidSpec("m, d1, d2 must be >= 1")
    rng = _problem_rng(spec.seed, "compositional")
    h = spec.heterogeneity
    d1, d2 = spec.d1, spec.d2
    M0 = rng.standard_normal((d2, d1)) / np.sqrt(d2)
    v0 = rng.standard_normal(d2)
    w0 = rng.standard_normal(d2)
    noise = spec.noise()
    eye = np.eye(d2)
    clients = []
    for i in range(spec.m):
        M = spec.map_scale * ((1 - h) * M0 + h * rng.standard_normal((d2, d1)) / np.sqrt(d2))
        v = spec.map_offset_scale * ((1 - h) * v0 + h * rng.standard_normal(d2))
        w = spec.outer_offset_scale * ((1 - h) * w0 + h * rng.standard_normal(d2))
        clients.append(QuadraticClient(
            index=i, kind="compositional",
            Fxx=np.zeros((d1, d1)), Fxy=np.zeros((d1, d2)), Fyy=eye, a=np.zeros(d1), e=-w,
            Q=eye, P=-M, c=-v, noise=noise))
    return ProblemInstance("compositional", clients, spec=spec, domain_radius=spec.domain_radius)


def make_single_level(spec: SingleLevelSpec) -> SingleLevelInstance:
    """Build heterogeneous single-level quadratics with ``x* = mean-weighted u_i``."""
    _check_h(spec.heterogeneity)
    if spec.curvature_spread < 0:
        raise InvalidSpec("curvature_spread must be >= 0")
    rng = _problem_rng(spec.seed, "single-level")
    d, h = spec.d, spec.heterogeneity
    u0 = rng.standard_normal(d)
    noise = spec.noise()
    clients = []
    for i in range(spec.m):
        if spec.curvature_spread:
            U = _orthogonal(rng, d)
            H = (U * rng.uniform(1.0, 1.0 + spec.curvature_spread, size=d)) @ U.T
            H = 0.5 * (H + H.T)
        else:
            H = np.eye(d)
        u = spec.s * ((1 - h) * u0 + h * rng.standard_normal(d))
        clients.append(SingleLevelClient(index=i, H=H, u=u, noise=noise))
    return SingleLevelInstance(clients, spec=spec)


_MAKERS = {
    "minimax-quadratic": make_minimax_quadratic,
    "bilevel-quadratic": make_bilevel_quadratic,
    "compositional": make_compositional,
    "single-level": make_single_level,
}


def make_problem(spec):
    """Dispatch on the spec type."""
    try:
        return _MAKERS[spec.kind](spec)
    except KeyError:
        raise InvalidSpec(f"unknown problem kind {spec.kind!r}") from None


def spec_from_dict(data):
    data = dict(data)
    kind = data.get("kind")
    if kind not in SPEC_TYPES:
        raise InvalidSpec(f"unknown problem kind {kind!r}; expected one of {sorted(SPEC_TYPES)}")
    return SPEC_TYPES[kind].from_dict(data)


def heterogeneous_bilevel_spec(**overrides) -> BilevelQuadraticSpec:
    """Declared strongly non-i.i.d. instance used by the drift experiments."""
    base = dict(m=8, d1=4, d2=4, seed=3, mu=1.0, L=4.0, heterogeneity=1.0,
                coupling=0.5, offset_scale=2.0)
    base.update(overrides)
    return BilevelQuadraticSpec(**base)


def analytic_hypergradient(instance, x):
    """Exact ``grad f(x)`` through the inner solution (test oracle only).

    Uses a dense inner solve and a dense inverse-Hessian product:
    ``grad_x f - grad^2_xy g [grad^2_yy g]^{-1} grad_y f`` at ``(x, y*(x))``.
    """
    if not hasattr(instance, "hypergradient"):
        raise NotAvailable(f"no closed form for {type(instance).__name__}")
    x = np.asarray(x, dtype=float)
    if x.shape != (instance.d1,):
        raise NotAvailable(f"x must have shape ({instance.d1},)")
    return instance.hypergradient(x)
