"""Client oracles and problem instances for federated nested optimisation.

Every packaged problem is quadratic, so a client is described by a handful
of dense blocks::

    f_i(x, y) = 1/2 x'Fxx x + x'Fxy y + 1/2 y'Fyy y + a'x + e'y
    g_i(x, y) = 1/2 y'Q y + y'P x + c'y

Stochastic samples are the exact derivative plus zero-mean Gaussian noise
drawn from a caller-supplied :class:`~fednest.rng.RngStream`. Passing two
streams with the same path replays the same sample, which is how the SVRG
corrections evaluate one sample at two points.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np

from .exceptions import ContractViolation, NotAvailable, NumericFault

KINDS = ("bilevel", "minimax", "compositional", "single-level")


class ParamPair(NamedTuple):
    """Global model state: outer variable ``x`` and inner variable ``y``."""

    x: np.ndarray
    y: np.ndarray

    @classmethod
    def zeros(cls, d1, d2):
        return cls(np.zeros(d1), np.zeros(d2))

    def is_finite(self):
        return bool(np.all(np.isfinite(self.x)) and np.all(np.isfinite(self.y)))


@dataclass(frozen=True)
class NoiseLevels:
    """Noise standard deviations.

    Each level is the root of the total variance of the sample, e.g.
    ``E||grad_f(z; xi) - grad_f(z)||^2 = sigma_f**2``. Zero means the oracle
    returns exact derivatives and never touches its random stream.
    """

    sigma_f: float = 0.0
    sigma_g1: float = 0.0
    sigma_g2: float = 0.0

    def __post_init__(self):
        for name in ("sigma_f", "sigma_g1", "sigma_g2"):
            if not getattr(self, name) >= 0:
                raise ContractViolation(f"{name} must be >= 0")

    @property
    def deterministic(self):
        return self.sigma_f == 0 and self.sigma_g1 == 0 and self.sigma_g2 == 0


@dataclass(frozen=True)
class ProblemConstants:
    """Smoothness and convexity constants of a problem instance.

    For the packaged quadratics these are computed from eigenvalues and
    spectral norms, not estimated. ``ell_g1`` bounds the eigenvalues of every
    client y-Hessian (the scale used by the Neumann series); the Lipschitz
    constant of the full gradient of ``g_i`` is kept as ``ell_g1_joint`` and
    the cross-derivative norm as ``ell_cross``. ``ell_f0`` is a gradient bound
    of the outer functions over the ball of radius ``domain_radius`` around
    the solution (quadratics are not globally Lipschitz).
    """

    mu_g: float
    ell_g1: float
    ell_f1: float
    ell_f0: float
    ell_g2: float = 0.0
    ell_f2: float = 0.0
    mu_f: Optional[float] = None
    ell_r0: Optional[float] = None
    ell_r1: Optional[float] = None
    ell_cross: Optional[float] = None
    ell_g1_joint: Optional[float] = None
    domain_radius: float = 1.0

    def __post_init__(self):
        if not self.mu_g > 0:
            raise ContractViolation("mu_g must be positive")
        if self.ell_g1 < self.mu_g:
            raise ContractViolation("ell_g1 must be >= mu_g")

    @property
    def kappa_g(self):
        return self.ell_g1 / self.mu_g

    @property
    def kappa_f(self):
        if self.mu_f is None:
            raise NotAvailable("kappa_f is only defined for minimax problems")
        return self.ell_f1 / self.mu_f


def _noise(rng, sigma, n):
    if sigma == 0:
        return 0.0
    return (sigma / np.sqrt(n)) * rng.normal(n)


def _sym_noise(rng, sigma, d):
    if sigma == 0:
        return None
    g = rng.normal((d, d))
    s = 0.5 * (g + g.T)
    return s * (sigma / np.sqrt(d * (d + 1) / 2.0))


def _check_vec(v, n, name):
    v = np.asarray(v, dtype=float)
    if v.shape != (n,):
        raise ContractViolation(f"{name} has shape {v.shape}, expected ({n},)")
    return v


def _finite(v, what):
    if not np.isfinite(v).all():
        raise NumericFault(f"non-finite value in {what}")
    return v


@dataclass(frozen=True, eq=False)
class QuadraticClient:
    """Stochastic first/second-order oracle of one client.

    Attributes
    ----------
    index : int
        Client id in ``0..m-1``.
    kind : str
        One of ``bilevel``, ``minimax``, ``compositional``.
    Fxx, Fxy, Fyy, a, e : ndarray
        Blocks of the outer quadratic ``f_i``.
    Q, P, c : ndarray
        Blocks of the inner quadratic ``g_i``; ``Q`` is the y-Hessian and
        ``P.T`` the cross derivative ``grad^2_xy g_i`` (shape d1 x d2).
    noise : NoiseLevels
    """

    index: int
    kind: str
    Fxx: np.ndarray
    Fxy: np.ndarray
    Fyy: np.ndarray
    a: np.ndarray
    e: np.ndarray
    Q: np.ndarray
    P: np.ndarray
    c: np.ndarray
    noise: NoiseLevels = field(default_factory=NoiseLevels)

    def __post_init__(self):
        if self.kind not in KINDS[:3]:
            raise ContractViolation(f"unknown client kind {self.kind!r}")
        for name in ("Fxx", "Fxy", "Fyy", "a", "e", "Q", "P", "c"):
            arr = np.array(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        d1, d2 = self.d1, self.d2
        shapes = {"Fxx": (d1, d1), "Fxy": (d1, d2), "Fyy": (d2, d2),
                  "e": (d2,), "Q": (d2, d2), "P": (d2, d1), "c": (d2,)}
        for name, shape in shapes.items():
            if getattr(self, name).shape != shape:
                raise ContractViolation(f"{name} must have shape {shape}")

    @property
    def d1(self):
        return self.a.shape[0]

    @property
    def d2(self):
        return self.Q.shape[0]

    # exact quantities -------------------------------------------------
    def f_value(self, x, y):
        return float(0.5 * x @ self.Fxx @ x + x @ self.Fxy @ y
                     + 0.5 * y @ self.Fyy @ y + self.a @ x + self.e @ y)

    def g_value(self, x, y):
        return float(0.5 * y @ self.Q @ y + y @ self.P @ x + self.c @ y)

    def outer_grads(self, x, y):
        gx = self.Fxx @ x + self.Fxy @ y + self.a
        gy = self.Fxy.T @ x + self.Fyy @ y + self.e
        return gx, gy

    def inner_grad(self, x, y):
        return self.Q @ y + self.P @ x + self.c

    # stochastic oracle ------------------------------------------------
    def _unpack(self, p):
        x = _check_vec(p[0], self.d1, "x")
        y = _check_vec(p[1], self.d2, "y")
        return x, y

    def sample_inner_grad(self, p, rng):
        x, y = self._unpack(p)
        out = self.inner_grad(x, y) + _noise(rng, self.noise.sigma_g1, self.d2)
        return _finite(out, "inner gradient sample")

    def sample_outer_grads(self, p, rng):
        x, y = self._unpack(p)
        gx, gy = self.outer_grads(x, y)
        sigma = self.noise.sigma_f
        if sigma and self.kind == "compositional":
            # f_i does not depend on x, so its x-gradient is exactly zero
            gy = gy + _noise(rng, sigma, self.d2)
        elif sigma:
            n = _noise(rng, sigma, self.d1 + self.d2)
            gx = gx + n[: self.d1]
            gy = gy + n[self.d1:]
        return _finite(gx, "outer x-gradient sample"), _finite(gy, "outer y-gradient sample")

    def sample_hessvec(self, p, v, rng):
        self._unpack(p)
        v = _check_vec(v, self.d2, "v")
        out = self.Q @ v
        if self.kind == "bilevel":
            s = _sym_noise(rng, self.noise.sigma_g2, self.d2)
            if s is not None:
                out = out + s @ v
        return _finite(out, "Hessian-vector sample")

    def sample_jacvec(self, p, v, rng):
        self._unpack(p)
        v = _check_vec(v, self.d2, "v")
        out = self.P.T @ v
        sigma = self.noise.sigma_g2
        if sigma:
            g = rng.normal((self.d1, self.d2)) * (sigma / np.sqrt(self.d1 * self.d2))
            out = out + g @ v
        return _finite(out, "Jacobian-vector sample")


@dataclass(frozen=True, eq=False)
class SingleLevelClient:
    """Client of a single-level problem ``f_i(x) = 1/2 (x-u)'H(x-u)``."""

    index: int
    H: np.ndarray
    u: np.ndarray
    noise: NoiseLevels = field(default_factory=NoiseLevels)
    kind: str = "single-level"

    def __post_init__(self):
        for name in ("H", "u"):
            arr = np.array(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def d1(self):
        return self.u.shape[0]

    def f_value(self, x):
        r = x - self.u
        return float(0.5 * r @ self.H @ r)

    def grad(self, x):
        return self.H @ (x - self.u)

    def sample_grad(self, x, rng):
        x = _check_vec(x, self.d1, "x")
        out = self.grad(x) + _noise(rng, self.noise.sigma_f, self.d1)
        return _finite(out, "gradient sample")


def sample_inner_grad(oracle, p, rng):
    """One stochastic draw of ``grad_y g_i(x, y)``."""
    return oracle.sample_inner_grad(p, rng)


def sample_outer_grads(oracle, p, rng):
    """``(grad_x f_i, grad_y f_i)`` from one shared sample."""
    return oracle.sample_outer_grads(p, rng)


def sample_hessvec(oracle, p, v, rng):
    """One stochastic draw of ``grad^2_yy g_i(x, y) @ v``."""
    return oracle.sample_hessvec(p, v, rng)


def sample_jacvec(oracle, p, v, rng):
    """One stochastic draw of ``grad^2_xy g_i(x, y) @ v`` (length d1)."""
    return oracle.sample_jacvec(p, v, rng)


def _mean(arrays):
    return sum(arrays[1:], arrays[0].copy()) / len(arrays)


class ProblemInstance:
    """A federated nested problem with closed-form ground truth.

    Parameters
    ----------
    kind : str
        ``bilevel``, ``minimax`` or ``compositional``.
    clients : sequence of QuadraticClient
    constants : ProblemConstants, optional
        Computed from the client blocks when omitted.
    spec : object, optional
        The generator spec, kept for config echo.
    """

    def __init__(self, kind, clients, constants=None, spec=None, domain_radius=1.0):
        if kind not in KINDS[:3]:
            raise ContractViolation(f"unknown problem kind {kind!r}")
        self.kind = kind
        self.clients = tuple(clients)
        if not self.clients:
            raise ContractViolation("need at least one client")
        self.spec = spec
        c0 = self.clients[0]
        self.d1, self.d2 = c0.d1, c0.d2
        cl = self.clients
        self.Qbar = _mean([c.Q for c in cl])
        self.Pbar = _mean([c.P for c in cl])
        self.cbar = _mean([c.c for c in cl])
        self.Fxx = _mean([c.Fxx for c in cl])
        self.Fxy = _mean([c.Fxy for c in cl])
        self.Fyy = _mean([c.Fyy for c in cl])
        self.abar = _mean([c.a for c in cl])
        self.ebar = _mean([c.e for c in cl])
        # y*(x) = Y x + y0
        self.Y = -np.linalg.solve(self.Qbar, self.Pbar)
        self.y0 = -np.linalg.solve(self.Qbar, self.cbar)
        H = (self.Fxx + self.Fxy @ self.Y + self.Y.T @ self.Fxy.T
             + self.Y.T @ self.Fyy @ self.Y)
        self.reduced_hessian = 0.5 * (H + H.T)
        self.reduced_grad0 = (self.abar + self.Fxy @ self.y0
                              + self.Y.T @ (self.Fyy @ self.y0 + self.ebar))
        eig = np.linalg.eigvalsh(self.reduced_hessian)
        if eig[0] > 1e-12 * max(1.0, abs(eig[-1])):
            self.x_star = -np.linalg.solve(self.reduced_hessian, self.reduced_grad0)
        else:
            self.x_star = None
        self.y_star = None if self.x_star is None else self.inner_solution(self.x_star)
        self.constants = constants or self._constants(domain_radius)

    @property
    def m(self):
        return len(self.clients)

    @property
    def noise(self):
        return self.clients[0].noise

    def _constants(self, radius):
        cl = self.clients
        mu_each = min(np.linalg.eigvalsh(c.Q)[0] for c in cl)
        mu_g = min(mu_each, np.linalg.eigvalsh(self.Qbar)[0])
        hess_max = max(np.linalg.eigvalsh(c.Q)[-1] for c in cl)

        def joint_norm(A, B, C):
            J = np.block([[A, B], [B.T, C]])
            return np.linalg.norm(J, 2)

        z = np.zeros((self.d1, self.d1))
        ell_g1 = max(joint_norm(z, c.P.T, c.Q) for c in cl)
        ell_cross = max(np.linalg.norm(c.P, 2) for c in cl)
        ell_f1 = max(joint_norm(c.Fxx, c.Fxy, c.Fyy) for c in cl)
        if self.x_star is not None:
            xs, ys = self.x_star, self.y_star
        else:
            xs, ys = np.zeros(self.d1), self.inner_solution(np.zeros(self.d1))
        ell_f0 = max(np.linalg.norm(np.concatenate(c.outer_grads(xs, ys))) for c in cl)
        ell_f0 += ell_f1 * radius
        kw = {}
        if self.kind == "minimax":
            kw["mu_f"] = float(mu_g)
        if self.kind == "compositional":
            kw["ell_r0"] = float(max(np.linalg.norm(c.P, 2) for c in cl))
            kw["ell_r1"] = 0.0
        return ProblemConstants(mu_g=float(mu_g), ell_g1=float(max(hess_max, mu_g)),
                                ell_f1=float(ell_f1), ell_f0=float(ell_f0),
                                ell_cross=float(ell_cross), ell_g1_joint=float(ell_g1),
                                domain_radius=float(radius), **kw)

    # closed forms ----------------------------------------------------
    def inner_solution(self, x):
        """``y*(x) = -Qbar^{-1} (Pbar x + cbar)``."""
        return self.Y @ x + self.y0

    def inner_grad(self, x, y):
        return self.Qbar @ y + self.Pbar @ x + self.cbar

    def outer_grads(self, x, y):
        gx = self.Fxx @ x + self.Fxy @ y + self.abar
        gy = self.Fxy.T @ x + self.Fyy @ y + self.ebar
        return gx, gy

    def f_value(self, x):
        """Reduced objective ``f(x) = mean_i f_i(x, y*(x))``."""
        y = self.inner_solution(x)
        return float(np.mean([c.f_value(x, y) for c in self.clients]))

    def surrogate_gradient(self, x, y):
        """Hypergradient formula evaluated at an arbitrary ``y``."""
        gx, gy = self.outer_grads(x, y)
        return gx - self.Pbar.T @ np.linalg.solve(self.Qbar, gy)

    def hypergradient(self, x):
        return self.surrogate_gradient(x, self.inner_solution(x))

    def as_bilevel(self):
        """The same clients exposed through the generic bilevel path."""
        clients = [QuadraticClient(c.index, "bilevel", c.Fxx, c.Fxy, c.Fyy, c.a, c.e,
                                   c.Q, c.P, c.c, c.noise) for c in self.clients]
        return ProblemInstance("bilevel", clients, spec=self.spec,
                               domain_radius=self.constants.domain_radius)

    def with_noise(self, noise):
        clients = [QuadraticClient(c.index, c.kind, c.Fxx, c.Fxy, c.Fyy, c.a, c.e,
                                   c.Q, c.P, c.c, noise) for c in self.clients]
        return ProblemInstance(self.kind, clients, constants=self.constants, spec=self.spec)

    def __repr__(self):
        return f"ProblemInstance(kind={self.kind!r}, m={self.m}, d1={self.d1}, d2={self.d2})"


class SingleLevelInstance:
    """``min_x mean_i f_i(x)`` with quadratic heterogeneous clients."""

    kind = "single-level"

    def __init__(self, clients, spec=None):
        self.clients = tuple(clients)
        self.spec = spec
        self.d1 = self.clients[0].d1
        self.d2 = 0
        Hbar = _mean([c.H for c in self.clients])
        rhs = _mean([c.H @ c.u for c in self.clients])
        self.Hbar = Hbar
        self.x_star = np.linalg.solve(Hbar, rhs)
        self.y_star = None
        eig = np.linalg.eigvalsh(Hbar)
        L = max(np.linalg.eigvalsh(c.H)[-1] for c in self.clients)
        self.constants = ProblemConstants(mu_g=float(eig[0]), ell_g1=float(max(L, eig[0])),
                                          ell_f1=float(L), ell_f0=float(L), mu_f=float(eig[0]))

    @property
    def m(self):
        return len(self.clients)

    @property
    def noise(self):
        return self.clients[0].noise

    def f_value(self, x):
        return float(np.mean([c.f_value(x) for c in self.clients]))

    def hypergradient(self, x):
        return _mean([c.grad(x) for c in self.clients])

    def inner_solution(self, x):
        raise NotAvailable("single-level problems have no inner variable")

    def __repr__(self):
        return f"SingleLevelInstance(m={self.m}, d={self.d1})"
