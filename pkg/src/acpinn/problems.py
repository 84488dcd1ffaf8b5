"""Allen-Cahn problem definitions: potentials, mobilities, residuals,
boundary/initial conditions, random initial fields, and the benchmark
registry."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .network import ContractViolation, Jet, JetBatch, NetworkSpec, channels_boundary, forward_jets

# Logarithmic potential inputs are clamped this far inside (-1, 1) during
# training; clamp events are counted and surfaced, never silent.
LOG_CLAMP = 1.0 - 1e-7


class PotentialDomainError(ValueError):
    """Logarithmic potential evaluated at |u| >= 1."""


@dataclass(frozen=True)
class Box:
    lo: tuple[float, ...]
    hi: tuple[float, ...]

    def __post_init__(self):
        if len(self.lo) != len(self.hi):
            raise ContractViolation("box lo/hi dimension mismatch")
        if any(h <= l for l, h in zip(self.lo, self.hi)):
            raise ContractViolation("box has non-positive extent")

    @property
    def dim(self) -> int:
        return len(self.lo)

    @property
    def volume(self) -> float:
        return float(np.prod(np.asarray(self.hi) - np.asarray(self.lo)))

    def extent(self) -> np.ndarray:
        return np.asarray(self.hi) - np.asarray(self.lo)


@dataclass(frozen=True)
class PotentialSpec:
    kind: str  # "polynomial" | "logarithmic"
    theta: float = float("nan")
    theta_c: float = float("nan")

    def __post_init__(self):
        if self.kind not in ("polynomial", "logarithmic"):
            raise ContractViolation(f"unknown potential kind {self.kind!r}")
        if self.kind == "logarithmic":
            if not (0.0 < self.theta <= self.theta_c):
                raise ContractViolation("logarithmic potential needs 0 < theta <= theta_c")


def potential_eval(p: PotentialSpec, u):
    """Free energy density F(u) and its derivative f(u) = F'(u).

    Polynomial: F = (1 - u^2)^2 / 4, f = u^3 - u.
    Logarithmic: F = theta/2 [(1+u)ln(1+u) + (1-u)ln(1-u)] - theta_c/2 u^2,
    f = theta/2 ln((1+u)/(1-u)) - theta_c u; requires |u| < 1.
    """
    u = np.asarray(u, dtype=np.float64)
    if p.kind == "polynomial":
        one_m = 1.0 - u * u
        return 0.25 * one_m * one_m, u * u * u - u
    if np.any(np.abs(u) >= 1.0):
        raise PotentialDomainError("logarithmic potential requires |u| < 1")
    F = 0.5 * p.theta * ((1.0 + u) * np.log1p(u) + (1.0 - u) * np.log1p(-u)) \
        - 0.5 * p.theta_c * u * u
    f = 0.5 * p.theta * (np.log1p(u) - np.log1p(-u)) - p.theta_c * u
    return F, f


def potential_fprime(p: PotentialSpec, u):
    """f'(u), needed for residual adjoints."""
    u = np.asarray(u, dtype=np.float64)
    if p.kind == "polynomial":
        return 3.0 * u * u - 1.0
    if np.any(np.abs(u) >= 1.0):
        raise PotentialDomainError("logarithmic potential requires |u| < 1")
    return p.theta / (1.0 - u * u) - p.theta_c


def pure_state_bound(p: PotentialSpec) -> float:
    """Positive root s of f(s) = 0: the pure-state bound of the dynamics.

    Polynomial gives 1.  Logarithmic: bisection on (0, 1) to 1e-12; the
    theta -> theta_c limit collapses to 0.
    """
    if p.kind == "polynomial":
        return 1.0
    if p.theta == p.theta_c:
        return 0.0
    lo, hi = 1e-15, 1.0 - 1e-15
    _, flo = potential_eval(p, lo)
    if flo >= 0.0:
        return 0.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        _, fm = potential_eval(p, mid)
        if fm < 0.0:
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-12:
            break
    return 0.5 * (lo + hi)


@dataclass(frozen=True)
class MobilitySpec:
    kind: str  # "constant" | "degenerate"
    mu0: float
    lagged: bool = False

    def __post_init__(self):
        if self.kind not in ("constant", "degenerate"):
            raise ContractViolation(f"unknown mobility kind {self.kind!r}")
        if self.mu0 < 0:
            raise ContractViolation("mobility scale must be nonnegative")


def mobility_eval(m: MobilitySpec, u):
    """mu(u): constant mu0, or degenerate mu0 (1 - u^2) clamped at zero."""
    u = np.asarray(u, dtype=np.float64)
    if m.kind == "constant":
        return np.broadcast_to(np.float64(m.mu0), u.shape).copy() if u.ndim else float(m.mu0)
    val = m.mu0 * np.maximum(0.0, 1.0 - u * u)
    return val if u.ndim else float(val)


def mobility_deriv(m: MobilitySpec, u):
    """d mu / du (zero wherever the degenerate clamp is active)."""
    u = np.asarray(u, dtype=np.float64)
    if m.kind == "constant":
        return np.zeros_like(u)
    return np.where(1.0 - u * u > 0.0, -2.0 * m.mu0 * u, 0.0)


@dataclass(frozen=True)
class AdvectionSpec:
    present: bool = False
    velocity: Optional[Callable[[np.ndarray], np.ndarray]] = None
    label: str = ""

    def beta(self, X: np.ndarray) -> np.ndarray:
        """Velocity field at spatial points X of shape (n, d)."""
        if not self.present:
            raise ContractViolation("advection not present")
        return self.velocity(np.asarray(X, dtype=np.float64))


# ---------------------------------------------------------------------------
# Initial conditions


class InitialCondition:
    name = "base"

    def eval(self, X: np.ndarray) -> np.ndarray:
        raise NotImplementedError


@dataclass(frozen=True)
class PolyCosInitial(InitialCondition):
    """u0(x) = x^2 cos(pi x) on [-1, 1]."""

    name: str = "x2cos"

    def eval(self, X):
        x = np.asarray(X, dtype=np.float64).reshape(-1)
        return x * x * np.cos(np.pi * x)


@dataclass(frozen=True)
class TanhSphereInitial(InitialCondition):
    """Circle/sphere interface: tanh((r0 - |x - c|) / (2 eps))."""

    center: tuple[float, ...]
    radius: float
    epsilon: float
    name: str = "tanh-sphere"

    def eval(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        r = np.linalg.norm(X - np.asarray(self.center), axis=1)
        return np.tanh((self.radius - r) / (2.0 * self.epsilon))


@dataclass(frozen=True)
class CirclesInitial(InitialCondition):
    """-1 plus bump contributions h(|x - c_i| - r_i), h(s) = 2 exp(-eps^2/s^2)
    for s < 0 and 0 otherwise."""

    centers: tuple[tuple[float, float], ...]
    radii: tuple[float, ...]
    epsilon: float
    name: str = "circles"

    def eval(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        u = -np.ones(X.shape[0])
        for (a, b), r in zip(self.centers, self.radii):
            s = np.hypot(X[:, 0] - a, X[:, 1] - b) - r
            inside = s < 0.0
            contrib = np.zeros_like(s)
            contrib[inside] = 2.0 * np.exp(-self.epsilon**2 / s[inside] ** 2)
            u += contrib
        return u


@dataclass(frozen=True)
class DiamondInitial(InitialCondition):
    """-tanh((|x1 + x2 - 1| + |x1 - x2| - 0.1) / (sqrt(2) eps))."""

    epsilon: float
    name: str = "diamond"

    def eval(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        d = np.abs(X[:, 0] + X[:, 1] - 1.0) + np.abs(X[:, 0] - X[:, 1]) - 0.1
        return -np.tanh(d / (math.sqrt(2.0) * self.epsilon))


# ---------------------------------------------------------------------------
# Random initial fields (periodic finite Fourier series, Gaussian coefficients)


@dataclass(frozen=True)
class RandomFieldSpec:
    L: float
    gamma: float
    seed: int
    m: int
    j_idx: np.ndarray  # flat term indices
    k_idx: np.ndarray
    coeffs: np.ndarray  # complex Gaussian coefficients, one per term
    norm: float  # sqrt(term count)


def random_field_build(L: float, gamma: float, seed: int) -> RandomFieldSpec:
    """Draw the coefficient set for a smooth L-periodic random field.

    Modes run over |k| <= m = floor(L / gamma) and |j| <= m_k with
    m_k = floor(sqrt(m^2 - k^2)); real and imaginary coefficient parts are
    independent standard normals from the seeded generator.
    """
    if L <= 0 or gamma <= 0:
        raise ContractViolation("L and gamma must be positive")
    m = int(math.floor(L / gamma))
    rng = np.random.default_rng(seed)
    js, ks = [], []
    for k in range(-m, m + 1):
        m_k = int(math.floor(math.sqrt(m * m - k * k)))
        for j in range(-m_k, m_k + 1):
            js.append(j)
            ks.append(k)
    n = len(js)
    coeffs = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    return RandomFieldSpec(
        L=L, gamma=gamma, seed=seed, m=m,
        j_idx=np.asarray(js), k_idx=np.asarray(ks),
        coeffs=coeffs, norm=math.sqrt(n),
    )


def random_field_eval(rf: RandomFieldSpec, x, y) -> np.ndarray:
    """Real part of the Fourier series at (x, y), normalized to O(1) variance."""
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    out = np.empty_like(x)
    two_pi_over_L = 2.0 * np.pi / rf.L
    # chunk points: the (points x terms) phase matrix can be large
    step = max(1, 2_000_000 // max(1, rf.j_idx.size))
    for s in range(0, x.size, step):
        e = min(x.size, s + step)
        phase = two_pi_over_L * (
            np.outer(x[s:e], rf.j_idx) + np.outer(y[s:e], rf.k_idx)
        )
        out[s:e] = (np.cos(phase) @ rf.coeffs.real - np.sin(phase) @ rf.coeffs.imag)
    return out / rf.norm


@dataclass(frozen=True)
class RandomFieldInitial(InitialCondition):
    """u0 = 0.05 (2 field - 1), the continuous stand-in for pointwise noise."""

    rf: RandomFieldSpec
    name: str = "random-field"

    def eval(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        f = random_field_eval(self.rf, X[:, 0], X[:, 1])
        return 0.05 * (2.0 * f - 1.0)


def initial_field_eval(ic: InitialCondition, x) -> np.ndarray:
    X = np.atleast_2d(np.asarray(x, dtype=np.float64))
    return ic.eval(X)


# ---------------------------------------------------------------------------
# Problem specification


@dataclass(frozen=True)
class ProblemSpec:
    key: str
    domain: Box
    epsilon: float
    potential: PotentialSpec
    mobility: MobilitySpec
    advection: AdvectionSpec
    bc: str  # "periodic" | "neumann"
    ic: InitialCondition
    horizon: float

    def __post_init__(self):
        if self.epsilon <= 0 or self.horizon <= 0:
            raise ContractViolation("epsilon and horizon must be positive")
        if self.bc not in ("periodic", "neumann"):
            raise ContractViolation(f"unknown bc {self.bc!r}")

    @property
    def dim(self) -> int:
        return self.domain.dim

    @property
    def eps2(self) -> float:
        return self.epsilon * self.epsilon


def pde_residual(jet: Jet, prob: ProblemSpec, u_lag: float | None = None,
                 x=None) -> float:
    """Strong-form residual R = u_t - mu (eps^2 Lap u - f(u)) + beta . grad u.

    ``u_lag`` must be supplied exactly when the mobility is lagged; ``x`` is
    required when advection is present (the velocity depends on position).
    """
    if prob.mobility.lagged != (u_lag is not None):
        raise ContractViolation("u_lag must be given iff mobility is lagged")
    mu_arg = u_lag if prob.mobility.lagged else jet.u
    mu = mobility_eval(prob.mobility, mu_arg)
    _, f = potential_eval(prob.potential, jet.u)
    r = jet.du_dt - mu * (prob.eps2 * float(np.sum(jet.d2u_dx2)) - float(f))
    if prob.advection.present:
        if x is None:
            raise ContractViolation("advective residual needs the spatial point x")
        beta = prob.advection.beta(np.atleast_2d(x))[0]
        r += float(beta @ jet.du_dx)
    return float(r)


def boundary_residual(params, spec: NetworkSpec, prob: ProblemSpec, sample,
                      t: float) -> np.ndarray:
    """Boundary condition residual entries for one sample.

    Periodic: sample is (x_low, x_high, axis), a matched point pair on
    opposite faces; returns [u(a) - u(b), du/dn(a) - du/dn(b)] along that
    axis.  Neumann: sample is (x, axis, side) with side in {0, 1}; returns
    [grad(u) . n].
    """
    tol = 1e-9
    cs = channels_boundary(spec.input_dim)
    if prob.bc == "periodic":
        x_a, x_b, axis = sample
        x_a = np.asarray(x_a, dtype=np.float64)
        x_b = np.asarray(x_b, dtype=np.float64)
        if abs(x_a[axis] - prob.domain.lo[axis]) > tol or \
           abs(x_b[axis] - prob.domain.hi[axis]) > tol:
            raise ContractViolation("periodic pair not on opposite faces")
        X = np.stack([np.append(x_a, t), np.append(x_b, t)])
        jets = forward_jets(params, spec, X, cs)
        return np.array([
            jets.u[0] - jets.u[1],
            jets.d1(axis)[0] - jets.d1(axis)[1],
        ])
    x, axis, side = sample
    x = np.asarray(x, dtype=np.float64)
    face = prob.domain.hi[axis] if side else prob.domain.lo[axis]
    if abs(x[axis] - face) > tol:
        raise ContractViolation("sample not on the stated boundary face")
    jets = forward_jets(params, spec, np.append(x, t)[None, :], cs)
    normal = 1.0 if side else -1.0
    return np.array([normal * jets.d1(axis)[0]])


# ---------------------------------------------------------------------------
# Benchmark registry

PROBLEM_KEYS = (
    "ac1d-poly",
    "ac2d-poly",
    "ac3d-poly",
    "ac2d-log",
    "ac2d-log-random",
    "ac2d-log-degenerate",
    "ac2d-advection",
)

# Seven-circle initial data: centers and radii.
_CIRCLES = (
    ((np.pi / 2, np.pi / 2), np.pi / 5),
    ((np.pi / 4, 3 * np.pi / 4), 2 * np.pi / 15),
    ((np.pi / 2, 5 * np.pi / 4), 2 * np.pi / 15),
    ((np.pi, np.pi / 4), np.pi / 10),
    ((3 * np.pi / 2, np.pi / 4), np.pi / 10),
    ((np.pi, np.pi), np.pi / 4),
    ((3 * np.pi / 2, 3 * np.pi / 2), np.pi / 4),
)


def _rotating_velocity(X: np.ndarray) -> np.ndarray:
    beta = np.zeros_like(X)
    beta[:, 1] = -100.0 * (X[:, 0] - 0.5)
    return beta


def make_problem(key: str, seed: int = 0) -> ProblemSpec:
    """Instantiate a registered benchmark problem.

    ``seed`` only matters for the random-initial benchmarks, where it feeds
    the Fourier coefficient draw.
    """
    no_adv = AdvectionSpec(False)
    if key == "ac1d-poly":
        # 1D benchmark u_t - 0.0001 u_xx + 5(u^3 - u) = 0, stored in
        # gradient-flow shape as mu = 5, eps^2 = 0.0001 / 5.
        return ProblemSpec(
            key=key,
            domain=Box((-1.0,), (1.0,)),
            epsilon=math.sqrt(0.0001 / 5.0),
            potential=PotentialSpec("polynomial"),
            mobility=MobilitySpec("constant", 5.0),
            advection=no_adv,
            bc="periodic",
            ic=PolyCosInitial(),
            horizon=1.0,
        )
    if key == "ac2d-poly":
        eps = 0.025
        return ProblemSpec(
            key=key,
            domain=Box((0.0, 0.0), (1.0, 1.0)),
            epsilon=eps,
            potential=PotentialSpec("polynomial"),
            mobility=MobilitySpec("constant", 10.0),
            advection=no_adv,
            bc="neumann",
            ic=TanhSphereInitial((0.5, 0.5), 0.35, eps),
            horizon=10.0,
        )
    if key == "ac3d-poly":
        eps = 0.05
        return ProblemSpec(
            key=key,
            domain=Box((0.0, 0.0, 0.0), (1.0, 1.0, 1.0)),
            epsilon=eps,
            potential=PotentialSpec("polynomial"),
            mobility=MobilitySpec("constant", 10.0),
            advection=no_adv,
            bc="neumann",
            ic=TanhSphereInitial((0.5, 0.5, 0.5), 0.35, eps),
            horizon=1.3,
        )
    if key == "ac2d-log":
        centers = tuple(c for c, _ in _CIRCLES)
        radii = tuple(r for _, r in _CIRCLES)
        return ProblemSpec(
            key=key,
            domain=Box((0.0, 0.0), (2 * np.pi, 2 * np.pi)),
            epsilon=0.1,
            potential=PotentialSpec("logarithmic", theta=0.25, theta_c=1.0),
            mobility=MobilitySpec("constant", 1.0),
            advection=no_adv,
            bc="periodic",
            ic=CirclesInitial(centers, radii, 0.1),
            horizon=5.0,
        )
    if key == "ac2d-log-random":
        rf = random_field_build(2 * np.pi, 1.0, seed)
        return ProblemSpec(
            key=key,
            domain=Box((0.0, 0.0), (2 * np.pi, 2 * np.pi)),
            epsilon=0.04,
            potential=PotentialSpec("logarithmic", theta=0.15, theta_c=0.30),
            mobility=MobilitySpec("constant", 2.0),
            advection=no_adv,
            bc="periodic",
            ic=RandomFieldInitial(rf),
            horizon=20.0,
        )
    if key == "ac2d-log-degenerate":
        rf = random_field_build(2 * np.pi, 0.4, seed)
        return ProblemSpec(
            key=key,
            domain=Box((0.0, 0.0), (2 * np.pi, 2 * np.pi)),
            epsilon=0.04,
            potential=PotentialSpec("logarithmic", theta=0.5, theta_c=0.95),
            mobility=MobilitySpec("degenerate", 2.0, lagged=True),
            advection=no_adv,
            bc="periodic",
            ic=RandomFieldInitial(rf),
            horizon=10.0,
        )
    if key == "ac2d-advection":
        eps = 0.01
        return ProblemSpec(
            key=key,
            domain=Box((0.0, 0.0), (1.0, 1.0)),
            epsilon=eps,
            potential=PotentialSpec("polynomial"),
            mobility=MobilitySpec("constant", 100.0),
            advection=AdvectionSpec(True, _rotating_velocity, "(0, -100(x1-0.5))"),
            bc="neumann",
            ic=DiamondInitial(eps),
            horizon=0.06,
        )
    raise KeyError(f"unknown problem key {key!r}; known: {', '.join(PROBLEM_KEYS)}")
