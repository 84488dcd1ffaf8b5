"""Composite training loss: PDE residual, initial, boundary, and the
energy-dissipation penalty, with exact parameter gradients.

The energy E(t) is a fixed spatial quadrature of eps^2/2 |grad u|^2 + F(u)
(plus the kinetic density of the advecting field when present); its time
derivative is taken analytically through the quadrature sum,
dE/dt = sum_q w_q (eps^2 grad_u . grad_u_t + f(u) u_t), using the network's
mixed space-time derivative channel.  The penalty hinges on positive slopes:
mean over sampled times of max(0, dE/dt)^2.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import network as net
from .network import (
    ChannelSet,
    ContractViolation,
    JetBatch,
    NetworkSpec,
    TrainingFault,
    channels_boundary,
    channels_energy,
    channels_energy_value,
    channels_jet,
    channels_value,
    forward_jets,
)
from .problems import (
    LOG_CLAMP,
    ProblemSpec,
    mobility_deriv,
    mobility_eval,
    potential_eval,
    potential_fprime,
)
from .sampling import BoundaryBatch, CollocationSet


@dataclass(frozen=True)
class LossWeights:
    lambda_r: float
    lambda_i: float
    lambda_b: float
    lambda_e: float

    def __post_init__(self):
        if min(self.lambda_r, self.lambda_i, self.lambda_b, self.lambda_e) < 0:
            raise ContractViolation("loss weights must be nonnegative")


@dataclass
class LossReport:
    epoch: int
    loss_r: float
    loss_i: float
    loss_b: float
    loss_e: float
    total: float

    CSV_HEADER = "epoch,loss_r,loss_i,loss_b,loss_e,total"

    def csv_row(self) -> str:
        return (f"{self.epoch},{self.loss_r:.10e},{self.loss_i:.10e},"
                f"{self.loss_b:.10e},{self.loss_e:.10e},{self.total:.10e}")


def total_loss(components, weights: LossWeights) -> float:
    """Weighted sum of the (residual, initial, boundary, energy) components."""
    r, i, b, e = components
    return (weights.lambda_r * r + weights.lambda_i * i
            + weights.lambda_b * b + weights.lambda_e * e)


# ---------------------------------------------------------------------------
# Spatial quadrature for the energy functional

DEFAULT_QUAD_COUNTS = {1: (256,), 2: (64, 64), 3: (24, 24, 24)}


@dataclass(frozen=True)
class EnergyQuadrature:
    nodes: np.ndarray    # (Q, d)
    weights: np.ndarray  # (Q,), summing to |domain|
    counts: tuple[int, ...]


def build_quadrature(domain, counts, bc: str) -> EnergyQuadrature:
    """Tensor-product grid over the domain: trapezoid weights for Neumann
    boxes, uniform (periodic-trapezoid) weights for periodic ones."""
    axes_nodes, axes_weights = [], []
    for a, n in enumerate(counts):
        lo, hi = domain.lo[a], domain.hi[a]
        if bc == "periodic":
            h = (hi - lo) / n
            axes_nodes.append(lo + h * np.arange(n))
            axes_weights.append(np.full(n, h))
        else:
            if n < 2:
                raise ContractViolation("trapezoid axis needs >= 2 nodes")
            h = (hi - lo) / (n - 1)
            axes_nodes.append(lo + h * np.arange(n))
            w = np.full(n, h)
            w[0] = w[-1] = 0.5 * h
            axes_weights.append(w)
    grids = np.meshgrid(*axes_nodes, indexing="ij")
    nodes = np.stack([g.reshape(-1) for g in grids], axis=1)
    w = axes_weights[0]
    for wa in axes_weights[1:]:
        w = np.outer(w, wa).reshape(-1)
    return EnergyQuadrature(nodes, w, tuple(counts))


def default_quadrature(prob: ProblemSpec, nodes_per_axis: int | None = None) -> EnergyQuadrature:
    counts = (DEFAULT_QUAD_COUNTS[prob.dim] if nodes_per_axis is None
              else (nodes_per_axis,) * prob.dim)
    return build_quadrature(prob.domain, counts, prob.bc)


# ---------------------------------------------------------------------------
# Potential evaluation with the training clamp

def _clamped_potential(prob: ProblemSpec, u: np.ndarray, counter):
    """(F, f, f', active u) with logarithmic inputs clamped inside (-1, 1).

    ``counter`` is a one-element list accumulating clamp events; pass None
    for strict evaluation (domain errors propagate)."""
    if prob.potential.kind == "polynomial" or counter is None:
        F, f = potential_eval(prob.potential, u)
        return F, f, potential_fprime(prob.potential, u), u
    clipped = np.abs(u) > LOG_CLAMP
    n_clip = int(np.count_nonzero(clipped))
    if n_clip:
        counter[0] += n_clip
        u = np.clip(u, -LOG_CLAMP, LOG_CLAMP)
    F, f = potential_eval(prob.potential, u)
    fp = potential_fprime(prob.potential, u)
    if n_clip:
        fp = np.where(clipped, 0.0, fp)  # clip has zero slope outside
    return F, f, fp, u


# ---------------------------------------------------------------------------
# Group computations (value + adjoint); shared by the public single-component
# operations and the fused training objective.


def _residual_group(jets: JetBatch, prob: ProblemSpec, X: np.ndarray,
                    mu_lag: Optional[np.ndarray], counter):
    n = jets.u.shape[0]
    u, u_t, lap = jets.u, jets.du_dt, jets.laplacian
    F, f, fp, _ = _clamped_potential(prob, u, counter)
    diffusive = prob.eps2 * lap - f
    if mu_lag is not None:
        mu = mu_lag
        dmu = None
    elif prob.mobility.kind == "constant":
        mu = prob.mobility.mu0
        dmu = None
    else:
        mu = mobility_eval(prob.mobility, u)
        dmu = mobility_deriv(prob.mobility, u)
    R = u_t - mu * diffusive
    beta = None
    if prob.advection.present:
        beta = prob.advection.beta(X[:, : prob.dim])
        R = R + np.einsum("bd,bd->b", beta, jets.spatial_grad)
    value = float(R @ R) / n

    c = (2.0 / n) * R
    adj = JetBatch.zeros(jets.channels, n)
    du = mu * fp
    if dmu is not None:
        du = du - dmu * diffusive
    adj.u[:] = c * du
    adj.first[:, jets.channels.first.index(jets.channels.input_dim - 1)] = c
    mu_eps2 = mu * prob.eps2 if np.ndim(mu) else mu * prob.eps2
    for k in range(len(jets.channels.second)):
        adj.second[:, k] = -c * mu_eps2
    if beta is not None:
        for i in range(prob.dim):
            adj.first[:, jets.channels.first.index(i)] += c * beta[:, i]
    return value, adj


def _initial_group(jets: JetBatch, targets: np.ndarray):
    n = jets.u.shape[0]
    e = jets.u - targets
    value = float(e @ e) / n
    adj = JetBatch.zeros(jets.channels, n)
    adj.u[:] = (2.0 / n) * e
    return value, adj


def _boundary_group(jets: JetBatch, batch: BoundaryBatch):
    """Entries: value+derivative jumps (periodic pairs, jets stacked as
    [points; partners]) or normal derivatives (Neumann)."""
    n = batch.n
    adj = JetBatch.zeros(jets.channels, jets.u.shape[0])
    rows = np.arange(n)
    if batch.kind == "periodic":
        e_val = jets.u[:n] - jets.u[n:]
        g = jets.first
        e_der = g[rows, batch.axes] - g[n + rows, batch.axes]
        value = (float(e_val @ e_val) + float(e_der @ e_der)) / (2 * n)
        c = 2.0 / (2 * n)
        adj.u[:n] = c * e_val
        adj.u[n:] = -c * e_val
        adj.first[rows, batch.axes] += c * e_der
        adj.first[n + rows, batch.axes] -= c * e_der
        return value, adj
    sign = np.where(batch.sides == 1, 1.0, -1.0)
    e = sign * jets.first[rows, batch.axes]
    value = float(e @ e) / n
    adj.first[rows, batch.axes] = (2.0 / n) * e * sign
    return value, adj


def _energy_rate_group(jets: JetBatch, prob: ProblemSpec, quad: EnergyQuadrature,
                       n_times: int, counter):
    """Hinge-squared penalty on dE/dt at each sampled time, with adjoints.

    Point layout: one contiguous block of quadrature nodes per time."""
    q = quad.weights.size
    u, u_t = jets.u, jets.du_dt
    g = jets.spatial_grad
    m = jets.mixed_time
    F, f, fp, _ = _clamped_potential(prob, u, counter)
    inner = prob.eps2 * np.einsum("bd,bd->b", g, m) + f * u_t
    dEdt = inner.reshape(n_times, q) @ quad.weights
    hinge = np.maximum(0.0, dEdt)
    value = float(hinge @ hinge) / n_times

    cw = ((2.0 / n_times) * hinge)[:, None] * quad.weights[None, :]
    cw = cw.reshape(-1)
    adj = JetBatch.zeros(jets.channels, u.shape[0])
    adj.u[:] = cw * fp * u_t
    d = prob.dim
    t_col = jets.channels.first.index(jets.channels.input_dim - 1)
    adj.first[:, t_col] = cw * f
    for i in range(d):
        adj.first[:, jets.channels.first.index(i)] += cw * prob.eps2 * m[:, i]
        adj.mixed_time[:, i] = cw * prob.eps2 * g[:, i]
    return value, adj, dEdt


def _energy_input_stack(quad: EnergyQuadrature, times: np.ndarray) -> np.ndarray:
    q, d = quad.nodes.shape
    n_t = times.size
    X = np.empty((n_t * q, d + 1))
    X[:, :d] = np.tile(quad.nodes, (n_t, 1))
    X[:, d] = np.repeat(times, q)
    return X


# ---------------------------------------------------------------------------
# Public single-component operations


def mse_residual(params, spec: NetworkSpec, prob: ProblemSpec, interior: np.ndarray,
                 u_lag: Optional[np.ndarray] = None) -> float:
    """Mean squared PDE residual over interior points (rows are (x, t))."""
    interior = np.atleast_2d(interior)
    if interior.shape[0] == 0:
        raise ContractViolation("empty interior batch")
    if prob.mobility.lagged != (u_lag is not None):
        raise ContractViolation("u_lag must be given iff mobility is lagged")
    jets = forward_jets(params, spec, interior, channels_jet(spec.input_dim))
    mu_lag = mobility_eval(prob.mobility, np.asarray(u_lag)) if u_lag is not None else None
    value, _ = _residual_group(jets, prob, interior, mu_lag, None)
    return value


def mse_initial(params, spec: NetworkSpec, prob: ProblemSpec, initial: np.ndarray) -> float:
    """Mean squared mismatch against the problem's initial data at t = 0."""
    initial = np.atleast_2d(initial)
    if initial.shape[0] == 0:
        raise ContractViolation("empty initial batch")
    X = np.hstack([initial, np.zeros((initial.shape[0], 1))])
    jets = forward_jets(params, spec, X, channels_value(spec.input_dim))
    value, _ = _initial_group(jets, prob.ic.eval(initial))
    return value


def mse_boundary(params, spec: NetworkSpec, prob: ProblemSpec, batch: BoundaryBatch) -> float:
    """Mean squared boundary-condition residual entries."""
    if batch.n == 0:
        raise ContractViolation("empty boundary batch")
    X = batch.points if batch.kind == "neumann" else np.vstack([batch.points, batch.partners])
    jets = forward_jets(params, spec, X, channels_boundary(spec.input_dim))
    value, _ = _boundary_group(jets, batch)
    return value


def energy_at_time(params, spec: NetworkSpec, prob: ProblemSpec,
                   quad: EnergyQuadrature, t: float) -> float:
    """Free energy of the predicted field at time t on the quadrature grid."""
    q = quad.nodes.shape[0]
    X = np.hstack([quad.nodes, np.full((q, 1), t)])
    jets = forward_jets(params, spec, X, channels_energy_value(spec.input_dim))
    F, _ = potential_eval(prob.potential, jets.u)
    dens = 0.5 * prob.eps2 * np.einsum("bd,bd->b", jets.first, jets.first) + F
    if prob.advection.present:
        beta = prob.advection.beta(quad.nodes)
        dens = dens + 0.5 * np.einsum("bd,bd->b", beta, beta)
    return float(quad.weights @ dens)


def energy_rate_at_times(params, spec: NetworkSpec, prob: ProblemSpec,
                         quad: EnergyQuadrature, times) -> np.ndarray:
    """Analytic dE/dt at each requested time."""
    times = np.atleast_1d(np.asarray(times, dtype=np.float64))
    X = _energy_input_stack(quad, times)
    jets = forward_jets(params, spec, X, channels_energy(spec.input_dim))
    _, _, dEdt = _energy_rate_group(jets, prob, quad, times.size, None)
    return dEdt


def energy_penalty(params, spec: NetworkSpec, prob: ProblemSpec,
                   quad: EnergyQuadrature, times) -> float:
    """Mean over sampled times of max(0, dE/dt)^2."""
    dEdt = energy_rate_at_times(params, spec, prob, quad, times)
    hinge = np.maximum(0.0, dEdt)
    return float(hinge @ hinge) / dEdt.size


# ---------------------------------------------------------------------------
# Fused objective for training


def _jet_rows(jets: JetBatch, sl: slice) -> JetBatch:
    return JetBatch(jets.channels, jets.u[sl], jets.first[sl],
                    jets.second[sl], jets.mixed_time[sl])


class CompositeObjective:
    """Weighted PINN loss over one segment's collocation set.

    All four point groups are stacked into a single forward/backward pass
    with the union of their derivative channels.  ``refresh()`` must be
    called after the collocation set is enriched.  With lambda_e = 0 (or the
    penalty disabled) the energy machinery is never constructed, making that
    path identical to a penalty-free build.
    """

    def __init__(self, spec: NetworkSpec, prob: ProblemSpec, weights: LossWeights,
                 colloc: CollocationSet, initial_targets: np.ndarray,
                 quad: Optional[EnergyQuadrature] = None,
                 u_lag_fn=None):
        if colloc.n_interior == 0 or colloc.interior.size == 0:
            raise ContractViolation("empty interior batch")
        if colloc.initial.shape[0] == 0:
            raise ContractViolation("empty initial batch")
        if colloc.n_boundary == 0:
            raise ContractViolation("empty boundary batch")
        if prob.mobility.lagged and u_lag_fn is None:
            raise ContractViolation("lagged mobility needs a u_lag provider")
        self.spec = spec
        self.prob = prob
        self.weights = weights
        self.colloc = colloc
        self.quad = quad
        self.u_lag_fn = u_lag_fn
        self.use_energy = weights.lambda_e > 0.0
        if self.use_energy and quad is None:
            raise ContractViolation("energy penalty requires a quadrature")
        self.initial_targets = np.asarray(initial_targets, dtype=np.float64)
        self.clamp_events = [0]
        self.evaluations = 0
        d = spec.input_dim - 1
        self._cs = ChannelSet(
            spec.input_dim,
            first=tuple(range(spec.input_dim)),
            second=tuple(range(d)),
            mixed_time=tuple(range(d)) if self.use_energy else (),
        )
        self._cs_b = channels_boundary(spec.input_dim)
        self.refresh()

    def refresh(self):
        """Rebuild cached stacks from the (possibly enriched) collocation set."""
        c = self.colloc
        X_r = np.ascontiguousarray(c.interior)
        b = c.boundary
        X_b = (b.points if b.kind == "neumann"
               else np.vstack([b.points, b.partners]))
        X_i = np.hstack([c.initial, np.full((c.initial.shape[0], 1), c.t_start)])
        parts = [X_r, X_i, X_b]
        if self.use_energy:
            parts.append(_energy_input_stack(self.quad, c.energy_times))
        self._X = np.vstack(parts)
        bounds = np.cumsum([0] + [p.shape[0] for p in parts])
        self._sl_r = slice(bounds[0], bounds[1])
        self._sl_i = slice(bounds[1], bounds[2])
        self._sl_b = slice(bounds[2], bounds[3])
        self._sl_e = slice(bounds[3], bounds[4]) if self.use_energy else None
        if self.prob.mobility.lagged:
            u_lag = np.asarray(self.u_lag_fn(X_r[:, : self.prob.dim]))
            self._mu_lag = mobility_eval(self.prob.mobility, u_lag)
        else:
            self._mu_lag = None

    def value_and_grad(self, theta: np.ndarray):
        """Returns (total, gradient, LossReport components tuple)."""
        w = self.weights
        self.evaluations += 1
        jets, tape = forward_jets(theta, self.spec, self._X, self._cs, with_tape=True)
        adj = JetBatch.zeros(self._cs, self._X.shape[0])

        loss_r, a = _residual_group(_jet_rows(jets, self._sl_r), self.prob,
                                    self._X[self._sl_r], self._mu_lag,
                                    self.clamp_events)
        _write_adjoint(adj, a, self._sl_r, w.lambda_r)

        loss_i, a = _initial_group(_jet_rows(jets, self._sl_i), self.initial_targets)
        _write_adjoint(adj, a, self._sl_i, w.lambda_i)

        loss_b, a = _boundary_group(_jet_rows(jets, self._sl_b), self.colloc.boundary)
        _write_adjoint(adj, a, self._sl_b, w.lambda_b)

        loss_e = 0.0
        if self.use_energy:
            loss_e, a, _ = _energy_rate_group(_jet_rows(jets, self._sl_e), self.prob,
                                              self.quad,
                                              self.colloc.energy_times.size,
                                              self.clamp_events)
            _write_adjoint(adj, a, self._sl_e, w.lambda_e)

        grad = net.backprop(tape, adj)
        total = total_loss((loss_r, loss_i, loss_b, loss_e), w)
        if not np.isfinite(total):
            raise TrainingFault(f"non-finite training loss {total!r}")
        if not np.all(np.isfinite(grad)):
            raise TrainingFault("non-finite entries in training gradient")
        return total, grad, (loss_r, loss_i, loss_b, loss_e)

    # Estimators for adaptive enrichment -----------------------------------

    def interior_eta(self, theta):
        def eta(X):
            jets = forward_jets(theta, self.spec, X, channels_jet(self.spec.input_dim))
            mu_lag = None
            if self.prob.mobility.lagged:
                u_lag = np.asarray(self.u_lag_fn(X[:, : self.prob.dim]))
                mu_lag = mobility_eval(self.prob.mobility, u_lag)
            u, u_t, lap = jets.u, jets.du_dt, jets.laplacian
            _, f, _, _ = _clamped_potential(self.prob, u, self.clamp_events)
            mu = mu_lag if mu_lag is not None else (
                self.prob.mobility.mu0 if self.prob.mobility.kind == "constant"
                else mobility_eval(self.prob.mobility, u))
            R = u_t - mu * (self.prob.eps2 * lap - f)
            if self.prob.advection.present:
                beta = self.prob.advection.beta(X[:, : self.prob.dim])
                R = R + np.einsum("bd,bd->b", beta, jets.spatial_grad)
            return R * R
        return eta

    def boundary_eta(self, theta):
        def eta(batch: BoundaryBatch):
            X = (batch.points if batch.kind == "neumann"
                 else np.vstack([batch.points, batch.partners]))
            jets = forward_jets(theta, self.spec, X, self._cs_b)
            n = batch.n
            rows = np.arange(n)
            if batch.kind == "periodic":
                e_val = jets.u[:n] - jets.u[n:]
                e_der = (jets.first[rows, batch.axes]
                         - jets.first[n + rows, batch.axes])
                return e_val * e_val + e_der * e_der
            sign = np.where(batch.sides == 1, 1.0, -1.0)
            e = sign * jets.first[rows, batch.axes]
            return e * e
        return eta


def _write_adjoint(combined: JetBatch, group: JetBatch, sl: slice, lam: float):
    """Scatter one group's scaled adjoint into the stacked adjoint."""
    combined.u[sl] += lam * group.u
    combined.first[sl] += lam * group.first
    if group.second.shape[1]:
        combined.second[sl] += lam * group.second
    if group.mixed_time.shape[1]:
        combined.mixed_time[sl] += lam * group.mixed_time
