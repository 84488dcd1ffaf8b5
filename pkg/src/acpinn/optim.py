"""Optimizers for full-batch PINN training: bias-corrected Adam, limited-memory
BFGS with a strong Wolfe line search, and the Adam-then-L-BFGS schedule."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .network import TrainingFault


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def create(cls, n_params: int, lr: float = 1e-3) -> "AdamState":
        return cls(np.zeros(n_params), np.zeros(n_params), lr=lr)


def adam_step(state: AdamState, theta: np.ndarray, grad: np.ndarray) -> np.ndarray:
    """One bias-corrected Adam update; aborts (state untouched) on a
    non-finite gradient."""
    if theta.shape != grad.shape or theta.shape != state.m.shape:
        raise ValueError("parameter/gradient/state shape mismatch")
    if not np.all(np.isfinite(grad)):
        raise TrainingFault("non-finite gradient in Adam step")
    state.t += 1
    state.m = state.beta1 * state.m + (1.0 - state.beta1) * grad
    state.v = state.beta2 * state.v + (1.0 - state.beta2) * grad * grad
    m_hat = state.m / (1.0 - state.beta1**state.t)
    v_hat = state.v / (1.0 - state.beta2**state.t)
    return theta - state.lr * m_hat / (np.sqrt(v_hat) + state.eps)


# ---------------------------------------------------------------------------
# L-BFGS


@dataclass
class LbfgsState:
    memory: int = 10
    c1: float = 1e-4
    c2: float = 0.9
    max_trials: int = 25
    s_hist: list = field(default_factory=list)
    y_hist: list = field(default_factory=list)
    rho_hist: list = field(default_factory=list)
    f: Optional[float] = None
    g: Optional[np.ndarray] = None
    aux: object = None
    consecutive_failures: int = 0

    def reset_direction_state(self):
        """Drop curvature pairs and cached evaluations (objective changed)."""
        self.s_hist.clear()
        self.y_hist.clear()
        self.rho_hist.clear()
        self.f = None
        self.g = None
        self.aux = None

    def push_pair(self, s: np.ndarray, y: np.ndarray) -> bool:
        """Store (s, y) only when the curvature condition s.y > 0 holds."""
        sy = float(s @ y)
        if sy <= 1e-10 * np.linalg.norm(s) * np.linalg.norm(y):
            return False
        self.s_hist.append(s)
        self.y_hist.append(y)
        self.rho_hist.append(1.0 / sy)
        if len(self.s_hist) > self.memory:
            self.s_hist.pop(0)
            self.y_hist.pop(0)
            self.rho_hist.pop(0)
        return True


def two_loop_direction(state: LbfgsState, grad: np.ndarray) -> np.ndarray:
    """Inverse-Hessian application via the two-loop recursion; plain steepest
    descent on an empty history."""
    q = grad.copy()
    alphas = []
    for s, y, rho in zip(reversed(state.s_hist), reversed(state.y_hist),
                         reversed(state.rho_hist)):
        a = rho * (s @ q)
        alphas.append(a)
        q -= a * y
    if state.s_hist:
        s, y = state.s_hist[-1], state.y_hist[-1]
        q *= (s @ y) / (y @ y)
    for (s, y, rho), a in zip(zip(state.s_hist, state.y_hist, state.rho_hist),
                              reversed(alphas)):
        b = rho * (y @ q)
        q += s * (a - b)
    return -q


@dataclass
class LbfgsStepResult:
    theta: np.ndarray
    f: float
    g: np.ndarray
    aux: object
    accepted: bool
    stagnated: bool
    n_evals: int


def _zoom(phi, a_lo, a_hi, f_lo, f0, df0, c1, c2, budget):
    """Strong Wolfe zoom by safeguarded bisection."""
    best = None
    for _ in range(budget):
        a = 0.5 * (a_lo + a_hi)
        f_a, df_a, pack = phi(a)
        if f_a < f0 and (best is None or f_a < best[1]):
            best = (a, f_a, pack)
        if f_a > f0 + c1 * a * df0 or f_a >= f_lo:
            a_hi = a
        else:
            if abs(df_a) <= -c2 * df0:
                return (a, f_a, pack), True
            if df_a * (a_hi - a_lo) >= 0:
                a_hi = a_lo
            a_lo, f_lo = a, f_a
    return best, False


def _wolfe_search(phi, f0, df0, c1, c2, max_trials):
    """Bracketing strong Wolfe search; falls back to the best
    sufficient-decrease trial when the budget runs out."""
    a_prev, f_prev = 0.0, f0
    a = 1.0
    a_max = 1e4
    best = None
    trials = 0
    while trials < max_trials:
        f_a, df_a, pack = phi(a)
        trials += 1
        if f_a < f0 and (best is None or f_a < best[1]):
            best = (a, f_a, pack)
        if f_a > f0 + c1 * a * df0 or (trials > 1 and f_a >= f_prev):
            out, ok = _zoom(phi, a_prev, a, f_prev, f0, df0, c1, c2,
                            max_trials - trials)
            if out is not None and (ok or out[1] < f0):
                return out
            break
        if abs(df_a) <= -c2 * df0:
            return (a, f_a, pack)
        if df_a >= 0:
            out, ok = _zoom(phi, a, a_prev, f_a, f0, df0, c1, c2,
                            max_trials - trials)
            if out is not None and (ok or out[1] < f0):
                return out
            break
        a_prev, f_prev = a, f_a
        a = min(2.0 * a, a_max)
    return best


def lbfgs_step(state: LbfgsState, theta: np.ndarray,
               value_and_grad: Callable) -> LbfgsStepResult:
    """One quasi-Newton step.  ``value_and_grad(theta) -> (f, g[, aux])``.

    Accepted steps never increase the loss; an exhausted line search leaves
    the iterate unchanged and flags stagnation."""
    evals = 0

    def fg(th):
        nonlocal evals
        evals += 1
        out = value_and_grad(th)
        f, g = out[0], out[1]
        aux = out[2] if len(out) > 2 else None
        return float(f), g, aux

    if state.f is None:
        state.f, state.g, state.aux = fg(theta)
    f0, g0, aux0 = state.f, state.g, state.aux
    if not np.isfinite(f0):
        raise TrainingFault("loss not finite at line-search start")

    d = two_loop_direction(state, g0)
    df0 = float(g0 @ d)
    if df0 >= 0:  # not a descent direction: drop history, fall back
        state.reset_direction_state()
        state.f, state.g, state.aux = f0, g0, aux0
        d = -g0
        df0 = float(g0 @ d)
        if df0 == 0.0:
            state.consecutive_failures += 1
            return LbfgsStepResult(theta, f0, g0, aux0, False, True, evals)

    def phi(a):
        th = theta + a * d
        f, g, aux = fg(th)
        return f, float(g @ d), (th, f, g, aux)

    out = _wolfe_search(phi, f0, df0, state.c1, state.c2, state.max_trials)
    if out is None or out[1] > f0 + 1e-12 * max(1.0, abs(f0)):
        state.consecutive_failures += 1
        return LbfgsStepResult(theta, f0, g0, aux0, False, True, evals)

    theta_new, f_new, g_new, aux_new = out[2]
    state.consecutive_failures = 0
    state.push_pair(theta_new - theta, g_new - g0)
    state.f, state.g, state.aux = f_new, g_new, aux_new
    return LbfgsStepResult(theta_new, f_new, g_new, aux_new, True, False, evals)


# ---------------------------------------------------------------------------
# Hybrid schedule

STAGNATION_LIMIT = 3


@dataclass
class TrainResult:
    theta: np.ndarray
    history: list  # (epoch, loss_r, loss_i, loss_b, loss_e, total)
    epochs_run: int
    stopped_early: bool


def train_hybrid(theta0: np.ndarray, objective, n_adam: int, n_lbfgs: int,
                 adam_lr: float = 1e-3, lbfgs_memory: int = 10,
                 epoch_callback=None) -> TrainResult:
    """Adam for ``n_adam`` epochs, then up to ``n_lbfgs`` L-BFGS steps with
    early stop after three consecutive failed line searches.

    ``objective.value_and_grad(theta) -> (total, grad, components)``.
    ``epoch_callback(epoch, totals)`` runs after each epoch and returns True
    when it changed the objective (e.g. enriched the training set), which
    resets the quasi-Newton state."""
    if n_adam < 0 or n_lbfgs < 0:
        raise ValueError("budgets must be nonnegative")
    theta = np.asarray(theta0, dtype=np.float64).copy()
    history = []
    totals = []
    epoch = 0

    def record(total, comps):
        history.append((epoch, *comps, total))
        totals.append(total)

    adam = AdamState.create(theta.size, lr=adam_lr)
    for _ in range(n_adam):
        epoch += 1
        try:
            total, grad, comps = objective.value_and_grad(theta)
            theta = adam_step(adam, theta, grad)
        except TrainingFault as exc:
            raise TrainingFault(f"epoch {epoch}: {exc}") from exc
        record(total, comps)
        if epoch_callback is not None:
            epoch_callback(epoch, totals)

    lbfgs = LbfgsState(memory=lbfgs_memory)
    stopped_early = False
    for _ in range(n_lbfgs):
        epoch += 1
        try:
            res = lbfgs_step(lbfgs, theta, objective.value_and_grad)
        except TrainingFault as exc:
            raise TrainingFault(f"epoch {epoch}: {exc}") from exc
        theta = res.theta
        record(res.f, res.aux if res.aux is not None else (res.f, 0.0, 0.0, 0.0))
        if epoch_callback is not None:
            if epoch_callback(epoch, totals):
                lbfgs.reset_direction_state()
        if res.stagnated and lbfgs.consecutive_failures >= STAGNATION_LIMIT:
            stopped_early = True
            break
    return TrainResult(theta, history, epoch, stopped_early)
