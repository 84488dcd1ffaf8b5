"""Pseudo-spectral reference solver for the 1D periodic benchmark, the
relative l2 error metric, and discrete-energy diagnostics.

Space is discretized by Fourier collocation; time stepping is fourth-order
exponential time differencing (ETDRK4, Cox-Matthews tableau) with the phi
coefficients evaluated by the Kassam-Trefethen contour-integral trick.  The
full linearization of the reaction term (mu u) joins the diffusion in the
exponential part, leaving N(u) = -mu u^3 for the explicit stages.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .network import ContractViolation
from .problems import ProblemSpec, potential_eval

INTEGRATOR_ID = "etdrk4-fourier"
DEFAULT_MODES = 512
DEFAULT_DT = 1e-4


class SolverFault(RuntimeError):
    """Reference solve produced non-finite modes."""


@dataclass
class ReferenceSolution:
    x: np.ndarray       # (N,) uniform periodic grid on [-1, 1)
    times: np.ndarray   # (S,)
    values: np.ndarray  # (S, N)
    n_modes: int
    dt: float
    integrator: str = INTEGRATOR_ID


def _etdrk4_coeffs(lin: np.ndarray, dt: float, n_roots: int = 32):
    """phi-function weights via mean over a complex contour around dt*lin."""
    lr = dt * lin[:, None] + np.exp(
        1j * np.pi * (np.arange(n_roots) + 0.5) / n_roots)[None, :]
    elr = np.exp(lr)
    q = dt * np.real(((np.exp(lr / 2.0) - 1.0) / lr).mean(axis=1))
    f1 = dt * np.real(((-4.0 - lr + elr * (4.0 - 3.0 * lr + lr**2)) / lr**3).mean(axis=1))
    f2 = dt * np.real(((2.0 + lr + elr * (lr - 2.0)) / lr**3).mean(axis=1))
    f3 = dt * np.real(((-4.0 - 3.0 * lr - lr**2 + elr * (4.0 - lr)) / lr**3).mean(axis=1))
    e_full = np.exp(dt * lin)
    e_half = np.exp(0.5 * dt * lin)
    return e_full, e_half, q, f1, f2, f3


def solve_spectral_1d(prob: ProblemSpec, n_modes: int = DEFAULT_MODES,
                      dt: float = DEFAULT_DT, snapshot_times=None,
                      include_reaction: bool = True,
                      initial_values: np.ndarray | None = None) -> ReferenceSolution:
    """Integrate u_t = mu (eps^2 u_xx - f(u)) on the periodic 1D domain.

    Snapshot intervals are split into whole steps of size <= dt.  With
    ``include_reaction`` off the equation reduces to pure diffusion
    u_t = mu eps^2 u_xx (useful as an analytic check).
    """
    if prob.dim != 1 or prob.bc != "periodic":
        raise ContractViolation("spectral solver covers the periodic 1D problem")
    if prob.potential.kind != "polynomial":
        raise ContractViolation("spectral solver covers the polynomial potential")
    lo, hi = prob.domain.lo[0], prob.domain.hi[0]
    length = hi - lo
    N = int(n_modes)
    x = lo + length * np.arange(N) / N
    if snapshot_times is None:
        snapshot_times = np.linspace(0.0, prob.horizon, 11)
    times = np.asarray(snapshot_times, dtype=np.float64)
    if times[0] != 0.0 or np.any(np.diff(times) <= 0):
        raise ContractViolation("snapshot times must start at 0 and increase")

    mu = prob.mobility.mu0
    k = 2.0 * np.pi / length * np.fft.rfftfreq(N) * N
    lin = -mu * prob.eps2 * k * k
    if include_reaction:
        lin = lin + mu  # linear part of -mu f(u) = -mu(u^3 - u)

    u = prob.ic.eval(x[:, None]) if initial_values is None else np.asarray(initial_values, dtype=np.float64)
    v = np.fft.rfft(u)
    out = np.empty((times.size, N))
    out[0] = u

    def nonlin(v_hat):
        if not include_reaction:
            return np.zeros_like(v_hat)
        u_phys = np.fft.irfft(v_hat, n=N)
        return -mu * np.fft.rfft(u_phys**3)

    coeff_cache: dict[float, tuple] = {}
    step_index = 0
    for s in range(1, times.size):
        interval = times[s] - times[s - 1]
        n_steps = max(1, int(math.ceil(interval / dt - 1e-12)))
        h = interval / n_steps
        key = round(h, 15)
        if key not in coeff_cache:
            coeff_cache[key] = _etdrk4_coeffs(lin, h)
        e_full, e_half, q, f1, f2, f3 = coeff_cache[key]
        for _ in range(n_steps):
            nv = nonlin(v)
            a = e_half * v + q * nv
            na = nonlin(a)
            b = e_half * v + q * na
            nb = nonlin(b)
            c = e_half * a + q * (2.0 * nb - nv)
            nc = nonlin(c)
            v = e_full * v + f1 * nv + 2.0 * f2 * (na + nb) + f3 * nc
            step_index += 1
            if not np.all(np.isfinite(v)):
                raise SolverFault(f"non-finite modes at step {step_index}")
        out[s] = np.fft.irfft(v, n=N)
    return ReferenceSolution(x, times, out, N, dt)


def evaluate_trig(ref: ReferenceSolution, xq: np.ndarray, snapshot: int) -> np.ndarray:
    """Trigonometric interpolation of one snapshot to arbitrary points."""
    N = ref.x.size
    lo = ref.x[0]
    length = (ref.x[1] - ref.x[0]) * N
    v = np.fft.rfft(ref.values[snapshot]) / N
    k = 2.0 * np.pi / length * np.arange(v.size)
    xq = np.asarray(xq, dtype=np.float64).reshape(-1) - lo
    phase = np.outer(xq, k)
    # real signal: sum c_0 + 2 Re(c_k e^{ikx}) for interior modes
    scale = np.full(v.size, 2.0)
    scale[0] = 1.0
    if N % 2 == 0:
        scale[-1] = 1.0
    return (np.cos(phase) * (scale * v.real) - np.sin(phase) * (scale * v.imag)).sum(axis=1)


def relative_l2(reference: np.ndarray, predicted: np.ndarray) -> float:
    """||u_ref - u_pred||_2 / ||u_ref||_2 over matching test points."""
    reference = np.asarray(reference, dtype=np.float64).reshape(-1)
    predicted = np.asarray(predicted, dtype=np.float64).reshape(-1)
    if reference.shape != predicted.shape:
        raise ContractViolation("reference/prediction length mismatch")
    denom = np.linalg.norm(reference)
    if denom == 0.0:
        raise ContractViolation("reference has zero norm")
    return float(np.linalg.norm(reference - predicted) / denom)


def discrete_energy_series(x: np.ndarray, times: np.ndarray, values: np.ndarray,
                           prob: ProblemSpec, tol: float = 1e-10):
    """Energy E(t) of grid snapshots (spectral gradient, periodic quadrature)
    and the indices where it increases beyond ``tol``."""
    N = x.size
    length = (x[1] - x[0]) * N
    k = 2.0 * np.pi / length * np.fft.rfftfreq(N) * N
    h = length / N
    energies = np.empty(times.size)
    for i in range(times.size):
        u = values[i]
        ux = np.fft.irfft(1j * k * np.fft.rfft(u), n=N)
        F, _ = potential_eval(prob.potential, u)
        energies[i] = h * float(np.sum(0.5 * prob.eps2 * ux * ux + F))
    violations = [int(i) for i in range(times.size - 1)
                  if energies[i + 1] > energies[i] + tol]
    return times, energies, violations


# ---------------------------------------------------------------------------
# Golden reference files


def default_golden_dir() -> Path:
    return Path(__file__).parent / "data"


def golden_paths(key: str, directory: Path | None = None) -> tuple[Path, Path]:
    d = Path(directory) if directory is not None else default_golden_dir()
    return d / f"{key}-reference.csv", d / f"{key}-reference.json"


def write_golden(ref: ReferenceSolution, key: str, directory: Path | None = None) -> Path:
    """Persist snapshots as CSV rows (t, x, u) with a metadata sidecar."""
    csv_path, meta_path = golden_paths(key, directory)
    csv_path.parent.mkdir(parents=True, exist_ok=True)
    lines = ["t,x,u"]
    for i, t in enumerate(ref.times):
        for j in range(ref.x.size):
            lines.append(f"{t:.12g},{ref.x[j]:.12g},{ref.values[i, j]:.16e}")
    body = "\n".join(lines) + "\n"
    csv_path.write_text(body)
    meta = {
        "problem": key,
        "n_modes": ref.n_modes,
        "dt": ref.dt,
        "integrator": ref.integrator,
        "snapshots": len(ref.times),
        "sha256": hashlib.sha256(body.encode()).hexdigest(),
    }
    meta_path.write_text(json.dumps(meta, indent=2) + "\n")
    return csv_path


def read_golden(key: str, directory: Path | None = None) -> ReferenceSolution:
    csv_path, meta_path = golden_paths(key, directory)
    if not csv_path.exists():
        raise FileNotFoundError(
            f"golden reference for {key!r} not found at {csv_path}; "
            f"run `acpinn reference build {key}`")
    meta = json.loads(meta_path.read_text()) if meta_path.exists() else {}
    raw = np.loadtxt(csv_path, delimiter=",", skiprows=1)
    times = np.unique(raw[:, 0])
    xs = np.unique(raw[:, 1])
    values = np.empty((times.size, xs.size))
    # rows are written snapshot-major on the fixed grid
    order_t = {t: i for i, t in enumerate(times)}
    order_x = {x: j for j, x in enumerate(xs)}
    for t, x, u in raw:
        values[order_t[t], order_x[x]] = u
    return ReferenceSolution(
        xs, times, values,
        int(meta.get("n_modes", xs.size)),
        float(meta.get("dt", DEFAULT_DT)),
        meta.get("integrator", INTEGRATOR_ID),
    )
