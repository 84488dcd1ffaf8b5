"""Training-point generation: Latin hypercube draws, boundary/initial/energy
sampling, and residual-driven adaptive enrichment with bulk marking."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .network import ContractViolation
from .problems import Box, ProblemSpec

# Enrichment constants: minimum epochs before the trigger may fire, candidate
# growth fraction, and the cadence at which the trigger is evaluated.
N_EX = 1000
GROWTH_FRACTION = 0.20
TRIGGER_PERIOD = 100


def _rng(seed) -> np.random.Generator:
    return np.random.default_rng(seed)


def latin_hypercube(n: int, box: Box | Sequence, seed) -> np.ndarray:
    """n points in the box with exactly one sample per axis stratum.

    Per axis the unit interval is cut into n equal strata; a random
    permutation assigns one point to each, jittered uniformly inside it.
    """
    if n < 1:
        raise ContractViolation("latin_hypercube needs n >= 1")
    if not isinstance(box, Box):
        lo, hi = box
        box = Box(tuple(np.atleast_1d(lo)), tuple(np.atleast_1d(hi)))
    rng = _rng(seed)
    d = box.dim
    unit = np.empty((n, d))
    for a in range(d):
        perm = rng.permutation(n)
        unit[:, a] = (perm + rng.uniform(size=n)) / n
    return np.asarray(box.lo) + unit * box.extent()


@dataclass
class MarkResult:
    indices: np.ndarray
    all_zero: bool


def dorfler_mark(etas: np.ndarray, tau: float) -> MarkResult:
    """Smallest set of estimator indices carrying at least tau of the total.

    Descending sort, shortest qualifying prefix; ties broken by original
    index order.  All-zero estimators yield an empty, flagged result.
    """
    etas = np.asarray(etas, dtype=np.float64)
    if not 0.0 < tau < 1.0:
        raise ContractViolation("bulk parameter tau must lie in (0, 1)")
    if np.any(etas < 0.0):
        raise ContractViolation("estimators must be nonnegative")
    total = etas.sum()
    if total == 0.0:
        return MarkResult(np.empty(0, dtype=int), True)
    order = np.argsort(-etas, kind="stable")
    csum = np.cumsum(etas[order])
    count = int(np.searchsorted(csum, tau * total - 1e-15 * total) + 1)
    return MarkResult(order[:count], False)


def adapt_trigger(history: Sequence[float], tol_s: float, epochs: int,
                  n_ex: int = N_EX) -> bool:
    """Fire when the largest of the last three loss differences
    L_k = Loss(k) - Loss(k-1) reaches tol_s, once past the epoch floor."""
    if len(history) < 4:
        return False
    if epochs <= n_ex:
        return False
    h = list(history[-4:])
    diffs = [h[i + 1] - h[i] for i in range(3)]
    return max(diffs) >= tol_s


# ---------------------------------------------------------------------------
# Collocation sets


@dataclass
class BoundaryBatch:
    """Boundary samples for one segment.

    Periodic: ``points`` on the low face, ``partners`` the matched high-face
    points.  Neumann: ``points`` on faces with ``sides`` in {0, 1}.  ``axes``
    names the pairing/normal axis per sample; the time coordinate is the last
    input column.
    """

    kind: str
    points: np.ndarray          # (n, d+1)
    axes: np.ndarray            # (n,)
    partners: Optional[np.ndarray] = None  # periodic, (n, d+1)
    sides: Optional[np.ndarray] = None     # neumann, (n,)

    @property
    def n(self) -> int:
        return self.points.shape[0]

    def extend(self, other: "BoundaryBatch") -> None:
        if other.kind != self.kind:
            raise ContractViolation("boundary batch kind mismatch")
        self.points = np.vstack([self.points, other.points])
        self.axes = np.concatenate([self.axes, other.axes])
        if self.kind == "periodic":
            self.partners = np.vstack([self.partners, other.partners])
        else:
            self.sides = np.concatenate([self.sides, other.sides])


@dataclass
class CollocationSet:
    """All training points for one time segment."""

    interior: np.ndarray        # (n_r, d+1)
    boundary: BoundaryBatch
    initial: np.ndarray         # (n_i, d) at the segment start time
    energy_times: np.ndarray    # (n_e,)
    t_start: float
    t_end: float

    @property
    def n_interior(self) -> int:
        return self.interior.shape[0]

    @property
    def n_boundary(self) -> int:
        return self.boundary.n


def sample_interior(prob: ProblemSpec, n: int, t_lo: float, t_hi: float, seed) -> np.ndarray:
    box = Box(prob.domain.lo + (t_lo,), prob.domain.hi + (t_hi,))
    return latin_hypercube(n, box, seed)


def sample_initial(prob: ProblemSpec, n: int, seed) -> np.ndarray:
    return latin_hypercube(n, prob.domain, seed)


def sample_energy_times(n: int, t_lo: float, t_hi: float, seed) -> np.ndarray:
    return latin_hypercube(n, ((t_lo,), (t_hi,)), seed)[:, 0]


def sample_boundary(prob: ProblemSpec, n: int, t_lo: float, t_hi: float, seed) -> BoundaryBatch:
    """n boundary samples; axes (and Neumann faces) cycle round-robin while
    in-face coordinates and times come from one Latin hypercube draw."""
    d = prob.dim
    # one LHS draw over (d-1 in-face coords + time)
    face_coords = latin_hypercube(n, ((0.0,) * d, (1.0,) * d), seed)
    lo = np.asarray(prob.domain.lo)
    ext = prob.domain.extent()
    times = t_lo + face_coords[:, -1] * (t_hi - t_lo)
    axes = np.arange(n) % d
    if prob.bc == "periodic":
        pts = np.empty((n, d + 1))
        partners = np.empty((n, d + 1))
        for i in range(n):
            a = axes[i]
            x = lo + face_coords[i, :d] * ext
            x[a] = prob.domain.lo[a]
            pts[i, :d], pts[i, d] = x, times[i]
            x2 = x.copy()
            x2[a] = prob.domain.hi[a]
            partners[i, :d], partners[i, d] = x2, times[i]
        return BoundaryBatch("periodic", pts, axes, partners=partners)
    sides = (np.arange(n) // d) % 2
    pts = np.empty((n, d + 1))
    for i in range(n):
        a = axes[i]
        x = lo + face_coords[i, :d] * ext
        x[a] = prob.domain.hi[a] if sides[i] else prob.domain.lo[a]
        pts[i, :d], pts[i, d] = x, times[i]
    return BoundaryBatch("neumann", pts, axes, sides=sides)


def build_collocation(prob: ProblemSpec, n_r: int, n_b: int, n_i: int, n_e: int,
                      t_lo: float, t_hi: float, seeds) -> CollocationSet:
    """Fresh Latin hypercube training set for the segment [t_lo, t_hi].

    ``seeds`` supplies four independent streams (interior, boundary,
    initial, energy)."""
    s_int, s_bnd, s_ini, s_en = seeds
    return CollocationSet(
        interior=sample_interior(prob, n_r, t_lo, t_hi, s_int),
        boundary=sample_boundary(prob, n_b, t_lo, t_hi, s_bnd),
        initial=sample_initial(prob, n_i, s_ini),
        energy_times=sample_energy_times(n_e, t_lo, t_hi, s_en),
        t_start=t_lo,
        t_end=t_hi,
    )


@dataclass
class AdaptState:
    """Bookkeeping for the enrichment loop of one training run."""

    tau: float
    tol_s: float
    n_ex: int = N_EX
    growth: float = GROWTH_FRACTION
    period: int = TRIGGER_PERIOD
    rounds: int = 0
    events: list = field(default_factory=list)

    def __post_init__(self):
        if not 0.0 < self.tau < 1.0:
            raise ContractViolation("tau must lie in (0, 1)")


@dataclass
class ResampleReport:
    candidates: int
    marked: int
    marked_interior: int
    marked_boundary: int
    all_zero: bool


def adaptive_resample(
    state: AdaptState,
    prob: ProblemSpec,
    colloc: CollocationSet,
    interior_eta: Callable[[np.ndarray], np.ndarray],
    boundary_eta: Callable[[BoundaryBatch], np.ndarray],
    seed,
) -> ResampleReport:
    """One enrichment round: draw fresh candidates sized at the growth
    fraction of the current interior+boundary count (split proportionally),
    score them with the residual estimators, bulk-mark, and append the marked
    points to the training set in place."""
    n_cur = colloc.n_interior + colloc.n_boundary
    n_v = int(math.ceil(state.growth * n_cur))
    n_v_int = int(round(n_v * colloc.n_interior / n_cur))
    n_v_bnd = n_v - n_v_int
    seed_int, seed_bnd = np.random.SeedSequence(seed).spawn(2)

    etas = []
    cand_interior = None
    cand_boundary = None
    if n_v_int > 0:
        cand_interior = sample_interior(prob, n_v_int, colloc.t_start, colloc.t_end, seed_int)
        etas.append(np.asarray(interior_eta(cand_interior)))
    if n_v_bnd > 0:
        cand_boundary = sample_boundary(prob, n_v_bnd, colloc.t_start, colloc.t_end, seed_bnd)
        etas.append(np.asarray(boundary_eta(cand_boundary)))
    eta = np.concatenate(etas)

    mark = dorfler_mark(eta, state.tau)
    state.rounds += 1
    if mark.all_zero:
        return ResampleReport(n_v, 0, 0, 0, True)

    sel = np.zeros(eta.size, dtype=bool)
    sel[mark.indices] = True
    sel_int = sel[:n_v_int]
    sel_bnd = sel[n_v_int:]
    n_add_int = int(sel_int.sum())
    n_add_bnd = int(sel_bnd.sum())
    if n_add_int:
        colloc.interior = np.vstack([colloc.interior, cand_interior[sel_int]])
    if n_add_bnd:
        sub = BoundaryBatch(
            cand_boundary.kind,
            cand_boundary.points[sel_bnd],
            cand_boundary.axes[sel_bnd],
            partners=None if cand_boundary.partners is None else cand_boundary.partners[sel_bnd],
            sides=None if cand_boundary.sides is None else cand_boundary.sides[sel_bnd],
        )
        colloc.boundary.extend(sub)
    return ResampleReport(n_v, n_add_int + n_add_bnd, n_add_int, n_add_bnd, False)
