"""Segment-by-segment time marching.

Each time segment [t_{j-1}, t_j] trains its own network: the first against
the given initial data, later ones against the previous segment's prediction
at the hand-off time (sampled at fresh points).  Optional weight transfer
warm-starts a segment from its predecessor; lagged mobility freezes mu at the
previous segment's prediction.  All checkpoints, loss/adaptivity/energy logs,
snapshots, and the run summary land in one run directory.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from . import network as net
from .losses import (
    CompositeObjective,
    LossWeights,
    build_quadrature,
    default_quadrature,
    energy_at_time,
    mse_initial,
)
from .network import NetworkSpec, ParameterVector, TrainingFault
from .optim import train_hybrid
from .problems import ProblemSpec
from .reference import read_golden, relative_l2
from .sampling import (
    AdaptState,
    CollocationSet,
    adapt_trigger,
    adaptive_resample,
    build_collocation,
)

STATE_FILE = "state.json"
SEGMENT_DIR = "segments"

# stream ids for per-segment seed derivation
_S_NET, _S_INTERIOR, _S_BOUNDARY, _S_INITIAL, _S_ENERGY, _S_ADAPT = range(6)


def stream_seed(master: int, segment: int, stream: int, extra: int = 0):
    return np.random.SeedSequence([master, segment, stream, extra])


@dataclass(frozen=True)
class TimeSegment:
    index: int           # j >= 1
    t_start: float
    t_end: float
    ic_source: str       # "given" | "previous"
    warm_start: str      # "fresh" | "transfer"


@dataclass
class SegmentRecord:
    segment: TimeSegment
    params: ParameterVector
    final_components: tuple
    final_total: float
    epochs: int
    n_interior: int
    n_boundary: int


@dataclass
class RunState:
    spec: NetworkSpec
    records: list[SegmentRecord] = field(default_factory=list)

    @property
    def completed(self) -> int:
        return len(self.records)

    def predictor(self, index: int) -> Callable[[np.ndarray], np.ndarray]:
        """Value evaluator for the trained network of segment ``index``."""
        rec = self.records[index - 1]

        def evaluate(X: np.ndarray) -> np.ndarray:
            return net.network_values(rec.params, self.spec, X)

        return evaluate


def network_spec_for(prob: ProblemSpec, depth: int, width: int) -> NetworkSpec:
    out_act = "tanh" if prob.potential.kind == "logarithmic" else "linear"
    return NetworkSpec(depth=depth, width=width, input_dim=prob.dim + 1,
                       output_activation=out_act)


def plan_segments(config, prob: ProblemSpec) -> list[TimeSegment]:
    """Tile [0, horizon] with the configured step (single segment when the
    adaptive-time toggle is off)."""
    if not config.adaptive_time:
        return [TimeSegment(1, 0.0, config.horizon, "given",
                            "fresh")]
    n = min(config.n_max, int(math.ceil(config.horizon / config.dt - 1e-9)))
    segs = []
    for j in range(1, n + 1):
        segs.append(TimeSegment(
            j, (j - 1) * config.dt, j * config.dt,
            "given" if j == 1 else "previous",
            "transfer" if (config.transfer_weights and j > 1) else "fresh",
        ))
    return segs


def lagged_mobility_provider(run_state: RunState, prob: ProblemSpec,
                             segment: TimeSegment):
    """Field values used to freeze the mobility over one segment: the given
    initial data for j = 1, the previous segment's prediction at t_{j-1}
    otherwise."""
    if segment.index == 1:
        return lambda X: prob.ic.eval(X)
    prev = run_state.predictor(segment.index - 1)
    t_prev = segment.t_start

    def u_lag(X: np.ndarray) -> np.ndarray:
        pts = np.hstack([X, np.full((X.shape[0], 1), t_prev)])
        return prev(pts)

    return u_lag


# ---------------------------------------------------------------------------
# Checkpointing


def checkpoint_save(run_state: RunState, out: Path, config_text: str) -> None:
    out = Path(out)
    seg_dir = out / SEGMENT_DIR
    seg_dir.mkdir(parents=True, exist_ok=True)
    for rec in run_state.records:
        path = seg_dir / f"seg_{rec.segment.index:03d}.ckpt"
        if not path.exists():
            net.save_checkpoint(path, run_state.spec, rec.params)
    state = {
        "completed": run_state.completed,
        "segments": [
            {
                "index": r.segment.index,
                "t_start": r.segment.t_start,
                "t_end": r.segment.t_end,
                "ic_source": r.segment.ic_source,
                "warm_start": r.segment.warm_start,
                "final_total": r.final_total,
                "final_components": list(r.final_components),
                "epochs": r.epochs,
                "n_interior": r.n_interior,
                "n_boundary": r.n_boundary,
            }
            for r in run_state.records
        ],
        "config": config_text,
    }
    (out / STATE_FILE).write_text(json.dumps(state, indent=2) + "\n")


def checkpoint_load(out: Path, spec: NetworkSpec) -> RunState:
    out = Path(out)
    state = json.loads((out / STATE_FILE).read_text())
    run_state = RunState(spec)
    for meta in state["segments"]:
        path = out / SEGMENT_DIR / f"seg_{meta['index']:03d}.ckpt"
        ck_spec, params = net.load_checkpoint(path)
        if ck_spec != spec:
            raise net.CheckpointFormatError(
                f"checkpoint {path} architecture {ck_spec} != configured {spec}")
        run_state.records.append(SegmentRecord(
            TimeSegment(meta["index"], meta["t_start"], meta["t_end"],
                        meta["ic_source"], meta["warm_start"]),
            params,
            tuple(meta["final_components"]),
            meta["final_total"],
            meta["epochs"],
            meta["n_interior"],
            meta["n_boundary"],
        ))
    return run_state


# ---------------------------------------------------------------------------
# The march


class _TrackedObjective:
    """Forwards evaluations while remembering the latest iterate, so the
    enrichment callback can score candidates at the current parameters."""

    def __init__(self, inner: CompositeObjective, theta0: np.ndarray):
        self.inner = inner
        self.theta = theta0

    def value_and_grad(self, theta):
        self.theta = theta
        return self.inner.value_and_grad(theta)


@dataclass
class MarchResult:
    run_state: RunState
    loss_rows: list
    adapt_rows: list
    clamp_events: int
    segments: list[TimeSegment]


def march_segments(prob: ProblemSpec, config, out: Optional[Path] = None,
                   resume: bool = False, log: Optional[Callable] = None) -> MarchResult:
    """Train every segment in order, saving checkpoints as they complete.

    On a training fault the completed segments remain saved and the fault is
    re-raised."""
    spec = network_spec_for(prob, config.depth, config.width)
    segments = plan_segments(config, prob)
    run_state = RunState(spec)
    loss_rows: list = []
    adapt_rows: list = []
    clamp_events = 0
    config_text = config.to_ini() if hasattr(config, "to_ini") else ""

    if resume and out is not None and (Path(out) / STATE_FILE).exists():
        run_state = checkpoint_load(Path(out), spec)
        if log:
            log(f"resuming after segment {run_state.completed}")

    weights = LossWeights(
        config.lambda_r, config.lambda_i, config.lambda_b,
        config.lambda_e if config.energy_penalty else 0.0,
    )
    use_energy = weights.lambda_e > 0.0
    quad = (build_quadrature(prob.domain, (config.quad_nodes,) * prob.dim, prob.bc)
            if use_energy else None)

    for seg in segments[run_state.completed:]:
        t0 = time.perf_counter()
        seeds = [stream_seed(config.seed, seg.index, s)
                 for s in (_S_INTERIOR, _S_BOUNDARY, _S_INITIAL, _S_ENERGY)]
        n_e = config.n_e if use_energy else 0
        colloc = build_collocation(prob, config.n_r, config.n_b, config.n_i,
                                   n_e, seg.t_start, seg.t_end, seeds)

        if seg.ic_source == "given":
            targets = prob.ic.eval(colloc.initial)
        else:
            prev = run_state.predictor(seg.index - 1)
            pts = np.hstack([colloc.initial,
                             np.full((colloc.initial.shape[0], 1), seg.t_start)])
            targets = prev(pts)

        u_lag_fn = (lagged_mobility_provider(run_state, prob, seg)
                    if prob.mobility.lagged else None)

        objective = CompositeObjective(spec, prob, weights, colloc, targets,
                                       quad=quad, u_lag_fn=u_lag_fn)

        if seg.warm_start == "transfer" and run_state.completed >= 1:
            theta0 = run_state.records[-1].params.copy()
        else:
            theta0 = net.init_params(spec, stream_seed(config.seed, seg.index, _S_NET))

        tracked = _TrackedObjective(objective, theta0.values)
        callback = None
        if config.adaptive_sampling:
            adapt = AdaptState(config.tau, config.tol_s)

            def callback(epoch, totals, _seg=seg, _adapt=adapt, _obj=objective,
                         _colloc=colloc, _tracked=tracked):
                if epoch % _adapt.period != 0:
                    return False
                if not adapt_trigger(totals, _adapt.tol_s, epoch, _adapt.n_ex):
                    return False
                report = adaptive_resample(
                    _adapt, prob, _colloc,
                    _obj.interior_eta(_tracked.theta),
                    _obj.boundary_eta(_tracked.theta),
                    stream_seed(config.seed, _seg.index, _S_ADAPT, _adapt.rounds),
                )
                adapt_rows.append((_seg.index, epoch, report.candidates,
                                   report.marked,
                                   _colloc.n_interior + _colloc.n_boundary))
                if report.marked == 0:
                    return False
                _obj.refresh()
                return True

        try:
            result = train_hybrid(theta0.values, tracked, config.n_adam,
                                  config.n_lbfgs, epoch_callback=callback)
        except TrainingFault as exc:
            if out is not None:
                checkpoint_save(run_state, Path(out), config_text)
            raise TrainingFault(f"segment {seg.index}: {exc}") from exc

        params = ParameterVector(result.theta, net.parameter_layout(spec))
        final_total, _, final_comps = objective.value_and_grad(result.theta)
        clamp_events += objective.clamp_events[0]
        loss_rows.extend((seg.index, *row) for row in result.history)
        run_state.records.append(SegmentRecord(
            seg, params, final_comps, final_total, result.epochs_run,
            colloc.n_interior, colloc.n_boundary,
        ))
        if out is not None:
            checkpoint_save(run_state, Path(out), config_text)
        if log:
            log(f"segment {seg.index}/{len(segments)}: "
                f"loss {final_total:.3e} "
                f"(r {final_comps[0]:.2e}, i {final_comps[1]:.2e}, "
                f"b {final_comps[2]:.2e}, e {final_comps[3]:.2e}) "
                f"epochs {result.epochs_run} "
                f"pts {colloc.n_interior + colloc.n_boundary} "
                f"[{time.perf_counter() - t0:.1f}s]")

    return MarchResult(run_state, loss_rows, adapt_rows, clamp_events, segments)


# ---------------------------------------------------------------------------
# Post-run evaluation helpers


def segment_for_time(segments: list[TimeSegment], t: float) -> int:
    """1-based index of the segment owning time t (boundaries go to the
    earlier segment, except t = 0)."""
    for seg in segments:
        if t <= seg.t_end + 1e-12:
            return seg.index
    return segments[-1].index


def evaluate_at(run_state: RunState, segments, X_spatial: np.ndarray, t: float) -> np.ndarray:
    j = segment_for_time(segments, t)
    pts = np.hstack([X_spatial, np.full((X_spatial.shape[0], 1), t)])
    return run_state.predictor(j)(pts)


def snapshot_grid(prob: ProblemSpec, nodes_per_axis: int) -> np.ndarray:
    axes = [np.linspace(lo, hi, nodes_per_axis)
            for lo, hi in zip(prob.domain.lo, prob.domain.hi)]
    grids = np.meshgrid(*axes, indexing="ij")
    return np.stack([g.reshape(-1) for g in grids], axis=1)


def endpoint_energies(run_state: RunState, prob: ProblemSpec, segments,
                      quad=None) -> np.ndarray:
    """E at t_0 (first net) and each segment end (that segment's net)."""
    if quad is None:
        quad = default_quadrature(prob)
    spec = run_state.spec
    E = np.empty(len(segments) + 1)
    E[0] = energy_at_time(run_state.records[0].params, spec, prob, quad,
                          segments[0].t_start)
    for i, seg in enumerate(segments):
        E[i + 1] = energy_at_time(run_state.records[i].params, spec, prob, quad,
                                  seg.t_end)
    return E


def energy_series(run_state: RunState, prob: ProblemSpec, segments,
                  samples_per_segment: int = 5, quad=None):
    """(t, E, segment) rows sampled inside every segment."""
    if quad is None:
        quad = default_quadrature(prob)
    rows = []
    for i, seg in enumerate(segments):
        ts = np.linspace(seg.t_start, seg.t_end, samples_per_segment)
        for t in ts:
            E = energy_at_time(run_state.records[i].params, run_state.spec,
                               prob, quad, float(t))
            rows.append((float(t), E, seg.index))
    return rows


def compare_to_golden(run_state: RunState, prob: ProblemSpec, segments,
                      golden_dir=None):
    """Relative l2 against the stored spectral reference, over all reference
    snapshots and at the final one."""
    ref = read_golden(prob.key, golden_dir)
    preds = np.empty_like(ref.values)
    X = ref.x[:, None]
    for i, t in enumerate(ref.times):
        preds[i] = evaluate_at(run_state, segments, X, float(t))
    overall = relative_l2(ref.values, preds)
    final = relative_l2(ref.values[-1], preds[-1])
    return overall, final, ref, preds
