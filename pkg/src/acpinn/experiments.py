"""Experiment registry and run execution.

Each benchmark key carries the full hyperparameter set of its source
experiment (network size, sample counts, loss weights, sampler and marching
parameters, budgets).  Desk-scale overrides shrink the width/budgets and the
energy-quadrature cost to something a laptop CPU finishes in minutes while
keeping every table parameter that the reduced runs are checked against.
"""

from __future__ import annotations

import configparser
import io
import json
import time
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Optional

import numpy as np

from . import marching as mar
from .losses import default_quadrature
from .problems import PROBLEM_KEYS, make_problem
from .reference import golden_paths


class ConfigError(ValueError):
    """Bad experiment configuration key or value."""


@dataclass(frozen=True)
class ExperimentConfig:
    problem: str
    seed: int = 1
    # network
    depth: int = 4
    width: int = 100
    # sample sizes per segment
    n_r: int = 500
    n_b: int = 42
    n_i: int = 128
    n_e: int = 42
    # loss weights
    lambda_r: float = 1.0
    lambda_i: float = 100.0
    lambda_b: float = 1.0
    lambda_e: float = 542.0
    # adaptive sampling
    tau: float = 0.1
    tol_s: float = 5e-2
    # time marching
    dt: float = 0.1
    n_max: int = 20
    horizon: float = 1.0
    # budgets
    n_adam: int = 5000
    n_lbfgs: int = 5000
    # feature toggles
    energy_penalty: bool = True
    adaptive_sampling: bool = True
    adaptive_time: bool = True
    transfer_weights: bool = False
    # output
    quad_nodes: int = 256
    eval_nodes: int = 256
    snapshot_times: tuple = ()
    compare_reference: bool = False
    out_dir: str = ""

    def __post_init__(self):
        if self.problem not in PROBLEM_KEYS:
            raise ConfigError(f"unknown problem {self.problem!r}")
        for name in ("n_r", "n_b", "n_i", "n_e", "depth", "width",
                     "n_max", "quad_nodes", "eval_nodes"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if self.dt <= 0 or self.horizon <= 0:
            raise ConfigError("dt and horizon must be positive")
        if min(self.lambda_r, self.lambda_i, self.lambda_b, self.lambda_e) < 0:
            raise ConfigError("loss weights must be nonnegative")
        if not 0 < self.tau < 1:
            raise ConfigError("tau must lie in (0, 1)")
        if self.n_adam < 0 or self.n_lbfgs < 0:
            raise ConfigError("budgets must be nonnegative")

    # -- INI round trip ------------------------------------------------------

    _SECTIONS = {
        "run": ("problem", "seed", "out_dir"),
        "network": ("depth", "width"),
        "samples": ("n_r", "n_b", "n_i", "n_e"),
        "weights": ("lambda_r", "lambda_b", "lambda_i", "lambda_e"),
        "sampler": ("tau", "tol_s"),
        "time": ("dt", "n_max", "horizon"),
        "budget": ("n_adam", "n_lbfgs"),
        "toggles": ("energy_penalty", "adaptive_sampling", "adaptive_time",
                    "transfer_weights"),
        "output": ("quad_nodes", "eval_nodes", "snapshot_times",
                   "compare_reference"),
    }

    def to_ini(self) -> str:
        cp = configparser.ConfigParser()
        for section, keys in self._SECTIONS.items():
            cp[section] = {}
            for key in keys:
                val = getattr(self, key)
                if key == "snapshot_times":
                    val = ",".join(f"{t:g}" for t in val)
                cp[section][key] = str(val)
        buf = io.StringIO()
        cp.write(buf)
        return buf.getvalue()

    @classmethod
    def from_ini(cls, text: str) -> "ExperimentConfig":
        cp = configparser.ConfigParser()
        cp.read_string(text)
        kwargs = {}
        for section, keys in cls._SECTIONS.items():
            for key in keys:
                if cp.has_option(section, key):
                    kwargs[key] = cp.get(section, key)
        return cls(**_coerce_fields(kwargs))


_FIELD_TYPES = {f.name: f.type for f in fields(ExperimentConfig)}


def _coerce(name: str, raw) -> object:
    if name not in _FIELD_TYPES:
        raise ConfigError(f"unknown config key {name!r}")
    ftype = _FIELD_TYPES[name]
    if not isinstance(raw, str):
        return raw
    try:
        if ftype == "int":
            return int(raw)
        if ftype == "float":
            return float(raw)
        if ftype == "bool":
            if raw.lower() in ("1", "true", "yes", "on"):
                return True
            if raw.lower() in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if ftype == "tuple":
            return tuple(float(t) for t in raw.split(",") if t.strip())
        return raw
    except ValueError as exc:
        raise ConfigError(f"bad value {raw!r} for config key {name!r}") from exc


def _coerce_fields(kwargs: dict) -> dict:
    return {k: _coerce(k, v) for k, v in kwargs.items()}


def apply_overrides(config: ExperimentConfig, assignments) -> ExperimentConfig:
    """Apply ``key=value`` strings; unknown keys or bad values raise
    ConfigError naming the offender."""
    updates = {}
    for item in assignments:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not of the form key=value")
        key, _, raw = item.partition("=")
        key = key.strip()
        updates[key] = _coerce(key, raw.strip())
    return replace(config, **updates)


# ---------------------------------------------------------------------------
# Registry: full-scale defaults per benchmark table


_REGISTRY: dict[str, dict] = {
    "ac1d-poly": dict(
        depth=4, width=100,
        n_r=500, n_b=42, n_i=128, n_e=42,
        lambda_r=1.0, lambda_b=1.0, lambda_i=100.0, lambda_e=542.0,
        tau=0.1, tol_s=5e-2,
        dt=0.1, n_max=20, horizon=1.0,
        n_adam=5000, n_lbfgs=5000,
        transfer_weights=False,
        quad_nodes=256, eval_nodes=256,
        snapshot_times=(0.0, 0.25, 0.5, 0.75, 1.0),
        compare_reference=True,
    ),
    "ac2d-poly": dict(
        depth=6, width=128,
        n_r=5000, n_b=200, n_i=2601, n_e=200,
        lambda_r=1.0, lambda_b=1.0, lambda_i=1000.0, lambda_e=5200.0,
        tau=0.05, tol_s=1e-2,
        dt=0.25, n_max=40, horizon=10.0,
        n_adam=5000, n_lbfgs=2000,
        transfer_weights=True,
        quad_nodes=64, eval_nodes=64,
    ),
    "ac3d-poly": dict(
        depth=6, width=128,
        n_r=5000, n_b=300, n_i=9261, n_e=300,
        lambda_r=1.0, lambda_b=1.0, lambda_i=1000.0, lambda_e=5300.0,
        tau=0.05, tol_s=1e-2,
        dt=0.1, n_max=13, horizon=1.3,
        n_adam=5000, n_lbfgs=2000,
        transfer_weights=True,
        quad_nodes=24, eval_nodes=24,
    ),
    "ac2d-log": dict(
        depth=6, width=128,
        n_r=10000, n_b=200, n_i=40401, n_e=200,
        lambda_r=1.0, lambda_b=1.0, lambda_i=1000.0, lambda_e=10200.0,
        tau=0.05, tol_s=1e-1,
        dt=0.125, n_max=40, horizon=5.0,
        n_adam=5000, n_lbfgs=2000,
        transfer_weights=True,
        quad_nodes=64, eval_nodes=64,
    ),
    "ac2d-log-random": dict(
        depth=6, width=128,
        n_r=5000, n_b=200, n_i=40000, n_e=200,
        lambda_r=1.0, lambda_b=1.0, lambda_i=1000.0, lambda_e=5200.0,
        tau=0.05, tol_s=0.1,
        dt=1.0, n_max=20, horizon=20.0,
        n_adam=5000, n_lbfgs=2000,
        transfer_weights=True,
        quad_nodes=64, eval_nodes=64,
    ),
    "ac2d-log-degenerate": dict(
        depth=6, width=128,
        n_r=7500, n_b=200, n_i=40000, n_e=200,
        lambda_r=1.0, lambda_b=1.0, lambda_i=1e5, lambda_e=7700.0,
        tau=0.05, tol_s=0.1,
        dt=1.0, n_max=10, horizon=10.0,
        n_adam=3000, n_lbfgs=20000,
        transfer_weights=True,
        quad_nodes=64, eval_nodes=64,
    ),
    "ac2d-advection": dict(
        depth=6, width=128,
        n_r=10000, n_b=200, n_i=10201, n_e=200,
        lambda_r=1.0, lambda_b=1.0, lambda_i=1e5, lambda_e=10200.0,
        tau=0.05, tol_s=0.1,
        dt=0.005, n_max=12, horizon=0.06,
        n_adam=5000, n_lbfgs=2000,
        transfer_weights=True,
        quad_nodes=64, eval_nodes=64,
    ),
}

# Reduced budgets for desk-scale acceptance runs.  The 1D row keeps every
# table parameter except network width/depth and the per-segment budgets
# (plus a cheaper penalty quadrature); the multi-d rows shrink everything
# while preserving the lambda_e = n_r + n_b pattern.
DESK_OVERRIDES: dict[str, dict] = {
    "ac1d-poly": dict(
        depth=4, width=64, n_adam=2000, n_lbfgs=2000,
        n_e=8, quad_nodes=64, eval_nodes=256,
    ),
    "ac2d-poly": dict(
        depth=4, width=48,
        n_r=1200, n_b=80, n_i=400, n_e=4,
        lambda_i=1000.0, lambda_e=1280.0,
        dt=0.25, n_max=5, horizon=1.25,
        n_adam=1200, n_lbfgs=600,
        quad_nodes=24, eval_nodes=48,
    ),
    "ac3d-poly": dict(
        depth=4, width=40,
        n_r=1500, n_b=120, n_i=600, n_e=3,
        lambda_i=1000.0, lambda_e=1620.0,
        dt=0.1, n_max=3, horizon=0.3,
        n_adam=800, n_lbfgs=500,
        quad_nodes=8, eval_nodes=16,
    ),
    "ac2d-log": dict(
        depth=4, width=48,
        n_r=1500, n_b=80, n_i=800, n_e=4,
        lambda_i=1000.0, lambda_e=1580.0,
        dt=0.125, n_max=3, horizon=0.375,
        n_adam=1000, n_lbfgs=500,
        quad_nodes=24, eval_nodes=48,
    ),
    "ac2d-log-random": dict(
        depth=4, width=48,
        n_r=1200, n_b=80, n_i=900, n_e=4,
        lambda_i=1000.0, lambda_e=1280.0,
        dt=1.0, n_max=2, horizon=2.0,
        n_adam=1000, n_lbfgs=500,
        quad_nodes=24, eval_nodes=48,
    ),
    "ac2d-log-degenerate": dict(
        depth=4, width=48,
        n_r=1200, n_b=80, n_i=1200, n_e=4,
        lambda_i=10000.0, lambda_e=1280.0,
        dt=1.0, n_max=2, horizon=2.0,
        n_adam=1000, n_lbfgs=500,
        quad_nodes=24, eval_nodes=48,
    ),
    "ac2d-advection": dict(
        depth=4, width=64,
        n_r=1500, n_b=100, n_i=1000, n_e=4,
        lambda_i=10000.0, lambda_e=1600.0,
        dt=0.005, n_max=3, horizon=0.015,
        n_adam=1000, n_lbfgs=500,
        quad_nodes=32, eval_nodes=48,
    ),
}


def get_config(key: str, seed: int = 1, desk_scale: bool = False,
               overrides=None) -> ExperimentConfig:
    if key not in _REGISTRY:
        raise ConfigError(f"unknown problem {key!r}; known: {', '.join(PROBLEM_KEYS)}")
    params = dict(_REGISTRY[key])
    if desk_scale:
        params.update(DESK_OVERRIDES[key])
    config = ExperimentConfig(problem=key, seed=seed, **params)
    if overrides:
        config = apply_overrides(config, overrides)
    return config


def registry_listing() -> list[tuple[str, str]]:
    """(key, one-line provenance) for every registered benchmark."""
    out = []
    for key in PROBLEM_KEYS:
        p = _REGISTRY[key]
        out.append((key, (
            f"depth {p['depth']} width {p['width']}, "
            f"(n_r,n_b,n_i)=({p['n_r']},{p['n_b']},{p['n_i']}), "
            f"lambda=({p['lambda_r']:g},{p['lambda_b']:g},{p['lambda_i']:g},"
            f"{p['lambda_e']:g}), (tau,tol_s)=({p['tau']:g},{p['tol_s']:g}), "
            f"(dt,n_max)=({p['dt']:g},{p['n_max']}), "
            f"budgets=({p['n_adam']},{p['n_lbfgs']})"
        )))
    return out


# ---------------------------------------------------------------------------
# Run execution and artifact emission


SUMMARY_NON_METRIC_KEYS = ("wall_time_s", "out_dir", "created_at")


def run_experiment(config: ExperimentConfig, out: Optional[Path] = None,
                   resume: bool = False, log=None) -> dict:
    """Execute one configured run and emit all artifacts.

    Returns the summary dict (also written to summary.json in the run
    directory).  Metrics in the summary are deterministic for a fixed
    (config, seed); the keys in SUMMARY_NON_METRIC_KEYS are not.
    """
    t_begin = time.perf_counter()
    out = Path(out) if out is not None else Path(config.out_dir or
                                                 f"runs/{config.problem}-seed{config.seed}")
    if out.exists() and not resume and (out / mar.STATE_FILE).exists():
        raise ConfigError(
            f"run directory {out} already holds a run; pass resume or a fresh --out")
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.ini").write_text(config.to_ini())

    if config.compare_reference:
        csv_path, _ = golden_paths(config.problem)
        if not csv_path.exists():
            raise FileNotFoundError(
                f"reference comparison requested but no golden file at {csv_path}; "
                f"run `acpinn reference build {config.problem}` first")

    prob = make_problem(config.problem, seed=config.seed)
    if config.horizon != prob.horizon:
        prob = _with_horizon(prob, config.horizon)

    result = mar.march_segments(prob, config, out=out, resume=resume, log=log)
    run_state, segments = result.run_state, result.segments

    _write_csv(out / "loss.csv", "segment,epoch,loss_r,loss_i,loss_b,loss_e,total",
               result.loss_rows)
    _write_csv(out / "adapt.csv", "segment,epoch,candidates,marked,new_total",
               result.adapt_rows)

    quad = default_quadrature(prob)
    e_rows = mar.energy_series(run_state, prob, segments, quad=quad)
    _write_csv(out / "energy.csv", "t,energy,segment", e_rows)
    E_end = mar.endpoint_energies(run_state, prob, segments, quad=quad)
    slack = 1e-3 * abs(E_end[0])
    violations = int(np.sum(E_end[1:] > E_end[:-1] + slack))

    snap_times = (config.snapshot_times if config.snapshot_times
                  else tuple(s.t_start for s in segments[:1])
                  + tuple(s.t_end for s in segments))
    grid = mar.snapshot_grid(prob, config.eval_nodes)
    snap_rows = []
    u_min, u_max = np.inf, -np.inf
    coords = ",".join(f"x{i+1}" for i in range(prob.dim))
    for t in snap_times:
        vals = mar.evaluate_at(run_state, segments, grid, float(t))
        u_min = min(u_min, float(vals.min()))
        u_max = max(u_max, float(vals.max()))
        for row_x, v in zip(grid, vals):
            snap_rows.append((f"{t:g}", *(f"{c:.10g}" for c in row_x), f"{v:.10e}"))
    _write_csv(out / "snapshots.csv", f"t,{coords},u", snap_rows)

    summary = {
        "problem": config.problem,
        "seed": config.seed,
        "n_segments": len(segments),
        "u_min": u_min,
        "u_max": u_max,
        "energy_initial": float(E_end[0]),
        "energy_final": float(E_end[-1]),
        "energy_endpoint_violations": violations,
        "clamp_events": result.clamp_events,
        "final_loss_total": run_state.records[-1].final_total,
        "final_loss_r": run_state.records[-1].final_components[0],
        "final_loss_i": run_state.records[-1].final_components[1],
        "final_loss_b": run_state.records[-1].final_components[2],
        "final_loss_e": run_state.records[-1].final_components[3],
        "points_final_segment": (run_state.records[-1].n_interior
                                 + run_state.records[-1].n_boundary),
        "adaptive_rounds": len(result.adapt_rows),
    }
    if config.compare_reference:
        overall, final, _, _ = mar.compare_to_golden(run_state, prob, segments)
        summary["relative_l2"] = overall
        summary["relative_l2_final"] = final
    summary["wall_time_s"] = round(time.perf_counter() - t_begin, 3)
    summary["out_dir"] = str(out)
    (out / "summary.json").write_text(json.dumps(summary, indent=2) + "\n")
    return summary


def _with_horizon(prob, horizon: float):
    from dataclasses import replace as dc_replace

    return dc_replace(prob, horizon=horizon)


def _write_csv(path: Path, header: str, rows) -> None:
    lines = [header]
    for row in rows:
        lines.append(",".join(str(c) for c in row))
    path.write_text("\n".join(lines) + "\n")


def load_summary(run_dir: Path) -> dict:
    path = Path(run_dir) / "summary.json"
    if not path.exists():
        raise FileNotFoundError(f"no summary.json under {run_dir}")
    return json.loads(path.read_text())


def compare_runs(run_a: Path, run_b: Path) -> list[tuple[str, object, object, object]]:
    """Per-metric deltas between two run summaries (numeric keys only)."""
    sa, sb = load_summary(run_a), load_summary(run_b)
    rows = []
    for key in sorted(set(sa) | set(sb)):
        if key in SUMMARY_NON_METRIC_KEYS:
            continue
        va, vb = sa.get(key), sb.get(key)
        if isinstance(va, (int, float)) and isinstance(vb, (int, float)):
            rows.append((key, va, vb, vb - va))
        else:
            rows.append((key, va, vb, "" if va == vb else "differs"))
    return rows
