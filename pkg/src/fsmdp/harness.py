"""Experiment orchestration: per-seed runs, CSV traces, snapshots/resume and the JSON summary."""

from __future__ import annotations

import json
import logging
import os
import traceback
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .config import ExperimentConfig, parse_config
from .errors import ConfigError
from .estimation import ModelStructure
from .learner import Learner, LearnerConfig, bound_parameters, theoretical_bound

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
TRACE_HEADER = f"# fsmdp regret trace, schema v{SCHEMA_VERSION}"
BOUND_HEADER = f"# fsmdp regret bound curve, schema v{SCHEMA_VERSION}"
COLUMNS = ("k", "realized_reward", "regret", "regret_is_proxy", "cumulative_regret", "bound")
OUTPUT_ROOT_ENV = "FSMDP_OUTPUT_ROOT"


def output_dir(config: ExperimentConfig, root=None) -> Path:
    """``output_dir`` resolved against ``root``, else $FSMDP_OUTPUT_ROOT, else the working directory."""
    root = root if root is not None else os.environ.get(OUTPUT_ROOT_ENV)
    out = Path(config.output_dir)
    return out if root is None or out.is_absolute() else Path(root) / out


def learner_config(config: ExperimentConfig, env=None) -> LearnerConfig:
    return LearnerConfig(
        W=config.W,
        delta=config.delta,
        method=config.method,
        formulation=config.formulation,
        order=config.elimination_order(env),
        clip_rewards=not config.unclipped_rewards,
        rho_weighted=config.rho_weighted,
        track_coverage=config.track_coverage,
    )


def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


def format_row(row: dict) -> str:
    return ",".join(_fmt(row[c]) for c in COLUMNS)


def read_trace(path) -> list[dict]:
    """Parse a trace CSV back into rows (the header comment is checked)."""
    lines = Path(path).read_text().splitlines()
    if not lines or lines[0] != TRACE_HEADER:
        raise ConfigError(f"{path}: not a schema v{SCHEMA_VERSION} regret trace")
    if lines[1].split(",") != list(COLUMNS):
        raise ConfigError(f"{path}: unexpected columns {lines[1]}")
    rows = []
    for ln in lines[2:]:
        vals = ln.split(",")
        rows.append({"k": int(vals[0]), "realized_reward": float(vals[1]), "regret": float(vals[2]),
                     "regret_is_proxy": vals[3] == "1", "cumulative_regret": float(vals[4]),
                     "bound": float(vals[5])})
    return rows


def _atomic_write(path: Path, text: str) -> None:
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(text)
    os.replace(tmp, path)


def _truncate_trace(path: Path, k: int) -> None:
    lines = path.read_text().splitlines(keepends=True)
    path.write_text("".join(lines[: 2 + k]))


def run_seed(config_json: str, seed: int, out: str, resume: bool = False) -> dict:
    """One seed's full pipeline; returns its summary entry.  Safe to run in a worker process."""
    config = parse_config(config_json)
    out = Path(out)
    env = config.environment_obj()
    basis = config.basis_obj(env)
    csv_path = out / f"seed_{seed}.csv"
    snap_path = out / f"seed_{seed}.snapshot.json"
    trace_fh = open(out / f"seed_{seed}.trace.jsonl", "a" if resume else "w") if config.planner_trace else None
    try:
        learner = Learner(env, basis, learner_config(config, env), seed=seed, trace=trace_fh)
        if resume and snap_path.is_file() and csv_path.is_file():
            learner.load_state_dict(json.loads(snap_path.read_text()))
            _truncate_trace(csv_path, learner.k)
            log.info("seed %d: resuming after episode %d", seed, learner.k)
        else:
            csv_path.write_text(TRACE_HEADER + "\n" + ",".join(COLUMNS) + "\n")
        with open(csv_path, "a") as fh:
            while learner.k < config.K:
                fh.write(format_row(learner.episode()) + "\n")
                if config.snapshot_every and learner.k % config.snapshot_every == 0:
                    fh.flush()
                    _atomic_write(snap_path, json.dumps(learner.state_dict()))
        if config.snapshot_every:
            _atomic_write(snap_path, json.dumps(learner.state_dict()))
    finally:
        if trace_fh is not None:
            trace_fh.close()
    rows = read_trace(csv_path)
    final = rows[-1]
    entry = {
        "status": "ok",
        "episodes": final["k"],
        "final_cumulative_regret": final["cumulative_regret"],
        "bound": final["bound"],
        "regret_is_proxy": final["regret_is_proxy"],
        "csv": csv_path.name,
    }
    if learner.covered:
        entry["coverage"] = {"episodes_checked": len(learner.covered),
                             "fraction_covered": float(np.mean(learner.covered)),
                             "all_covered": bool(all(learner.covered))}
    return entry


def _safe_run_seed(config_json: str, seed: int, out: str, resume: bool) -> dict:
    try:
        return run_seed(config_json, seed, out, resume)
    except Exception as exc:  # isolate per-seed failures
        return {"status": "failed", "error": f"{type(exc).__name__}: {exc}", "traceback": traceback.format_exc()}


def run_benchmark(config: ExperimentConfig, root=None, resume: bool = False) -> int:
    """Run every seed, write CSVs and summary.json; returns 0 iff all seeds succeed."""
    out = output_dir(config, root)
    out.mkdir(parents=True, exist_ok=True)
    text = config.to_json()
    (out / "config.json").write_text(text + "\n")
    seeds = list(config.seeds)
    if config.workers > 1 and len(seeds) > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            futures = [pool.submit(_safe_run_seed, text, s, str(out), resume) for s in seeds]
            results = [f.result() for f in futures]
    else:
        results = [_safe_run_seed(text, s, str(out), resume) for s in seeds]
    per_seed = {str(s): r for s, r in zip(seeds, results)}
    failed = [s for s, r in zip(seeds, results) if r["status"] != "ok"]
    for s in failed:
        log.error("seed %s failed: %s", s, per_seed[str(s)]["error"])
    covered = [r["coverage"]["all_covered"] for r in results if r["status"] == "ok" and "coverage" in r]
    summary = {
        "schema": SCHEMA_VERSION,
        "K": config.K,
        "seeds": per_seed,
        "failed": failed,
        "coverage_rate": float(np.mean(covered)) if covered else None,
        "mean_final_cumulative_regret": (
            float(np.mean([r["final_cumulative_regret"] for r in results if r["status"] == "ok"]))
            if len(failed) < len(seeds) else None),
    }
    _atomic_write(out / "summary.json", json.dumps(summary, indent=2, sort_keys=True) + "\n")
    return 1 if failed else 0


def bound_curve(config: ExperimentConfig, t_grid) -> list[tuple[float, float]]:
    """(T, bound(T)) pairs using the learner's bound formula and the config's layout."""
    env = config.environment_obj()
    basis = config.basis_obj(env)
    if config.W * basis.G < 1:
        raise ConfigError(f"the regret bound needs W*G >= 1, got {config.W * basis.G}")
    params = bound_parameters(ModelStructure.from_env(env, basis))
    keys = ("phi", "tau", "G", "J", "N", "zeta")
    out = []
    for T in t_grid:
        if T <= 0:
            raise ConfigError("T grid values must be positive")
        out.append((float(T), theoretical_bound(W=config.W, T=float(T), delta=config.delta,
                                                **{k: params[k] for k in keys})))
    return out


def emit_bound_curve(config: ExperimentConfig, t_grid, path=None) -> Path:
    """Write the bound curve CSV (default: <output_dir>/bound.csv)."""
    rows = bound_curve(config, t_grid)
    path = Path(path) if path is not None else output_dir(config) / "bound.csv"
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [BOUND_HEADER, "T,bound"] + [f"{_fmt(T)},{_fmt(b)}" for T, b in rows]
    _atomic_write(path, "\n".join(lines) + "\n")
    return path
