import json

import pytest

from fsmdp import harness
from fsmdp.config import parse_config
from fsmdp.learner import bound_parameters, theoretical_bound
from fsmdp.estimation import ModelStructure

BASE = {
    "environment": {"generator": "two-state", "params": {"tau": 2}},
    "basis": {"kind": "explicit", "G": 1.0,
              "functions": [{"value_scope": [0], "parent_scope": [0], "table": [0.0, 1.0]}]},
    "W": 6.0,
    "K": 12,
    "seeds": [0, 1],
    "method": "kelley",
}


def _cfg(tmp_path, **kw):
    return parse_config(json.dumps(dict(BASE, output_dir=str(tmp_path / "out"), **kw)))


def test_outputs_and_summary(tmp_path):
    cfg = _cfg(tmp_path)
    assert harness.run_benchmark(cfg) == 0
    out = tmp_path / "out"
    assert sorted(p.name for p in out.glob("*.csv")) == ["seed_0.csv", "seed_1.csv"]
    summary = json.loads((out / "summary.json").read_text())
    assert summary["failed"] == [] and summary["K"] == 12
    for s in ("0", "1"):
        rows = harness.read_trace(out / f"seed_{s}.csv")
        assert [r["k"] for r in rows] == list(range(1, 13))
        entry = summary["seeds"][s]
        assert entry["final_cumulative_regret"] == rows[-1]["cumulative_regret"]
        assert entry["bound"] == rows[-1]["bound"]
        assert entry["coverage"]["episodes_checked"] == 12


def test_rerun_is_byte_identical(tmp_path):
    cfg = _cfg(tmp_path)
    harness.run_benchmark(cfg)
    first = {p.name: p.read_bytes() for p in (tmp_path / "out").iterdir()}
    harness.run_benchmark(cfg)
    second = {p.name: p.read_bytes() for p in (tmp_path / "out").iterdir()}
    assert first == second


def test_resume_matches_uninterrupted(tmp_path):
    full = _cfg(tmp_path / "a", snapshot_every=4)
    harness.run_benchmark(full)
    short = _cfg(tmp_path / "b", snapshot_every=4, K=8)
    harness.run_benchmark(short)
    resumed = _cfg(tmp_path / "b", snapshot_every=4)
    assert harness.run_benchmark(resumed, resume=True) == 0
    for s in (0, 1):
        a = (tmp_path / "a" / "out" / f"seed_{s}.csv").read_bytes()
        b = (tmp_path / "b" / "out" / f"seed_{s}.csv").read_bytes()
        assert a == b


def test_failed_seed_is_isolated(tmp_path, monkeypatch):
    real = harness.run_seed

    def flaky(config_json, seed, out, resume=False):
        if seed == 1:
            raise RuntimeError("boom")
        return real(config_json, seed, out, resume)

    monkeypatch.setattr(harness, "run_seed", flaky)
    assert harness.run_benchmark(_cfg(tmp_path)) == 1
    summary = json.loads((tmp_path / "out" / "summary.json").read_text())
    assert summary["failed"] == [1]
    assert summary["seeds"]["1"]["status"] == "failed" and "boom" in summary["seeds"]["1"]["error"]
    assert summary["seeds"]["0"]["status"] == "ok"


def test_output_root_env(tmp_path, monkeypatch):
    cfg = parse_config(json.dumps(dict(BASE, K=2, seeds=[0], output_dir="rel")))
    monkeypatch.setenv(harness.OUTPUT_ROOT_ENV, str(tmp_path))
    assert harness.output_dir(cfg) == tmp_path / "rel"
    harness.run_benchmark(cfg)
    assert (tmp_path / "rel" / "seed_0.csv").is_file()
    assert harness.output_dir(cfg, root=tmp_path / "x") == tmp_path / "x" / "rel"


def test_read_trace_rejects_foreign_files(tmp_path):
    p = tmp_path / "x.csv"
    p.write_text("a,b\n1,2\n")
    with pytest.raises(harness.ConfigError):
        harness.read_trace(p)


def test_bound_curve(tmp_path):
    cfg = _cfg(tmp_path)
    grid = [10.0, 100.0, 1000.0, 1e4]
    path = harness.emit_bound_curve(cfg, grid, tmp_path / "bound.csv")
    lines = path.read_text().splitlines()
    assert lines[0] == harness.BOUND_HEADER and lines[1] == "T,bound"
    values = [float(ln.split(",")[1]) for ln in lines[2:]]
    assert len(values) == len(grid)
    assert all(b > a for a, b in zip(values, values[1:]))
    env = cfg.environment_obj()
    params = bound_parameters(ModelStructure.from_env(env, cfg.basis_obj(env)))
    keys = ("phi", "tau", "G", "J", "N", "zeta")
    assert values[1] == theoretical_bound(W=6.0, T=100.0, delta=0.1, **{k: params[k] for k in keys})
    with pytest.raises(harness.ConfigError):
        harness.bound_curve(cfg, [0.0])
