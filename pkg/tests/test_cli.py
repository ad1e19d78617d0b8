from __future__ import annotations

import json

import pytest

from oblatus import cli
from oblatus.cli import EXIT_ACCEPTANCE, EXIT_CONFIG, EXIT_OK, EXIT_RUNTIME, main, parse_config
from oblatus.storage.db import SQLiteDatabase


def _body(path):
    return path.read_bytes()


def test_parse_config_examples():
    cfg, _ = parse_config(["tail", "--a", "0.5", "--pairs", "1e8", "--eps", "0.02,0.05,0.1,0.2", "--seed", "42"])
    assert cfg.experiment == "tail"
    assert cfg.pairs == 100_000_000
    assert cfg.eps_grid == (0.02, 0.05, 0.1, 0.2)
    cfg, _ = parse_config(["constant", "--a", "0.5", "--method", "both", "--mc-budget", "1e8"])
    assert cfg.method == "both" and cfg.mc_budget == 100_000_000
    cfg, _ = parse_config(["limit", "--a", "0.5", "--n", "2e5", "--reps", "2000", "--seed", "7", "--workers", "8"])
    assert (cfg.n, cfg.replications, cfg.master_seed, cfg.workers) == (200_000, 2000, 7, 8)


def test_sample_run_writes_manifest_and_is_deterministic(tmp_path):
    outs = []
    for sub in ("one", "two"):
        out = tmp_path / sub
        args = ["diameter", "--a", "0.5", "--n", "3000", "--seed", "3", "--output-dir", str(out)]
        assert main(args) == EXIT_OK
        outs.append(out)
    manifest = json.loads((outs[0] / "manifest.json").read_text(encoding="utf-8"))
    assert manifest["files"]
    for rel in manifest["files"]:
        assert (outs[0] / rel).exists()
    tables = [p.relative_to(outs[0]) for p in (outs[0] / "tables").glob("*.csv")]
    assert tables
    for rel in tables:
        assert _body(outs[0] / rel) == _body(outs[1] / rel)
    assert (outs[0] / "logs" / "oblatus.log").exists()
    assert (outs[0] / "oblatus.db").exists()


def test_config_error_exit_code(tmp_path):
    assert main(["limit", "--a", "1.5", "--output-dir", str(tmp_path)]) == EXIT_CONFIG
    assert main(["limit", "--no-such-flag"]) == EXIT_CONFIG


def test_zero_a_needs_diagnostic_sampler(tmp_path):
    for sub in ("sample", "diameter"):
        assert main([sub, "--a", "0", "--n", "10", "--output-dir", str(tmp_path / sub)]) == EXIT_CONFIG
        assert not (tmp_path / sub / "manifest.json").exists()
    args = ["diameter", "--a", "0", "--n", "200", "--sample-method", "circle-diagnostic", "--output-dir", str(tmp_path / "ok")]
    assert main(args) == EXIT_OK


def test_runtime_error_keeps_no_manifest(tmp_path, monkeypatch):
    def broken(*_args, **_kwargs):
        raise RuntimeError("sweep failed")

    monkeypatch.setattr(cli, "diameter", broken)
    assert main(["diameter", "--a", "0.5", "--n", "10", "--output-dir", str(tmp_path)]) == EXIT_RUNTIME
    assert not (tmp_path / "manifest.json").exists()


def test_run_closes_the_database(tmp_path, monkeypatch):
    closed = []
    original = SQLiteDatabase.close

    def counting(self):
        closed.append(self.path)
        original(self)

    monkeypatch.setattr(SQLiteDatabase, "close", counting)
    assert main(["diameter", "--a", "0.5", "--n", "500", "--output-dir", str(tmp_path)]) == EXIT_OK
    assert closed == [tmp_path / "oblatus.db"]


def test_chenstein_flags_narrow_n_span(tmp_path):
    args = ["chenstein", "--profile", "quick", "--eps", "0.3,0.2", "--overlap-eps", "0.3,0.2", "--check",
            "--output-dir", str(tmp_path)]
    assert main(args) == EXIT_ACCEPTANCE
    manifest = json.loads((tmp_path / "manifest.json").read_text(encoding="utf-8"))
    check = next(c for c in manifest["checks"] if c["name"] == "chenstein.n_decade")
    assert not check["passed"]


@pytest.mark.parametrize("sub", ["limit", "poisson"])
def test_tables_do_not_depend_on_worker_count(tmp_path, sub):
    bodies = []
    for workers in ("1", "2"):
        out = tmp_path / workers
        args = [sub, "--a", "0.5", "--n", "1500", "--reps", "12", "--lambda-override", "0.4", "--seed", "9",
                "--workers", workers, "--output-dir", str(out)]
        assert main(args) == EXIT_OK
        bodies.append({p.name: _body(p) for p in sorted((out / "tables").glob("*.csv"))})
    assert bodies[0]
    assert bodies[0] == bodies[1]


def test_check_with_wrong_lambda_fails(tmp_path):
    args = ["limit", "--a", "0.5", "--n", "2000", "--reps", "40", "--lambda-override", "50", "--check",
            "--output-dir", str(tmp_path)]
    assert main(args) == EXIT_ACCEPTANCE
    manifest = json.loads((tmp_path / "manifest.json").read_text(encoding="utf-8"))
    failed = [c["name"] for c in manifest["checks"] if not c["passed"]]
    assert "limit.ks" in failed
