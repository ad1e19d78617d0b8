from __future__ import annotations

import argparse
import logging
import math
import sys
import time
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Optional, Sequence

import numpy as np

from oblatus import __version__
from oblatus.config import (
    CONSTANT_METHODS,
    EXPERIMENTS,
    EXPONENT_MODES,
    PROFILES,
    SAMPLE_METHODS,
    ConfigError,
    RunConfig,
    build_config,
    get_paths,
    load_config_file,
)
from oblatus.core import constants
from oblatus.core.diameter import INTERIOR_EXPONENT, count_near_diametral, diameter, near_diametral_counts, rescale
from oblatus.core.engine import ReplicationEngine
from oblatus.core.geometry import localization_survey
from oblatus.core.models import ConstantCertificate, LimitLaw, PairDeficit, Point3, ShapeParam, TailCurve
from oblatus.core.rng import RngStream, replication_streams
from oblatus.core.sampling import sample
from oblatus.experiments.chenstein import chen_stein_diagnostic, covered_n_range
from oblatus.experiments.exponent import run_exponent_experiment
from oblatus.experiments.limit import run_limit_experiment
from oblatus.experiments.overlap import run_overlap_experiment
from oblatus.experiments.poisson import run_poisson_experiment
from oblatus.experiments.tail import empirical_k, run_tail_experiment
from oblatus.logging_setup import setup_logging
from oblatus.services.export import OutputSession, file_stem, to_record
from oblatus.storage.db import SQLiteDatabase
from oblatus.storage.migrations import apply_migrations
from oblatus.storage.repositories import ConstantCacheRepo, RunRepo

logger = logging.getLogger("oblatus.cli")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3
EXIT_ACCEPTANCE = 4

ALL_ORDER = ("constant", "tail", "overlap", "chenstein", "poisson", "limit", "exponent")

# disjoint stream_index ranges per experiment; replication r uses base + r
STREAM_BASE = {
    "sample": 0,
    "diameter": 1 << 40,
    "constant": 2 << 40,
    "tail": 3 << 40,
    "overlap": 4 << 40,
    "poisson": 5 << 40,
    "limit": 6 << 40,
    "exponent": 7 << 40,
}
CHEN_STEIN_POINTS = 5
# b-term scalings must hold over at least one decade of n
CHEN_STEIN_MIN_SPAN = 10.0


class AcceptanceError(RuntimeError):
    pass


@dataclass
class RunManifest:
    config: dict
    version: str
    started_at_utc: str
    finished_at_utc: str = ""
    wall_clock_secs: float = 0.0
    outputs: dict[str, list[str]] = field(default_factory=dict)
    checks: list[dict] = field(default_factory=list)
    path: Optional[Path] = None

    @property
    def failed_checks(self) -> list[dict]:
        return [c for c in self.checks if not c["passed"]]


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--a", type=float, help="vertical semi-axis, 0<a<1 (0/1 for diagnostics)")
    common.add_argument("--n", help="points per sample")
    common.add_argument("--poisson-n", dest="poisson_n", help="points per sample for the poisson step")
    common.add_argument("--n-grid", dest="n_grid", help="comma separated sample sizes")
    common.add_argument("--reps", dest="replications", help="replications")
    common.add_argument("--exponent-reps", dest="exponent_replications", help="replications per exponent grid point")
    common.add_argument("--eps", dest="eps_grid", help="comma separated tail eps grid")
    common.add_argument("--overlap-eps", dest="overlap_eps_grid", help="comma separated overlap eps grid")
    common.add_argument("--t-grid", dest="t_grid", help="comma separated rescaled thresholds")
    common.add_argument("--t", type=float, help="threshold for the chen-stein diagnostic")
    common.add_argument("--pairs", help="independent pairs for the tail estimate")
    common.add_argument("--n-outer", dest="n_outer")
    common.add_argument("--n-inner", dest="n_inner")
    common.add_argument("--mc-budget", dest="mc_budget", help="samples for the 5-d Monte Carlo")
    common.add_argument("--grid", help="quadrature cells per axis")
    common.add_argument("--method", choices=CONSTANT_METHODS)
    common.add_argument("--sample-method", dest="sample_method", choices=SAMPLE_METHODS)
    common.add_argument("--mode", choices=EXPONENT_MODES)
    common.add_argument("--lambda-override", dest="lambda_override", type=float)
    common.add_argument("--seed", dest="master_seed")
    common.add_argument("--workers")
    common.add_argument("--output-dir", dest="output_dir")
    common.add_argument("--config", help="TOML file with RunConfig fields")
    common.add_argument("--profile", choices=sorted(PROFILES))
    common.add_argument("--check", action="store_true", default=None, help="fail with exit 4 on acceptance misses")
    common.add_argument("--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="oblatus", description="Largest interpoint distance in an oblate ellipsoid")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="experiment", required=True)
    for name in EXPERIMENTS:
        sub.add_parser(name, parents=[common])
    return parser


_NOT_CONFIG = {"config", "profile", "verbose"}


def parse_config(argv: Sequence[str]) -> tuple[RunConfig, bool]:
    """Returns (config, verbose). argparse usage errors exit with status 2."""
    ns = build_parser().parse_args(list(argv))
    values = {k: v for k, v in vars(ns).items() if k not in _NOT_CONFIG}
    file_values = load_config_file(ns.config) if ns.config else None
    return build_config(values, file_values, ns.profile), bool(ns.verbose)


class Runner:
    def __init__(self, cfg: RunConfig, engine: ReplicationEngine, session: OutputSession, cache: ConstantCacheRepo):
        self.cfg = cfg
        self.shape = ShapeParam(cfg.a)
        self.engine = engine
        self.session = session
        self.cache = cache
        self.manifest_outputs: dict[str, list[str]] = {}
        self.checks: list[dict] = []
        self.certificate: Optional[ConstantCertificate] = None
        self.tail: Optional[TailCurve] = None
        self.overlap: Optional[TailCurve] = None

    # helpers
    def _stream(self, experiment: str, k: int = 0) -> RngStream:
        return RngStream(self.cfg.master_seed, STREAM_BASE[experiment] + k)

    def _streams(self, experiment: str, replications: int) -> list[RngStream]:
        return replication_streams(self.cfg.master_seed, replications, offset=STREAM_BASE[experiment])

    def _emit(self, experiment: str, n: Optional[int], record: dict, headers: list[str], rows: list[dict]) -> None:
        stem = file_stem(experiment, self.cfg.a, n, self.cfg.master_seed)
        rec = {"experiment": experiment, "master_seed": self.cfg.master_seed, "config": self.cfg.to_dict(), **record}
        paths = [self.session.record(Path("records") / f"{stem}.json", rec)]
        paths.append(self.session.table(Path("tables") / f"{stem}.csv", headers, rows))
        self.manifest_outputs.setdefault(experiment, []).extend(
            str(p.relative_to(self.session.base_dir)) for p in paths
        )

    def _check(self, name: str, passed: bool, value: Any, bound: Any) -> None:
        passed = bool(passed)
        self.checks.append({"name": name, "passed": passed, "value": to_record(value), "bound": to_record(bound)})
        if passed:
            logger.info("check passed name=%s value=%s bound=%s", name, value, bound)
        else:
            logger.warning("check failed name=%s value=%s bound=%s", name, value, bound)

    def law(self) -> LimitLaw:
        if self.cfg.lambda_override is not None:
            return LimitLaw(lambda_a=self.cfg.lambda_override, a=self.cfg.a)
        if self.certificate is not None:
            return self.certificate.law
        est = constants.estimate(self.shape, "reduced3d", self.cfg.grid, engine=self.engine, cache=self.cache)
        return constants.lambda_a(est.value, self.cfg.a)

    # experiments
    def run_sample(self) -> None:
        cfg = self.cfg
        shape = ShapeParam(0.0) if cfg.sample_method in ("circle-diagnostic", "disk-diagnostic") else self.shape
        batch = sample(cfg.sample_method, self._stream("sample"), cfg.n, shape)
        pts = batch.points
        stem = file_stem("sample", cfg.a, cfg.n, cfg.master_seed)
        path = self.session.batch(Path("tables") / f"{stem}_points.csv", batch)
        self.manifest_outputs.setdefault("sample", []).append(str(path.relative_to(self.session.base_dir)))
        record = {
            "method": batch.method,
            "n": len(batch),
            "acceptance_rate": batch.acceptance_rate,
            "proposals": batch.proposals,
            "second_moments": (pts**2).mean(axis=0) if len(batch) else [],
        }
        rows = [{"coordinate": f"x{i + 1}", "mean": pts[:, i].mean(), "second_moment": (pts[:, i] ** 2).mean()}
                for i in range(3)] if len(batch) else []
        self._emit("sample", cfg.n, record, ["coordinate", "mean", "second_moment"], rows)

    def run_diameter(self) -> None:
        cfg = self.cfg
        if cfg.sample_method in ("circle-diagnostic", "disk-diagnostic"):
            shape = ShapeParam(0.0)
        else:
            shape = self.shape
        pts = sample(cfg.sample_method, self._stream("diameter"), cfg.n, shape).points
        result = diameter(pts, shape)
        record: dict[str, Any] = {"result": result, "deficit": result.deficit}
        rows = [{"n": cfg.n, "m_n": result.m_n, "deficit": result.deficit, "i": result.pair[0], "j": result.pair[1],
                 "pairs_examined": result.pairs_examined}]
        headers = ["n", "m_n", "deficit", "i", "j", "pairs_examined"]
        if 0.0 < shape.a < 1.0 and result.deficit > 0.0:
            near = count_near_diametral(pts, max(cfg.t_grid), shape) if cfg.t_grid else None
            if near is not None and near.deficits:
                found, eps = near.deficits, near.eps
            else:
                found, eps = [PairDeficit(value=result.deficit, pair=result.pair)], result.deficit
            pairs = [(Point3.from_array(pts[f.pair[0]]), Point3.from_array(pts[f.pair[1]])) for f in found]
            record["localization_max_ratio"] = localization_survey(pairs, eps, shape)
        if cfg.t_grid and 0.0 < shape.a < 1.0:
            _, counts, _ = near_diametral_counts(pts, cfg.t_grid, shape)
            record["rescaled_deficit"] = rescale(result.deficit, cfg.n, INTERIOR_EXPONENT)
            record["counts"] = {repr(t): int(c) for t, c in zip(cfg.t_grid, counts, strict=True)}
        self._emit("diameter", cfg.n, record, headers, rows)

    def run_constant(self) -> None:
        cfg = self.cfg
        estimates = []
        if cfg.method in ("mc5d", "both"):
            mc = constants.i_a_mc5d(self.shape, cfg.mc_budget, self._stream("constant"), engine=self.engine)
            self.cache.put(mc)
            estimates.append(mc)
        if cfg.method in ("reduced3d", "both"):
            estimates.append(
                constants.estimate(self.shape, "reduced3d", cfg.grid, engine=self.engine, cache=self.cache)
            )
        record: dict[str, Any] = {"constants": []}
        rows = []
        for est in estimates:
            law = constants.lambda_a(est.value, est.a)
            entry = {"a": est.a, "I_a": est.value, "stderr": est.std_error, "method": est.method,
                     "budget": est.budget, "Lambda_a": law.lambda_a, "K_a": law.k_a,
                     "error_estimate": est.error_estimate, "converged": est.converged, "shell_hits": est.shell_hits}
            record["constants"].append(entry)
            rows.append(entry)
        if len(estimates) == 2:
            self.certificate = constants.limit_law_from_estimates(
                estimates[0], estimates[1], sigmas=cfg.tolerances["constant_sigmas"]
            )
            record["certificate"] = self.certificate
            self._check("constant.route_agreement", self.certificate.agree, self.certificate.difference,
                        cfg.tolerances["constant_sigmas"] * self.certificate.combined_error)
            self._check("constant.shell_hits", estimates[0].shell_hits == 0, estimates[0].shell_hits, 0)
        headers = ["a", "method", "budget", "I_a", "stderr", "error_estimate", "converged", "shell_hits",
                   "Lambda_a", "K_a"]
        self._emit("constant", None, record, headers, rows)

    def run_tail(self) -> None:
        cfg = self.cfg
        curve = run_tail_experiment(self.shape, cfg.eps_grid, cfg.pairs, self._stream("tail"), engine=self.engine,
                                    method=cfg.sample_method)
        self.tail = curve
        law = self.law()
        rows = [{"eps": e, "p": p, "std_error": s, "hits": h, "p_over_eps_3_5": p / e**3.5,
                 "excluded": e in curve.excluded}
                for e, p, s, h in zip(curve.eps_grid, curve.prob_estimates, curve.std_errors, curve.hits, strict=True)]
        record: dict[str, Any] = {"curve": curve, "K_a": law.k_a}
        try:
            k_hat = empirical_k(curve)
            record["K_hat"] = k_hat
            self._check("tail.level", abs(k_hat / law.k_a - 1.0) <= cfg.tolerances["tail_level"], k_hat, law.k_a)
        except ValueError:
            logger.warning("tail level check skipped: no usable points")
        self._check("tail.slope", abs(curve.fitted_slope - 3.5) <= cfg.tolerances["tail_slope"],
                    curve.fitted_slope, 3.5)
        self._emit("tail", cfg.pairs, record,
                   ["eps", "p", "std_error", "hits", "p_over_eps_3_5", "excluded"], rows)

    def run_overlap(self) -> None:
        cfg = self.cfg
        curve = run_overlap_experiment(self.shape, cfg.overlap_eps_grid, cfg.n_outer, cfg.n_inner,
                                       self._stream("overlap"), engine=self.engine, method=cfg.sample_method)
        self.overlap = curve
        p_inner = curve.hits / (curve.n_outer * curve.n_inner)
        rows = [{"eps": e, "q": q, "std_error": s, "inner_hits": h, "joint_hits": j, "p": p}
                for e, q, s, h, j, p in zip(curve.eps_grid, curve.prob_estimates, curve.std_errors, curve.hits,
                                            curve.joint_hits, p_inner, strict=True)]
        lo, hi = cfg.tolerances["overlap_slope_min"], cfg.tolerances["overlap_slope_max"]
        self._check("overlap.slope", lo <= curve.fitted_slope <= hi, curve.fitted_slope, [lo, hi])
        self._check("overlap.q_le_p", bool(np.all(curve.prob_estimates <= p_inner)), curve.prob_estimates, p_inner)
        self._emit("overlap", curve.n_outer, {"curve": curve, "p_inner": p_inner},
                   ["eps", "q", "std_error", "inner_hits", "joint_hits", "p"], rows)

    def run_chenstein(self) -> None:
        cfg = self.cfg
        if self.tail is None:
            self.run_tail()
        if self.overlap is None:
            self.run_overlap()
        n_lo, n_hi = covered_n_range(cfg.t, self.tail, self.overlap)
        self._check("chenstein.n_decade", n_hi >= CHEN_STEIN_MIN_SPAN * n_lo, n_hi / n_lo, CHEN_STEIN_MIN_SPAN)
        n_grid = np.geomspace(n_lo, n_hi, CHEN_STEIN_POINTS)
        n_grid[0], n_grid[-1] = n_lo, n_hi
        rec = chen_stein_diagnostic(self.shape, n_grid, cfg.t, self.tail, self.overlap)
        rows = [{"n": n, "eps_n": e, "b1": b1, "b2": b2, "b1_scaled": s1, "b2_scaled": s2}
                for n, e, b1, b2, s1, s2 in zip(rec.n_grid, rec.eps_n, rec.b1, rec.b2, rec.b1_scaled, rec.b2_scaled,
                                                strict=True)]
        bound = cfg.tolerances["chenstein_spread"]
        self._check("chenstein.b1_spread", rec.b1_spread < bound, rec.b1_spread, bound)
        self._check("chenstein.b2_spread", rec.b2_spread < bound, rec.b2_spread, bound)
        self._emit("chenstein", None, {"record": rec}, ["n", "eps_n", "b1", "b2", "b1_scaled", "b2_scaled"], rows)

    def _poisson_t_grid(self, law: LimitLaw) -> tuple[list[float], Optional[int]]:
        if self.cfg.t_grid:
            grid = list(self.cfg.t_grid)
            lam = [law.lambda_a * t**3.5 for t in grid]
            best = min(range(len(grid)), key=lambda i: abs(lam[i] - 1.0))
            return grid, best if abs(lam[best] - 1.0) <= 0.05 else None
        grid = [0.0] + [constants.t_for_mean(m, law) for m in (0.5, 1.0, 2.0)]
        return grid, 2

    def run_poisson(self) -> None:
        cfg = self.cfg
        law = self.law()
        t_grid, unit = self._poisson_t_grid(law)
        n = cfg.effective_poisson_n
        summary = run_poisson_experiment(self.shape, n, t_grid, cfg.replications, law,
                                         self._streams("poisson", cfg.replications), engine=self.engine,
                                         method=cfg.sample_method)
        headers = ["replication", "rescaled_deficit"] + [f"N_t{j}" for j in range(len(t_grid))]
        rows = []
        for r in range(summary.replications):
            row = {"replication": r, "rescaled_deficit": summary.rescaled_deficits[r]}
            row.update({f"N_t{j}": int(summary.counts[r, j]) for j in range(len(t_grid))})
            rows.append(row)
        self._check("poisson.event_identity", summary.chain_check, summary.chain_check, True)
        if unit is not None:
            tol = cfg.tolerances
            mean = float(summary.mean_count[unit])
            disp = float(summary.var_count[unit] / mean) if mean > 0 else math.inf
            zero = float(summary.zero_fraction[unit])
            self._check("poisson.mean", abs(mean - 1.0) <= tol["poisson_mean"], mean, 1.0)
            self._check("poisson.dispersion", abs(disp - 1.0) <= tol["poisson_dispersion"], disp, 1.0)
            self._check("poisson.zero_fraction", abs(zero - math.exp(-1.0)) <= tol["poisson_zero"], zero,
                        math.exp(-1.0))
        summary_record = {k: v for k, v in to_record(summary).items() if k not in ("counts", "rescaled_deficits")}
        self._emit("poisson", n, {"summary": summary_record, "t_unit_index": unit}, headers, rows)

    def run_limit(self) -> None:
        cfg = self.cfg
        law = self.law()
        report = run_limit_experiment(self.shape, cfg.n, cfg.replications, law,
                                      self._streams("limit", cfg.replications), engine=self.engine,
                                      method=cfg.sample_method, tail=self.tail)
        tol = cfg.tolerances
        self._check("limit.ks", report.ks_statistic <= tol["ks_max"], report.ks_statistic, tol["ks_max"])
        self._check("limit.positive", bool(np.all(report.rescaled_deficits > 0.0)), report.rescaled_deficits.min(),
                    0.0)
        if report.ks_statistic_tail_lambda is not None:
            delta = abs(report.ks_statistic_tail_lambda - report.ks_statistic)
            self._check("limit.tail_lambda_coherence", delta < tol["tail_lambda_ks_delta"], delta,
                        tol["tail_lambda_ks_delta"])
        rows = [{"replication": r, "rescaled_deficit": z} for r, z in enumerate(report.rescaled_deficits)]
        record = {k: v for k, v in to_record(report).items() if k != "rescaled_deficits"}
        self._emit("limit", cfg.n, {"report": record}, ["replication", "rescaled_deficit"], rows)

    def run_exponent(self, modes: Optional[Sequence[str]] = None) -> None:
        cfg = self.cfg
        reps = cfg.exponent_replications
        for mode in modes or (cfg.mode,):
            report = run_exponent_experiment(mode, cfg.n_grid, reps, self._streams("exponent", reps), a=cfg.a,
                                             engine=self.engine)
            self._check(f"exponent.{mode}",
                        abs(report.fitted_exponent - report.expected_exponent) <= cfg.tolerances["exponent"],
                        report.fitted_exponent, report.expected_exponent)
            rows = [{"mode": mode, "n": int(n), "mean_deficit": m}
                    for n, m in zip(report.n_grid, report.mean_deficits, strict=True)]
            self._emit(f"exponent-{mode}", None, {"report": report}, ["mode", "n", "mean_deficit"], rows)

    def run(self, experiment: str) -> None:
        if experiment == "all":
            for name in ALL_ORDER:
                if name == "exponent":
                    self.run_exponent(EXPONENT_MODES)
                else:
                    getattr(self, f"run_{name}")()
            return
        getattr(self, f"run_{experiment}")()


def run(cfg: RunConfig) -> RunManifest:
    """Run one configured experiment; outputs are committed and the manifest written on success.

    Raises AcceptanceError after committing when ``cfg.check`` is set and a check failed.
    """
    paths = get_paths(cfg.output_dir)
    with SQLiteDatabase(paths.db_path) as db:
        apply_migrations(db)
        return _run_registered(cfg, paths.base_dir, db)


def _run_registered(cfg: RunConfig, base_dir: Path, db: SQLiteDatabase) -> RunManifest:
    started = time.perf_counter()
    manifest = RunManifest(config=cfg.to_dict(), version=__version__,
                           started_at_utc=datetime.now(timezone.utc).isoformat())
    runs = RunRepo(db)
    run_id = runs.start(cfg.experiment, cfg.master_seed, cfg.to_dict())
    session = OutputSession(base_dir)
    logger.info("run start id=%s experiment=%s a=%s seed=%s workers=%s", run_id, cfg.experiment, cfg.a,
                cfg.master_seed, cfg.workers)
    try:
        with ReplicationEngine(cfg.workers) as engine:
            runner = Runner(cfg, engine, session, ConstantCacheRepo(db))
            runner.run(cfg.experiment)
        manifest.outputs = runner.manifest_outputs
        manifest.checks = runner.checks
        manifest.finished_at_utc = datetime.now(timezone.utc).isoformat()
        manifest.wall_clock_secs = time.perf_counter() - started
        manifest.path = session.commit(
            {k: v for k, v in to_record(manifest).items() if k != "path"} | {"run_id": run_id}
        )
    except Exception:
        logger.exception("run failed id=%s experiment=%s", run_id, cfg.experiment)
        runs.finish(run_id, EXIT_RUNTIME)
        raise
    failed = manifest.failed_checks if cfg.check else []
    runs.finish(run_id, EXIT_ACCEPTANCE if failed else EXIT_OK, str(manifest.path))
    logger.info("run done id=%s secs=%.1f checks=%s failed=%s", run_id, manifest.wall_clock_secs,
                len(manifest.checks), len(manifest.failed_checks))
    if failed:
        raise AcceptanceError("acceptance checks failed: " + ", ".join(c["name"] for c in failed))
    return manifest


def main(argv: Optional[Sequence[str]] = None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    try:
        cfg, verbose = parse_config(argv)
    except ConfigError as e:
        print(f"oblatus: config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except SystemExit as e:
        return int(e.code) if isinstance(e.code, int) else EXIT_CONFIG

    try:
        paths = get_paths(cfg.output_dir)
        setup_logging(paths.logs_dir / "oblatus.log", verbose=verbose)
    except OSError as e:
        print(f"oblatus: cannot use output_dir={cfg.output_dir}: {e}", file=sys.stderr)
        return EXIT_RUNTIME
    try:
        manifest = run(cfg)
    except AcceptanceError as e:
        logger.error("%s", e)
        return EXIT_ACCEPTANCE
    except Exception as e:
        logger.error("runtime error: %s", e)
        return EXIT_RUNTIME
    print(str(manifest.path))
    return EXIT_OK
