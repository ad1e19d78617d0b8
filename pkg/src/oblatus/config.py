from __future__ import annotations

import dataclasses
import math
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping, Optional

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

OUTPUT_ENV = "OBLATUS_OUTPUT_DIR"
DEFAULT_OUTPUT_DIR = "oblatus-results"

EXPERIMENTS = ("sample", "diameter", "constant", "tail", "overlap", "poisson", "limit", "exponent", "chenstein", "all")
CONSTANT_METHODS = ("mc5d", "reduced3d", "both")
SAMPLE_METHODS = ("parameter", "rejection", "ball-scaling", "circle-diagnostic", "disk-diagnostic")
DIAGNOSTIC_SAMPLE_METHODS = ("circle-diagnostic", "disk-diagnostic")
EXPONENT_MODES = ("circle", "interior", "ball")

DEFAULT_TOLERANCES: dict[str, float] = {
    "constant_sigmas": 3.0,
    "tail_slope": 0.15,
    "tail_level": 0.15,
    "overlap_slope_min": 5.0,
    "overlap_slope_max": 6.0,
    "poisson_mean": 0.10,
    "poisson_dispersion": 0.15,
    "poisson_zero": 0.03,
    "ks_max": 0.08,
    "tail_lambda_ks_delta": 0.02,
    "exponent": 0.05,
    "chenstein_spread": 2.0,
}


class ConfigError(ValueError):
    def __init__(self, field_name: str, message: str) -> None:
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


@dataclass(frozen=True)
class AppPaths:
    base_dir: Path
    logs_dir: Path
    tables_dir: Path
    records_dir: Path
    db_path: Path


def default_output_dir() -> Path:
    return Path(os.environ.get(OUTPUT_ENV) or DEFAULT_OUTPUT_DIR)


def get_paths(output_dir: Optional[Path | str] = None) -> AppPaths:
    base = Path(output_dir) if output_dir else default_output_dir()
    logs = base / "logs"
    tables = base / "tables"
    records = base / "records"

    logs.mkdir(parents=True, exist_ok=True)
    tables.mkdir(parents=True, exist_ok=True)
    records.mkdir(parents=True, exist_ok=True)

    return AppPaths(base_dir=base, logs_dir=logs, tables_dir=tables, records_dir=records, db_path=base / "oblatus.db")


@dataclass(frozen=True)
class RunConfig:
    experiment: str = "all"
    a: float = 0.5
    n: int = 200_000
    poisson_n: Optional[int] = None
    n_grid: tuple[int, ...] = (10_000, 30_000, 100_000, 300_000)
    replications: int = 2000
    exponent_replications: int = 500
    eps_grid: tuple[float, ...] = (0.2, 0.1, 0.05, 0.02)
    overlap_eps_grid: tuple[float, ...] = (0.3, 0.2, 0.15, 0.1, 0.06, 0.05)
    t_grid: tuple[float, ...] = ()
    t: float = 1.0
    pairs: int = 100_000_000
    n_outer: int = 20_000
    n_inner: int = 10_000
    mc_budget: int = 100_000_000
    grid: int = 400
    method: str = "both"
    sample_method: str = "parameter"
    mode: str = "interior"
    lambda_override: Optional[float] = None
    master_seed: int = 42
    workers: int = 1
    output_dir: str = ""
    check: bool = False
    profile: str = ""
    tolerances: dict[str, float] = field(default_factory=lambda: dict(DEFAULT_TOLERANCES))

    @property
    def effective_poisson_n(self) -> int:
        return self.poisson_n if self.poisson_n is not None else self.n

    @classmethod
    def from_mapping(cls, data: Mapping[str, Any]) -> RunConfig:
        names = {f.name for f in dataclasses.fields(cls)}
        for k in data:
            if k not in names:
                raise ConfigError(str(k), "unknown field")
        values: dict[str, Any] = {}
        for f in dataclasses.fields(cls):
            if f.name in data:
                values[f.name] = _coerce(f.name, data[f.name])
        tol = dict(DEFAULT_TOLERANCES)
        tol.update(values.get("tolerances", {}))
        values["tolerances"] = tol
        cfg = cls(**values)
        cfg.validate()
        return cfg

    def to_dict(self) -> dict[str, Any]:
        out = dataclasses.asdict(self)
        for k, v in out.items():
            if isinstance(v, tuple):
                out[k] = list(v)
        return out

    def replace(self, **changes: Any) -> RunConfig:
        return RunConfig.from_mapping({**self.to_dict(), **changes})

    def validate(self) -> None:
        if self.experiment not in EXPERIMENTS:
            raise ConfigError("experiment", f"invalid experiment={self.experiment}")
        if self.method not in CONSTANT_METHODS:
            raise ConfigError("method", f"invalid method={self.method}")
        if self.sample_method not in SAMPLE_METHODS:
            raise ConfigError("sample_method", f"invalid sample_method={self.sample_method}")
        if self.mode not in EXPONENT_MODES:
            raise ConfigError("mode", f"invalid mode={self.mode}")
        if not math.isfinite(self.a) or not 0.0 <= self.a <= 1.0:
            raise ConfigError("a", f"invalid a={self.a}")
        needs_interior = self.experiment not in ("sample", "diameter") and not (
            self.experiment == "exponent" and self.mode != "interior"
        )
        if needs_interior and not 0.0 < self.a < 1.0:
            raise ConfigError("a", f"experiment={self.experiment} needs 0<a<1, got a={self.a}")
        solid = self.sample_method not in DIAGNOSTIC_SAMPLE_METHODS
        if self.experiment in ("sample", "diameter") and self.a == 0.0 and solid:
            raise ConfigError("a", f"a=0 needs a circle/disk diagnostic sampler, got sample_method={self.sample_method}")
        if self.experiment in ("constant", "all") and self.method != "reduced3d" and self.a > 0.95:
            raise ConfigError("a", f"mc5d needs a<=0.95, got a={self.a}")
        for name in ("n", "replications", "exponent_replications", "pairs", "n_outer", "n_inner", "mc_budget"):
            if getattr(self, name) < 2:
                raise ConfigError(name, f"invalid {name}={getattr(self, name)}, need >=2")
        if self.poisson_n is not None and self.poisson_n < 2:
            raise ConfigError("poisson_n", f"invalid poisson_n={self.poisson_n}")
        if self.grid < 8 or self.grid % 4:
            raise ConfigError("grid", f"invalid grid={self.grid}, need a multiple of 4 >= 8")
        if self.workers < 1:
            raise ConfigError("workers", f"invalid workers={self.workers}")
        if not 0 <= self.master_seed < 2**64:
            raise ConfigError("master_seed", f"invalid master_seed={self.master_seed}")
        for name in ("eps_grid", "overlap_eps_grid"):
            grid = getattr(self, name)
            if not grid:
                raise ConfigError(name, "empty grid")
            if any(e <= 0.0 for e in grid):
                raise ConfigError(name, f"invalid {name}={list(grid)}, need eps>0")
        if len(self.n_grid) < 2 or any(n < 2 for n in self.n_grid):
            raise ConfigError("n_grid", f"invalid n_grid={list(self.n_grid)}")
        if any(t < 0.0 for t in self.t_grid):
            raise ConfigError("t_grid", f"invalid t_grid={list(self.t_grid)}, need t>=0")
        if self.t <= 0.0:
            raise ConfigError("t", f"invalid t={self.t}")
        if self.lambda_override is not None and self.lambda_override <= 0.0:
            raise ConfigError("lambda_override", f"invalid lambda_override={self.lambda_override}")
        if self.profile and self.profile not in PROFILES:
            raise ConfigError("profile", f"unknown profile={self.profile}")
        for k in self.tolerances:
            if k not in DEFAULT_TOLERANCES:
                raise ConfigError(f"tolerances.{k}", "unknown tolerance")


def _as_int(name: str, v: Any) -> int:
    if isinstance(v, bool):
        raise ConfigError(name, f"invalid {name}={v}")
    try:
        f = float(v)
    except (TypeError, ValueError):
        raise ConfigError(name, f"invalid {name}={v!r}, need an integer") from None
    if not math.isfinite(f) or f != int(f):
        raise ConfigError(name, f"invalid {name}={v!r}, need an integer")
    return int(v) if isinstance(v, int) else int(f)


def _as_float(name: str, v: Any) -> float:
    try:
        return float(v)
    except (TypeError, ValueError):
        raise ConfigError(name, f"invalid {name}={v!r}, need a number") from None


def _as_list(name: str, v: Any) -> list:
    if isinstance(v, str):
        return [x for x in (p.strip() for p in v.split(",")) if x]
    if isinstance(v, (list, tuple)):
        return list(v)
    raise ConfigError(name, f"invalid {name}={v!r}, need a list")


_INT_FIELDS = {"n", "replications", "exponent_replications", "pairs", "n_outer", "n_inner", "mc_budget", "grid",
               "master_seed", "workers"}
_FLOAT_FIELDS = {"a", "t"}
_INT_GRIDS = {"n_grid"}
_FLOAT_GRIDS = {"eps_grid", "overlap_eps_grid", "t_grid"}


def _coerce(name: str, v: Any) -> Any:
    if name in _INT_FIELDS:
        return _as_int(name, v)
    if name in _FLOAT_FIELDS:
        return _as_float(name, v)
    if name == "poisson_n":
        return None if v is None else _as_int(name, v)
    if name == "lambda_override":
        return None if v is None else _as_float(name, v)
    if name in _INT_GRIDS:
        return tuple(_as_int(name, x) for x in _as_list(name, v))
    if name in _FLOAT_GRIDS:
        return tuple(_as_float(name, x) for x in _as_list(name, v))
    if name == "check":
        if not isinstance(v, bool):
            raise ConfigError(name, f"invalid check={v!r}, need true/false")
        return v
    if name == "tolerances":
        if not isinstance(v, Mapping):
            raise ConfigError(name, "need a table of name = value")
        return {str(k): _as_float(f"tolerances.{k}", x) for k, x in v.items()}
    return str(v)


PROFILES: dict[str, dict[str, Any]] = {
    # acceptance budgets
    "desk": {
        "a": 0.5,
        "n": 200_000,
        "poisson_n": 100_000,
        "replications": 2000,
        "exponent_replications": 500,
        "n_grid": [10_000, 30_000, 100_000, 300_000],
        "pairs": 100_000_000,
        "n_outer": 20_000,
        "n_inner": 10_000,
        "mc_budget": 100_000_000,
        "grid": 400,
    },
    # smoke-test budgets, minutes on a laptop
    "quick": {
        "n": 5_000,
        "poisson_n": 5_000,
        "replications": 200,
        "exponent_replications": 100,
        "n_grid": [1_000, 3_000, 10_000],
        "pairs": 4_000_000,
        "n_outer": 1_000,
        "n_inner": 10_000,
        "mc_budget": 4_000_000,
        "grid": 80,
    },
}


def load_config_file(path: Path | str) -> dict[str, Any]:
    p = Path(path)
    try:
        with p.open("rb") as f:
            return tomllib.load(f)
    except FileNotFoundError:
        raise ConfigError("config", f"config file not found path={p}") from None
    except tomllib.TOMLDecodeError as e:
        raise ConfigError("config", f"invalid TOML path={p}: {e}") from None


def build_config(
    cli_values: Mapping[str, Any],
    file_values: Optional[Mapping[str, Any]] = None,
    profile: Optional[str] = None,
) -> RunConfig:
    """Precedence: CLI flags > config file > profile > dataclass defaults."""
    merged: dict[str, Any] = {}
    chosen = profile or (file_values or {}).get("profile") or ""
    if chosen:
        if chosen not in PROFILES:
            raise ConfigError("profile", f"unknown profile={chosen}")
        merged.update(PROFILES[chosen])
        merged["profile"] = chosen
    for source in (file_values or {}, cli_values):
        for k, v in source.items():
            if v is None:
                continue
            if k == "tolerances":
                merged["tolerances"] = {**merged.get("tolerances", {}), **v}
            else:
                merged[k] = v
    if not merged.get("output_dir"):
        merged["output_dir"] = str(default_output_dir())
    return RunConfig.from_mapping(merged)
