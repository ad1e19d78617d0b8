from __future__ import annotations

import csv
import dataclasses
import json
import logging
import math
import os
from pathlib import Path
from typing import Any

import numpy as np

from oblatus.core.models import SampleBatch

logger = logging.getLogger("oblatus.export")

PARTIAL_SUFFIX = ".partial"
MANIFEST_NAME = "manifest.json"


def file_stem(experiment: str, a: float, n: int | None, seed: int) -> str:
    n_part = "x" if n is None else str(int(n))
    return f"{experiment}_a{a!r}_n{n_part}_seed{int(seed)}"


def _plain(v: Any) -> Any:
    if isinstance(v, np.ndarray):
        return [_plain(x) for x in v.tolist()]
    if isinstance(v, np.generic):
        return v.item()
    if dataclasses.is_dataclass(v) and not isinstance(v, type):
        return {f.name: _plain(getattr(v, f.name)) for f in dataclasses.fields(v)}
    if isinstance(v, dict):
        return {str(k): _plain(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_plain(x) for x in v]
    if isinstance(v, Path):
        return str(v)
    return v


def _json_value(v: Any) -> Any:
    # NaN/inf are not JSON; store them as strings
    if isinstance(v, float) and not math.isfinite(v):
        return repr(v)
    if isinstance(v, dict):
        return {k: _json_value(x) for k, x in v.items()}
    if isinstance(v, list):
        return [_json_value(x) for x in v]
    return v


def to_record(obj: Any) -> Any:
    """Dataclasses, numpy arrays and scalars as plain JSON-ready Python values."""
    return _json_value(_plain(obj))


def _cell(v: Any) -> Any:
    v = _plain(v)
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, bool):
        return int(v)
    return v


def export_rows_csv(path: Path, headers: list[str], rows: list[dict]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="") as f:
        w = csv.DictWriter(f, fieldnames=headers)
        w.writeheader()
        for r in rows:
            w.writerow({k: _cell(r.get(k)) for k in headers})


def write_json(path: Path, record: Any) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    text = json.dumps(to_record(record), indent=2, sort_keys=True, allow_nan=False)
    path.write_text(text + "\n", encoding="utf-8")


def write_batch_csv(path: Path, batch: SampleBatch) -> None:
    """Point dump with ``# key=value`` provenance lines ahead of the header."""
    path.parent.mkdir(parents=True, exist_ok=True)
    meta = {
        "a": repr(batch.shape.a),
        "method": batch.method,
        "master_seed": batch.stream.master_seed,
        "stream_index": batch.stream.stream_index,
        "n": len(batch),
    }
    with path.open("w", encoding="utf-8", newline="") as f:
        for k, v in meta.items():
            f.write(f"# {k}={v}\r\n")
        w = csv.writer(f)
        w.writerow(["x1", "x2", "x3"])
        for row in batch.points:
            w.writerow([repr(float(x)) for x in row])


def atomic_write_json(path: Path, record: Any) -> None:
    tmp = path.with_name(path.name + ".tmp")
    write_json(tmp, record)
    os.replace(tmp, path)


class OutputSession:
    """
    Files of one run:
    - every output is first written as ``<name>.partial``
    - ``commit()`` renames all of them and then writes the manifest atomically
    - a failed run keeps its ``.partial`` files and has no manifest
    """

    def __init__(self, base_dir: Path) -> None:
        self.base_dir = Path(base_dir).resolve()
        self.base_dir.mkdir(parents=True, exist_ok=True)
        self._pending: list[Path] = []
        self.files: list[Path] = []

    def _target(self, rel: str | Path) -> Path:
        path = (self.base_dir / rel).resolve()
        if not path.is_relative_to(self.base_dir):
            raise ValueError(f"output path escapes output_dir path={rel}")
        return path

    def _partial(self, path: Path) -> Path:
        self._pending.append(path)
        return path.with_name(path.name + PARTIAL_SUFFIX)

    def table(self, rel: str | Path, headers: list[str], rows: list[dict]) -> Path:
        path = self._target(rel)
        export_rows_csv(self._partial(path), headers, rows)
        logger.info("table written path=%s rows=%s", path.name, len(rows))
        return path

    def record(self, rel: str | Path, record: Any) -> Path:
        path = self._target(rel)
        write_json(self._partial(path), record)
        logger.info("record written path=%s", path.name)
        return path

    def batch(self, rel: str | Path, batch: SampleBatch) -> Path:
        path = self._target(rel)
        write_batch_csv(self._partial(path), batch)
        return path

    def commit(self, manifest: dict) -> Path:
        for path in self._pending:
            os.replace(path.with_name(path.name + PARTIAL_SUFFIX), path)
            self.files.append(path)
        self._pending = []
        manifest = dict(manifest)
        manifest["files"] = sorted(str(p.relative_to(self.base_dir)) for p in self.files)
        out = self._target(MANIFEST_NAME)
        atomic_write_json(out, manifest)
        logger.info("manifest written files=%s", len(self.files))
        return out
