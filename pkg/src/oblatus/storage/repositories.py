from __future__ import annotations

import json
import logging
from datetime import datetime, timezone
from typing import Optional

from oblatus.core.models import ConstantEstimate
from oblatus.storage.db import SQLiteDatabase

logger = logging.getLogger("oblatus.repo")


def utc_now_iso() -> str:
    return datetime.now(timezone.utc).isoformat()


class ConstantCacheRepo:
    """I_a estimates keyed by (a, method, budget)."""

    def __init__(self, db: SQLiteDatabase) -> None:
        self.db = db

    def get(self, a: float, method: str, budget: int) -> Optional[ConstantEstimate]:
        row = self.db.connect().execute(
            """
            SELECT a, method, budget, value, std_error, error_estimate, converged
            FROM constants_cache
            WHERE a=? AND method=? AND budget=?;
            """,
            (float(a), method, int(budget)),
        ).fetchone()
        if not row:
            return None
        return ConstantEstimate(
            value=float(row["value"]),
            std_error=float(row["std_error"]),
            method=row["method"],
            a=float(row["a"]),
            budget=int(row["budget"]),
            error_estimate=float(row["error_estimate"]),
            converged=bool(row["converged"]),
        )

    def put(self, est: ConstantEstimate) -> None:
        self.db.connect().execute(
            """
            INSERT INTO constants_cache(a, method, budget, value, std_error, error_estimate, converged, created_at_utc)
            VALUES (?,?,?,?,?,?,?,?)
            ON CONFLICT(a, method, budget) DO UPDATE SET
              value=excluded.value,
              std_error=excluded.std_error,
              error_estimate=excluded.error_estimate,
              converged=excluded.converged,
              created_at_utc=excluded.created_at_utc;
            """,
            (
                est.a,
                est.method,
                int(est.budget),
                est.value,
                est.std_error,
                est.error_estimate,
                int(est.converged),
                utc_now_iso(),
            ),
        )
        logger.info("constant cached a=%s method=%s budget=%s value=%s", est.a, est.method, est.budget, est.value)

    def list_entries(self) -> list[dict]:
        rows = self.db.connect().execute("SELECT * FROM constants_cache ORDER BY a, method, budget;").fetchall()
        return [dict(r) for r in rows]


class RunRepo:
    def __init__(self, db: SQLiteDatabase) -> None:
        self.db = db

    def start(self, experiment: str, master_seed: int, config: dict) -> int:
        conn = self.db.connect()
        conn.execute(
            """
            INSERT INTO runs(started_at_utc, experiment, master_seed, config_json, status)
            VALUES (?,?,?,?, 'running');
            """,
            (utc_now_iso(), experiment, int(master_seed), json.dumps(config, sort_keys=True)),
        )
        rid = conn.execute("SELECT last_insert_rowid() AS id;").fetchone()["id"]
        return int(rid)

    def finish(self, run_id: int, exit_code: int, manifest_path: Optional[str] = None) -> None:
        status = "ok" if exit_code == 0 else "failed"
        self.db.connect().execute(
            "UPDATE runs SET finished_at_utc=?, status=?, exit_code=?, manifest_path=? WHERE id=?;",
            (utc_now_iso(), status, int(exit_code), manifest_path, run_id),
        )

    def get(self, run_id: int) -> Optional[dict]:
        row = self.db.connect().execute("SELECT * FROM runs WHERE id=?;", (run_id,)).fetchone()
        return dict(row) if row else None

    def list_runs(self, limit: int = 50) -> list[dict]:
        rows = self.db.connect().execute(
            "SELECT * FROM runs ORDER BY id DESC LIMIT ?;",
            (int(limit),),
        ).fetchall()
        return [dict(r) for r in rows]
