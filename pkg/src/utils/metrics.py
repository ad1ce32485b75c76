"""Operation timings and trial scores, keyed by experiment identity, in SQLite."""

from __future__ import annotations

import json
import sqlite3
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Any

import config

# Resolved at module load time; tests can monkeypatch this symbol.
DB_PATH: Path = config.DB_PATH

_SELECT_COLUMNS = "id, operation, run_label, scheme, p, q, n_res, nmse, elapsed_s, meta_json, created_at"


@dataclass(frozen=True)
class RunIdentity:
    """Which experiment a metric row belongs to: task label, scheme label and (P, Q, N_res)."""

    run_label: str = ""
    scheme: str = ""
    p: int | None = None
    q: int | None = None
    n_res: int | None = None


def _now_iso() -> str:
    return datetime.now(timezone.utc).replace(microsecond=0, tzinfo=None).isoformat()


def _connect() -> sqlite3.Connection:
    conn = sqlite3.connect(DB_PATH)
    conn.row_factory = sqlite3.Row
    return conn


def log_metric(
    operation: str,
    elapsed_s: float,
    identity: RunIdentity | None = None,
    nmse: float | None = None,
    **meta: Any,
) -> None:
    """Persist one operation row. Never raises; a broken metrics DB must not stop an experiment.

    Args:
        operation: "trial", "bench", "sweep", "ipc", "search" or "memcost".
        elapsed_s: Wall-clock seconds the operation took.
        identity: Task/scheme/P/Q/N_res of the run, if it has one.
        nmse: Test NMSE for trial and bench rows (mean over trials for bench).
        **meta: Everything else, stored as JSON.
    """
    ident = identity or RunIdentity()
    try:
        meta_json = json.dumps(meta, ensure_ascii=False, default=str, sort_keys=True)
        with _connect() as conn:
            conn.execute(
                """
                INSERT INTO operation_metrics
                    (operation, run_label, scheme, p, q, n_res, nmse, elapsed_s, meta_json, created_at)
                VALUES (?, ?, ?, ?, ?, ?, ?, ?, ?, ?)
                """,
                (
                    operation,
                    ident.run_label,
                    ident.scheme,
                    ident.p,
                    ident.q,
                    ident.n_res,
                    None if nmse is None else float(nmse),
                    round(elapsed_s, 3),
                    meta_json,
                    _now_iso(),
                ),
            )
    except Exception:  # noqa: BLE001
        pass


def get_recent_metrics(limit: int = 50, operation: str | None = None) -> list[dict[str, Any]]:
    """Most recent rows, newest first, optionally for one operation. Empty on any error."""
    where = "WHERE operation = ?" if operation else ""
    params: tuple[Any, ...] = (operation, max(1, limit)) if operation else (max(1, limit),)
    try:
        with _connect() as conn:
            rows = conn.execute(
                f"SELECT {_SELECT_COLUMNS} FROM operation_metrics {where} ORDER BY id DESC LIMIT ?",
                params,
            ).fetchall()
        out: list[dict[str, Any]] = []
        for row in rows:
            item = dict(row)
            try:
                item["meta"] = json.loads(item.pop("meta_json") or "{}")
            except Exception:  # noqa: BLE001
                item["meta"] = {}
            out.append(item)
        return out
    except Exception:  # noqa: BLE001
        return []


def get_metrics_summary() -> dict[str, Any]:
    """Per-operation counts and timing statistics. Empty dict on any error."""
    try:
        with _connect() as conn:
            rows = conn.execute(
                """
                SELECT
                    operation,
                    COUNT(*)          AS total,
                    AVG(elapsed_s)    AS avg_s,
                    MIN(elapsed_s)    AS min_s,
                    MAX(elapsed_s)    AS max_s,
                    MAX(created_at)   AS last_at
                FROM operation_metrics
                GROUP BY operation
                ORDER BY total DESC, operation ASC
                """
            ).fetchall()
        return {
            row["operation"]: {
                "total": row["total"],
                "avg_s": round(row["avg_s"], 3),
                "min_s": round(row["min_s"], 3),
                "max_s": round(row["max_s"], 3),
                "last_at": row["last_at"],
            }
            for row in rows
        }
    except Exception:  # noqa: BLE001
        return {}


def get_trial_scoreboard(run_label: str | None = None) -> list[dict[str, Any]]:
    """Trial NMSE grouped by (task, scheme, P, Q, N_res), best mean first.

    Returns an empty list on any error.
    """
    where = "AND run_label = ?" if run_label else ""
    params: tuple[Any, ...] = (run_label,) if run_label else ()
    try:
        with _connect() as conn:
            rows = conn.execute(
                f"""
                SELECT
                    run_label, scheme, p, q, n_res,
                    COUNT(*)       AS trials,
                    AVG(nmse)      AS mean_nmse,
                    MIN(nmse)      AS best_nmse,
                    AVG(elapsed_s) AS avg_s
                FROM operation_metrics
                WHERE operation = 'trial' AND nmse IS NOT NULL {where}
                GROUP BY run_label, scheme, p, q, n_res
                ORDER BY mean_nmse ASC, run_label ASC, scheme ASC
                """,
                params,
            ).fetchall()
        return [
            {
                "run_label": row["run_label"],
                "scheme": row["scheme"],
                "P": row["p"],
                "Q": row["q"],
                "n_res": row["n_res"],
                "trials": row["trials"],
                "mean_nmse": row["mean_nmse"],
                "best_nmse": row["best_nmse"],
                "avg_s": round(row["avg_s"], 3),
            }
            for row in rows
        ]
    except Exception:  # noqa: BLE001
        return []
