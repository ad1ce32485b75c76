"""Shared pytest fixtures for the rcbench test suite."""

from __future__ import annotations

import sqlite3
import sys
from pathlib import Path

import numpy as np
import pytest

# Ensure src/ is on the path so all service imports resolve.
SRC_DIR = Path(__file__).resolve().parents[1] / "src"
if str(SRC_DIR) not in sys.path:
    sys.path.insert(0, str(SRC_DIR))

MIGRATIONS_SQL_DIR = SRC_DIR / "migrations" / "sql"


def _apply_migrations(db_path: str) -> None:
    """Run all SQL migration files in order against *db_path*."""
    conn = sqlite3.connect(db_path)
    try:
        sql_files = sorted(MIGRATIONS_SQL_DIR.glob("[0-9][0-9][0-9]_*.sql"))
        for sql_file in sql_files:
            conn.executescript(sql_file.read_text(encoding="utf-8"))
        conn.execute(
            "INSERT INTO meta(key, value) VALUES('schema_version', ?) "
            "ON CONFLICT(key) DO UPDATE SET value=excluded.value",
            (str(len(sql_files)),),
        )
        conn.commit()
    finally:
        conn.close()


@pytest.fixture(autouse=True)
def _isolated_db_path(tmp_path, monkeypatch):
    """Keep every test away from the real metrics database and output directory."""
    import migrations.migrate as migrate_mod
    import utils.metrics as metrics_mod

    db_file = tmp_path / "metrics" / "bench.db"
    monkeypatch.setattr(metrics_mod, "DB_PATH", db_file)
    monkeypatch.setattr(migrate_mod, "DB_PATH", db_file)
    return db_file


@pytest.fixture
def tmp_db(tmp_path, monkeypatch):
    """Temporary SQLite DB with all migrations applied.

    Monkeypatches DB_PATH in the metrics and migration modules so tests use an isolated DB.
    """
    db_file = str(tmp_path / "test_bench.db")
    _apply_migrations(db_file)

    import migrations.migrate as migrate_mod
    import utils.metrics as metrics_mod

    monkeypatch.setattr(migrate_mod, "DB_PATH", Path(db_file))
    monkeypatch.setattr(metrics_mod, "DB_PATH", Path(db_file))

    def _patched_connect_metrics():
        conn = sqlite3.connect(db_file)
        conn.row_factory = sqlite3.Row
        return conn

    monkeypatch.setattr(metrics_mod, "_connect", _patched_connect_metrics)
    return db_file


@pytest.fixture
def small_weights():
    """A 10-node reservoir with drift matrix, scalar input."""
    from services.reservoir_service import ReservoirConfig, init_weights

    return init_weights(
        ReservoirConfig(n_in=1, n_res=10, n_out=1, rho_in=0.5, rho_res=0.9, rho_drift=0.8, seed=7)
    )


@pytest.fixture
def uniform_drive():
    return np.random.default_rng(3).uniform(-1.0, 1.0, size=400)
