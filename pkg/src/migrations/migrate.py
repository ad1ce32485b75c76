"""SQLite schema migration runner for the metrics database."""

from __future__ import annotations

import logging
import re
import shutil
import sqlite3
from datetime import datetime
from pathlib import Path

import config

LOGGER = logging.getLogger("rcbench.migrate")

DB_PATH: Path = config.DB_PATH
MIGRATIONS_SQL_DIR = Path(__file__).resolve().parent / "sql"


class MigrationError(RuntimeError):
    """Raised when a migration fails and rollback was triggered."""


class MigrationInProgressError(RuntimeError):
    """Raised when a migration lock already exists."""


def _backups_dir() -> Path:
    return DB_PATH.parent / "backups"


def _lock_path() -> Path:
    return _backups_dir() / ".migrate.lock"


def _ensure_dirs() -> None:
    DB_PATH.parent.mkdir(parents=True, exist_ok=True)
    _backups_dir().mkdir(parents=True, exist_ok=True)


def _list_migrations() -> list[tuple[int, Path]]:
    out: list[tuple[int, Path]] = []
    for path in sorted(MIGRATIONS_SQL_DIR.glob("[0-9][0-9][0-9]_*.sql")):
        match = re.match(r"^(\d{3})_", path.name)
        if match:
            out.append((int(match.group(1)), path))
    out.sort(key=lambda x: x[0])
    return out


def latest_migration_version() -> int:
    """Return the latest migration numeric version from sql files."""
    migrations = _list_migrations()
    return migrations[-1][0] if migrations else 0


def read_schema_version(conn: sqlite3.Connection) -> int:
    cur = conn.cursor()
    # No meta table yet means version 0.
    cur.execute("SELECT name FROM sqlite_master WHERE type='table' AND name='meta'")
    if cur.fetchone() is None:
        return 0
    cur.execute("SELECT value FROM meta WHERE key = 'schema_version'")
    row = cur.fetchone()
    if not row:
        return 0
    try:
        return int(row[0])
    except (TypeError, ValueError):
        return 0


def _set_schema_version(conn: sqlite3.Connection, version: int) -> None:
    conn.execute(
        """
        INSERT INTO meta(key, value)
        VALUES('schema_version', ?)
        ON CONFLICT(key) DO UPDATE SET value=excluded.value
        """,
        (str(version),),
    )


def _backup_db() -> Path | None:
    if not DB_PATH.exists():
        return None
    timestamp = datetime.now().strftime("%Y%m%d_%H%M%S")
    target = _backups_dir() / f"{DB_PATH.stem}_{timestamp}.db"
    shutil.copy2(DB_PATH, target)
    return target


def _acquire_lock() -> None:
    try:
        _lock_path().touch(exist_ok=False)
    except FileExistsError as e:
        raise MigrationInProgressError("migration in progress") from e


def _release_lock() -> None:
    lock = _lock_path()
    if lock.exists():
        try:
            lock.unlink()
        except OSError:
            pass


def migrate_to_latest() -> int:
    """
    Run pending SQL migrations and return the final schema version.

    A missing database is created; an existing one is copied to the backups
    directory before any pending migration runs.
    """
    _ensure_dirs()
    _acquire_lock()
    migrations = _list_migrations()
    if not migrations:
        _release_lock()
        return 0

    conn = sqlite3.connect(DB_PATH)
    try:
        current = read_schema_version(conn)
        pending = [(v, p) for v, p in migrations if v > current]
        if not pending:
            return current

        backup = _backup_db()
        if backup is not None:
            LOGGER.info("metrics db backed up to %s", backup)
        for version, sql_path in pending:
            sql = sql_path.read_text(encoding="utf-8")
            try:
                conn.execute("BEGIN IMMEDIATE")
                conn.executescript(sql)
                _set_schema_version(conn, version)
                conn.commit()
            except Exception as e:
                conn.rollback()
                raise MigrationError(
                    f"Migration failed at {sql_path.name}. Rolled back. "
                    f"Use backups in: {_backups_dir()}"
                ) from e
            LOGGER.info("applied migration %s", sql_path.name)
        return pending[-1][0]
    finally:
        conn.close()
        _release_lock()
