"""Minimal stability self-check for migrations, the memory-cost identity and a tiny IPC run."""

from __future__ import annotations

import sqlite3
import sys
import tempfile
from pathlib import Path


PROJECT_ROOT = Path(__file__).resolve().parents[1]
SRC_DIR = PROJECT_ROOT / "src"
if str(SRC_DIR) not in sys.path:
    sys.path.insert(0, str(SRC_DIR))

from migrations.migrate import DB_PATH, latest_migration_version, migrate_to_latest
from services.experiment_service import (
    ExperimentConfig,
    memcost_table,
    run_bench,
    run_ipc,
    run_trial,
    write_bench_outputs,
)
from services.reservoir_service import memory_cost


def check_migrations_idempotent() -> None:
    first = migrate_to_latest()
    second = migrate_to_latest()
    latest = latest_migration_version()
    assert second == first, f"migrate_to_latest not idempotent: {first} vs {second}"
    assert second == latest, f"schema version not latest: {second} vs {latest}"

    conn = sqlite3.connect(DB_PATH)
    try:
        row = conn.execute("SELECT value FROM meta WHERE key='schema_version'").fetchone()
        assert row is not None, "meta.schema_version row missing"
        assert int(row[0]) == latest, f"DB schema_version != latest ({row[0]} vs {latest})"
    finally:
        conn.close()


def check_memory_cost_identity() -> None:
    assert (memory_cost(0, 1, 1), memory_cost(2, 1, 1), memory_cost(1, 3, 2)) == (1, 6, 10)
    for row in memcost_table(range(7), range(1, 7), range(1, 5), n_res=100):
        p, q, n_out = row["P"], row["Q"], row["n_out"]
        assert 2 * row["memory_cost"] == (p + 1) * (p * q + 2) * n_out, f"memory_cost mismatch at {row}"


def check_small_ipc_bound() -> None:
    cfg = ExperimentConfig(task="ipc", n_res=6, t_steps=5000, tau_max=8, max_order=3, ipc_washout=100, rho_in=0.3)
    report = run_ipc(cfg)
    assert 0.0 < report.total <= 6 * 1.02, f"IPC total out of bounds: {report.total}"
    assert report.per_order[2] == 0.0, "even-order capacity survived thresholding"


def check_trial_determinism() -> None:
    cfg = ExperimentConfig(task="narma", m=10, n_star=20, trials=2, train_len=400, test_len=400, washout=50)
    assert run_trial(cfg, 0).nmse == run_trial(cfg, 0).nmse, "trial is not reproducible"
    with tempfile.TemporaryDirectory() as tmp:
        a = write_bench_outputs(run_bench(cfg), Path(tmp) / "a")["trials"].read_bytes()
        b = write_bench_outputs(run_bench(cfg), Path(tmp) / "b")["trials"].read_bytes()
    assert a == b, "trial CSV differs between identical runs"


def main() -> None:
    check_migrations_idempotent()
    check_memory_cost_identity()
    check_small_ipc_bound()
    check_trial_determinism()
    print("self_check: OK")


if __name__ == "__main__":
    main()
