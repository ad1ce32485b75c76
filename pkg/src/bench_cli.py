"""Command-line entry point for benchmarks, sweeps, IPC runs and memory-cost tables."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Any, Sequence

import config
from migrations.migrate import migrate_to_latest
from services.dataset_service import DatasetError, export_csv
from services.experiment_service import (
    SWEEP_AXES,
    TUNE_MODES,
    ExperimentConfig,
    ExperimentConfigError,
    build_dataset,
    memcost_table,
    run_bench,
    run_ipc,
    search_params,
    sweep_schemes,
    write_bench_outputs,
    write_ipc_outputs,
    write_memcost_outputs,
    write_sweep_outputs,
)
from services.ipc_service import IpcConfigError
from services.reservoir_service import ReservoirValidationError
from services.search_service import SearchSpaceError, export_trace
from utils.file_utils import read_json, write_json
from utils.metrics import get_metrics_summary, get_recent_metrics, get_trial_scoreboard

LOGGER = logging.getLogger("rcbench.cli")

CONFIG_ERRORS = (
    ExperimentConfigError,
    ReservoirValidationError,
    IpcConfigError,
    DatasetError,
    SearchSpaceError,
    FileNotFoundError,
    json.JSONDecodeError,
)

# Keys of a JSON config file that are not experiment fields.
FILE_ONLY_KEYS = ("out",)


class CliUsageError(ExperimentConfigError):
    """Raised for malformed command lines."""


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:  # type: ignore[override]
        raise CliUsageError(message)


def _int_list(raw: str) -> list[int]:
    try:
        return [int(v) for v in raw.split(",") if v.strip()]
    except ValueError as e:
        raise CliUsageError(f"expected comma-separated integers, got {raw!r}.") from e


def _add_experiment_flags(p: argparse.ArgumentParser, with_task_order: bool = True) -> None:
    if with_task_order:
        p.add_argument("--m", type=int, help="Hénon or NARMA order.")
    p.add_argument("--scheme", help="standard, delay, drift or transient (comma list for sweep).")
    p.add_argument("--P", dest="p", type=int)
    p.add_argument("--Q", dest="q", type=int)
    p.add_argument("--ntran", dest="n_tran", type=int)
    p.add_argument("--nstar", dest="n_star", type=int)
    p.add_argument("--nres", dest="n_res", type=int, help="Fix N_res instead of floor(N*/(P+1)).")
    p.add_argument("--trials", type=int)
    p.add_argument("--seed", dest="master_seed", type=int)
    p.add_argument("--tune", choices=TUNE_MODES)
    p.add_argument("--workers", type=int)
    p.add_argument("--train-len", dest="train_len", type=int)
    p.add_argument("--test-len", dest="test_len", type=int)
    p.add_argument("--washout", type=int)
    p.add_argument("--rho-in", dest="rho_in", type=float)
    p.add_argument("--rho-res", dest="rho_res", type=float)
    p.add_argument("--rho-drift", dest="rho_drift", type=float)
    p.add_argument("--noise-std", dest="noise_std", type=float)
    p.add_argument("--search-budget", dest="search_budget", type=int)
    p.add_argument("--validation-seeds", dest="validation_seeds", type=int)
    p.add_argument("--config", dest="config_file", help="JSON file; CLI flags override it.")
    p.add_argument("--out", help="Output directory.")


def _add_ipc_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--t-steps", dest="t_steps", type=int)
    p.add_argument("--tau-max", dest="tau_max", type=int)
    p.add_argument("--max-order", dest="max_order", type=int)
    p.add_argument("--threshold-scale", dest="threshold_scale", type=float)
    p.add_argument("--ipc-washout", dest="ipc_washout", type=int)
    p.add_argument("--high-order", dest="high_order", action="store_const", const=True, default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="bench_cli", description="Reservoir size-reduction benchmarks.")
    parser.add_argument("--log-level", default=config.LOG_LEVEL, help="DEBUG, INFO, WARNING or ERROR.")
    sub = parser.add_subparsers(dest="command", required=True)

    bench = sub.add_parser("bench", help="Repeated trials of one configuration.")
    bench.add_argument("task", choices=("henon", "narma"))
    _add_experiment_flags(bench)

    sweep = sub.add_parser("sweep", help="Trials across values of Q, P or N*.")
    sweep.add_argument("--task", choices=("henon", "narma"))
    sweep.add_argument("--axis", required=True, choices=SWEEP_AXES)
    sweep.add_argument("--values", required=True, type=_int_list)
    _add_experiment_flags(sweep)

    ipc = sub.add_parser("ipc", help="Information processing capacity of one scheme.")
    _add_experiment_flags(ipc, with_task_order=False)
    _add_ipc_flags(ipc)

    search = sub.add_parser("search", help="Random search of the scale parameters.")
    search.add_argument("--task", choices=("henon", "narma"))
    _add_experiment_flags(search)

    memcost = sub.add_parser("memcost", help="Streaming readout memory table.")
    memcost.add_argument("--P", dest="ps", type=_int_list, default=[0, 1, 2, 4, 8])
    memcost.add_argument("--Q", dest="qs", type=_int_list, default=[1, 2, 4])
    memcost.add_argument("--nout", dest="n_outs", type=_int_list, default=[1])
    memcost.add_argument("--nres", dest="n_res", type=int, default=config.N_STAR)
    memcost.add_argument("--out", help="Output directory.")

    dataset = sub.add_parser("dataset", help="Export a benchmark series as CSV.")
    dataset.add_argument("task", choices=("henon", "narma"))
    dataset.add_argument("--m", type=int)
    dataset.add_argument("--seed", dest="master_seed", type=int)
    dataset.add_argument("--noise-std", dest="noise_std", type=float)
    dataset.add_argument("--train-len", dest="train_len", type=int)
    dataset.add_argument("--test-len", dest="test_len", type=int)
    dataset.add_argument("--washout", type=int)
    dataset.add_argument("--out", help="Output directory.")

    metrics = sub.add_parser("metrics", help="Operation timings and the per-configuration trial scoreboard.")
    metrics.add_argument("--limit", type=int, default=20)
    metrics.add_argument("--task", dest="run_label", help="Scoreboard for one task label, e.g. narma10.")
    return parser


# ---------- config resolution ----------

_NON_CONFIG_DESTS = {"command", "log_level", "config_file", "out", "axis", "values", "limit", "task"}


def resolve_config(
    args: argparse.Namespace,
    task: str,
    multi_scheme: bool = False,
    force_task: bool = False,
) -> tuple[ExperimentConfig, Path, list[str]]:
    """defaults < JSON file < CLI flags; returns (config, output dir, schemes)."""
    file_payload: dict[str, Any] = {}
    if getattr(args, "config_file", None):
        loaded = read_json(args.config_file)
        if not isinstance(loaded, dict):
            raise ExperimentConfigError(f"{args.config_file}: expected a JSON object.")
        file_payload = dict(loaded)
    out = args.out or file_payload.get("out") or config.OUT_DIR
    for key in FILE_ONLY_KEYS:
        file_payload.pop(key, None)

    overrides = {
        key: value
        for key, value in vars(args).items()
        if key not in _NON_CONFIG_DESTS and value is not None
    }
    cli_scheme = overrides.pop("scheme", None)
    file_scheme = file_payload.pop("scheme", None)
    schemes_raw = cli_scheme or file_scheme or "standard"
    schemes = [s.strip() for s in str(schemes_raw).split(",") if s.strip()]
    if len(schemes) > 1 and not multi_scheme:
        raise CliUsageError("only sweep accepts several schemes.")
    file_task = file_payload.pop("task", None)
    if not force_task:
        task = getattr(args, "task", None) or file_task or task

    defaults = ExperimentConfig(task=task, m=_default_order(task))
    cfg = ExperimentConfig.from_dict({**file_payload, **overrides, "scheme": schemes[0], "task": task}, defaults)
    return cfg, Path(out), schemes


def _default_order(task: str) -> int:
    return 2 if task == "henon" else 10


# ---------- subcommands ----------


def _cmd_bench(args: argparse.Namespace) -> dict[str, Any]:
    cfg, out, _ = resolve_config(args, args.task)
    batch = run_bench(cfg)
    stem = f"bench_{cfg.task_label}_{cfg.scheme}"
    paths = write_bench_outputs(batch, out, stem=stem)
    return {"mean_nmse": batch.mean, "std_nmse": batch.std, "files": paths}


def _cmd_sweep(args: argparse.Namespace) -> dict[str, Any]:
    if args.axis == "P" and args.p is None and args.values:
        # The base config must already be valid for a drift scheme.
        args.p = args.values[0]
    cfg, out, schemes = resolve_config(args, "narma", multi_scheme=True)
    reports = sweep_schemes(cfg, args.axis, args.values, schemes)
    files: dict[str, Any] = {}
    for report in reports:
        files[report.scheme] = write_sweep_outputs(report, out)
    return {
        "axis": args.axis,
        "summaries": {r.scheme: [dict(zip(config.SWEEP_CSV_COLUMNS, row)) for row in r.summary_rows()] for r in reports},
        "files": files,
    }


def _cmd_ipc(args: argparse.Namespace) -> dict[str, Any]:
    cfg, out, _ = resolve_config(args, "ipc", force_task=True)
    report = run_ipc(cfg)
    stem = f"ipc_{cfg.scheme}_P{cfg.p}_Q{cfg.q}"
    paths = write_ipc_outputs(report, out, stem=stem)
    return {
        "total": report.total,
        "per_order": report.per_order,
        "lower_bound": report.lower_bound,
        "exceeds_bound": report.exceeds_bound,
        "files": paths,
    }


def _cmd_search(args: argparse.Namespace) -> dict[str, Any]:
    cfg, out, _ = resolve_config(args, "narma")
    result = search_params(cfg)
    stem = f"search_{cfg.task_label}_{cfg.scheme}"
    return {
        **result.to_dict(),
        "files": {
            "trace": export_trace(result, out / f"{stem}_trace.csv"),
            "json": write_json(out / f"{stem}.json", result.to_dict()),
        },
    }


def _cmd_memcost(args: argparse.Namespace) -> dict[str, Any]:
    rows = memcost_table(args.ps, args.qs, args.n_outs, args.n_res)
    paths = write_memcost_outputs(rows, Path(args.out or config.OUT_DIR))
    return {"rows": len(rows), "files": paths}


def _cmd_dataset(args: argparse.Namespace) -> dict[str, Any]:
    cfg, out, _ = resolve_config(args, args.task)
    data = build_dataset(cfg, cfg.master_seed)
    path = export_csv(data, out / f"dataset_{cfg.task_label}_seed{cfg.master_seed}.csv")
    return {"rows": data.length, "files": {"csv": path}}


def _cmd_metrics(args: argparse.Namespace) -> dict[str, Any]:
    return {
        "summary": get_metrics_summary(),
        "scoreboard": get_trial_scoreboard(args.run_label),
        "recent": get_recent_metrics(limit=args.limit),
    }


COMMANDS = {
    "bench": _cmd_bench,
    "sweep": _cmd_sweep,
    "ipc": _cmd_ipc,
    "search": _cmd_search,
    "memcost": _cmd_memcost,
    "dataset": _cmd_dataset,
    "metrics": _cmd_metrics,
}


def _emit_error(e: BaseException) -> None:
    sys.stderr.write(json.dumps({"error": type(e).__name__, "message": str(e)}) + "\n")


def run_cli(argv: Sequence[str] | None = None) -> int:
    """Parse *argv*, run one subcommand and print its JSON result; returns the exit code."""
    try:
        args = build_parser().parse_args(argv)
    except CliUsageError as e:
        _emit_error(e)
        return 2
    level = logging.getLevelName(str(args.log_level).upper())
    if not isinstance(level, int):
        _emit_error(CliUsageError(f"unknown log level {args.log_level!r}."))
        return 2
    logging.basicConfig(level=level, format="%(asctime)s %(levelname)s %(name)s %(message)s")
    try:
        migrate_to_latest()
        result = COMMANDS[args.command](args)
    except CONFIG_ERRORS as e:
        LOGGER.debug("configuration error", exc_info=True)
        _emit_error(e)
        return 2
    except Exception as e:
        LOGGER.exception("%s failed", args.command)
        _emit_error(e)
        return 1
    sys.stdout.write(json.dumps(result, default=str, indent=2, sort_keys=True) + "\n")
    return 0


if __name__ == "__main__":
    sys.exit(run_cli())
