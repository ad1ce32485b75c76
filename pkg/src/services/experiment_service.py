"""Experiment protocols: benchmark trials, parameter sweeps, IPC runs and memory-cost tables.

Every trial regenerates its dataset and reservoir from a seed derived from
(master_seed, task, scheme, sweep point, trial index), so any single point
of a sweep can be re-run on its own and gives the same numbers.
"""

from __future__ import annotations

import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

import numpy as np

import config
from services.dataset_service import Dataset, henon, narma
from services.ipc_service import IpcConfig, IpcReport, ipc_report
from services.readout_service import fit_readout, nmse, predict
from services.reservoir_service import (
    ReservoirConfig,
    Scheme,
    SchemeKind,
    WeightSet,
    init_weights,
    memory_cost,
    scheme_features,
    state_memory_cost,
)
from services.search_service import SearchResult, SearchSpace, random_search
from utils.file_utils import write_csv, write_json
from utils.metrics import RunIdentity, log_metric
from utils.seeding import check_seed, derive_seed

LOGGER = logging.getLogger("rcbench.experiment")

TASKS = ("henon", "narma", "ipc")
TUNE_MODES = ("off", "global", "per-point")
SWEEP_AXES = ("Q", "P", "n_star")
MEMCOST_COLUMNS = ("P", "Q", "n_out", "n_res", "memory_cost", "state_cost", "efficient")

# CLI flag spellings accepted as JSON keys.
KEY_ALIASES = {
    "P": "p",
    "Q": "q",
    "ntran": "n_tran",
    "nstar": "n_star",
    "nres": "n_res",
    "seed": "master_seed",
}


class ExperimentConfigError(ValueError):
    """Raised when an experiment configuration is invalid."""


@dataclass(frozen=True)
class ExperimentConfig:
    task: str = "narma"
    m: int = 10
    scheme: str = "standard"
    p: int = 0
    q: int = 1
    n_tran: int = 1
    n_star: int = config.N_STAR
    n_res: int | None = None
    trials: int = config.TRIALS
    train_len: int = config.TRAIN_LEN
    test_len: int = config.TEST_LEN
    washout: int = config.WASHOUT
    rho_in: float = config.RHO_IN
    rho_res: float = config.RHO_RES
    rho_drift: float = config.RHO_DRIFT
    noise_std: float = config.HENON_NOISE_STD
    tune: str = "off"
    search_budget: int = config.SEARCH_BUDGET
    validation_seeds: int = config.VALIDATION_SEEDS
    master_seed: int = 0
    workers: int = 1
    seed_tag: str = ""
    t_steps: int = config.IPC_T_STEPS
    tau_max: int = config.IPC_TAU_MAX
    max_order: int = config.IPC_MAX_ORDER
    threshold_scale: float = 1.0
    ipc_washout: int = config.IPC_WASHOUT
    high_order: bool = False

    def __post_init__(self) -> None:
        if self.task not in TASKS:
            raise ExperimentConfigError(f"task must be one of {TASKS}, got {self.task!r}.")
        if self.tune not in TUNE_MODES:
            raise ExperimentConfigError(f"tune must be one of {TUNE_MODES}, got {self.tune!r}.")
        try:
            self.build_scheme()
            check_seed(self.master_seed)
        except ValueError as e:
            raise ExperimentConfigError(str(e)) from e
        if self.task == "henon" and self.m < 2:
            raise ExperimentConfigError(f"Hénon order m must be >= 2, got {self.m}.")
        if self.task == "narma" and self.m not in (5, 10):
            raise ExperimentConfigError(f"NARMA order must be 5 or 10, got {self.m}.")
        if self.trials < 1 or self.validation_seeds < 1 or self.search_budget < 1 or self.workers < 1:
            raise ExperimentConfigError("trials, validation_seeds, search_budget and workers must be >= 1.")
        if self.task != "ipc":
            if self.washout < 0 or self.washout >= min(self.train_len, self.test_len):
                raise ExperimentConfigError(
                    f"washout={self.washout} must be below train_len and test_len."
                )
        if self.resolved_n_res < 1:
            raise ExperimentConfigError(
                f"n_star={self.n_star} is too small for P={self.build_scheme().p} (n_res would be 0)."
            )

    # ---------- derived values ----------

    def build_scheme(self) -> Scheme:
        return Scheme.from_name(self.scheme, p=self.p, q=self.q, n_tran=self.n_tran)

    @property
    def resolved_n_res(self) -> int:
        """N_res = floor(N* / (P+1)) unless fixed explicitly."""
        if self.n_res is not None:
            return int(self.n_res)
        return self.n_star // self.build_scheme().concat_factor()

    @property
    def task_label(self) -> str:
        return "ipc" if self.task == "ipc" else f"{self.task}{self.m}"

    def hyperparams(self) -> dict[str, float]:
        params = {"rho_in": self.rho_in, "rho_res": self.rho_res}
        if self.build_scheme().kind is SchemeKind.DRIFT:
            params["rho_drift"] = self.rho_drift
        return params

    def reservoir_config(self, seed: int, params: Mapping[str, float] | None = None) -> ReservoirConfig:
        values = dict(self.hyperparams())
        values.update(params or {})
        drift = values.get("rho_drift") if self.build_scheme().kind is SchemeKind.DRIFT else None
        return ReservoirConfig(
            n_in=1,
            n_res=self.resolved_n_res,
            n_out=1,
            rho_in=float(values["rho_in"]),
            rho_res=float(values["rho_res"]),
            rho_drift=None if drift is None else float(drift),
            seed=seed,
        )

    def ipc_config(self) -> IpcConfig:
        return IpcConfig(
            t_steps=self.t_steps,
            tau_max=self.tau_max,
            max_order=self.max_order,
            threshold_scale=self.threshold_scale,
            input_seed=derive_seed(self.master_seed, "ipc", "inputs"),
            washout=self.ipc_washout,
            high_order=self.high_order,
            workers=self.workers,
        )

    def seed_parts(self) -> tuple[Any, ...]:
        return (self.master_seed, self.task_label, self.scheme, self.seed_tag)

    @property
    def run_identity(self) -> RunIdentity:
        scheme = self.build_scheme()
        return RunIdentity(
            run_label=self.task_label,
            scheme=self.scheme,
            p=scheme.p,
            q=scheme.q,
            n_res=self.resolved_n_res,
        )

    # ---------- (de)serialisation ----------

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    def updated(self, **changes: Any) -> "ExperimentConfig":
        try:
            return replace(self, **changes)
        except TypeError as e:
            raise ExperimentConfigError(str(e)) from e

    @classmethod
    def from_dict(cls, payload: Mapping[str, Any], base: "ExperimentConfig | None" = None) -> "ExperimentConfig":
        """Layer *payload* over *base* (defaults when None); unknown keys are an error."""
        known = {f.name for f in fields(cls)}
        changes: dict[str, Any] = {}
        for key, value in payload.items():
            name = KEY_ALIASES.get(key, key)
            if name not in known:
                raise ExperimentConfigError(f"Unknown configuration key {key!r}.")
            changes[name] = value
        return replace(base or cls(), **changes) if changes else (base or cls())


@dataclass(frozen=True)
class TrialResult:
    trial: int
    seed: int
    nmse: float
    n_res: int
    effective_test_len: int


@dataclass
class TrialBatch:
    config: ExperimentConfig
    params: dict[str, float]
    results: list[TrialResult]
    search: SearchResult | None = None

    @property
    def values(self) -> np.ndarray:
        return np.array([r.nmse for r in self.results], dtype=float)

    @property
    def mean(self) -> float:
        return float(np.mean(self.values))

    @property
    def std(self) -> float:
        return float(np.std(self.values))

    def summary(self) -> dict[str, Any]:
        return {
            "task": self.config.task_label,
            "scheme": self.config.build_scheme().label,
            "n_star": self.config.n_star,
            "n_res": self.config.resolved_n_res,
            "params": dict(self.params),
            "nmse": [r.nmse for r in self.results],
            "mean_nmse": self.mean,
            "std_nmse": self.std,
            "effective_test_len": self.results[0].effective_test_len if self.results else 0,
            "search": self.search.to_dict() if self.search else None,
            "csv_schema_version": config.CSV_SCHEMA_VERSION,
        }


@dataclass
class SweepPoint:
    value: int
    batch: TrialBatch


@dataclass
class SweepReport:
    axis: str
    scheme: str
    points: list[SweepPoint] = field(default_factory=list)

    def summary_rows(self) -> list[tuple[str, int, float, float, int]]:
        return [(self.axis, p.value, p.batch.mean, p.batch.std, len(p.batch.results)) for p in self.points]

    def to_dict(self) -> dict[str, Any]:
        return {
            "axis": self.axis,
            "scheme": self.scheme,
            "points": [{"value": p.value, **p.batch.summary()} for p in self.points],
            "csv_schema_version": config.CSV_SCHEMA_VERSION,
        }


# ---------- seeds and data ----------


def trial_seed(cfg: ExperimentConfig, trial_index: int) -> int:
    return derive_seed(*cfg.seed_parts(), "trial", trial_index)


def validation_seeds(cfg: ExperimentConfig) -> list[int]:
    seeds = [derive_seed(*cfg.seed_parts(), "validation", k) for k in range(cfg.validation_seeds)]
    reporting = {trial_seed(cfg, i) for i in range(cfg.trials)}
    if reporting.intersection(seeds):
        raise ExperimentConfigError("validation seeds collide with reporting trial seeds.")
    return seeds


def build_dataset(cfg: ExperimentConfig, seed: int) -> Dataset:
    length = cfg.train_len + cfg.test_len
    if cfg.task == "henon":
        return henon(cfg.m, length, cfg.noise_std, seed, washout=cfg.washout)
    if cfg.task == "narma":
        return narma(cfg.m, length, seed, washout=cfg.washout)
    raise ExperimentConfigError(f"task {cfg.task!r} has no benchmark dataset.")


def evaluate_dataset(cfg: ExperimentConfig, dataset: Dataset, weights: WeightSet) -> tuple[float, int]:
    """Train on the first train_len steps, test on the next test_len; returns (test NMSE, test rows).

    Both phases start from the zero state and drop their first `washout` outputs.
    """
    scheme = cfg.build_scheme()
    train = dataset.segment(0, cfg.train_len)
    test = dataset.segment(cfg.train_len, cfg.train_len + cfg.test_len)

    x_train = scheme_features(weights, train.inputs, scheme).since(cfg.washout)
    readout, _ = fit_readout(x_train, train.targets[x_train.time_index], bias=True)

    x_test = scheme_features(weights, test.inputs, scheme).since(cfg.washout)
    pred = predict(readout, x_test)
    return nmse(pred, test.targets[x_test.time_index]), x_test.length


def _seeded_nmse(cfg: ExperimentConfig, seed: int, params: Mapping[str, float] | None) -> tuple[float, int]:
    dataset = build_dataset(cfg, derive_seed(seed, "dataset"))
    weights = init_weights(cfg.reservoir_config(derive_seed(seed, "reservoir"), params))
    return evaluate_dataset(cfg, dataset, weights)


def run_trial(cfg: ExperimentConfig, trial_index: int, params: Mapping[str, float] | None = None) -> TrialResult:
    """One reporting trial: fresh dataset and reservoir, returns the test NMSE."""
    t0 = time.perf_counter()
    seed = trial_seed(cfg, trial_index)
    value, test_rows = _seeded_nmse(cfg, seed, params)
    log_metric("trial", time.perf_counter() - t0, cfg.run_identity, nmse=value, trial=trial_index, seed=seed)
    return TrialResult(
        trial=trial_index,
        seed=seed,
        nmse=value,
        n_res=cfg.resolved_n_res,
        effective_test_len=test_rows,
    )


# ---------- tuning ----------


def validation_objective(cfg: ExperimentConfig):
    seeds = validation_seeds(cfg)

    def objective(params: dict[str, float]) -> float:
        return float(np.mean([_seeded_nmse(cfg, s, params)[0] for s in seeds]))

    return objective


def search_params(cfg: ExperimentConfig) -> SearchResult:
    """Random search of the scale parameters on validation seeds."""
    t0 = time.perf_counter()
    space = SearchSpace.default(include_drift=cfg.build_scheme().kind is SchemeKind.DRIFT)
    result = random_search(
        validation_objective(cfg),
        space,
        budget=cfg.search_budget,
        seed=derive_seed(*cfg.seed_parts(), "search"),
        workers=cfg.workers,
    )
    log_metric(
        "search",
        time.perf_counter() - t0,
        cfg.run_identity,
        budget=cfg.search_budget,
        best=result.best_objective,
    )
    return result


# ---------- batches and sweeps ----------


def run_trials(cfg: ExperimentConfig, params: Mapping[str, float] | None = None) -> list[TrialResult]:
    """All reporting trials of *cfg*, ordered by trial index."""
    indices = list(range(cfg.trials))
    if cfg.workers > 1 and cfg.trials > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            return list(pool.map(run_trial, [cfg] * len(indices), indices, [params] * len(indices)))
    return [run_trial(cfg, i, params) for i in indices]


def run_bench(cfg: ExperimentConfig, search: SearchResult | None = None) -> TrialBatch:
    """Trials of one configuration, tuning first unless tune is off or a search result is given."""
    t0 = time.perf_counter()
    if search is None and cfg.tune != "off":
        search = search_params(cfg)
    params = dict(search.best_params) if search else cfg.hyperparams()
    batch = TrialBatch(config=cfg, params=params, results=run_trials(cfg, params), search=search)
    LOGGER.info(
        "bench(task=%s,scheme=%s,n_res=%s) mean_nmse=%.6g std=%.3g",
        cfg.task_label,
        cfg.build_scheme().label,
        cfg.resolved_n_res,
        batch.mean,
        batch.std,
    )
    log_metric(
        "bench",
        time.perf_counter() - t0,
        cfg.run_identity,
        nmse=batch.mean,
        trials=cfg.trials,
        std_nmse=batch.std,
    )
    return batch


def point_config(cfg: ExperimentConfig, axis: str, value: int) -> ExperimentConfig:
    """The configuration of one sweep point; P and N* sweeps re-derive N_res from N*."""
    if axis == "Q":
        changes: dict[str, Any] = {"q": int(value)}
    elif axis == "P":
        changes = {"p": int(value), "n_res": None}
    elif axis == "n_star":
        changes = {"n_star": int(value), "n_res": None}
    else:
        raise ExperimentConfigError(f"sweep axis must be one of {SWEEP_AXES}, got {axis!r}.")
    changes["seed_tag"] = f"{axis}={int(value)}"
    return replace(cfg, **changes)


def sweep(cfg: ExperimentConfig, axis: str, values: Sequence[int]) -> SweepReport:
    """Trial batches for each value of *axis*, in the order given."""
    if not values:
        raise ExperimentConfigError("sweep needs at least one value.")
    t0 = time.perf_counter()
    shared_search = search_params(cfg.updated(seed_tag="global")) if cfg.tune == "global" else None
    report = SweepReport(axis=axis, scheme=cfg.scheme)
    for value in values:
        point = point_config(cfg, axis, value)
        LOGGER.info("sweep(axis=%s,value=%s,scheme=%s)", axis, value, point.build_scheme().label)
        if cfg.tune == "global":
            batch = run_bench(point, search=shared_search)
        elif cfg.tune == "per-point":
            batch = run_bench(point)
        else:
            batch = run_bench(point.updated(tune="off"))
        report.points.append(SweepPoint(value=int(value), batch=batch))
    log_metric(
        "sweep",
        time.perf_counter() - t0,
        RunIdentity(run_label=cfg.task_label, scheme=cfg.scheme),
        axis=axis,
        values=list(values),
    )
    return report


def sweep_schemes(cfg: ExperimentConfig, axis: str, values: Sequence[int], schemes: Iterable[str]) -> list[SweepReport]:
    """The same sweep for several schemes (method comparison)."""
    return [sweep(cfg.updated(scheme=name), axis, values) for name in schemes]


# ---------- IPC and memory cost ----------


def ipc_weights(cfg: ExperimentConfig) -> WeightSet:
    """Reservoir shared by every scheme of an IPC run (drift matrix always drawn)."""
    return init_weights(
        ReservoirConfig(
            n_in=1,
            n_res=cfg.resolved_n_res,
            n_out=1,
            rho_in=cfg.rho_in,
            rho_res=cfg.rho_res,
            rho_drift=cfg.rho_drift,
            seed=derive_seed(cfg.master_seed, "ipc", "reservoir"),
        )
    )


def run_ipc(cfg: ExperimentConfig) -> IpcReport:
    t0 = time.perf_counter()
    scheme = cfg.build_scheme()
    report = ipc_report(ipc_weights(cfg), scheme, cfg.ipc_config())
    report.meta.update({"n_res": cfg.resolved_n_res, "rho_in": cfg.rho_in, "rho_res": cfg.rho_res})
    log_metric(
        "ipc",
        time.perf_counter() - t0,
        cfg.run_identity,
        total=report.total,
        evaluated=report.n_evaluated,
    )
    return report


def memcost_table(
    ps: Sequence[int],
    qs: Sequence[int],
    n_outs: Sequence[int],
    n_res: int,
) -> list[dict[str, Any]]:
    """Streaming delay-readout memory against a (P+1)-times larger reservoir."""
    t0 = time.perf_counter()
    rows: list[dict[str, Any]] = []
    for p in ps:
        for q in qs:
            for n_out in n_outs:
                cost = memory_cost(p, q, n_out)
                state = state_memory_cost(p, n_res)
                rows.append(
                    {
                        "P": p,
                        "Q": q,
                        "n_out": n_out,
                        "n_res": n_res,
                        "memory_cost": cost,
                        "state_cost": state,
                        "efficient": cost < state,
                    }
                )
    log_metric("memcost", time.perf_counter() - t0, rows=len(rows))
    return rows


# ---------- reports on disk ----------


def trial_rows(batch: TrialBatch) -> list[tuple[Any, ...]]:
    cfg = batch.config
    scheme = cfg.build_scheme()
    return [
        (cfg.task_label, cfg.scheme, scheme.p, scheme.q, cfg.n_star, r.n_res, r.trial, r.seed, r.nmse)
        for r in batch.results
    ]


def write_bench_outputs(batch: TrialBatch, out_dir: str | Path, stem: str = "bench") -> dict[str, Path]:
    out = Path(out_dir)
    return {
        "trials": write_csv(out / f"{stem}_trials.csv", config.TRIAL_CSV_COLUMNS, trial_rows(batch)),
        "summary": write_json(out / f"{stem}_summary.json", {"config": batch.config.to_dict(), **batch.summary()}),
    }


def sweep_report_rows(report: SweepReport) -> list[tuple[Any, ...]]:
    """Every trial of every point, then one summary row per point."""
    rows: list[tuple[Any, ...]] = []
    for point in report.points:
        for task, scheme, p, q, n_star, n_res, trial, seed, value in trial_rows(point.batch):
            rows.append(("trial", report.axis, point.value, task, scheme, p, q, n_star, n_res, trial, seed, value, None, None))
    for point in report.points:
        cfg = point.batch.config
        scheme = cfg.build_scheme()
        rows.append(
            (
                "summary",
                report.axis,
                point.value,
                cfg.task_label,
                cfg.scheme,
                scheme.p,
                scheme.q,
                cfg.n_star,
                cfg.resolved_n_res,
                None,
                None,
                point.batch.mean,
                point.batch.std,
                len(point.batch.results),
            )
        )
    return rows


def write_sweep_outputs(report: SweepReport, out_dir: str | Path) -> dict[str, Path]:
    """The combined report CSV plus the fixed-schema trial and summary CSVs and a JSON summary."""
    out = Path(out_dir)
    stem = f"sweep_{report.axis}_{report.scheme}"
    rows = [row for point in report.points for row in trial_rows(point.batch)]
    return {
        "report": write_csv(out / f"{stem}.csv", config.SWEEP_REPORT_CSV_COLUMNS, sweep_report_rows(report)),
        "trials": write_csv(out / f"{stem}_trials.csv", config.TRIAL_CSV_COLUMNS, rows),
        "summary": write_csv(out / f"{stem}_summary.csv", config.SWEEP_CSV_COLUMNS, report.summary_rows()),
        "json": write_json(out / f"{stem}.json", report.to_dict()),
    }


def write_ipc_outputs(report: IpcReport, out_dir: str | Path, stem: str = "ipc") -> dict[str, Path]:
    out = Path(out_dir)
    return {
        "csv": write_csv(out / f"{stem}.csv", config.IPC_CSV_COLUMNS, report.csv_rows()),
        "json": write_json(out / f"{stem}.json", report.to_dict()),
    }


def write_memcost_outputs(rows: list[dict[str, Any]], out_dir: str | Path) -> dict[str, Path]:
    path = write_csv(
        Path(out_dir) / "memcost.csv",
        MEMCOST_COLUMNS,
        [[row[c] for c in MEMCOST_COLUMNS] for row in rows],
    )
    return {"csv": path}
