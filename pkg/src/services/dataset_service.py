"""Benchmark series: generalized Hénon map, NARMA and i.i.d. uniform drivers."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

import config
from utils.file_utils import read_csv, write_csv
from utils.seeding import derive_seed, make_rng

LOGGER = logging.getLogger("rcbench.datasets")

NARMA_ORDERS = (5, 10)
NARMA_INPUT_LAG = 9


class DatasetError(ValueError):
    """Raised when dataset parameters are invalid."""


class DatasetDivergenceError(RuntimeError):
    """Raised when a generator keeps diverging after all derived retries."""


@dataclass(frozen=True, eq=False)
class Dataset:
    """Aligned driver inputs and target outputs; the first *washout* rows are free-run steps."""

    inputs: np.ndarray
    targets: np.ndarray
    washout: int
    name: str

    def __post_init__(self) -> None:
        inputs = np.asarray(self.inputs, dtype=float)
        targets = np.asarray(self.targets, dtype=float)
        if inputs.ndim == 1:
            inputs = inputs.reshape(-1, 1)
        if targets.ndim == 1:
            targets = targets.reshape(-1, 1)
        if inputs.shape[0] != targets.shape[0]:
            raise DatasetError(f"inputs have {inputs.shape[0]} rows but targets have {targets.shape[0]}.")
        if not 0 <= self.washout < inputs.shape[0]:
            raise DatasetError(f"washout must be in [0, {inputs.shape[0]}), got {self.washout}.")
        if not (np.all(np.isfinite(inputs)) and np.all(np.isfinite(targets))):
            raise DatasetError(f"dataset {self.name!r} contains non-finite values.")
        object.__setattr__(self, "inputs", inputs)
        object.__setattr__(self, "targets", targets)

    @property
    def length(self) -> int:
        return int(self.inputs.shape[0])

    def segment(self, start: int, stop: int, washout: int | None = None) -> "Dataset":
        """Rows [start, stop) as a new dataset, keeping this dataset's washout unless given."""
        return Dataset(
            inputs=self.inputs[start:stop],
            targets=self.targets[start:stop],
            washout=self.washout if washout is None else washout,
            name=self.name,
        )


# ---------- Hénon ----------


def henon_series(
    m: int,
    steps: int,
    initial: np.ndarray,
    noise: np.ndarray | None = None,
) -> np.ndarray:
    """
    Iterate y(t) = 1.76 - y(t-m+1)^2 - 0.1 y(t-m) + sigma(t).

    Args:
        m: Map order (>= 2).
        steps: Number of new values to produce.
        initial: The m values y(1-m) ... y(0), oldest first.
        noise: Optional sigma(t) for t = 1..steps.

    Returns:
        Array of y(1) ... y(steps).
    """
    if m < 2:
        raise DatasetError(f"Hénon order m must be >= 2, got {m}.")
    window = np.asarray(initial, dtype=float).reshape(-1)
    if window.shape[0] != m:
        raise DatasetError(f"Hénon initial window needs {m} values, got {window.shape[0]}.")
    sigma = np.zeros(steps) if noise is None else np.asarray(noise, dtype=float).reshape(-1)
    if sigma.shape[0] < steps:
        raise DatasetError(f"noise has {sigma.shape[0]} values, need {steps}.")
    y = np.empty(m + steps)
    y[:m] = window
    for t in range(m, m + steps):
        y[t] = 1.76 - y[t - m + 1] ** 2 - 0.1 * y[t - m] + sigma[t - m]
    return y[m:]


def henon(
    m: int,
    length: int,
    noise_std: float = config.HENON_NOISE_STD,
    seed: int = 0,
    washout: int = config.WASHOUT,
) -> Dataset:
    """One-step-ahead prediction of the m-th order generalized Hénon map.

    inputs[t] = y(t), targets[t] = y(t+1). The first m values are drawn from
    U(-0.1, 0.1) and a transient is discarded before packing.
    """
    if m < 2:
        raise DatasetError(f"Hénon order m must be >= 2, got {m}.")
    if length <= m:
        raise DatasetError(f"length must exceed m={m}, got {length}.")
    if noise_std < 0:
        raise DatasetError(f"noise_std must be >= 0, got {noise_std}.")
    steps = config.HENON_TRANSIENT + length + 1
    for attempt in range(config.DATASET_RETRIES):
        sub_seed = derive_seed(seed, "henon", m, attempt)
        rng = make_rng(sub_seed)
        initial = rng.uniform(-0.1, 0.1, size=m)
        noise = rng.normal(0.0, noise_std, size=steps) if noise_std > 0 else None
        with np.errstate(over="ignore", invalid="ignore"):
            series = henon_series(m, steps, initial, noise)
        kept = series[config.HENON_TRANSIENT :]
        if np.all(np.isfinite(series)) and np.max(np.abs(series)) <= config.HENON_DIVERGENCE:
            return Dataset(inputs=kept[:-1], targets=kept[1:], washout=washout, name=f"henon{m}")
        LOGGER.warning("henon%s diverged (attempt=%s, sub_seed=%s); regenerating", m, attempt, sub_seed)
    raise DatasetDivergenceError(f"henon{m} diverged in all {config.DATASET_RETRIES} attempts (seed={seed}).")


# ---------- NARMA ----------


def narma_series(s: np.ndarray, m: int) -> np.ndarray:
    """
    y(t) = 0.3 y(t-1) + 0.05 y(t-1) sum_{i=1..m} y(t-i) + 1.5 s(t-9) s(t) + 0.1,
    with y and s zero before the first step.
    """
    if m < 1:
        raise DatasetError(f"NARMA order must be >= 1, got {m}.")
    s = np.asarray(s, dtype=float).reshape(-1)
    pad = max(m, NARMA_INPUT_LAG)
    y = np.zeros(pad + s.shape[0])
    s_pad = np.concatenate([np.zeros(pad), s])
    for t in range(pad, y.shape[0]):
        prev = y[t - 1]
        y[t] = (
            0.3 * prev
            + 0.05 * prev * np.sum(y[t - m : t])
            + 1.5 * s_pad[t - NARMA_INPUT_LAG] * s_pad[t]
            + 0.1
        )
    return y[pad:]


def narma(m: int, length: int, seed: int = 0, washout: int = config.WASHOUT) -> Dataset:
    """NARMA-m driven by s(t) ~ U(0, 0.5); the task maps s(t) to y(t)."""
    if m not in NARMA_ORDERS:
        raise DatasetError(f"NARMA order must be one of {NARMA_ORDERS}, got {m}.")
    if length <= NARMA_INPUT_LAG + 1 + washout:
        raise DatasetError(f"length must exceed {NARMA_INPUT_LAG + 1 + washout}, got {length}.")
    for attempt in range(config.DATASET_RETRIES):
        sub_seed = derive_seed(seed, "narma", m, attempt)
        s = make_rng(sub_seed).uniform(0.0, 0.5, size=length)
        with np.errstate(over="ignore", invalid="ignore"):
            y = narma_series(s, m)
        stable = np.all(np.isfinite(y)) and np.max(np.abs(y)) <= config.NARMA_DIVERGENCE
        if stable and np.min(y[washout:]) > 0.0:
            return Dataset(inputs=s, targets=y, washout=washout, name=f"narma{m}")
        LOGGER.warning("narma%s diverged (attempt=%s, sub_seed=%s); regenerating", m, attempt, sub_seed)
    raise DatasetDivergenceError(f"narma{m} diverged in all {config.DATASET_RETRIES} attempts (seed={seed}).")


# ---------- i.i.d. drivers ----------


def uniform_inputs(length: int, seed: int, lo: float = -1.0, hi: float = 1.0) -> np.ndarray:
    """i.i.d. samples on [lo, hi)."""
    if not lo < hi:
        raise DatasetError(f"uniform_inputs needs lo < hi, got [{lo}, {hi}].")
    if length < 1:
        raise DatasetError(f"length must be >= 1, got {length}.")
    return make_rng(derive_seed(seed, "uniform")).uniform(lo, hi, size=length)


# ---------- CSV audit export ----------


def export_csv(dataset: Dataset, path: str | Path) -> Path:
    """Columns: t, input_0.., target_0.."""
    n_in = dataset.inputs.shape[1]
    n_out = dataset.targets.shape[1]
    columns = ["t"] + [f"input_{i}" for i in range(n_in)] + [f"target_{j}" for j in range(n_out)]
    rows = (
        [t, *dataset.inputs[t].tolist(), *dataset.targets[t].tolist()]
        for t in range(dataset.length)
    )
    return write_csv(path, columns, rows)


def import_csv(path: str | Path, washout: int = 0, name: str = "") -> Dataset:
    header, rows = read_csv(path)
    if not header or header[0] != "t":
        raise DatasetError(f"{path}: expected a 't' first column.")
    in_cols = [i for i, h in enumerate(header) if h.startswith("input_")]
    out_cols = [i for i, h in enumerate(header) if h.startswith("target_")]
    if not in_cols or not out_cols:
        raise DatasetError(f"{path}: needs input_* and target_* columns.")
    data = np.array([[float(v) for v in row] for row in rows], dtype=float)
    return Dataset(
        inputs=data[:, in_cols],
        targets=data[:, out_cols],
        washout=washout,
        name=name or Path(path).stem,
    )
