"""Budgeted hyperparameter search over the reservoir scale parameters."""

from __future__ import annotations

import itertools
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np

import config
from utils.file_utils import write_csv
from utils.seeding import derive_seed, make_rng

LOGGER = logging.getLogger("rcbench.search")

Params = dict[str, float]
Objective = Callable[[Params], float]


class SearchSpaceError(ValueError):
    """Raised when a search space or budget is invalid."""


@dataclass(frozen=True)
class Axis:
    lo: float
    hi: float
    log: bool = False

    def __post_init__(self) -> None:
        if not self.lo < self.hi:
            raise SearchSpaceError(f"axis needs lo < hi, got [{self.lo}, {self.hi}].")
        if self.log and self.lo <= 0:
            raise SearchSpaceError(f"log axis needs lo > 0, got {self.lo}.")

    def sample(self, rng: np.random.Generator) -> float:
        if self.log:
            return float(math.exp(rng.uniform(math.log(self.lo), math.log(self.hi))))
        return float(rng.uniform(self.lo, self.hi))

    def lattice(self, points: int) -> list[float]:
        if points == 1:
            return [math.sqrt(self.lo * self.hi) if self.log else 0.5 * (self.lo + self.hi)]
        if self.log:
            return [float(v) for v in np.geomspace(self.lo, self.hi, points)]
        return [float(v) for v in np.linspace(self.lo, self.hi, points)]


@dataclass(frozen=True)
class SearchSpace:
    axes: Mapping[str, Axis]

    def __post_init__(self) -> None:
        if not self.axes:
            raise SearchSpaceError("search space needs at least one axis.")
        object.__setattr__(self, "axes", dict(sorted(self.axes.items())))

    @classmethod
    def default(cls, include_drift: bool = False) -> "SearchSpace":
        """Bounds from config; rho_drift only matters for the drift scheme."""
        axes = {
            name: Axis(lo, hi, name in config.SEARCH_LOG_AXES)
            for name, (lo, hi) in config.SEARCH_BOUNDS.items()
            if include_drift or name != "rho_drift"
        }
        return cls(axes)

    @property
    def names(self) -> list[str]:
        return list(self.axes)

    def sample(self, rng: np.random.Generator) -> Params:
        return {name: axis.sample(rng) for name, axis in self.axes.items()}


@dataclass
class SearchResult:
    best_params: Params
    best_objective: float
    trace: list[tuple[Params, float]] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "best_params": dict(self.best_params),
            "best_objective": self.best_objective,
            "evaluations": len(self.trace),
        }


def _safe_eval(objective: Objective, params: Params) -> float:
    try:
        value = float(objective(params))
    except (ArithmeticError, ValueError, RuntimeError, np.linalg.LinAlgError) as e:
        LOGGER.warning("objective failed at %s: %s", params, e)
        return math.inf
    return value if math.isfinite(value) else math.inf


def _evaluate(objective: Objective, samples: Sequence[Params], workers: int) -> SearchResult:
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            values = list(pool.map(lambda p: _safe_eval(objective, p), samples))
    else:
        values = [_safe_eval(objective, p) for p in samples]
    trace = list(zip(samples, values))
    # First minimum wins on ties, so the result follows sample order.
    best_idx = min(range(len(trace)), key=lambda i: (trace[i][1], i))
    best_params, best_value = trace[best_idx]
    LOGGER.info("search done: evaluations=%s best=%.6g params=%s", len(trace), best_value, best_params)
    return SearchResult(best_params=dict(best_params), best_objective=best_value, trace=trace)


def random_search(
    objective: Objective,
    space: SearchSpace,
    budget: int = config.SEARCH_BUDGET,
    seed: int = config.SEARCH_SEED,
    workers: int = 1,
) -> SearchResult:
    """Evaluate *budget* i.i.d. samples of *space*; deterministic for a given seed."""
    if budget < 1:
        raise SearchSpaceError(f"budget must be >= 1, got {budget}.")
    rng = make_rng(derive_seed(seed, "random_search"))
    samples = [space.sample(rng) for _ in range(budget)]
    return _evaluate(objective, samples, workers)


def grid_search(
    objective: Objective,
    space: SearchSpace,
    points_per_axis: int = 5,
    workers: int = 1,
) -> SearchResult:
    """Evaluate every point of the lattice spanned by *space* (axes in name order)."""
    if points_per_axis < 1:
        raise SearchSpaceError(f"points_per_axis must be >= 1, got {points_per_axis}.")
    names = space.names
    grids = [space.axes[name].lattice(points_per_axis) for name in names]
    samples = [dict(zip(names, combo)) for combo in itertools.product(*grids)]
    return _evaluate(objective, samples, workers)


def export_trace(result: SearchResult, path: str | Path) -> Path:
    """CSV columns: eval, <param names...>, objective."""
    names = sorted({name for params, _ in result.trace for name in params})
    rows = [
        [i, *[params.get(name) for name in names], value]
        for i, (params, value) in enumerate(result.trace)
    ]
    return write_csv(path, ["eval", *names, "objective"], rows)
