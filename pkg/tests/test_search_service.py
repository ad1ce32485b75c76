"""Tests for services/search_service: random and grid search."""

from __future__ import annotations

import math

import pytest

import config
from services.search_service import (
    Axis,
    SearchResult,
    SearchSpace,
    SearchSpaceError,
    export_trace,
    grid_search,
    random_search,
)
from utils.file_utils import read_csv


def _quadratic(params: dict[str, float]) -> float:
    return (params["x"] - 0.5) ** 2


class TestAxis:
    def test_rejects_empty_interval(self):
        with pytest.raises(SearchSpaceError):
            Axis(1.0, 1.0)

    def test_log_axis_needs_positive_bound(self):
        with pytest.raises(SearchSpaceError):
            Axis(0.0, 1.0, log=True)

    def test_log_lattice_is_geometric(self):
        assert Axis(0.01, 1.0, log=True).lattice(3) == pytest.approx([0.01, 0.1, 1.0])


class TestSearchSpace:
    def test_default_excludes_drift(self):
        assert SearchSpace.default().names == ["rho_in", "rho_res"]

    def test_default_with_drift(self):
        assert SearchSpace.default(include_drift=True).names == ["rho_drift", "rho_in", "rho_res"]

    def test_default_bounds_from_config(self):
        lo, hi = config.SEARCH_BOUNDS["rho_res"]
        axis = SearchSpace.default().axes["rho_res"]
        assert (axis.lo, axis.hi) == (lo, hi)

    def test_empty_space_rejected(self):
        with pytest.raises(SearchSpaceError):
            SearchSpace({})


class TestRandomSearch:
    def test_budget_one_returns_the_sample(self):
        result = random_search(_quadratic, SearchSpace({"x": Axis(0.0, 1.0)}), budget=1, seed=3)
        assert len(result.trace) == 1
        assert result.best_params == result.trace[0][0]

    def test_quadratic_minimum_found(self):
        result = random_search(_quadratic, SearchSpace({"x": Axis(0.0, 1.0)}), budget=200)
        assert abs(result.best_params["x"] - 0.5) < 0.05

    def test_deterministic_for_seed(self):
        space = SearchSpace({"x": Axis(0.0, 1.0), "y": Axis(0.1, 10.0, log=True)})
        a = random_search(lambda p: p["x"] * p["y"], space, budget=20, seed=9)
        b = random_search(lambda p: p["x"] * p["y"], space, budget=20, seed=9)
        assert a.trace == b.trace

    def test_samples_inside_bounds(self):
        space = SearchSpace({"x": Axis(-2.0, -1.0), "y": Axis(0.1, 10.0, log=True)})
        result = random_search(lambda p: 0.0, space, budget=50, seed=1)
        for params, _ in result.trace:
            assert -2.0 <= params["x"] <= -1.0
            assert 0.1 <= params["y"] <= 10.0

    def test_first_minimum_wins_ties(self):
        result = random_search(lambda p: 1.0, SearchSpace({"x": Axis(0.0, 1.0)}), budget=5, seed=2)
        assert result.best_params == result.trace[0][0]

    def test_failures_become_infinite(self):
        def objective(params):
            if params["x"] < 0.5:
                raise RuntimeError("diverged")
            return params["x"]

        result = random_search(objective, SearchSpace({"x": Axis(0.0, 1.0)}), budget=30, seed=4)
        assert any(math.isinf(v) for _, v in result.trace)
        assert result.best_params["x"] >= 0.5

    def test_workers_keep_sample_order(self):
        space = SearchSpace({"x": Axis(0.0, 1.0)})
        serial = random_search(_quadratic, space, budget=16, seed=5)
        threaded = random_search(_quadratic, space, budget=16, seed=5, workers=4)
        assert serial.trace == threaded.trace

    def test_zero_budget_rejected(self):
        with pytest.raises(SearchSpaceError):
            random_search(_quadratic, SearchSpace({"x": Axis(0.0, 1.0)}), budget=0)


class TestGridSearch:
    def test_trace_length(self):
        space = SearchSpace({"a": Axis(0.0, 1.0), "b": Axis(0.0, 1.0), "c": Axis(0.0, 1.0)})
        assert len(grid_search(lambda p: 0.0, space, points_per_axis=5).trace) == 125

    def test_finds_lattice_minimizer(self):
        result = grid_search(_quadratic, SearchSpace({"x": Axis(0.0, 1.0)}), points_per_axis=5)
        assert result.best_params["x"] == pytest.approx(0.5)

    def test_matches_exhaustive_oracle(self):
        space = SearchSpace({"x": Axis(0.0, 1.0), "y": Axis(0.0, 2.0)})

        def objective(p):
            return (p["x"] - 0.3) ** 2 + (p["y"] - 1.4) ** 2

        result = grid_search(objective, space, points_per_axis=6)
        oracle = min(
            objective({"x": x, "y": y})
            for x in space.axes["x"].lattice(6)
            for y in space.axes["y"].lattice(6)
        )
        assert result.best_objective == oracle


class TestExportTrace:
    def test_columns_and_rows(self, tmp_path):
        result = SearchResult(
            best_params={"x": 0.5},
            best_objective=0.0,
            trace=[({"x": 0.25}, 0.0625), ({"x": 0.5}, 0.0)],
        )
        header, rows = read_csv(export_trace(result, tmp_path / "trace.csv"))
        assert header == ["eval", "x", "objective"]
        assert rows == [["0", "0.25", "0.0625"], ["1", "0.5", "0.0"]]
