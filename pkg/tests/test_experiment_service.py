"""Tests for services/experiment_service: trials, sweeps, tuning, IPC runs and reports."""

from __future__ import annotations

import numpy as np
import pytest

import services.experiment_service as exp
from services.dataset_service import Dataset
from services.experiment_service import (
    ExperimentConfig,
    ExperimentConfigError,
    evaluate_dataset,
    memcost_table,
    point_config,
    run_bench,
    run_ipc,
    run_trial,
    sweep,
    sweep_schemes,
    trial_seed,
    validation_seeds,
    write_bench_outputs,
    write_sweep_outputs,
)
from services.ipc_service import ipc_report
from services.reservoir_service import Scheme, WeightSet
from services.search_service import SearchResult
from utils.file_utils import read_csv


def _tiny(**overrides) -> ExperimentConfig:
    values = dict(
        task="narma",
        m=10,
        n_star=20,
        trials=2,
        train_len=300,
        test_len=300,
        washout=50,
        master_seed=4,
    )
    values.update(overrides)
    return ExperimentConfig(**values)


# ─────────────────────────────────────────────────────────────────────────────
# Configuration
# ─────────────────────────────────────────────────────────────────────────────


class TestExperimentConfig:
    def test_protocol_defaults(self):
        cfg = ExperimentConfig()
        assert (cfg.train_len, cfg.test_len, cfg.washout, cfg.trials) == (2000, 3000, 200, 10)

    def test_n_res_from_n_star(self):
        assert _tiny(scheme="delay", p=3, q=1, n_star=100).resolved_n_res == 25
        assert _tiny(scheme="standard", p=3, n_star=100).resolved_n_res == 100

    def test_n_res_override(self):
        assert _tiny(scheme="delay", p=1, n_star=100, n_res=12).resolved_n_res == 12

    def test_n_res_must_be_positive(self):
        with pytest.raises(ExperimentConfigError):
            _tiny(scheme="delay", p=4, n_star=3)

    @pytest.mark.parametrize(
        "overrides",
        [
            {"task": "lorenz"},
            {"tune": "sometimes"},
            {"task": "narma", "m": 7},
            {"task": "henon", "m": 1},
            {"washout": 300},
            {"scheme": "drift", "p": 0},
            {"trials": 0},
            {"master_seed": -1},
        ],
    )
    def test_invalid_configs(self, overrides):
        with pytest.raises(ExperimentConfigError):
            _tiny(**overrides)

    def test_from_dict_accepts_flag_spellings(self):
        cfg = ExperimentConfig.from_dict({"scheme": "delay", "P": 2, "Q": 3, "nstar": 60, "seed": 9})
        assert (cfg.p, cfg.q, cfg.n_star, cfg.master_seed) == (2, 3, 60, 9)

    def test_from_dict_layers_over_base(self):
        base = _tiny(trials=5)
        assert ExperimentConfig.from_dict({"washout": 20}, base).trials == 5

    def test_from_dict_rejects_unknown_key(self):
        with pytest.raises(ExperimentConfigError):
            ExperimentConfig.from_dict({"learning_rate": 0.1})

    def test_hyperparams_include_drift_only_for_drift(self):
        assert "rho_drift" not in _tiny().hyperparams()
        assert "rho_drift" in _tiny(scheme="drift", p=1).hyperparams()


# ─────────────────────────────────────────────────────────────────────────────
# Trials
# ─────────────────────────────────────────────────────────────────────────────


class TestEvaluateDataset:
    def test_realizable_target(self):
        cfg = _tiny(n_res=4)
        rng = np.random.default_rng(0)
        w = WeightSet(w_in=rng.uniform(-0.5, 0.5, size=(4, 1)), w_res=np.zeros((4, 4)))
        u = rng.uniform(-1.0, 1.0, size=600)
        states = np.tanh(u[:, None] * w.w_in[:, 0])
        targets = states @ np.array([1.0, -2.0, 0.5, 3.0]) + 0.2
        err, rows = evaluate_dataset(cfg, Dataset(u, targets, washout=50, name="linear"), w)
        assert err <= 1e-6
        assert rows == 250

    def test_effective_test_length_with_long_delay(self):
        cfg = _tiny(scheme="delay", p=2, q=40)
        assert run_trial(cfg, 0).effective_test_len == 300 - 80


class TestRunTrial:
    def test_deterministic(self):
        cfg = _tiny()
        assert run_trial(cfg, 1).nmse == run_trial(cfg, 1).nmse

    def test_trials_differ(self):
        cfg = _tiny()
        a, b = run_trial(cfg, 0), run_trial(cfg, 1)
        assert a.seed != b.seed
        assert a.nmse != b.nmse

    def test_nmse_is_finite_and_positive(self):
        result = run_trial(_tiny(task="henon", m=2, scheme="delay", p=1, q=1), 0)
        assert np.isfinite(result.nmse)
        assert result.nmse > 0.0
        assert result.n_res == 10

    @pytest.mark.parametrize(
        "overrides",
        [
            {"scheme": "drift", "p": 1},
            {"scheme": "transient", "p": 1, "q": 1, "n_tran": 1},
        ],
    )
    def test_every_scheme_runs(self, overrides):
        assert np.isfinite(run_trial(_tiny(**overrides), 0).nmse)

    def test_trial_metric_carries_run_identity(self, tmp_db):
        import utils.metrics as metrics_mod

        result = run_trial(_tiny(scheme="delay", p=1, q=2), 0)
        row = metrics_mod.get_recent_metrics(limit=1, operation="trial")[0]
        assert (row["run_label"], row["scheme"], row["p"], row["q"], row["n_res"]) == ("narma10", "delay", 1, 2, 10)
        assert row["nmse"] == pytest.approx(result.nmse)

    def test_validation_seeds_disjoint_from_trials(self):
        cfg = _tiny(trials=10, validation_seeds=3)
        reporting = {trial_seed(cfg, i) for i in range(cfg.trials)}
        assert reporting.isdisjoint(validation_seeds(cfg))


class TestRunBench:
    def test_mean_and_std_recomputable(self):
        batch = run_bench(_tiny(trials=3))
        values = [r.nmse for r in batch.results]
        assert batch.mean == pytest.approx(np.mean(values))
        assert batch.std == pytest.approx(np.std(values))
        assert [r.trial for r in batch.results] == [0, 1, 2]

    def test_process_pool_matches_serial(self):
        serial = run_bench(_tiny(trials=2))
        pooled = run_bench(_tiny(trials=2, workers=2))
        assert [r.nmse for r in pooled.results] == [r.nmse for r in serial.results]

    def test_tuning_uses_search_result(self, monkeypatch):
        fixed = SearchResult(best_params={"rho_in": 0.2, "rho_res": 0.5}, best_objective=0.3)
        monkeypatch.setattr(exp, "search_params", lambda cfg: fixed)
        batch = run_bench(_tiny(tune="global"))
        assert batch.params == fixed.best_params
        assert batch.summary()["search"]["best_objective"] == 0.3

    def test_search_params_runs_on_validation_data(self):
        result = exp.search_params(_tiny(trials=1, validation_seeds=1, search_budget=2))
        assert len(result.trace) == 2
        assert set(result.best_params) == {"rho_in", "rho_res"}


# ─────────────────────────────────────────────────────────────────────────────
# Sweeps
# ─────────────────────────────────────────────────────────────────────────────


class TestSweep:
    def test_point_reproducible_in_isolation(self):
        cfg = _tiny(scheme="delay", p=1, q=1)
        report = sweep(cfg, "Q", [1, 3])
        again = run_trial(point_config(cfg, "Q", 3), 1)
        assert report.points[1].batch.results[1].nmse == again.nmse

    def test_summary_rows(self):
        report = sweep(_tiny(scheme="delay", p=1), "Q", [1, 2])
        rows = report.summary_rows()
        assert [r[1] for r in rows] == [1, 2]
        assert all(r[0] == "Q" and r[4] == 2 for r in rows)

    def test_p_axis_recomputes_n_res(self):
        report = sweep(_tiny(scheme="delay", p=1, n_star=20), "P", [0, 3])
        assert [p.batch.config.resolved_n_res for p in report.points] == [20, 5]

    def test_n_star_axis_ignores_fixed_n_res(self):
        report = sweep(_tiny(n_star=20, n_res=10, trials=1), "n_star", [20, 80])
        assert [p.batch.config.resolved_n_res for p in report.points] == [20, 80]
        assert [p.batch.results[0].n_res for p in report.points] == [20, 80]

    def test_q_axis_keeps_fixed_n_res(self):
        report = sweep(_tiny(scheme="delay", p=1, n_star=40, n_res=12, trials=1), "Q", [1, 2])
        assert {p.batch.config.resolved_n_res for p in report.points} == {12}

    def test_unknown_axis(self):
        with pytest.raises(ExperimentConfigError):
            sweep(_tiny(), "rho", [1])

    def test_empty_values(self):
        with pytest.raises(ExperimentConfigError):
            sweep(_tiny(), "Q", [])

    def test_global_tuning_searches_once(self, monkeypatch):
        calls = []

        def fake(cfg):
            calls.append(cfg.seed_tag)
            return SearchResult(best_params={"rho_in": 0.1, "rho_res": 0.9}, best_objective=0.0)

        monkeypatch.setattr(exp, "search_params", fake)
        sweep(_tiny(scheme="delay", p=1, tune="global", trials=1), "Q", [1, 2, 3])
        assert calls == ["global"]

    def test_per_point_tuning_searches_each_value(self, monkeypatch):
        calls = []

        def fake(cfg):
            calls.append(cfg.seed_tag)
            return SearchResult(best_params={"rho_in": 0.1, "rho_res": 0.9}, best_objective=0.0)

        monkeypatch.setattr(exp, "search_params", fake)
        sweep(_tiny(scheme="delay", p=1, tune="per-point", trials=1), "Q", [1, 2])
        assert calls == ["Q=1", "Q=2"]

    def test_several_schemes(self):
        reports = sweep_schemes(_tiny(p=1, trials=1), "Q", [1], ["delay", "transient"])
        assert [r.scheme for r in reports] == ["delay", "transient"]

    def test_outputs_written(self, tmp_path):
        report = sweep(_tiny(scheme="delay", p=1), "Q", [1, 2])
        paths = write_sweep_outputs(report, tmp_path)
        header, rows = read_csv(paths["trials"])
        assert tuple(header) == ("task", "scheme", "P", "Q", "n_star", "n_res", "trial", "seed", "nmse")
        assert len(rows) == 4
        _, summary = read_csv(paths["summary"])
        assert len(summary) == 2

    def test_report_csv_holds_trials_then_summaries(self, tmp_path):
        report = sweep(_tiny(scheme="delay", p=1, trials=2), "Q", [1, 2, 3])
        header, rows = read_csv(write_sweep_outputs(report, tmp_path)["report"])
        assert header[:3] == ["row", "axis", "value"]
        assert len(rows) == 3 * 2 + 3
        assert [r[0] for r in rows] == ["trial"] * 6 + ["summary"] * 3
        summary = rows[-1]
        assert summary[2] == "3"
        assert float(summary[header.index("nmse")]) == pytest.approx(report.points[2].batch.mean)
        assert summary[header.index("trial")] == ""

    def test_outputs_are_byte_identical(self, tmp_path):
        cfg = _tiny(scheme="delay", p=1)
        first = write_bench_outputs(run_bench(cfg), tmp_path / "a")
        second = write_bench_outputs(run_bench(cfg), tmp_path / "b")
        assert first["trials"].read_bytes() == second["trials"].read_bytes()


# ─────────────────────────────────────────────────────────────────────────────
# IPC runs and memory cost
# ─────────────────────────────────────────────────────────────────────────────


class TestRunIpc:
    def _cfg(self, **overrides) -> ExperimentConfig:
        values = dict(task="ipc", n_res=5, t_steps=2000, tau_max=4, max_order=3, ipc_washout=100, rho_in=0.3)
        values.update(overrides)
        return ExperimentConfig(**values)

    def test_matches_direct_library_call(self):
        cfg = self._cfg()
        report = run_ipc(cfg)
        direct = ipc_report(exp.ipc_weights(cfg), Scheme.standard(), cfg.ipc_config())
        assert report.total == direct.total

    def test_concatenated_dimension(self):
        for scheme in ("delay", "drift"):
            report = run_ipc(self._cfg(scheme=scheme, p=1, q=1))
            assert report.concat_dim == 10

    def test_weights_shared_across_schemes(self):
        a = exp.ipc_weights(self._cfg())
        b = exp.ipc_weights(self._cfg(scheme="delay", p=1))
        np.testing.assert_array_equal(a.w_res, b.w_res)
        np.testing.assert_array_equal(a.w_in, b.w_in)


class TestMemcostTable:
    def test_rows_and_flags(self):
        rows = memcost_table([0, 2], [1], [1], n_res=50)
        assert [r["memory_cost"] for r in rows] == [1, 6]
        assert [r["state_cost"] for r in rows] == [50, 150]
        assert all(r["efficient"] for r in rows)

    def test_closed_form_grid(self):
        rows = memcost_table(range(7), range(1, 7), range(1, 5), n_res=10)
        for r in rows:
            assert r["memory_cost"] == (r["P"] + 1) * (r["P"] * r["Q"] + 2) * r["n_out"] // 2
        assert len(rows) == 7 * 6 * 4
