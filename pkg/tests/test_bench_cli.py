"""Tests for bench_cli: subcommands, config layering and error reporting."""

from __future__ import annotations

import json

import pytest

import bench_cli
from bench_cli import run_cli
from utils.file_utils import read_csv

TINY = ["--nstar", "10", "--trials", "1", "--train-len", "200", "--test-len", "200", "--washout", "20"]


def _stdout_json(capsys) -> dict:
    return json.loads(capsys.readouterr().out)


class TestBench:
    def test_bench_narma_writes_outputs(self, tmp_path, capsys):
        code = run_cli(["bench", "narma", *TINY, "--out", str(tmp_path)])
        assert code == 0
        result = _stdout_json(capsys)
        header, rows = read_csv(result["files"]["trials"])
        assert header[0] == "task"
        assert rows[0][0] == "narma10"
        assert (tmp_path / "bench_narma10_standard_summary.json").exists()

    def test_bench_henon_delay(self, tmp_path, capsys):
        code = run_cli(["bench", "henon", "--m", "2", "--scheme", "delay", "--P", "1", "--Q", "2", *TINY, "--out", str(tmp_path)])
        assert code == 0
        _, rows = read_csv(_stdout_json(capsys)["files"]["trials"])
        assert rows[0][1:4] == ["delay", "1", "2"]

    def test_cli_flags_override_config_file(self, tmp_path, capsys):
        cfg_file = tmp_path / "cfg.json"
        cfg_file.write_text(json.dumps({"scheme": "delay", "P": 1, "Q": 2, "trials": 1, "out": str(tmp_path / "o")}), encoding="utf-8")
        code = run_cli(["bench", "narma", "--config", str(cfg_file), "--Q", "3", *TINY])
        assert code == 0
        result = _stdout_json(capsys)
        assert str(tmp_path / "o") in result["files"]["trials"]
        _, rows = read_csv(result["files"]["trials"])
        assert rows[0][3] == "3"

    def test_identical_runs_give_identical_csv(self, tmp_path, capsys):
        run_cli(["bench", "narma", *TINY, "--seed", "5", "--out", str(tmp_path / "a")])
        run_cli(["bench", "narma", *TINY, "--seed", "5", "--out", str(tmp_path / "b")])
        capsys.readouterr()
        name = "bench_narma10_standard_trials.csv"
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


class TestOtherCommands:
    def test_memcost(self, tmp_path, capsys):
        code = run_cli(["memcost", "--P", "0,2", "--Q", "1", "--nout", "1", "--out", str(tmp_path)])
        assert code == 0
        assert _stdout_json(capsys)["rows"] == 2
        _, rows = read_csv(tmp_path / "memcost.csv")
        assert [r[4] for r in rows] == ["1", "6"]

    def test_sweep_several_schemes(self, tmp_path, capsys):
        code = run_cli(
            ["sweep", "--axis", "Q", "--values", "1,2", "--scheme", "delay,transient", "--P", "1", *TINY, "--out", str(tmp_path)]
        )
        assert code == 0
        result = _stdout_json(capsys)
        assert set(result["summaries"]) == {"delay", "transient"}
        assert [row["value"] for row in result["summaries"]["delay"]] == [1, 2]

    def test_sweep_over_p_with_drift(self, tmp_path, capsys):
        code = run_cli(["sweep", "--axis", "P", "--values", "1,2", "--scheme", "drift", *TINY, "--out", str(tmp_path)])
        assert code == 0
        assert len(_stdout_json(capsys)["summaries"]["drift"]) == 2

    def test_ipc(self, tmp_path, capsys):
        code = run_cli(
            ["ipc", "--nres", "4", "--t-steps", "1000", "--tau-max", "3", "--max-order", "3", "--ipc-washout", "50", "--out", str(tmp_path)]
        )
        assert code == 0
        result = _stdout_json(capsys)
        assert result["lower_bound"] is False
        header, rows = read_csv(result["files"]["csv"])
        assert header == ["order", "tau", "capacity"]
        assert len(rows) == 3 * 4

    def test_search(self, tmp_path, capsys):
        code = run_cli(["search", *TINY, "--search-budget", "2", "--validation-seeds", "1", "--out", str(tmp_path)])
        assert code == 0
        result = _stdout_json(capsys)
        assert result["evaluations"] == 2
        _, rows = read_csv(result["files"]["trace"])
        assert len(rows) == 2

    def test_dataset_export(self, tmp_path, capsys):
        code = run_cli(["dataset", "henon", "--m", "2", "--train-len", "50", "--test-len", "50", "--washout", "10", "--out", str(tmp_path)])
        assert code == 0
        assert _stdout_json(capsys)["rows"] == 100

    def test_metrics_after_run(self, tmp_path, capsys):
        run_cli(["memcost", "--out", str(tmp_path)])
        capsys.readouterr()
        assert run_cli(["metrics"]) == 0
        assert "memcost" in _stdout_json(capsys)["summary"]

    def test_metrics_scoreboard_after_bench(self, tmp_path, capsys):
        run_cli(["bench", "narma", "--scheme", "delay", "--P", "1", *TINY, "--out", str(tmp_path)])
        capsys.readouterr()
        assert run_cli(["metrics", "--task", "narma10"]) == 0
        board = _stdout_json(capsys)["scoreboard"]
        assert [(r["scheme"], r["P"], r["n_res"], r["trials"]) for r in board] == [("delay", 1, 5, 1)]


class TestErrors:
    def _error(self, capsys) -> dict:
        return json.loads(capsys.readouterr().err.strip().splitlines()[-1])

    def test_unknown_config_key(self, tmp_path, capsys):
        cfg_file = tmp_path / "cfg.json"
        cfg_file.write_text(json.dumps({"learning_rate": 0.1}), encoding="utf-8")
        assert run_cli(["bench", "narma", "--config", str(cfg_file)]) == 2
        assert self._error(capsys)["error"] == "ExperimentConfigError"

    def test_bad_flag(self, capsys):
        assert run_cli(["bench", "narma", "--bogus"]) == 2
        assert self._error(capsys)["error"] == "CliUsageError"

    def test_invalid_scheme(self, capsys):
        assert run_cli(["bench", "narma", "--scheme", "mirror"]) == 2
        assert "mirror" in self._error(capsys)["message"]

    def test_several_schemes_outside_sweep(self, capsys):
        assert run_cli(["bench", "narma", "--scheme", "delay,drift"]) == 2

    def test_runtime_failure_exit_one(self, monkeypatch, capsys):
        def boom(cfg):
            raise RuntimeError("diverged")

        monkeypatch.setattr(bench_cli, "run_bench", boom)
        assert run_cli(["bench", "narma", *TINY]) == 1
        assert self._error(capsys) == {"error": "RuntimeError", "message": "diverged"}

    def test_unknown_log_level(self, capsys):
        assert run_cli(["--log-level", "LOUD", "memcost"]) == 2

    @pytest.mark.parametrize("argv", [[], ["bench"], ["sweep", "--axis", "Q"]])
    def test_incomplete_command_lines(self, argv, capsys):
        assert run_cli(argv) == 2
