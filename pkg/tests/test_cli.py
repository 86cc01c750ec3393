"""Unit tests for the command-line interface and serialization."""

import json
import math

import pytest

from rabitrack import cli
from rabitrack.cli import (
    default_precision_bits,
    emit,
    load_config,
    parse_trajectory,
    run_experiment,
    summarize,
)
from rabitrack.exceptions import ConfigError
from rabitrack.qcore import Outcome
from rabitrack.trajectory import RunConfig, TrajectoryPoint, run_simulation


def small_config(**kwargs):
    kwargs.setdefault("n_max", 32)
    kwargs.setdefault("precision_bits", 384)
    return RunConfig(**kwargs)


def one_point():
    return TrajectoryPoint(
        step=1,
        time=1.0 / 16.0,
        outcome=Outcome.PLUS,
        c1sq_measured=0.9,
        c1sq_free=0.95,
        estimate=0.55,
    )


class TestDefaultPrecision:
    def test_floor_at_default(self):
        assert default_precision_bits(10) == 256

    def test_scales_with_record_length(self):
        bits = default_precision_bits(2112)
        assert bits == math.ceil(1.25 * 2112) + 128


class TestLoadConfig:
    def test_missing_file(self, tmp_path):
        with pytest.raises(OSError):
            load_config(tmp_path / "nope.json")

    def test_flat_keys(self, tmp_path):
        path = tmp_path / "c.json"
        path.write_text(json.dumps({"pbar": 0.5, "dp": 0.2, "n_max": 10, "seed": 3}))
        config = load_config(path)
        assert config.dp == 0.2
        assert config.n_max == 10
        assert config.seed == 3

    def test_unknown_key_rejected(self, tmp_path):
        path = tmp_path / "c.json"
        path.write_text(json.dumps({"dq": 0.2}))
        with pytest.raises(ConfigError, match="dq"):
            load_config(path)

    def test_overrides_win(self, tmp_path):
        path = tmp_path / "c.json"
        path.write_text(json.dumps({"seed": 3, "n_max": 10}))
        config = load_config(path, {"seed": 7})
        assert config.seed == 7
        assert config.n_max == 10

    def test_cycles_converted(self, tmp_path):
        path = tmp_path / "c.json"
        path.write_text(json.dumps({"cycles": 2, "tau_over_tr": 0.0625}))
        assert load_config(path).n_max == 32

    def test_cycles_and_n_max_conflict(self, tmp_path):
        path = tmp_path / "c.json"
        path.write_text(json.dumps({"cycles": 2, "n_max": 5}))
        with pytest.raises(ConfigError, match="cycles or n_max"):
            load_config(path)

    def test_invalid_field_value(self, tmp_path):
        path = tmp_path / "c.json"
        path.write_text(json.dumps({"dp": 1.5}))
        with pytest.raises(ConfigError, match=r"p1_plus .* \(0, 1\)"):
            load_config(path)

    def test_auto_precision_fills_default(self, tmp_path):
        path = tmp_path / "c.json"
        path.write_text(json.dumps({"n_max": 2112, "precision_bits": "auto"}))
        assert load_config(path).precision_bits == default_precision_bits(2112)

    def test_env_var_overrides_default(self, tmp_path, monkeypatch):
        monkeypatch.setenv(cli.PRECISION_ENV_VAR, "512")
        path = tmp_path / "c.json"
        path.write_text(json.dumps({"n_max": 16}))
        assert load_config(path).precision_bits == 512

    def test_bad_json_reports_line(self, tmp_path):
        path = tmp_path / "c.json"
        path.write_text("{\n  broken\n}")
        with pytest.raises(ConfigError, match="line"):
            load_config(path)


class TestEmitParse:
    def test_csv_single_point(self, tmp_path):
        out = tmp_path / "t.csv"
        emit([one_point()], "csv", out)
        lines = out.read_text().splitlines()
        assert len(lines) == 2
        assert lines[0] == cli.CSV_HEADER

    def test_csv_round_trip(self, tmp_path):
        points = run_simulation(small_config())
        out = tmp_path / "t.csv"
        emit(points, "csv", out)
        back = parse_trajectory(out)
        assert back == points  # .16e serialization is float-exact

    def test_jsonl_round_trip(self, tmp_path):
        points = run_simulation(small_config())
        out = tmp_path / "t.jsonl"
        emit(points, "jsonl", out)
        assert len(out.read_text().splitlines()) == len(points)
        assert parse_trajectory(out) == points

    def test_unknown_format(self, tmp_path):
        with pytest.raises(ConfigError, match="format"):
            emit([one_point()], "xml", tmp_path / "t.xml")

    def test_bad_header_rejected(self, tmp_path):
        bad = tmp_path / "t.csv"
        bad.write_text("a,b,c\n1,2,3\n")
        with pytest.raises(ConfigError, match="header"):
            parse_trajectory(bad)


class TestRunExperiment:
    def test_writes_three_files(self, tmp_path):
        paths = run_experiment(small_config(n_max=96), tmp_path / "t.csv")
        for p in paths.values():
            assert (tmp_path / p).exists() or p.startswith(str(tmp_path))

    def test_metadata_reproduces_run(self, tmp_path):
        out = tmp_path / "t.csv"
        run_experiment(small_config(n_max=48, seed=11), out)
        meta_path = tmp_path / "t.csv.meta.json"
        config = load_config(meta_path)
        points = run_simulation(config)
        assert points == parse_trajectory(out)

    def test_metadata_lists_every_field(self, tmp_path):
        run_experiment(small_config(), tmp_path / "t.csv")
        meta = json.loads((tmp_path / "t.csv.meta.json").read_text())
        import dataclasses

        for f in dataclasses.fields(RunConfig):
            assert f.name in meta

    def test_summary_counts_oracle_checks(self, tmp_path):
        config = small_config(n_max=32, oracle_check_every=8, precision_bits=256)
        run_experiment(config, tmp_path / "t.csv")
        summary = json.loads((tmp_path / "t.csv.summary.json").read_text())
        assert summary["oracle_checks_passed"] == 4


class TestSummarize:
    def test_short_run_skips_analysis(self):
        summary = summarize(run_simulation(small_config(n_max=4)), window_cycles=5)
        assert summary["windows"] == []
        assert "analysis_skipped" in summary

    def test_windows_reported(self):
        summary = summarize(run_simulation(small_config(n_max=160)), window_cycles=5)
        assert len(summary["windows"]) == 2
        w = summary["windows"][0]
        assert {"rms_tracking", "fit_measured", "fit_free", "dphase"} <= set(w)


class TestMainExitCodes:
    def test_run_and_analyze(self, tmp_path, capsys):
        out = tmp_path / "t.csv"
        code = cli.main(
            ["run", "--n-max", "32", "--precision-bits", "384", "--out", str(out)]
        )
        assert code == 0
        assert out.exists()
        capsys.readouterr()
        assert cli.main(["analyze", "--in", str(out), "--window-cycles", "1"]) == 0
        payload = json.loads(capsys.readouterr().out)
        assert payload["n_steps"] == 32

    def test_config_error_exit_2(self, tmp_path):
        assert cli.main(["run", "--dp", "1.5", "--out", str(tmp_path / "t.csv")]) == 2

    def test_io_error_exit_4(self, tmp_path):
        missing = tmp_path / "missing" / "t.csv"
        code = cli.main(["run", "--n-max", "4", "--precision-bits", "128", "--out", str(missing)])
        assert code == 4

    def test_tune(self, capsys):
        code = cli.main(["tune", "--tr-lower", "1.0", "--tr-upper", "2.0"])
        assert code == 0
        payload = json.loads(capsys.readouterr().out)
        assert payload["tau"] == pytest.approx(1.0 / 16.0)
        assert payload["mode_at_tr_upper"] == "i"

    def test_tune_invalid_bounds_exit_2(self):
        assert cli.main(["tune", "--tr-lower", "2.0", "--tr-upper", "1.0"]) == 2

    def test_jsonl_format_inferred_from_suffix(self, tmp_path):
        out = tmp_path / "t.jsonl"
        code = cli.main(
            ["run", "--n-max", "8", "--precision-bits", "128", "--out", str(out)]
        )
        assert code == 0
        assert out.read_text().lstrip().startswith("{")


class TestSelftest:
    def test_selftest_passes(self, capsys):
        assert cli.main(["selftest"]) == 0
        assert "FAIL" not in capsys.readouterr().out
