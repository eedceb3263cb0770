"""Command-line interface tests: ingestion, output formats, exit codes."""

import json
import math

import numpy as np
import pytest

from hdcovtest.cli import ResultRecord, main, read_matrix


def run_cli(*argv):
    return main(list(argv))


def _read_table(path):
    """Parse a CSV output file: (meta dict, header, rows of strings)."""
    meta, header, rows = {}, None, []
    for line in path.read_text().splitlines():
        if line.startswith("#"):
            key, _, value = line[1:].partition(":")
            meta[key.strip()] = value.strip()
        elif header is None:
            header = line.split(",")
        else:
            rows.append(line.split(","))
    return meta, header, rows


class TestDataRoundTrip:
    def test_emit_then_read_is_exact(self, tmp_path):
        out = tmp_path / "data.csv"
        assert run_cli("simulate", "--emit-data", "--scenario", "a2", "--n", "12",
                       "--p", "5", "--seed", "3", "--output", str(out)) == 0
        values = read_matrix(str(out))
        assert values.shape == (12, 5)
        again = tmp_path / "again.csv"
        assert run_cli("simulate", "--emit-data", "--scenario", "a2", "--n", "12",
                       "--p", "5", "--seed", "3", "--output", str(again)) == 0
        assert out.read_text() == again.read_text()

    def test_transpose(self, tmp_path):
        path = tmp_path / "wide.csv"
        path.write_text("1,2,3\n4,5,6\n")
        np.testing.assert_array_equal(
            read_matrix(str(path), transpose=True),
            np.array([[1.0, 4.0], [2.0, 5.0], [3.0, 6.0]]),
        )

    def test_header_and_delimiters(self, tmp_path):
        for delim, text in [
            (",", "a,b\n1,2\n3,4\n"),
            ("\t", "a\tb\n1\t2\n3\t4\n"),
            (";", "a;b\n1;2\n3;4\n"),
            (" ", "1 2\n3 4\n"),
        ]:
            path = tmp_path / "in.csv"
            path.write_text(text)
            np.testing.assert_array_equal(
                read_matrix(str(path)), np.array([[1.0, 2.0], [3.0, 4.0]])
            )

    def test_parse_error_names_position(self, tmp_path, capsys):
        path = tmp_path / "bad.csv"
        path.write_text("1,2\n3,oops\n")
        assert run_cli("test", "--input", str(path)) == 1
        err = capsys.readouterr().err
        assert "bad.csv:2:2" in err and "oops" in err

    def test_ragged_rows_rejected(self, tmp_path, capsys):
        path = tmp_path / "ragged.csv"
        path.write_text("1,2\n3\n")
        assert run_cli("test", "--input", str(path)) == 1
        assert "expected 2 fields" in capsys.readouterr().err


class TestTestCommand:
    def test_single_column_hand_case(self, tmp_path, capsys):
        path = tmp_path / "tiny.csv"
        path.write_text("0\n1\n2\n")
        assert run_cli("test", "--input", str(path), "--method", "rlrt",
                       "--lambda", "0.5") == 0
        out = capsys.readouterr().out
        lines = [l for l in out.splitlines() if not l.startswith("#")]
        header = lines[0].split(",")
        row = lines[1].split(",")
        record = dict(zip(header, row))
        assert float(record["raw"]) == 0.0  # S = [[1]]; g(psi(1)) = 0
        assert record["method"] == "rlrt(0.5)"

    def test_missing_file(self, capsys):
        assert run_cli("test", "--input", "/nonexistent/file.csv") == 1
        assert "/nonexistent/file.csv" in capsys.readouterr().err

    def test_null_data_usually_accepts(self, tmp_path):
        data = tmp_path / "null.csv"
        assert run_cli("simulate", "--emit-data", "--scenario", "null",
                       "--n", "400", "--p", "200", "--seed", "12",
                       "--output", str(data)) == 0
        out = tmp_path / "res.csv"
        code = run_cli("test", "--input", str(data), "--method", "rlrt",
                       "--lambda", "0.5", "--exit-on-reject", "--output", str(out))
        assert code == 0
        _, header, rows = _read_table(out)
        record = dict(zip(header, rows[0]))
        assert float(record["p_value"]) > 0.05

    def test_exit_on_reject(self, tmp_path):
        data = tmp_path / "spiked.csv"
        assert run_cli("simulate", "--emit-data", "--scenario", "a2",
                       "--n", "80", "--p", "40", "--seed", "5",
                       "--output", str(data)) == 0
        code = run_cli("test", "--input", str(data), "--method", "all",
                       "--lambda", "0.5", "--exit-on-reject",
                       "--output", str(tmp_path / "res.csv"))
        assert code == 2
        # without the flag the same rejection exits 0
        assert run_cli("test", "--input", str(data), "--method", "rlrt",
                       "--output", str(tmp_path / "res2.csv")) == 0

    def test_regime_error_surfaced(self, tmp_path, capsys):
        path = tmp_path / "fat.csv"
        rng = np.random.default_rng(0)
        path.write_text("\n".join(",".join(map(str, row))
                                  for row in rng.standard_normal((6, 10))))
        assert run_cli("test", "--input", str(path), "--method", "clrt") == 1
        assert "p/(n-1) < 1" in capsys.readouterr().err

    def test_json_format(self, tmp_path):
        data = tmp_path / "d.csv"
        run_cli("simulate", "--emit-data", "--scenario", "null", "--n", "30",
                "--p", "10", "--seed", "2", "--output", str(data))
        out = tmp_path / "res.json"
        assert run_cli("test", "--input", str(data), "--method", "lw",
                       "--format", "json", "--output", str(out)) == 0
        payload = json.loads(out.read_text())
        assert payload["meta"]["tool"].startswith("hdcovtest ")
        assert payload["rows"][0]["method"] == "lw"


class TestResultRecordRoundTrip:
    def test_row_round_trip(self):
        record = ResultRecord(
            method="rlrt(0.5)", n=40, p=20, lam=0.5, eta=0.05,
            raw=0.12345678901234567, z=-1.9876543210987654,
            p_value=0.97654321098765432, reject=False,
            tool_version="0.1.0", seed=None, timestamp="2026-01-01T00:00:00",
        )
        serialized = [str(v) if not isinstance(v, float) else format(v, ".17g")
                      for v in record.row()]
        serialized = [("true" if v == "True" else "false" if v == "False" else v)
                      for v in serialized]
        serialized = ["" if v == "None" else v for v in serialized]
        back = ResultRecord.from_row(serialized)
        assert back == record


class TestNullParamsCommand:
    def test_values(self, tmp_path):
        out = tmp_path / "np.csv"
        assert run_cli("null-params", "--lambda", "1.0", "--n", "161", "--p", "80",
                       "--output", str(out)) == 0
        _, header, rows = _read_table(out)
        record = dict(zip(header, rows[0]))
        assert float(record["gamma_tilde"]) == 0.5
        assert float(record["mu"]) == pytest.approx(-math.log(0.5) / 2, abs=1e-12)
        assert float(record["v"]) == pytest.approx(-1 - 2 * math.log(0.5), abs=1e-12)
        assert float(record["centering"]) == pytest.approx(1 + math.log(0.5), abs=1e-8)

    def test_deterministic_output(self, tmp_path):
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        run_cli("null-params", "--lambda", "0.5", "--n", "81", "--p", "40",
                "--output", str(a))
        run_cli("null-params", "--lambda", "0.5", "--n", "81", "--p", "40",
                "--output", str(b))
        assert a.read_text() == b.read_text()

    def test_supercritical_rejected(self, capsys):
        assert run_cli("null-params", "--lambda", "0.5", "--n", "10", "--p", "20") == 1
        assert "p/(n-1) < 1" in capsys.readouterr().err


class TestSimulateCommand:
    def test_grid_output_columns(self, tmp_path):
        out = tmp_path / "sim.csv"
        assert run_cli("simulate", "--scenario", "null", "--n", "20",
                       "--gamma", "0.5", "--method", "clrt,lw", "--reps", "300",
                       "--seed", "4", "--output", str(out)) == 0
        meta, header, rows = _read_table(out)
        assert header == ["scenario", "n", "p", "gamma", "method", "lambda",
                          "reps", "rate", "mc_se", "seed", "error"]
        assert meta["seed"] == "4"
        assert len(rows) == 2

    def test_zero_reps_rejected(self, tmp_path, capsys):
        out = tmp_path / "sim.csv"
        assert run_cli("simulate", "--reps", "0", "--output", str(out)) == 1
        assert not out.exists()  # no partial output on validation failure

    def test_byte_identical_reruns(self, tmp_path):
        args = ("simulate", "--scenario", "null,a4", "--n", "20", "--gamma",
                "0.5", "--method", "clrt,rlrt", "--lambda", "0.5",
                "--reps", "500", "--seed", "9")
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        assert run_cli(*args, "--output", str(a)) == 0
        assert run_cli(*args, "--output", str(b)) == 0
        assert a.read_bytes() == b.read_bytes()

    def test_error_column_for_impossible_cells(self, tmp_path):
        out = tmp_path / "sim.csv"
        assert run_cli("simulate", "--scenario", "null", "--n", "10",
                       "--gamma", "1.5", "--method", "clrt,lw", "--reps", "100",
                       "--seed", "1", "--output", str(out)) == 0
        _, header, rows = _read_table(out)
        by_method = {row[4]: dict(zip(header, row)) for row in rows}
        assert by_method["clrt"]["error"] != ""
        assert by_method["lw"]["error"] == ""

    def test_emit_data_needs_single_scenario(self, capsys):
        assert run_cli("simulate", "--emit-data", "--scenario", "null,a1",
                       "--n", "10", "--p", "4") == 1


class TestPowerCurveCommand:
    def test_columns_and_monotone_grid(self, tmp_path):
        out = tmp_path / "pc.csv"
        assert run_cli("power-curve", "--lambda", "0.5", "--n", "40",
                       "--gamma", "0.5", "--beta-grid", "1.0,1.8,2.6",
                       "--reps", "400", "--seed", "6", "--output", str(out)) == 0
        _, header, rows = _read_table(out)
        assert header == ["beta", "analytic_power", "empirical_power", "mc_se",
                          "close_spike"]
        betas = [float(r[0]) for r in rows]
        assert betas == sorted(betas)
        assert all(r[4] == "false" for r in rows)

    def test_close_spike_rejected_without_flag(self, tmp_path, capsys):
        out = tmp_path / "pc.csv"
        assert run_cli("power-curve", "--lambda", "0.5", "--n", "40",
                       "--gamma", "0.5", "--beta-grid", "0.2,1.0",
                       "--reps", "200", "--output", str(out)) == 1
        assert "--allow-close-spike" in capsys.readouterr().err
        assert not out.exists()

    def test_close_spike_flagged_with_flag(self, tmp_path):
        out = tmp_path / "pc.csv"
        assert run_cli("power-curve", "--lambda", "0.5", "--n", "40",
                       "--gamma", "0.5", "--beta-grid", "0.2,1.0",
                       "--reps", "200", "--seed", "2", "--allow-close-spike",
                       "--output", str(out)) == 0
        _, _, rows = _read_table(out)
        assert rows[0][4] == "true" and rows[1][4] == "false"

    def test_colon_grid(self, tmp_path):
        out = tmp_path / "pc.csv"
        assert run_cli("power-curve", "--lambda", "0.5", "--n", "40",
                       "--gamma", "0.5", "--beta-grid", "1.0:2.0:0.5",
                       "--reps", "100", "--seed", "2", "--output", str(out)) == 0
        _, _, rows = _read_table(out)
        assert [float(r[0]) for r in rows] == [1.0, 1.5, 2.0]


class TestCriticalValueCommand:
    def test_deterministic(self, tmp_path):
        args = ("critical-value", "--method", "lw", "--n", "30", "--gamma", "0.5",
                "--reps", "1200", "--seed", "3")
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        assert run_cli(*args, "--output", str(a)) == 0
        assert run_cli(*args, "--output", str(b)) == 0
        assert a.read_bytes() == b.read_bytes()

    def test_unknown_method(self, capsys):
        assert run_cli("critical-value", "--method", "bogus", "--n", "30",
                       "--gamma", "0.5", "--reps", "1000") == 1


class TestArgumentErrors:
    def test_unknown_flag_exits_one(self, capsys):
        assert run_cli("simulate", "--bogus-flag", "1") == 1

    def test_unknown_command_exits_one(self, capsys):
        assert run_cli("frobnicate") == 1
