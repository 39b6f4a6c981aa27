"""CLI subcommands end to end, exit codes, CSV and SVG output."""

import pytest

from hbgsim.cli import main, read_csv, write_csv
from hbgsim.engine import SimConfig, simulate

from conftest import MODELS

THREE_TANK = str(MODELS / "three_tank.hbg")
PERIODIC = str(MODELS / "periodic.hbg")


@pytest.fixture()
def broken_model(tmp_path):
    path = tmp_path / "broken.hbg"
    path.write_text("bondgraph broken {\n  bond b1 from Sf1 to nowhere\n}\n")
    return str(path)


class TestValidate:
    def test_clean_model_exit_zero(self):
        assert main(["validate", THREE_TANK]) == 0

    def test_broken_model_exit_one(self, broken_model, capsys):
        assert main(["validate", broken_model]) == 1
        err = capsys.readouterr().err
        assert "broken.hbg:2:" in err

    def test_missing_file(self, capsys):
        assert main(["validate", "no_such.hbg"]) == 1


class TestCompile:
    def test_emit_dot(self, tmp_path):
        out = tmp_path / "ibd.dot"
        assert main(["compile", THREE_TANK, "--emit", str(out)]) == 0
        assert out.read_text().startswith("digraph {")

    def test_emit_graph_dot(self, tmp_path):
        out = tmp_path / "graph.dot"
        assert main(["compile", THREE_TANK, "--emit-graph", str(out)]) == 0
        assert "R12" in out.read_text()

    def test_check_modes_report(self, capsys):
        assert main(["compile", THREE_TANK, "--check-modes"]) == 0
        out = capsys.readouterr().out
        assert "256 modes checked: mode-invariant integral causality" in out


class TestSim:
    def test_csv_shape_and_header(self, tmp_path):
        out = tmp_path / "trace.csv"
        assert main(["sim", THREE_TANK, "--out", str(out)]) == 0
        lines = out.read_text().splitlines()
        assert lines[0] == "t,h1,h2,h3"
        assert len(lines) == 1002  # header + 1001 samples (t = 0.00 .. 10.00)
        row_t1 = lines[1 + 100].split(",")
        assert float(row_t1[0]) == pytest.approx(1.0)
        assert float(row_t1[1]) == 0.0  # pump has only just opened at t = 1

    def test_identical_invocations_byte_identical(self, tmp_path):
        a = tmp_path / "a.csv"
        b = tmp_path / "b.csv"
        assert main(["sim", THREE_TANK, "--out", str(a)]) == 0
        assert main(["sim", THREE_TANK, "--out", str(b)]) == 0
        assert a.read_bytes() == b.read_bytes()

    def test_two_sample_trace_three_lines(self, tmp_path, three_tank, three_tank_ibd):
        trace = simulate(three_tank_ibd, three_tank, SimConfig(dt=0.01, t_end=0.01))
        path = tmp_path / "two.csv"
        write_csv(trace, path, probes=["h1"])
        lines = path.read_text().splitlines()
        assert lines[0] == "t,h1"
        assert len(lines) == 3  # header + two samples
        assert path.read_text().endswith("\n")

    def test_csv_round_trip_exact(self, tmp_path, three_tank, three_tank_ibd):
        trace = simulate(three_tank_ibd, three_tank, SimConfig(dt=0.01, t_end=1.0))
        path = tmp_path / "t.csv"
        write_csv(trace, path)
        names, columns = read_csv(path)
        assert names == ["t", "h1", "h2", "h3"]
        for i, name in enumerate(("h1", "h2", "h3")):
            assert columns[name] == list(trace.probe_values[:, i])
        assert columns["t"] == list(trace.times)

    def test_mode_column(self, tmp_path):
        out = tmp_path / "m.csv"
        assert main(["sim", THREE_TANK, "--out", str(out), "--mode", "--t-end", "2"]) == 0
        lines = out.read_text().splitlines()
        assert lines[0] == "t,h1,h2,h3,mode"
        assert lines[1].endswith(",00110000")
        assert lines[1 + 120].endswith(",10110000")  # pump1 opened at 1 s
        assert lines[-1].endswith(",10111000")  # pipe12 left conducting from 1.7 s

    def test_probe_selection(self, tmp_path):
        out = tmp_path / "p.csv"
        assert main(["sim", THREE_TANK, "--out", str(out), "--probe", "h2",
                     "--t-end", "1"]) == 0
        assert out.read_text().splitlines()[0] == "t,h2"

    def test_unknown_probe_is_model_error(self, tmp_path):
        out = tmp_path / "p.csv"
        assert main(["sim", THREE_TANK, "--out", str(out), "--probe", "h9"]) == 1

    def test_bad_usage_exit_two(self):
        assert main(["sim", THREE_TANK]) == 2  # --out is required
        assert main(["frobnicate"]) == 2
        assert main(["sim", THREE_TANK, "--out", "x.csv", "--dt", "0"]) == 2


class TestBench:
    def test_three_tank_benchmark_passes(self, capsys):
        assert main(["bench", "three-tank"]) == 0
        out = capsys.readouterr().out
        assert out.count("PASS") == 4
        assert "t1=" in out and "t2=" in out and "steady=" in out


class TestPlot:
    @pytest.fixture()
    def csv(self, tmp_path):
        out = tmp_path / "trace.csv"
        assert main(["sim", THREE_TANK, "--out", str(out)]) == 0
        return out

    def test_three_series_svg(self, tmp_path, csv):
        svg = tmp_path / "p.svg"
        assert main(["plot", str(csv), "--out", str(svg), "--series", "h1,h2,h3"]) == 0
        text = svg.read_text()
        assert text.count("<polyline") == 3
        assert "<svg" in text and "</svg>" in text

    def test_h1_polyline_monotone_until_peak(self, tmp_path, csv):
        svg = tmp_path / "p.svg"
        assert main(["plot", str(csv), "--out", str(svg), "--series", "h1"]) == 0
        names, columns = read_csv(csv)
        h1 = columns["h1"]
        peak = h1.index(max(h1))
        assert all(a <= b for a, b in zip(h1[:peak], h1[1:peak + 1]))

    def test_empty_series_usage_error(self, tmp_path, csv):
        assert main(["plot", str(csv), "--out", str(tmp_path / "x.svg")]) == 2

    def test_unknown_series_model_error(self, tmp_path, csv):
        assert main(["plot", str(csv), "--out", str(tmp_path / "x.svg"),
                     "--series", "h7"]) == 1

    def test_single_point_series(self, tmp_path):
        src = tmp_path / "one.csv"
        src.write_text("t,x\n0.0,1.5\n")
        svg = tmp_path / "one.svg"
        assert main(["plot", str(src), "--out", str(svg), "--series", "x"]) == 0
        assert "<polyline" in svg.read_text()

    def test_malformed_csv_row_reported(self, tmp_path, capsys):
        src = tmp_path / "bad.csv"
        src.write_text("t,x\n0.0,1.0\n0.1\n")
        assert main(["plot", str(src), "--out", str(tmp_path / "x.svg"),
                     "--series", "x"]) == 1
        assert ":3:" in capsys.readouterr().err

    def test_determinism(self, tmp_path, csv):
        a = tmp_path / "a.svg"
        b = tmp_path / "b.svg"
        main(["plot", str(csv), "--out", str(a), "--series", "h1,h2"])
        main(["plot", str(csv), "--out", str(b), "--series", "h1,h2"])
        assert a.read_bytes() == b.read_bytes()


class TestComposition:
    def test_periodic_model_via_cli(self, tmp_path):
        out = tmp_path / "periodic.csv"
        assert main(["sim", PERIODIC, "--out", str(out), "--mode"]) == 0
        lines = out.read_text().splitlines()
        assert lines[0] == "t,h,mode"
        # gate opens at 1 s and closes at 2 s
        assert lines[1 + 100].endswith(",1")
        assert lines[1 + 200].endswith(",0")
