"""Figures package tests. The fmbeam CSV fixtures are produced by invoking
the simulator CLI as a subprocess (its external interface); nothing from
the simulator package is imported here.

Includes acceptance criterion 9, printed as a PASS/FAIL line.
"""
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from fmbeam_figures import (
    FigureError,
    FigureJob,
    integrated_peak_dbc,
    read_csv,
    render,
    spectrum_rejection_db,
)

REPO = Path(__file__).resolve().parents[2]
SCENARIOS = REPO / "scenarios"
PNG_MAGIC = b"\x89PNG\r\n\x1a\n"


def fmbeam(*argv):
    proc = subprocess.run([sys.executable, "-m", "fmbeam", *argv],
                          capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    return proc


@pytest.fixture(scope="session")
def fig2_csv(tmp_path_factory):
    out = tmp_path_factory.mktemp("fix") / "fig2.csv"
    fmbeam("fig2", "--scenario", str(SCENARIOS / "fig2.scenario"),
           "--out", str(out))
    return out


@pytest.fixture(scope="session")
def spectrum_csvs(tmp_path_factory):
    prefix = tmp_path_factory.mktemp("fix") / "spec"
    fmbeam("spectrum", "--scenario", str(SCENARIOS / "fig3_fiber.scenario"),
           "--out", str(prefix))
    return Path(f"{prefix}.before.csv"), Path(f"{prefix}.after.csv")


def synthetic_spectrum(path, tone_dbc, f_tone=2.5e6, bin_hz=30.0):
    """Single-bin tone over a deep floor; rbw equals the bin width so the
    integrated reading recovers tone_dbc exactly."""
    freqs = f_tone + bin_hz * np.arange(-300, 301)
    dbc = np.full(freqs.size, -300.0)
    dbc[300] = tone_dbc
    lines = [f"# rbw_hz: {bin_hz}", "freq_hz,dbc"]
    lines += [f"{f:.6e},{d:.6e}" for f, d in zip(freqs, dbc)]
    Path(path).write_text("\n".join(lines) + "\n")
    return path


class TestCsvValidation:
    def test_fig2_schema(self, fig2_csv):
        table = read_csv(fig2_csv, ("X_over_w0", "normalized_ifm"))
        assert table.header["command"] == "fig2"
        assert table.column("X_over_w0").size == 121

    def test_missing_column_named(self, fig2_csv):
        with pytest.raises(FigureError, match="missing column 'freq_hz'"):
            read_csv(fig2_csv, ("freq_hz", "dbc"))

    def test_empty_csv(self, tmp_path):
        p = tmp_path / "empty.csv"
        p.write_text("# note: nothing\nfreq_hz,dbc\n")
        with pytest.raises(FigureError, match="no data rows"):
            read_csv(p, ("freq_hz", "dbc"))

    def test_bad_row(self, tmp_path):
        p = tmp_path / "bad.csv"
        p.write_text("freq_hz,dbc\n1.0,oops\n")
        with pytest.raises(FigureError, match="bad data row"):
            read_csv(p, ("freq_hz", "dbc"))

    def test_job_invariants(self, fig2_csv, tmp_path):
        out = str(tmp_path / "x.png")
        with pytest.raises(FigureError, match="unknown figure kind"):
            FigureJob("pie_chart", (str(fig2_csv),), out)
        with pytest.raises(FigureError, match="needs 2 input"):
            FigureJob("spectrum_pair", (str(fig2_csv),), out)
        with pytest.raises(FigureError, match="end in .png"):
            FigureJob("occultation_curve", (str(fig2_csv),), "x.pdf")


class TestOccultationFigure:
    def test_renders_png(self, fig2_csv, tmp_path):
        out = tmp_path / "fig2.png"
        render(FigureJob("occultation_curve", (str(fig2_csv),), str(out)))
        assert out.read_bytes().startswith(PNG_MAGIC)
        assert out.stat().st_size > 5000

    def test_deterministic_and_read_only(self, fig2_csv, tmp_path):
        before = fig2_csv.read_bytes()
        a, b = tmp_path / "a.png", tmp_path / "b.png"
        render(FigureJob("occultation_curve", (str(fig2_csv),), str(a)))
        render(FigureJob("occultation_curve", (str(fig2_csv),), str(b)))
        assert a.read_bytes() == b.read_bytes()
        assert fig2_csv.read_bytes() == before

    def test_negative_values_rejected_no_file(self, tmp_path):
        p = tmp_path / "neg.csv"
        p.write_text("X_over_w0,normalized_ifm\n0.0,-1.0\n1.0,0.5\n")
        out = tmp_path / "neg.png"
        with pytest.raises(FigureError, match="negative"):
            render(FigureJob("occultation_curve", (str(p),), str(out)))
        assert not out.exists()

    def test_empty_input_writes_nothing(self, tmp_path):
        p = tmp_path / "empty.csv"
        p.write_text("X_over_w0,normalized_ifm\n")
        out = tmp_path / "empty.png"
        with pytest.raises(FigureError, match="no data rows"):
            render(FigureJob("occultation_curve", (str(p),), str(out)))
        assert not out.exists()


class TestSpectrumPairFigure:
    def test_renders_png(self, spectrum_csvs, tmp_path):
        out = tmp_path / "pair.png"
        render(FigureJob("spectrum_pair", tuple(map(str, spectrum_csvs)), str(out)))
        assert out.read_bytes().startswith(PNG_MAGIC)

    def test_synthetic_67_db_gap(self, tmp_path):
        before = synthetic_spectrum(tmp_path / "b.csv", -34.0)
        after = synthetic_spectrum(tmp_path / "a.csv", -101.0)
        gap = spectrum_rejection_db(read_csv(before, ("freq_hz", "dbc")),
                                    read_csv(after, ("freq_hz", "dbc")))
        assert gap == pytest.approx(67.0, abs=0.05)

    def test_peak_reader_single_tone(self, tmp_path):
        p = synthetic_spectrum(tmp_path / "t.csv", -40.0)
        table = read_csv(p, ("freq_hz", "dbc"))
        f, db = integrated_peak_dbc(table.column("freq_hz"),
                                    table.column("dbc"), 30.0)
        assert f == pytest.approx(2.5e6)
        assert db == pytest.approx(-40.0, abs=0.05)


def test_criterion_9_annotation_matches_report(spectrum_csvs, tmp_path, verdict):
    before, after = spectrum_csvs
    reported = float(read_csv(before, ("freq_hz", "dbc"))
                     .header["beam2_rejection_db"])
    annotated = spectrum_rejection_db(read_csv(before, ("freq_hz", "dbc")),
                                      read_csv(after, ("freq_hz", "dbc")))
    out = tmp_path / "pair.png"
    render(FigureJob("spectrum_pair", (str(before), str(after)), str(out)))
    verdict("criterion 9 (figure annotation)",
            out.exists() and abs(annotated - reported) <= 1.0,
            f"annotated {annotated:.2f} dB vs reported {reported:.2f} dB")


class TestCli:
    def test_render_cli_roundtrip(self, fig2_csv, tmp_path):
        out = tmp_path / "cli.png"
        proc = subprocess.run(
            ["render", "--kind", "occultation_curve",
             "--in", str(fig2_csv), "--out", str(out)],
            capture_output=True, text=True)
        assert proc.returncode == 0, proc.stderr
        assert out.read_bytes().startswith(PNG_MAGIC)

    def test_missing_input_exit_2(self, tmp_path):
        proc = subprocess.run(
            ["render", "--kind", "occultation_curve",
             "--in", str(tmp_path / "nope.csv"),
             "--out", str(tmp_path / "x.png")],
            capture_output=True, text=True)
        assert proc.returncode == 2
        assert "error:" in proc.stderr
