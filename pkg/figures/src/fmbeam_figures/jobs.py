"""Figure jobs: validated CSV inputs for the two supported figure kinds.

The CSVs are the external interface of the fmbeam CLI: `# key: value`
header comments, one column-name line, float rows. Rendering never mutates
them; everything shown on a figure (including the rejection annotation on
the spectrum pair) is recomputed from the CSV contents here.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Optional, Tuple

import numpy as np

KINDS = ("occultation_curve", "spectrum_pair")

_REQUIRED_COLUMNS = {
    "occultation_curve": ("X_over_w0", "normalized_ifm"),
    "spectrum_pair": ("freq_hz", "dbc"),
}
_INPUT_COUNT = {"occultation_curve": 1, "spectrum_pair": 2}


class FigureError(ValueError):
    """Invalid figure job or CSV input."""


@dataclass(frozen=True)
class CsvTable:
    """One parsed CSV: header comments plus named float columns."""
    path: str
    header: Dict[str, str]
    columns: Dict[str, np.ndarray]

    def column(self, name: str) -> np.ndarray:
        return self.columns[name]


@dataclass(frozen=True)
class FigureJob:
    """What to draw: input CSV path(s), figure kind, output image path and
    optional axis overrides. The inputs must validate against the kind."""
    kind: str
    inputs: Tuple[str, ...]
    out: str
    xlabel: Optional[str] = None
    ylabel: Optional[str] = None
    xlim: Optional[Tuple[float, float]] = None
    ylim: Optional[Tuple[float, float]] = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise FigureError(f"unknown figure kind '{self.kind}' "
                              f"(expected one of {', '.join(KINDS)})")
        expected = _INPUT_COUNT[self.kind]
        if len(self.inputs) != expected:
            raise FigureError(f"kind '{self.kind}' needs {expected} input "
                              f"CSV(s), got {len(self.inputs)}")
        if not str(self.out).endswith(".png"):
            raise FigureError(f"output path must end in .png, got '{self.out}'")

    def load(self) -> Tuple[CsvTable, ...]:
        return tuple(read_csv(p, _REQUIRED_COLUMNS[self.kind])
                     for p in self.inputs)


def read_csv(path, required_columns: Tuple[str, ...]) -> CsvTable:
    """Parse one fmbeam CSV and check its schema against the figure kind.

    Raises FigureError naming the first missing column, and on files with
    no data rows.
    """
    text = Path(path).read_text(encoding="utf-8")
    header: Dict[str, str] = {}
    names = None
    rows = []
    for raw in text.splitlines():
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            key, _, value = line[1:].partition(":")
            header[key.strip()] = value.strip()
            continue
        if names is None:
            names = [c.strip() for c in line.split(",")]
            continue
        try:
            rows.append([float(v) for v in line.split(",")])
        except ValueError as exc:
            raise FigureError(f"{path}: bad data row '{line}': {exc}")

    if names is None:
        raise FigureError(f"{path}: no column header line found")
    for col in required_columns:
        if col not in names:
            raise FigureError(f"{path}: missing column '{col}' "
                              f"(found: {', '.join(names)})")
    if not rows:
        raise FigureError(f"{path}: no data rows")
    if any(len(r) != len(names) for r in rows):
        raise FigureError(f"{path}: ragged rows (expected {len(names)} fields)")

    data = np.asarray(rows, dtype=float)
    columns = {name: data[:, i] for i, name in enumerate(names)}
    return CsvTable(path=str(path), header=header, columns=columns)


def integrated_peak_dbc(freqs: np.ndarray, dbc: np.ndarray, rbw_hz: float,
                        f0: Optional[float] = None) -> Tuple[float, float]:
    """(frequency, dBc) of the strongest tone in a per-bin dBc spectrum.

    Integrates the window main lobe (within 4 RBW of the peak bin) and
    subtracts the median floor of the surrounding ring, so the reading is
    scalloping-free and unbiased by the noise floor. This mirrors the
    published CSV convention (per-bin power at the stated RBW) without
    importing anything from the simulator.
    """
    if freqs.size < 3:
        raise FigureError("spectrum too short for a peak reading")
    power = 10.0 ** (dbc / 10.0)
    if f0 is None:
        idx = int(np.argmax(power))
    else:
        mask = np.abs(freqs - f0) <= 4.0 * rbw_hz
        if not mask.any():
            raise FigureError("no bins near the requested frequency")
        cand = np.flatnonzero(mask)
        idx = int(cand[np.argmax(power[cand])])
    bin_hz = float(np.median(np.diff(freqs)))
    offset = np.abs(freqs - freqs[idx])
    lobe = offset <= 4.0 * rbw_hz
    ring = (offset > 4.0 * rbw_hz) & (offset <= 12.0 * rbw_hz)
    floor = float(np.median(power[ring])) if ring.any() else 0.0
    tone = float(np.sum(np.maximum(power[lobe] - floor, 0.0)) * bin_hz / rbw_hz)
    return float(freqs[idx]), 10.0 * math.log10(max(tone, 1e-300))
