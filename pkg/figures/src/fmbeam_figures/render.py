"""Rendering proper: one FigureJob in, one PNG out.

Style is fixed (no rcParams leakage from the environment), so identical
inputs give identical image content. The output file is written only after
all inputs validate.
"""
from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402

from .jobs import FigureError, FigureJob, integrated_peak_dbc  # noqa: E402

_STYLE = {
    "figure.figsize": (6.0, 4.0),
    "figure.dpi": 120,
    "savefig.dpi": 120,
    "font.size": 10,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "lines.linewidth": 1.4,
}


def render(job: FigureJob) -> str:
    """Render the job to its PNG path and return that path."""
    tables = job.load()
    with plt.rc_context(_STYLE):
        fig, ax = plt.subplots()
        try:
            if job.kind == "occultation_curve":
                _draw_occultation(ax, tables[0])
            else:
                _draw_spectrum_pair(ax, tables[0], tables[1])
            if job.xlabel:
                ax.set_xlabel(job.xlabel)
            if job.ylabel:
                ax.set_ylabel(job.ylabel)
            if job.xlim:
                ax.set_xlim(*job.xlim)
            if job.ylim:
                ax.set_ylim(*job.ylim)
            fig.tight_layout()
            fig.savefig(job.out, format="png")
        finally:
            plt.close(fig)
    return str(job.out)


def _draw_occultation(ax, table) -> None:
    x = table.column("X_over_w0")
    y = table.column("normalized_ifm")
    if (y < 0).any():
        raise FigureError(f"{table.path}: normalized_ifm has negative values")
    ax.plot(x, y, color="tab:blue")
    ax.set_xlabel("screen position X / w0")
    ax.set_ylabel("normalized photocurrent at f_m")
    ax.set_xlim(float(x.min()), float(x.max()))
    ax.set_ylim(bottom=0.0)


def spectrum_rejection_db(before, after) -> float:
    """Annotation value: difference of the integrated tone readings of the
    two spectra, always recomputed from the CSV data."""
    rbw_b = float(before.header.get("rbw_hz", "30"))
    rbw_a = float(after.header.get("rbw_hz", "30"))
    f_b, db_b = integrated_peak_dbc(before.column("freq_hz"),
                                    before.column("dbc"), rbw_b)
    _, db_a = integrated_peak_dbc(after.column("freq_hz"),
                                  after.column("dbc"), rbw_a, f0=f_b)
    return db_b - db_a


def _draw_spectrum_pair(ax, before, after) -> None:
    f_b, db_b = integrated_peak_dbc(before.column("freq_hz"),
                                    before.column("dbc"),
                                    float(before.header.get("rbw_hz", "30")))
    rejection = spectrum_rejection_db(before, after)
    for table, label, color in ((before, "before correction", "tab:red"),
                                (after, "after correction", "tab:blue")):
        ax.plot((table.column("freq_hz") - f_b) / 1e3, table.column("dbc"),
                color=color, label=label)
    ax.set_xlabel(f"frequency offset from {f_b / 1e6:.3f} MHz (kHz)")
    ax.set_ylabel("power (dBc per bin)")
    ax.annotate(f"rejection {rejection:.1f} dB", xy=(0.03, 0.95),
                xycoords="axes fraction", va="top")
    ax.legend(loc="upper right")
