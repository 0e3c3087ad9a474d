"""Figure rendering for fmbeam CSV outputs."""
from .jobs import CsvTable, FigureError, FigureJob, integrated_peak_dbc, read_csv
from .render import render, spectrum_rejection_db

__version__ = "0.1.0"

__all__ = [
    "CsvTable",
    "FigureError",
    "FigureJob",
    "integrated_peak_dbc",
    "read_csv",
    "render",
    "spectrum_rejection_db",
    "__version__",
]
