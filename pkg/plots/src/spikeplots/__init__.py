"""Offline rendering of spikebench benchmark CSVs into figures."""

from .figures import (
    ResultsError,
    load_results,
    phase_stack_series,
    plot_phase_stack,
    plot_relative_change,
    relative_change_from_files,
    relative_change_series,
)

__version__ = "0.1.0"

__all__ = [
    "ResultsError",
    "load_results",
    "phase_stack_series",
    "plot_phase_stack",
    "plot_relative_change",
    "relative_change_from_files",
    "relative_change_series",
]
