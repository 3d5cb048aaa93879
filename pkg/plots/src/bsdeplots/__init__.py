"""Offline figure scripts for BSDE solver result CSVs.

These scripts only read result files produced by the solver CLI; they never
recompute numerics.
"""

from .figures import PlotSpec, plot_histogram, plot_paths, plot_sweep

__all__ = ["PlotSpec", "plot_histogram", "plot_paths", "plot_sweep"]
__version__ = "0.1.0"
