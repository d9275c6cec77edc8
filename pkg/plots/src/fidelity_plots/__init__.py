"""Figure rendering for fidelity-decay CSV outputs."""

__version__ = "0.1.0"

from fidelity_plots.render import FigureSpec, SeriesError, load_series, render

__all__ = ["__version__", "FigureSpec", "SeriesError", "load_series", "render"]
