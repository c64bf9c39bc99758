"""Rendering for equiflow scenario directories.

Consumes only the documented CSV/JSON artifacts (histogram.csv, heatmap.csv,
config.json); never touches the planner itself.
"""

__version__ = "0.1.0"

from .render import FigureJob, RenderInputError, render

__all__ = ["FigureJob", "RenderInputError", "render"]
