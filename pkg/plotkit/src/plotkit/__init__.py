"""Figures from nzk run artifacts, via the documented CSV/manifest formats."""

from .jobs import FigureJob, PlotkitError, job_from_spec
from .render import render, render_all

__version__ = "0.1.0"
