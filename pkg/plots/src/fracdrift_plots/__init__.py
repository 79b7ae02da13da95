"""Figure rendering for fracdrift run artifacts.

Plots are pure functions of the emitted CSV/JSON files: physics is never
recomputed here, and rendering an unchanged manifest twice produces
byte-identical output.
"""

from .artifacts import SchemaError
from .render import PlotJob, render

__version__ = "0.1.0"
